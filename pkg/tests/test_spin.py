from math import comb

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from qselect.errors import DegreeTooLarge, DimensionCap, GridTooCoarse, ValidationError
from qselect.graphs import edge_graph, triangle
from qselect.spin import (ONE, X, Y, Z, Band, Cap, SitePolynomial, SphereGrid, assemble_graph_operator,
                          coherent_state, husimi_marginal, husimi_rms_distance, lowest_spectrum, mass_inside,
                          mass_outside, reduced_density, scaling_study, spin_matrices, toeplitz_site_op)


def sphere_nodes(N, extra=4):
    x, w = np.polynomial.legendre.leggauss(N + extra)
    nphi = 2 * N + extra
    phi = 2 * np.pi * np.arange(nphi) / nphi
    T, P = np.meshgrid(np.arccos(x), phi, indexing="ij")
    W = np.outer(w, np.full(nphi, 2 * np.pi / nphi))
    return T.ravel(), P.ravel(), W.ravel()


def brute_states(N, theta, phi):
    k = np.arange(N + 1)
    c = np.sqrt([comb(N, j) for j in k])
    return c * np.cos(theta[:, None] / 2) ** k * (np.sin(theta[:, None] / 2) * np.exp(1j * phi[:, None])) ** (N - k)


def brute_site(N, f):
    """(N+1)/(4 pi) int f |Omega><Omega| by tensor-product quadrature."""
    T, P, W = sphere_nodes(N)
    v = brute_states(N, T, P)
    fx = f(np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T))
    return (N + 1) / (4 * np.pi) * np.einsum("a,aj,ak->jk", W * fx, v, v.conj())


def brute_edge(N, n_sites, edges):
    """Dense T_N of sum over edges of e_i . e_j by quadrature over (S^2)^n_sites."""
    T, P, W = sphere_nodes(N + 1)
    v = brute_states(N, T, P)
    e = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], 1)
    proj = np.einsum("aj,ak->ajk", v, v.conj()) * ((N + 1) / (4 * np.pi))
    d = N + 1
    H = np.zeros((d**n_sites,) * 2, dtype=complex)
    for i, j in edges:
        # sum_w T(w)_i T(w)_j with T(w) from the same quadrature
        for comp in range(3):
            Ti = np.einsum("a,a,ajk->jk", W, e[:, comp], proj)
            ops = [Ti if s in (i, j) else np.eye(d) for s in range(n_sites)]
            M = ops[0]
            for o in ops[1:]:
                M = np.kron(M, o)
            H += M
    return H


@pytest.mark.parametrize("N", [1, 2, 3, 5])
@pytest.mark.parametrize("f", [X, Y, Z, ONE, SitePolynomial((((2, 1, 0), 0.5), ((0, 0, 3), -1.0))),
                               SitePolynomial((((1, 1, 2), 1.0),))])
def test_site_operator_matches_quadrature(N, f):
    assert np.allclose(toeplitz_site_op(N, f), brute_site(N, f), atol=1e-12)


def test_site_examples():
    assert np.allclose(toeplitz_site_op(2, Z), np.diag([-0.5, 0, 0.5]), atol=1e-15)
    assert np.allclose(toeplitz_site_op(4, ONE), np.eye(5), atol=1e-15)
    for N in (1, 2, 7, 12):
        S = spin_matrices(N)
        for f, s in zip((X, Y, Z), S):
            assert np.allclose(toeplitz_site_op(N, f), 2 / (N + 2) * s, atol=1e-13)


@pytest.mark.parametrize("N", [1, 4, 9])
def test_su2_relations(N):
    Tx, Ty, Tz = (toeplitz_site_op(N, f) for f in (X, Y, Z))
    c = 2 / (N + 2)
    assert np.allclose(Tx @ Ty - Ty @ Tx, 1j * c * Tz, atol=1e-13)
    assert np.allclose(Ty @ Tz - Tz @ Ty, 1j * c * Tx, atol=1e-13)
    assert np.allclose(Tz @ Tx - Tx @ Tz, 1j * c * Ty, atol=1e-13)
    cas = Tx @ Tx + Ty @ Ty + Tz @ Tz
    assert np.allclose(cas, c * c * (N / 2) * (N / 2 + 1) * np.eye(N + 1), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(N=st.integers(1, 8), a=st.integers(0, 3), b=st.integers(0, 3), c=st.integers(0, 2))
def test_hermitian(N, a, b, c):
    T = toeplitz_site_op(N, SitePolynomial.monomial(a, b, c))
    assert np.allclose(T, T.conj().T, atol=1e-14)


def test_degree_too_large():
    with pytest.raises(DegreeTooLarge):
        toeplitz_site_op(3, SitePolynomial.monomial(3, 3, 3))
    with pytest.raises(ValidationError):
        toeplitz_site_op(0, Z)


def test_single_edge_spectrum():
    H = assemble_graph_operator(edge_graph(2, [(0, 1)]), 1).toarray()
    assert np.allclose(np.linalg.eigvalsh(H), [-1 / 3, 1 / 9, 1 / 9, 1 / 9], atol=1e-14)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_two_site_matches_brute_force(N):
    H = assemble_graph_operator(edge_graph(2, [(0, 1)]), N).toarray()
    assert np.allclose(H, brute_edge(N, 2, [(0, 1)]), atol=1e-9)


def test_triangle_matches_brute_force():
    H = assemble_graph_operator(triangle(), 2).toarray()
    assert np.allclose(H, brute_edge(2, 3, [(0, 1), (0, 2), (1, 2)]), atol=1e-10)


def test_triangle_examples():
    w, _ = lowest_spectrum(assemble_graph_operator(triangle(), 2), k=2)
    assert w[0] == pytest.approx(-0.75, abs=1e-12) and w[1] > w[0]
    w, _ = lowest_spectrum(assemble_graph_operator(triangle(), 10), k=1)
    assert 10 * (w[0] + 1.5) == pytest.approx(2.5, abs=1e-9)


def test_relabeling_preserves_spectrum():
    from qselect.graphs import leaf

    G = leaf()
    a = lowest_spectrum(assemble_graph_operator(G, 2), k=6)[0]
    b = lowest_spectrum(assemble_graph_operator(G.relabel([3, 0, 4, 1, 2]), 2), k=6)[0]
    assert np.allclose(a, b, atol=1e-10)


def test_dimension_cap():
    from qselect.graphs import loop

    with pytest.raises(DimensionCap):
        assemble_graph_operator(loop(4), 8, nnz_cap=10**6)


def test_lowest_spectrum_diagonal(rng):
    d = rng.normal(size=3000)
    w, _ = lowest_spectrum(sp.diags(d).tocsr(), k=5)
    assert np.allclose(w, np.sort(d)[:5], atol=1e-10)
    w, _ = lowest_spectrum(np.diag(d[:50]), k=3)
    assert np.allclose(w, np.sort(d[:50])[:3])
    with pytest.raises(ValidationError):
        lowest_spectrum(np.eye(3), k=40)


def test_coherent_state_normalized():
    v = coherent_state(30, np.array([0.3, 2.0]), np.array([1.0, -0.4]))
    assert np.allclose(np.linalg.norm(v, axis=-1), 1)


def test_coherent_cap_mass_closed_form():
    # density (N+1)/(4 pi) cos(theta/2)^(2N) integrates to 1 - cos(angle/2)^(2(N+1)) over the cap
    N, angle = 40, 0.5
    m = husimi_marginal(coherent_state(N, 0.0, 0.0), 0, N)
    expected = 1 - np.cos(angle / 2) ** (2 * (N + 1))
    assert mass_inside(m, Cap((0, 0, 1), angle)) == pytest.approx(expected, abs=1e-10)
    # the cap mass tends to one with N
    m = husimi_marginal(coherent_state(200, 0.0, 0.0), 0, 200)
    assert mass_inside(m, Cap((0, 0, 1), 0.5)) >= 0.99


def test_mixed_state_uniform():
    N = 6
    rho = np.eye(N + 1) / (N + 1)
    m = husimi_marginal(rho, 0, N)
    assert np.allclose(m.density, 1 / (4 * np.pi), atol=1e-8)
    assert m.total == pytest.approx(1, abs=1e-8)


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        husimi_marginal(coherent_state(10, 0.0, 0.0), 0, 10, grid=SphereGrid(3, 4))


def z2_band_oracle(N, half_width):
    """Husimi z-marginal of the S^z = 0 state is proportional to (1 - z^2)^(N/2)."""
    from scipy.integrate import quad

    f = lambda z: (1 - z * z) ** (N / 2)
    return quad(f, -half_width, half_width, epsabs=1e-14)[0] / quad(f, -1, 1, epsabs=1e-14)[0]


@pytest.mark.parametrize("N, half_width", [(60, 0.3), (200, 200 ** -0.35), (300, 300 ** -0.35)])
def test_z2_ground_band_mass(N, half_width):
    w, V = lowest_spectrum(toeplitz_site_op(N, SitePolynomial.monomial(0, 0, 2)), k=1)
    m = husimi_marginal(V[:, 0], 0, N)
    assert mass_inside(m, Band((0, 0, 1), half_width)) == pytest.approx(z2_band_oracle(N, half_width), abs=1e-9)


def test_z2_localization_tightens_with_N():
    # the band N^(-1/2 + 0.15) captures all but 1% once N^0.15 exceeds about 2.6 standard deviations
    outside = [1 - z2_band_oracle(N, N ** -0.35) for N in (100, 200, 400, 800, 1600)]
    assert all(b < a for a, b in zip(outside, outside[1:]))
    assert outside[-1] <= 0.01


def test_triangle_ground_spread_over_sphere():
    N = 4
    _, V = lowest_spectrum(assemble_graph_operator(triangle(), N), k=1)
    for site in range(3):
        m = husimi_marginal(V[:, 0], site, N, n_sites=3)
        for center in ((0, 0, 1), (1, 0, 0), (0, -1, 0)):
            assert 0.1 < mass_outside(m, Cap(center, np.pi / 2)) < 0.9


def test_reduced_density_vector_and_matrix_agree(rng):
    N, n = 2, 3
    psi = rng.normal(size=27) + 1j * rng.normal(size=27)
    psi /= np.linalg.norm(psi)
    for site in range(n):
        a = reduced_density(psi, N, n, site)
        b = reduced_density(np.outer(psi, psi.conj()), N, n, site)
        assert np.allclose(a, b)


def test_rms_distance_matches_quadrature():
    N = 30
    f = SitePolynomial((((0, 0, 2), 1.0), ((1, 0, 2), 0.3)))
    _, V = lowest_spectrum(toeplitz_site_op(N, f), k=1)
    m = husimi_marginal(V[:, 0], 0, N, grid=SphereGrid(N, 2 * N + 2))
    d2 = np.sum((np.stack([np.sin(m.theta) * np.cos(m.phi), np.sin(m.theta) * np.sin(m.phi),
                           np.cos(m.theta)], -1) - [-1, 0, 0]) ** 2, -1)
    rms = np.sqrt((d2 * m.density * m.weights).sum())
    assert husimi_rms_distance(V[:, 0], N, (-1, 0, 0)) == pytest.approx(rms, rel=1e-10)


def casimir_triangle_min(N):
    """(2/(N+2))^2 / 2 * (S(S+1) - 3 s(s+1)) with s = N/2 and the smallest total spin S."""
    s = N / 2
    S = 0.0 if N % 2 == 0 else 0.5
    return 0.5 * (2 / (N + 2)) ** 2 * (S * (S + 1) - 3 * s * (s + 1))


def test_scaling_study_triangle():
    out = scaling_study({"experiment": "triangle", "N": list(range(2, 10))})
    for r in out["rows"]:
        N = r["N"]
        assert r["lambda_min"] == pytest.approx(casimir_triangle_min(N), abs=1e-12)
        if N % 2 == 0:
            assert r["scaled"] == pytest.approx(3 * N / (N + 2), abs=1e-9)


def test_scaling_study_z2_exact():
    out = scaling_study({"experiment": "sphere_z2", "N": [10, 20, 50]})
    for r in out["rows"]:
        assert r["lambda_min"] == pytest.approx(1 / (r["N"] + 3), abs=1e-12)


def test_scaling_study_rejects_unknown():
    with pytest.raises(ValidationError):
        scaling_study({"experiment": "cube", "N": [2]})
