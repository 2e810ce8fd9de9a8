import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qselect.errors import KernelNotIsotropic, NotSemipositive, ValidationError
from qselect.symplectic import (QuadraticForm, is_kernel_isotropic, melin_value, random_semipositive,
                                random_symplectic, random_unitary_symplectic, standard_J,
                                symplectic_eigenvalues, williamson_decompose)

# Triangle leaf form 2(p1+p2+p3)^2 + sum_{i<j} (q_i - q_j)^2 in (q1,q2,q3,p1,p2,p3)
LEAF = np.block([[3 * np.eye(3) - np.ones((3, 3)), np.zeros((3, 3))],
                 [np.zeros((3, 3)), 2 * np.ones((3, 3))]])


def alpha_beta_mu(a, b):
    return 0.25 * (2 * np.sqrt(a * b) + a + b)


def test_standard_J_properties():
    J = standard_J(3)
    assert np.array_equal(J @ J, -np.eye(6))
    assert np.array_equal(J.T, -J)


def test_quadratic_form_rejects_asymmetric_and_odd():
    with pytest.raises(ValidationError):
        QuadraticForm(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        QuadraticForm(np.eye(3))


def test_quadratic_form_json_round_trip():
    Q = QuadraticForm(LEAF)
    back = QuadraticForm.from_json('{"n": 3, "matrix": %s}' % LEAF.ravel().tolist())
    assert np.array_equal(back.matrix, Q.matrix)
    assert QuadraticForm.from_dict(Q.to_dict()).n == 3


@pytest.mark.parametrize("M, lam, zero", [
    (np.diag([1.0, 4.0]), [2.0], 0),
    (np.eye(4), [1.0, 1.0], 0),
    (np.diag([0.0, 1.0]), [], 1),
])
def test_symplectic_eigenvalue_examples(M, lam, zero):
    got, z = symplectic_eigenvalues(M)
    assert np.allclose(got, lam) and z == zero


def test_symplectic_eigenvalues_match_JM_spectrum(rng):
    # oracle: imaginary parts of eig(J M), a different route from the antisymmetric square-root form
    for _ in range(10):
        Q = random_semipositive(3, rng)
        ev = np.linalg.eigvals(standard_J(3) @ Q.matrix)
        expected = np.sort(ev.imag[ev.imag > 0])[::-1]
        assert np.allclose(symplectic_eigenvalues(Q)[0], expected, rtol=1e-8)


def test_not_semipositive_raises():
    with pytest.raises(NotSemipositive):
        symplectic_eigenvalues(np.diag([1.0, -0.5]))


def test_symplectic_invariance(rng):
    for _ in range(20):
        Q = random_semipositive(2, rng, kernel_dim=int(rng.integers(0, 3)))
        S = random_symplectic(2, rng)
        assert np.allclose(S.T @ standard_J(2) @ S, standard_J(2), atol=1e-10)
        a = symplectic_eigenvalues(Q)[0]
        b = symplectic_eigenvalues(Q.congruent(S))[0]
        assert np.allclose(a, b, rtol=1e-7)


def test_williamson_examples():
    W = williamson_decompose(np.diag([1.0, 4.0]))
    assert np.allclose(W.basis, np.diag([np.sqrt(2), 1 / np.sqrt(2)]))
    assert np.allclose(W.fast_eigenvalues, [2.0])
    W = williamson_decompose(np.eye(4))
    assert np.allclose(W.basis, np.eye(4))
    W = williamson_decompose(np.diag([0.0, 1.0]))
    assert W.slow_modes == 1 and np.allclose(W.basis, np.eye(2))


def _check_decomposition(Q):
    n = Q.n
    W = williamson_decompose(Q)
    B, J = W.basis, standard_J(n)
    assert np.abs(B.T @ J @ B - J).max() <= 1e-9
    D = B.T @ Q.matrix @ B
    scale = max(1.0, np.abs(Q.matrix).max())
    assert np.abs(D - np.diag(W.normal_form)).max() <= 1e-8 * scale
    lam, _ = symplectic_eigenvalues(Q)
    assert np.allclose(W.fast_eigenvalues, lam, atol=1e-8 * scale)
    return W


@pytest.mark.parametrize("kernel_dim", [0, 1, 2, 3])
def test_williamson_random(rng, kernel_dim):
    for _ in range(15):
        _check_decomposition(random_semipositive(3, rng, kernel_dim=kernel_dim))


def test_williamson_leaf_form():
    W = _check_decomposition(QuadraticForm(LEAF))
    assert W.slow_modes == 3 and len(W.fast_eigenvalues) == 0


def test_williamson_rejects_non_isotropic_kernel():
    with pytest.raises(KernelNotIsotropic):
        williamson_decompose(np.diag([0.0, 0.0, 1.0, 1.0])[[0, 2, 1, 3]][:, [0, 2, 1, 3]])


@pytest.mark.parametrize("M, expected", [
    (np.diag([1.0, 1.0]), 1.0),
    (np.diag([4.0, 1.0]), 2.25),
    (np.zeros((2, 2)), 0.0),
    (LEAF, 3.0),
])
def test_melin_examples(M, expected):
    mv = melin_value(M)
    assert mv.value == pytest.approx(expected, abs=1e-12)
    assert mv.value == mv.fast_sum + mv.trace_term


def test_kernel_isotropy_examples():
    assert is_kernel_isotropic(np.diag([0.0, 1.0])) == (True, 1)
    assert is_kernel_isotropic(np.zeros((2, 2))) == (False, 2)
    assert is_kernel_isotropic(LEAF) == (True, 3)


def test_leaf_kernel_by_direct_evaluation():
    # kernel = span{(1,1,1)_q} + {p : sum p = 0}; omega vanishes on it
    K = np.zeros((6, 3))
    K[:3, 0] = 1
    K[3:, 1] = [1, -1, 0]
    K[3:, 2] = [0, 1, -1]
    assert np.allclose(LEAF @ K, 0)
    assert np.allclose(K.T @ standard_J(3) @ K, 0)


@given(a=st.floats(1e-3, 10), b=st.floats(1e-3, 10))
def test_melin_alpha_beta_formula(a, b):
    assert melin_value(np.diag([a, b])).value == pytest.approx(alpha_beta_mu(a, b), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 2))
def test_melin_homogeneous(seed, k):
    Q = random_semipositive(2, np.random.default_rng(seed), kernel_dim=k)
    mu = melin_value(Q).value
    for c in 10.0 ** np.arange(-3, 4):
        assert melin_value(c * Q.matrix).value == pytest.approx(c * mu, rel=1e-9)


def test_melin_unitary_invariance(rng):
    for _ in range(100):
        Q = random_semipositive(2, rng, kernel_dim=int(rng.integers(0, 3)))
        U = random_unitary_symplectic(2, rng)
        assert np.allclose(U.T @ U, np.eye(4), atol=1e-12)
        assert melin_value(Q.congruent(U)).value == pytest.approx(melin_value(Q).value, abs=1e-8)


def test_melin_not_symplectic_invariant(rng):
    # the trace term sees non-unitary symplectic maps; squeezing changes mu
    S = np.diag([2.0, 0.5])
    assert melin_value(S.T @ np.eye(2) @ S).value > 1.0


def test_holder_probe(rng):
    """Empirical one-sided bound |mu(Q) - mu(Q')| <= C delta^(1/2n) with a fitted constant."""
    ratios = []
    for _ in range(40):
        Q = random_semipositive(2, rng, kernel_dim=int(rng.integers(0, 3)))
        E = rng.normal(size=(4, 4))
        E = E @ E.T
        for delta in (1e-2, 1e-4, 1e-6):
            P = Q.matrix + delta * E / np.linalg.norm(E, 2)
            diff = abs(melin_value(P).value - melin_value(Q).value)
            ratios.append(diff / delta ** 0.25)
    assert np.isfinite(max(ratios)) and max(ratios) < 50


def test_williamson_diagonal_with_mixed_modes():
    _check_decomposition(QuadraticForm(np.diag([2.0, 0.0, 3.0, 0.5, 5.0, 0.0])))
