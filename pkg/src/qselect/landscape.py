"""Classical side of Heisenberg spin symbols on triangle graphs.

Configurations are arrays of shape (|V|, 3) of unit vectors.  The symbol is
h(e) = sum over edges of e_i . e_j, which equals
sum over triangles of (|u + v + w|^2 / 2 - 3/2).

Local Darboux coordinates around a configuration e^0 use a tangent frame
(u_i, v_i) with u_i x v_i = e_i^0 and the calibrated parametrisation

    e_i(q, p) = normalize(e_i^0 + 2 q_i u_i + 2 p_i v_i).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence, NotAtMinimum, ValidationError
from .graphs import TriangleGraph
from .symplectic import QuadraticForm, melin_value

DARBOUX_SCALE = 2.0
RESIDUAL_TOL = 1e-9
UNIT_TOL = 1e-12


def as_configuration(c, n: int | None = None) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[1] != 3:
        raise ValidationError(f"configuration must have shape (|V|, 3), got {c.shape}")
    if n is not None and c.shape[0] != n:
        raise ValidationError(f"configuration has {c.shape[0]} spins, graph has {n}")
    if np.abs(np.linalg.norm(c, axis=1) - 1).max() > UNIT_TOL:
        raise ValidationError("configuration vectors are not unit length")
    return c


def normalize(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_configuration(n: int, rng: np.random.Generator) -> np.ndarray:
    return normalize(rng.normal(size=(n, 3)))


def rotate(axis, angle: float, x):
    """Rodrigues rotation of x (..., 3) about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    x = np.asarray(x, dtype=float)
    cos, sin = np.cos(angle), np.sin(angle)
    return x * cos + np.cross(axis, x) * sin + np.outer(x @ axis, axis).reshape(x.shape) * (1 - cos)


def heisenberg_energy(G: TriangleGraph, c) -> float:
    c = as_configuration(c, G.vertex_count)
    E = G.edge_array
    return float(np.einsum("ij,ij->", c[E[:, 0]], c[E[:, 1]]))


def triangle_sums(G: TriangleGraph, c) -> np.ndarray:
    """u + v + w for every triangle, shape (#triangles, 3)."""
    c = np.asarray(c, dtype=float)
    T = G.triangle_array
    return c[T].sum(axis=1)


def triangle_identity_energy(G: TriangleGraph, c) -> float:
    s = triangle_sums(G, c)
    return float(0.5 * np.einsum("ij,ij->", s, s) - 1.5 * len(s))


def residual(G: TriangleGraph, c) -> float:
    """h(c) - (-3/2) * #triangles; nonnegative, zero iff every triangle sums to zero."""
    return heisenberg_energy(G, c) + 1.5 * len(G.triangles)


def max_triangle_residual(G: TriangleGraph, c) -> float:
    s = triangle_sums(G, c)
    return float(np.linalg.norm(s, axis=1).max()) if len(s) else 0.0


def riemannian_gradient(G: TriangleGraph, c) -> np.ndarray:
    """Projection onto T S^2 of the Euclidean gradient sum_{j ~ i} e_j."""
    c = np.asarray(c, dtype=float)
    E = G.edge_array
    g = np.zeros_like(c)
    np.add.at(g, E[:, 0], c[E[:, 1]])
    np.add.at(g, E[:, 1], c[E[:, 0]])
    return g - np.sum(g * c, axis=1, keepdims=True) * c


@dataclass
class MinimizeOptions:
    max_iters: int = 20000
    grad_tol: float = 1e-10
    armijo: float = 1e-4
    shrink: float = 0.5


def minimize_energy(G: TriangleGraph, seed, opts: MinimizeOptions | None = None,
                    raise_on_cap: bool = True):
    """Riemannian gradient descent on (S^2)^V with Armijo backtracking.

    Barzilai-Borwein steps seed the line search.  Returns the final
    configuration and its residual h + 3/2 #triangles.
    """
    opts = opts or MinimizeOptions()
    x = normalize(np.asarray(seed, dtype=float))
    f = heisenberg_energy(G, x)
    g = riemannian_gradient(G, x)
    step = 0.1
    x_prev = g_prev = None
    for _ in range(opts.max_iters):
        gn = np.linalg.norm(g)
        if gn <= opts.grad_tol:
            return x, residual(G, x)
        if x_prev is not None:
            s = (x - x_prev).ravel()
            y = (g - g_prev).ravel()
            sy = s @ y
            step = (s @ s) / sy if sy > 1e-300 else 0.1
            step = min(max(step, 1e-6), 10.0)
        while True:
            x_new = normalize(x - step * g)
            f_new = heisenberg_energy(G, x_new)
            if f_new <= f - opts.armijo * step * gn * gn or step < 1e-14:
                break
            step *= opts.shrink
        x_prev, g_prev = x, g
        x, f = x_new, f_new
        g = riemannian_gradient(G, x)
    if raise_on_cap:
        raise NoConvergence(f"gradient norm {np.linalg.norm(g):.2e} after {opts.max_iters} iterations")
    return x, residual(G, x)


def multistart_minimize(G: TriangleGraph, starts: int, rng: np.random.Generator,
                        opts: MinimizeOptions | None = None, stop_below: float | None = None):
    """Best (configuration, residual) over random seeds; iteration caps are tolerated."""
    best = (None, np.inf)
    for _ in range(starts):
        c, r = minimize_energy(G, random_configuration(G.vertex_count, rng), opts, raise_on_cap=False)
        if r < best[1]:
            best = (c, r)
        if stop_below is not None and best[1] <= stop_below:
            break
    return best


# --- Darboux frames and Hessians -------------------------------------------------

@dataclass(frozen=True)
class DarbouxFrame:
    u: np.ndarray
    v: np.ndarray

    def rotated(self, angles) -> "DarbouxFrame":
        """Rotate every tangent pair by its own angle (a unitary change of coordinates)."""
        a = np.asarray(angles, dtype=float)[:, None]
        return DarbouxFrame(np.cos(a) * self.u + np.sin(a) * self.v,
                            -np.sin(a) * self.u + np.cos(a) * self.v)


def darboux_frame(c, normal=None) -> DarbouxFrame:
    """Orthonormal tangent frame with u x v = e at each site.

    With ``normal`` given (the plane normal of a coplanar configuration),
    u follows the great circle and v = normal.
    """
    c = np.asarray(c, dtype=float)
    if normal is not None:
        ref = np.broadcast_to(np.asarray(normal, dtype=float), c.shape)
    else:
        axes = np.eye(3)[np.argmin(np.abs(c), axis=1)]
        ref = axes
    u = normalize(np.cross(ref, c))
    v = np.cross(c, u)
    return DarbouxFrame(u, v)


def _check_frame(c, frame: DarbouxFrame):
    if (np.abs(np.sum(frame.u * c, 1)).max() > 1e-10 or np.abs(np.sum(frame.v * c, 1)).max() > 1e-10
            or np.abs(np.cross(frame.u, frame.v) - c).max() > 1e-10):
        raise ValidationError("frame is not an oriented orthonormal tangent frame")


def darboux_parametrization(c, frame: DarbouxFrame, x) -> np.ndarray:
    """Configuration at Darboux coordinates x = (q_1..q_n, p_1..p_n)."""
    n = len(c)
    q, p = x[:n, None], x[n:, None]
    return normalize(c + DARBOUX_SCALE * (q * frame.u + p * frame.v))


def taylor_quadratic(G: TriangleGraph, c, frame: DarbouxFrame) -> np.ndarray:
    """Matrix M of the second-order Taylor term of h in Darboux coordinates.

    With a_i = q_i u_i + p_i v_i, e_i = e_i^0 + 2 a_i - 2|a_i|^2 e_i^0 + O(3),
    so each edge contributes 4 a_i.a_j - 2 (|a_i|^2 + |a_j|^2) e_i^0.e_j^0.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    s = DARBOUX_SCALE
    T = np.concatenate([frame.u, frame.v])      # row k is the tangent vector of coordinate k
    M = np.zeros((2 * n, 2 * n))
    for i, j in G.edges:
        cij = float(c[i] @ c[j])
        for a in (i, n + i):
            for b in (j, n + j):
                val = 0.5 * s * s * float(T[a] @ T[b])
                M[a, b] += val
                M[b, a] += val
        for k in (i, n + i, j, n + j):
            M[k, k] -= 0.5 * s * s * cij
    return M


def darboux_hessian(G: TriangleGraph, c, frame: DarbouxFrame | None = None) -> QuadraticForm:
    """Half-Hessian of h at a zero-residual configuration, as a quadratic form."""
    c = as_configuration(c, G.vertex_count)
    if max_triangle_residual(G, c) > RESIDUAL_TOL:
        raise NotAtMinimum(f"triangle residual {max_triangle_residual(G, c):.2e} exceeds {RESIDUAL_TOL}")
    frame = frame or darboux_frame(c)
    _check_frame(c, frame)
    return QuadraticForm(taylor_quadratic(G, c, frame))


def melin_at(G: TriangleGraph, c, frame: DarbouxFrame | None = None) -> float:
    return melin_value(darboux_hessian(G, c, frame)).value


def melin_details(G: TriangleGraph, c, frame: DarbouxFrame | None = None):
    return melin_value(darboux_hessian(G, c, frame))


# --- configuration families ------------------------------------------------------

_E1 = np.array([1.0, 0.0, 0.0])
_E2 = np.array([np.cos(2 * np.pi / 3), np.sin(2 * np.pi / 3), 0.0])
_E3 = -(_E1 + _E2)


def planar_triangle() -> np.ndarray:
    return np.array([_E1, _E2, _E3])


def leaf_configuration(theta: float) -> np.ndarray:
    """Leaf graph: child triangle (2, 3, 4) rotated by theta about e_2."""
    base = planar_triangle()
    child = rotate(base[2], theta, np.array([base[0], base[1]]))
    return np.vstack([base, child])


def _loop4(e3, e4) -> np.ndarray:
    inner = [_E1, _E2, e3, e4]
    outer = [-(inner[i] + inner[(i + 1) % 4]) for i in range(4)]
    return normalize(np.array(inner + outer))


def four_loop_a(theta: float) -> np.ndarray:
    """Branch e_3 = e_1, with e_4 rotated about e_1; planar at theta in {0, pi}."""
    return _loop4(_E1.copy(), rotate(_E1, theta, _E2))


def four_loop_b(theta: float) -> np.ndarray:
    """Branch e_3 = R(e_2, theta) e_1 with e_4 the mirror of e_2 in span(e_1, e_3).

    The two points at 120 degrees from both e_1 and e_3 are e_2 and its mirror
    image; taking the mirror gives the second family.  At theta = 0 the limit
    is the planar point e_4 = -(e_1 + e_2).
    """
    e3 = rotate(_E2, theta, _E1)
    nrm = np.cross(_E1, e3)
    if np.linalg.norm(nrm) < 1e-12:
        e4 = -(_E1 + _E2) if np.cos(theta) > 0 else _E2.copy()
    else:
        nrm = nrm / np.linalg.norm(nrm)
        e4 = _E2 - 2 * (_E2 @ nrm) * nrm
    return _loop4(e3, e4)


@dataclass(frozen=True)
class ConfigFamily:
    family_id: str
    graph: TriangleGraph
    parametrization: Callable[[float], np.ndarray]
    theta_domain: tuple[float, float] = (0.0, 2 * np.pi)

    def __call__(self, theta: float) -> np.ndarray:
        c = self.parametrization(theta)
        r = max_triangle_residual(self.graph, c)
        if r > RESIDUAL_TOL:
            raise NotAtMinimum(f"family {self.family_id} leaves the zero set at theta={theta} ({r:.2e})")
        return c

    def grid(self, points: int) -> np.ndarray:
        a, b = self.theta_domain
        return a + (b - a) * np.arange(points) / points


def family(family_id: str) -> ConfigFamily:
    from .graphs import leaf, loop

    if family_id == "leaf":
        return ConfigFamily("leaf", leaf(), leaf_configuration)
    if family_id == "four_loop_A":
        return ConfigFamily("four_loop_A", loop(4), four_loop_a)
    if family_id == "four_loop_B":
        return ConfigFamily("four_loop_B", loop(4), four_loop_b)
    raise ValidationError(f"unknown family {family_id!r}")


def family_scan(fam: ConfigFamily, thetas) -> list[dict]:
    """mu along a family; one row per theta with energy, residual and mu."""
    rows = []
    for theta in np.asarray(thetas, dtype=float):
        c = fam(theta)
        m = melin_details(fam.graph, c)
        rows.append({
            "theta": float(theta),
            "energy": heisenberg_energy(fam.graph, c),
            "residual": residual(fam.graph, c),
            "mu": m.value,
            "lambda_sum": 2 * m.fast_sum,
        })
    return rows


# --- planar configurations and the tangent dimension ------------------------------

COLOR_VECTORS = planar_triangle()


def enumerate_three_colorings(G: TriangleGraph, limit: int | None = None) -> list[np.ndarray]:
    """All colourings where every triangle uses three distinct colours, as planar configurations."""
    n = G.vertex_count
    if n > 24:
        raise ValidationError("exhaustive colouring limited to 24 vertices")
    tris_of = [[] for _ in range(n)]
    for t in G.triangles:
        for v in t:
            tris_of[v].append(t)
    colors = [-1] * n
    out = []

    def consistent(v):
        for t in tris_of[v]:
            used = [colors[w] for w in t if colors[w] >= 0]
            if len(used) != len(set(used)):
                return False
        return True

    def backtrack(v):
        if limit is not None and len(out) >= limit:
            return
        if v == n:
            out.append(COLOR_VECTORS[colors].copy())
            return
        for col in range(3):
            colors[v] = col
            if consistent(v):
                backtrack(v + 1)
        colors[v] = -1

    backtrack(0)
    return out


def constraint_jacobian(G: TriangleGraph, c, frame: DarbouxFrame | None = None) -> np.ndarray:
    """Derivative of the triangle sums in tangent coordinates, shape (3 #triangles, 2 |V|)."""
    c = np.asarray(c, dtype=float)
    frame = frame or darboux_frame(c)
    n = len(c)
    Jac = np.zeros((3 * len(G.triangles), 2 * n))
    for k, t in enumerate(G.triangles):
        for i in t:
            Jac[3 * k:3 * k + 3, i] = frame.u[i]
            Jac[3 * k:3 * k + 3, n + i] = frame.v[i]
    return Jac


def minimal_set_dimension(G: TriangleGraph, c, rank_tol: float = 1e-6, return_singular_values: bool = False):
    """Dimension of the tangent space of {all triangle sums = 0} at c, by rank-nullity."""
    c = as_configuration(c, G.vertex_count)
    if max_triangle_residual(G, c) > RESIDUAL_TOL:
        raise NotAtMinimum("configuration is not a zero of every triangle sum")
    sv = np.linalg.svd(constraint_jacobian(G, c), compute_uv=False)
    rank = int((sv > rank_tol).sum())
    dim = 2 * G.vertex_count - rank
    return (dim, sv) if return_singular_values else dim


def project_to_zero_set(G: TriangleGraph, c, tol: float = 1e-13, max_iters: int = 100) -> np.ndarray:
    """Gauss-Newton projection onto {triangle sums = 0} using minimum-norm tangent steps."""
    c = normalize(np.asarray(c, dtype=float))
    n = len(c)
    for _ in range(max_iters):
        s = triangle_sums(G, c).ravel()
        if np.abs(s).max() <= tol:
            return c
        frame = darboux_frame(c)
        Jac = constraint_jacobian(G, c, frame)
        step = np.linalg.lstsq(Jac, -s, rcond=None)[0]
        c = normalize(c + step[:n, None] * frame.u + step[n:, None] * frame.v)
    raise NoConvergence("projection onto the zero set did not converge")
