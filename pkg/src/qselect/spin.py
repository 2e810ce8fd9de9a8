"""Toeplitz quantization on products of spheres.

On one sphere the level-N space is spanned by the normalised monomials
sqrt((N+1)/pi * C(N, k)) z_1^k z_2^(N-k), k = 0..N; index k carries S^z
eigenvalue (2k - N)/2.  With t = |z_1|^2 and w = 2 z_1 conj(z_2) the
coordinates are

    x = Re w,   y = Im w,   z = 2t - 1,

so every matrix element of a polynomial symbol reduces to Beta integrals
int_0^1 t^p (1-t)^q dt, evaluated here in exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, sqrt

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.special import gammaln
from scipy.stats import linregress

from .errors import DegreeTooLarge, DimensionCap, GridTooCoarse, NoConvergence, ValidationError
from .graphs import TriangleGraph

MAX_DEGREE = 8
NNZ_CAP = 20_000_000
DENSE_LIMIT = 2000
MAX_K = 32


@dataclass(frozen=True)
class SitePolynomial:
    """Real polynomial sum c * x^a y^b z^c on one sphere, stored as ((a, b, c), coeff) pairs."""

    terms: tuple = ()

    def __post_init__(self):
        merged: dict[tuple[int, int, int], float] = {}
        for t in self.terms:
            if len(t) == 2:
                (a, b, c), coef = t
            else:
                a, b, c, coef = t
            a, b, c = int(a), int(b), int(c)
            if min(a, b, c) < 0:
                raise ValidationError("negative exponent")
            if not np.isreal(coef):
                raise ValidationError("coefficients must be real")
            merged[(a, b, c)] = merged.get((a, b, c), 0.0) + float(coef)
        canon = tuple(sorted((k, v) for k, v in merged.items() if v != 0.0))
        object.__setattr__(self, "terms", canon)

    @classmethod
    def monomial(cls, a: int, b: int, c: int, coef: float = 1.0) -> "SitePolynomial":
        return cls((((a, b, c), coef),))

    @property
    def degree(self) -> int:
        return max((sum(k) for k, _ in self.terms), default=0)

    def __call__(self, x, y, z):
        x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
        out = np.zeros(np.broadcast(x, y, z).shape)
        for (a, b, c), coef in self.terms:
            out = out + coef * x**a * y**b * z**c
        return out

    def __add__(self, other: "SitePolynomial") -> "SitePolynomial":
        return SitePolynomial(self.terms + other.terms)

    def to_list(self) -> list:
        return [[a, b, c, coef] for (a, b, c), coef in self.terms]


X = SitePolynomial.monomial(1, 0, 0)
Y = SitePolynomial.monomial(0, 1, 0)
Z = SitePolynomial.monomial(0, 0, 1)
ONE = SitePolynomial.monomial(0, 0, 0)


def _rising(a: int, n: int) -> int:
    r = 1
    for i in range(n):
        r *= a + i
    return r


def _xy_expansion(a: int, b: int) -> dict[tuple[int, int], complex]:
    """x^a y^b as a polynomial in (w, conj w)."""
    poly: dict[tuple[int, int], complex] = {}
    for i1 in range(a + 1):
        for i2 in range(b + 1):
            s, r = i1 + i2, (a - i1) + (b - i2)
            cf = comb(a, i1) * comb(b, i2) * 0.5**a * (1 / 2j) ** b * (-1) ** (b - i2)
            poly[(s, r)] = poly.get((s, r), 0) + cf
    return poly


@lru_cache(maxsize=256)
def _site_matrix(N: int, terms: tuple) -> np.ndarray:
    M = np.zeros((N + 1, N + 1), dtype=complex)
    for (a, b, c), coef in terms:
        for (s, r), cf in _xy_expansion(a, b).items():
            if cf == 0:
                continue
            for k in range(N + 1):
                j = k + s - r
                if j < 0 or j > N:
                    continue
                # z^c = sum_i C(c, i) 2^i (-1)^(c-i) t^i
                tot = Fraction(0)
                for i in range(c + 1):
                    num = _rising(k + 1, s + i) * _rising(N - k + 1, r)
                    tot += Fraction(comb(c, i) * 2**i * (-1) ** (c - i) * num, _rising(N + 2, s + r + i))
                # ratio of binomial normalisations C(N, j) / C(N, k)
                if j >= k:
                    q = Fraction(_rising(N - j + 1, j - k), _rising(k + 1, j - k))
                else:
                    q = Fraction(_rising(j + 1, k - j), _rising(N - k + 1, k - j))
                M[j, k] += coef * cf * 2 ** (s + r) * float(tot) * sqrt(q)
    M = 0.5 * (M + M.conj().T)
    if not np.iscomplexobj(M) or np.abs(M.imag).max() == 0:
        M = M.real.copy()
    M.setflags(write=False)
    return M


def toeplitz_site_op(N: int, f) -> np.ndarray:
    """Matrix of T_N(f) on one sphere in the monomial basis k = 0..N.

    Real symbols with y-parity give complex Hermitian matrices; otherwise
    the result is real symmetric.
    """
    if int(N) != N or N < 1:
        raise ValidationError(f"N must be a positive integer, got {N}")
    f = f if isinstance(f, SitePolynomial) else SitePolynomial(tuple(f))
    if f.degree > MAX_DEGREE:
        raise DegreeTooLarge(f"degree {f.degree} exceeds {MAX_DEGREE}")
    return _site_matrix(int(N), f.terms)


def spin_matrices(N: int):
    """Standard spin-N/2 matrices (Sx, Sy, Sz) in the basis ordered by increasing S^z."""
    s = N / 2
    m = np.arange(N + 1) - s
    Sp = np.diag(np.sqrt(s * (s + 1) - m[:-1] * (m[:-1] + 1)), -1)
    return (Sp + Sp.T) / 2, (Sp - Sp.T) / 2j, np.diag(m)


# --- multi-site operators --------------------------------------------------------

@dataclass(frozen=True)
class SpinOperator:
    """Hermitian operator on the tensor product of sites, site 0 most significant."""

    N: int
    n_sites: int
    matrix: object = field(repr=False)

    @property
    def dim(self) -> int:
        return (self.N + 1) ** self.n_sites

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.asarray(self.matrix)


def _embed(ops: dict[int, np.ndarray], n_sites: int, d: int):
    out = sp.identity(1, format="csr")
    for s in range(n_sites):
        factor = sp.csr_matrix(ops[s]) if s in ops else sp.identity(d, format="csr")
        out = sp.kron(out, factor, format="csr")
    return out


def assemble_graph_operator(G: TriangleGraph, N: int, nnz_cap: int = NNZ_CAP) -> SpinOperator:
    """Sparse T_N(h) for the Heisenberg symbol h = sum over edges of e_i . e_j.

    Uses T_N(f_i g_j) = T_N(f)_i (x) T_N(g)_j for distinct sites, and
    x x' + y y' = (T+ T-' + T- T+') / 2 with the real raising matrix T+ = T(x) + i T(y).
    """
    n, d = G.vertex_count, N + 1
    dim = d**n
    # every edge term has at most 3 nonzeros per row; the sum is bounded by the band structure
    if 3 * dim * min(len(G.edges), 4) > nnz_cap:
        raise DimensionCap(f"estimated nonzeros {3 * dim * min(len(G.edges), 4)} exceed cap {nnz_cap}")
    Tx = toeplitz_site_op(N, X)
    Ty = toeplitz_site_op(N, Y)
    Tz = toeplitz_site_op(N, Z)
    Tp = np.real(Tx + 1j * Ty)
    Tm = Tp.T
    H = sp.csr_matrix((dim, dim))
    for i, j in G.edges:
        H = H + _embed({i: Tz, j: Tz}, n, d)
        H = H + 0.5 * (_embed({i: Tp, j: Tm}, n, d) + _embed({i: Tm, j: Tp}, n, d))
    H = (0.5 * (H + H.T)).tocsr()
    H.eliminate_zeros()
    if H.nnz > nnz_cap:
        raise DimensionCap(f"{H.nnz} nonzeros exceed cap {nnz_cap}")
    return SpinOperator(N, n, H)


def site_operator(N: int, f, n_sites: int = 1, site: int = 0) -> SpinOperator:
    return SpinOperator(N, n_sites, _embed({site: toeplitz_site_op(N, f)}, n_sites, N + 1))


def _bandwidth(A: np.ndarray) -> int:
    rows, cols = np.nonzero(A)
    return int(np.abs(rows - cols).max()) if rows.size else 0


def lowest_spectrum(op, k: int = 1, tol_rel: float = 1e-9):
    """k smallest eigenpairs, eigenvalues nondecreasing, residuals checked against tol_rel * ||H||."""
    if not 1 <= k <= MAX_K:
        raise ValidationError(f"k must lie in [1, {MAX_K}]")
    H = op.matrix if isinstance(op, SpinOperator) else op
    n = H.shape[0]
    k = min(k, n)
    if not sp.issparse(H) or n <= DENSE_LIMIT or k >= n - 1:
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        b = _bandwidth(A)
        if np.isrealobj(A) and b <= 16 and n > 200:
            ab = np.zeros((b + 1, n))
            for off in range(b + 1):
                ab[b - off, off:] = np.diagonal(A, off)
            w, V = sl.eig_banded(ab, select="i", select_range=(0, k - 1))
        else:
            w, V = np.linalg.eigh(A)
            w, V = w[:k], V[:, :k]
    else:
        try:
            w, V = sla.eigsh(H, k=k, which="SA", tol=0)
        except sla.ArpackNoConvergence as exc:
            raise NoConvergence(str(exc)) from exc
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    scale = sla.norm(H, 1) if sp.issparse(H) else np.abs(H).sum(axis=0).max()
    res = np.linalg.norm(H @ V - V * w, axis=0)
    if res.max() > tol_rel * max(scale, 1.0):
        raise NoConvergence(f"eigenpair residual {res.max():.2e}")
    return w, V


# --- coherent states and Husimi marginals ----------------------------------------

def direction(theta, phi) -> np.ndarray:
    theta, phi = np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


def coherent_state(N: int, theta, phi) -> np.ndarray:
    """Unit vectors |Omega> pointing at (theta, phi); shape (..., N+1).

    Components are sqrt(C(N, k)) cos(theta/2)^k (sin(theta/2) e^{i phi})^(N-k),
    so that T_N(f) = (N+1)/(4 pi) int f |Omega><Omega| dOmega.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    k = np.arange(N + 1)
    logc = 0.5 * (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1))
    c = np.cos(theta / 2)[..., None]
    s = np.sin(theta / 2)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = (logc + np.where(k == 0, 0.0, k * np.log(np.abs(c)))
                  + np.where(k == N, 0.0, (N - k) * np.log(np.abs(s))))
    mag = np.exp(logmag) * np.sign(c) ** k * np.sign(s) ** (N - k)
    return mag * np.exp(1j * (N - k) * phi[..., None])


def reduced_density(state, N: int, n_sites: int, site: int) -> np.ndarray:
    """Reduced density matrix of one site from a state vector or a full density matrix."""
    d = N + 1
    state = np.asarray(state)
    if state.ndim == 1:
        psi = np.moveaxis(state.reshape((d,) * n_sites), site, 0).reshape(d, -1)
        rho = psi @ psi.conj().T
    else:
        rho = state.reshape((d,) * (2 * n_sites))
        rho = np.moveaxis(rho, [site, n_sites + site], [0, 1]).reshape(d, d, d ** (n_sites - 1), -1)
        rho = np.trace(rho, axis1=2, axis2=3)
    tr = np.trace(rho).real
    if abs(tr - 1) > 1e-8:
        raise ValidationError(f"state is not normalised (trace {tr:.3e})")
    return rho


@dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre nodes in cos(theta) times uniform azimuths."""

    n_theta: int
    n_phi: int

    def nodes(self):
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        T, P = np.meshgrid(np.arccos(x), phi, indexing="ij")
        W = np.outer(w, np.full(self.n_phi, 2 * np.pi / self.n_phi))
        return T, P, W

    def exact_for(self, N: int) -> bool:
        """Exact for the degree-N trigonometric content of a level-N Husimi density."""
        return 2 * self.n_theta - 1 >= N and self.n_phi > N


def default_grid(N: int) -> SphereGrid:
    return SphereGrid(N // 2 + 2, N + 2)


@dataclass(frozen=True)
class HusimiMarginal:
    N: int
    site: int
    grid: SphereGrid
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)

    @property
    def total(self) -> float:
        return float((self.density * self.weights).sum())

    def evaluate(self, theta, phi) -> np.ndarray:
        omega = coherent_state(self.N, theta, phi)
        val = np.sum((omega.conj() @ self.rho) * omega, axis=-1).real
        return (self.N + 1) / (4 * np.pi) * val


def husimi_marginal(state, site: int, N: int, n_sites: int = 1, grid: SphereGrid | None = None) -> HusimiMarginal:
    grid = grid or default_grid(N)
    if not grid.exact_for(N):
        raise GridTooCoarse(f"grid {grid} does not integrate level-{N} densities exactly")
    rho = reduced_density(state, N, n_sites, site)
    T, P, W = grid.nodes()
    m = HusimiMarginal(N, site, grid, T, P, W, np.zeros_like(T), rho)
    dens = m.evaluate(T, P)
    m = HusimiMarginal(N, site, grid, T, P, W, dens, rho)
    if abs(m.total - 1) > 1e-6:
        raise GridTooCoarse(f"quadrature total {m.total:.8f} differs from 1")
    return m


@dataclass(frozen=True)
class Cap:
    """Spherical cap of angular radius ``angle`` around ``center``."""

    center: tuple
    angle: float


@dataclass(frozen=True)
class Band:
    """Band |axis . Omega| <= half_width."""

    axis: tuple
    half_width: float


def _rotation_to(axis) -> np.ndarray:
    """Orthogonal matrix sending e_z to the unit vector ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    helper = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0, 1.0, 0])
    u = np.cross(helper, a)
    u /= np.linalg.norm(u)
    v = np.cross(a, u)
    return np.column_stack([u, v, a])


def mass_inside(marginal: HusimiMarginal, region, n_nodes: int | None = None) -> float:
    """Husimi mass of a cap or band by Gauss quadrature in coordinates adapted to the region."""
    N = marginal.N
    n_nodes = n_nodes or N // 2 + 4
    if isinstance(region, Cap):
        lo, hi, axis = np.cos(region.angle), 1.0, region.center
    elif isinstance(region, Band):
        lo, hi, axis = -region.half_width, region.half_width, region.axis
    else:
        raise ValidationError("region must be a Cap or a Band")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    cz = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w
    phi = 2 * np.pi * np.arange(N + 2) / (N + 2)
    CZ, PH = np.meshgrid(cz, phi, indexing="ij")
    sz = np.sqrt(np.clip(1 - CZ**2, 0, None))
    local = np.stack([sz * np.cos(PH), sz * np.sin(PH), CZ], axis=-1)
    glob = local @ _rotation_to(axis).T
    th = np.arccos(np.clip(glob[..., 2], -1, 1))
    ph = np.arctan2(glob[..., 1], glob[..., 0])
    dens = marginal.evaluate(th, ph)
    return float((dens * w[:, None]).sum() * 2 * np.pi / (N + 2))


def mass_outside(marginal: HusimiMarginal, region) -> float:
    return 1.0 - mass_inside(marginal, region)


def husimi_rms_distance(state, N: int, target, n_sites: int = 1, site: int = 0) -> float:
    """Root-mean-square chord distance from ``target`` under the Husimi marginal.

    Uses E|Omega - n|^2 = 2 - 2 n . E[Omega] with E[Omega_x] = tr(rho T_N(x)),
    since Husimi moments of degree one are Toeplitz expectations.
    """
    rho = reduced_density(state, N, n_sites, site)
    mean = np.array([np.einsum("ij,ji->", rho, toeplitz_site_op(N, f)).real for f in (X, Y, Z)])
    n = np.asarray(target, dtype=float)
    n = n / np.linalg.norm(n)
    return float(np.sqrt(max(2 - 2 * n @ mean, 0.0)))


# --- scaling studies -------------------------------------------------------------

@dataclass(frozen=True)
class PowerFit:
    exponent: float
    coefficient: float
    stderr: float
    r2: float

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "coefficient": self.coefficient,
                "stderr": self.stderr, "ci95": [self.exponent - 1.96 * self.stderr,
                                                 self.exponent + 1.96 * self.stderr],
                "r2": self.r2}


def power_fit(x, y) -> PowerFit:
    x, y = np.asarray(x, dtype=float), np.abs(np.asarray(y, dtype=float))
    r = linregress(np.log(x), np.log(y))
    return PowerFit(float(r.slope), float(np.exp(r.intercept)), float(r.stderr), float(r.rvalue**2))


def upper_half(values):
    values = sorted(values)
    return values[len(values) // 2:]


def triangle_row(N: int) -> dict:
    from .graphs import triangle

    w, _ = lowest_spectrum(assemble_graph_operator(triangle(), N), k=min(8, (N + 1) ** 3 - 1))
    gap = float(w[w > w[0] + 1e-9][0] - w[0]) if (w > w[0] + 1e-9).any() else float("nan")
    return {"N": N, "lambda_min": float(w[0]), "gap": gap, "width": float("nan"),
            "scaled": N * (float(w[0]) + 1.5)}


def sphere_row(N: int, epsilon: float = 0.0) -> dict:
    f = SitePolynomial((((0, 0, 2), 1.0), ((1, 0, 2), epsilon)))
    H = toeplitz_site_op(N, f)
    w, V = lowest_spectrum(H, k=2)
    g = V[:, 0]
    if epsilon == 0.0:
        width = float(np.sqrt(max(g @ H @ g, 0.0)))
    else:
        width = husimi_rms_distance(g, N, (-1.0, 0.0, 0.0))
    return {"N": N, "lambda_min": float(w[0]), "gap": float(w[1] - w[0]), "width": width,
            "correction": float(w[0] - (1 - abs(epsilon)) / N)}


def scaling_study(spec: dict) -> dict:
    """Run a built-in scaling experiment and fit exponents over the upper half of the N range.

    ``spec`` has keys experiment in {triangle, sphere_z2, sphere_miniwell},
    N (list of ints) and, for the miniwell, epsilon.
    """
    exp = spec["experiment"]
    Ns = [int(n) for n in spec["N"]]
    if not Ns or min(Ns) < 1:
        raise ValidationError("N values must be positive integers")
    if exp == "triangle":
        rows = [triangle_row(N) for N in Ns]
        fit_cols = {"lambda_min_plus_3_2": lambda r: r["lambda_min"] + 1.5, "gap": lambda r: r["gap"]}
    elif exp == "sphere_z2":
        rows = [sphere_row(N) for N in Ns]
        fit_cols = {"lambda_min": lambda r: r["lambda_min"], "gap": lambda r: r["gap"],
                    "width": lambda r: r["width"]}
    elif exp == "sphere_miniwell":
        eps = float(spec.get("epsilon", 0.3))
        if not 0 < abs(eps) < 1:
            raise ValidationError("epsilon must lie in (0, 1) in absolute value")
        rows = [sphere_row(N, eps) for N in Ns]
        fit_cols = {"correction": lambda r: r["correction"], "gap": lambda r: r["gap"],
                    "width": lambda r: r["width"]}
    else:
        raise ValidationError(f"unknown experiment {exp!r}")
    top = set(upper_half(Ns))
    fits = {}
    if len(top) >= 2:
        sel = [r for r in rows if r["N"] in top]
        for name, col in fit_cols.items():
            vals = [col(r) for r in sel]
            if all(np.isfinite(vals)) and all(v != 0 for v in vals):
                fits[name] = power_fit([r["N"] for r in sel], vals).to_dict()
    return {"experiment": exp, "rows": rows, "fits": fits}
