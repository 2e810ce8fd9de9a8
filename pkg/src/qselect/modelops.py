"""Finite-difference model operators on one- and two-dimensional boxes.

The crossing operator is

    P = -hbar^2 Q(D) + alpha q_1^2 q_2^2 + c_abs (|q_1| + |q_2|) + L . q + c_harm |q|^2

discretised by second-order central differences with Dirichlet boundary
conditions on [-R, R]^d.  Eigenvalue counts use the Sylvester inertia of
sparse LDL^T-type factorizations, so no eigenvectors are needed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy import integrate, stats
from scipy.optimize import least_squares

from .errors import (GridTooLarge, NoConvergence, QuadratureFail, UnreliableWindow,
                     ValidationError, WindowEmpty)

MAX_UNKNOWNS = 4_000_000


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of a model operator.

    ``dims`` is (r_1, r_2) with r_1 + r_2 in {1, 2}; the quartic term needs
    both variables.  ``mask_level`` restricts the grid to {V <= mask_level}
    with Dirichlet conditions on its boundary.
    """

    dims: tuple = (1, 1)
    kinetic: tuple | None = None
    quartic: float = 1.0
    abs_coeff: float = 0.0
    linear: tuple = ()
    harmonic: float = 0.0
    R: float = 8.0
    M: int = 201
    hbar: float = 1.0
    mask_level: float | None = None

    def __post_init__(self):
        dims = tuple(int(r) for r in self.dims)
        object.__setattr__(self, "dims", dims)
        d = sum(dims)
        if len(dims) != 2 or min(dims) < 0 or d not in (1, 2):
            raise ValidationError("dims must be (r1, r2) with r1 + r2 in {1, 2}")
        lin = tuple(float(v) for v in self.linear) or (0.0,) * d
        object.__setattr__(self, "linear", lin)
        kin = np.eye(d) if self.kinetic is None else np.asarray(self.kinetic, dtype=float).reshape(d, d)
        object.__setattr__(self, "kinetic", tuple(map(tuple, kin)))
        if len(lin) != d:
            raise ValidationError(f"linear term needs {d} coefficients")
        if d == 1 and self.quartic != 0.0:
            raise ValidationError("the quartic term needs two variables; set quartic = 0 in 1D")
        if self.quartic < 0 or self.harmonic < 0 or self.abs_coeff < 0:
            raise ValidationError("quartic, harmonic and abs coefficients must be nonnegative")
        if np.abs(kin - kin.T).max() > 1e-12 or np.linalg.eigvalsh(kin).min() <= 0:
            raise ValidationError("kinetic form must be symmetric positive definite")
        if self.R <= 0 or self.M < 3 or self.hbar <= 0:
            raise ValidationError("R, M and hbar must be positive (M >= 3)")
        self._check_frozen_variables()

    @property
    def d(self) -> int:
        return sum(self.dims)

    def _check_frozen_variables(self, samples: int = 401):
        """Each axis potential, with the other variable frozen at 0, must dominate the linear form.

        On the axes the quartic vanishes, so this is the sampled condition
        c_harm q^2 + c_abs |q| + L_i q >= 0 on [-R, R].
        """
        q = np.linspace(-self.R, self.R, samples)
        for Li in self.linear:
            v = self.harmonic * q**2 + self.abs_coeff * np.abs(q) + Li * q
            if v.min() < -1e-12:
                raise ValidationError(f"linear coefficient {Li} breaks positivity of the frozen-variable operator")

    def potential(self, *q) -> np.ndarray:
        q = [np.asarray(v, dtype=float) for v in q]
        V = sum(self.harmonic * v**2 + self.abs_coeff * np.abs(v) + L * v for v, L in zip(q, self.linear))
        if self.d == 2:
            V = V + self.quartic * q[0] ** 2 * q[1] ** 2
        return V

    def replace(self, **kw) -> "ModelSpec":
        d = asdict(self)
        d.update(kw)
        return ModelSpec(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["kinetic"] = [list(r) for r in self.kinetic]
        d["linear"] = list(self.linear)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        for key in ("dims", "linear"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("kinetic") is not None:
            d["kinetic"] = tuple(map(tuple, d["kinetic"]))
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def crossing(**kw) -> ModelSpec:
    """-Delta + q_1^2 q_2^2 + |q_1| + |q_2| by default."""
    kw.setdefault("abs_coeff", 1.0)
    return ModelSpec(dims=(1, 1), **kw)


def harmonic(d: int = 2, **kw) -> ModelSpec:
    return ModelSpec(dims=(d, 0) if d == 1 else (1, 1), quartic=0.0, harmonic=1.0, **kw)


@dataclass(frozen=True)
class DiscretizedOperator:
    matrix: sp.csr_matrix = field(repr=False)
    spec: ModelSpec
    x: np.ndarray = field(repr=False)
    h: float
    active: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple:
        return (self.spec.M,) * self.spec.d

    def to_grid(self, u: np.ndarray) -> np.ndarray:
        """Vector on the active unknowns to an array on the full grid (zeros outside the mask)."""
        full = np.zeros(self.spec.M**self.spec.d, dtype=u.dtype)
        if self.active is None:
            full[:] = u
        else:
            full[self.active] = u
        return full.reshape(self.shape)


def _second_difference(M: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.full(M - 1, 1.0), np.full(M, -2.0), np.full(M - 1, 1.0)], [-1, 0, 1], format="csr") / h**2


def _first_difference(M: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.full(M - 1, -1.0), np.full(M - 1, 1.0)], [-1, 1], format="csr") / (2 * h)


def build(spec: ModelSpec) -> DiscretizedOperator:
    """Sparse symmetric matrix of the model operator on M interior points per axis."""
    d, M = spec.d, spec.M
    if spec.mask_level is not None and d == 2:
        if np.any(np.asarray(spec.kinetic) != np.eye(2)):
            raise ValidationError("masked domains support the identity kinetic form only")
        return _build_masked(spec)
    if M**d > MAX_UNKNOWNS:
        raise GridTooLarge(f"{M**d} unknowns exceed {MAX_UNKNOWNS}")
    x = np.linspace(-spec.R, spec.R, M + 2)[1:-1]
    h = float(x[1] - x[0])
    Q = np.asarray(spec.kinetic)
    D2, I = _second_difference(M, h), sp.identity(M, format="csr")
    if d == 1:
        K = -Q[0, 0] * D2
        V = spec.potential(x)
    else:
        K = -(Q[0, 0] * sp.kron(D2, I) + Q[1, 1] * sp.kron(I, D2))
        if Q[0, 1] != 0.0:
            # 9-point mixed stencil from central first differences
            D1 = _first_difference(M, h)
            K = K - 2 * Q[0, 1] * sp.kron(D1, D1)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        V = spec.potential(X1, X2)
    H = (spec.hbar**2 * K + sp.diags(V.ravel())).tocsr()
    active = None
    if spec.mask_level is not None:
        active = np.flatnonzero(V.ravel() <= spec.mask_level)
        H = H[active][:, active].tocsr()
    return DiscretizedOperator(H, spec, x, h, active)


@dataclass(frozen=True)
class GroundState:
    eigenvalues: np.ndarray
    vector: np.ndarray = field(repr=False)
    perron: bool

    @property
    def ground(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])


def lowest_eigenpairs(op: DiscretizedOperator, k: int = 2):
    H = op.matrix
    # Gershgorin lower bound keeps the shift below the spectrum
    off = abs(H).sum(axis=1).A1 - np.abs(H.diagonal())
    shift = float((H.diagonal() - off).min()) - 1.0
    try:
        w, V = sla.eigsh(H.tocsc(), k=k, sigma=shift, which="LM", tol=1e-13)
    except sla.ArpackNoConvergence as exc:
        raise NoConvergence(str(exc)) from exc
    order = np.argsort(w)
    return w[order], V[:, order]


def ground_and_gap(op: DiscretizedOperator, k: int = 2) -> GroundState:
    """Lowest eigenvalues with the ground vector normalised to a nonnegative maximum.

    ``perron`` records whether the ground vector has one sign wherever it
    exceeds 1e-12 of its maximum.
    """
    w, V = lowest_eigenpairs(op, max(k, 2))
    u = V[:, 0]
    u = u * np.sign(u[np.argmax(np.abs(u))])
    big = np.abs(u) > 1e-12 * np.abs(u).max()
    perron = bool((u[big] > 0).all())
    if w[1] - w[0] <= 0:
        raise NoConvergence("no spectral gap at this resolution")
    return GroundState(w, u, perron)


def richardson(values_coarse, values_fine, order: int = 2):
    """Extrapolate values computed at spacings h and h/2 for an O(h^order) scheme."""
    c, f = np.asarray(values_coarse), np.asarray(values_fine)
    return (2**order * f - c) / (2**order - 1)


def refined(spec: ModelSpec) -> ModelSpec:
    """Same box with the grid spacing halved."""
    return spec.replace(M=2 * spec.M + 1)


def convergence_report(spec: ModelSpec, k: int = 2) -> dict:
    """Relative eigenvalue changes under M -> 2M+1 and R -> 1.5 R."""
    base = lowest_eigenpairs(build(spec), k)[0]
    fine = lowest_eigenpairs(build(refined(spec)), k)[0]
    h = 2 * spec.R / (spec.M + 1)
    wide_spec = spec.replace(R=1.5 * spec.R, M=int(round(3 * spec.R / h)) - 1)
    wide = lowest_eigenpairs(build(wide_spec), k)[0]
    d_grid = np.abs(fine - base) / np.abs(fine)
    d_box = np.abs(wide - base) / np.abs(base)
    return {"eigenvalues": base.tolist(), "refined": fine.tolist(), "wide": wide.tolist(),
            "delta_grid": d_grid.tolist(), "delta_box": d_box.tolist(),
            "richardson": richardson(base, fine).tolist(),
            "converged": bool(max(d_grid.max(), d_box.max()) < 5e-3)}


# --- Agmon decay -----------------------------------------------------------------

@dataclass(frozen=True)
class AgmonFit:
    exponent: float
    rate: float
    shift: float
    offset: float
    r2: float
    window: tuple


def decay_profile(op: DiscretizedOperator, u: np.ndarray):
    """sup of |u| over sup-norm shells max_i |q_i| = r, as (r, -log|u|) pairs normalised to max 1."""
    U = np.abs(op.to_grid(u))
    U = U / U.max()
    c = np.abs(op.x)
    if op.spec.d == 1:
        ring = c
    else:
        ring = np.maximum.outer(c, c)
    r = np.unique(np.round(ring, 12))
    prof = np.array([U[np.isclose(ring, ri, atol=1e-10)].max() for ri in r])
    return r, prof


def agmon_fit(ground: GroundState, op: DiscretizedOperator, window=(1e-9, 1e-3)) -> AgmonFit:
    """Fit -log|u| ~ c (r - r0)^s + b on sup-norm shells where |u| lies in ``window``."""
    r, prof = decay_profile(op, ground.vector)
    lo, hi = window
    sel = (prof >= lo) & (prof <= hi) & (r > 0)
    if sel.sum() < 6:
        raise WindowEmpty(f"only {int(sel.sum())} shells inside the window {window}")
    rs, ls = r[sel], -np.log(prof[sel])
    if ls[-1] > -np.log(lo) * 0.999 and r[-1] - rs[-1] < 2 * op.h:
        raise WindowEmpty("window reaches the box boundary")

    def model(p, rr):
        return p[0] * np.clip(rr - p[2], 1e-12, None) ** p[1] + p[3]

    res = least_squares(lambda p: model(p, rs) - ls, x0=(1.0, 1.5, 0.0, 0.0),
                        bounds=([0, 0.5, 0.0, -np.inf], [np.inf, 4.0, 0.9 * rs.min(), np.inf]))
    fitted = model(res.x, rs)
    r2 = 1 - np.sum((ls - fitted) ** 2) / np.sum((ls - ls.mean()) ** 2)
    return AgmonFit(float(res.x[1]), float(res.x[0]), float(res.x[2]), float(res.x[3]), float(r2),
                    (float(rs.min()), float(rs.max())))


# --- eigenvalue counting -----------------------------------------------------------

def count_below(op: DiscretizedOperator, lam: float) -> int:
    """Number of eigenvalues below ``lam`` from the inertia of H - lam I.

    SuperLU in symmetric mode with diagonal pivoting keeps the
    factorisation congruent to LDL^T, so the negative pivots count the
    negative eigenvalues.
    """
    A = (op.matrix - lam * sp.identity(op.matrix.shape[0])).tocsc()
    lu = sla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    return int((lu.U.diagonal() < 0).sum())


def count_below_dense(op: DiscretizedOperator, lam: float) -> int:
    return int((np.linalg.eigvalsh(op.matrix.toarray()) < lam).sum())


@dataclass(frozen=True)
class CountCurve:
    lambdas: np.ndarray
    counts: np.ndarray
    power: float
    log_fit: dict
    power_fit: dict
    free_fit: dict
    f_test_p: float

    @property
    def log_preferred(self) -> bool:
        return self.log_fit["r2"] >= 0.98 and self.log_fit["slope"] > 0 and self.f_test_p < 0.01

    def to_rows(self) -> list[dict]:
        return [{"Lambda": float(a), "N": int(b)} for a, b in zip(self.lambdas, self.counts)]

    def summary(self) -> dict:
        return {"power": self.power, "log_fit": self.log_fit, "power_fit": self.power_fit,
                "free_fit": self.free_fit, "f_test_p": self.f_test_p,
                "log_preferred": self.log_preferred,
                "window": [float(self.lambdas.min()), float(self.lambdas.max())]}


def reliability_bound(op: DiscretizedOperator) -> float:
    return 0.25 * (np.pi / op.h) ** 2


def fit_counts(lambdas, counts, power: float) -> CountCurve:
    """Compare N ~ Lambda^power (a + b log Lambda) with the pure law N ~ a Lambda^power.

    The pure law is nested in the logarithmic one (b = 0), so an F-test
    on the residual sums decides between them.  A free-exponent power law
    is reported as well.
    """
    lam = np.asarray(lambdas, dtype=float)
    N = np.asarray(counts, dtype=float)
    y = N / lam**power
    reg = stats.linregress(np.log(lam), y)
    rss_log = float(np.sum((y - (reg.intercept + reg.slope * np.log(lam))) ** 2))
    rss_pow = float(np.sum((y - y.mean()) ** 2))
    n = len(lam)
    F = (rss_pow - rss_log) / (rss_log / (n - 2)) if rss_log > 0 else np.inf
    p = float(stats.f.sf(F, 1, n - 2)) if np.isfinite(F) else 0.0
    free = stats.linregress(np.log(lam), np.log(np.maximum(N, 1)))
    return CountCurve(lam, N.astype(int), power,
                      {"intercept": float(reg.intercept), "slope": float(reg.slope), "r2": float(reg.rvalue**2),
                       "rss": rss_log},
                      {"a": float(y.mean()), "rss": rss_pow,
                       "r2": 0.0, "max_rel_dev": float(np.abs(y / y.mean() - 1).max())},
                      {"exponent": float(free.slope), "r2": float(free.rvalue**2)},
                      p)


def weyl_count(op: DiscretizedOperator, lambdas, power: float | None = None, check_window: bool = True) -> CountCurve:
    """Counts N_Lambda over ``lambdas`` and fits of both model laws.

    ``power`` defaults to 3 r_1 / 2 for the crossing (r_1 = 1) and r for a
    one-dimensional reference operator.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if check_window and lambdas.max() > reliability_bound(op):
        raise UnreliableWindow(f"Lambda_max {lambdas.max():.1f} exceeds grid bound {reliability_bound(op):.1f}")
    if power is None:
        power = 1.5 if op.spec.d == 2 else 1.0
    counts = np.array([count_below(op, lam) for lam in lambdas])
    return fit_counts(lambdas, counts, power)


def weyl_crossing_operator(h: float = 0.05, R: float = 260.0, level: float = 300.0) -> DiscretizedOperator:
    """Crossing operator on the sublevel domain {V <= level}; the arms reach out to |q| = level."""
    M = int(round(2 * R / h)) - 1
    spec = crossing(R=R, M=M, mask_level=level)
    return build(spec)


def _build_masked(spec: ModelSpec) -> DiscretizedOperator:
    """Masked 5-point operator assembled directly on the active set (the full grid may be huge)."""
    M, R = spec.M, spec.R
    x = np.linspace(-R, R, M + 2)[1:-1]
    h = float(x[1] - x[0])
    X1, X2 = _active_points(spec, x)
    flat = X1 * M + X2
    order = np.argsort(flat)
    flat = flat[order]
    X1, X2 = X1[order], X2[order]
    n = len(flat)
    V = spec.potential(x[X1], x[X2])
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [spec.hbar**2 * 4 / h**2 + V]
    for d1, d2 in ((1, 0), (0, 1)):
        nb = (X1 + d1) * M + (X2 + d2)
        ok = (X1 + d1 < M) & (X2 + d2 < M)
        pos = np.searchsorted(flat, nb)
        pos = np.clip(pos, 0, n - 1)
        hit = ok & (flat[pos] == nb)
        i, j = np.nonzero(hit)[0], pos[hit]
        rows += [i, j]
        cols += [j, i]
        vals += [np.full(len(i), -spec.hbar**2 / h**2)] * 2
    H = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return DiscretizedOperator(H, spec, x, h, flat)


def _active_points(spec: ModelSpec, x: np.ndarray):
    """Grid indices (i, j) with V(x_i, x_j) <= mask_level, scanning row by row."""
    I, J = [], []
    for i, xi in enumerate(x):
        v = spec.potential(np.full_like(x, xi), x)
        j = np.flatnonzero(v <= spec.mask_level)
        I.append(np.full(len(j), i))
        J.append(j)
    if sum(len(j) for j in J) > MAX_UNKNOWNS:
        raise GridTooLarge("masked grid exceeds the unknown cap")
    return np.concatenate(I), np.concatenate(J)


def miniwell_reference(lambdas, h: float = 0.02) -> CountCurve:
    """Counts for -d^2/dq^2 + q^2 on a line; N_Lambda / Lambda should approach 1/2."""
    R = np.sqrt(max(lambdas)) + 8.0
    spec = ModelSpec(dims=(1, 0), quartic=0.0, harmonic=1.0, R=R, M=int(round(2 * R / h)) - 1)
    return weyl_count(build(spec), lambdas, power=1.0)


# --- semiclassical scaling ----------------------------------------------------------

def hbar_scaling(hbars, R: float = 7.5, M: int = 400, k: int = 2, base: ModelSpec | None = None) -> list[dict]:
    """hbar^{-4/3} lambda_j(-hbar^2 Delta + q_1^2 q_2^2) on a fixed box, Richardson-extrapolated in h."""
    base = base or ModelSpec(dims=(1, 1), R=R, M=M)
    rows = []
    for hb in hbars:
        spec = base.replace(hbar=float(hb))
        coarse = lowest_eigenpairs(build(spec), k)[0]
        fine = lowest_eigenpairs(build(refined(spec)), k)[0]
        ext = richardson(coarse, fine)
        scale = float(hb) ** (-4 / 3)
        rows.append({"hbar": float(hb), "lambda0": float(ext[0]), "lambda1": float(ext[1]),
                     "ratio": float(ext[0] * scale), "gap_ratio": float((ext[1] - ext[0]) * scale),
                     "h_error": float(abs(fine[0] - coarse[0]) * scale)})
    return rows


def spread(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min())


# --- sublevel volumes ----------------------------------------------------------------

def _ymax(x: float, lam: float) -> float:
    """Largest y >= 0 with x^2 y^2 + x + y <= lam, for 0 <= x <= lam."""
    c = lam - x
    if x == 0:
        return c
    return 2 * c / (1 + np.sqrt(1 + 4 * x * x * c))


def sublevel_volume(lam: float, phase_space: bool = False, rtol: float = 1e-9) -> float:
    """Area of {q_1^2 q_2^2 + |q_1| + |q_2| <= lam}, or the phase-space volume with |p|^2 added.

    The inner integral over q_2 is done in closed form; the outer one by
    adaptive quadrature with breakpoints where the boundary curve bends.
    """
    if lam <= 0:
        return 0.0

    def inner(x):
        y = _ymax(x, lam)
        if not phase_space:
            return y
        c = lam - x
        return np.pi * (c * y - y * y / 2 - x * x * y**3 / 3)

    pts = sorted({p for p in (1.0, np.sqrt(lam), lam / 2) if 0 < p < lam})
    val, err = integrate.quad(inner, 0.0, lam, points=pts, limit=500, epsabs=0, epsrel=rtol)
    if not np.isfinite(val) or err > 1e-6 * abs(val):
        raise QuadratureFail(f"quadrature error {err:.2e} for volume {val:.6e}")
    return 4.0 * val
