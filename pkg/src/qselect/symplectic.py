"""Linear symplectic algebra on R^{2n} in (q_1..q_n, p_1..p_n) coordinates.

A quadratic form is stored as the symmetric matrix M with Q(v) = v^T M v.
The Melin value is the bottom of the spectrum of the Bargmann-space
Toeplitz operator T_1(Q); for semipositive Q it equals

    mu(Q) = 1/2 * sum(symplectic eigenvalues) + 1/4 * tr(M),

which is checked against the independent Fock-space computation in
:mod:`qselect.fock`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import KernelNotIsotropic, NonConvergence, NotSemipositive, ValidationError

KERNEL_RTOL = 1e-10
ISOTROPY_TOL = 1e-8
SYMMETRY_RTOL = 1e-12


def standard_J(n: int) -> np.ndarray:
    """Matrix of the standard symplectic form, [[0, I], [-I, 0]]."""
    Z = np.zeros((n, n))
    I = np.eye(n)
    return np.block([[Z, I], [-I, Z]])


@dataclass(frozen=True)
class QuadraticForm:
    """Real symmetric 2n x 2n matrix acting as Q(v) = v^T M v."""

    matrix: np.ndarray
    n: int = field(default=-1)

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise ValidationError(f"need a square even-sized matrix, got shape {M.shape}")
        n = M.shape[0] // 2
        if self.n not in (-1, n):
            raise ValidationError(f"n={self.n} does not match matrix of size {M.shape[0]}")
        scale = max(np.abs(M).max(), 1.0)
        if np.abs(M - M.T).max() > SYMMETRY_RTOL * scale:
            raise ValidationError("matrix is not symmetric")
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "n", n)

    @classmethod
    def coerce(cls, Q) -> "QuadraticForm":
        return Q if isinstance(Q, cls) else cls(np.asarray(Q, dtype=float))

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticForm":
        n = int(d["n"])
        flat = np.asarray(d["matrix"], dtype=float)
        return cls(flat.reshape(2 * n, 2 * n), n)

    @classmethod
    def from_json(cls, text: str) -> "QuadraticForm":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"n": self.n, "matrix": self.matrix.ravel().tolist()}

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.matrix @ v)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def congruent(self, S) -> "QuadraticForm":
        """The form v -> Q(S v), i.e. matrix S^T M S."""
        S = np.asarray(S, dtype=float)
        return QuadraticForm(S.T @ self.matrix @ S)


@dataclass(frozen=True)
class WilliamsonDecomposition:
    """Symplectic basis putting Q in its normal form.

    Columns of ``basis`` are (e_1..e_n, f_1..f_n).  The first ``slow_modes``
    pairs have e_i in ker Q and Q(f_i) = 1; the remaining pairs carry the
    fast symplectic eigenvalues in nonincreasing order.
    """

    basis: np.ndarray
    zero_modes: int
    slow_modes: int
    fast_eigenvalues: np.ndarray

    @property
    def normal_form(self) -> np.ndarray:
        """Diagonal of B^T M B in the expected pattern."""
        r = self.slow_modes
        q = np.concatenate([np.zeros(r), self.fast_eigenvalues])
        p = np.concatenate([np.ones(r), self.fast_eigenvalues])
        return np.concatenate([q, p])


@dataclass(frozen=True)
class MelinValue:
    value: float
    fast_sum: float
    trace_term: float

    def __float__(self):
        return self.value


def _eigh_psd(M: np.ndarray):
    w, V = np.linalg.eigh(M)
    scale = max(np.abs(w).max(), np.finfo(float).tiny) if w.size else 1.0
    if w.size and w.min() < -KERNEL_RTOL * scale:
        raise NotSemipositive(f"smallest eigenvalue {w.min():.3e} below tolerance")
    zero = w <= KERNEL_RTOL * scale
    w = np.where(zero, 0.0, w)
    return w, V, zero


def _sqrtm_psd(M: np.ndarray) -> np.ndarray:
    w, V, _ = _eigh_psd(M)
    return (V * np.sqrt(w)) @ V.T


def kernel_basis(Q) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of Q."""
    Q = QuadraticForm.coerce(Q)
    w, V = np.linalg.eigh(Q.matrix)
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    return V[:, w <= KERNEL_RTOL * scale]


def is_kernel_isotropic(Q) -> tuple[bool, int]:
    """Whether the symplectic form vanishes on ker Q; also returns dim ker Q."""
    Q = QuadraticForm.coerce(Q)
    K = kernel_basis(Q)
    if K.shape[1] == 0:
        return True, 0
    omega = K.T @ standard_J(Q.n) @ K
    return bool(np.abs(omega).max() <= ISOTROPY_TOL), K.shape[1]


def symplectic_eigenvalues(Q) -> tuple[np.ndarray, int]:
    """Positive numbers lambda with +-i*lambda in the spectrum of J M.

    Computed from the antisymmetric matrix M^{1/2} J M^{1/2}, which has the
    same nonzero spectrum as J M but no Jordan blocks.  Returns the
    eigenvalues (nonincreasing) and dim ker M.
    """
    Q = QuadraticForm.coerce(Q)
    w, V, zero = _eigh_psd(Q.matrix)
    R = (V * np.sqrt(w)) @ V.T
    A = R @ standard_J(Q.n) @ R
    try:
        ev = np.linalg.eigvalsh(1j * A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NonConvergence(str(exc)) from exc
    scale = max(w.max(initial=0.0), np.finfo(float).tiny)
    lam = np.sort(ev[ev > 1e-9 * scale])[::-1]
    return lam, int(zero.sum())


def _fast_pairs(V: np.ndarray, M: np.ndarray, J: np.ndarray):
    """Williamson pairs for M restricted to span(V), where M > 0 and omega is nondegenerate."""
    omega_V = V.T @ J @ V
    M_V = V.T @ M @ V
    w, U = np.linalg.eigh(M_V)
    if w.min() <= 0:
        raise NotSemipositive("form is not definite on the symplectic complement of its kernel")
    R = (U / np.sqrt(w)) @ U.T
    K = R @ omega_V @ R
    kap, W = np.linalg.eigh(1j * K)
    m = V.shape[1] // 2
    order = np.argsort(kap)[::-1][:m]
    kap, W = kap[order], W[:, order]
    if kap.min() <= 0:
        raise NonConvergence("degenerate symplectic structure on complement")
    a = W.real / np.linalg.norm(W.real, axis=0)
    b = W.imag / np.linalg.norm(W.imag, axis=0)
    g = V @ R @ b / np.sqrt(kap)
    h = V @ R @ a / np.sqrt(kap)
    lam = 1.0 / kap
    order = np.argsort(lam, kind="stable")[::-1]
    return g[:, order], h[:, order], lam[order]


def _diagonal_decompose(a: np.ndarray, b: np.ndarray) -> WilliamsonDecomposition:
    """Mode-wise scaling for sum a_i q_i^2 + b_i p_i^2; kernel isotropy already checked."""
    n = len(a)
    tol = KERNEL_RTOL * max(a.max(initial=0.0), b.max(initial=0.0), np.finfo(float).tiny)
    a, b = np.where(a <= tol, 0.0, a), np.where(b <= tol, 0.0, b)
    I = np.eye(2 * n)
    slow, fast = [], []
    for i in range(n):
        q, p = I[:, i], I[:, n + i]
        if a[i] > 0 and b[i] > 0:
            s = (b[i] / a[i]) ** 0.25
            fast.append((np.sqrt(a[i] * b[i]), s * q, p / s))
        elif b[i] > 0:
            slow.append((np.sqrt(b[i]) * q, p / np.sqrt(b[i])))
        else:
            slow.append((-np.sqrt(a[i]) * p, q / np.sqrt(a[i])))
    fast.sort(key=lambda t: -t[0])
    cols = lambda items, k: [t[k] for t in items]
    B = np.column_stack(cols(slow, 0) + cols(fast, 1) + cols(slow, 1) + cols(fast, 2))
    lam = np.array([t[0] for t in fast])
    return WilliamsonDecomposition(basis=B, zero_modes=len(slow), slow_modes=len(slow), fast_eigenvalues=lam)


def williamson_decompose(Q) -> WilliamsonDecomposition:
    """Symplectic normal form Q(sum q_i e_i + p_i f_i) = sum_slow p_i^2 + sum_fast lam_i (q_i^2 + p_i^2).

    The kernel pairs follow the inductive construction: with E a basis of
    ker Q, the vectors F = -M^+ J E satisfy M F = -J E, so that the
    symplectic complement of span(E, F) is Q-orthogonal to F.  The pairs are
    then normalised to omega(e, f) = 1, Q(f) = 1 and F is made isotropic by
    adding kernel vectors.  The complement is diagonalised as in the
    definite case.
    """
    Q = QuadraticForm.coerce(Q)
    n, M = Q.n, Q.matrix
    J = standard_J(n)
    w, V, zero = _eigh_psd(M)
    ok, r = is_kernel_isotropic(Q)
    if not ok:
        raise KernelNotIsotropic(f"kernel of dimension {r} is not isotropic")
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
        return _diagonal_decompose(np.diag(M)[:n], np.diag(M)[n:])

    if r:
        E = V[:, zero]
        inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, w))
        M_plus = (V * inv) @ V.T
        F = -M_plus @ J @ E
        G = E.T @ J @ F
        G = 0.5 * (G + G.T)
        gw, gU = np.linalg.eigh(G)
        S = (gU / np.sqrt(gw)) @ gU.T
        E, F = E @ S, F @ S
        A = F.T @ J @ F
        F = F + E @ (0.5 * A)
        slow = np.hstack([E, F])
        comp = null_space(slow.T @ J) if r < n else np.zeros((2 * n, 0))
    else:
        E = F = np.zeros((2 * n, 0))
        comp = np.eye(2 * n)

    if comp.shape[1]:
        g, h, lam = _fast_pairs(comp, M, J)
    else:
        g = h = np.zeros((2 * n, 0))
        lam = np.zeros(0)

    B = np.hstack([E, g, F, h])
    return WilliamsonDecomposition(basis=B, zero_modes=r, slow_modes=r, fast_eigenvalues=lam)


def melin_value(Q) -> MelinValue:
    """Melin value of a semipositive quadratic form.

    Does not require an isotropic kernel: slow or absent modes contribute
    through the trace only.
    """
    Q = QuadraticForm.coerce(Q)
    lam, _ = symplectic_eigenvalues(Q)
    fast = 0.5 * float(lam.sum())
    trace = 0.25 * float(np.trace(Q.matrix))
    return MelinValue(value=fast + trace, fast_sum=fast, trace_term=trace)


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """exp(J H) for a random symmetric H; symplectic by construction."""
    from scipy.linalg import expm

    H = rng.normal(size=(2 * n, 2 * n)) * scale
    return expm(standard_J(n) @ (H + H.T) / 2)


def random_unitary_symplectic(n: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal symplectic matrix [[X, -Y], [Y, X]] from a Haar unitary X + iY."""
    from scipy.stats import unitary_group

    U = unitary_group.rvs(n, random_state=rng) if n > 1 else np.array([[np.exp(2j * np.pi * rng.random())]])
    X, Y = U.real, U.imag
    return np.block([[X, -Y], [Y, X]])


def random_semipositive(n: int, rng: np.random.Generator, kernel_dim: int = 0,
                        spectrum=(0.25, 4.0)) -> QuadraticForm:
    """Random form S^T D S with an isotropic kernel of the requested dimension.

    D is diagonal in canonical coordinates with zeros on the first
    ``kernel_dim`` q-slots, so ker Q = S^{-1}(span of those q axes) stays
    isotropic; S is a random symplectic matrix.
    """
    if not 0 <= kernel_dim <= n:
        raise ValidationError("kernel_dim must lie in [0, n]")
    d = rng.uniform(*spectrum, size=2 * n)
    d[:kernel_dim] = 0.0
    S = random_symplectic(n, rng, scale=0.3)
    M = S.T @ np.diag(d) @ S
    return QuadraticForm(0.5 * (M + M.T))
