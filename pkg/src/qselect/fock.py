"""Independent Melin-value oracle on the Bargmann space at N = 1.

T_1(Q) is assembled on the normalised monomials z^alpha / sqrt(alpha! pi^n),
|alpha| <= d, with weight exp(-|z|^2) and z_j = q_j + i p_j.  Every matrix
element reduces to the Gaussian moment

    int conj(z^alpha) z^gamma exp(-|z|^2) dz / pi^n = alpha! delta_{alpha, gamma},

so no symplectic linear algebra enters this path.  The compressed operator
is a Rayleigh-Ritz approximation: its smallest eigenvalue decreases in d
towards mu(Q).
"""

from __future__ import annotations

from itertools import product

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.special import gammaln

from .errors import CutoffTooSmall
from .symplectic import QuadraticForm

DENSE_LIMIT = 4000


def monomial_basis(n: int, d: int) -> np.ndarray:
    """Multi-indices alpha in N^n with |alpha| <= d, graded by total degree."""
    rows = [a for tot in range(d + 1) for a in product(range(tot + 1), repeat=n) if sum(a) == tot]
    return np.array(rows, dtype=int).reshape(-1, n)


def _encode(alpha: np.ndarray, d: int) -> np.ndarray:
    return alpha @ ((d + 1) ** np.arange(alpha.shape[1]))


def _complex_coefficients(M: np.ndarray) -> np.ndarray:
    """K with Q = w^T K w for w = (z_1..z_n, conj z_1..conj z_n)."""
    n = M.shape[0] // 2
    C = np.zeros((2 * n, 2 * n), dtype=complex)
    for j in range(n):
        C[j, j] = C[j, n + j] = 0.5            # q = (z + zb) / 2
        C[n + j, j] = -0.5j                    # p = (z - zb) / 2i
        C[n + j, n + j] = 0.5j
    return C.T @ M @ C


def toeplitz_matrix(Q, d: int):
    """Matrix of T_1(Q) on monomials of degree <= d (dense or CSR)."""
    Q = QuadraticForm.coerce(Q)
    n = Q.n
    K = _complex_coefficients(Q.matrix)
    basis = monomial_basis(n, d)
    keys = _encode(basis, d)
    order = np.argsort(keys)
    lfact = gammaln(basis + 1).sum(axis=1)
    rows, cols, vals = [], [], []
    for p, q in product(range(2 * n), repeat=2):
        c = K[p, q]
        if c == 0:
            continue
        a = np.zeros(n, dtype=int)
        b = np.zeros(n, dtype=int)
        for s in (p, q):
            if s < n:
                a[s] += 1
            else:
                b[s - n] += 1
        # conj(z^alpha) z^a zb^b z^beta is nonzero iff alpha + b = beta + a
        alpha = basis + a - b
        ok = (alpha >= 0).all(axis=1) & (alpha.sum(axis=1) <= d)
        j = np.nonzero(ok)[0]
        i = order[np.searchsorted(keys, _encode(alpha[j], d), sorter=order)]
        lg = gammaln(basis[j] + a + 1).sum(axis=1)
        rows.append(i)
        cols.append(j)
        vals.append(c * np.exp(lg - 0.5 * (lfact[i] + lfact[j])))
    if not rows:
        return sp.csr_matrix((len(basis),) * 2, dtype=complex)
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    H = sp.coo_matrix((vals, (rows, cols)), shape=(len(basis),) * 2).tocsr()
    H = 0.5 * (H + H.getH())
    return H


def fock_melin_oracle(Q, cutoff: int) -> float:
    """Smallest eigenvalue of T_1(Q) compressed to monomials of degree <= cutoff."""
    if cutoff < 2:
        raise CutoffTooSmall(f"cutoff {cutoff} < 2")
    H = toeplitz_matrix(Q, cutoff)
    if H.shape[0] <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(H.toarray())[0])
    w = sla.eigsh(H, k=1, which="SA", return_eigenvectors=False)
    return float(w[0].real)
