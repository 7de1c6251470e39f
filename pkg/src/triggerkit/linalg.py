"""Small linear-algebra and numerical utilities shared by the operator code.

The truncated operators of the cascade (open-loop semigroup, closed-loop
semigroup, sampled-data transition) all share one block structure once the
coordinates are split into a *slow* part ``(a_0, x_2)`` and a *fast* part
``(a_1, ..., a_N)``::

    [[E, 0      ],
     [K, diag(d)]]

The slow block never sees the fast modes, and every fast mode is driven only
by the slow block.  :class:`CascadeOp` stores that representation and
computes its spectral norm from a secular equation in the slow block, which
is exact and costs O(N) instead of a dense SVD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, minimize_scalar

_RTOL = 4 * np.finfo(float).eps


def expm_with_integral(M, t):
    """Return ``exp(tM)`` and ``int_0^t exp(sM) ds`` for a (stack of) square matrices.

    Both blocks come from a single exponential of the augmented matrix
    ``[[M, I], [0, 0]]``.  ``M`` may carry leading batch dimensions.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    aug = np.zeros(M.shape[:-2] + (2 * n, 2 * n))
    aug[..., :n, :n] = M * t
    aug[..., :n, n:] = np.eye(n) * t
    big = sla.expm(aug)
    return big[..., :n, :n], big[..., :n, n:]


def expm_integrals(M, ts, order=2):
    """Return ``exp(tM)`` and its first ``order`` iterated integrals for each ``t``.

    The k-th iterated integral is ``int_0^t int_0^{s_1} ... exp(s_k M) ds_k ... ds_1``.
    Output shape is ``(order + 1, len(ts), n, n)``.
    """
    M = np.asarray(M, dtype=float)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    n = M.shape[0]
    size = (order + 1) * n
    aug = np.zeros((size, size))
    aug[:n, :n] = M
    for k in range(order):
        aug[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = np.eye(n)
    big = sla.expm(ts[:, None, None] * aug[None])
    return np.stack([big[:, :n, k * n:(k + 1) * n] for k in range(order + 1)])


@dataclass(frozen=True)
class CascadeOp:
    """Truncated operator ``[[E, 0], [K, diag(d)]]`` in slow/fast coordinates.

    Attributes
    ----------
    E : (s, s) array
        Slow-to-slow block, ``s = 1 + p``.
    K : (N, s) array
        Slow-to-fast coupling.
    d : (N,) array
        Diagonal action on the fast modes.
    """

    E: np.ndarray
    K: np.ndarray
    d: np.ndarray

    def compose(self, other):
        """Return ``self @ other``."""
        return CascadeOp(
            self.E @ other.E,
            self.K @ other.E + self.d[:, None] * other.K,
            self.d * other.d,
        )

    def __add__(self, other):
        return CascadeOp(self.E + other.E, self.K + other.K, self.d + other.d)

    def add_rank(self, col_slow, col_fast, row_slow):
        """Return ``self + col @ row`` for a row supported on the slow block."""
        return CascadeOp(self.E + col_slow @ row_slow, self.K + col_fast @ row_slow, self.d)

    def apply(self, slow, fast):
        return self.E @ slow, self.K @ slow + self.d * fast

    def dense(self):
        """Dense matrix in the flat ordering ``(a_0, a_1..a_N, x_2)``."""
        s = self.E.shape[0]
        n_fast = self.d.shape[0]
        dim = s + n_fast
        slow = np.r_[0, np.arange(n_fast + 1, dim)]
        fast = np.arange(1, n_fast + 1)
        out = np.zeros((dim, dim))
        out[np.ix_(slow, slow)] = self.E
        out[np.ix_(fast, slow)] = self.K
        out[fast, fast] = self.d
        return out

    def norm(self):
        return cascade_norm(self.E, self.K, self.d)


def cascade_norm(E, K, d):
    """Spectral norm of ``[[E, 0], [K, diag(d)]]``.

    With ``P = X^T X`` and ``mu > max d^2``, the Schur complement with respect
    to the diagonal block is
    ``E^T E + sum_n k_n k_n^T * mu / (mu - d_n^2) - mu I``,
    whose largest eigenvalue is strictly decreasing in ``mu``.  Its root is the
    largest eigenvalue of ``P``; when no root exceeds ``max d^2`` the answer is
    ``max |d|`` by interlacing.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    K = np.asarray(K, dtype=float)
    d = np.asarray(d, dtype=float)
    gram = E.T @ E
    if d.size == 0:
        return float(np.sqrt(max(np.linalg.eigvalsh(gram)[-1], 0.0)))
    d2 = d * d
    dmax2 = float(d2.max())

    s = gram.shape[0]
    outer = np.einsum("ni,nj->nij", K, K).reshape(K.shape[0], s * s)

    if s == 2:
        def lmax(P):
            a, b, c = P[0], P[1], P[3]
            half = 0.5 * (a - c)
            return 0.5 * (a + c) + np.hypot(half, b)
    else:
        def lmax(P):
            return np.linalg.eigvalsh(P.reshape(s, s))[-1]
    flat = gram.reshape(-1)

    def g(mu):
        return lmax(flat + (mu / (mu - d2)) @ outer) - mu

    lo = dmax2 * (1.0 + 8 * np.finfo(float).eps) + 1e-300
    if g(lo) <= 0.0:
        return float(np.sqrt(dmax2))
    hi = (np.sum(E * E) + np.sum(K * K) + np.sum(d2)) * (1.0 + 1e-9) + 1e-300
    mu = brentq(g, lo, hi, xtol=1e-300, rtol=_RTOL, maxiter=200)
    return float(np.sqrt(mu))


def rank_norm(col, row):
    """Spectral norm of ``col @ row`` for a tall ``col`` and a short ``row``."""
    col = np.atleast_2d(col)
    row = np.atleast_2d(row)
    if col.shape[1] == 1:
        return float(np.linalg.norm(col) * np.linalg.norm(row))
    r = np.linalg.qr(col, mode="r")
    return float(np.linalg.norm(r @ row, 2))


def refine_max(f, ts, values):
    """Refine a grid maximum with a bounded scalar search around the grid argmax.

    Returns ``(sup, argsup)``; the result never falls below the grid maximum.
    """
    values = np.asarray(values, dtype=float)
    j = int(np.argmax(values))
    best, arg = float(values[j]), float(ts[j])
    lo = ts[max(j - 1, 0)]
    hi = ts[min(j + 1, len(ts) - 1)]
    if hi <= lo:
        return best, arg
    res = minimize_scalar(lambda t: -f(t), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(hi))})
    if -res.fun > best:
        best, arg = float(-res.fun), float(res.x)
    return best, arg


def gauss_legendre_unit(f, tol=1e-10, start=16, max_nodes=4096):
    """Integrate a vector-valued ``f(sigma)`` over ``[0, 1]``.

    ``f`` takes an array of nodes of shape ``(k,)`` and returns ``(..., k)``.
    Composite Gauss-Legendre with panel doubling until successive estimates
    agree to ``tol`` in every component.
    """
    x, w = np.polynomial.legendre.leggauss(8)
    panels = start
    prev = None
    while True:
        edges = np.linspace(0.0, 1.0, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        est = f(nodes) @ weights
        if prev is not None and np.all(np.abs(est - prev) <= tol):
            return est
        if panels * 8 >= max_nodes:
            return est
        prev = est
        panels *= 2


def bisect_sup(pred, lo, hi, tol=1e-6, hi_cap=None, max_expand=60):
    """Bracket ``sup {x : pred(x)}`` assuming ``pred`` holds on an initial interval.

    Returns ``(feasible, infeasible)`` with ``infeasible - feasible <= tol``,
    ``(None, lo)`` when ``pred(lo)`` fails, and ``(hi_cap, inf)`` when the
    predicate still holds at ``hi_cap``.
    """
    if not pred(lo):
        return None, lo
    n = 0
    while pred(hi):
        if hi_cap is not None and hi >= hi_cap:
            return hi, float("inf")
        lo = hi
        hi = 2.0 * hi if hi_cap is None else min(2.0 * hi, hi_cap)
        n += 1
        if n > max_expand:
            return hi, float("inf")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi
