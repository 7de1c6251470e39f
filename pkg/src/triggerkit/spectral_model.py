"""Modal representation of the heat-PDE/ODE cascade.

The PDE state is expanded in the cosine basis ``f_0 = 1``,
``f_n = sqrt(2) cos(n pi xi)`` of ``L2(0, 1)``, truncated at mode ``N``.  The
flat state vector is ordered ``(a_0, ..., a_N, x_2)``.

Internally every linear operator is handled in slow/fast coordinates, see
:mod:`triggerkit.linalg`: the slow block is ``(a_0, x_2)`` and the fast block
is ``(a_1, ..., a_N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import ValidationError
from .linalg import CascadeOp, expm_with_integral

__all__ = [
    "NonlinearitySpec",
    "CascadeModel",
    "SpectralState",
    "ModeData",
    "Propagator",
    "mode_coefficients",
    "propagator",
    "semigroup_apply",
    "forced_step",
    "feedback_apply",
    "input_state",
    "perturbation",
    "psi",
    "lipschitz_constant",
    "reference_model",
    "reference_initial_state",
    "generator_matrix",
    "input_matrix",
    "feedback_matrix",
    "cascade_expm",
]


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must contain only finite entries")
    return arr


@dataclass(frozen=True)
class NonlinearitySpec:
    """Piecewise-linear actuator efficiency ``psi``.

    ``psi(x) = (1 + r1) x`` on ``[0, theta)`` and
    ``(1 - r2) x + (r1 + r2) theta`` on ``[theta, inf)``, extended oddly.
    """

    r1: float = 0.0
    r2: float = 0.0
    theta: float = 0.5

    def __post_init__(self):
        for name in ("r1", "r2"):
            v = float(getattr(self, name))
            if not (0.0 <= v < 1.0):
                raise ValidationError(f"{name} must satisfy 0 <= {name} < 1, got {v}")
            object.__setattr__(self, name, v)
        theta = float(self.theta)
        if not (np.isfinite(theta) and theta > 0.0):
            raise ValidationError(f"theta must be positive, got {theta}")
        object.__setattr__(self, "theta", theta)

    @property
    def r(self):
        return max(self.r1, self.r2)

    @property
    def trivial(self):
        return self.r1 == 0.0 and self.r2 == 0.0


@dataclass(frozen=True)
class ModeData:
    """Eigenvalues ``lambda_n = -n^2 pi^2`` and coefficients ``<b_i, f_n>``."""

    lam: np.ndarray
    bcoef: np.ndarray


@dataclass(frozen=True, eq=False)
class CascadeModel:
    """Heat equation with indicator-shaped influence, in cascade with an ODE.

    Parameters
    ----------
    G, H : array_like
        ODE matrices, ``p x p`` and ``p x m``.
    F1, F2 : array_like
        Feedback gains ``u = F1 <x_1, f_0> + F2 x_2``; shapes ``(m,)`` and ``(m, p)``.
    b_support : (float, float)
        Support ``[a1, a2]`` of the indicator.
    b_gain : float
        Height of the indicator.
    N : int
        Highest retained cosine mode.
    nonlin : NonlinearitySpec
    bcoef : array_like, optional
        Explicit ``(N + 1, p)`` table of ``<b_i, f_n>`` overriding the indicator.

    Instances compare by identity; they are immutable and hashable, which lets
    derived operators be cached per model.
    """

    G: np.ndarray
    H: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    b_support: tuple = (0.4, 0.6)
    b_gain: float = 5.0
    N: int = 200
    nonlin: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    bcoef: np.ndarray | None = None

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        p = G.shape[0]
        if G.shape != (p, p):
            raise ValidationError(f"G must be square, got shape {G.shape}")
        H = np.asarray(self.H, dtype=float)
        if H.ndim < 2:
            H = H.reshape(p, -1)
        if H.shape[0] != p:
            raise ValidationError(f"H must have {p} rows, got shape {H.shape}")
        m = H.shape[1]
        F1 = np.asarray(self.F1, dtype=float).reshape(-1)
        if F1.shape != (m,):
            raise ValidationError(f"F1 must have length m = {m}, got shape {F1.shape}")
        F2 = np.asarray(self.F2, dtype=float)
        if F2.ndim < 2:
            F2 = F2.reshape(m, -1)
        if F2.shape != (m, p):
            raise ValidationError(f"F2 must have shape ({m}, {p}), got {F2.shape}")
        for name, arr in (("G", G), ("H", H), ("F1", F1), ("F2", F2)):
            _finite(name, arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        N = self.N
        if isinstance(N, float) and N.is_integer():
            N = int(N)
        if not isinstance(N, (int, np.integer)) or isinstance(N, bool) or N < 1:
            raise ValidationError(f"N must be an integer >= 1, got {self.N!r}")
        object.__setattr__(self, "N", int(N))

        try:
            a1, a2 = (float(v) for v in self.b_support)
        except (TypeError, ValueError):
            raise ValidationError("b_support must be a pair (a1, a2)") from None
        if not (0.0 <= a1 < a2 <= 1.0):
            raise ValidationError(f"b_support must satisfy 0 <= a1 < a2 <= 1, got ({a1}, {a2})")
        object.__setattr__(self, "b_support", (a1, a2))
        gain = float(self.b_gain)
        _finite("b_gain", np.array(gain))
        object.__setattr__(self, "b_gain", gain)

        if not isinstance(self.nonlin, NonlinearitySpec):
            raise ValidationError("nonlin must be a NonlinearitySpec")
        if p > 1 and not self.nonlin.trivial:
            raise ValidationError("the scalar nonlinearity psi requires p = 1")

        if self.bcoef is not None:
            bc = np.asarray(self.bcoef, dtype=float)
            if bc.ndim == 1:
                bc = bc[:, None]
            if bc.shape != (self.N + 1, p):
                raise ValidationError(
                    f"bcoef must have shape ({self.N + 1}, {p}), got {bc.shape}")
            _finite("bcoef", bc)
            bc.setflags(write=False)
            object.__setattr__(self, "bcoef", bc)

    @property
    def p(self):
        return self.G.shape[0]

    @property
    def m(self):
        return self.H.shape[1]

    @property
    def dim(self):
        return self.N + 1 + self.p

    @cached_property
    def modes(self):
        return mode_coefficients(self)

    @property
    def b0(self):
        """Row ``<b_i, f_0>``, shape ``(p,)``."""
        return self.modes.bcoef[0]

    @cached_property
    def slow_open(self):
        """Open-loop slow generator acting on ``(a_0, x_2)``."""
        p = self.p
        S = np.zeros((1 + p, 1 + p))
        S[0, 1:] = self.b0
        S[1:, 1:] = self.G
        return S

    @cached_property
    def feedback_row(self):
        """``[F1, F2]`` acting on ``(a_0, x_2)``, shape ``(m, 1 + p)``."""
        return np.hstack([self.F1[:, None], self.F2])

    @cached_property
    def input_col(self):
        """``B`` restricted to the slow block, shape ``(1 + p, m)``."""
        return np.vstack([np.zeros((1, self.m)), self.H])

    @cached_property
    def slow_closed(self):
        """Closed-loop slow generator of ``A + BF``."""
        return self.slow_open + self.input_col @ self.feedback_row

    @cached_property
    def fast_coupling(self):
        """Rows ``[0, <b, f_n>]`` for ``n >= 1``, shape ``(N, 1 + p)``."""
        C = np.zeros((self.N, 1 + self.p))
        C[:, 1:] = self.modes.bcoef[1:]
        return C

    @cached_property
    def norm_B(self):
        """``||B|| = ||H||``: the input enters the ODE block only."""
        return float(np.linalg.norm(self.H, 2))

    @cached_property
    def norm_BF(self):
        return float(np.linalg.norm(self.H @ self.feedback_row, 2))

    def with_(self, **changes):
        """Return a copy with some fields replaced."""
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Truncated modal coefficients ``a`` and ODE state ``x2``."""

    a: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        x2 = np.array(self.x2, dtype=float).reshape(-1)
        _finite("state.a", a)
        _finite("state.x2", x2)
        a.setflags(write=False)
        x2.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x2", x2)

    @classmethod
    def zeros(cls, model):
        return cls(np.zeros(model.N + 1), np.zeros(model.p))

    @classmethod
    def from_vector(cls, vec, p):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-p], vec[-p:])

    @classmethod
    def from_slow_fast(cls, slow, fast):
        return cls(np.concatenate([slow[:1], fast]), slow[1:])

    def vector(self):
        return np.concatenate([self.a, self.x2])

    @property
    def slow(self):
        return np.concatenate([self.a[:1], self.x2])

    @property
    def fast(self):
        return self.a[1:]

    def norm(self):
        return float(np.sqrt(self.a @ self.a + self.x2 @ self.x2))

    def __add__(self, other):
        return SpectralState(self.a + other.a, self.x2 + other.x2)

    def __sub__(self, other):
        return SpectralState(self.a - other.a, self.x2 - other.x2)

    def __mul__(self, c):
        return SpectralState(self.a * c, self.x2 * c)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, SpectralState):
            return NotImplemented
        return np.array_equal(self.a, other.a) and np.array_equal(self.x2, other.x2)

    __hash__ = None


def mode_coefficients(model):
    """Eigenvalues and modal coefficients of the influence function.

    ``<b, f_0> = gain (a2 - a1)`` and
    ``<b, f_n> = gain sqrt(2) (sin(n pi a2) - sin(n pi a1)) / (n pi)``.
    """
    n = np.arange(model.N + 1)
    lam = -(n * np.pi) ** 2
    if model.bcoef is not None:
        bc = np.array(model.bcoef)
    else:
        a1, a2 = model.b_support
        col = np.empty(model.N + 1)
        col[0] = model.b_gain * (a2 - a1)
        k = n[1:] * np.pi
        col[1:] = model.b_gain * np.sqrt(2.0) * (np.sin(k * a2) - np.sin(k * a1)) / k
        bc = np.repeat(col[:, None], model.p, axis=1)
    lam.setflags(write=False)
    bc.setflags(write=False)
    return ModeData(lam, bc)


def cascade_expm(model, slow, t, integral=False):
    """Exponential of the cascade generator with slow block ``slow``.

    The generator is ``[[slow, 0], [C, diag(lambda_n)]]`` with the fast
    coupling ``C`` of ``model``.  Each fast mode contributes a
    ``(2 + p)``-dimensional upper-triangular block, all exponentiated in a
    single batched call.  With ``integral=True`` also returns
    ``int_0^t exp(s M) ds`` in the same representation.
    """
    t = float(t)
    if not np.isfinite(t) or t < 0.0:
        raise ValidationError(f"time must be finite and nonnegative, got {t}")
    s = slow.shape[0]
    lam = model.modes.lam[1:]
    C = model.fast_coupling
    exp_slow, int_slow = expm_with_integral(slow, t)
    d = np.exp(lam * t)
    d_int = np.where(lam != 0.0, np.expm1(lam * t) / np.where(lam != 0.0, lam, 1.0), t)
    K = np.empty((lam.shape[0], s))
    K_int = np.empty((lam.shape[0], s))

    # Stiff modes (|lambda| t >= 1) use the Sylvester closed form
    #   K = c (e^{St} - e^{lambda t} I)(S - lambda I)^{-1},
    # which avoids long squaring chains; the rest go through one batched
    # exponential of the (2 + p) blocks, which is cheap for them.
    stiff = np.abs(lam) * t >= 1.0
    if np.any(stiff):
        shifted = slow[None] - lam[stiff, None, None] * np.eye(s)[None]
        ok = np.linalg.cond(shifted) < 1e8
        idx = np.flatnonzero(stiff)[ok]
        shifted = shifted[ok]
        inv = np.linalg.inv(shifted)
        rhs = exp_slow[None] - d[idx, None, None] * np.eye(s)[None]
        K[idx] = np.einsum("ni,nij,njk->nk", C[idx], rhs, inv)
        rhs_int = int_slow[None] - d_int[idx, None, None] * np.eye(s)[None]
        K_int[idx] = np.einsum("ni,nij,njk->nk", C[idx], rhs_int, inv)
        stiff[np.flatnonzero(stiff)[~ok]] = False
    rest = np.flatnonzero(~stiff)
    if rest.size:
        blocks = np.zeros((rest.size, 1 + s, 1 + s))
        blocks[:, 0, 0] = lam[rest]
        blocks[:, 0, 1:] = C[rest]
        blocks[:, 1:, 1:] = slow
        if integral:
            ex, ix = expm_with_integral(blocks, t)
            K_int[rest] = ix[:, 0, 1:]
        else:
            ex = sla.expm(blocks * t)
        K[rest] = ex[:, 0, 1:]
        d[rest] = ex[:, 0, 0]
    T = CascadeOp(exp_slow, K, d)
    if integral:
        return T, CascadeOp(int_slow, K_int, d_int)
    return T


@dataclass(frozen=True)
class Propagator:
    """``T(t)`` and ``S_t = int_0^t T(s) ds`` of the open-loop cascade."""

    t: float
    T: CascadeOp
    S: CascadeOp


@lru_cache(maxsize=256)
def _propagator(model, t):
    T, S = cascade_expm(model, model.slow_open, t, integral=True)
    return Propagator(t, T, S)


def propagator(model, t):
    """Return the (cached) open-loop propagator pair for time ``t``."""
    t = float(t)
    if not np.isfinite(t) or t < 0.0:
        raise ValidationError(f"time must be finite and nonnegative, got {t}")
    return _propagator(model, t)


def _apply(op, state):
    slow, fast = op.apply(state.slow, state.fast)
    return SpectralState.from_slow_fast(slow, fast)


def semigroup_apply(model, state, t):
    """Return ``T(t) state`` for the open-loop cascade."""
    return _apply(propagator(model, t).T, state)


def forced_step(model, v, t):
    """Return ``int_0^t T(s) v ds``."""
    return _apply(propagator(model, t).S, v)


def feedback_apply(model, state):
    """Return ``F state = F1 a_0 + F2 x_2``."""
    return model.F1 * state.a[0] + model.F2 @ state.x2


def input_state(model, u):
    """Return ``B u`` as a state: the input enters the ODE block through ``H``."""
    return SpectralState(np.zeros(model.N + 1), model.H @ np.asarray(u, dtype=float))


def psi(spec, x):
    """Evaluate the piecewise-linear efficiency map elementwise."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    inner = (1.0 + spec.r1) * ax
    outer = (1.0 - spec.r2) * ax + (spec.r1 + spec.r2) * spec.theta
    return np.sign(x) * np.where(ax < spec.theta, inner, outer)


def perturbation(model, state):
    """Return ``phi(state) = (b (psi(x2) - x2), 0)`` in modal coordinates."""
    spec = model.nonlin
    if spec.trivial:
        return SpectralState.zeros(model)
    x2 = state.x2
    psi0 = psi(spec, x2) - x2
    return SpectralState(model.modes.bcoef @ psi0, np.zeros(model.p))


def lipschitz_constant(model):
    """Lipschitz constant ``r ||B_1||`` of the perturbation.

    ``||B_1||`` is the ``L2`` norm of the indicator, ``gain sqrt(a2 - a1)``,
    or the spectral norm of an explicit coefficient table.
    """
    if model.bcoef is not None:
        nb1 = float(np.linalg.norm(model.bcoef, 2))
    else:
        a1, a2 = model.b_support
        nb1 = abs(model.b_gain) * np.sqrt(a2 - a1)
    return model.nonlin.r * nb1


def reference_model(G=1.0, r1=0.0, r2=0.0, theta=0.5, N=200):
    """Scalar reference cascade: ``b = 5 * 1_[0.4, 0.6]``, ``H = 1``, ``F1 = -4``, ``F2 = -5``."""
    return CascadeModel(
        G=[[G]], H=[[1.0]], F1=[-4.0], F2=[[-5.0]],
        b_support=(0.4, 0.6), b_gain=5.0, N=N,
        nonlin=NonlinearitySpec(r1, r2, theta),
    )


def reference_initial_state(model):
    """``z(xi, 0) = 2`` (mode 0 only) and ``x_2(0) = -2``."""
    a = np.zeros(model.N + 1)
    a[0] = 2.0
    return SpectralState(a, np.full(model.p, -2.0))


def generator_matrix(model):
    """Dense truncated generator ``A`` in the flat ordering."""
    N, p = model.N, model.p
    A = np.zeros((model.dim, model.dim))
    A[np.arange(N + 1), np.arange(N + 1)] = model.modes.lam
    A[:N + 1, N + 1:] = model.modes.bcoef
    A[N + 1:, N + 1:] = model.G
    return A


def input_matrix(model):
    B = np.zeros((model.dim, model.m))
    B[model.N + 1:] = model.H
    return B


def feedback_matrix(model):
    F = np.zeros((model.m, model.dim))
    F[:, 0] = model.F1
    F[:, model.N + 1:] = model.F2
    return F
