"""Associated Legendre functions of the first and second kind off the cut.

Arguments are either real ``x = u > 1`` (prolate radial functions) or purely
imaginary ``x = i u`` with ``u > 0`` (oblate radial functions).  Tables are
indexed ``[..., n, m]`` with ``0 <= m <= n <= N``; entries with ``m > n`` are
zero.  Derivatives are taken with respect to the argument ``x``; for the
imaginary family ``d/du = i d/dx``.

The first-kind functions use the seed ``P_m^m = (2m-1)!! (x^2-1)^{m/2}`` on
the principal branch (no Condon-Shortley phase) and the forward three-term
recurrence in ``n``.  The second-kind functions are obtained from a continued
fraction for ``Q_N / Q_{N-1}`` (modified Lentz), the Casoratian

    P_n Q_{n-1} - P_{n-1} Q_n = (-1)^m (n+m-1)! / (n-m)!

and the same recurrence run backwards, which is the stable direction for Q.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import LegendreOverflow, LentzNoConvergence, WronskianViolation

__all__ = [
    "ArgKind",
    "LegendreTable",
    "N_MAX",
    "factorial_ratio",
    "casoratian_rhs",
    "eval_P",
    "eval_Q",
    "eval_derivatives",
    "legendre_table",
]

N_MAX = 64
LENTZ_TOL = 1e-15
LENTZ_MAX_TERMS = 10_000
LENTZ_TINY = 1e-30
WRONSKIAN_WARN = 1e-10
WRONSKIAN_FAIL = 1e-8


class ArgKind(str, enum.Enum):
    REAL = "real"
    IMAG = "imag"


@lru_cache(maxsize=None)
def factorial_ratio(N: int) -> np.ndarray:
    """Table ``r[n, m] = (n+m)! / (n-m)!`` for ``0 <= m <= n <= N``.

    Exact integer products are rounded once, so no factorial overflows.
    """
    r = np.zeros((N + 1, N + 1))
    for n in range(N + 1):
        acc = 1
        r[n, 0] = 1.0
        for m in range(1, n + 1):
            acc *= (n + m) * (n - m + 1)
            r[n, m] = float(acc)
    r.setflags(write=False)
    return r


@lru_cache(maxsize=None)
def casoratian_rhs(N: int) -> np.ndarray:
    """``w[n, m] = (-1)^m (n+m-1)! / (n-m)!`` for ``1 <= n``, ``m <= n``."""
    w = np.zeros((N + 1, N + 1))
    for n in range(1, N + 1):
        for m in range(n + 1):
            # exact for m >= 1; (n-1)!/n! = 1/n for m = 0
            val = math.factorial(n + m - 1) // math.factorial(n - m) if m else 1.0 / n
            w[n, m] = (-1) ** m * float(val)
    w.setflags(write=False)
    return w


def _argument(kind: ArgKind, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if kind is ArgKind.REAL:
        if np.any(u <= 1.0):
            raise ValueError("real-argument Legendre functions need u > 1")
        return u
    if np.any(u < 0.0):
        raise ValueError("imaginary-argument Legendre functions need u >= 0")
    return 1j * u


def _seed_root(kind: ArgKind, u: np.ndarray):
    """(x^2 - 1)^{1/2} on the principal branch."""
    if kind is ArgKind.REAL:
        return np.sqrt(u * u - 1.0)
    return 1j * np.sqrt(u * u + 1.0)


def _check_p_range(kind: ArgKind, u: np.ndarray):
    if kind is ArgKind.REAL and np.any(u < 1.0):
        raise ValueError("first-kind real-argument functions need u >= 1")
    if kind is ArgKind.IMAG and np.any(u < 0.0):
        raise ValueError("imaginary-argument functions need u >= 0")


def eval_P(kind, u, N: int) -> np.ndarray:
    """First-kind table ``P[..., n, m]`` for ``n, m <= N``.

    Accepts ``u >= 1`` (real) or ``u >= 0`` (imaginary) so interior
    expansions can be evaluated on the focal set.

    Raises
    ------
    LegendreOverflow
        If any entry is not finite.
    """
    kind = ArgKind(kind)
    if N < 0:
        raise ValueError("N must be non-negative")
    u = np.asarray(u, dtype=float)
    _check_p_range(kind, u)
    x = u if kind is ArgKind.REAL else 1j * u
    root = _seed_root(kind, u) if kind is ArgKind.IMAG else np.sqrt(np.maximum(u * u - 1.0, 0.0))
    dtype = float if kind is ArgKind.REAL else complex
    P = np.zeros(u.shape + (N + 1, N + 1), dtype=dtype)
    diag = np.ones(u.shape, dtype=dtype)
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(N + 1):
            if m > 0:
                diag = diag * (2 * m - 1) * root
            P[..., m, m] = diag
            if m + 1 <= N:
                P[..., m + 1, m] = (2 * m + 1) * x * diag
            for n in range(m + 1, N):
                P[..., n + 1, m] = ((2 * n + 1) * x * P[..., n, m] - (n + m) * P[..., n - 1, m]) / (n - m + 1)
    if not np.all(np.isfinite(P)):
        bad = np.argwhere(~np.isfinite(P.reshape(-1, N + 1, N + 1)).any(axis=0))
        n, m = (int(t) for t in bad[0])
        raise LegendreOverflow(n, m)
    return P


def _lentz_ratio(x: np.ndarray, Ntop: int, ms: np.ndarray) -> np.ndarray:
    """``H[..., j] = Q_Ntop^{m_j} / Q_{Ntop-1}^{m_j}`` by the modified Lentz method."""
    shape = x.shape + ms.shape
    xx = np.broadcast_to(x[..., None], shape)
    mm = np.broadcast_to(ms, shape).astype(float)
    dtype = complex if np.iscomplexobj(x) else float
    f = np.full(shape, LENTZ_TINY, dtype=dtype)
    C = f.copy()
    D = np.zeros(shape, dtype=dtype)
    done = np.zeros(shape, dtype=bool)
    for k in range(1, LENTZ_MAX_TERMS + 1):
        nk = Ntop + k - 1
        a_k = (Ntop + mm) if k == 1 else -(nk - mm) * (nk + mm)
        b_k = (2 * nk + 1) * xx
        D = b_k + a_k * D
        D = np.where(D == 0, LENTZ_TINY, D)
        C = b_k + a_k / C
        C = np.where(C == 0, LENTZ_TINY, C)
        D = 1.0 / D
        delta = C * D
        f = np.where(done, f, f * delta)
        done |= np.abs(delta - 1.0) < LENTZ_TOL
        if done.all():
            return f
    bad = np.argwhere(~done)
    m_bad = int(ms[bad[0][-1]]) if bad.size else -1
    raise LentzNoConvergence(m_bad, LENTZ_MAX_TERMS)


def eval_Q(kind, u, N: int, P_table: np.ndarray | None = None, check: bool = True) -> np.ndarray:
    """Second-kind table ``Q[..., n, m]``.

    ``P_table`` must come from :func:`eval_P` at the same argument and must
    hold degrees up to at least ``N + 1`` (it is computed when omitted).
    The Casoratian residual is verified at every degree.

    Raises
    ------
    LentzNoConvergence, WronskianViolation
    """
    kind = ArgKind(kind)
    u = np.asarray(u, dtype=float)
    x = _argument(kind, u)
    Ntop = N + 1
    if P_table is None or P_table.shape[-1] < Ntop + 1:
        P_table = eval_P(kind, u, Ntop)
    P = P_table[..., : Ntop + 1, : Ntop + 1]
    W = casoratian_rhs(Ntop)
    ms = np.arange(N + 1)
    H = _lentz_ratio(x, Ntop, ms)
    dtype = complex if kind is ArgKind.IMAG else float
    Q = np.zeros(u.shape + (Ntop + 1, N + 1), dtype=dtype)
    P_top = P[..., Ntop, : N + 1]
    P_sub = P[..., Ntop - 1, : N + 1]
    Q_sub = W[Ntop, : N + 1] / (P_top - H * P_sub)
    Q[..., Ntop - 1, :] = Q_sub
    Q[..., Ntop, :] = H * Q_sub
    for n in range(Ntop - 1, 0, -1):
        # only columns with m <= n - 1 have a degree n - 1 entry
        mcol = ms[: min(n, N + 1)]
        Q[..., n - 1, mcol] = (
            (2 * n + 1) * x[..., None] * Q[..., n, mcol] - (n - mcol + 1) * Q[..., n + 1, mcol]
        ) / (n + mcol)
    # entries above the diagonal were filled by the sweep; clear them
    tri = np.tril(np.ones((Ntop + 1, N + 1), dtype=bool))
    Q = np.where(tri, Q, 0)
    if check:
        _check_casoratian(P[..., :, : N + 1], Q, W[:, : N + 1], Ntop)
    return Q


def _check_casoratian(P, Q, W, Ntop):
    worst, where = 0.0, (0, 0)
    for n in range(1, Ntop + 1):
        m = np.arange(min(n, P.shape[-1]))  # m <= n - 1 so Q_{n-1}^m exists
        if m.size == 0:
            continue
        lhs = P[..., n, m] * Q[..., n - 1, m] - P[..., n - 1, m] * Q[..., n, m]
        res = np.abs(lhs - W[n, m]) / np.abs(W[n, m])
        r = float(np.max(res)) if res.size else 0.0
        if not np.isfinite(r):
            r = math.inf
        if r > worst:
            worst = r
            where = (n, int(m[np.argmax(np.max(res.reshape(-1, m.size), axis=0))]) if np.isfinite(r) else -1)
    if worst > WRONSKIAN_FAIL:
        raise WronskianViolation(where[0], where[1], worst)


def eval_derivatives(kind, u, F: np.ndarray, N: int) -> np.ndarray:
    """Argument derivative of a table holding degrees ``0..N+1``.

    Uses ``(1 - x^2) f_n' = (m - n - 1) f_{n+1} + (n + 1) x f_n`` which holds
    for both kinds.  Returns degrees ``0..N``.
    """
    kind = ArgKind(kind)
    u = np.asarray(u, dtype=float)
    x = u if kind is ArgKind.REAL else 1j * u
    n = np.arange(N + 1)[:, None]
    m = np.arange(F.shape[-1])[None, :]
    xb = x[..., None, None]
    num = (m - n - 1) * F[..., 1 : N + 2, :] + (n + 1) * xb * F[..., : N + 1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num / (1.0 - xb * xb)
    return np.where(m <= n, d, 0)


@dataclass(frozen=True)
class LegendreTable:
    """P, Q and their argument derivatives up to degree ``N``."""

    kind: ArgKind
    u: np.ndarray
    N: int
    P: np.ndarray
    Q: np.ndarray | None
    dP: np.ndarray
    dQ: np.ndarray | None

    @property
    def x(self):
        return self.u if self.kind is ArgKind.REAL else 1j * self.u


def legendre_table(kind, u, N: int, second_kind: bool = True) -> LegendreTable:
    """Full table with derivatives; vectorized over the shape of ``u``."""
    kind = ArgKind(kind)
    if N > N_MAX:
        raise ValueError(f"degree {N} exceeds the supported maximum {N_MAX}")
    u = np.asarray(u, dtype=float)
    Pfull = eval_P(kind, u, N + 1)
    dP = eval_derivatives(kind, u, Pfull[..., :, : N + 1], N)
    if second_kind:
        Qfull = eval_Q(kind, u, N, Pfull)
        dQ = eval_derivatives(kind, u, Qfull, N)
        Q = Qfull[..., : N + 1, :]
    else:
        Q = dQ = None
    return LegendreTable(kind, u, N, Pfull[..., : N + 1, : N + 1], Q, dP, dQ)
