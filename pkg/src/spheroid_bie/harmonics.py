"""Surface harmonics on spheroids and the grid transforms.

The surface of a spheroid is parametrized by ``(v, phi)`` with ``v`` in
[-1, 1].  The basis ``Y_n^m(v, phi) = Pbar_n^m(v) exp(i m phi)`` uses fully
normalized Ferrers functions (Condon-Shortley phase), orthonormal under
``dv dphi``.  Negative orders follow ``Y_n^{-m} = (-1)^m conj(Y_n^m)``.

Coefficient tables have shape ``(..., p + 1, 2p + 1)`` with entry
``[n, m + p]``; entries with ``|m| > n`` are zero.

The grid uses ``p + 1`` Gauss-Legendre nodes in ``v`` and ``2p`` equispaced
azimuths ``phi_k = pi k / p``.  On that grid ``exp(i p phi)`` and
``exp(-i p phi)`` coincide, so the forward transform splits the Nyquist bin
evenly between ``m = p`` and ``m = -p``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Basis",
    "SurfaceGrid",
    "SurfaceField",
    "HarmonicCoeffs",
    "surface_grid",
    "normalized_legendre",
    "pole_regular_legendre",
    "eval_Ynm",
    "forward_transform",
    "inverse_transform",
    "forward",
    "inverse",
    "to_modified_basis",
    "from_modified_basis",
    "coeff_index",
    "degree_mask",
    "resample",
]


class Basis(str, enum.Enum):
    STANDARD = "standard"
    MODIFIED = "modified"


def _recurrence_coeffs(N: int):
    n = np.arange(N + 1, dtype=float)[:, None]
    m = np.arange(N + 1, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt((4 * n * n - 1) / (n * n - m * m))
        b = np.sqrt(((n - 1) ** 2 - m * m) / (4 * (n - 1) ** 2 - 1))
    return np.nan_to_num(a, posinf=0.0), np.nan_to_num(b, posinf=0.0)


def _fill_columns(T: np.ndarray, v: np.ndarray, N: int, m_start: int):
    a, b = _recurrence_coeffs(N)
    for m in range(m_start, N + 1):
        if m + 1 <= N:
            T[..., m + 1, m] = math.sqrt(2 * m + 3) * v * T[..., m, m]
        for n in range(m + 2, N + 1):
            T[..., n, m] = a[n, m] * (v * T[..., n - 1, m] - b[n, m] * T[..., n - 2, m])
    return T


def normalized_legendre(v, N: int) -> np.ndarray:
    """Table ``Pbar[..., n, m]`` for ``0 <= m <= n <= N``, including 1/sqrt(4 pi)."""
    v = np.asarray(v, dtype=float)
    s = np.sqrt(np.maximum(1.0 - v * v, 0.0))
    T = np.zeros(v.shape + (N + 1, N + 1))
    diag = np.full(v.shape, 1.0 / math.sqrt(4.0 * math.pi))
    T[..., 0, 0] = diag
    for m in range(1, N + 1):
        diag = -math.sqrt((2 * m + 1) / (2 * m)) * s * diag
        T[..., m, m] = diag
    return _fill_columns(T, v, N, 0)


def pole_regular_legendre(v, N: int) -> np.ndarray:
    """Table ``Pbar_n^m(v) / sqrt(1 - v^2)`` for ``m >= 1`` (column 0 is zero).

    Finite at ``v = +-1`` where only ``m = 1`` survives.
    """
    v = np.asarray(v, dtype=float)
    s = np.sqrt(np.maximum(1.0 - v * v, 0.0))
    T = np.zeros(v.shape + (N + 1, N + 1))
    if N < 1:
        return T
    diag = np.full(v.shape, -math.sqrt(1.5) / math.sqrt(4.0 * math.pi))
    T[..., 1, 1] = diag
    for m in range(2, N + 1):
        diag = -math.sqrt((2 * m + 1) / (2 * m)) * s * diag
        T[..., m, m] = diag
    return _fill_columns(T, v, N, 1)


def coeff_index(p: int, n: int, m: int) -> tuple[int, int]:
    return n, m + p


@lru_cache(maxsize=None)
def degree_mask(p: int) -> np.ndarray:
    """Boolean ``(p+1, 2p+1)`` mask of valid ``|m| <= n`` entries."""
    n = np.arange(p + 1)[:, None]
    m = np.arange(-p, p + 1)[None, :]
    mask = np.abs(m) <= n
    mask.setflags(write=False)
    return mask


def expand_orders(T: np.ndarray, p: int, parity: bool = True) -> np.ndarray:
    """Extend a ``[..., n, m>=0]`` table to ``[..., n, m + p]``.

    With ``parity`` negative orders get ``(-1)^m`` as for ``Pbar_n^{-m}``;
    otherwise the table is mirrored (functions of ``|m|``).
    """
    N1 = T.shape[-2]
    out = np.zeros(T.shape[:-1] + (2 * p + 1,), dtype=T.dtype)
    mm = np.arange(min(T.shape[-1], p + 1))
    out[..., p + mm] = T[..., mm]
    sign = (-1.0) ** mm[1:] if parity else 1.0
    out[..., p - mm[1:]] = T[..., mm[1:]] * sign
    return out[..., :N1, :]


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    """Tensor Gauss-Legendre x equispaced grid of order ``p``."""

    p: int
    v: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    legendre: np.ndarray  # [j, n, m + p] for n <= p + 1 (extra degree for gradients)
    legendre_s: np.ndarray  # pole-regular analogue, same layout

    @property
    def shape(self) -> tuple[int, int]:
        return (self.p + 1, 2 * self.p)

    @property
    def size(self) -> int:
        return 2 * self.p * (self.p + 1)

    @property
    def dphi(self) -> float:
        return math.pi / self.p

    def mesh(self):
        """Arrays ``(V, PHI)`` of shape ``(p+1, 2p)``."""
        return np.meshgrid(self.v, self.phi, indexing="ij")

    def quad_weights(self) -> np.ndarray:
        """Weights for ``dv dphi`` on the grid."""
        return self.w[:, None] * np.full(2 * self.p, self.dphi)[None, :]


@lru_cache(maxsize=32)
def surface_grid(p: int) -> SurfaceGrid:
    if p < 1:
        raise ValueError("order p must be at least 1")
    v, w = np.polynomial.legendre.leggauss(p + 1)
    phi = np.arange(2 * p) * math.pi / p
    # extended table has n up to p + 1 but orders only up to p
    L = normalized_legendre(v, p + 1)[:, :, : p + 1]
    S = pole_regular_legendre(v, p + 1)[:, :, : p + 1]
    Le = np.zeros((p + 1, p + 2, 2 * p + 1))
    Se = np.zeros_like(Le)
    mm = np.arange(p + 1)
    sign = (-1.0) ** mm
    Le[:, :, p + mm] = L
    Le[:, :, p - mm] = L * sign
    Se[:, :, p + mm] = S
    Se[:, :, p - mm] = S * sign
    for arr in (v, w, phi, Le, Se):
        arr.setflags(write=False)
    return SurfaceGrid(p, v, w, phi, Le, Se)


def eval_Ynm(n: int, m: int, v, phi) -> np.ndarray:
    """Single spheroidal surface harmonic at points ``(v, phi)``."""
    if abs(m) > n:
        raise ValueError("need |m| <= n")
    v = np.asarray(v, dtype=float)
    T = normalized_legendre(v, n)[..., n, abs(m)]
    if m < 0:
        T = T * (-1.0) ** m
    return T * np.exp(1j * m * np.asarray(phi, dtype=float))


def forward(values: np.ndarray, p: int) -> np.ndarray:
    """Grid samples ``(..., p+1, 2p)`` to coefficients ``(..., p+1, 2p+1)``."""
    g = surface_grid(p)
    values = np.asarray(values)
    if values.shape[-2:] != g.shape:
        raise ValueError(f"field shape {values.shape[-2:]} does not match grid {g.shape}")
    F = np.fft.fft(values, axis=-1) * g.dphi  # bins 0..2p-1
    Fm = np.empty(values.shape[:-1] + (2 * p + 1,), dtype=complex)
    Fm[..., p:] = F[..., : p + 1]
    Fm[..., :p] = F[..., p:]
    Fm[..., 0] *= 0.5
    Fm[..., 2 * p] *= 0.5
    # project onto Pbar_n^m with Gauss-Legendre weights
    Lw = g.legendre[:, : p + 1, :] * g.w[:, None, None]
    return np.einsum("jnm,...jm->...nm", Lw, Fm, optimize=True)


def inverse(coeffs: np.ndarray, p: int, real: bool = False) -> np.ndarray:
    """Coefficients to grid samples; ``real=True`` drops the imaginary part."""
    g = surface_grid(p)
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-2:] != (p + 1, 2 * p + 1):
        raise ValueError(f"coefficient shape {coeffs.shape[-2:]} does not match order {p}")
    Fm = np.einsum("jnm,...nm->...jm", g.legendre[:, : p + 1, :], coeffs, optimize=True)
    G = np.empty(Fm.shape[:-1] + (2 * p,), dtype=complex)
    G[..., : p + 1] = Fm[..., p:]
    G[..., p + 1 :] = Fm[..., 1:p]
    G[..., p] += Fm[..., 0]
    vals = np.fft.ifft(G, axis=-1) * (2 * p)
    return vals.real if real else vals


def modified_weight(shape, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.sqrt(shape.u0 ** 2 + shape.sign * v * v)


# ----------------------------------------------------------------------
# typed wrappers

@dataclass(frozen=True, eq=False)
class SurfaceField:
    grid: SurfaceGrid
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.values)[-2:] != self.grid.shape:
            raise ValueError("field values do not match the grid")


@dataclass(frozen=True, eq=False)
class HarmonicCoeffs:
    p: int
    coeffs: np.ndarray
    basis: Basis = Basis.STANDARD
    shape: object = None  # spheroid shape, required for the modified basis

    def __post_init__(self):
        if np.shape(self.coeffs)[-2:] != (self.p + 1, 2 * self.p + 1):
            raise ValueError("coefficient table has the wrong shape")
        if Basis(self.basis) is Basis.MODIFIED and self.shape is None:
            raise ValueError("modified-basis coefficients need the spheroid shape")

    def __getitem__(self, nm):
        n, m = nm
        if abs(m) > n or n > self.p:
            return 0.0
        return self.coeffs[..., n, m + self.p]


def forward_transform(field: SurfaceField) -> HarmonicCoeffs:
    return HarmonicCoeffs(field.grid.p, forward(field.values, field.grid.p))


def inverse_transform(coeffs: HarmonicCoeffs, real: bool = False) -> SurfaceField:
    vals = inverse(coeffs.coeffs, coeffs.p, real=real)
    if coeffs.basis is Basis.MODIFIED:
        vals = vals / modified_weight(coeffs.shape, surface_grid(coeffs.p).v)[:, None]
    return SurfaceField(surface_grid(coeffs.p), vals)


def to_modified_basis(field: SurfaceField, shape) -> HarmonicCoeffs:
    """Transform ``sqrt(u0^2 -/+ v^2) * field``; the single layer is diagonal here."""
    wgt = modified_weight(shape, field.grid.v)[:, None]
    return HarmonicCoeffs(field.grid.p, forward(field.values * wgt, field.grid.p), Basis.MODIFIED, shape)


def from_modified_basis(coeffs: HarmonicCoeffs, real: bool = False) -> SurfaceField:
    if coeffs.basis is not Basis.MODIFIED:
        raise ValueError("coefficients are not in the modified basis")
    return inverse_transform(coeffs, real=real)


def resample(values: np.ndarray, p: int, q: int) -> np.ndarray:
    """Band-limited resampling of real grid samples from order ``p`` to ``q``.

    Degrees above ``min(p, q)`` are dropped.
    """
    c = forward(values, p)
    k = min(p, q)
    out = np.zeros(c.shape[:-2] + (q + 1, 2 * q + 1), dtype=complex)
    out[..., : k + 1, q - k : q + k + 1] = c[..., : k + 1, p - k : p + k + 1]
    return inverse(out * degree_mask(q), q, real=True)
