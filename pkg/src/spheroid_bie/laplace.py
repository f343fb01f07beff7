"""Laplace layer potentials of a single spheroid in closed spectral form.

The single layer ``S``, double layer ``D`` and the normal derivative of the
single layer ``S'`` are diagonal in spheroidal harmonics.  With

    D[mu](x)    = int dG/dnu_y(x, y) mu(y) dS_y
    S[sigma](x) = int G(x, y) sigma(y) dS_y,          G = 1 / (4 pi |x - y|)

and ``mu_nm`` the standard coefficients of ``mu``, the double layer is
``sum b_nm mu_nm P_nm'(u0) Q_nm(u)`` outside and
``sum b_nm mu_nm Q_nm'(u0) P_nm(u)`` inside, with
``b_nm = (-1)^m (n-m)!/(n+m)! (u0^2 - 1)`` for prolates.  The single layer
uses the coefficients ``sigma~_nm`` of ``sqrt(u0^2 -/+ v^2) sigma`` (the
modified basis) and ``b~_nm = a (-1)^m (n-m)!/(n+m)! sqrt(u0^2 - 1)``.
Oblate spheroids use imaginary Legendre arguments ``x = i u`` and the
matching factors, which makes every multiplier real.

Radial functions in expansions are normalized by their value on the
surface, so coefficients are surface values and ``Q(u) / Q(u0)`` or
``P(u) / P(u0)`` carry the decay.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import RegionMismatch
from .geometry import Kind, SpheroidShape
from .harmonics import (
    degree_mask,
    expand_orders,
    forward,
    inverse,
    normalized_legendre,
    pole_regular_legendre,
    surface_grid,
)
from .specfun import ArgKind, factorial_ratio, legendre_table

__all__ = [
    "Operator",
    "Side",
    "Region",
    "SpectralMultipliers",
    "SolidExpansion",
    "double_layer_multipliers",
    "single_layer_multipliers",
    "sprime_multipliers",
    "multipliers",
    "apply_on_surface",
    "solid_expansion",
    "eval_expansion",
    "expansion_basis",
    "gradient_basis",
    "eval_gradient_S",
    "potential_at_points",
    "gradient_S_at_points",
]

REALITY_TOL = 1e-12


class Operator(str, enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    SPRIME = "sprime"


class Side(str, enum.Enum):
    EXTERIOR = "exterior"
    INTERIOR = "interior"
    AVG = "avg"
    PLUS = "plus"
    MINUS = "minus"


class Region(str, enum.Enum):
    EXTERIOR = "exterior"
    INTERIOR = "interior"


def _arg_kind(shape: SpheroidShape) -> ArgKind:
    return ArgKind.REAL if shape.kind is Kind.PROLATE else ArgKind.IMAG


@dataclass(frozen=True, eq=False)
class _Radial:
    """Legendre data at the surface, orders expanded to ``m + p`` layout."""

    P: np.ndarray
    Q: np.ndarray
    dP: np.ndarray
    dQ: np.ndarray
    fac: np.ndarray  # (-1)^m (n-m)!/(n+m)!


@lru_cache(maxsize=64)
def _radial(kind: Kind, u0: float, a: float, p: int) -> _Radial:
    tab = legendre_table(ArgKind.REAL if kind is Kind.PROLATE else ArgKind.IMAG, u0, p)
    r = factorial_ratio(p)
    mm = np.arange(p + 1)[None, :]
    with np.errstate(divide="ignore"):
        fac = np.where(r > 0, (-1.0) ** mm / np.where(r > 0, r, 1.0), 0.0)
    mask = degree_mask(p)
    out = [np.where(mask, expand_orders(t, p, parity=False), 0) for t in (tab.P, tab.Q, tab.dP, tab.dQ, fac)]
    for arr in out:
        arr.setflags(write=False)
    return _Radial(*out)


def _radial_for(shape: SpheroidShape, p: int) -> _Radial:
    return _radial(shape.kind, shape.u0, shape.a, p)


def _realify(z: np.ndarray, what: str) -> np.ndarray:
    if not np.iscomplexobj(z):
        return np.asarray(z, dtype=float)
    scale = np.abs(z)
    bad = np.abs(z.imag) > REALITY_TOL * np.maximum(scale, 1e-300)
    bad &= np.abs(z.imag) > 1e-300
    if np.any(bad):
        worst = float(np.max(np.abs(z.imag) / np.maximum(scale, 1e-300)))
        raise ArithmeticError(f"{what} multipliers have imaginary residue {worst:.2e}")
    return z.real.copy()


@dataclass(frozen=True, eq=False)
class SpectralMultipliers:
    """Diagonal spectrum of a layer operator, table layout ``[n, m + p]``."""

    operator: Operator
    side: Side
    table: np.ndarray

    @property
    def p(self) -> int:
        return self.table.shape[0] - 1

    def __call__(self, n: int, m: int) -> float:
        return float(self.table[n, m + self.p])


def _check_side(side, allowed) -> Side:
    side = Side(side)
    if side not in allowed:
        raise ValueError(f"side {side.value!r} not available here; use one of {[s.value for s in allowed]}")
    return side


@lru_cache(maxsize=256)
def _dl_table(kind, u0, a, p, side: Side) -> np.ndarray:
    rad = _radial(kind, u0, a, p)
    if kind is Kind.PROLATE:
        b = rad.fac * (u0 * u0 - 1.0)
    else:
        b = -rad.fac * (u0 * u0 + 1.0)
    plus = b * rad.dP * rad.Q
    minus = b * rad.dQ * rad.P
    tab = {Side.PLUS: plus, Side.EXTERIOR: plus, Side.MINUS: minus,
           Side.INTERIOR: minus, Side.AVG: 0.5 * (plus + minus)}[side]
    out = _realify(tab, "double layer")
    out.setflags(write=False)
    return out


def _sl_factor(kind, u0, a, p):
    rad = _radial(kind, u0, a, p)
    if kind is Kind.PROLATE:
        return rad, a * rad.fac * math.sqrt(u0 * u0 - 1.0)
    return rad, 1j * a * rad.fac * math.sqrt(u0 * u0 + 1.0)


@lru_cache(maxsize=256)
def _sl_table(kind, u0, a, p) -> np.ndarray:
    rad, bt = _sl_factor(kind, u0, a, p)
    out = _realify(bt * rad.P * rad.Q, "single layer")
    out.setflags(write=False)
    return out


@lru_cache(maxsize=256)
def _sp_table(kind, u0, a, p, side: Side) -> np.ndarray:
    rad, bt = _sl_factor(kind, u0, a, p)
    if kind is Kind.PROLATE:
        g = bt * math.sqrt(u0 * u0 - 1.0) / a
    else:
        g = 1j * bt * math.sqrt(u0 * u0 + 1.0) / a
    plus = g * rad.P * rad.dQ
    minus = g * rad.Q * rad.dP
    tab = {Side.PLUS: plus, Side.EXTERIOR: plus, Side.MINUS: minus,
           Side.INTERIOR: minus, Side.AVG: 0.5 * (plus + minus)}[side]
    out = _realify(tab, "single layer normal derivative")
    out.setflags(write=False)
    return out


def double_layer_multipliers(shape: SpheroidShape, p: int, side="avg") -> SpectralMultipliers:
    """Surface spectrum of ``D`` acting on standard coefficients.

    ``plus``/``exterior`` is the limit from outside, ``minus``/``interior``
    from inside and ``avg`` the principal value.
    """
    side = Side(side)
    return SpectralMultipliers(Operator.DOUBLE, side, _dl_table(shape.kind, shape.u0, shape.a, p, side))


def single_layer_multipliers(shape: SpheroidShape, p: int, side="avg") -> SpectralMultipliers:
    """Surface spectrum of ``S`` acting on modified-basis coefficients.

    The single layer is continuous, so every side gives the same table.
    """
    side = Side(side)
    return SpectralMultipliers(Operator.SINGLE, side, _sl_table(shape.kind, shape.u0, shape.a, p))


def sprime_multipliers(shape: SpheroidShape, p: int, side="avg") -> SpectralMultipliers:
    """Spectrum of the normal derivative of ``S``.

    Input is in the modified basis; output coefficients multiply
    ``Y_n^m / sqrt(u0^2 -/+ v^2)``.
    """
    side = Side(side)
    return SpectralMultipliers(Operator.SPRIME, side, _sp_table(shape.kind, shape.u0, shape.a, p, side))


def multipliers(shape, p, operator, side="avg") -> SpectralMultipliers:
    operator = Operator(operator)
    if operator is Operator.DOUBLE:
        return double_layer_multipliers(shape, p, side)
    if operator is Operator.SINGLE:
        return single_layer_multipliers(shape, p, side)
    return sprime_multipliers(shape, p, side)


def density_coeffs(shape: SpheroidShape, p: int, operator, values: np.ndarray) -> np.ndarray:
    """Coefficients of grid samples in the basis the operator acts on."""
    operator = Operator(operator)
    if operator is Operator.DOUBLE:
        return forward(values, p)
    g = surface_grid(p)
    return forward(values * shape.modified_weight(g.v)[:, None], p)


def apply_on_surface(shape: SpheroidShape, p: int, operator, values: np.ndarray, side="avg") -> np.ndarray:
    """Evaluate a layer operator on the grid of its own surface.

    ``values`` has shape ``(..., p+1, 2p)``; real input gives real output.
    """
    operator = Operator(operator)
    mult = multipliers(shape, p, operator, side).table
    c = density_coeffs(shape, p, operator, values)
    out = inverse(mult * c, p, real=not np.iscomplexobj(values))
    if operator is Operator.SPRIME:
        out = out / shape.modified_weight(surface_grid(p).v)[:, None]
    return out


# ----------------------------------------------------------------------
# solid expansions

@dataclass(frozen=True, eq=False)
class SolidExpansion:
    """``sum coeffs[n, m] * f_nm(u) / f_nm(u0) * Y_n^m`` with f = Q or P."""

    shape: SpheroidShape
    p: int
    region: Region
    coeffs: np.ndarray


def solid_expansion(shape: SpheroidShape, operator, density, region, p: int | None = None) -> SolidExpansion:
    """Expansion of ``S`` or ``D`` of a density in one region.

    ``density`` is either a coefficient table in the basis the operator acts
    on (modified for ``S``) or a :class:`~spheroid_bie.harmonics.HarmonicCoeffs`.
    """
    operator = Operator(operator)
    region = Region(region)
    coeffs = getattr(density, "coeffs", density)
    coeffs = np.asarray(coeffs)
    p = coeffs.shape[-2] - 1 if p is None else p
    if operator is Operator.SPRIME:
        raise ValueError("use eval_gradient_S for normal derivatives off the surface")
    side = Side.PLUS if region is Region.EXTERIOR else Side.MINUS
    mult = multipliers(shape, p, operator, side).table
    return SolidExpansion(shape, p, region, mult * coeffs)


def _region_check(shape, u, region: Region, tol=1e-12):
    u = np.asarray(u, dtype=float)
    if region is Region.EXTERIOR and np.any(u < shape.u0 * (1.0 - tol)):
        raise RegionMismatch("exterior expansion evaluated inside the spheroid")
    if region is Region.INTERIOR and np.any(u > shape.u0 * (1.0 + tol)):
        raise RegionMismatch("interior expansion evaluated outside the spheroid")


def _radial_ratio(shape, p, region: Region, u, derivative: bool):
    """``f(u)/f(u0)`` (and ``d/du`` of it) in ``[..., n, m + p]`` layout."""
    rad = _radial_for(shape, p)
    kind = _arg_kind(shape)
    if region is Region.EXTERIOR:
        u_c = np.maximum(u, shape.u0)
        tab = legendre_table(kind, u_c, p)
        f, df, f0 = tab.Q, tab.dQ, rad.Q
    else:
        u_c = np.minimum(u, shape.u0)
        tab = legendre_table(kind, u_c, p, second_kind=False)
        f, df, f0 = tab.P, tab.dP, rad.P
    mask = degree_mask(p)
    safe = np.where(mask, f0, 1.0)
    ratio = np.where(mask, expand_orders(f, p, parity=False) / safe, 0)
    if not derivative:
        return ratio, None
    dfe = expand_orders(df, p, parity=False)
    if kind is ArgKind.IMAG:
        dfe = 1j * dfe  # d/du = i d/dx
    dratio = np.where(mask, dfe / safe, 0)
    return ratio, dratio


def expansion_basis(shape: SpheroidShape, p: int, region, u, v, phi) -> np.ndarray:
    """Matrix ``E[t, n, m + p]`` with ``value_t = sum E * coeffs``."""
    region = Region(region)
    u, v, phi = (np.atleast_1d(np.asarray(t, dtype=float)) for t in (u, v, phi))
    _region_check(shape, u, region)
    ratio, _ = _radial_ratio(shape, p, region, u, derivative=False)
    Y = expand_orders(normalized_legendre(v, p), p)
    eph = np.exp(1j * np.arange(-p, p + 1)[None, :] * phi[:, None])
    return ratio * Y * eph[:, None, :]


def eval_expansion(exp: SolidExpansion, u, v, phi, chunk: int = 2048) -> np.ndarray:
    """Evaluate an expansion at spheroidal target points (real part)."""
    u, v, phi = np.broadcast_arrays(*(np.atleast_1d(np.asarray(t, dtype=float)) for t in (u, v, phi)))
    shape_out = u.shape
    u, v, phi = u.ravel(), v.ravel(), phi.ravel()
    _region_check(exp.shape, u, exp.region)
    out = np.empty(u.size)
    for s in range(0, u.size, chunk):
        E = expansion_basis(exp.shape, exp.p, exp.region, u[s:s + chunk], v[s:s + chunk], phi[s:s + chunk])
        out[s:s + chunk] = np.einsum("tnm,nm->t", E, exp.coeffs).real
    return out.reshape(shape_out)


def gradient_basis(shape: SpheroidShape, p: int, region, u, v, phi) -> np.ndarray:
    """Tensor ``G[t, k, n, m + p]`` giving world-frame gradient components.

    Applied to single-layer expansion coefficients (surface value scale).
    On the surface ``u = u0`` the radial part is the one-sided limit of the
    requested region.
    """
    region = Region(region)
    u, v, phi = (np.atleast_1d(np.asarray(t, dtype=float)) for t in (u, v, phi))
    _region_check(shape, u, region)
    if shape.kind is Kind.PROLATE and np.any(u <= 1.0):
        raise RegionMismatch("gradient requested on the focal segment")
    ratio, dratio = _radial_ratio(shape, p, region, u, derivative=True)
    a, sg = shape.a, shape.sign
    q = np.sqrt(u * u + sg * v * v)  # sqrt(u^2 -/+ v^2)
    r = np.sqrt(u * u + sg)  # sqrt(u^2 -/+ 1)
    L = normalized_legendre(v, p + 1)
    S = pole_regular_legendre(v, p + 1)
    n = np.arange(p + 1, dtype=float)[:, None]
    mm = np.arange(p + 1, dtype=float)[None, :]
    vb = v[:, None, None]
    c_up = np.sqrt((2 * n + 1) / (2 * n + 3) * (n + mm + 1) / np.maximum(n - mm + 1, 1)) * (n - mm + 1)
    # sqrt(1 - v^2) d/dv Pbar_n^m
    dv = (n + 1) * vb * S[:, : p + 1, : p + 1] - c_up * S[:, 1 : p + 2, : p + 1]
    dv[:, :, 0] = -np.sqrt(n[:, 0] * (n[:, 0] + 1)) * L[:, : p + 1, 1]
    dv = np.where(mm <= n, dv, 0.0)
    Y = expand_orders(L[:, : p + 1, : p + 1], p)
    Sy = expand_orders(S[:, : p + 1, : p + 1], p)
    dV = expand_orders(dv, p)
    mvals = np.arange(-p, p + 1)
    eph = np.exp(1j * mvals[None, :] * phi[:, None])[:, None, :]
    g_u = (r / (a * q))[:, None, None] * dratio * Y * eph
    g_v = (1.0 / (a * q))[:, None, None] * ratio * dV * eph
    g_phi = (1.0 / (a * r))[:, None, None] * ratio * (1j * mvals) * Sy * eph
    frame = shape.local_frame(u, v, phi)  # [t, (e_u, e_v, e_phi), xyz]
    return (frame[:, 0, :, None, None] * g_u[:, None] + frame[:, 1, :, None, None] * g_v[:, None]
            + frame[:, 2, :, None, None] * g_phi[:, None])


def eval_gradient_S(shape: SpheroidShape, density, u, v, phi, region, direction=None,
                    chunk: int = 512) -> np.ndarray:
    """Gradient of the single layer of a modified-basis density.

    Parameters
    ----------
    density : array or HarmonicCoeffs
        Modified-basis coefficients ``sigma~``.
    u, v, phi : array_like
        Targets in the source's spheroidal coordinates.
    region : {'exterior', 'interior', 'avg'}
        Which expansion to use; on the surface ``avg`` gives the principal
        value.
    direction : array_like, optional
        World-frame direction(s); when given, the directional derivative is
        returned instead of the gradient vector.
    """
    coeffs = np.asarray(getattr(density, "coeffs", density))
    p = coeffs.shape[-2] - 1
    u, v, phi = np.broadcast_arrays(*(np.atleast_1d(np.asarray(t, dtype=float)) for t in (u, v, phi)))
    u, v, phi = u.ravel(), v.ravel(), phi.ravel()
    if region == "avg":
        ge = eval_gradient_S(shape, coeffs, u, v, phi, "exterior")
        gi = eval_gradient_S(shape, coeffs, u, v, phi, "interior")
        grad = 0.5 * (ge + gi)
    else:
        exp = solid_expansion(shape, Operator.SINGLE, coeffs, region, p)
        grad = np.empty((u.size, 3))
        for s in range(0, u.size, chunk):
            G = gradient_basis(shape, p, exp.region, u[s:s + chunk], v[s:s + chunk], phi[s:s + chunk])
            grad[s:s + chunk] = np.einsum("tknm,nm->tk", G, exp.coeffs).real
    if direction is None:
        return grad
    d = np.broadcast_to(np.asarray(direction, dtype=float), grad.shape)
    return np.sum(grad * d, axis=-1)


# ----------------------------------------------------------------------
# world-coordinate conveniences

def _split_regions(shape, x, on_surface_tol=1e-13):
    u, v, phi = shape.spheroidal_coords(x, allow_focal=True)
    inside = u < shape.u0 * (1.0 - on_surface_tol)
    return u, v, phi, inside


def potential_at_points(shape: SpheroidShape, p: int, operator, values: np.ndarray, x) -> np.ndarray:
    """``S`` or ``D`` of grid samples at world points, inside or outside."""
    operator = Operator(operator)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c = density_coeffs(shape, p, operator, values)
    u, v, phi, inside = _split_regions(shape, x)
    out = np.empty(len(x))
    for region, sel in ((Region.EXTERIOR, ~inside), (Region.INTERIOR, inside)):
        if np.any(sel):
            exp = solid_expansion(shape, operator, c, region, p)
            uu = np.maximum(u[sel], shape.u0) if region is Region.EXTERIOR else u[sel]
            out[sel] = eval_expansion(exp, uu, v[sel], phi[sel])
    return out


def gradient_S_at_points(shape: SpheroidShape, p: int, values: np.ndarray, x) -> np.ndarray:
    """World-frame gradient of ``S`` of grid samples at off-surface points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c = density_coeffs(shape, p, Operator.SINGLE, values)
    u, v, phi, inside = _split_regions(shape, x)
    out = np.empty((len(x), 3))
    for region, sel in ((Region.EXTERIOR, ~inside), (Region.INTERIOR, inside)):
        if np.any(sel):
            uu = np.maximum(u[sel], shape.u0) if region is Region.EXTERIOR else u[sel]
            out[sel] = eval_gradient_S(shape, c, uu, v[sel], phi[sel], region)
    return out
