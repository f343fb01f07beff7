"""Runtime property suites.

Each check is a plain function returning ``(passed, detail)``; the suites
use fixed seeds so repeated runs are identical.  :func:`run_selftest` runs
them all and is what the ``selftest`` CLI subcommand calls.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .engine import SuspensionProblem, matvec
from .geometry import Kind, SpheroidShape
from .harmonics import degree_mask, forward, inverse, surface_grid
from .laplace import Operator, Region, apply_on_surface, density_coeffs, expansion_basis, multipliers, potential_at_points
from .specfun import ArgKind, factorial_ratio, legendre_table
from .solver import gmres

__all__ = ["CheckResult", "CHECKS", "run_selftest"]

_SEED = 20240611


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _shapes():
    return [SpheroidShape(Kind.PROLATE, u0, a) for u0 in (1.05, 1.5, 3.0) for a in (0.5, 2.0)] + \
           [SpheroidShape(Kind.OBLATE, u0, a) for u0 in (0.2, 1.0, 3.0) for a in (0.5, 2.0)]


def _posed(rng, kind, u0, a):
    q = rng.normal(size=4)
    return SpheroidShape(kind, u0, a, tuple(rng.normal(size=3)), tuple(q / np.linalg.norm(q)))


def _random_coeffs(rng, p):
    """Coefficients of a random real band-limited field.

    Orders ``|m| = p`` are left out: ``sin(p phi)`` vanishes on the grid.
    """
    c = (rng.normal(size=(p + 1, 2 * p + 1)) + 1j * rng.normal(size=(p + 1, 2 * p + 1))) * degree_mask(p)
    c[:, 0] = c[:, -1] = 0
    m = np.arange(-p, p + 1)
    c[:, p] = c[:, p].real
    c[:, :p] = ((-1.0) ** m[:p]) * np.conj(c[:, :p:-1])
    return c


def check_coordinate_roundtrip():
    rng = np.random.default_rng(_SEED)
    worst = 0.0
    for kind, u0 in ((Kind.PROLATE, 1.3), (Kind.OBLATE, 0.7)):
        s = _posed(rng, kind, u0, 1.5)
        x = s.center_array + 4.0 * rng.normal(size=(10_000, 3))
        u, v, phi = s.spheroidal_coords(x)
        back = s.points(u, v, phi)
        worst = max(worst, float(np.max(np.linalg.norm(back - x, axis=1) / np.linalg.norm(x - s.center_array, axis=1))))
    return worst < 1e-12, f"max relative roundtrip error {worst:.2e}"


def check_transform_roundtrip():
    rng = np.random.default_rng(_SEED + 1)
    worst = 0.0
    for p in (4, 11, 24):
        c = _random_coeffs(rng, p)
        vals = inverse(c, p)
        worst = max(worst, float(np.max(np.abs(vals.imag))), float(np.max(np.abs(forward(vals.real, p) - c))))
    return worst < 1e-12, f"max coefficient residual {worst:.2e}"


def check_parseval():
    rng = np.random.default_rng(_SEED + 2)
    p = 12
    c = _random_coeffs(rng, p)
    vals = inverse(c, p, real=True)
    g = surface_grid(p)
    quad = float(np.sum(g.quad_weights() * vals ** 2))
    spec = float(np.sum(np.abs(c) ** 2))
    err = abs(quad - spec) / spec
    return err < 1e-12, f"relative Parseval defect {err:.2e}"


def check_gauss_identity():
    worst = 0.0
    p = 8
    for s in _shapes():
        ones = np.ones(surface_grid(p).shape)
        on = apply_on_surface(s, p, Operator.DOUBLE, ones)
        worst = max(worst, float(np.max(np.abs(on + 0.5))))
        x_out = np.array([[0.0, 0.0, 1.5 * s.circumradius], [2.0 * s.circumradius, 0.0, 0.0]])
        x_in = np.array([[0.0, 0.0, 0.2 * s.C], [0.3 * s.A, 0.0, 0.0]])
        worst = max(worst, float(np.max(np.abs(potential_at_points(s, p, Operator.DOUBLE, ones, x_out)))))
        worst = max(worst, float(np.max(np.abs(potential_at_points(s, p, Operator.DOUBLE, ones, x_in) + 1))))
    return worst < 1e-12, f"max Gauss identity defect {worst:.2e} over {len(_shapes())} shapes"


def check_jump_conditions():
    worst = 0.0
    p = 10
    mask = degree_mask(p).astype(bool)
    for s in _shapes():
        dp, dm = (multipliers(s, p, Operator.DOUBLE, side).table for side in ("plus", "minus"))
        sp, sm = (multipliers(s, p, Operator.SPRIME, side).table for side in ("plus", "minus"))
        slp, slm = (multipliers(s, p, Operator.SINGLE, side).table for side in ("plus", "minus"))
        worst = max(worst, float(np.max(np.abs((dp - dm) - 1.0)[mask])),
                    float(np.max(np.abs((sp - sm) + 1.0)[mask])),
                    float(np.max(np.abs(slp - slm)[mask])))
    return worst < 1e-10, f"max coefficientwise jump residual {worst:.2e}"


def check_linearity():
    rng = np.random.default_rng(_SEED + 3)
    p = 8
    shapes = [SpheroidShape(Kind.PROLATE, 1.4, 1.0), SpheroidShape(Kind.OBLATE, 0.8, 1.0, (2.6, 0.4, 0.2))]
    prob = SuspensionProblem(shapes, p=p)
    a, b = 0.7, -1.9
    m1, m2 = rng.normal(size=prob.field_shape), rng.normal(size=prob.field_shape)
    worst = 0.0
    for op in Operator:
        lhs = matvec(prob, op, a * m1 + b * m2)
        rhs = a * matvec(prob, op, m1) + b * matvec(prob, op, m2)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
    return worst < 1e-13, f"max relative linearity defect {worst:.2e}"


def check_harmonicity():
    """Seven-point stencil of layer potentials at exterior points.

    The stencil residual of a harmonic function is pure truncation error, so
    halving ``h`` from ``2e-3 diam`` must shrink it by about four.
    """
    rng = np.random.default_rng(_SEED + 4)
    p = 10
    worst = 0.0
    for s in (SpheroidShape(Kind.PROLATE, 1.25, 1.0), SpheroidShape(Kind.OBLATE, 0.6, 1.0)):
        dens = rng.normal(size=surface_grid(p).shape)
        d = rng.normal(size=(5, 3))
        x = d / np.linalg.norm(d, axis=1)[:, None] * (s.circumradius + 0.1 * s.diam)
        for op in (Operator.SINGLE, Operator.DOUBLE):
            lap = []
            for h in (2e-3 * s.diam, 1e-3 * s.diam):
                st = np.concatenate([x] + [x + h * e for e in np.eye(3)] + [x - h * e for e in np.eye(3)])
                u = potential_at_points(s, p, op, dens, st).reshape(7, -1)
                lap.append(np.abs(u[1:].sum(axis=0) - 6 * u[0]) / h ** 2)
            floor = 1e-6 * np.max(np.abs(u[0])) / s.diam ** 2
            worst = max(worst, float(np.max((lap[1] - floor) / lap[0])))
    return worst < 0.3, f"max residual ratio under step halving {worst:.3f} (0.25 expected)"


def check_oblate_reality():
    rng = np.random.default_rng(_SEED + 5)
    p = 8
    worst = 0.0
    for u0 in (0.2, 1.0, 3.0):
        s = SpheroidShape(Kind.OBLATE, u0, 1.0)
        dens = rng.normal(size=surface_grid(p).shape)
        d = rng.normal(size=(8, 3))
        x = d / np.linalg.norm(d, axis=1)[:, None] * 2.0 * s.circumradius
        u, v, phi = s.spheroidal_coords(x)
        for op in (Operator.SINGLE, Operator.DOUBLE):
            c = multipliers(s, p, op, "plus").table * density_coeffs(s, p, op, dens)
            vals = np.einsum("tnm,nm->t", expansion_basis(s, p, Region.EXTERIOR, u, v, phi), c)
            worst = max(worst, float(np.max(np.abs(vals.imag)) / np.max(np.abs(vals.real))))
    return worst < 1e-12, f"max relative imaginary residue {worst:.2e}"


def check_wronskian():
    """``P Q' - P' Q = (-1)^m (n+m)!/(n-m)! / (1 - x^2)`` for ``m <= n <= 48``."""
    worst = 0.0
    N = 48
    r = factorial_ratio(N)
    sign = (-1.0) ** np.arange(N + 1)[None, :]
    valid = np.tri(N + 1, dtype=bool)
    for kind, args in ((ArgKind.REAL, (1.001, 1.01, 1.1, 2.0, 10.0)), (ArgKind.IMAG, (0.01, 0.1, 1.0, 10.0))):
        for u in args:
            t = legendre_table(kind, u, N)
            x = t.x
            rhs = (sign * r / (1.0 - x * x))[valid]
            w = (t.P * t.dQ - t.dP * t.Q)[valid]
            resid = np.abs(w - rhs) / np.abs(rhs)
            worst = max(worst, float(np.max(resid)) if np.all(np.isfinite(resid)) else np.inf)
    return worst < 1e-10, f"max relative Wronskian residual {worst:.2e}"


def check_gmres_monotone():
    rng = np.random.default_rng(_SEED + 6)
    A = np.eye(60) + 0.3 * rng.normal(size=(60, 60)) / np.sqrt(60)
    res = gmres(lambda x: A @ x, rng.normal(size=60), tol=1e-12)
    r = np.array(res.residuals)
    ok = res.converged and bool(np.all(np.diff(r) <= 1e-15))
    return ok, f"{res.iterations} iterations, final residual {r[-1]:.2e}"


CHECKS: dict[str, Callable[[], tuple]] = {
    "coordinate_roundtrip": check_coordinate_roundtrip,
    "transform_roundtrip": check_transform_roundtrip,
    "parseval": check_parseval,
    "gauss_identity": check_gauss_identity,
    "jump_conditions": check_jump_conditions,
    "linearity": check_linearity,
    "harmonicity": check_harmonicity,
    "oblate_reality": check_oblate_reality,
    "wronskian": check_wronskian,
    "gmres_monotone": check_gmres_monotone,
}


def run_selftest(names=None) -> list[CheckResult]:
    out = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[name]()
        except Exception as exc:  # a crash is a failed check, not an aborted suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
