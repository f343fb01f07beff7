"""Stokes single-layer velocity and pressure through Laplace layer potentials.

With the Stokeslet ``G_ij = (delta_ij / r + r_i r_j / r^3) / (8 pi mu)`` and
the Laplace single layer ``S[f] = int f / (4 pi r)``, the velocity of a
traction density ``sigma`` is

    u_k = (1 / 2 mu) { S[sigma_k] - sum_j x_j d_k S[sigma_j] + d_k S[y . sigma] }

and the pressure ``p = int r . sigma / (4 pi r^3) = -sum_j d_j S[sigma_j]``.
Each Laplace piece is evaluated by the multi-particle engine, so near
targets get analytic expansions.  The density ``y . sigma`` has one more
degree than ``sigma``; all scalar densities are therefore resampled to order
``p + 1`` before use.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    SuspensionProblem,
    eval_at_targets,
    eval_gradient_at_targets,
    smooth_quadrature_eval,
)
from .geometry import SpheroidShape, point_distance
from .harmonics import SurfaceGrid, resample, surface_grid

__all__ = [
    "VectorSurfaceField",
    "stokes_single_layer",
    "stokes_pressure",
    "stokeslet_quadrature",
    "mean_curvature",
    "interfacial_forcing",
]


@dataclass(frozen=True, eq=False)
class VectorSurfaceField:
    """Cartesian vector density on one particle grid, values ``(p+1, 2p, 3)``."""

    grid: SurfaceGrid
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.values) != self.grid.shape + (3,):
            raise ValueError("vector field does not match the grid")

    def component(self, k: int) -> np.ndarray:
        return self.values[..., k]


def _as_array(problem: SuspensionProblem, densities) -> np.ndarray:
    if isinstance(densities, (list, tuple)) and densities and isinstance(densities[0], VectorSurfaceField):
        densities = np.stack([d.values for d in densities])
    densities = np.asarray(densities, dtype=float)
    want = problem.field_shape + (3,)
    if densities.shape != want:
        raise ValueError(f"vector densities shape {densities.shape} != {want}")
    return densities


def _upsampled(problem: SuspensionProblem) -> SuspensionProblem:
    key = "stokes_up"
    if key not in problem._cache:
        problem._cache[key] = SuspensionProblem(problem.shapes, problem.p + 1, problem.eta,
                                                problem.allow_overlap, problem.cache_bytes)
    return problem._cache[key]


def _lift(problem, densities):
    """Vector density at order p+1 plus the scalar y . sigma there."""
    up = _upsampled(problem)
    sig = np.moveaxis(resample(np.moveaxis(densities, -1, -3), problem.p, up.p), -3, -1)
    ydot = np.einsum("mjkc,mjkc->mjk", up.points, sig)
    return up, sig, ydot


def stokeslet_quadrature(problem: SuspensionProblem, densities, targets, mu: float = 1.0,
                         upsample: bool = True) -> np.ndarray:
    """Direct smooth quadrature of the Stokeslet (no near-field correction)."""
    densities = _as_array(problem, densities)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if upsample:
        prob, sig, _ = _lift(problem, densities)
    else:
        prob, sig = problem, densities
    out = np.zeros((len(targets), 3))
    for i in range(prob.M):
        out += smooth_quadrature_eval(prob.points[i], None, prob.weights[i], "stokeslet", sig[i], targets)
    return out / mu


def stokes_single_layer(problem: SuspensionProblem, densities, targets, mu: float = 1.0,
                        far_path: str = "laplace") -> np.ndarray:
    """Velocity ``(T, 3)`` of Stokes single-layer densities at exterior targets.

    ``far_path='stokeslet'`` replaces the Laplace reduction by direct
    Stokeslet quadrature for particle-target pairs in the far field.
    """
    if mu <= 0:
        raise ValueError("viscosity must be positive")
    if far_path not in ("laplace", "stokeslet"):
        raise ValueError("far_path must be 'laplace' or 'stokeslet'")
    densities = _as_array(problem, densities)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    up, sig, ydot = _lift(problem, densities)
    if far_path == "stokeslet":
        return _mixed_path(up, sig, ydot, targets, mu)
    return _reduction(up, sig, ydot, targets) / mu


def _reduction(up, sig, ydot, targets):
    S = np.stack([eval_at_targets(up, "single", sig[..., k], targets) for k in range(3)], axis=-1)
    G = np.stack([eval_gradient_at_targets(up, sig[..., j], targets) for j in range(3)], axis=1)  # [t, j, k]
    Gy = eval_gradient_at_targets(up, ydot, targets)
    return 0.5 * (S - np.einsum("tj,tjk->tk", targets, G) + Gy)


def _mixed_path(up, sig, ydot, targets, mu):
    out = np.zeros((len(targets), 3))
    for i, src in enumerate(up.shapes):
        d = point_distance(src, targets)
        near = d < up.eta * src.diam
        if np.any(~near):
            out[~near] += smooth_quadrature_eval(up.points[i], None, up.weights[i], "stokeslet",
                                                 sig[i], targets[~near])
        if np.any(near):
            single = SuspensionProblem([src], up.p, up.eta)
            out[near] += _reduction(single, sig[i:i + 1], ydot[i:i + 1], targets[near])
    return out / mu


def stokes_pressure(problem: SuspensionProblem, densities, targets) -> np.ndarray:
    """Pressure of Stokes single-layer densities: ``-sum_j d_j S[sigma_j]``."""
    densities = _as_array(problem, densities)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    up, sig, _ = _lift(problem, densities)
    out = np.zeros(len(targets))
    for j in range(3):
        out -= eval_gradient_at_targets(up, sig[..., j], targets)[:, j]
    return out


def mean_curvature(shape: SpheroidShape, v, convention: str = "average") -> np.ndarray:
    """Mean curvature of the spheroid surface at angular coordinate ``v``.

    Principal curvatures of the surface of revolution ``rho = A sqrt(1-v^2)``,
    ``z = C v``.  ``convention='average'`` returns their mean (``1/r`` on a
    sphere), ``'sum'`` their sum.
    """
    v = np.asarray(v, dtype=float)
    A, C = shape.A, shape.C
    q = A * A * v * v + C * C * (1.0 - v * v)
    k_meridian = A * C / q ** 1.5
    k_parallel = C / (A * np.sqrt(q))
    if convention == "average":
        return 0.5 * (k_meridian + k_parallel)
    if convention == "sum":
        return k_meridian + k_parallel
    raise ValueError("convention must be 'average' or 'sum'")


def interfacial_forcing(shape: SpheroidShape, p: int, convention: str = "average") -> VectorSurfaceField:
    """Curvature forcing ``H n`` sampled on the order-``p`` grid."""
    g = surface_grid(p)
    V, PH = g.mesh()
    H = mean_curvature(shape, V, convention)
    return VectorSurfaceField(g, H[..., None] * shape.normals(V, PH))
