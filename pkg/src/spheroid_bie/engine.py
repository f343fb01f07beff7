"""Multi-particle evaluation of Laplace layer potentials.

Every particle carries a density sampled on its own order-``p`` grid.
Interactions are split by distance: a source ``i`` treats another particle
(or a target point) as *far* when its distance to ``Gamma_i`` is at least
``eta * diam(Gamma_i)``.  Far interactions use the smooth product quadrature
of the source grid (direct summation); near ones use the analytic solid
expansions of :mod:`spheroid_bie.laplace`; self interactions use the
diagonal surface spectra.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import OverlapDetected, RegionMismatch, TargetInsideParticle
from .geometry import SpheroidShape, circumsphere_gap, pair_distance, point_distance
from .harmonics import forward, inverse, surface_grid
from .laplace import (
    Operator,
    Region,
    density_coeffs,
    expansion_basis,
    gradient_basis,
    multipliers,
)

__all__ = [
    "SuspensionProblem",
    "InteractionPlan",
    "plan_interactions",
    "kernel_matrix",
    "smooth_quadrature_eval",
    "matvec",
    "eval_at_targets",
    "eval_gradient_at_targets",
    "KERNELS",
]

FOUR_PI = 4.0 * math.pi
KERNELS = ("single", "double", "sprime", "grad_single", "stokeslet", "pressure")


@dataclass(frozen=True)
class InteractionPlan:
    """Near/far lists per source particle.

    ``near[i]`` holds target particles handled by expansions of source ``i``
    (excluding ``i`` itself), ``far[i]`` those handled by quadrature, and
    ``dist[i, j]`` is the surface gap divided by ``diam(Gamma_i)`` (a lower
    bound when the pair was screened out by circumspheres).
    """

    near: tuple
    far: tuple
    dist: np.ndarray


@dataclass(eq=False)
class SuspensionProblem:
    """Spheroids, discretization order and the near/far parameter ``eta``."""

    shapes: Sequence[SpheroidShape]
    p: int = 16
    eta: float = 1.0
    allow_overlap: bool = False
    cache_bytes: int = 768 * 2 ** 20
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.shapes = tuple(self.shapes)
        if not self.shapes:
            raise ValueError("a suspension needs at least one particle")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.p < 1:
            raise ValueError("order p must be positive")

    @property
    def M(self) -> int:
        return len(self.shapes)

    @property
    def grid(self):
        return surface_grid(self.p)

    @property
    def field_shape(self) -> tuple:
        return (self.M,) + self.grid.shape

    @cached_property
    def points(self) -> np.ndarray:
        V, PH = self.grid.mesh()
        return np.stack([s.points(s.u0, V, PH) for s in self.shapes])

    @cached_property
    def normals(self) -> np.ndarray:
        V, PH = self.grid.mesh()
        return np.stack([s.normals(V, PH) for s in self.shapes])

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights including the surface element."""
        V, _ = self.grid.mesh()
        q = self.grid.quad_weights()
        return np.stack([q * s.dS_weight(V) for s in self.shapes])

    @cached_property
    def plan(self) -> InteractionPlan:
        return plan_interactions(self)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Per-particle surface integrals of grid samples."""
        return np.sum(values * self.weights, axis=(-2, -1))


def plan_interactions(problem: SuspensionProblem) -> InteractionPlan:
    """Classify particle pairs as near or far.

    Pairs whose circumsphere gap is at least ``2 eta diam`` are far without
    refinement; others get an exact surface distance.

    Raises
    ------
    OverlapDetected
        When refined distances are non-positive (unless overlap is allowed).
    """
    M, eta = problem.M, problem.eta
    shapes = problem.shapes
    dist = np.full((M, M), np.inf)
    np.fill_diagonal(dist, 0.0)
    bad = []
    for i in range(M):
        for j in range(i + 1, M):
            lb = circumsphere_gap(shapes[i], shapes[j])
            dmax = max(shapes[i].diam, shapes[j].diam)
            if lb >= 2.0 * eta * dmax and lb > 0:
                d = lb
            else:
                d = pair_distance(shapes[i], shapes[j])
                if d <= 0:
                    bad.append((i, j))
            dist[i, j] = d / shapes[i].diam
            dist[j, i] = d / shapes[j].diam
    if bad and not problem.allow_overlap:
        raise OverlapDetected(bad)
    near, far = [], []
    for i in range(M):
        others = [j for j in range(M) if j != i]
        near.append(tuple(j for j in others if dist[i, j] < eta))
        far.append(tuple(j for j in others if dist[i, j] >= eta))
    return InteractionPlan(tuple(near), tuple(far), dist)


# ----------------------------------------------------------------------
# kernels

def kernel_matrix(kind: str, x, y, ny=None, nx=None) -> np.ndarray:
    """Kernel blocks between targets ``x (T, 3)`` and sources ``y (S, 3)``.

    Scalar kernels return ``(T, S)``; ``grad_single`` and ``pressure``
    return ``(T, S, 3)`` (contracted with a vector density for pressure);
    ``stokeslet`` returns ``(T, S, 3, 3)`` without the viscosity factor.
    """
    r = x[:, None, :] - y[None, :, :]
    r2 = np.einsum("tsk,tsk->ts", r, r)
    inv_r = 1.0 / np.sqrt(r2)
    if kind == "single":
        return inv_r / FOUR_PI
    inv_r3 = inv_r ** 3
    if kind == "double":
        return np.einsum("tsk,sk->ts", r, ny) * inv_r3 / FOUR_PI
    if kind == "sprime":
        return -np.einsum("tsk,tk->ts", r, nx) * inv_r3 / FOUR_PI
    if kind == "grad_single":
        return -r * (inv_r3 / FOUR_PI)[..., None]
    if kind == "pressure":
        return r * (inv_r3 / FOUR_PI)[..., None]
    if kind == "stokeslet":
        eye = np.eye(3)
        return (eye * inv_r[..., None, None] + r[..., :, None] * r[..., None, :] * inv_r3[..., None, None]) / (8 * math.pi)
    raise ValueError(f"unknown kernel {kind!r}; choose from {KERNELS}")


def smooth_quadrature_eval(points, normals, weights, kernel: str, density, targets,
                           target_normals=None, chunk: int = 512) -> np.ndarray:
    """Direct product-quadrature sum of a kernel against a density.

    ``points``, ``normals`` and ``weights`` describe the source grid (any
    leading shape, flattened); ``density`` matches ``weights`` (with a
    trailing 3 for vector kernels).  Targets are ``(T, 3)``.
    """
    y = np.asarray(points).reshape(-1, 3)
    ny = None if normals is None else np.asarray(normals).reshape(-1, 3)
    w = np.asarray(weights).ravel()
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    tn = None if target_normals is None else np.atleast_2d(target_normals)
    vector = kernel in ("stokeslet", "pressure")
    dens = np.asarray(density).reshape(-1, 3) if vector else np.asarray(density).ravel()
    wd = dens * (w[:, None] if vector else w)
    out_shape = {"grad_single": (3,), "stokeslet": (3,)}.get(kernel, ())
    out = np.empty((len(targets),) + out_shape)
    # keep kernel blocks around 64 MB
    chunk = max(1, min(chunk, 2_000_000 // (len(y) * (9 if kernel == "stokeslet" else 3))))
    for s in range(0, len(targets), chunk):
        xt = targets[s:s + chunk]
        K = kernel_matrix(kernel, xt, y, ny=ny, nx=None if tn is None else tn[s:s + chunk])
        if kernel in ("single", "double", "sprime"):
            out[s:s + chunk] = K @ wd
        elif kernel == "grad_single":
            out[s:s + chunk] = np.einsum("tsk,s->tk", K, wd)
        elif kernel == "pressure":
            out[s:s + chunk] = np.einsum("tsk,sk->t", K, wd)
        else:
            out[s:s + chunk] = np.einsum("tsij,sj->ti", K, wd)
    return out


# ----------------------------------------------------------------------
# matvec

def _self_apply(shape, p, operator: Operator, values):
    mult = multipliers(shape, p, operator, "avg").table
    c = density_coeffs(shape, p, operator, values)
    out = inverse(mult * c, p, real=True)
    if operator is Operator.SPRIME:
        out = out / shape.modified_weight(surface_grid(p).v)[:, None]
    return out


def _half(p):
    """Order weights for summing only ``m >= 0`` of a conjugate-symmetric table."""
    w = np.full(p + 1, 2.0)
    w[0] = 1.0
    return w


def _near_matrix(problem: SuspensionProblem, operator: Operator, i: int, j: int) -> np.ndarray:
    """``E[t, n, m>=0]`` mapping source-``i`` coefficients to values on ``j``."""
    key = ("near", operator, i, j)
    if key in problem._cache:
        return problem._cache[key]
    src = problem.shapes[i]
    p = problem.p
    x = problem.points[j].reshape(-1, 3)
    u, v, phi = src.spheroidal_coords(x)
    if np.any(u < src.u0):
        raise RegionMismatch(f"grid of particle {j} intersects particle {i}")
    if operator is Operator.SPRIME:
        mult = multipliers(src, p, Operator.SINGLE, "plus").table
        nrm = problem.normals[j].reshape(-1, 3)
        blocks = []
        for s in range(0, len(u), 256):
            G = gradient_basis(src, p, Region.EXTERIOR, u[s:s + 256], v[s:s + 256], phi[s:s + 256])
            blocks.append(np.einsum("tknm,tk->tnm", G[..., p:], nrm[s:s + 256]))
        E = np.concatenate(blocks)
    else:
        mult = multipliers(src, p, operator, "plus").table
        E = expansion_basis(src, p, Region.EXTERIOR, u, v, phi)[..., p:]
    E = E * (mult[:, p:] * _half(p))
    problem._cache[key] = E
    return E


def _far_matrix(problem: SuspensionProblem, operator: Operator, i: int, j: int):
    """Dense quadrature block from source ``i`` to targets on ``j`` (or None)."""
    key = ("far", operator, i, j)
    if key in problem._cache:
        return problem._cache[key]
    n = problem.grid.size
    used = problem._cache.get("_bytes", 0)
    if used + 8 * n * n > problem.cache_bytes:
        return None
    kern = {Operator.SINGLE: "single", Operator.DOUBLE: "double", Operator.SPRIME: "sprime"}[operator]
    K = kernel_matrix(kern, problem.points[j].reshape(-1, 3), problem.points[i].reshape(-1, 3),
                      ny=problem.normals[i].reshape(-1, 3), nx=problem.normals[j].reshape(-1, 3))
    K = K * problem.weights[i].ravel()[None, :]
    problem._cache[key] = K
    problem._cache["_bytes"] = used + K.nbytes
    return K


def matvec(problem: SuspensionProblem, operator, densities: np.ndarray) -> np.ndarray:
    """Apply ``S``, ``D`` or ``S'`` (principal value) from all surfaces to all surfaces.

    ``densities`` has shape ``(M, p+1, 2p)``; the result has the same shape.
    """
    operator = Operator(operator)
    densities = np.asarray(densities, dtype=float)
    if densities.shape != problem.field_shape:
        raise ValueError(f"densities shape {densities.shape} != {problem.field_shape}")
    p, M = problem.p, problem.M
    plan = problem.plan
    out = np.zeros_like(densities)
    kern = {Operator.SINGLE: "single", Operator.DOUBLE: "double", Operator.SPRIME: "sprime"}[operator]
    for i, src in enumerate(problem.shapes):
        out[i] += _self_apply(src, p, operator, densities[i])
        if plan.near[i]:
            c = density_coeffs(src, p, operator, densities[i])[:, p:]
            for j in plan.near[i]:
                E = _near_matrix(problem, operator, i, j)
                out[j] += np.einsum("tnm,nm->t", E, c).real.reshape(problem.grid.shape)
        for j in plan.far[i]:
            K = _far_matrix(problem, operator, i, j)
            if K is not None:
                out[j] += (K @ densities[i].ravel()).reshape(problem.grid.shape)
            else:
                out[j] += smooth_quadrature_eval(
                    problem.points[i], problem.normals[i], problem.weights[i], kern, densities[i],
                    problem.points[j].reshape(-1, 3), problem.normals[j].reshape(-1, 3),
                ).reshape(problem.grid.shape)
    return out


# ----------------------------------------------------------------------
# particle-to-target evaluation

def _classify(problem, targets, allow_interior):
    """Per particle: signed distances and a mask of targets inside it."""
    d = np.stack([point_distance(s, targets) for s in problem.shapes])
    inside = d < 0
    if not allow_interior and np.any(inside):
        k = np.argwhere(inside)[0]
        raise TargetInsideParticle(f"target {int(k[1])} lies inside particle {int(k[0])}")
    return d


def eval_at_targets(problem: SuspensionProblem, operator, densities: np.ndarray, targets,
                    allow_interior: bool = False) -> np.ndarray:
    """``S`` or ``D`` of all particle densities at arbitrary points.

    Each (particle, target) pair is classified separately: targets within
    ``eta * diam`` of a particle use its solid expansion (interior or
    exterior), the rest use smooth quadrature.
    """
    operator = Operator(operator)
    if operator is Operator.SPRIME:
        raise ValueError("use eval_gradient_at_targets for derivatives off the surface")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    densities = np.asarray(densities, dtype=float)
    d = _classify(problem, targets, allow_interior)
    p = problem.p
    out = np.zeros(len(targets))
    kern = operator.value
    for i, src in enumerate(problem.shapes):
        near = d[i] < problem.eta * src.diam
        far = ~near
        if np.any(far):
            out[far] += smooth_quadrature_eval(problem.points[i], problem.normals[i], problem.weights[i],
                                               kern, densities[i], targets[far])
        if np.any(near):
            c = density_coeffs(src, p, operator, densities[i])
            xs = targets[near]
            u, v, phi = src.spheroidal_coords(xs, allow_focal=True)
            inside = d[i][near] < 0
            vals = np.empty(len(xs))
            for region, sel in ((Region.EXTERIOR, ~inside), (Region.INTERIOR, inside)):
                if not np.any(sel):
                    continue
                side = "plus" if region is Region.EXTERIOR else "minus"
                coef = (multipliers(src, p, operator, side).table * c)[:, p:] * _half(p)
                uu = np.maximum(u[sel], src.u0) if region is Region.EXTERIOR else np.minimum(u[sel], src.u0)
                res = np.empty(int(sel.sum()))
                idx = np.flatnonzero(sel)
                for s in range(0, len(idx), 1024):
                    k = idx[s:s + 1024]
                    E = expansion_basis(src, p, region, uu[s:s + 1024], v[k], phi[k])[..., p:]
                    res[s:s + 1024] = np.einsum("tnm,nm->t", E, coef).real
                vals[sel] = res
            out[near] += vals
    return out


def eval_gradient_at_targets(problem: SuspensionProblem, densities: np.ndarray, targets,
                             allow_interior: bool = False) -> np.ndarray:
    """World-frame gradient of the single layer of all densities, ``(T, 3)``."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    densities = np.asarray(densities, dtype=float)
    d = _classify(problem, targets, allow_interior)
    p = problem.p
    out = np.zeros((len(targets), 3))
    for i, src in enumerate(problem.shapes):
        near = d[i] < problem.eta * src.diam
        far = ~near
        if np.any(far):
            out[far] += smooth_quadrature_eval(problem.points[i], problem.normals[i], problem.weights[i],
                                               "grad_single", densities[i], targets[far])
        if np.any(near):
            c = density_coeffs(src, p, Operator.SINGLE, densities[i])
            xs = targets[near]
            u, v, phi = src.spheroidal_coords(xs)
            inside = d[i][near] < 0
            vals = np.empty((len(xs), 3))
            for region, sel in ((Region.EXTERIOR, ~inside), (Region.INTERIOR, inside)):
                if not np.any(sel):
                    continue
                side = "plus" if region is Region.EXTERIOR else "minus"
                coef = (multipliers(src, p, Operator.SINGLE, side).table * c)[:, p:] * _half(p)
                uu = np.maximum(u[sel], src.u0) if region is Region.EXTERIOR else np.minimum(u[sel], src.u0)
                idx = np.flatnonzero(sel)
                res = np.empty((len(idx), 3))
                for s in range(0, len(idx), 256):
                    k = idx[s:s + 256]
                    G = gradient_basis(src, p, region, uu[s:s + 256], v[k], phi[k])[..., p:]
                    res[s:s + 256] = np.einsum("tknm,nm->tk", G, coef).real
                vals[sel] = res
            out[near] += vals
    return out
