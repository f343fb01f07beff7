"""Reproducible numerical experiments built on the solver.

Every randomized fixture draws from a ``numpy.random.Generator`` seeded by
the caller.  Relative errors on a target set are ``max |u - f| / max |f|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .engine import SuspensionProblem
from .errors import TargetInsideParticle
from .geometry import Kind, SpheroidShape, point_distance
from .harmonics import surface_grid
from .solver import BVPSpec, Completion, evaluate_solution, reference_potential, solve
from .stokes import interfacial_forcing, stokes_pressure, stokes_single_layer

__all__ = [
    "random_orientation",
    "random_charges",
    "shell_targets",
    "relative_error",
    "prolate_trio_configuration",
    "mixed_trio_configuration",
    "convergence_study",
    "stress_study",
    "lattice_configuration",
    "lattice_plane_error",
    "gmres_table",
    "TABLE3_REFERENCE",
    "stokes_scene",
]

# Iteration counts from the published table at p = 16, rows R, columns d = 2, 1, 0.01.
TABLE3_REFERENCE = {
    1.1: {"CI": (14, 15, 36), "etaCI": (13, 14, 33), "S": (10, 11, 33), "etaS": (10, 12, 34)},
    2.0: {"CI": (19, 19, 39), "etaCI": (17, 17, 35), "S": (12, 13, 35), "etaS": (14, 16, 37)},
    4.0: {"CI": (27, 28, 49), "etaCI": (26, 27, 51), "S": (16, 18, 39), "etaS": (15, 17, 38)},
    8.0: {"CI": (44, 45, 65), "etaCI": (42, 45, 68), "S": (23, 25, 51), "etaS": (20, 21, 45)},
    16.0: {"CI": (69, 75, 107), "etaCI": (67, 72, 115), "S": (31, 34, 68), "etaS": (24, 26, 52)},
}
TABLE3_GAPS = (2.0, 1.0, 0.01)


def random_orientation(rng: np.random.Generator) -> tuple:
    """Uniformly random unit quaternion ``(w, x, y, z)``."""
    x, y, z, w = Rotation.random(random_state=rng).as_quat()
    return (float(w), float(x), float(y), float(z))


def random_charges(rng: np.random.Generator, shape: SpheroidShape, n: int,
                   spread: float = 0.2, strength=(-0.5, 0.5)) -> list:
    """``n`` charges uniformly inside the spheroid scaled by ``spread`` about its center."""
    out = []
    while len(out) < n:
        y = rng.uniform(-1.0, 1.0, 3)
        if y @ y >= 1.0:
            continue
        body = spread * y * np.array([shape.A, shape.A, shape.C])
        loc = shape.to_world(body)
        out.append((tuple(float(t) for t in loc), float(rng.uniform(*strength))))
    return out


def shell_targets(shape: SpheroidShape, distance: float, order: int = 8) -> np.ndarray:
    """Grid points of order ``order`` pushed out along the normal by ``distance``.

    On a convex surface the offset points are exactly ``distance`` away.
    """
    g = surface_grid(order)
    V, PH = g.mesh()
    x = shape.points(shape.u0, V, PH) + distance * shape.normals(V, PH)
    return x.reshape(-1, 3)


def relative_error(u: np.ndarray, f: np.ndarray) -> float:
    return float(np.max(np.abs(u - f)) / np.max(np.abs(f)))


# ----------------------------------------------------------------------
# three-particle configurations

def prolate_trio_configuration(seed: int = 0, charges_per_particle: int = 2):
    """Three prolates (``u0 = 1.1, 1.2, 1.3``) with random poses and interior charges."""
    rng = np.random.default_rng(seed)
    centers = [(0.0, 0.0, 0.0), (5.0, 0.0, 0.0), (3.2, 3.2, 3.2)]
    shapes = [SpheroidShape(Kind.PROLATE, u0, 1.0, c, random_orientation(rng))
              for u0, c in zip((1.1, 1.2, 1.3), centers)]
    sources = [q for s in shapes for q in random_charges(rng, s, charges_per_particle)]
    return shapes, sources


def mixed_trio_configuration(seed: int = 0, charges_per_particle: int = 2):
    """Two oblates and one prolate with random poses and interior charges."""
    rng = np.random.default_rng(seed)
    spec = [(Kind.OBLATE, 1.1, (0.0, 0.0, 0.0)), (Kind.PROLATE, 1.2, (5.0, 0.0, 0.0)),
            (Kind.OBLATE, 1.3, (3.2, 3.2, 3.2))]
    shapes = [SpheroidShape(k, u0, 1.0, c, random_orientation(rng)) for k, u0, c in spec]
    sources = [q for s in shapes for q in random_charges(rng, s, charges_per_particle)]
    return shapes, sources


@dataclass
class ConvergenceRow:
    p: int
    k: int
    shell_distance: float
    max_rel_error: float
    iterations: int


def _exterior_mask(shapes, x):
    return np.all(np.stack([point_distance(s, x) for s in shapes]) > 0, axis=0)


def convergence_study(shapes: Sequence[SpheroidShape], sources, kind: str = "dirichlet",
                      p_list: Iterable[int] = (8, 16, 24, 32), shells: Iterable[int] = range(1, 7),
                      completion: str = "CI", shell_order: int = 8, relative_to_diam: bool = True):
    """Errors on shells ``10^-k`` (times each particle diameter) away from every surface.

    Orders are processed in ascending order; the result is a list of
    :class:`ConvergenceRow`.
    """
    spec = BVPSpec(kind, sources, completion)
    shells = list(shells)
    targets = {}
    for k in shells:
        pts = [shell_targets(s, 10.0 ** -k * (s.diam if relative_to_diam else 1.0), shell_order) for s in shapes]
        x = np.concatenate(pts)
        targets[k] = x[_exterior_mask(shapes, x)]
    rows = []
    for p in sorted(p_list):
        problem = SuspensionProblem(shapes, p=p)
        sol = solve(problem, spec)
        for k in shells:
            x = targets[k]
            u = evaluate_solution(problem, spec, sol, x)
            rows.append(ConvergenceRow(p, k, 10.0 ** -k, relative_error(u, reference_potential(spec, x)),
                                       sol.iterations))
    return rows


# ----------------------------------------------------------------------
# aspect-ratio stress test

@dataclass
class StressRow:
    R: float
    p: int
    max_rel_error: float
    iterations: int


def stress_study(R_list: Iterable[float] = (1.1, 2, 4, 8), p_list: Iterable[int] = (8, 16, 24, 32),
                 seed: int = 0, shell: float = 0.5, shell_order: int = 16, completion: str = "CI",
                 n_charges: int = 2):
    """Single prolate with major semi-axis 1; error on a shell ``shell`` away."""
    rows = []
    for R in R_list:
        rng = np.random.default_rng(seed)
        shape = SpheroidShape.from_aspect_ratio(Kind.PROLATE, R, 1.0)
        spec = BVPSpec("dirichlet", random_charges(rng, shape, n_charges), completion)
        x = shell_targets(shape, shell, shell_order)
        f = reference_potential(spec, x)
        for p in sorted(p_list):
            problem = SuspensionProblem([shape], p=p)
            sol = solve(problem, spec)
            rows.append(StressRow(float(R), p, relative_error(evaluate_solution(problem, spec, sol, x), f),
                                  sol.iterations))
    return rows


# ----------------------------------------------------------------------
# four-particle lattice

def lattice_configuration(R: float, d: float, seed: int = 0, charges_per_particle: int = 21,
                          major: float = 1.0):
    """Four upright prolates in a 2x2 lattice in the x-z plane.

    Neighbors are separated by a surface gap of ``d`` minor semi-axes, both
    side by side (along x) and tip to tip (along z).
    """
    rng = np.random.default_rng(seed)
    base = SpheroidShape.from_aspect_ratio(Kind.PROLATE, R, major)
    gap = d * base.A
    hx = base.A + 0.5 * gap
    hz = base.C + 0.5 * gap
    shapes = [base.moved(center=(i * hx, 0.0, j * hz)) for i in (-1, 1) for j in (-1, 1)]
    sources = [q for s in shapes for q in random_charges(rng, s, charges_per_particle)]
    return shapes, sources


@dataclass
class GMRESRow:
    R: float
    d: float
    completion: str
    iterations: int
    reference: int | None


def gmres_table(R_list: Iterable[float] = (1.1, 2, 4, 8), d_list: Iterable[float] = TABLE3_GAPS,
                completions: Iterable[str] = ("CI", "etaCI", "S", "etaS"), p: int = 16, seed: int = 0):
    """GMRES iteration counts for the completed double-layer system on the lattice."""
    rows = []
    d_list = list(d_list)
    for R in R_list:
        for comp in completions:
            for d in d_list:
                shapes, sources = lattice_configuration(R, d, seed)
                spec = BVPSpec("dirichlet", sources, Completion(comp))
                sol = solve(SuspensionProblem(shapes, p=p), spec)
                ref = TABLE3_REFERENCE.get(float(R), {}).get(Completion(comp).value)
                ref_val = ref[TABLE3_GAPS.index(d)] if ref is not None and d in TABLE3_GAPS else None
                rows.append(GMRESRow(float(R), float(d), Completion(comp).value, sol.iterations, ref_val))
    return rows


def lattice_plane_error(R: float, p: int, d: float = 1.0, n: int = 41, seed: int = 0,
                        completion: str = "CI"):
    """Absolute error of the lattice Dirichlet solution on the ``y = 0`` plane.

    Returns ``(X, Z, err)``; ``err`` is NaN inside particles.
    """
    shapes, sources = lattice_configuration(R, d, seed)
    spec = BVPSpec("dirichlet", sources, completion)
    problem = SuspensionProblem(shapes, p=p)
    sol = solve(problem, spec)
    ext = max(abs(s.center[0]) + s.A for s in shapes) + 0.5, max(abs(s.center[2]) + s.C for s in shapes) + 0.5
    X, Z = np.meshgrid(np.linspace(-ext[0], ext[0], n), np.linspace(-ext[1], ext[1], n), indexing="ij")
    x = np.stack([X.ravel(), np.zeros(X.size), Z.ravel()], axis=1)
    mask = _exterior_mask(shapes, x)
    err = np.full(X.size, np.nan)
    xe = x[mask]
    err[mask] = np.abs(evaluate_solution(problem, spec, sol, xe) - reference_potential(spec, xe))
    return X, Z, err.reshape(X.shape)


# ----------------------------------------------------------------------
# Stokes demonstration

def stokes_scene(shapes: Sequence[SpheroidShape], p: int = 16, n: int = 21, extent: float | None = None,
                 z: float = 0.0, mu: float = 1.0, convention: str = "average", scale: float = 1.0,
                 fd_step: float = 1e-3):
    """Velocity and pressure of curvature forcing sampled on a plane ``x3 = z``.

    Returns a dict of flat arrays: ``x``, ``y``, ``u`` (T, 3), ``pressure``,
    and ``divergence`` (central differences with step ``fd_step``).  Points
    inside or within ``2 fd_step`` of a particle are dropped.
    """
    problem = SuspensionProblem(shapes, p=p)
    dens = scale * np.stack([interfacial_forcing(s, p, convention).values for s in shapes])
    if extent is None:
        extent = max(np.max(np.abs(s.center_array[:2])) + s.circumradius for s in shapes) + 0.5
    X, Y = np.meshgrid(np.linspace(-extent, extent, n), np.linspace(-extent, extent, n), indexing="ij")
    x = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=1)
    clear = np.all(np.stack([point_distance(s, x) for s in shapes]) > 2 * fd_step, axis=0)
    x = x[clear]
    if len(x) == 0:
        raise TargetInsideParticle("no sample points outside the particles")
    u = stokes_single_layer(problem, dens, x, mu)
    pres = stokes_pressure(problem, dens, x)
    div = np.zeros(len(x))
    for k in range(3):
        e = np.zeros(3)
        e[k] = fd_step
        div += (stokes_single_layer(problem, dens, x + e, mu)[:, k]
                - stokes_single_layer(problem, dens, x - e, mu)[:, k]) / (2 * fd_step)
    return {"x": x[:, 0], "y": x[:, 1], "z": x[:, 2], "u": u, "pressure": pres, "divergence": div}
