"""Boundary integral formulations and their iterative solution.

Exterior Dirichlet problems use the completed double layer

    (1/2) sigma + D[sigma] + C[sigma] = f        on all surfaces,
    u = D[sigma] + C[sigma]                      off the surfaces,

with either the point-source completion
``C_I[sigma](x) = sum_i int sigma_i dS / |x - c_i|`` or a single layer
``C = S``, each optionally scaled by ``eta``.  Exterior Neumann problems use
``u = S[rho]`` with ``-(1/2) rho + S'[rho] = df/dn``.

Unknowns are density samples on the composite grid of all particles.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .engine import SuspensionProblem, eval_at_targets, matvec
from .errors import GMRESStagnation
from .geometry import Kind, SpheroidShape
from .harmonics import surface_grid
from .laplace import Operator, apply_on_surface

__all__ = [
    "BVPKind",
    "Completion",
    "PointSource",
    "GMRESOptions",
    "BVPSpec",
    "BIESolution",
    "GMRESResult",
    "gmres",
    "reference_potential",
    "reference_gradient",
    "heuristic_eta",
    "unit_major_area",
    "assemble_dirichlet_apply",
    "assemble_neumann_apply",
    "boundary_data",
    "solve",
    "evaluate_solution",
    "dense_self_operator",
    "condition_number",
    "condition_study",
]


class BVPKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class Completion(str, enum.Enum):
    CI = "CI"  # point sources at the centers
    ETA_CI = "etaCI"
    S = "S"  # single layer
    ETA_S = "etaS"

    @property
    def family(self) -> str:
        return "CI" if self in (Completion.CI, Completion.ETA_CI) else "S"

    @property
    def scaled(self) -> bool:
        return self in (Completion.ETA_CI, Completion.ETA_S)


@dataclass(frozen=True)
class PointSource:
    location: tuple
    strength: float


@dataclass(frozen=True)
class GMRESOptions:
    tol: float = 1e-10
    max_iter: int = 10 ** 6


@dataclass(frozen=True)
class BVPSpec:
    """Boundary value problem generated by interior point charges."""

    kind: BVPKind
    sources: tuple
    completion: Completion = Completion.CI
    eta: float | None = None  # None: use the heuristic for scaled completions
    gmres: GMRESOptions = GMRESOptions()

    def __post_init__(self):
        object.__setattr__(self, "kind", BVPKind(self.kind))
        object.__setattr__(self, "completion", Completion(self.completion))
        srcs = tuple(s if isinstance(s, PointSource) else PointSource(tuple(s[0]), float(s[1]))
                     for s in self.sources)
        for s in srcs:
            if not np.all(np.isfinite(s.location)) or not math.isfinite(s.strength):
                raise ValueError("point sources need finite locations and strengths")
        object.__setattr__(self, "sources", srcs)

    @property
    def locations(self) -> np.ndarray:
        return np.array([s.location for s in self.sources], dtype=float).reshape(-1, 3)

    @property
    def strengths(self) -> np.ndarray:
        return np.array([s.strength for s in self.sources], dtype=float)

    def check_sources(self, shapes: Sequence[SpheroidShape]):
        """Every source must sit strictly inside some particle."""
        if not self.sources:
            return
        inside = np.zeros(len(self.sources), dtype=bool)
        for s in shapes:
            inside |= s.implicit(self.locations) < 0
        if not inside.all():
            raise ValueError(f"point source {int(np.argmin(inside))} is not inside any particle")


@dataclass
class GMRESResult:
    x: np.ndarray
    iterations: int
    residuals: list
    converged: bool


@dataclass
class BIESolution:
    densities: np.ndarray
    iterations: int
    residuals: list
    charges: np.ndarray | None = None  # per-particle integrals of the density
    eta: np.ndarray | None = None


# ----------------------------------------------------------------------
# GMRES

def gmres(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, tol: float = 1e-10,
          max_iter: int | None = None) -> GMRESResult:
    """Full (unrestarted) GMRES with modified Gram-Schmidt and Givens rotations.

    Starts from zero and stops when ``|r_k| <= tol |b|``.  ``residuals``
    holds the relative residual norms, starting with 1.
    """
    b = np.asarray(b, dtype=float).ravel()
    n = b.size
    max_iter = n if max_iter is None else min(max_iter, n)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return GMRESResult(np.zeros(n), 0, [0.0], True)
    V = np.zeros((max_iter + 1, n))
    H = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = beta
    V[0] = b / beta
    residuals = [1.0]
    k = 0
    converged = False
    for k in range(1, max_iter + 1):
        j = k - 1
        w = np.asarray(apply(V[j]), dtype=float).ravel()
        for i in range(k):
            H[i, j] = w @ V[i]
            w -= H[i, j] * V[i]
        H[k, j] = np.linalg.norm(w)
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = math.hypot(H[j, j], H[k, j])
        cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (H[j, j] / denom, H[k, j] / denom)
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[k, j]
        H[k, j] = 0.0
        g[k] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[k]) / beta
        residuals.append(res)
        breakdown = H[j, j] == 0 or not np.isfinite(res)
        if res <= tol:
            converged = True
            break
        if breakdown:
            break
        hk = float(np.linalg.norm(w))
        if hk == 0.0:  # lucky breakdown: exact solution in the subspace
            converged = True
            break
        V[k] = w / hk
    y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
    x = V[:k].T @ y
    return GMRESResult(x, k, residuals, converged)


# ----------------------------------------------------------------------
# reference data

def reference_potential(spec: BVPSpec, targets) -> np.ndarray:
    """``f(x) = sum_j q_j / (4 pi |x - x_j|)``."""
    x = np.atleast_2d(np.asarray(targets, dtype=float))
    r = np.linalg.norm(x[:, None, :] - spec.locations[None], axis=-1)
    return (spec.strengths[None, :] / (4 * math.pi * r)).sum(axis=1)


def reference_gradient(spec: BVPSpec, targets) -> np.ndarray:
    """Gradient of :func:`reference_potential` (minus the electric field)."""
    x = np.atleast_2d(np.asarray(targets, dtype=float))
    d = x[:, None, :] - spec.locations[None]
    r = np.linalg.norm(d, axis=-1)
    return -(spec.strengths[None, :, None] * d / (4 * math.pi * r[..., None] ** 3)).sum(axis=1)


# ----------------------------------------------------------------------
# completion scaling

def unit_major_area(kind, R: float) -> float:
    """Surface area of a spheroid with major semi-axis 1 and aspect ratio R."""
    kind = Kind(kind)
    eps = 1.0 / R
    e = math.sqrt(max(1.0 - eps * eps, 0.0))
    if e < 1e-8:
        return 4 * math.pi
    if kind is Kind.PROLATE:
        return 2 * math.pi * eps * eps * (1 + math.asin(e) / (eps * e))
    return 2 * math.pi * (1 + eps * eps * math.atanh(e) / e)


def heuristic_eta(shape: SpheroidShape, family: str) -> float:
    """Completion scaling chosen from the particle aspect ratio."""
    R = shape.aspect_ratio
    eps = 1.0 / R
    fam = family.value if isinstance(family, Completion) else str(family)
    fam = {"etaCI": "CI", "etaS": "S"}.get(fam, fam)
    if fam == "CI":
        if shape.kind is Kind.OBLATE and R > 3:
            return 0.06
        return eps / unit_major_area(shape.kind, R)
    if fam == "S":
        if shape.kind is Kind.PROLATE:
            return 0.5 if R <= 3 else 1.0 / (2 * eps * math.log(1.0 / eps))
        return 1.0 / (4 * eps) + 0.25 if R <= 3 else 1.0
    raise ValueError(f"unknown completion family {family!r}")


def _etas(problem: SuspensionProblem, spec: BVPSpec) -> np.ndarray:
    if not spec.completion.scaled:
        return np.ones(problem.M)
    if spec.eta is not None:
        return np.full(problem.M, float(spec.eta))
    return np.array([heuristic_eta(s, spec.completion.family) for s in problem.shapes])


# ----------------------------------------------------------------------
# operators

def _ci_values(problem: SuspensionProblem, charges: np.ndarray, x: np.ndarray) -> np.ndarray:
    centers = np.array([s.center for s in problem.shapes])
    r = np.linalg.norm(x[..., None, :] - centers, axis=-1)
    return (charges / r).sum(axis=-1)


def assemble_dirichlet_apply(problem: SuspensionProblem, spec: BVPSpec) -> Callable:
    """Matrix-free ``sigma -> sigma/2 + D[sigma] + C[sigma]`` on flat grid vectors."""
    etas = _etas(problem, spec)
    shape = problem.field_shape
    pts = problem.points

    def apply(x: np.ndarray) -> np.ndarray:
        sig = np.asarray(x, dtype=float).reshape(shape)
        out = 0.5 * sig + matvec(problem, Operator.DOUBLE, sig)
        if spec.completion.family == "CI":
            out += _ci_values(problem, etas * problem.integrate(sig), pts)
        else:
            out += matvec(problem, Operator.SINGLE, etas[:, None, None] * sig)
        return out.ravel()

    return apply


def assemble_neumann_apply(problem: SuspensionProblem, spec: BVPSpec | None = None) -> Callable:
    """Matrix-free ``rho -> -rho/2 + S'[rho]`` on flat grid vectors."""
    shape = problem.field_shape

    def apply(x: np.ndarray) -> np.ndarray:
        rho = np.asarray(x, dtype=float).reshape(shape)
        return (-0.5 * rho + matvec(problem, Operator.SPRIME, rho)).ravel()

    return apply


def boundary_data(problem: SuspensionProblem, spec: BVPSpec) -> np.ndarray:
    """Right-hand side on the composite grid."""
    pts = problem.points.reshape(-1, 3)
    if spec.kind is BVPKind.DIRICHLET:
        f = reference_potential(spec, pts)
    else:
        f = np.einsum("tk,tk->t", reference_gradient(spec, pts), problem.normals.reshape(-1, 3))
    return f.reshape(problem.field_shape)


def solve(problem: SuspensionProblem, spec: BVPSpec, rhs: np.ndarray | None = None) -> BIESolution:
    """Solve the discretized boundary integral equation with GMRES.

    Raises
    ------
    GMRESStagnation
        If the tolerance is not met within the iteration cap.
    """
    spec.check_sources(problem.shapes)
    b = boundary_data(problem, spec) if rhs is None else np.asarray(rhs, dtype=float)
    if spec.kind is BVPKind.DIRICHLET:
        apply = assemble_dirichlet_apply(problem, spec)
    else:
        apply = assemble_neumann_apply(problem, spec)
    res = gmres(apply, b.ravel(), tol=spec.gmres.tol, max_iter=spec.gmres.max_iter)
    if not res.converged:
        raise GMRESStagnation(
            f"GMRES stopped at relative residual {res.residuals[-1]:.3e} after {res.iterations} iterations",
            res.residuals,
        )
    dens = res.x.reshape(problem.field_shape)
    return BIESolution(dens, res.iterations, res.residuals, problem.integrate(dens), _etas(problem, spec))


def evaluate_solution(problem: SuspensionProblem, spec: BVPSpec, sol: BIESolution, targets) -> np.ndarray:
    """Potential represented by a solved density at exterior targets."""
    x = np.atleast_2d(np.asarray(targets, dtype=float))
    if spec.kind is BVPKind.NEUMANN:
        return eval_at_targets(problem, Operator.SINGLE, sol.densities, x)
    u = eval_at_targets(problem, Operator.DOUBLE, sol.densities, x)
    etas = _etas(problem, spec)
    if spec.completion.family == "CI":
        u += _ci_values(problem, etas * problem.integrate(sol.densities), x)
    else:
        u += eval_at_targets(problem, Operator.SINGLE, etas[:, None, None] * sol.densities, x)
    return u


# ----------------------------------------------------------------------
# conditioning of the single-particle operator

def _self_dense(shape: SpheroidShape, p: int, operator: Operator) -> np.ndarray:
    g = surface_grid(p)
    basis = np.eye(g.size).reshape((g.size,) + g.shape)
    return apply_on_surface(shape, p, operator, basis).reshape(g.size, g.size).T


def dense_self_operator(shape: SpheroidShape, p: int, family: str):
    """Dense ``(K0, C0)`` with ``K(eta) = K0 + eta C0`` for one particle.

    ``K0 = I/2 + D`` and ``C0`` is the unscaled completion (``C_I`` or ``S``).
    """
    g = surface_grid(p)
    K0 = 0.5 * np.eye(g.size) + _self_dense(shape, p, Operator.DOUBLE)
    fam = {"etaCI": "CI", "etaS": "S"}.get(str(getattr(family, "value", family)), str(getattr(family, "value", family)))
    if fam == "CI":
        V, PH = g.mesh()
        x = shape.points(shape.u0, V, PH).reshape(-1, 3)
        w = (g.quad_weights() * shape.dS_weight(V)).ravel()
        C0 = np.outer(1.0 / np.linalg.norm(x - shape.center_array, axis=1), w)
    elif fam == "S":
        C0 = _self_dense(shape, p, Operator.SINGLE)
    else:
        raise ValueError(f"unknown completion family {family!r}")
    return K0, C0


def condition_number(A: np.ndarray) -> float:
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1])


def minimize_condition(K0: np.ndarray, C0: np.ndarray, lo: float = 1e-4, hi: float = 1e4,
                       n_scan: int = 33) -> tuple[float, float]:
    """``eta > 0`` minimizing ``cond(K0 + eta C0)``.

    A log-spaced scan brackets the minimum; a bounded Brent search
    (golden section with parabolic steps) in ``log eta`` refines it.
    """
    f = lambda t: math.log(condition_number(K0 + math.exp(t) * C0))
    ts = np.linspace(math.log(lo), math.log(hi), n_scan)
    vals = np.array([f(t) for t in ts])
    i = int(np.argmin(vals))
    if i == 0 or i == n_scan - 1:
        return float(math.exp(ts[i])), float(math.exp(vals[i]))
    res = optimize.minimize_scalar(f, bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                                   options={"xatol": 1e-4})
    return float(math.exp(res.x)), float(math.exp(res.fun))


@dataclass
class ConditionRow:
    R: float
    eta_star: float
    cond_star: float
    cond_unscaled: float
    heuristic_eta: float
    cond_heuristic: float


def condition_study(kind, family: str, R_sweep: Sequence[float], p: int = 16) -> list[ConditionRow]:
    """Condition numbers of the completed operator on one particle (major semi-axis 1)."""
    rows = []
    for R in R_sweep:
        shape = SpheroidShape.from_aspect_ratio(kind, R, 1.0)
        K0, C0 = dense_self_operator(shape, p, family)
        eta_star, cond_star = minimize_condition(K0, C0)
        h = heuristic_eta(shape, family)
        rows.append(ConditionRow(float(R), eta_star, cond_star, condition_number(K0 + C0), h,
                                 condition_number(K0 + h * C0)))
    return rows
