import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spheroid_bie.engine import SuspensionProblem
from spheroid_bie.errors import GMRESStagnation
from spheroid_bie.experiments import TABLE3_REFERENCE, _exterior_mask, lattice_configuration, relative_error, shell_targets
from spheroid_bie.geometry import SpheroidShape, surface_area
from spheroid_bie.solver import (
    BVPSpec,
    Completion,
    GMRESOptions,
    assemble_dirichlet_apply,
    condition_number,
    condition_study,
    dense_self_operator,
    evaluate_solution,
    gmres,
    heuristic_eta,
    reference_gradient,
    reference_potential,
    solve,
    unit_major_area,
)


def exterior_shells(shapes, frac=0.3):
    x = np.concatenate([shell_targets(s, frac * s.diam, 6) for s in shapes])
    return x[_exterior_mask(shapes, x)]


def two_particle_problem(p=12):
    s1 = SpheroidShape("prolate", 1.3, 1.0, (0.0, 0.0, 0.0))
    s2 = SpheroidShape("oblate", 0.6, 0.8, (2.4, 0.3, 0.1))
    sources = [((0.1, 0.0, 0.2), 1.0), ((-0.1, 0.05, -0.3), -0.4), ((2.4, 0.3, 0.0), 0.7)]
    return [s1, s2], sources


def test_reference_potential_example():
    spec = BVPSpec("dirichlet", [((0.0, 0.0, 0.0), 1.0)])
    assert reference_potential(spec, [[2.0, 0.0, 0.0]])[0] == pytest.approx(1 / (8 * math.pi))


def test_reference_gradient_matches_fd():
    spec = BVPSpec("dirichlet", [((0.0, 0.1, 0.0), 1.0), ((0.3, 0.0, 0.0), -2.0)])
    x = np.array([[1.0, 2.0, -1.0]])
    h = 1e-6
    fd = [(reference_potential(spec, x + h * e) - reference_potential(spec, x - h * e))[0] / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(reference_gradient(spec, x)[0], fd, rtol=1e-7)


def test_constant_density_without_and_with_completion():
    s = SpheroidShape("prolate", 1.5, 1.0, (0.2, 0.0, 0.0))
    prob = SuspensionProblem([s], p=10)
    ones = np.ones(prob.field_shape)
    # C_I applied to the nullspace vector: area / |x - c| on the surface
    spec = BVPSpec("dirichlet", [], "CI")
    out = assemble_dirichlet_apply(prob, spec)(ones.ravel()).reshape(prob.field_shape)
    want = surface_area(s) / np.linalg.norm(prob.points - np.array(s.center), axis=-1)
    # sigma/2 + D[sigma] annihilates the constant, leaving only the completion
    np.testing.assert_allclose(out, want, rtol=1e-10)
    x = np.array([[4.0, 1.0, 0.0]])
    from spheroid_bie.solver import BIESolution
    u = evaluate_solution(prob, spec, BIESolution(ones, 0, [1.0]), x)
    assert u[0] == pytest.approx(surface_area(s) / np.linalg.norm(x[0] - s.center), rel=1e-10)


@pytest.mark.parametrize("kind,R,family,want", [("prolate", 2.0, "S", 0.5), ("prolate", 8.0, "S", 4 / math.log(8)),
                                                ("oblate", 10.0, "CI", 0.06), ("oblate", 2.0, "S", 0.75),
                                                ("oblate", 5.0, "S", 1.0)])
def test_heuristic_eta_examples(kind, R, family, want):
    s = SpheroidShape.from_aspect_ratio(kind, R, 1.0)
    assert heuristic_eta(s, family) == pytest.approx(want, rel=1e-4)


def test_heuristic_ci_prolate_uses_area():
    s = SpheroidShape.from_aspect_ratio("prolate", 4.0, 1.0)
    assert heuristic_eta(s, "etaCI") == pytest.approx(0.25 / surface_area(s), rel=1e-12)
    with pytest.raises(ValueError):
        heuristic_eta(s, "xyz")


@pytest.mark.parametrize("kind", ["prolate", "oblate"])
@pytest.mark.parametrize("R", [1.0, 1.5, 6.0])
def test_unit_major_area(kind, R):
    s = SpheroidShape.from_aspect_ratio(kind, R, 1.0) if R > 1 else None
    if s is None:
        assert unit_major_area(kind, R) == pytest.approx(4 * math.pi)
    else:
        assert unit_major_area(kind, R) == pytest.approx(surface_area(s), rel=1e-12)


def test_gmres_matches_direct_solve():
    rng = np.random.default_rng(0)
    A = np.eye(40) + 0.4 * rng.normal(size=(40, 40)) / np.sqrt(40)
    b = rng.normal(size=40)
    res = gmres(lambda x: A @ x, b, tol=1e-13)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-11)
    assert np.all(np.diff(res.residuals) <= 1e-15)


def test_gmres_edge_cases():
    res = gmres(lambda x: x, np.zeros(5))
    assert res.converged and res.iterations == 0
    res = gmres(lambda x: 2 * x, np.ones(5))
    assert res.iterations == 1 and np.allclose(res.x, 0.5)
    rng = np.random.default_rng(1)
    A = rng.normal(size=(30, 30))
    res = gmres(lambda x: A @ x, rng.normal(size=30), tol=1e-14, max_iter=3)
    assert not res.converged and res.iterations == 3


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 30), seed=st.integers(0, 10_000))
def test_gmres_residuals_monotone_property(n, seed):
    rng = np.random.default_rng(seed)
    A = np.eye(n) + rng.normal(size=(n, n)) / np.sqrt(n)
    res = gmres(lambda x: A @ x, rng.normal(size=n), tol=1e-12)
    assert np.all(np.diff(res.residuals) <= 1e-14)


def test_stagnation_raises():
    shapes, sources = two_particle_problem()
    spec = BVPSpec("dirichlet", sources, gmres=GMRESOptions(tol=1e-14, max_iter=2))
    with pytest.raises(GMRESStagnation) as err:
        solve(SuspensionProblem(shapes, p=6), spec)
    assert len(err.value.residuals) == 3


def test_sources_must_be_inside():
    shapes, _ = two_particle_problem()
    with pytest.raises(ValueError):
        solve(SuspensionProblem(shapes, p=6), BVPSpec("dirichlet", [((10.0, 0, 0), 1.0)]))
    with pytest.raises(ValueError):
        BVPSpec("dirichlet", [((np.nan, 0, 0), 1.0)])
    with pytest.raises(ValueError):
        BVPSpec("robin", [])


def test_near_sphere_limit():
    s = SpheroidShape("prolate", 20.0, 0.05)
    spec = BVPSpec("dirichlet", [((0.1, 0.0, 0.05), 1.0), ((-0.2, 0.1, 0.0), -0.5)])
    prob = SuspensionProblem([s], p=16)
    sol = solve(prob, spec)
    x = shell_targets(s, 0.1 * s.diam, 8)
    assert relative_error(evaluate_solution(prob, spec, sol, x), reference_potential(spec, x)) < 1e-10


@pytest.mark.parametrize("completion", list(Completion))
def test_all_completions_solve_the_same_problem(completion):
    shapes, sources = two_particle_problem()
    spec = BVPSpec("dirichlet", sources, completion)
    prob = SuspensionProblem(shapes, p=16)
    sol = solve(prob, spec)
    x = exterior_shells(shapes)
    assert relative_error(evaluate_solution(prob, spec, sol, x), reference_potential(spec, x)) < 1e-6


def test_neumann_zero_data_gives_zero_density():
    shapes, _ = two_particle_problem()
    prob = SuspensionProblem(shapes, p=6)
    sol = solve(prob, BVPSpec("neumann", []))
    assert sol.iterations == 0 and np.all(sol.densities == 0)


def test_neumann_solution():
    shapes, sources = two_particle_problem()
    spec = BVPSpec("neumann", sources)
    x = exterior_shells(shapes)
    errs = []
    for p in (8, 16):
        prob = SuspensionProblem(shapes, p=p)
        sol = solve(prob, spec)
        errs.append(relative_error(evaluate_solution(prob, spec, sol, x), reference_potential(spec, x)))
    assert errs[1] < 1e-5 and errs[1] < 1e-2 * errs[0]


def test_dense_operator_matches_matvec():
    s = SpheroidShape.from_aspect_ratio("prolate", 3.0, 1.0)
    p = 6
    K0, C0 = dense_self_operator(s, p, "S")
    prob = SuspensionProblem([s], p=p)
    rng = np.random.default_rng(2)
    x = rng.normal(size=prob.field_shape)
    want = assemble_dirichlet_apply(prob, BVPSpec("dirichlet", [], "etaS", eta=0.7))(x.ravel())
    np.testing.assert_allclose((K0 + 0.7 * C0) @ x.ravel(), want, atol=1e-12)
    assert condition_number(np.eye(3)) == pytest.approx(1.0)


def test_condition_study_small():
    (row,) = condition_study("prolate", "S", [4.0], p=8)
    assert row.cond_star <= row.cond_unscaled * (1 + 1e-9)
    assert row.cond_star <= row.cond_heuristic * (1 + 1e-9)
    assert 0.1 < row.eta_star < 10


def test_table3_cell_small_aspect_ratio():
    shapes, sources = lattice_configuration(1.1, 2.0, seed=0)
    sol = solve(SuspensionProblem(shapes, p=16), BVPSpec("dirichlet", sources, "CI"))
    ref = TABLE3_REFERENCE[1.1]["CI"][0]
    assert abs(sol.iterations - ref) <= max(5, 0.25 * ref)


def test_reference_superposition():
    rng = np.random.default_rng(4)
    srcs = [(tuple(rng.normal(size=3)), float(rng.normal())) for _ in range(6)]
    x = rng.normal(size=(5, 3)) + 5
    total = reference_potential(BVPSpec("dirichlet", srcs), x)
    parts = sum(reference_potential(BVPSpec("dirichlet", [q]), x) for q in srcs)
    np.testing.assert_allclose(total, parts, rtol=1e-13)


def test_neumann_near_sphere_constant_data():
    # sphere: S'+[rho] = -rho for constant rho, so the density equals minus the data
    s = SpheroidShape("prolate", 1000.0, 1e-3)
    prob = SuspensionProblem([s], p=8)
    sol = solve(prob, BVPSpec("neumann", []), rhs=np.full(prob.field_shape, 2.0))
    assert np.max(np.abs(sol.densities + 2.0)) < 1e-6 * 2.0


def test_neumann_jump_residual():
    from spheroid_bie.solver import assemble_neumann_apply, boundary_data
    shapes, sources = two_particle_problem()
    spec = BVPSpec("neumann", sources)
    prob = SuspensionProblem(shapes, p=10)
    sol = solve(prob, spec)
    b = boundary_data(prob, spec).ravel()
    r = assemble_neumann_apply(prob, spec)(sol.densities.ravel()) - b
    assert np.linalg.norm(r) <= 10 * spec.gmres.tol * np.linalg.norm(b)
