import numpy as np
import pytest

from framefield import quartic, sdp, so3, varieties
from framefield.exceptions import DimensionMismatch, SolverFailure


def test_lift_octa_shapes():
    prob = sdp.lift_projection_octa(np.zeros(9))
    assert prob.n == 10 and prob.m == 16
    assert np.allclose(prob.C[1:, 1:], np.eye(9)) and np.allclose(prob.C[0], 0)
    assert sdp.lift_projection_odeco(np.zeros(15)).m == 28
    assert sdp.lift_projection_odeco(np.zeros(15)).n == 16
    with pytest.raises(DimensionMismatch):
        sdp.lift_projection_octa(np.zeros(15))


def test_problem_validation():
    with pytest.raises(ValueError):
        sdp.SdpProblem(np.ones((3, 3)), np.ones((1, 2, 2)), np.ones(1))
    with pytest.raises(ValueError):
        sdp.SdpProblem(np.triu(np.ones((3, 3))), np.eye(3)[None], np.ones(1))


def test_on_variety_query():
    sol = sdp.solve(sdp.lift_projection_octa(so3.Q0))
    assert sol.status == sdp.Status.OPTIMAL
    assert sol.primal_obj < 1e-9
    u = np.concatenate([[1.0], so3.Q0])
    assert np.abs(sol.X - np.outer(u, u)).max() < 1e-6
    assert np.allclose(sdp.rank1_extract(sol), so3.Q0, atol=1e-8)
    sol = sdp.solve(sdp.lift_projection_odeco(quartic.octa_to_odeco(so3.Q0)))
    assert sol.status == sdp.Status.OPTIMAL and sol.primal_obj < 1e-9


def test_min_eigenvalue_sdp(rng):
    for _ in range(5):
        M = rng.normal(size=(6, 6))
        C = M + M.T
        sol = sdp.solve(sdp.SdpProblem(C, np.eye(6)[None], np.array([1.0])))
        assert sol.status == sdp.Status.OPTIMAL
        assert abs(sol.primal_obj - np.linalg.eigvalsh(C)[0]) < 1e-8
        assert abs(sol.primal_obj - sol.dual_obj) <= 1e-10 * (1 + abs(sol.primal_obj)) + 1e-12


def test_zero_cost_feasibility():
    A = np.stack([np.diag([1.0, 0, 0]), np.diag([0, 1.0, 0])])
    sol = sdp.solve(sdp.SdpProblem(np.zeros((3, 3)), A, np.array([1.0, 2.0])))
    assert sol.status == sdp.Status.OPTIMAL
    assert abs(sol.primal_obj) < 1e-9


def test_dependent_constraints_dropped():
    A = np.stack([np.eye(3), 2 * np.eye(3)])
    with pytest.warns(UserWarning):
        A2, b2 = sdp.independent_constraints(A, np.array([1.0, 2.0]))
    assert len(A2) == 1


def test_random_octa_queries_certified(rng):
    y = rng.normal(size=(100, 9))
    probs = sdp.lift_projection_octa(y)
    sols = sdp.solve(probs)
    for sol in sols:
        assert sol.status == sdp.Status.OPTIMAL
        assert sol.eig_ratio < 1e-7
        w = np.linalg.eigvalsh(sol.X)
        assert w[0] >= -1e-9 * np.trace(sol.X)
        assert np.abs(np.einsum("kij,ij->k", probs.A, sol.X) - probs.b).max() <= 1e-8
        assert sol.dual_obj <= sol.primal_obj + 1e-9
        q = sdp.rank1_extract(sol)
        assert varieties.octa_residual(q) < 1e-7


def test_lower_bound_against_samples(rng):
    members = so3.wigner_from_rotation(4, varieties.random_rotations(1000, rng)) @ so3.Q0
    y = rng.normal(size=(50, 9))
    sols = sdp.solve(sdp.lift_projection_octa(y))
    for yi, sol in zip(y, sols):
        best = np.min(np.sum((members - yi) ** 2, axis=1))
        assert sol.primal_obj <= best + 1e-8


def test_rank1_extract_mixture_absent(rng):
    R = varieties.random_rotations(1, rng)[0]
    q1 = so3.Q0
    q2 = so3.wigner_from_rotation(4, R) @ so3.Q0
    u1, u2 = np.concatenate([[1.0], q1]), np.concatenate([[1.0], q2])
    X = 0.5 * np.outer(u1, u1) + 0.5 * np.outer(u2, u2)
    w = np.linalg.eigvalsh(X)
    fake = sdp.SdpSolution(X, np.zeros(1), np.zeros_like(X), 0.0, 0.0, sdp.Status.OPTIMAL,
                           w[-2] / w[-1])
    assert sdp.rank1_extract(fake) is None
    bad = sdp.SdpSolution(X, np.zeros(1), np.zeros_like(X), 0.0, 0.0, sdp.Status.MAX_ITER, 1.0)
    with pytest.raises(SolverFailure):
        sdp.rank1_extract(bad)


def test_scale_invariance(rng):
    from framefield.projection import project_octa

    for y in rng.normal(size=(10, 9)):
        raw = [sdp.rank1_extract(sdp.solve(sdp.lift_projection_octa(c * y))) for c in (0.1, 1.0, 10.0)]
        polished = [project_octa(c * y)[0] for c in (0.1, 1.0, 10.0)]
        for q in raw[1:]:
            assert np.abs(q - raw[0]).max() < 1e-4
        for q in polished[1:]:
            assert np.abs(q - polished[0]).max() < 1e-7


def test_solve_many_worker_invariance(rng):
    y = rng.normal(size=(600, 9))
    C = sdp._projection_cost(y)
    A, b = sdp.homogenized_constraints(varieties.octa_quadrics())
    one = sdp.solve_many(C, A, b, workers=1)
    four = sdp.solve_many(C, A, b, workers=4)
    for s1, s4 in zip(one, four):
        assert np.array_equal(s1.X, s4.X)
