import itertools

import numpy as np
import pytest

from fairpost.lp import DenseLp, build_strict_lp
from fairpost.solver import (
    FEAS_TOL,
    LpSolution,
    SolveStatus,
    feasibility_check,
    solve,
)

from conftest import random_group_statistics


def brute_force_box_lp(objective, matrix, rhs, row_range, maximize=False,
                       tol=1e-9):
    """Independent optimum for small programs over the unit box.

    Enumerates candidate vertices: pick r rows to hold at a band edge
    (rhs - range or rhs + range; just rhs when the range is zero), pick r
    coordinates to solve for, pin the rest at 0 or 1, then keep every
    candidate that satisfies all rows and bounds.  The optimum of a feasible
    bounded program is attained at one of these points."""
    m, n = matrix.shape
    best = None
    for r in range(min(m, n) + 1):
        for rows in itertools.combinations(range(m), r):
            edge_choices = [(rhs[i],) if row_range[i] == 0.0
                            else (rhs[i] - row_range[i], rhs[i] + row_range[i])
                            for i in rows]
            for free in itertools.combinations(range(n), r):
                fixed = [j for j in range(n) if j not in free]
                sub = matrix[np.ix_(rows, free)] if r else None
                for corner in itertools.product((0.0, 1.0), repeat=len(fixed)):
                    for targets in itertools.product(*edge_choices):
                        z = np.empty(n)
                        for j, v in zip(fixed, corner):
                            z[j] = v
                        if r:
                            goal = np.array(targets) - matrix[np.ix_(rows, fixed)] @ np.array(corner)
                            x, *_ = np.linalg.lstsq(sub, goal, rcond=None)
                            z[list(free)] = x
                        resid = np.abs(matrix @ z - rhs) - row_range
                        if np.any(resid > tol) or np.any(z < -tol) or np.any(z > 1 + tol):
                            continue
                        val = float(objective @ z)
                        if best is None or (val > best if maximize else val < best):
                            best = val
    return best


def test_hand_solvable_equality_program():
    # minimize x - y subject to x + y = 1 on the unit square -> x=0, y=1
    prob = DenseLp(
        objective=np.array([1.0, -1.0]),
        matrix=np.array([[1.0, 1.0]]),
        rhs=np.array([1.0]),
        row_range=np.zeros(1),
        lower=np.zeros(2),
        upper=np.ones(2),
        maximize=False,
    )
    sol = solve(prob)
    assert sol.status == SolveStatus.OPTIMAL
    assert sol.objective == pytest.approx(-1.0, abs=1e-12)
    assert np.allclose(sol.z, [0.0, 1.0], atol=1e-12)


def test_hand_solvable_maximization():
    # maximize 2x + y subject to x + y <= 1.5 (as a ranged row around 0.75)
    prob = DenseLp(
        objective=np.array([2.0, 1.0]),
        matrix=np.array([[1.0, 1.0]]),
        rhs=np.array([0.75]),
        row_range=np.array([0.75]),
        lower=np.zeros(2),
        upper=np.ones(2),
        maximize=True,
    )
    sol = solve(prob)
    assert sol.status == SolveStatus.OPTIMAL
    assert sol.objective == pytest.approx(2.5, abs=1e-12)
    assert np.allclose(sol.z, [1.0, 0.5], atol=1e-12)


def test_pure_box_program_without_rows():
    prob = DenseLp(
        objective=np.array([3.0, -2.0, 0.5]),
        matrix=np.zeros((0, 3)),
        rhs=np.zeros(0),
        row_range=np.zeros(0),
        lower=np.zeros(3),
        upper=np.ones(3),
        maximize=False,
    )
    sol = solve(prob)
    assert sol.status == SolveStatus.OPTIMAL
    assert np.allclose(sol.z, [0.0, 1.0, 0.0], atol=0)
    assert sol.objective == pytest.approx(-2.0)


def test_infeasible_program_detected():
    # x + y = 3 cannot hold inside the unit square
    prob = DenseLp(
        objective=np.array([1.0, 1.0]),
        matrix=np.array([[1.0, 1.0]]),
        rhs=np.array([3.0]),
        row_range=np.zeros(1),
        lower=np.zeros(2),
        upper=np.ones(2),
        maximize=False,
    )
    sol = solve(prob)
    assert sol.status == SolveStatus.INFEASIBLE
    assert np.isnan(sol.objective)
    assert not feasibility_check(prob).feasible


def test_feasibility_check_agrees_with_solve(rng):
    for k in (1, 2, 4):
        gs = random_group_statistics(rng, k)
        prob = build_strict_lp(gs)
        assert feasibility_check(prob).feasible
        assert solve(prob).status == SolveStatus.OPTIMAL


def test_matches_vertex_enumeration_on_random_programs(rng):
    """Random small dense programs against the combinatorial oracle."""
    for trial in range(40):
        m, n = int(rng.integers(1, 4)), int(rng.integers(2, 6))
        matrix = rng.normal(size=(m, n))
        # build the rhs from an interior point so the program is feasible
        interior = rng.random(n)
        rhs = matrix @ interior
        row_range = np.where(rng.random(m) < 0.5, 0.0, rng.random(m) * 0.3)
        objective = rng.normal(size=n)
        maximize = bool(rng.random() < 0.5)
        prob = DenseLp(objective=objective, matrix=matrix, rhs=rhs,
                       row_range=row_range, lower=np.zeros(n),
                       upper=np.ones(n), maximize=maximize)
        sol = solve(prob)
        assert sol.status == SolveStatus.OPTIMAL, f"trial {trial}"
        oracle = brute_force_box_lp(objective, matrix, rhs, row_range, maximize)
        assert oracle is not None
        assert sol.objective == pytest.approx(oracle, abs=1e-7), f"trial {trial}"


def test_solution_satisfies_constraints_tightly(rng):
    for k in (2, 3, 5):
        gs = random_group_statistics(rng, k)
        prob = build_strict_lp(gs)
        sol = solve(prob)
        dense = prob.to_dense()
        resid = np.abs(dense.matrix @ sol.z - dense.rhs) - dense.row_range
        assert float(resid.max()) <= FEAS_TOL
        assert sol.max_constraint_residual <= FEAS_TOL
        assert np.all(sol.z >= 0.0) and np.all(sol.z <= 1.0)


def test_deterministic_resolve(rng):
    gs = random_group_statistics(rng, 4)
    prob = build_strict_lp(gs)
    first = solve(prob)
    second = solve(prob)
    assert np.array_equal(first.z, second.z)
    assert first.objective == second.objective
    assert first.iterations == second.iterations


def test_solution_json_round_trip(rng):
    gs = random_group_statistics(rng, 2)
    sol = solve(build_strict_lp(gs))
    back = LpSolution.from_json_dict(sol.to_json_dict())
    assert np.array_equal(back.z, sol.z)
    assert back.objective == sol.objective
    assert back.status == sol.status
    assert back.iterations == sol.iterations


def test_unbounded_direction_reported_as_failure():
    # maximize x with no upper bound: not expressible through DenseLp unit
    # boxes, so widen the box explicitly
    prob = DenseLp(
        objective=np.array([1.0]),
        matrix=np.zeros((0, 1)),
        rhs=np.zeros(0),
        row_range=np.zeros(0),
        lower=np.zeros(1),
        upper=np.array([np.inf]),
        maximize=True,
    )
    sol = solve(prob)
    assert sol.status == SolveStatus.NUMERICAL_FAILURE
