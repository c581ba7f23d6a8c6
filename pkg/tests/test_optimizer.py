import random

import pytest

from itsforge import optimizer
from itsforge.errors import SizeLimitExceeded
from itsforge.optimizer import IlpProblem, Status


def random_problem(rng: random.Random) -> IlpProblem:
    n = rng.randint(1, 8)
    bounds = []
    for _ in range(n):
        lo = rng.randint(-1, 1)
        bounds.append((lo, lo + rng.randint(0, 3)))
    prob = IlpProblem(n, [rng.randint(-5, 9) for _ in range(n)], bounds=bounds)
    for _ in range(rng.randint(0, 5)):
        coeffs = {j: rng.randint(-3, 3) for j in rng.sample(range(n), rng.randint(1, n))}
        prob.add(coeffs, rng.choice(["<=", ">=", "="]), rng.randint(-4, 6))
    return prob


def test_single_binary_forced_on():
    prob = IlpProblem(1, [1])
    prob.add({0: 1}, ">=", 1)
    sol = optimizer.solve(prob)
    assert sol.status is Status.OPTIMAL
    assert sol.values == (1,)
    assert sol.objective_value == 1


def test_unconstrained_nonnegative_costs_give_zero_vector():
    prob = IlpProblem(4, [3, 0, 2, 7])
    sol = optimizer.solve(prob)
    assert sol.values == (0, 0, 0, 0)
    assert sol.objective_value == 0
    assert optimizer.brute_force(prob).values == sol.values


def test_infeasible_reported():
    prob = IlpProblem(2, [1, 1])
    prob.add({0: 1, 1: 1}, ">=", 3)
    assert optimizer.solve(prob).status is Status.INFEASIBLE
    assert optimizer.brute_force(prob).status is Status.INFEASIBLE


def test_lexicographic_tie_break():
    # x0 + x1 >= 1 with equal costs: (0, 1) is lexicographically smaller than (1, 0)
    prob = IlpProblem(2, [5, 5])
    prob.add({0: 1, 1: 1}, ">=", 1)
    assert optimizer.solve(prob).values == (0, 1)


def test_fractional_relaxation_needs_branching():
    # LP optimum is x = 1.5; integer optimum is 2 at cost 2
    prob = IlpProblem(1, [1], bounds=[(0, 3)], binary_mask=[False])
    prob.add({0: 2}, ">=", 3)
    sol = optimizer.solve(prob)
    assert sol.values == (2,)
    assert sol.nodes > 1


def test_random_problems_match_enumeration():
    rng = random.Random(7)
    for _ in range(300):
        prob = random_problem(rng)
        fast = optimizer.solve(prob)
        slow = optimizer.brute_force(prob)
        assert fast.status is slow.status
        if fast.status is Status.OPTIMAL:
            assert fast.objective_value == slow.objective_value
            assert fast.values == slow.values
            assert prob.feasible(fast.values)


def test_adding_constraint_never_lowers_optimum():
    rng = random.Random(11)
    for _ in range(100):
        prob = random_problem(rng)
        before = optimizer.solve(prob)
        if before.status is not Status.OPTIMAL:
            continue
        n = prob.num_vars
        prob.add({rng.randrange(n): 1}, ">=", rng.randint(-1, 2))
        after = optimizer.solve(prob)
        if after.status is Status.OPTIMAL:
            assert after.objective_value >= before.objective_value


def test_node_budget_exceeded():
    prob = IlpProblem(1, [1], bounds=[(0, 3)], binary_mask=[False])
    prob.add({0: 2}, ">=", 3)
    with pytest.raises(SizeLimitExceeded):
        optimizer.solve(prob, node_budget=1)


def test_brute_force_size_limit():
    prob = IlpProblem(30, [0] * 30)
    with pytest.raises(SizeLimitExceeded):
        optimizer.brute_force(prob)


def test_invalid_problem_rejected():
    with pytest.raises(ValueError):
        IlpProblem(1, [1], bounds=[(2, 1)])
    with pytest.raises(ValueError):
        IlpProblem(1, [1], bounds=[(0, 2)], binary_mask=[True])


def test_empty_problem():
    sol = optimizer.solve(IlpProblem(0, []))
    assert sol.status is Status.OPTIMAL and sol.values == ()
