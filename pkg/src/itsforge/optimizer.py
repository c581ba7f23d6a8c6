"""Exact integer linear programming by branch and bound over a rational LP relaxation.

All arithmetic is exact (integer pivoting, :class:`fractions.Fraction` results), so
results do not depend on floating point tolerances. Ties between optimal points are broken towards the
lexicographically smallest value vector by folding a base-``B`` tie-break term
into the objective (``K * f + sum(B**(n-1-i) * x_i)``), which keeps every
integer point's composite objective distinct.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .errors import SizeLimitExceeded

DEFAULT_NODE_BUDGET = 10**6
BRUTE_FORCE_LIMIT = 10**7


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class Constraint:
    coeffs: dict[int, int]
    op: str  # "<=", ">=", "="
    rhs: int

    def holds(self, values: Sequence[int]) -> bool:
        lhs = sum(c * values[j] for j, c in self.coeffs.items())
        if self.op == "<=":
            return lhs <= self.rhs
        if self.op == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass
class IlpProblem:
    """Minimize ``objective . x`` subject to integer linear constraints and bounds."""

    num_vars: int
    objective: list[int]
    constraints: list[Constraint] = field(default_factory=list)
    bounds: list[tuple[int, int]] = field(default_factory=list)
    binary_mask: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.bounds:
            self.bounds = [(0, 1)] * self.num_vars
        if not self.binary_mask:
            self.binary_mask = [b == (0, 1) for b in self.bounds]
        if len(self.objective) != self.num_vars or len(self.bounds) != self.num_vars:
            raise ValueError("objective and bounds must have num_vars entries")
        for j, (lo, hi) in enumerate(self.bounds):
            if lo > hi:
                raise ValueError(f"variable {j}: lower bound {lo} > upper bound {hi}")
            if self.binary_mask[j] and (lo, hi) != (0, 1):
                raise ValueError(f"binary variable {j} must have bounds (0, 1)")
        for c in self.constraints:
            if c.op not in ("<=", ">=", "="):
                raise ValueError(f"unknown constraint operator {c.op!r}")
            if any(not (0 <= j < self.num_vars) for j in c.coeffs):
                raise ValueError("constraint references an undeclared variable")
            if not all(isinstance(v, int) for v in (*c.coeffs.values(), c.rhs)):
                raise ValueError("constraint coefficients must be integers")
        if not all(isinstance(v, int) for v in self.objective):
            raise ValueError("objective coefficients must be integers")

    def add(self, coeffs: dict[int, int], op: str, rhs: int) -> None:
        coeffs = {j: c for j, c in coeffs.items() if c}
        self.constraints.append(Constraint(coeffs, op, rhs))

    def feasible(self, values: Sequence[int]) -> bool:
        if any(not (lo <= v <= hi) for v, (lo, hi) in zip(values, self.bounds)):
            return False
        return all(c.holds(values) for c in self.constraints)

    def value(self, values: Sequence[int]) -> int:
        return sum(c * v for c, v in zip(self.objective, values))


@dataclass(frozen=True)
class IlpSolution:
    values: tuple[int, ...]
    objective_value: int
    status: Status
    nodes: int = 0


# -- LP relaxation ----------------------------------------------------------------


_DEGENERATE_STREAK = 20


class _Tableau:
    """Fraction-free simplex tableau.

    Entries are integers; the true tableau is ``entry / det``. Pivoting uses integer
    elimination with exact division by the previous pivot, so every entry stays a
    minor of the original matrix and no gcd work is needed.
    """

    def __init__(self) -> None:
        self.rows: list[dict[int, int]] = []
        self.rhs: list[int] = []
        self.basis: list[int] = []
        self.ncols = 0
        self.det = 1
        self.obj: dict[int, int] = {}

    def new_col(self) -> int:
        self.ncols += 1
        return self.ncols - 1

    def set_objective(self, costs: dict[int, int]) -> None:
        """Reduced costs (times ``det``) of ``costs`` under the current basis."""
        obj = {k: self.det * c for k, c in costs.items() if c}
        for i, b in enumerate(self.basis):
            cb = costs.get(b)
            if cb:
                for k, v in self.rows[i].items():
                    nv = obj.get(k, 0) - cb * v
                    if nv:
                        obj[k] = nv
                    else:
                        obj.pop(k, None)
        self.obj = obj

    @staticmethod
    def _eliminate(target: dict[int, int], p: int, f: int, row: dict[int, int], det: int) -> dict[int, int]:
        out = {k: p * v for k, v in target.items()}
        if f:
            for k, v in row.items():
                out[k] = out.get(k, 0) - f * v
        return {k: v // det for k, v in out.items() if v}

    def pivot(self, r: int, col: int) -> None:
        row = self.rows[r]
        p = row[col]
        det = self.det
        b = self.rhs[r]
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other.get(col, 0)
            self.rows[i] = self._eliminate(other, p, f, row, det)
            self.rhs[i] = (p * self.rhs[i] - f * b) // det
        self.obj = self._eliminate(self.obj, p, self.obj.get(col, 0), row, det)
        self.basis[r] = col
        self.det = p
        if p < 0:
            self.det = -p
            self.rows = [{k: -v for k, v in rw.items()} for rw in self.rows]
            self.rhs = [-v for v in self.rhs]
            self.obj = {k: -v for k, v in self.obj.items()}

    def optimize(self, allowed: int) -> None:
        """Dantzig pricing; Bland's rule during degenerate streaks so cycling cannot occur.

        Columns >= ``allowed`` never enter.
        """
        stalled = 0
        while True:
            enter = -1
            if stalled < _DEGENERATE_STREAK:
                best_cost = 0
                for k, c in self.obj.items():
                    if k < allowed and (c < best_cost or (c == best_cost and c < 0 and k < enter)):
                        enter, best_cost = k, c
            else:
                for k in sorted(self.obj):
                    if k < allowed and self.obj[k] < 0:
                        enter = k
                        break
            if enter < 0:
                return
            best = -1
            for i, row in enumerate(self.rows):
                a = row.get(enter, 0)
                if a > 0:
                    if best < 0:
                        best = i
                        continue
                    # compare rhs[i]/a with rhs[best]/a_best without division
                    lhs = self.rhs[i] * self.rows[best][enter]
                    rhs = self.rhs[best] * a
                    if lhs < rhs or (lhs == rhs and self.basis[i] < self.basis[best]):
                        best = i
            if best < 0:
                raise ArithmeticError("unbounded LP relaxation")  # bounds are finite
            stalled = stalled + 1 if self.rhs[best] == 0 else 0
            self.pivot(best, enter)


def solve_lp(
    problem: IlpProblem, lo: Sequence[int], hi: Sequence[int], objective: Sequence[int]
) -> tuple[list[Fraction], Fraction] | None:
    """Minimize ``objective`` over the LP relaxation with the given bounds.

    Returns ``(x, value)`` or ``None`` when infeasible.
    """
    n = problem.num_vars
    free = [j for j in range(n) if hi[j] > lo[j]]
    col_of = {j: k for k, j in enumerate(free)}
    tab = _Tableau()
    tab.ncols = len(free)

    raw_rows: list[tuple[dict[int, int], str, int]] = []
    for c in problem.constraints:
        row: dict[int, int] = {}
        rhs = c.rhs
        for j, a in c.coeffs.items():
            rhs -= a * lo[j]
            if j in col_of:
                row[col_of[j]] = a
        if not row:
            if c.op == "<=":
                ok = 0 <= rhs
            elif c.op == ">=":
                ok = 0 >= rhs
            else:
                ok = rhs == 0
            if not ok:
                return None
            continue
        raw_rows.append((row, c.op, rhs))
    for j in free:
        raw_rows.append(({col_of[j]: 1}, "<=", hi[j] - lo[j]))

    # slack and surplus columns come before artificial ones so the latter can be excluded
    pending: list[tuple[dict[int, int], int, int | None]] = []
    for row, op, rhs in raw_rows:
        if rhs < 0 or (rhs == 0 and op == ">="):
            # a zero-rhs ">=" row negated is a "<=" row whose slack starts basic at 0
            row = {k: -v for k, v in row.items()}
            rhs = -rhs
            op = {"<=": ">=", ">=": "<=", "=": "="}[op]
        if op == "<=":
            s = tab.new_col()
            row[s] = 1
            pending.append((row, rhs, s))
        elif op == ">=":
            s = tab.new_col()
            row[s] = -1
            pending.append((row, rhs, None))
        else:
            pending.append((row, rhs, None))
    first_artificial = tab.ncols
    artificials: list[int] = []
    for row, rhs, basic in pending:
        if basic is None:
            basic = tab.new_col()
            row[basic] = 1
            artificials.append(basic)
        tab.rows.append(row)
        tab.rhs.append(rhs)
        tab.basis.append(basic)

    if artificials:
        tab.set_objective({a: 1 for a in artificials})
        tab.optimize(tab.ncols)
        if any(b >= first_artificial and tab.rhs[i] for i, b in enumerate(tab.basis)):
            return None
        # drive zero-level artificials out of the basis; rows that cannot be are redundant
        for i, b in enumerate(tab.basis):
            if b >= first_artificial:
                col = next((k for k in sorted(tab.rows[i]) if k < first_artificial), None)
                if col is not None:
                    tab.pivot(i, col)

    tab.set_objective({col_of[j]: objective[j] for j in free if objective[j]})
    tab.optimize(first_artificial)

    x = [Fraction(lo[j]) for j in range(n)]
    for i, b in enumerate(tab.basis):
        if b < len(free):
            x[free[b]] += Fraction(tab.rhs[i], tab.det)
    value = sum((objective[j] * x[j] for j in range(n)), Fraction(0))
    return x, value


# -- integer search -----------------------------------------------------------------


def _composite_objective(problem: IlpProblem) -> tuple[list[int], int]:
    n = problem.num_vars
    base = max((hi - lo for lo, hi in problem.bounds), default=0) + 1
    scale = base**n
    comp = [scale * c + base ** (n - 1 - j) for j, c in enumerate(problem.objective)]
    return comp, scale


def solve(problem: IlpProblem, node_budget: int = DEFAULT_NODE_BUDGET) -> IlpSolution:
    """Exact minimum with ties broken towards the lexicographically smallest vector."""
    n = problem.num_vars
    if n == 0:
        if all(c.holds(()) for c in problem.constraints):
            return IlpSolution((), 0, Status.OPTIMAL)
        return IlpSolution((), 0, Status.INFEASIBLE)
    comp, _ = _composite_objective(problem)
    incumbent: tuple[int, ...] | None = None
    incumbent_value: int | None = None
    stack = [([lo for lo, _ in problem.bounds], [hi for _, hi in problem.bounds])]
    nodes = 0
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > node_budget:
            raise SizeLimitExceeded(f"branch and bound exceeded {node_budget} nodes")
        relaxed = solve_lp(problem, lo, hi, comp)
        if relaxed is None:
            continue
        x, bound = relaxed
        if incumbent_value is not None and math.ceil(bound) >= incumbent_value:
            continue
        branch = -1
        best_gap: Fraction | None = None
        for j, v in enumerate(x):
            if v.denominator != 1:
                gap = abs(v - math.floor(v) - Fraction(1, 2))
                if best_gap is None or gap < best_gap:
                    branch, best_gap = j, gap
        if branch < 0:
            values = tuple(int(v) for v in x)
            incumbent, incumbent_value = values, int(bound)
            continue
        v = x[branch]
        down_hi = list(hi)
        down_hi[branch] = math.floor(v)
        up_lo = list(lo)
        up_lo[branch] = math.ceil(v)
        down, up = (lo, down_hi), (up_lo, hi)
        # explore the child nearer to the fractional value first
        if v - math.floor(v) >= Fraction(1, 2):
            stack.extend([down, up])
        else:
            stack.extend([up, down])
    if incumbent is None:
        return IlpSolution((), 0, Status.INFEASIBLE, nodes)
    assert problem.feasible(incumbent), "branch and bound returned an infeasible point"
    return IlpSolution(incumbent, problem.value(incumbent), Status.OPTIMAL, nodes)


def brute_force(problem: IlpProblem, limit: int = BRUTE_FORCE_LIMIT) -> IlpSolution:
    """Enumerate every integer point; same tie-break as :func:`solve`."""
    size = 1
    for lo, hi in problem.bounds:
        size *= hi - lo + 1
    if size > limit:
        raise SizeLimitExceeded(f"{size} points exceed the enumeration limit {limit}")
    best: tuple[int, ...] | None = None
    best_value = 0
    ranges = [range(lo, hi + 1) for lo, hi in problem.bounds]
    for point in itertools.product(*ranges):
        if not all(c.holds(point) for c in problem.constraints):
            continue
        value = problem.value(point)
        if best is None or value < best_value:
            best, best_value = point, value
    if best is None:
        return IlpSolution((), 0, Status.INFEASIBLE)
    return IlpSolution(tuple(best), best_value, Status.OPTIMAL)
