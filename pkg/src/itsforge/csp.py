"""Incremental boolean constraint solver used for network segmentation.

Conflict-driven clause learning over two watched literals. Variables are
positive integers and literals are signed integers. ``push``/``pop`` scope
clauses through a selector literal per frame: clauses added inside a frame carry
the negated selector, every solve assumes the live selectors, and ``pop``
permanently disables the frame. Learned clauses stay sound across pops because
they inherit the selector literal of every frame clause they were derived from.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

_RESTART_BASE = 100
_DECAY = 1.05


class CspProblem:
    def __init__(self) -> None:
        self.num_vars = 0
        self.ok = True
        self._value: list[int] = [0]  # index by variable: 1 true, -1 false, 0 free
        self._level: list[int] = [0]
        self._reason: list[list[int] | None] = [None]
        self._activity: list[float] = [0.0]
        self._watches: dict[int, list[list[int]]] = {}
        self._trail: list[int] = []
        self._trail_lim: list[int] = []
        self._qhead = 0
        self._bump = 1.0
        self._frames: list[int] = []
        self.clauses: list[list[int]] = []
        self.learned = 0
        self.conflicts = 0
        self.model: list[bool] = []

    # -- building -----------------------------------------------------------

    def new_var(self) -> int:
        self.num_vars += 1
        self._value.append(0)
        self._level.append(0)
        self._reason.append(None)
        self._activity.append(0.0)
        self._watches[self.num_vars] = []
        self._watches[-self.num_vars] = []
        return self.num_vars

    def new_vars(self, count: int) -> list[int]:
        return [self.new_var() for _ in range(count)]

    def add_clause(self, lits: Iterable[int]) -> None:
        """Add a clause to the innermost frame (or permanently outside any frame)."""
        clause = list(dict.fromkeys(lits))
        for lit in clause:
            if not 0 < abs(lit) <= self.num_vars:
                raise ValueError(f"literal {lit} references an undeclared variable")
        if self._frames:
            clause.append(-self._frames[-1])
        self._add(clause)

    def _add(self, clause: list[int]) -> None:
        if not self.ok:
            return
        self._backtrack(0)
        if any(-lit in clause for lit in clause):
            return
        if any(self._lit_value(lit) == 1 for lit in clause):
            return
        clause = [lit for lit in clause if self._lit_value(lit) == 0]
        if not clause:
            self.ok = False
            return
        if len(clause) == 1:
            self._enqueue(clause[0], None)
            if self._propagate() is not None:
                self.ok = False
            return
        self.clauses.append(clause)
        self._watch(clause)

    def push(self) -> None:
        self._frames.append(self.new_var())

    def pop(self) -> None:
        selector = self._frames.pop()
        self._add([-selector])

    @property
    def depth(self) -> int:
        return len(self._frames)

    # -- search ---------------------------------------------------------------

    def solve(self, assumptions: Sequence[int] = ()) -> bool:
        """Satisfiability under the live frames and ``assumptions``; fills ``model``."""
        self.model = []
        if not self.ok:
            return False
        self._backtrack(0)
        if self._propagate() is not None:
            self.ok = False
            return False
        assume = [*self._frames, *assumptions]
        restart_at = _RESTART_BASE
        conflicts_here = 0
        while True:
            confl = self._propagate()
            if confl is not None:
                self.conflicts += 1
                conflicts_here += 1
                if not self._trail_lim:
                    self.ok = False
                    return False
                learnt, level = self._analyze(confl)
                self._backtrack(level)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    self.clauses.append(learnt)
                    self.learned += 1
                    self._watch(learnt)
                    self._enqueue(learnt[0], learnt)
                self._bump *= _DECAY
                continue
            if conflicts_here >= restart_at:
                conflicts_here = 0
                restart_at = int(restart_at * 1.5)
                self._backtrack(0)
                continue
            level = len(self._trail_lim)
            if level < len(assume):
                lit = assume[level]
                val = self._lit_value(lit)
                if val == -1:
                    self._backtrack(0)
                    return False
                self._trail_lim.append(len(self._trail))
                if val == 0:
                    self._enqueue(lit, None)
                continue
            var = self._pick()
            if var == 0:
                self.model = [v == 1 for v in self._value]
                self._backtrack(0)
                return True
            self._trail_lim.append(len(self._trail))
            self._enqueue(-var, None)  # prefer "not a member"

    def value(self, var: int) -> bool:
        return self.model[var]

    # -- internals ----------------------------------------------------------------

    def _lit_value(self, lit: int) -> int:
        v = self._value[abs(lit)]
        return v if lit > 0 else -v

    def _watch(self, clause: list[int]) -> None:
        self._watches[clause[0]].append(clause)
        self._watches[clause[1]].append(clause)

    def _enqueue(self, lit: int, reason: list[int] | None) -> None:
        var = abs(lit)
        self._value[var] = 1 if lit > 0 else -1
        self._level[var] = len(self._trail_lim)
        self._reason[var] = reason
        self._trail.append(lit)

    def _propagate(self) -> list[int] | None:
        value = self._value
        while self._qhead < len(self._trail):
            false_lit = -self._trail[self._qhead]
            self._qhead += 1
            watchers = self._watches[false_lit]
            keep: list[list[int]] = []
            i = 0
            n = len(watchers)
            while i < n:
                c = watchers[i]
                i += 1
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                fv = value[abs(first)]
                if (fv if first > 0 else -fv) == 1:
                    keep.append(c)
                    continue
                moved = False
                for k in range(2, len(c)):
                    lit = c[k]
                    lv = value[abs(lit)]
                    if (lv if lit > 0 else -lv) != -1:
                        c[1], c[k] = lit, c[1]
                        self._watches[lit].append(c)
                        moved = True
                        break
                if moved:
                    continue
                keep.append(c)
                if (fv if first > 0 else -fv) == -1:
                    keep.extend(watchers[i:])
                    self._watches[false_lit] = keep
                    self._qhead = len(self._trail)
                    return c
                self._enqueue(first, c)
            self._watches[false_lit] = keep
        return None

    def _analyze(self, confl: list[int]) -> tuple[list[int], int]:
        level_now = len(self._trail_lim)
        seen: set[int] = set()
        learnt: list[int] = [0]
        pending = 0
        idx = len(self._trail) - 1
        lit = 0
        clause: list[int] | None = confl
        while True:
            assert clause is not None
            for q in clause if lit == 0 else clause[1:]:
                var = abs(q)
                if var in seen or self._level[var] == 0:
                    continue
                seen.add(var)
                self._activity[var] += self._bump
                if self._level[var] == level_now:
                    pending += 1
                else:
                    learnt.append(q)
            while abs(self._trail[idx]) not in seen:
                idx -= 1
            lit = self._trail[idx]
            idx -= 1
            clause = self._reason[abs(lit)]
            pending -= 1
            if pending == 0:
                break
        learnt[0] = -lit
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda j: self._level[abs(learnt[j])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, self._level[abs(learnt[1])]

    def _backtrack(self, level: int) -> None:
        if len(self._trail_lim) <= level:
            return
        stop = self._trail_lim[level]
        for lit in self._trail[stop:]:
            var = abs(lit)
            self._value[var] = 0
            self._reason[var] = None
        del self._trail[stop:]
        del self._trail_lim[level:]
        self._qhead = min(self._qhead, stop)

    def _pick(self) -> int:
        best = 0
        best_act = -1.0
        value = self._value
        act = self._activity
        for var in range(1, self.num_vars + 1):
            if value[var] == 0 and act[var] > best_act:
                best, best_act = var, act[var]
        return best


def solve_csp(problem: CspProblem, assumptions: Sequence[int] = ()) -> dict[int, bool] | None:
    """Satisfying assignment as ``{var: value}``, or ``None`` when unsatisfiable."""
    if not problem.solve(assumptions):
        return None
    return {v: problem.model[v] for v in range(1, problem.num_vars + 1)}


def brute_force_sat(num_vars: int, clauses: Sequence[Sequence[int]]) -> list[bool] | None:
    """Exhaustive oracle; returns the first model in lexicographic order, or ``None``."""
    for bits in itertools.product((False, True), repeat=num_vars):
        model = [False, *bits]
        if all(any(model[abs(l)] == (l > 0) for l in c) for c in clauses):
            return model
    return None
