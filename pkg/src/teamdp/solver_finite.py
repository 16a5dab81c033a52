"""Exact finite-horizon design optimization and evaluation.

The designer's problem is a deterministic control problem on information
states (see :mod:`teamdp.infostate`). :func:`solve_finite` runs the nested
backward recursion

    V^c_t(pi) = min_c V^l_t(Q^c(c) pi)
    V^l_t(pi) = min_l V^g_t(Q^l(l) pi)
    V^g_t(pi) = min_g rho~(pi, g) + beta * V^c_{t+1}(Q^g(g) pi)

depth first from the initial state, with controllers restricted to the
finitely many beliefs reachable in ``pi``.
"""

from __future__ import annotations

import itertools
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import belief as bl
from .errors import BudgetExceeded, MissingControllerEntry, ZeroProbabilityOutput
from .infostate import (
    ControllerFn,
    apply_Qc,
    apply_Qg,
    apply_Ql,
    expected_cost,
    group_masses,
    initial_info_state,
)

DEFAULT_BUDGET = 10**8
TIE_TOL = 1e-12


@dataclass
class Design:
    """Per-stage encoders, memory maps and belief-keyed controllers.

    Controller keys are belief ids of ``table``.
    """

    encoders: list
    memories: list
    controllers: list
    table: bl.BeliefTable = field(default_factory=bl.BeliefTable)

    @property
    def horizon(self) -> int:
        return len(self.encoders)


@dataclass
class SolveReport:
    value: float
    design: Design
    horizon: int
    beta: float | None
    reachable_beliefs: list  # distinct controller beliefs per stage along the optimal design
    explored: int  # candidate stage decisions examined
    memo_entries: int
    wall_time: float


def _count_tables(n_out, n_in):
    return n_out ** n_in


def enumerate_encoders(spec, budget=DEFAULT_BUDGET):
    """All maps (s, m) -> z in lexicographic order of their flattened tables."""
    a = spec.alphabets
    count = _count_tables(a.n_z, a.n_s * a.n_m)
    if budget is not None and count > budget:
        raise BudgetExceeded(count, budget, what="encoders")
    for flat in itertools.product(range(a.n_z), repeat=a.n_s * a.n_m):
        yield np.array(flat, dtype=np.int64).reshape(a.n_s, a.n_m)


def enumerate_memories(spec, budget=DEFAULT_BUDGET):
    """All maps (s, m) -> m' in lexicographic order of their flattened tables."""
    a = spec.alphabets
    count = _count_tables(a.n_m, a.n_s * a.n_m)
    if budget is not None and count > budget:
        raise BudgetExceeded(count, budget, what="memory maps")
    for flat in itertools.product(range(a.n_m), repeat=a.n_s * a.n_m):
        yield np.array(flat, dtype=np.int64).reshape(a.n_s, a.n_m)


def action_independent(spec) -> bool:
    """True when every action induces the same plant kernel."""
    return bool(np.all(spec.plant == spec.plant[:1]))


def _better(v, idx, best_v, best_idx):
    if best_idx is None or v < best_v - TIE_TOL:
        return True
    return v <= best_v + TIE_TOL and idx < best_idx


class _NestedDP:
    def __init__(self, spec, T, beta, budget, memoize, prune, table):
        self.spec = spec
        self.T = T
        self.beta = 1.0 if beta is None else float(beta)
        self.budget = budget
        self.memoize = memoize
        self.prune = prune
        self.table = table
        self.encoders = list(enumerate_encoders(spec, budget))
        self.memories = list(enumerate_memories(spec, budget))
        self.memo = {}
        self.choice = {}
        self.explored = 0
        self.rho = spec.rho
        self.separable = action_independent(spec)

    def _tick(self, n, t):
        self.explored += n
        if self.budget is not None and self.explored > self.budget:
            raise BudgetExceeded(self.explored, self.budget, stage=t, what="candidate stage decisions")

    def _lookup(self, key):
        if self.memoize:
            return self.memo.get(key)
        return None

    def _store(self, key, value, choice):
        self.choice[key] = choice
        if self.memoize:
            self.memo[key] = value
        return value

    def _group_costs(self, pi_g):
        """Support (ordered by belief) and per-belief cost vectors over actions."""
        support = pi_g.belief_support()
        masses = group_masses(pi_g)
        costs = np.array([masses[b].sum(axis=1) @ self.rho for b in support])
        return support, costs

    def _myopic(self, pi_l):
        # the best immediate cost does not depend on the memory map, so any one will do
        pi_g = apply_Ql(pi_l, self.memories[0], self.spec)
        _, costs = self._group_costs(pi_g)
        return math.fsum(costs.min(axis=1))

    def vc(self, t, pi):
        key = (t, pi.fingerprint())
        hit = self._lookup(key)
        if hit is not None:
            return hit
        self._tick(len(self.encoders), t)
        cands = []
        for i, c in enumerate(self.encoders):
            pi_l = apply_Qc(pi, c, self.spec)
            lb = self._myopic(pi_l) if self.prune else 0.0
            cands.append((lb, i, pi_l))
        cands.sort(key=lambda e: (e[0], e[1]))
        best_v, best_i = math.inf, None
        for lb, i, pi_l in cands:
            if self.prune and best_i is not None and lb > best_v + TIE_TOL:
                break
            v = self.vl(t, pi_l)
            if _better(v, i, best_v, best_i):
                best_v, best_i = v, i
        return self._store(key, best_v, best_i)

    def vl(self, t, pi):
        key = (t, pi.fingerprint())
        hit = self._lookup(key)
        if hit is not None:
            return hit
        # the memory written at the final stage is never read
        n_l = 1 if t == self.T else len(self.memories)
        self._tick(n_l, t)
        best_v, best_i = math.inf, None
        for i in range(n_l):
            v = self.vg(t, apply_Ql(pi, self.memories[i], self.spec))
            if _better(v, i, best_v, best_i):
                best_v, best_i = v, i
        return self._store(key, best_v, best_i)

    def vg(self, t, pi):
        key = (t, pi.fingerprint())
        hit = self._lookup(key)
        if hit is not None:
            return hit
        support, costs = self._group_costs(pi)
        n_u = self.spec.alphabets.n_u
        if t == self.T or self.separable:
            # separable across beliefs: each belief takes its cheapest action
            # (before T as well when actions cannot influence the plant)
            self._tick(1, t)
            acts = tuple(int(np.argmin(row)) for row in costs)
            v = math.fsum(costs[k, u] for k, u in enumerate(acts))
            if t < self.T:
                g = ControllerFn(zip(support, acts))
                v += self.beta * self.vc(t + 1, apply_Qg(pi, g, self.spec))
            return self._store(key, v, (tuple(support), acts))

        n_tables = n_u ** len(support)
        if self.budget is not None and n_tables > self.budget:
            raise BudgetExceeded(n_tables, self.budget, stage=t, what="controller tables")
        tables = np.array(list(itertools.product(range(n_u), repeat=len(support))), dtype=np.int64)
        immediate = costs[np.arange(len(support))[None, :], tables].sum(axis=1)
        order = np.lexsort((np.arange(len(tables)), immediate)) if self.prune else range(len(tables))
        best_v, best_i = math.inf, None
        for i in order:
            i = int(i)
            now = float(immediate[i])
            if self.prune and best_i is not None and now > best_v + TIE_TOL:
                break
            self._tick(1, t)
            g = ControllerFn(zip(support, tables[i].tolist()))
            v = math.fsum(costs[k, u] for k, u in enumerate(tables[i].tolist()))
            v += self.beta * self.vc(t + 1, apply_Qg(pi, g, self.spec))
            if _better(v, i, best_v, best_i):
                best_v, best_i = v, i
        return self._store(key, best_v, (tuple(support), tuple(tables[best_i].tolist())))

    def reconstruct(self, pi_c):
        design = Design([], [], [], self.table)
        reach = []
        for t in range(1, self.T + 1):
            c = self.encoders[self.choice[(t, pi_c.fingerprint())]]
            pi_l = apply_Qc(pi_c, c, self.spec)
            l = self.memories[self.choice[(t, pi_l.fingerprint())]]
            pi_g = apply_Ql(pi_l, l, self.spec)
            support, acts = self.choice[(t, pi_g.fingerprint())]
            g = ControllerFn(zip(support, acts))
            g.stage = t
            design.encoders.append(c)
            design.memories.append(l)
            design.controllers.append(g)
            reach.append(len(support))
            pi_c = apply_Qg(pi_g, g, self.spec)
        return design, reach


def solve_finite(spec, T, beta=None, budget=DEFAULT_BUDGET, memoize=True, prune=True,
                 table=None) -> SolveReport:
    """Jointly optimal encoders, memory maps and controllers over horizon ``T``.

    With ``beta`` the stage-t cost is weighted by ``beta**(t-1)``. Ties are
    broken toward the first candidate in enumeration order. ``prune`` skips
    candidates whose immediate cost alone already exceeds the best value
    found; it never changes the result.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    start = time.perf_counter()
    table = table if table is not None else bl.BeliefTable()
    dp = _NestedDP(spec, T, beta, budget, memoize, prune, table)
    pi1 = initial_info_state(spec, table)
    # the recursion is a few frames deep per stage; long truncation horizons need room
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10 * T + 1000))
    try:
        value = dp.vc(1, pi1)
        design, reach = dp.reconstruct(pi1)
    finally:
        sys.setrecursionlimit(limit)
    return SolveReport(value, design, T, beta, reach, dp.explored, len(dp.memo),
                       time.perf_counter() - start)


def stage_costs(spec, design: Design, T=None) -> list[float]:
    """Expected cost at each stage, chaining the information-state maps."""
    T = design.horizon if T is None else T
    if T > design.horizon:
        raise ValueError(f"design covers {design.horizon} stages, {T} requested")
    pi = initial_info_state(spec, design.table)
    out = []
    for t in range(T):
        pi_g = apply_Ql(apply_Qc(pi, design.encoders[t], spec), design.memories[t], spec)
        g = design.controllers[t]
        try:
            out.append(expected_cost(pi_g, g, spec.rho))
            if t + 1 < T:
                pi = apply_Qg(pi_g, g, spec)
        except MissingControllerEntry as exc:
            raise MissingControllerEntry(t + 1, design.table.vector(exc.belief).tolist()) from None
    return out


def evaluate_design(spec, design: Design, T=None, beta=None) -> float:
    """Exact expected (optionally discounted) total cost of ``design``."""
    costs = stage_costs(spec, design, T)
    if beta is None:
        return math.fsum(costs)
    return math.fsum(beta ** t * c for t, c in enumerate(costs))


def belief_controller_to_history(spec, design: Design, T=None) -> list[dict]:
    """Expand belief-keyed controllers into tables over histories ``(ys, us)``.

    Realizable histories get the action the controller takes at the belief
    reached along them; all other histories map to action 0.
    """
    from .oracle import histories

    T = design.horizon if T is None else T
    a = spec.alphabets
    out = [dict.fromkeys(histories(spec, t), 0) for t in range(1, T + 1)]
    table = design.table

    def walk(t, ys, us, b):
        eb = bl.sense(b, spec.observation)
        for y in range(a.n_y):
            try:
                post, _ = bl.channel_update(eb, design.encoders[t], spec.channel, y)
            except ZeroProbabilityOutput:
                continue
            bg = bl.memory_update(post, design.memories[t])
            bid = table.canonicalize(bg)
            g = design.controllers[t]
            if bid not in g:
                raise MissingControllerEntry(t + 1, bg.tolist())
            u = g[bid]
            h = ys + (y,)
            out[t][(h, us)] = u
            if t + 1 < T:
                walk(t + 1, h, us + (u,), bl.psi(table.vector(bid), u, spec.plant))

    walk(0, (), (), bl.initial_belief(spec))
    return out


def random_design(spec, T, rng, table=None) -> Design:
    """Random encoders and memory maps with a random action for every reachable belief."""
    a = spec.alphabets
    table = table if table is not None else bl.BeliefTable()
    design = Design([], [], [], table)
    pi = initial_info_state(spec, table)
    for t in range(T):
        c = rng.integers(0, a.n_z, size=(a.n_s, a.n_m))
        l = rng.integers(0, a.n_m, size=(a.n_s, a.n_m))
        pi_g = apply_Ql(apply_Qc(pi, c, spec), l, spec)
        g = ControllerFn((b, int(rng.integers(0, a.n_u))) for b in pi_g.belief_support())
        g.stage = t + 1
        design.encoders.append(c)
        design.memories.append(l)
        design.controllers.append(g)
        pi = apply_Qg(pi_g, g, spec)
    return design
