"""Ground truth by exhaustive computation on the original history-based problem.

Nothing here uses beliefs or information states. Controllers are arbitrary
tables over histories ``(y_1..y_t, u_1..u_{t-1})`` and every expectation is
an exact forward sum over the joint law of the closed loop.

Designs are given stage by stage as lists (index 0 is stage 1): encoders
``c[t][s, m]``, memory maps ``l[t][s, m]`` and history controllers
``g[t][(ys, us)] -> u``.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded

TIE_TOL = 1e-12
DEFAULT_BUDGET = 10**8


@dataclass
class OracleResult:
    value: float
    encoders: list
    memories: list
    controller: list  # per-stage dict history -> action


def _observe(spec, pre, c, l):
    """Sensor, channel and memory step.

    ``pre`` maps (x, m_prev) -> mass. Returns y -> {(x, m): mass} for
    outputs with positive mass.
    """
    obs, chan = spec.observation, spec.channel
    out = defaultdict(lambda: defaultdict(float))
    for (x, mp), w in pre.items():
        for s in range(spec.alphabets.n_s):
            po = obs[x, s]
            if po == 0.0:
                continue
            z, m = c[s, mp], l[s, mp]
            for y in range(spec.alphabets.n_y):
                q = chan[z, y]
                if q > 0.0:
                    out[y][(x, m)] += w * po * q
    return {y: dict(v) for y, v in sorted(out.items())}


def _advance(spec, post, u):
    nxt = defaultdict(float)
    for (x, m), w in post.items():
        for x2 in range(spec.alphabets.n_x):
            p = spec.plant[u, x, x2]
            if p > 0.0:
                nxt[(x2, m)] += w * p
    return dict(nxt)


def _stage_cost(spec, post, u):
    return math.fsum(w * spec.rho[x, u] for (x, _), w in post.items())


def _root(spec):
    m0 = spec.initial_memory
    return {(x, m0): float(p) for x, p in enumerate(spec.initial) if p > 0}


def histories(spec, t):
    """All histories ``(ys, us)`` at stage ``t`` (``len(ys) == t``, ``len(us) == t - 1``)."""
    a = spec.alphabets
    for ys in itertools.product(range(a.n_y), repeat=t):
        for us in itertools.product(range(a.n_u), repeat=t - 1):
            yield ys, us


def history_controller_value(spec, c, l, g, T) -> float:
    """Exact expected total cost of a design with a history-based controller."""
    frontier = {((), ()): _root(spec)}
    terms = []
    for t in range(T):
        nxt = {}
        for (ys, us), pre in frontier.items():
            for y, post in _observe(spec, pre, c[t], l[t]).items():
                h = (ys + (y,), us)
                u = g[t][h]
                terms.append(_stage_cost(spec, post, u))
                if t + 1 < T:
                    nxt[(h[0], us + (u,))] = _advance(spec, post, u)
        frontier = nxt
    return math.fsum(terms)


def _best_controller(spec, c, l, T):
    """Optimal history controller for fixed encoders and memory maps.

    Backward induction on the history tree: the action chosen at a history
    only affects costs in its own subtree, so minimizing node by node is the
    exact minimum over all controller tables.
    """
    g = [dict() for _ in range(T)]
    n_u = spec.alphabets.n_u

    def value(t, ys, us, pre):
        total = []
        for y, post in _observe(spec, pre, c[t], l[t]).items():
            h = (ys + (y,), us)
            best, best_u = math.inf, 0
            for u in range(n_u):
                v = _stage_cost(spec, post, u)
                if t + 1 < T:
                    v += value(t + 1, h[0], us + (u,), _advance(spec, post, u))
                if v < best - TIE_TOL:
                    best, best_u = v, u
            g[t][h] = best_u
            total.append(best)
        return math.fsum(total)

    v = value(0, (), (), _root(spec))
    # unreached histories get action 0 so the table is total
    for t in range(T):
        for h in histories(spec, t + 1):
            g[t].setdefault(h, 0)
    return v, g


def _design_space(spec, T):
    from .solver_finite import enumerate_encoders, enumerate_memories

    enc = list(enumerate_encoders(spec, budget=None))
    mem = list(enumerate_memories(spec, budget=None))
    # the memory written at the last stage is never read, so l_T is fixed
    n_cl = len(enc) ** T * len(mem) ** max(T - 1, 0)
    return enc, mem, n_cl


def brute_force_value(spec, T, budget=DEFAULT_BUDGET, exhaustive=False) -> OracleResult:
    """Exact optimum over all (encoder, memory, history-controller) designs.

    Encoder and memory sequences are enumerated outright. For each pair the
    controller is optimized either by backward induction over the history
    tree (default) or, with ``exhaustive=True``, by literally enumerating
    every history-controller table. Ties go to the first design in
    enumeration order.
    """
    a = spec.alphabets
    enc, mem, n_cl = _design_space(spec, T)
    n_hist = [a.n_y ** t * a.n_u ** (t - 1) for t in range(1, T + 1)]
    if exhaustive:
        count = n_cl * math.prod(a.n_u ** h for h in n_hist)
    else:
        count = n_cl * sum(n * a.n_u for n in n_hist)
    if budget is not None and count > budget:
        raise BudgetExceeded(count, budget, what="oracle evaluations")

    best = None
    for cs in itertools.product(range(len(enc)), repeat=T):
        for ls in itertools.product(range(len(mem)), repeat=max(T - 1, 0)):
            c = [enc[i] for i in cs]
            l = [mem[i] for i in ls] + [mem[0]]
            if exhaustive:
                v, g = _enumerate_controllers(spec, c, l, T)
            else:
                v, g = _best_controller(spec, c, l, T)
            if best is None or v < best.value - TIE_TOL:
                best = OracleResult(v, c, l, g)
    return best


def _enumerate_controllers(spec, c, l, T):
    hists = [list(histories(spec, t)) for t in range(1, T + 1)]
    flat = [(t, h) for t in range(T) for h in hists[t]]
    best_v, best_g = math.inf, None
    for acts in itertools.product(range(spec.alphabets.n_u), repeat=len(flat)):
        g = [dict() for _ in range(T)]
        for (t, h), u in zip(flat, acts):
            g[t][h] = u
        v = history_controller_value(spec, c, l, g, T)
        if v < best_v - TIE_TOL:
            best_v, best_g = v, g
    return best_v, best_g


class JointDistribution:
    """Exact joint law at stage ``t`` of (X_t, S_t, M_{t-1}, M_t, Y^t, U^t).

    ``table`` maps ``(x, s, m_prev, m, ys, us)`` to probability, where ``us``
    includes the stage-``t`` action.
    """

    def __init__(self, t, table, shape):
        self.t = t
        self.table = table
        self.n_x, self.n_s, self.n_m = shape

    def total(self):
        return math.fsum(self.table.values())

    def _collect(self, match, index, shape):
        out = np.zeros(shape)
        terms = defaultdict(list)
        for (x, s, mp, m, ys, us), p in self.table.items():
            if match(ys, us):
                terms[index(x, s, mp, m)].append(p)
        for idx, ps in terms.items():
            out[idx] = math.fsum(ps)
        return out

    def _normalize(self, arr):
        z = arr.sum()
        return arr / z if z > 0 else None

    def history_prob(self, ys, us_prev):
        arr = self._collect(lambda a, b: a == tuple(ys) and b[:-1] == tuple(us_prev),
                            lambda x, s, mp, m: (x,), (self.n_x,))
        return float(arr.sum())

    def conditional_state_memory(self, ys, us_prev):
        """Pr(X_t, M_t | y^t, u^{t-1}), or ``None`` for an unrealizable history."""
        arr = self._collect(lambda a, b: a == tuple(ys) and b[:-1] == tuple(us_prev),
                            lambda x, s, mp, m: (x, m), (self.n_x, self.n_m))
        return self._normalize(arr)

    def conditional_extended(self, ys, us_prev):
        """Pr(X_t, S_t, M_{t-1} | y^t, u^{t-1})."""
        arr = self._collect(lambda a, b: a == tuple(ys) and b[:-1] == tuple(us_prev),
                            lambda x, s, mp, m: (x, s, mp), (self.n_x, self.n_s, self.n_m))
        return self._normalize(arr)

    def conditional_predicted(self, ys_prev, us_prev):
        """Pr(X_t, M_{t-1} | y^{t-1}, u^{t-1})."""
        k = len(ys_prev)
        arr = self._collect(lambda a, b: a[:k] == tuple(ys_prev) and b[:-1] == tuple(us_prev),
                            lambda x, s, mp, m: (x, mp), (self.n_x, self.n_m))
        return self._normalize(arr)

    def all_conditionals(self):
        """Every conditional in one pass over the table.

        Returns ``(extended, posterior, predicted)``: dicts keyed by
        ``(ys, us_prev)`` holding Pr(X, S, M_prev | .) and Pr(X, M | .), and a
        dict keyed by ``(ys[:-1], us_prev)`` holding Pr(X, M_prev | .).
        """
        cells = defaultdict(lambda: defaultdict(list))
        for (x, s, mp, m, ys, us), p in self.table.items():
            cells[(ys, us[:-1])][(x, s, mp, m)].append(p)
        extended, posterior = {}, {}
        pred = defaultdict(lambda: np.zeros((self.n_x, self.n_m)))
        for h, group in cells.items():
            e = np.zeros((self.n_x, self.n_s, self.n_m))
            post = np.zeros((self.n_x, self.n_m))
            for (x, s, mp, m), ps in group.items():
                w = math.fsum(ps)
                e[x, s, mp] += w
                post[x, m] += w
            pred[(h[0][:-1], h[1])] += e.sum(axis=1)
            z = e.sum()
            if z > 0:
                extended[h] = e / z
                posterior[h] = post / z
        predicted = {h: v / v.sum() for h, v in pred.items() if v.sum() > 0}
        return extended, posterior, predicted

    def marginal_histories(self):
        """Probability of each (ys, us) prefix through stage t."""
        out = defaultdict(list)
        for (_, _, _, _, ys, us), p in self.table.items():
            out[(ys, us)].append(p)
        return {k: math.fsum(v) for k, v in out.items()}


def exact_joint_distribution(spec, c, l, g, t, budget=DEFAULT_BUDGET) -> JointDistribution:
    a = spec.alphabets
    n_entries = a.n_x * a.n_s * a.n_m * a.n_m * (a.n_y * a.n_u) ** t
    if budget is not None and n_entries > budget:
        raise BudgetExceeded(n_entries, budget, what="joint-distribution entries")
    # masses over (x, m_prev) per history, through stage t - 1
    frontier = {((), ()): _root(spec)}
    for k in range(t - 1):
        nxt = {}
        for (ys, us), pre in frontier.items():
            for y, post in _observe(spec, pre, c[k], l[k]).items():
                h = (ys + (y,), us)
                u = g[k][h]
                nxt[(h[0], us + (u,))] = _advance(spec, post, u)
        frontier = nxt

    k = t - 1
    terms = defaultdict(list)
    for (ys, us), pre in frontier.items():
        for (x, mp), w in pre.items():
            for s in range(a.n_s):
                po = spec.observation[x, s]
                if po == 0.0:
                    continue
                z, m = c[k][s, mp], l[k][s, mp]
                for y in range(a.n_y):
                    q = spec.channel[z, y]
                    if q == 0.0:
                        continue
                    h = (ys + (y,), us)
                    u = g[k][h]
                    terms[(x, s, mp, m, h[0], us + (u,))].append(w * po * q)
    table = {key: math.fsum(v) for key, v in terms.items()}
    return JointDistribution(t, table, (a.n_x, a.n_s, a.n_m))
