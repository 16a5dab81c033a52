"""Infinite-horizon criteria: discounted cost and Cesaro average cost.

Discounted problems are solved by horizon truncation. With costs bounded by
K, stopping after T stages leaves a tail of at most beta^T K / (1 - beta),
so choosing T = ceil(log(eps (1 - beta) / K) / log beta) makes every
truncated value eps-accurate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import belief as bl
from .errors import BudgetExceeded
from .infostate import ControllerFn, _cache, apply_Qc, apply_Qg, apply_Ql, expected_cost, initial_info_state
from .solver_finite import (
    DEFAULT_BUDGET,
    TIE_TOL,
    SolveReport,
    action_independent,
    enumerate_encoders,
    enumerate_memories,
    solve_finite,
)

DEFAULT_MAX_ATOMS = 200_000
DEFAULT_MAX_NODES = 50_000


@dataclass
class StationaryDesign:
    """Time-invariant encoder, memory map and belief-keyed controller."""

    encoder: np.ndarray
    memory: np.ndarray
    controller: ControllerFn
    table: bl.BeliefTable = field(default_factory=bl.BeliefTable)


@dataclass(frozen=True)
class DiscountConfig:
    beta: float
    epsilon: float
    k_bound: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not (self.k_bound >= 0.0 and math.isfinite(self.k_bound)):
            raise ValueError("k_bound must be finite and nonnegative")

    @classmethod
    def for_model(cls, spec, beta, epsilon):
        return cls(float(beta), float(epsilon), spec.k_bound)

    @property
    def horizon(self) -> int:
        if self.k_bound == 0.0:
            return 1
        ratio = self.epsilon * (1.0 - self.beta) / self.k_bound
        if ratio >= 1.0:
            return 1
        T = max(1, math.ceil(math.log(ratio) / math.log(self.beta)))
        # guard against rounding in the logarithms
        while self.tail_bound(T) > self.epsilon:
            T += 1
        return T

    def tail_bound(self, T) -> float:
        """Largest possible discounted cost after stage T."""
        return self.beta ** T * self.k_bound / (1.0 - self.beta)


@dataclass
class DiscountedResult:
    value: float
    error_bound: float
    horizon: int
    design: object
    local_search: bool = False
    bound_gap: float | None = None
    report: SolveReport | None = None


@dataclass
class AverageReport:
    averages: np.ndarray  # A_T for T = 1..T_max
    stage_costs: np.ndarray
    window: float
    limsup_estimate: float
    oscillation: float
    converged: bool
    design: StationaryDesign


def _complete(g: ControllerFn, support, table, rho):
    """Give unseen beliefs the action with the lowest immediate expected cost."""
    for bid in support:
        if bid not in g:
            g[bid] = int(np.argmin(bl.expected_costs(table.vector(bid), rho)))


def _check_atoms(pi, stage, max_atoms):
    if max_atoms is not None and len(pi.atoms) > max_atoms:
        raise BudgetExceeded(len(pi.atoms), max_atoms, stage=stage, what="information-state atoms")


def rollout_stationary(spec, d: StationaryDesign, T, max_atoms=DEFAULT_MAX_ATOMS):
    """Stage costs of a stationary design over ``T`` stages.

    Beliefs the controller has no entry for are filled in on first sight by
    the myopic rule, so the returned design is fully specified on every
    belief it reaches and re-evaluating it gives identical costs.
    """
    g = d.controller
    pi = initial_info_state(spec, d.table)
    costs = np.empty(T)
    for t in range(T):
        pi_g = apply_Ql(apply_Qc(pi, d.encoder, spec), d.memory, spec)
        _check_atoms(pi_g, t + 1, max_atoms)
        _complete(g, pi_g.belief_support(), d.table, spec.rho)
        costs[t] = expected_cost(pi_g, g, spec.rho)
        if t + 1 < T:
            pi = apply_Qg(pi_g, g, spec)
    return costs


def eval_discounted_stationary(spec, d: StationaryDesign, cfg: DiscountConfig,
                               max_atoms=DEFAULT_MAX_ATOMS) -> DiscountedResult:
    """Truncated discounted cost of a stationary design with its error bound."""
    T = cfg.horizon
    costs = rollout_stationary(spec, d, T, max_atoms)
    value = math.fsum(cfg.beta ** t * c for t, c in enumerate(costs))
    return DiscountedResult(value, cfg.tail_bound(T), T, d)


def solve_discounted(spec, cfg: DiscountConfig, budget=DEFAULT_BUDGET) -> DiscountedResult:
    """eps-optimal discounted value via the finite nested recursion at horizon T(eps).

    The optimal infinite-horizon value lies in ``[value, value + error_bound]``.
    """
    T = cfg.horizon
    report = solve_finite(spec, T, beta=cfg.beta, budget=budget)
    return DiscountedResult(report.value, cfg.tail_bound(T), T, report.design, report=report)


class _StageGraph:
    """Atom-level transition structure of a fixed (encoder, memory map) pair.

    Nodes are (x, m, belief) triples. ``A`` maps phase-C nodes to phase-G
    nodes (encoding, channel, memory update); ``B[u]`` maps phase-G nodes to
    next-stage phase-C nodes under action ``u``. Only nodes reachable within
    ``T`` stages under *some* controller are built.
    """

    def __init__(self, spec, c, l, table, T, max_nodes):
        self.spec = spec
        cache = _cache(table, spec)
        self.table = table
        a = spec.alphabets
        ckey, lkey = np.asarray(c).tobytes(), np.asarray(l).tobytes()
        cl, ll = np.asarray(c).tolist(), np.asarray(l).tolist()
        c_nodes, g_nodes = {}, {}
        a_edges, b_edges = [], []

        def node(store, key):
            idx = store.get(key)
            if idx is None:
                idx = store[key] = len(store)
                if len(c_nodes) + len(g_nodes) > max_nodes:
                    raise BudgetExceeded(len(c_nodes) + len(g_nodes), max_nodes, what="closure nodes")
            return idx

        pi1 = initial_info_state(spec, table)
        self.start = {node(c_nodes, (at.x, at.m, at.bid)): at.w for at in pi1.atoms}
        frontier = list(c_nodes)
        expanded_c, expanded_g = set(), set()
        for depth in range(T):
            new_g = []
            for key in frontier:
                if key in expanded_c:
                    continue
                expanded_c.add(key)
                x, m, bid = key
                i = c_nodes[key]
                posts = cache.posterior_ids(bid, np.asarray(c), ckey)
                for s in range(a.n_s):
                    po = cache.obs[x][s]
                    if po == 0.0:
                        continue
                    for y in range(a.n_y):
                        q = cache.chan[cl[s][m]][y]
                        if q == 0.0:
                            continue
                        gkey = (x, ll[s][m], cache.nu_id(posts[y], np.asarray(l), lkey))
                        a_edges.append((i, node(g_nodes, gkey), po * q))
                        new_g.append(gkey)
            if depth + 1 == T:
                break
            frontier = []
            for gkey in new_g:
                if gkey in expanded_g:
                    continue
                expanded_g.add(gkey)
                x, m, bid = gkey
                j = g_nodes[gkey]
                for u in range(a.n_u):
                    nbid = cache.psi_id(bid, u)
                    for x2 in range(a.n_x):
                        p = cache.plant[u][x][x2]
                        if p > 0.0:
                            ckey2 = (x2, m, nbid)
                            b_edges.append((u, j, node(c_nodes, ckey2), p))
                            frontier.append(ckey2)

        nC, nG = len(c_nodes), len(g_nodes)
        self.nG = nG
        i, j, p = zip(*a_edges) if a_edges else ((), (), ())
        self.A = sparse.csr_matrix((p, (i, j)), shape=(nC, nG))
        if b_edges:
            u, j, k, p = map(np.asarray, zip(*b_edges))
            rows = u * nG + j
        else:
            rows = k = p = np.zeros(0, dtype=np.int64)
        # rows u * nG + j hold the transitions of phase-G node j under action u
        self.B = sparse.csr_matrix((p, (rows, k)), shape=(a.n_u * nG, nC))
        self.v0 = np.zeros(nC)
        for i, w in self.start.items():
            self.v0[i] = w
        g_keys = sorted(g_nodes, key=g_nodes.get)
        self.g_x = np.array([k[0] for k in g_keys], dtype=np.int64)
        self.g_bid = [k[2] for k in g_keys]
        self.beliefs = sorted(set(self.g_bid), key=table.order_key)
        pos = {b: k for k, b in enumerate(self.beliefs)}
        self.g_belief_pos = np.array([pos[b] for b in self.g_bid], dtype=np.int64)

    def value(self, acts, beta, T):
        """Truncated discounted cost of the controller ``beliefs[k] -> acts[k]``."""
        u_node = np.asarray(acts, dtype=np.int64)[self.g_belief_pos]
        r = self.spec.rho[self.g_x, u_node]
        step_t = (self.B[u_node * self.nG + np.arange(self.nG)] @ self.A).T.tocsr()
        vG = self.A.T @ self.v0
        total = 0.0
        for t in range(T):
            total += beta ** t * float(vG @ r)
            if t + 1 < T:
                vG = step_t @ vG
        return total


def search_stationary_discounted(spec, cfg: DiscountConfig, budget=DEFAULT_BUDGET, exhaustive_cap=12,
                                 max_nodes=DEFAULT_MAX_NODES, reference=None) -> DiscountedResult:
    """Best stationary design found over all (encoder, memory map) pairs.

    For each pair the controller ranges over the beliefs reachable within
    T(eps) stages under any actions. Tables are enumerated exhaustively when
    there are at most ``exhaustive_cap`` such beliefs; otherwise coordinate
    descent from the myopic table is used and ``local_search`` is set. When
    actions do not affect the plant the myopic table is exactly optimal and
    no search is needed.
    ``reference`` (a :func:`solve_discounted` value) fills in ``bound_gap``.
    """
    T = cfg.horizon
    n_u = spec.alphabets.n_u
    separable = action_independent(spec)
    encoders = list(enumerate_encoders(spec, budget))
    memories = list(enumerate_memories(spec, budget))
    if budget is not None and len(encoders) * len(memories) > budget:
        raise BudgetExceeded(len(encoders) * len(memories), budget, what="(encoder, memory) pairs")
    table = bl.BeliefTable()
    explored = 0
    best = None  # (value, index, c, l, controller, local)
    for idx, (c, l) in enumerate(itertools.product(encoders, memories)):
        if separable:
            # myopic completion is the whole optimization; no closure needed
            explored += 1
            cand = StationaryDesign(c, l, ControllerFn(), table)
            v = eval_discounted_stationary(spec, cand, cfg).value
            if best is None or v < best[0] - TIE_TOL:
                best = (v, idx, c, l, dict(cand.controller), False)
            continue
        graph = _StageGraph(spec, c, l, table, T, max_nodes)
        n = len(graph.beliefs)
        local = n > exhaustive_cap
        if not local:
            count = n_u ** n
            explored += count
            if budget is not None and explored > budget:
                raise BudgetExceeded(explored, budget, what="stationary candidates")
            best_v, best_acts = math.inf, None
            for acts in itertools.product(range(n_u), repeat=n):
                v = graph.value(acts, cfg.beta, T)
                if v < best_v - TIE_TOL:
                    best_v, best_acts = v, acts
        else:
            best_acts = [int(np.argmin(bl.expected_costs(table.vector(b), spec.rho))) for b in graph.beliefs]
            best_v = graph.value(best_acts, cfg.beta, T)
            improved = True
            while improved:
                improved = False
                for k in range(n):
                    for u in range(n_u):
                        if u == best_acts[k]:
                            continue
                        trial = list(best_acts)
                        trial[k] = u
                        explored += 1
                        v = graph.value(trial, cfg.beta, T)
                        if v < best_v - TIE_TOL:
                            best_v, best_acts, improved = v, trial, True
            best_acts = tuple(best_acts)
        if best is None or best_v < best[0] - TIE_TOL:
            best = (best_v, idx, c, l, dict(zip(graph.beliefs, best_acts)), local)

    _, _, c, l, acts, local = best
    g = ControllerFn(acts)
    design = StationaryDesign(c, l, g, table)
    # report through the reference evaluation path
    result = eval_discounted_stationary(spec, design, cfg)
    result.local_search = local
    if reference is not None:
        result.bound_gap = result.value - (reference - cfg.epsilon)
    return result


def eval_average_stationary(spec, d: StationaryDesign, T_max, window=0.1, tol=1e-3,
                            max_atoms=DEFAULT_MAX_ATOMS) -> AverageReport:
    """Running Cesaro averages of a stationary design and a limsup estimate.

    The estimate is the largest running average over the final ``window``
    fraction of stages; ``converged`` is false when those averages spread by
    more than ``tol``.
    """
    if not 0.0 < window <= 1.0:
        raise ValueError("window must be a fraction in (0, 1]")
    costs = rollout_stationary(spec, d, T_max, max_atoms)
    averages = np.cumsum(costs) / np.arange(1, T_max + 1)
    start = min(T_max - 1, int(math.floor((1.0 - window) * T_max)))
    tail = averages[start:]
    osc = float(tail.max() - tail.min())
    return AverageReport(averages, costs, window, float(tail.max()), osc, osc <= tol, d)
