"""Seeded Monte Carlo simulation of the closed loop.

Random numbers come from a counter-based generator: the uniform used for
draw ``k`` of run ``i`` is a hash of ``(seed, i, k)``. Runs are therefore
independent of each other and of how they are split across threads.

Within a stage the draws are taken in the order observation, channel,
plant; draw 0 of every run is the initial state.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import belief as bl
from .errors import InvariantViolation, MissingControllerEntry
from .infostate import _cache
from .oracle import OracleResult

CHUNK = 1 << 16
TRACE_FIELDS = ("run", "t", "x", "s", "m", "z", "y", "u", "cost")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    # splitmix64 finalizer on uint64 arrays (wrapping arithmetic)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def run_keys(seed, runs):
    """Per-run stream keys for run indices ``runs``."""
    base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    with np.errstate(over="ignore"):
        return _mix(base + np.asarray(runs, dtype=np.uint64) * _GOLDEN)


def uniforms(keys, draw):
    """Uniforms in [0, 1) for draw index ``draw`` of each keyed run."""
    with np.errstate(over="ignore"):
        z = _mix(keys ^ _mix(np.array([draw + 1], dtype=np.uint64) * _M2))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def _cdf(kernel):
    """Row CDFs that reach exactly 1 at the last positive entry."""
    k = np.asarray(kernel, dtype=np.float64)
    cdf = np.cumsum(k, axis=-1)
    last = k.shape[-1] - 1 - np.argmax(k[..., ::-1] > 0, axis=-1)
    idx = np.arange(k.shape[-1])
    cdf = np.where(idx >= last[..., None], 1.0, cdf)
    return cdf


def _sample(cdf_rows, u):
    # inverse CDF; zero-probability symbols have empty intervals
    return (u[:, None] >= cdf_rows[:, :-1]).sum(axis=1)


@dataclass
class SimConfig:
    seed: int
    n_runs: int
    T: int
    threads: int = 1
    trace_runs: int = 0  # runs whose step records are kept


@dataclass
class Trace:
    """Step records of one run; ``m`` is the memory read by the encoder at that step."""

    t: np.ndarray
    x: np.ndarray
    s: np.ndarray
    m: np.ndarray
    z: np.ndarray
    y: np.ndarray
    u: np.ndarray
    cost: np.ndarray


@dataclass
class SimResult:
    mean: float
    std: float
    totals: np.ndarray
    traces: dict | None  # field -> (trace_runs, T) array

    @property
    def n_runs(self):
        return len(self.totals)

    def trace(self, run) -> Trace:
        tr = self.traces
        return Trace(np.arange(1, tr["x"].shape[1] + 1), *(tr[f][run] for f in TRACE_FIELDS[2:]))

    def write_traces(self, path):
        if not self.traces:
            raise ValueError("no traces were recorded")
        n, T = self.traces["x"].shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_FIELDS)
            for r in range(n):
                for t in range(T):
                    row = [r, t + 1] + [int(self.traces[f][r, t]) for f in TRACE_FIELDS[2:8]]
                    w.writerow(row + [repr(float(self.traces["cost"][r, t]))])


@dataclass
class HistoryDesign:
    """Design whose controllers are tables over histories ``(ys, us)``."""

    encoders: list
    memories: list
    controllers: list

    @classmethod
    def from_oracle(cls, res):
        return cls(res.encoders, res.memories, res.controller)


class _Automaton:
    """Controller compiled to per-stage arrays: act[t][node, y] and nxt[t][node, y].

    An entry of -1 in ``act`` marks a controller gap; runs that reach it raise
    :class:`MissingControllerEntry`.
    """

    def __init__(self, encoders, memories, act, nxt, labels):
        self.encoders = [np.asarray(c) for c in encoders]
        self.memories = [np.asarray(l) for l in memories]
        self.act = act
        self.nxt = nxt
        self.labels = labels  # per stage, node -> description for diagnostics


def _stage_maps(design, T):
    """Stage-t (encoder, memory map, controller) for finite or stationary designs."""
    if hasattr(design, "encoder"):
        return [(design.encoder, design.memory, design.controller)] * T, True
    if len(design.encoders) < T:
        raise ValueError(f"design covers {len(design.encoders)} stages, {T} requested")
    return list(zip(design.encoders, design.memories, design.controllers))[:T], False


def compile_belief_design(spec, design, T) -> _Automaton:
    """Walk every belief reachable under ``design`` and tabulate the controller.

    Stationary designs get myopic completion on unseen beliefs, matching
    :func:`teamdp.solver_infinite.rollout_stationary`.
    """
    stages, stationary = _stage_maps(design, T)
    table = design.table
    cache = _cache(table, spec)
    n_y = spec.alphabets.n_y
    nodes = [table.canonicalize(bl.initial_belief(spec))]
    act, nxt, labels = [], [], []
    for t, (c, l, g) in enumerate(stages):
        c, l = np.asarray(c), np.asarray(l)
        ckey, lkey = c.tobytes(), l.tobytes()
        a = np.full((len(nodes), n_y), -1, dtype=np.int64)
        n = np.zeros((len(nodes), n_y), dtype=np.int64)
        following = {}
        for i, bid in enumerate(nodes):
            posts = cache.posterior_ids(bid, c, ckey)
            for y in range(n_y):
                if posts[y] < 0:
                    continue
                gid = cache.nu_id(posts[y], l, lkey)
                if gid not in g:
                    if not stationary:
                        continue
                    g[gid] = int(np.argmin(bl.expected_costs(table.vector(gid), spec.rho)))
                u = g[gid]
                a[i, y] = u
                if t + 1 < T:
                    nb = cache.psi_id(gid, u)
                    n[i, y] = following.setdefault(nb, len(following))
        act.append(a)
        nxt.append(n)
        labels.append(lambda i, nodes=nodes: table.vector(nodes[i]).tolist())
        nodes = sorted(following, key=following.get)
    return _Automaton([s[0] for s in stages], [s[1] for s in stages], act, nxt, labels)


def compile_history_design(spec, design: HistoryDesign, T) -> _Automaton:
    """Tabulate history controllers; node ids enumerate histories (ys, us) of the previous stage."""
    a = spec.alphabets
    act, nxt, labels = [], [], []
    prev = [((), ())]
    for t in range(T):
        g = design.controllers[t]
        aa = np.full((len(prev), a.n_y), -1, dtype=np.int64)
        nn = np.zeros((len(prev), a.n_y), dtype=np.int64)
        following = []
        for i, (ys, us) in enumerate(prev):
            for y in range(a.n_y):
                h = (ys + (y,), us)
                u = g.get(h, -1)
                aa[i, y] = u
                if u >= 0 and t + 1 < T:
                    nn[i, y] = len(following)
                    following.append((h[0], us + (u,)))
        act.append(aa)
        nxt.append(nn)
        labels.append(lambda i, prev=prev: prev[i])
        prev = following
    return _Automaton(design.encoders[:T], design.memories[:T], act, nxt, labels)


def compile_design(spec, design, T) -> _Automaton:
    if isinstance(design, OracleResult):
        design = HistoryDesign.from_oracle(design)
    if isinstance(design, HistoryDesign):
        return compile_history_design(spec, design, T)
    return compile_belief_design(spec, design, T)


def _simulate_chunk(spec, auto, seed, runs, T, keep):
    cdf_obs = _cdf(spec.observation)
    cdf_chan = _cdf(spec.channel)
    cdf_plant = _cdf(spec.plant)
    keys = run_keys(seed, runs)
    n = len(runs)
    x = _sample(np.broadcast_to(_cdf(spec.initial), (n, spec.alphabets.n_x)), uniforms(keys, 0))
    m = np.full(n, spec.initial_memory, dtype=np.int64)
    node = np.zeros(n, dtype=np.int64)
    costs = np.empty((n, T))
    rec = {f: np.empty((keep, T), dtype=np.int64) for f in TRACE_FIELDS[2:8]} if keep else None
    for t in range(T):
        c, l = auto.encoders[t], auto.memories[t]
        s = _sample(cdf_obs[x], uniforms(keys, 1 + 3 * t))
        z = c[s, m]
        y = _sample(cdf_chan[z], uniforms(keys, 2 + 3 * t))
        m_new = l[s, m]
        u = auto.act[t][node, y]
        bad = np.flatnonzero(u < 0)
        if bad.size:
            r = bad[0]
            raise MissingControllerEntry(t + 1, auto.labels[t](int(node[r])),
                                         prefix={"run": int(runs[r]), "t": t + 1, "y": int(y[r])})
        costs[:, t] = spec.rho[x, u]
        if keep:
            for f, v in zip(("x", "s", "m", "z", "y", "u"), (x, s, m, z, y, u)):
                rec[f][:, t] = v[:keep]
        if t + 1 < T:
            x = _sample(cdf_plant[u, x], uniforms(keys, 3 + 3 * t))
            node = auto.nxt[t][node, y]
        m = m_new
    if keep:
        rec["cost"] = costs[:keep].copy()
    # per-run totals summed in stage order, independent of chunking
    return costs.sum(axis=1), rec


def simulate(spec, design, cfg: SimConfig) -> SimResult:
    """Empirical mean and sample std of the total cost over ``cfg.n_runs`` runs.

    ``design`` may be a belief-form design (finite or stationary) or a
    :class:`HistoryDesign`. Results depend only on ``(spec, design, cfg.seed,
    cfg.n_runs, cfg.T)``; the thread count only changes speed.
    """
    if cfg.n_runs < 1 or cfg.T < 1:
        raise ValueError("n_runs and T must be positive")
    auto = compile_design(spec, design, cfg.T)
    starts = range(0, cfg.n_runs, CHUNK)
    keep_total = min(cfg.trace_runs, cfg.n_runs)

    def work(start):
        runs = np.arange(start, min(start + CHUNK, cfg.n_runs), dtype=np.uint64)
        keep = max(0, min(keep_total - start, len(runs)))
        return _simulate_chunk(spec, auto, cfg.seed, runs, cfg.T, keep)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    totals = np.concatenate([p[0] for p in parts])
    mean = math.fsum(totals) / len(totals)
    std = math.sqrt(math.fsum((totals - mean) ** 2) / (len(totals) - 1)) if len(totals) > 1 else 0.0
    traces = None
    if keep_total:
        recs = [p[1] for p in parts if p[1] is not None]
        traces = {f: np.concatenate([r[f] for r in recs]) for f in recs[0]}
    return SimResult(mean, std, totals, traces)


def replay_belief(spec, design, trace: Trace) -> list[np.ndarray]:
    """Controller beliefs (over X_t, M_t) along a recorded run.

    Also checks that the trace obeys the design and the model tables; the
    first violation raises :class:`InvariantViolation` naming the step.
    """
    T = len(trace.x)
    stages, stationary = _stage_maps(design, T)
    table = design.table
    b = bl.initial_belief(spec)
    out = []
    for t, (c, l, g) in enumerate(stages):
        x, s, m, z, y, u = (int(v[t]) for v in (trace.x, trace.s, trace.m, trace.z, trace.y, trace.u))
        step = t + 1
        if t == 0 and m != spec.initial_memory:
            raise InvariantViolation(f"step {step}: memory {m} differs from the initial memory")
        if t > 0 and m != int(stages[t - 1][1][int(trace.s[t - 1]), int(trace.m[t - 1])]):
            raise InvariantViolation(f"step {step}: memory does not follow the memory map")
        if z != int(np.asarray(c)[s, m]):
            raise InvariantViolation(f"step {step}: channel input {z} does not follow the encoder")
        if trace.cost[t] != spec.rho[x, u]:
            raise InvariantViolation(f"step {step}: cost differs from rho[x][u]")
        post, _ = bl.channel_update(bl.sense(b, spec.observation), np.asarray(c), spec.channel, y)
        bid = table.canonicalize(bl.memory_update(post, np.asarray(l)))
        bg = table.vector(bid)
        if bid in g:
            expected = g[bid]
        elif stationary:
            expected = int(np.argmin(bl.expected_costs(bg, spec.rho)))
        else:
            raise MissingControllerEntry(step, bg.tolist())
        if expected != u:
            raise InvariantViolation(f"step {step}: action {u} but the controller gives {expected}")
        out.append(bg)
        b = bl.psi(bg, u, spec.plant)
    return out
