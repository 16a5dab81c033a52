"""Designer's information states and their linear stage transformations.

An information state is a finitely supported probability measure over
(true state, true memory, controller belief). Three phases occur within a
stage:

* ``"C"`` before encoding: atoms over (X_t, M_{t-1}, predicted belief)
* ``"L"`` after the channel: atoms also carry the sensed symbol S_t and the
  belief is the extended posterior over (X, S, M)
* ``"G"`` after the memory update: atoms over (X_t, M_t, belief on X_t, M_t)

Weights pair the *true* state with the controller's *belief*; grouping atoms
by belief and normalizing recovers that belief.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import belief as bl
from .errors import InvariantViolation, MissingControllerEntry, ZeroProbabilityOutput

PRUNE_BELOW = 1e-15
MAX_PRUNED_MASS = 1e-12
FINGERPRINT_SCALE = 1e10


class Atom(NamedTuple):
    x: int
    s: int  # sensed symbol, phase "L" only (-1 otherwise)
    m: int
    bid: int
    w: float


@dataclass(frozen=True, eq=False)
class InfoState:
    phase: str
    atoms: tuple
    table: bl.BeliefTable

    @classmethod
    def from_weights(cls, phase, weights, table):
        """Build from a mapping ``(x, s, m, bid) -> weight``; tiny weights are pruned."""
        kept = {}
        pruned = 0.0
        for key, w in weights.items():
            if w < PRUNE_BELOW:
                pruned += w
            else:
                kept[key] = w
        if pruned > MAX_PRUNED_MASS:
            raise InvariantViolation(f"pruned mass {pruned} exceeds {MAX_PRUNED_MASS}")
        if pruned > 0.0 and kept:
            scale = (math.fsum(kept.values()) + pruned) / math.fsum(kept.values())
            kept = {k: w * scale for k, w in kept.items()}
        atoms = tuple(Atom(*k, w) for k, w in sorted(kept.items()))
        return cls(phase, atoms, table)

    def total(self) -> float:
        return math.fsum(a.w for a in self.atoms)

    def fingerprint(self):
        return self.phase, tuple(
            (a.x, a.s, a.m, a.bid, round(a.w * FINGERPRINT_SCALE)) for a in self.atoms
        )

    def belief_support(self) -> list[int]:
        """Distinct belief ids, ordered by belief value (not by id)."""
        bids = {a.bid for a in self.atoms}
        return sorted(bids, key=self.table.order_key)

    def weights(self) -> dict:
        return {(a.x, a.s, a.m, a.bid): a.w for a in self.atoms}

    def mix(self, other: "InfoState", alpha: float) -> "InfoState":
        """Convex combination ``alpha * self + (1 - alpha) * other``."""
        if other.phase != self.phase or other.table is not self.table:
            raise ValueError("can only mix states of the same phase and belief table")
        out = defaultdict(float)
        for a in self.atoms:
            out[a[:4]] += alpha * a.w
        for a in other.atoms:
            out[a[:4]] += (1.0 - alpha) * a.w
        return InfoState.from_weights(self.phase, out, self.table)

    def to_json(self) -> dict:
        atoms = []
        for a in self.atoms:
            d = {"x": a.x, "m": a.m, "belief": self.table.vector(a.bid).tolist(), "w": a.w}
            if self.phase == "L":
                d["s"] = a.s
            atoms.append(d)
        return {"phase": self.phase, "atoms": atoms}


class ControllerFn(dict):
    """Controller table: belief id -> action."""

    stage = None

    def __missing__(self, bid):
        raise MissingControllerEntry(self.stage, bid)


class _Cache:
    """Per-(table, model) memo of belief-level transitions."""

    def __init__(self, spec, table):
        self.spec = spec
        self.table = table
        self.obs = spec.observation.tolist()
        self.chan = spec.channel.tolist()
        self.plant = spec.plant.tolist()
        self.posteriors = {}
        self.nu = {}
        self.psi = {}

    def posterior_ids(self, bid, c, ckey):
        hit = self.posteriors.get((bid, ckey))
        if hit is None:
            eb = bl.sense(self.table.vector(bid), self.spec.observation)
            ids = []
            for y in range(self.spec.alphabets.n_y):
                try:
                    post, _ = bl.channel_update(eb, c, self.spec.channel, y)
                except ZeroProbabilityOutput:
                    ids.append(-1)
                else:
                    ids.append(self.table.canonicalize(post))
            hit = self.posteriors[(bid, ckey)] = tuple(ids)
        return hit

    def nu_id(self, ebid, l, lkey):
        hit = self.nu.get((ebid, lkey))
        if hit is None:
            hit = self.nu[(ebid, lkey)] = self.table.canonicalize(
                bl.memory_update(self.table.vector(ebid), l))
        return hit

    def psi_id(self, bid, u):
        hit = self.psi.get((bid, u))
        if hit is None:
            hit = self.psi[(bid, u)] = self.table.canonicalize(
                bl.psi(self.table.vector(bid), u, self.spec.plant))
        return hit


def _cache(table, spec) -> _Cache:
    entry = table.memo.get(id(spec))
    if entry is None or entry.spec is not spec:
        entry = table.memo[id(spec)] = _Cache(spec, table)
    return entry


def _check_phase(pi, phase):
    if pi.phase != phase:
        raise ValueError(f"expected a phase {phase!r} information state, got {pi.phase!r}")


def initial_info_state(spec, table=None) -> InfoState:
    """Phase C state at t=1: true state from the prior, belief equal to the prior."""
    table = table if table is not None else bl.BeliefTable()
    bid = table.canonicalize(bl.initial_belief(spec))
    m0 = spec.initial_memory
    weights = {(x, -1, m0, bid): float(p) for x, p in enumerate(spec.initial) if p > 0}
    return InfoState.from_weights("C", weights, table)


def apply_Qc(pi: InfoState, c, spec) -> InfoState:
    """Encoder and channel step: phase C -> phase L."""
    _check_phase(pi, "C")
    c = np.asarray(c)
    cache = _cache(pi.table, spec)
    ckey = c.tobytes()
    cl = c.tolist()
    n_s, n_y = spec.alphabets.n_s, spec.alphabets.n_y
    out = defaultdict(float)
    for a in pi.atoms:
        posts = cache.posterior_ids(a.bid, c, ckey)
        orow = cache.obs[a.x]
        for s in range(n_s):
            po = orow[s]
            if po == 0.0:
                continue
            crow = cache.chan[cl[s][a.m]]
            for y in range(n_y):
                q = crow[y]
                if q == 0.0:
                    continue
                ebid = posts[y]
                if ebid < 0:
                    raise InvariantViolation("true outcome has zero probability under the belief")
                out[(a.x, s, a.m, ebid)] += a.w * po * q
    return InfoState.from_weights("L", out, pi.table)


def apply_Ql(pi: InfoState, l, spec) -> InfoState:
    """Memory update: phase L -> phase G (deterministic pushforward)."""
    _check_phase(pi, "L")
    l = np.asarray(l)
    cache = _cache(pi.table, spec)
    lkey = l.tobytes()
    ll = l.tolist()
    out = defaultdict(float)
    for a in pi.atoms:
        out[(a.x, -1, ll[a.s][a.m], cache.nu_id(a.bid, l, lkey))] += a.w
    return InfoState.from_weights("G", out, pi.table)


def apply_Qg(pi: InfoState, g, spec) -> InfoState:
    """Control and plant step: phase G -> phase C of the next stage."""
    _check_phase(pi, "G")
    cache = _cache(pi.table, spec)
    n_x = spec.alphabets.n_x
    out = defaultdict(float)
    for a in pi.atoms:
        u = g[a.bid]
        nbid = cache.psi_id(a.bid, u)
        prow = cache.plant[u][a.x]
        for x2 in range(n_x):
            p = prow[x2]
            if p > 0.0:
                out[(x2, -1, a.m, nbid)] += a.w * p
    return InfoState.from_weights("C", out, pi.table)


def expected_cost(pi: InfoState, g, rho) -> float:
    """Expected instantaneous cost: true state from the atom, action from its belief."""
    _check_phase(pi, "G")
    return math.fsum(a.w * float(rho[a.x, g[a.bid]]) for a in pi.atoms)


def group_masses(pi: InfoState) -> dict:
    """Per-belief vector of atom masses over (x, m) or, in phase L, (x, s, m).

    Normalizing a group's masses reproduces its belief when the state is
    consistent.
    """
    groups = {}
    for a in pi.atoms:
        shape = pi.table.vector(a.bid).shape
        arr = groups.setdefault(a.bid, np.zeros(shape))
        idx = (a.x, a.s, a.m) if pi.phase == "L" else (a.x, a.m)
        arr[idx] += a.w
    return groups


def best_actions(pi: InfoState, rho) -> dict:
    """Per-belief minimizer of the group's expected cost (lowest action on ties)."""
    out = {}
    for bid, masses in group_masses(pi).items():
        costs = masses.sum(axis=1) @ rho
        out[bid] = int(np.argmin(costs))
    return out


def compose_Qhat(c, l, spec):
    """Encoder-then-memory map from phase C to phase G."""
    return lambda pi: apply_Ql(apply_Qc(pi, c, spec), l, spec)


def compose_Qtilde(c, l, g, spec):
    """Full-stage map from phase C to the next stage's phase C."""
    qhat = compose_Qhat(c, l, spec)
    return lambda pi: apply_Qg(qhat(pi), g, spec)
