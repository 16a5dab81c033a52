"""Discrete two-stage team problem with a non-classical information structure.

    Y1 = h1(X1, N1),  U1 = g1(Y1),  X2 = f1(X1, U1),  Y2 = h2(X2, N2),  U2 = g2(Y2)

The second controller does not see Y1, so the only state linking the stages
is the marginal pi2 of X2, which is a linear function of pi1 once g1 is fixed.
:func:`solve_two_stage_nested` runs the resulting two-step recursion;
:func:`solve_two_stage_bruteforce` evaluates every pair (g1, g2) directly.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, ModelParseError, ModelValidationError
from .model import STOCHASTIC_TOL, Violation

SCHEMA = "teamdp-w2/1"
TIE_TOL = 1e-12
DEFAULT_BUDGET = 10**7


@dataclass(frozen=True, eq=False)
class TwoStageSpec:
    prior: np.ndarray  # over X1
    noise1: np.ndarray  # law of N1
    noise2: np.ndarray  # law of N2
    h1: np.ndarray  # [x, n] -> y
    h2: np.ndarray
    f1: np.ndarray  # [x, u] -> x2
    rho1: np.ndarray  # [x, u]
    rho2: np.ndarray
    n_y: int
    n_u: int

    @property
    def n_x(self):
        return len(self.prior)

    @property
    def n_n(self):
        return len(self.noise1)


@dataclass
class TwoStageResult:
    value: float
    g1: tuple
    g2: tuple
    evaluations: int


def validate_two_stage(ts: TwoStageSpec) -> list[Violation]:
    out = []
    for name in ("prior", "noise1", "noise2"):
        v = getattr(ts, name)
        if np.any(v < 0) or abs(v.sum() - 1.0) > STOCHASTIC_TOL:
            out.append(Violation("RowNotStochastic", f"{name} is not a probability vector", {"field": name}))
    n_x, n_n = ts.n_x, ts.n_n
    if len(ts.noise2) != n_n:
        out.append(Violation("ShapeMismatch", "noise2 must have the same alphabet as noise1", {"field": "noise2"}))
    for name, shape, hi in (("h1", (n_x, n_n), ts.n_y), ("h2", (n_x, n_n), ts.n_y),
                            ("f1", (n_x, ts.n_u), n_x)):
        v = getattr(ts, name)
        if v.shape != shape:
            out.append(Violation("ShapeMismatch", f"{name} has shape {v.shape}, expected {shape}", {"field": name}))
        elif np.any(v < 0) or np.any(v >= hi):
            out.append(Violation("AlphabetSize", f"{name} has values outside [0, {hi})", {"field": name}))
    for name in ("rho1", "rho2"):
        v = getattr(ts, name)
        if v.shape != (n_x, ts.n_u):
            out.append(Violation("ShapeMismatch", f"{name} has shape {v.shape}", {"field": name}))
        elif not np.all(np.isfinite(v)):
            out.append(Violation("NonFinite", f"{name} has non-finite entries", {"field": name}))
        elif np.any(v < 0):
            out.append(Violation("NegativeCost", f"{name} has negative entries", {"field": name}))
    return out


def build_two_stage(prior, noise1, noise2, h1, h2, f1, rho1, rho2, n_y=None, n_u=None) -> TwoStageSpec:
    arr = lambda v, dt=np.float64: np.array(v, dtype=dt)
    h1, h2, f1 = arr(h1, np.int64), arr(h2, np.int64), arr(f1, np.int64)
    rho1 = arr(rho1)
    n_y = int(max(h1.max(), h2.max()) + 1) if n_y is None else int(n_y)
    n_u = rho1.shape[1] if n_u is None else int(n_u)
    ts = TwoStageSpec(arr(prior), arr(noise1), arr(noise2), h1, h2, f1, rho1, arr(rho2), n_y, n_u)
    bad = validate_two_stage(ts)
    if bad:
        raise ModelValidationError(bad)
    return ts


def q_matrix(ts: TwoStageSpec, g1) -> np.ndarray:
    """Row-stochastic Q with pi2 = pi1 @ Q under first-stage law ``g1``."""
    q = np.zeros((ts.n_x, ts.n_x))
    for x in range(ts.n_x):
        for n in range(ts.n_n):
            q[x, ts.f1[x, g1[ts.h1[x, n]]]] += ts.noise1[n]
    return q


def push(ts: TwoStageSpec, g1, pi1) -> np.ndarray:
    return np.asarray(pi1) @ q_matrix(ts, g1)


def expected_stage_cost(pi, g, h, noise, rho) -> float:
    """Expected cost sum_{x,n} pi(x) P(n) rho(x, g(h(x, n)))."""
    return math.fsum(pi[x] * noise[n] * rho[x, g[h[x, n]]]
                     for x in range(len(pi)) for n in range(len(noise)))


def _laws(ts, budget):
    count = ts.n_u ** ts.n_y
    if budget is not None and count * count > budget:
        raise BudgetExceeded(count * count, budget, what="two-stage design pairs")
    return list(itertools.product(range(ts.n_u), repeat=ts.n_y))


def solve_two_stage_nested(ts: TwoStageSpec, budget=DEFAULT_BUDGET) -> TwoStageResult:
    """V2(pi2) = min_g2 rho2^(pi2, g2);  V1(pi1) = min_g1 rho1^(pi1, g1) + V2(Q(g1) pi1)."""
    laws = _laws(ts, budget)
    memo = {}
    evals = 0

    def v2(pi2):
        nonlocal evals
        key = pi2.tobytes()
        if key not in memo:
            best = (math.inf, None)
            for g2 in laws:
                evals += 1
                v = expected_stage_cost(pi2, g2, ts.h2, ts.noise2, ts.rho2)
                if v < best[0] - TIE_TOL:
                    best = (v, g2)
            memo[key] = best
        return memo[key]

    best = None
    for g1 in laws:
        evals += 1
        now = expected_stage_cost(ts.prior, g1, ts.h1, ts.noise1, ts.rho1)
        later, g2 = v2(push(ts, g1, ts.prior))
        v = now + later
        if best is None or v < best.value - TIE_TOL:
            best = TwoStageResult(v, g1, g2, 0)
    best.evaluations = evals
    return best


def joint_cost(ts: TwoStageSpec, g1, g2) -> float:
    """Exact expected total cost by summing over (x1, n1, n2)."""
    terms = []
    for x1 in range(ts.n_x):
        for n1 in range(ts.n_n):
            p = ts.prior[x1] * ts.noise1[n1]
            if p == 0.0:
                continue
            u1 = g1[ts.h1[x1, n1]]
            x2 = ts.f1[x1, u1]
            terms.append(p * ts.rho1[x1, u1])
            for n2 in range(ts.n_n):
                terms.append(p * ts.noise2[n2] * ts.rho2[x2, g2[ts.h2[x2, n2]]])
    return math.fsum(terms)


def solve_two_stage_bruteforce(ts: TwoStageSpec, budget=DEFAULT_BUDGET) -> TwoStageResult:
    laws = _laws(ts, budget)
    best = None
    for g1 in laws:
        for g2 in laws:
            v = joint_cost(ts, g1, g2)
            if best is None or v < best.value - TIE_TOL:
                best = TwoStageResult(v, g1, g2, 0)
    best.evaluations = len(laws) ** 2
    return best


def two_stage_from_dict(doc) -> TwoStageSpec:
    if not isinstance(doc, dict):
        raise ModelParseError("top level must be an object")
    if doc.get("schema") != SCHEMA:
        raise ModelParseError(f"expected schema {SCHEMA!r}, got {doc.get('schema')!r}", "schema")
    fields = ("prior", "noise1", "noise2", "h1", "h2", "f1", "rho1", "rho2")
    missing = [f for f in fields if f not in doc]
    if missing:
        raise ModelParseError("missing field", missing[0])
    alph = doc.get("alphabets", {})
    try:
        parsed = {f: np.array(doc[f], dtype=np.int64 if f in ("h1", "h2", "f1") else np.float64)
                  for f in fields}
    except (TypeError, ValueError) as exc:
        raise ModelParseError(str(exc)) from None
    return build_two_stage(**parsed, n_y=alph.get("n_y"), n_u=alph.get("n_u"))


def two_stage_to_dict(ts: TwoStageSpec) -> dict:
    return {
        "schema": SCHEMA,
        "alphabets": {"n_x": ts.n_x, "n_y": ts.n_y, "n_u": ts.n_u, "n_n": ts.n_n},
        **{f: getattr(ts, f).tolist() for f in ("prior", "noise1", "noise2", "h1", "h2", "f1", "rho1", "rho2")},
    }


def load_two_stage(path) -> TwoStageSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return two_stage_from_dict(doc)


def binary_two_stage(lam=0.5, first=0.1, second=0.2) -> TwoStageSpec:
    """Binary example: noisy first look, XOR plant, BSC second look, estimation cost."""
    xor = [[0, 1], [1, 0]]
    return build_two_stage([0.5, 0.5], [1 - first, first], [1 - second, second], xor, xor, xor,
                           [[0.0, lam], [0.0, lam]], [[0.0, 1.0], [1.0, 0.0]])


def random_two_stage(rng, max_size=3) -> TwoStageSpec:
    n_x, n_y, n_u, n_n = (int(rng.integers(2, max_size + 1)) for _ in range(4))
    return build_two_stage(
        rng.dirichlet(np.ones(n_x)), rng.dirichlet(np.ones(n_n)), rng.dirichlet(np.ones(n_n)),
        rng.integers(0, n_y, (n_x, n_n)), rng.integers(0, n_y, (n_x, n_n)),
        rng.integers(0, n_x, (n_x, n_u)), rng.uniform(0, 1, (n_x, n_u)), rng.uniform(0, 1, (n_x, n_u)),
        n_y=n_y, n_u=n_u)
