"""System model: finite alphabets, stochastic kernels, cost, and initial law.

Kernels are stored as dense float64 arrays with fixed index order:

* ``plant[u, x, x']``  = Pr(X_{t+1}=x' | X_t=x, U_t=u)
* ``channel[z, y]``    = Pr(Y=y | Z=z)
* ``observation[x, s]`` = Pr(S=s | X=x)  (identity for a perfect sensor)
* ``rho[x, u]``         instantaneous cost, bounded by ``k_bound``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import ModelParseError, ModelValidationError
from .jsonfmt import dumps

SCHEMA = "teamdp/1"
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Alphabets:
    n_x: int
    n_s: int
    n_m: int
    n_z: int
    n_y: int
    n_u: int

    def as_dict(self):
        return {k: getattr(self, k) for k in ("n_x", "n_s", "n_m", "n_z", "n_y", "n_u")}


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelSpec:
    alphabets: Alphabets
    plant: np.ndarray
    channel: np.ndarray
    observation: np.ndarray
    rho: np.ndarray
    k_bound: float
    initial: np.ndarray
    initial_memory: int = 0
    # arbitrary user metadata carried through load/save untouched
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("plant", "channel", "observation", "rho", "initial"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "k_bound", float(self.k_bound))
        object.__setattr__(self, "initial_memory", int(self.initial_memory))

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            self.alphabets == other.alphabets
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("plant", "channel", "observation", "rho", "initial")
            )
            and self.k_bound == other.k_bound
            and self.initial_memory == other.initial_memory
        )

    __hash__ = None

    @property
    def perfect_observation(self):
        a = self.alphabets
        return a.n_s == a.n_x and np.array_equal(self.observation, np.eye(a.n_x))


def build_model(plant, channel, rho, initial, *, observation=None, n_m=1,
                initial_memory=0, k_bound=None, meta=None) -> ModelSpec:
    """Assemble a :class:`ModelSpec`, inferring alphabet sizes from array shapes.

    ``observation`` defaults to the identity (perfect sensor) and ``k_bound``
    to the largest cost entry. No validation is performed here; call
    :func:`validate` or :func:`check`.
    """
    plant = np.asarray(plant, dtype=float)
    channel = np.asarray(channel, dtype=float)
    rho = np.asarray(rho, dtype=float)
    initial = np.asarray(initial, dtype=float)
    n_u, n_x = plant.shape[0], plant.shape[1]
    if observation is None:
        observation = np.eye(n_x)
    observation = np.asarray(observation, dtype=float)
    if k_bound is None:
        k_bound = float(rho.max()) if rho.size else 0.0
    alph = Alphabets(n_x=n_x, n_s=observation.shape[1], n_m=int(n_m),
                     n_z=channel.shape[0], n_y=channel.shape[1], n_u=n_u)
    return ModelSpec(alph, plant, channel, observation, rho, k_bound, initial,
                     initial_memory, dict(meta or {}))


class Violation(NamedTuple):
    code: str
    message: str
    where: dict


def _check_rows(arr, name, index_names, out):
    sums = arr.sum(axis=-1)
    for idx in zip(*np.nonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)):
        where = {n: int(i) for n, i in zip(index_names, idx)}
        out.append(Violation("RowNotStochastic",
                             f"{name} row {where} sums to {sums[idx]!r}", {"kernel": name, **where}))
    bad = np.argwhere((arr < 0) | (arr > 1))
    for idx in bad:
        where = {n: int(i) for n, i in zip(index_names + ("col",), idx)}
        out.append(Violation("ProbabilityOutOfRange",
                             f"{name} entry {where} = {arr[tuple(idx)]!r}", {"kernel": name, **where}))


def validate(spec: ModelSpec) -> list[Violation]:
    """Return every invariant violation of ``spec`` (empty list if valid)."""
    out: list[Violation] = []
    a = spec.alphabets
    for k, v in a.as_dict().items():
        if not isinstance(v, (int, np.integer)) or v < 1:
            out.append(Violation("AlphabetSize", f"{k} must be an integer >= 1, got {v!r}", {"field": k}))
    if out:
        return out
    shapes = {
        "plant": (a.n_u, a.n_x, a.n_x),
        "channel": (a.n_z, a.n_y),
        "observation": (a.n_x, a.n_s),
        "rho": (a.n_x, a.n_u),
        "initial": (a.n_x,),
    }
    shape_ok = True
    for name, shape in shapes.items():
        arr = getattr(spec, name)
        if arr.shape != shape:
            shape_ok = False
            out.append(Violation("ShapeMismatch", f"{name} has shape {arr.shape}, expected {shape}",
                                 {"field": name}))
        elif not np.all(np.isfinite(arr)):
            shape_ok = False
            out.append(Violation("NonFinite", f"{name} contains non-finite entries", {"field": name}))
    if not shape_ok:
        return out

    _check_rows(spec.plant, "plant", ("u", "x"), out)
    _check_rows(spec.channel, "channel", ("z",), out)
    _check_rows(spec.observation, "observation", ("x",), out)

    init = spec.initial
    if abs(init.sum() - 1.0) > STOCHASTIC_TOL or np.any(init < 0) or np.any(init > 1):
        out.append(Violation("InitialNotStochastic", f"initial law {init.tolist()} is not a PMF", {}))

    if not np.isfinite(spec.k_bound):
        out.append(Violation("CostBoundInfinite", "k_bound must be finite", {}))
    for x, u in np.argwhere(spec.rho < 0):
        out.append(Violation("NegativeCost", f"rho[{x}][{u}] = {spec.rho[x, u]!r} is negative",
                             {"x": int(x), "u": int(u)}))
    for x, u in np.argwhere(spec.rho > spec.k_bound):
        out.append(Violation("CostAboveBound", f"rho[{x}][{u}] = {spec.rho[x, u]!r} exceeds k_bound",
                             {"x": int(x), "u": int(u)}))
    if not 0 <= spec.initial_memory < a.n_m:
        out.append(Violation("InitialMemoryOutOfRange",
                             f"initial_memory {spec.initial_memory} not in [0, {a.n_m})", {}))
    return out


def check(spec: ModelSpec) -> ModelSpec:
    """Raise :class:`ModelValidationError` unless ``spec`` is valid."""
    violations = validate(spec)
    if violations:
        raise ModelValidationError(violations)
    return spec


# -- kernel derivation from functional forms ------------------------------------------


def _as_map(fn, shape):
    """Tabulate a deterministic map given as a callable or an integer array."""
    if callable(fn):
        table = np.empty(shape, dtype=np.int64)
        for idx in np.ndindex(*shape):
            table[idx] = fn(*idx)
        return table
    table = np.asarray(fn, dtype=np.int64)
    if table.shape != tuple(shape):
        raise ModelValidationError([Violation("ShapeMismatch",
                                              f"map has shape {table.shape}, expected {tuple(shape)}", {})])
    return table


def _pmf(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or abs(p.sum() - 1.0) > STOCHASTIC_TOL or np.any(p < 0):
        raise ModelValidationError([Violation("RowNotStochastic", f"{name} is not a PMF", {})])
    return p


def derive_plant_kernel(f: Callable | np.ndarray, p_w, n_x: int, n_u: int) -> np.ndarray:
    """Kernel ``p[u, x, x']`` of ``X' = f(x, u, W)`` with ``W ~ p_w``."""
    p_w = _pmf(p_w, "p_w")
    table = _as_map(f, (n_x, n_u, len(p_w)))
    if table.min() < 0 or table.max() >= n_x:
        raise ModelValidationError([Violation("ShapeMismatch", "f maps outside the state alphabet", {})])
    kernel = np.zeros((n_u, n_x, n_x))
    for x, u, w in np.ndindex(*table.shape):
        kernel[u, x, table[x, u, w]] += p_w[w]
    return kernel


def derive_channel_kernel(h: Callable | np.ndarray, p_n, n_z: int, n_y: int) -> np.ndarray:
    """Kernel ``p[z, y]`` of ``Y = h(z, N)`` with ``N ~ p_n``."""
    p_n = _pmf(p_n, "p_n")
    table = _as_map(h, (n_z, len(p_n)))
    if table.min() < 0 or table.max() >= n_y:
        raise ModelValidationError([Violation("ShapeMismatch", "h maps outside the output alphabet", {})])
    kernel = np.zeros((n_z, n_y))
    for z, n in np.ndindex(*table.shape):
        kernel[z, table[z, n]] += p_n[n]
    return kernel


def absorb_feedback_noise(f, h_fb, p_w, p_fb, n_x: int, n_u: int) -> np.ndarray:
    """Plant kernel when the applied input is ``h_fb(u, N')`` rather than ``u``.

    The feedback noise is folded into an enlarged plant disturbance
    ``(W, N')`` with independent components, giving an equivalent plant driven
    by the controller's own action.
    """
    p_w = _pmf(p_w, "p_w")
    p_fb = _pmf(p_fb, "p_fb")
    f_tab = _as_map(f, (n_x, n_u, len(p_w)))
    fb_tab = _as_map(h_fb, (n_u, len(p_fb)))
    if fb_tab.min() < 0 or fb_tab.max() >= n_u:
        raise ModelValidationError([Violation("ShapeMismatch", "h_fb maps outside the action alphabet", {})])
    n_fb = len(p_fb)

    def composed(x, u, k):
        w, nf = divmod(k, n_fb)
        return f_tab[x, fb_tab[u, nf], w]

    return derive_plant_kernel(composed, np.outer(p_w, p_fb).ravel(), n_x, n_u)


# -- persistence ---------------------------------------------------------------------


def _num(v, locus):
    if isinstance(v, bool):
        raise ModelParseError(f"expected a number, got {v!r}", locus)
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise ModelParseError(f"not a decimal number: {v!r}", locus) from None
    raise ModelParseError(f"expected a number, got {type(v).__name__}", locus)


def _array(obj, shape, locus):
    if len(shape) == 0:
        return _num(obj, locus)
    if not isinstance(obj, list):
        raise ModelParseError(f"expected a list of length {shape[0]}", locus)
    if len(obj) != shape[0]:
        raise ModelParseError(f"expected length {shape[0]}, got {len(obj)}", locus)
    return [_array(v, shape[1:], f"{locus}[{i}]") for i, v in enumerate(obj)]


def _require(doc, key, locus=""):
    if key not in doc:
        raise ModelParseError("missing required field", f"{locus}{key}")
    return doc[key]


def _int_field(doc, key, locus, default=None):
    v = doc.get(key, default) if default is not None else _require(doc, key, locus)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ModelParseError(f"expected an integer, got {v!r}", f"{locus}{key}")
    return v


def _normalize_rows(arr):
    sums = arr.sum(axis=-1, keepdims=True)
    return np.where(sums > 0, arr / np.where(sums > 0, sums, 1.0), arr)


def spec_from_dict(doc: dict, *, renormalize: bool = False, validate_model: bool = True) -> ModelSpec:
    if not isinstance(doc, dict):
        raise ModelParseError("top-level value must be an object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ModelParseError(f"unsupported schema {schema!r}, expected {SCHEMA!r}", "schema")
    alph = _require(doc, "alphabets")
    if not isinstance(alph, dict):
        raise ModelParseError("expected an object", "alphabets")
    sizes = {k: _int_field(alph, k, "alphabets.") for k in ("n_x", "n_s", "n_m", "n_z", "n_y", "n_u")}
    for k, v in sizes.items():
        if v < 1:
            raise ModelParseError("must be >= 1", f"alphabets.{k}")
    a = Alphabets(**sizes)

    plant = np.array(_array(_require(doc, "plant"), (a.n_u, a.n_x, a.n_x), "plant"))
    channel = np.array(_array(_require(doc, "channel"), (a.n_z, a.n_y), "channel"))
    if "observation" in doc and doc["observation"] is not None:
        observation = np.array(_array(doc["observation"], (a.n_x, a.n_s), "observation"))
    else:
        if a.n_s != a.n_x:
            raise ModelParseError("required when n_s != n_x", "observation")
        observation = np.eye(a.n_x)
    cost = _require(doc, "cost")
    if not isinstance(cost, dict):
        raise ModelParseError("expected an object", "cost")
    rho = np.array(_array(_require(cost, "rho", "cost."), (a.n_x, a.n_u), "cost.rho"))
    k_bound = _num(cost["k_bound"], "cost.k_bound") if cost.get("k_bound") is not None else float(rho.max())
    initial = np.array(_array(_require(doc, "initial"), (a.n_x,), "initial"))
    m0 = _int_field(doc, "initial_memory", "", default=0) if "initial_memory" in doc else 0

    if renormalize:
        plant, channel, observation = (_normalize_rows(k) for k in (plant, channel, observation))
        initial = _normalize_rows(initial)

    spec = ModelSpec(a, plant, channel, observation, rho, k_bound, initial, m0, dict(doc.get("meta", {})))
    if validate_model:
        check(spec)
    return spec


def _dec(v):
    # repr gives the shortest string that round-trips exactly
    return repr(float(v))


def _dec_array(arr):
    if arr.ndim == 0:
        return _dec(arr)
    return [_dec_array(a) for a in arr]


def spec_to_dict(spec: ModelSpec) -> dict:
    doc = {
        "schema": SCHEMA,
        "alphabets": spec.alphabets.as_dict(),
        "plant": _dec_array(spec.plant),
        "channel": _dec_array(spec.channel),
        "observation": _dec_array(spec.observation),
        "cost": {"rho": _dec_array(spec.rho), "k_bound": _dec(spec.k_bound)},
        "initial": _dec_array(spec.initial),
        "initial_memory": spec.initial_memory,
    }
    if spec.meta:
        doc["meta"] = spec.meta
    return doc


def load_spec(path, *, renormalize: bool = False, validate_model: bool = True) -> ModelSpec:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}, column {exc.colno}") from None
    return spec_from_dict(doc, renormalize=renormalize, validate_model=validate_model)


def save_spec(spec: ModelSpec, path) -> None:
    Path(path).write_text(dumps(spec_to_dict(spec)))
