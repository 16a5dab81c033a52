"""Controller belief calculus over (state, sensor memory).

A belief is an array ``b[x, m]``; between the channel update and the memory
update the controller carries an extended belief ``eb[x, s, m]`` that also
tracks the sensor's observation. One stage of the controller's filter runs

    b (over X_t, M_{t-1}) -> sense -> channel_update(y) -> memory_update -> act(u) -> psi

Encoders and memory maps are integer arrays indexed ``[s, m]``.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ZeroProbabilityOutput

MASS_TOL = 1e-12


def initial_belief(spec) -> np.ndarray:
    b = np.zeros((spec.alphabets.n_x, spec.alphabets.n_m))
    b[:, spec.initial_memory] = spec.initial
    return b


def psi(b, u, plant) -> np.ndarray:
    """Predict through the plant under action ``u``: out[x', m] = sum_x b[x, m] p[u, x, x']."""
    return plant[u].T @ b


def sense(b, observation) -> np.ndarray:
    """Attach the sensor observation: out[x, s, m] = b[x, m] * obs[x, s]."""
    return b[:, None, :] * observation[:, :, None]


def output_likelihood(encoder, channel, y) -> np.ndarray:
    """Pr(Y=y | s, m) under ``encoder``, indexed [s, m]."""
    return channel[encoder, y]


def channel_update(eb, encoder, channel, y):
    """Bayes update of an extended belief on channel output ``y``.

    Returns ``(posterior, y_prob)``. Raises :class:`ZeroProbabilityOutput`
    when ``y`` cannot occur; callers prune such branches.
    """
    joint = eb * output_likelihood(encoder, channel, y)[None, :, :]
    y_prob = float(joint.sum())
    if y_prob <= 0.0:
        raise ZeroProbabilityOutput(f"output {y} has zero probability")
    return joint / y_prob, y_prob


def memory_update(eb, mem_map) -> np.ndarray:
    """Push the memory through ``mem_map`` and drop the observation coordinate."""
    n_x, n_s, n_m = eb.shape
    out = np.zeros((n_x, n_m))
    for s in range(n_s):
        for m in range(n_m):
            out[:, mem_map[s, m]] += eb[:, s, m]
    return out


def expected_costs(b, rho) -> np.ndarray:
    """Vector over actions of sum_{x,m} b[x, m] rho[x, u]."""
    return b.sum(axis=1) @ rho


class BeliefTable:
    """Hash-consing store assigning stable integer ids to belief vectors.

    Coordinates are rounded to a grid of ``tol / 10`` before hashing, so
    vectors that agree to well within ``tol`` share an id. The first vector
    seen for a key is the one returned by :meth:`vector`. Ids are local to
    one table and must never be persisted.

    ``memo`` is scratch space for callers caching belief-level transitions
    keyed by ids from this table.
    """

    def __init__(self, tol: float = 1e-9):
        self.tol = tol
        self._scale = 10.0 / tol
        self._ids: dict = {}
        self._vectors: list[np.ndarray] = []
        self._keys: list[tuple] = []
        self._lock = threading.Lock()
        self.memo: dict = {}

    def __len__(self):
        return len(self._vectors)

    def _key(self, b):
        q = np.rint(b * self._scale).astype(np.int64)
        return b.shape, q.tobytes()

    def canonicalize(self, b) -> int:
        b = np.asarray(b, dtype=np.float64)
        key = self._key(b)
        bid = self._ids.get(key)
        if bid is not None:
            return bid
        with self._lock:
            bid = self._ids.get(key)
            if bid is None:
                bid = len(self._vectors)
                v = b.copy()
                v.setflags(write=False)
                self._vectors.append(v)
                self._keys.append(tuple(np.rint(b * self._scale).astype(np.int64).ravel().tolist()))
                self._ids[key] = bid
        return bid

    def vector(self, bid: int) -> np.ndarray:
        return self._vectors[bid]

    def order_key(self, bid: int) -> tuple:
        """Sort key independent of id assignment order (the quantized vector)."""
        return self._keys[bid]


def canonicalize(b, table: BeliefTable) -> int:
    return table.canonicalize(b)
