"""Canonical small models and random model generators."""

from __future__ import annotations

import numpy as np

from .model import build_model


def bsc(eps, n=2):
    """Symmetric channel on ``n`` symbols with total crossover ``eps``."""
    k = np.full((n, n), eps / (n - 1) if n > 1 else 0.0)
    np.fill_diagonal(k, 1.0 - eps if n > 1 else 1.0)
    return k


def persistent_plant(stay, n_x=2, n_u=2):
    """Action-independent chain that keeps its state with probability ``stay``."""
    k = bsc(1.0 - stay, n_x)
    return np.broadcast_to(k, (n_u, n_x, n_x)).copy()


def estimation_cost(n_x, n_u):
    return np.array([[float(x != u) for u in range(n_u)] for x in range(n_x)])


def binary_instance(crossover=0.1, stay=0.8, n_m=1):
    """Two states, BSC channel, persistent plant, estimation cost, uniform prior."""
    return build_model(persistent_plant(stay), bsc(crossover), estimation_cost(2, 2),
                       [0.5, 0.5], n_m=n_m)


def noiseless_instance(n_x=2, n_m=1):
    return build_model(persistent_plant(0.7, n_x, n_x), np.eye(n_x), estimation_cost(n_x, n_x),
                       np.full(n_x, 1.0 / n_x), n_m=n_m)


def useless_channel_instance(n_x=2, n_u=2, n_m=1, rng=None):
    """Channel whose output law does not depend on its input."""
    rng = rng if rng is not None else np.random.default_rng(0)
    row = rng.dirichlet(np.ones(2))
    return build_model(_random_kernel(rng, (n_u, n_x), n_x), np.vstack([row, row]),
                       rng.uniform(0, 1, (n_x, n_u)), rng.dirichlet(np.ones(n_x)), n_m=n_m)


def _random_kernel(rng, lead, n, sparsity=0.0):
    k = rng.dirichlet(np.ones(n), size=lead)
    if sparsity > 0:
        mask = rng.random(k.shape) < sparsity
        # keep at least one entry per row
        mask[..., 0] &= ~mask.all(axis=-1)
        k = np.where(mask, 0.0, k)
        k /= k.sum(axis=-1, keepdims=True)
    return k


def random_model(rng, n_x=2, n_s=None, n_m=1, n_z=2, n_y=2, n_u=2, perfect=True, sparsity=0.0):
    """Random model with Dirichlet kernels and uniform [0, 1) costs.

    ``sparsity`` zeroes that fraction of kernel entries (rows renormalized) so
    zero-probability branches are exercised.
    """
    if perfect:
        n_s = n_x
        observation = None
    else:
        n_s = n_s or n_x
        observation = _random_kernel(rng, (n_x,), n_s, sparsity)
    plant = _random_kernel(rng, (n_u, n_x), n_x, sparsity)
    channel = _random_kernel(rng, (n_z,), n_y, sparsity)
    rho = np.round(rng.uniform(0, 1, (n_x, n_u)), 3)
    initial = _random_kernel(rng, (), n_x, sparsity)
    m0 = int(rng.integers(0, n_m))
    return build_model(plant, channel, rho, initial, observation=observation, n_m=n_m,
                       initial_memory=m0)


def forced_state_model(rng, n_x=2, n_y=2, crossover=None):
    """Plant whose next state equals the action; the channel matters only at t=1.

    The set of reachable information states stays small under every design,
    which keeps long discounted horizons exactly solvable.
    """
    plant = np.zeros((n_x, n_x, n_x))
    for u in range(n_x):
        plant[u, :, u] = 1.0
    eps = rng.uniform(0.05, 0.3) if crossover is None else crossover
    channel = bsc(eps, n_x) if n_y == n_x else _random_kernel(rng, (n_x,), n_y)
    rho = np.round(rng.uniform(0, 1, (n_x, n_x)), 3)
    return build_model(plant, channel, rho, rng.dirichlet(np.ones(n_x)))


def iid_state_model(rng, n_x=2, crossover=None):
    """State redrawn from a fixed law each stage regardless of action."""
    q = rng.dirichlet(np.ones(n_x))
    plant = np.broadcast_to(q, (n_x, n_x, n_x)).copy()
    eps = rng.uniform(0.05, 0.3) if crossover is None else crossover
    rho = np.round(rng.uniform(0, 1, (n_x, n_x)), 3)
    return build_model(plant, bsc(eps, n_x), rho, q)
