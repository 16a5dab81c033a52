import math

import numpy as np
import pytest

from teamdp.errors import BudgetExceeded
from teamdp.instances import binary_instance, random_model
from teamdp.oracle import (
    brute_force_value,
    exact_joint_distribution,
    histories,
    history_controller_value,
)


def _random_history_design(spec, T, rng):
    a = spec.alphabets
    c = [rng.integers(0, a.n_z, (a.n_s, a.n_m)) for _ in range(T)]
    l = [rng.integers(0, a.n_m, (a.n_s, a.n_m)) for _ in range(T)]
    g = [{h: int(rng.integers(0, a.n_u)) for h in histories(spec, t)} for t in range(1, T + 1)]
    return c, l, g


def test_history_count(binary):
    assert len(list(histories(binary, 3))) == 2 ** 3 * 2 ** 2


def test_binary_oracle_value(binary):
    res = brute_force_value(binary, 2)
    assert res.value == pytest.approx(0.2, abs=1e-12)
    # the last memory map is never read and stays at the first candidate
    assert np.array_equal(res.memories[-1], np.zeros((2, 1)))


def test_exhaustive_controllers_agree(rng):
    spec = random_model(rng)
    fast = brute_force_value(spec, 2)
    slow = brute_force_value(spec, 2, exhaustive=True)
    assert slow.value == pytest.approx(fast.value, abs=1e-12)


def test_budget(binary):
    with pytest.raises(BudgetExceeded):
        brute_force_value(binary, 3, budget=10)


def test_joint_distribution_is_a_distribution(rng):
    spec = random_model(rng, n_m=2, perfect=False, n_s=2, sparsity=0.2)
    c, l, g = _random_history_design(spec, 3, rng)
    for t in (1, 2, 3):
        jd = exact_joint_distribution(spec, c, l, g, t)
        assert jd.total() == pytest.approx(1.0, abs=1e-12)
        hp = jd.marginal_histories()
        assert math.fsum(hp.values()) == pytest.approx(1.0, abs=1e-12)


def test_all_conditionals_match_single_queries(rng):
    spec = random_model(rng, n_m=2, perfect=False, n_s=2)
    c, l, g = _random_history_design(spec, 2, rng)
    jd = exact_joint_distribution(spec, c, l, g, 2)
    ext, post, pred = jd.all_conditionals()
    for (ys, us), e in ext.items():
        assert np.allclose(e, jd.conditional_extended(ys, us), atol=1e-14)
        assert np.allclose(post[(ys, us)], jd.conditional_state_memory(ys, us), atol=1e-14)
        assert np.allclose(pred[(ys[:-1], us)], jd.conditional_predicted(ys[:-1], us), atol=1e-14)


def test_value_from_joint_matches_forward_sum(rng):
    spec = random_model(rng, n_m=2)
    T = 3
    c, l, g = _random_history_design(spec, T, rng)
    terms = []
    for t in range(1, T + 1):
        jd = exact_joint_distribution(spec, c, l, g, t)
        terms += [p * spec.rho[x, us[-1]] for (x, _, _, _, _, us), p in jd.table.items()]
    assert math.fsum(terms) == pytest.approx(history_controller_value(spec, c, l, g, T), abs=1e-12)


def test_memoryless_encoder_ignores_memory():
    spec = binary_instance(n_m=2)
    res = brute_force_value(spec, 2)
    assert res.value == pytest.approx(0.2, abs=1e-12)
