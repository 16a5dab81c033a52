import numpy as np
import pytest

from teamdp.errors import BudgetExceeded, MissingControllerEntry
from teamdp.infostate import ControllerFn
from teamdp.instances import binary_instance, noiseless_instance, random_model
from teamdp.oracle import brute_force_value, history_controller_value
from teamdp.solver_finite import (
    Design,
    action_independent,
    belief_controller_to_history,
    enumerate_encoders,
    evaluate_design,
    random_design,
    solve_finite,
    stage_costs,
)


def test_binary_one_stage_value(binary):
    rep = solve_finite(binary, 1)
    assert rep.value == pytest.approx(0.1, abs=1e-12)
    # the optimal encoder forwards the state
    assert sorted(rep.design.encoders[0].ravel()) == [0, 1]


@pytest.mark.parametrize("T", [1, 2, 3])
def test_binary_value_grows_by_crossover(binary, T):
    # every stage the channel is the only source of error
    assert solve_finite(binary, T).value == pytest.approx(0.1 * T, abs=1e-12)


def test_noiseless_is_free():
    for T in (1, 2, 3):
        assert solve_finite(noiseless_instance(), T).value == pytest.approx(0.0, abs=1e-12)


def test_design_evaluates_to_its_value(rng):
    spec = random_model(rng, n_m=2)
    rep = solve_finite(spec, 2)
    assert evaluate_design(spec, rep.design) == pytest.approx(rep.value, abs=1e-12)
    assert len(rep.reachable_beliefs) == 2


def test_memo_and_pruning_do_not_change_result(rng):
    spec = random_model(rng, n_x=3, n_u=3)
    base = solve_finite(spec, 2, memoize=False, prune=False)
    fast = solve_finite(spec, 2)
    assert fast.value == pytest.approx(base.value, abs=1e-12)
    assert fast.explored <= base.explored


def test_discounted_weights(rng):
    spec = random_model(rng)
    rep = solve_finite(spec, 3, beta=0.5)
    costs = stage_costs(spec, rep.design)
    assert rep.value == pytest.approx(sum(0.5 ** t * c for t, c in enumerate(costs)), abs=1e-12)
    assert evaluate_design(spec, rep.design, beta=0.5) == pytest.approx(rep.value, abs=1e-12)


def test_budget_refusal(binary):
    with pytest.raises(BudgetExceeded):
        solve_finite(binary, 3, budget=5)
    with pytest.raises(BudgetExceeded):
        list(enumerate_encoders(random_model(np.random.default_rng(0), n_x=3, n_m=3), budget=10))


def test_horizon_must_be_positive(binary):
    with pytest.raises(ValueError):
        solve_finite(binary, 0)


def test_action_independent():
    assert action_independent(binary_instance())
    assert not action_independent(random_model(np.random.default_rng(3)))


def test_incomplete_controller_is_reported(binary):
    d = Design([np.array([[0], [1]])], [np.zeros((2, 1), int)], [ControllerFn()])
    with pytest.raises(MissingControllerEntry) as err:
        evaluate_design(binary, d)
    assert err.value.stage == 1


def test_history_expansion_matches_belief_evaluation(rng):
    spec = random_model(rng, n_m=2, perfect=False, n_s=3, sparsity=0.2)
    d = random_design(spec, 3, rng)
    g = belief_controller_to_history(spec, d)
    v = history_controller_value(spec, d.encoders, d.memories, g, 3)
    assert v == pytest.approx(evaluate_design(spec, d), abs=1e-12)


def test_matches_oracle_small(rng):
    spec = random_model(rng, n_m=2, perfect=False, n_s=2)
    assert solve_finite(spec, 2).value == pytest.approx(brute_force_value(spec, 2).value, abs=1e-9)
