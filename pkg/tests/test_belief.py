import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamdp import belief as bl
from teamdp.errors import ZeroProbabilityOutput
from teamdp.instances import binary_instance, random_model


def test_psi_examples():
    plant = binary_instance().plant
    assert np.allclose(bl.psi(np.array([[0.5], [0.5]]), 0, plant), [[0.5], [0.5]])
    assert np.allclose(bl.psi(np.array([[1.0], [0.0]]), 0, plant), [[0.8], [0.2]])


def test_channel_update_on_binary_instance(binary):
    # uniform prior, identity encoder, BSC(0.1): Pr(x=1 | y=1) = 0.9
    eb = bl.sense(bl.initial_belief(binary), binary.observation)
    post, py = bl.channel_update(eb, np.array([[0], [1]]), binary.channel, 1)
    assert py == pytest.approx(0.5)
    assert np.allclose(bl.memory_update(post, np.zeros((2, 1), int)), [[0.1], [0.9]])


def test_constant_encoder_leaves_belief_unchanged(binary):
    b = np.array([[0.3], [0.7]])
    eb = bl.sense(b, binary.observation)
    post, _ = bl.channel_update(eb, np.zeros((2, 1), int), binary.channel, 0)
    assert np.allclose(bl.memory_update(post, np.zeros((2, 1), int)), b)


def test_zero_probability_output_raises():
    b = np.array([[1.0], [0.0]])
    eb = bl.sense(b, np.eye(2))
    with pytest.raises(ZeroProbabilityOutput):
        bl.channel_update(eb, np.array([[0], [1]]), np.eye(2), 1)


def test_memory_update_moves_mass():
    eb = np.zeros((2, 2, 2))
    eb[0, 1, 0] = 0.25
    eb[1, 0, 1] = 0.75
    l = np.array([[0, 0], [1, 1]])  # memory becomes the sensed symbol
    out = bl.memory_update(eb, l)
    assert np.allclose(out, [[0.0, 0.25], [0.75, 0.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_filter_step_preserves_normalization(seed):
    rng = np.random.default_rng(seed)
    spec = random_model(rng, n_x=3, n_m=2, n_z=3, n_y=3, n_u=2, perfect=False, n_s=2)
    b = rng.dirichlet(np.ones(6)).reshape(3, 2)
    c = rng.integers(0, 3, (2, 2))
    l = rng.integers(0, 2, (2, 2))
    eb = bl.sense(b, spec.observation)
    total = 0.0
    for y in range(3):
        try:
            post, py = bl.channel_update(eb, c, spec.channel, y)
        except ZeroProbabilityOutput:
            continue
        total += py
        assert post.sum() == pytest.approx(1.0)
        nxt = bl.psi(bl.memory_update(post, l), 1, spec.plant)
        assert nxt.sum() == pytest.approx(1.0) and np.all(nxt >= 0)
    assert total == pytest.approx(1.0)


def test_belief_table_merges_nearby_vectors():
    table = bl.BeliefTable()
    a = table.canonicalize(np.array([[0.3], [0.7]]))
    b = table.canonicalize(np.array([[0.3 + 1e-13], [0.7 - 1e-13]]))
    c = table.canonicalize(np.array([[0.31], [0.69]]))
    assert a == b != c
    assert len(table) == 2
    assert np.array_equal(table.vector(a), [[0.3], [0.7]])


def test_order_key_is_independent_of_insertion_order():
    vs = [np.array([[p], [1 - p]]) for p in (0.9, 0.1, 0.5)]
    t1, t2 = bl.BeliefTable(), bl.BeliefTable()
    ids1 = [t1.canonicalize(v) for v in vs]
    ids2 = [t2.canonicalize(v) for v in reversed(vs)]
    s1 = [t1.vector(i)[0, 0] for i in sorted(ids1, key=t1.order_key)]
    s2 = [t2.vector(i)[0, 0] for i in sorted(ids2, key=t2.order_key)]
    assert s1 == s2 == [0.1, 0.5, 0.9]
