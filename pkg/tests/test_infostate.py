import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamdp import belief as bl
from teamdp.errors import MissingControllerEntry
from teamdp.infostate import (
    ControllerFn,
    apply_Qc,
    apply_Qg,
    apply_Ql,
    best_actions,
    compose_Qtilde,
    expected_cost,
    group_masses,
    initial_info_state,
)
from teamdp.instances import random_model


def _stage(spec, pi, c, l):
    return apply_Ql(apply_Qc(pi, c, spec), l, spec)


def test_initial_state_mass_and_phase(binary):
    pi = initial_info_state(binary)
    assert pi.phase == "C"
    assert pi.total() == pytest.approx(1.0)
    assert len(pi.belief_support()) == 1


def test_phase_is_enforced(binary):
    pi = initial_info_state(binary)
    with pytest.raises(ValueError, match="phase"):
        apply_Ql(pi, np.zeros((2, 1), int), binary)


def test_binary_first_stage(binary):
    c = np.array([[0], [1]])
    pi_g = _stage(binary, initial_info_state(binary), c, np.zeros((2, 1), int))
    beliefs = sorted(pi_g.table.vector(b)[1, 0] for b in pi_g.belief_support())
    assert beliefs == pytest.approx([0.1, 0.9])
    g = best_actions(pi_g, binary.rho)
    assert expected_cost(pi_g, g, binary.rho) == pytest.approx(0.1)


def test_missing_controller_entry(binary):
    pi_g = _stage(binary, initial_info_state(binary), np.array([[0], [1]]), np.zeros((2, 1), int))
    with pytest.raises(MissingControllerEntry):
        apply_Qg(pi_g, ControllerFn(), binary)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_group_masses_reproduce_beliefs(seed):
    rng = np.random.default_rng(seed)
    spec = random_model(rng, n_x=3, n_m=2, perfect=False, n_s=2, sparsity=0.2)
    a = spec.alphabets
    pi = initial_info_state(spec)
    for _ in range(3):
        c = rng.integers(0, a.n_z, (a.n_s, a.n_m))
        l = rng.integers(0, a.n_m, (a.n_s, a.n_m))
        pi_l = apply_Qc(pi, c, spec)
        for bid, mass in group_masses(pi_l).items():
            # phase L groups are over (x, s, m_prev)
            assert np.allclose(mass / mass.sum(), pi_l.table.vector(bid), atol=1e-9)
        pi_g = apply_Ql(pi_l, l, spec)
        for bid, mass in group_masses(pi_g).items():
            assert np.allclose(mass / mass.sum(), pi_g.table.vector(bid), atol=1e-9)
        g = ControllerFn((b, int(rng.integers(0, a.n_u))) for b in pi_g.belief_support())
        pi = apply_Qg(pi_g, g, spec)
        assert pi.total() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_stage_maps_are_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    spec = random_model(rng, n_m=2)
    a = spec.alphabets
    table = bl.BeliefTable()
    p0 = initial_info_state(spec, table)
    c = rng.integers(0, a.n_z, (a.n_s, a.n_m))
    l = rng.integers(0, a.n_m, (a.n_s, a.n_m))
    # two different phase C states sharing a table
    p1 = apply_Qg(_stage(spec, p0, c, l), ControllerFn(
        (b, 0) for b in _stage(spec, p0, c, l).belief_support()), spec)
    mixed = p0.mix(p1, alpha)
    lhs = apply_Qc(mixed, c, spec)
    rhs = apply_Qc(p0, c, spec).mix(apply_Qc(p1, c, spec), alpha)
    wl, wr = lhs.weights(), rhs.weights()
    assert wl.keys() == wr.keys()
    assert all(math.isclose(wl[k], wr[k], abs_tol=1e-10) for k in wl)


def test_compose_qtilde_matches_step_by_step(binary):
    c = np.array([[0], [1]])
    l = np.zeros((2, 1), int)
    pi = initial_info_state(binary)
    pi_g = _stage(binary, pi, c, l)
    g = best_actions(pi_g, binary.rho)
    assert compose_Qtilde(c, l, g, binary)(pi).fingerprint() == apply_Qg(pi_g, g, binary).fingerprint()


def test_to_json_lists_atoms(binary):
    doc = initial_info_state(binary).to_json()
    assert doc["phase"] == "C"
    assert math.fsum(a["w"] for a in doc["atoms"]) == pytest.approx(1.0)
