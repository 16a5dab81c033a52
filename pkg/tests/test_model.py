import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamdp.errors import ModelParseError, ModelValidationError
from teamdp.instances import binary_instance, random_model
from teamdp.model import (
    absorb_feedback_noise,
    build_model,
    check,
    derive_channel_kernel,
    derive_plant_kernel,
    load_spec,
    save_spec,
    spec_from_dict,
    spec_to_dict,
    validate,
)


def _doc():
    return {
        "schema": "teamdp/1",
        "alphabets": {"n_x": 2, "n_s": 2, "n_m": 1, "n_z": 2, "n_y": 2, "n_u": 2},
        "plant": [[[0.8, 0.2], [0.2, 0.8]], [[0.8, 0.2], [0.2, 0.8]]],
        "channel": [[0.9, 0.1], [0.1, 0.9]],
        "cost": {"rho": [[0, 1], [1, 0]]},
        "initial": [0.5, 0.5],
    }


def codes(spec):
    return [v.code for v in validate(spec)]


def test_binary_instance_is_valid(binary):
    assert validate(binary) == []
    assert binary.perfect_observation
    assert binary.k_bound == 1.0


def test_row_not_stochastic_names_the_row():
    plant = np.array([[[0.8, 0.2], [0.3, 0.8]]] * 2)
    spec = build_model(plant, np.eye(2), np.zeros((2, 2)), [0.5, 0.5])
    bad = [v for v in validate(spec) if v.code == "RowNotStochastic"]
    assert {(v.where["u"], v.where["x"]) for v in bad} == {(0, 1), (1, 1)}


@pytest.mark.parametrize("field,value,code", [
    ("rho", [[0, -1], [1, 0]], "NegativeCost"),
    ("initial", [0.6, 0.6], "InitialNotStochastic"),
    ("channel", [[1.2, -0.2], [0, 1]], "ProbabilityOutOfRange"),
    ("rho", [[0, np.inf], [1, 0]], "NonFinite"),
])
def test_single_violation(field, value, code):
    args = dict(plant=binary_instance().plant, channel=np.eye(2), rho=[[0, 1], [1, 0]], initial=[0.5, 0.5])
    args[field] = value
    kb = 1.0 if field == "rho" else None
    assert code in codes(build_model(**args, k_bound=kb))


def test_cost_above_bound_and_memory_range():
    spec = build_model(binary_instance().plant, np.eye(2), [[0, 3], [1, 0]], [0.5, 0.5],
                       k_bound=2.0, initial_memory=1)
    assert set(codes(spec)) == {"CostAboveBound", "InitialMemoryOutOfRange"}
    with pytest.raises(ModelValidationError):
        check(spec)


def test_shape_mismatch_stops_further_checks():
    spec = build_model(binary_instance().plant, np.eye(2), [[0, 1, 2], [1, 0, 0]], [0.5, 0.5])
    assert codes(spec) == ["ShapeMismatch"]


def test_parse_defaults_and_string_numbers():
    doc = _doc()
    doc["channel"] = [["0.9", "0.1"], ["0.1", "0.9"]]
    spec = spec_from_dict(doc)
    assert np.array_equal(spec.observation, np.eye(2))
    assert spec.channel[0, 0] == 0.9
    assert spec.k_bound == 1.0 and spec.initial_memory == 0


@pytest.mark.parametrize("mutate,locus", [
    (lambda d: d.pop("plant"), "plant"),
    (lambda d: d["cost"].pop("rho"), "cost.rho"),
    (lambda d: d["channel"].append([0.5, 0.5]), "channel"),
    (lambda d: d["plant"][1][0].__setitem__(1, "abc"), "plant[1][0][1]"),
    (lambda d: d["alphabets"].__setitem__("n_x", 0), "alphabets.n_x"),
    (lambda d: d.__setitem__("schema", "other/9"), "schema"),
])
def test_parse_errors_name_the_field(mutate, locus):
    doc = _doc()
    mutate(doc)
    with pytest.raises(ModelParseError) as err:
        spec_from_dict(doc)
    assert err.value.locus == locus


def test_observation_required_when_sensor_differs():
    doc = _doc()
    doc["alphabets"]["n_s"] = 3
    with pytest.raises(ModelParseError, match="observation"):
        spec_from_dict(doc)


def test_invalid_json_reports_position(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"schema": "teamdp/1",\n "alphabets": }')
    with pytest.raises(ModelParseError, match="line 2"):
        load_spec(p)


def test_renormalize_fixes_rounding():
    doc = _doc()
    doc["channel"] = [[0.333, 0.333], [0.1, 0.9]]
    with pytest.raises(ModelValidationError):
        spec_from_dict(doc)
    spec = spec_from_dict(doc, renormalize=True)
    assert np.allclose(spec.channel[0], [0.5, 0.5])


def test_meta_is_carried_through(tmp_path):
    doc = _doc()
    doc["meta"] = {"name": "demo", "tags": ["a"]}
    save_spec(spec_from_dict(doc), tmp_path / "m.json")
    assert load_spec(tmp_path / "m.json").meta == {"name": "demo", "tags": ["a"]}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans(), st.integers(1, 3))
def test_save_load_round_trip_is_exact(tmp_path_factory, seed, perfect, n_m):
    spec = random_model(np.random.default_rng(seed), n_m=n_m, perfect=perfect, n_s=3, sparsity=0.2)
    path = tmp_path_factory.mktemp("rt") / "m.json"
    save_spec(spec, path)
    back = load_spec(path)
    assert back == spec
    # numbers are persisted as exact decimal strings
    assert all(isinstance(v, str) for v in json.loads(path.read_text())["channel"][0])


def test_spec_to_dict_round_trip(binary):
    assert spec_from_dict(spec_to_dict(binary)) == binary


def test_derive_plant_kernel_from_function():
    # x' = (x + u + w) mod 3 with w uniform on {0, 1}
    k = derive_plant_kernel(lambda x, u, w: (x + u + w) % 3, [0.5, 0.5], 3, 2)
    assert k.shape == (2, 3, 3)
    assert np.array_equal(k[1, 2], [0.5, 0.5, 0.0])
    assert np.allclose(k.sum(axis=-1), 1.0)


def test_derive_channel_kernel_is_bsc():
    k = derive_channel_kernel(lambda z, n: z ^ n, [0.9, 0.1], 2, 2)
    assert np.allclose(k, [[0.9, 0.1], [0.1, 0.9]])


def test_derive_rejects_out_of_range_maps():
    with pytest.raises(ModelValidationError):
        derive_channel_kernel(np.array([[0, 2], [1, 0]]), [0.5, 0.5], 2, 2)


def test_feedback_noise_is_absorbed():
    # actuator flips the action with probability 0.25; plant sets x' = applied action
    k = absorb_feedback_noise(lambda x, u, w: u, lambda u, n: u ^ n, [1.0], [0.75, 0.25], 2, 2)
    assert np.allclose(k[0], [[0.75, 0.25], [0.75, 0.25]])
    assert np.allclose(k[1], [[0.25, 0.75], [0.25, 0.75]])
