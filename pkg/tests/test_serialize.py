import json
import math

import numpy as np
import pytest

from teamdp import jsonfmt, serialize
from teamdp.errors import ModelParseError
from teamdp.instances import forced_state_model, random_model
from teamdp.oracle import brute_force_value, history_controller_value
from teamdp.sim import HistoryDesign
from teamdp.solver_finite import evaluate_design, solve_finite
from teamdp.solver_infinite import DiscountConfig, eval_discounted_stationary, search_stationary_discounted


def test_floats_survive_exactly():
    vals = [0.1, 1 / 3, 2.0 ** -60, 1e300, 0.0]
    assert json.loads(jsonfmt.dumps({"v": vals}))["v"] == vals


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        jsonfmt.dumps({"v": math.nan})


def test_flat_lists_on_one_line():
    text = jsonfmt.dumps({"a": [1, 2, 3], "b": {"c": True, "d": None}})
    assert '"a": [1, 2, 3]' in text
    assert json.loads(text) == {"a": [1, 2, 3], "b": {"c": True, "d": None}}


def test_finite_design_round_trip(rng):
    spec = random_model(rng, n_m=2)
    rep = solve_finite(spec, 2)
    doc = serialize.design_to_dict(rep.design)
    back = serialize.design_from_dict(json.loads(serialize.dumps(doc)), spec)
    assert evaluate_design(spec, back) == evaluate_design(spec, rep.design)
    # serializing again gives the same bytes
    assert serialize.dumps(serialize.design_to_dict(back)) == serialize.dumps(doc)


def test_stationary_design_round_trip(rng):
    spec = forced_state_model(rng)
    cfg = DiscountConfig.for_model(spec, 0.5, 1e-3)
    st = search_stationary_discounted(spec, cfg)
    doc = json.loads(serialize.dumps(serialize.design_to_dict(st.design)))
    back = serialize.design_from_dict(doc, spec)
    assert eval_discounted_stationary(spec, back, cfg).value == st.value


def test_history_design_round_trip(rng):
    spec = random_model(rng)
    res = brute_force_value(spec, 2)
    doc = json.loads(serialize.dumps(serialize.design_to_dict(HistoryDesign.from_oracle(res))))
    back = serialize.design_from_dict(doc, spec)
    before = history_controller_value(spec, res.encoders, res.memories, res.controller, 2)
    assert history_controller_value(spec, back.encoders, back.memories, back.controllers, 2) == before


def test_bad_design_documents(binary):
    with pytest.raises(ModelParseError):
        serialize.design_from_dict({"schema": "nope"}, binary)
    doc = {"schema": serialize.DESIGN_SCHEMA, "kind": "stationary", "encoder": [[0], [5]],
           "memory": [[0], [0]], "controller": []}
    with pytest.raises(ModelParseError) as err:
        serialize.design_from_dict(doc, binary)
    assert err.value.locus == "encoder"
    doc["encoder"] = [[0], [1]]
    doc["controller"] = [{"belief": [[0.5], [0.5]], "action": 7}]
    with pytest.raises(ModelParseError, match=r"controller\[0\]\.action"):
        serialize.design_from_dict(doc, binary)


def test_manifest(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"abc")
    assert serialize.sha256_file(p).startswith("ba7816bf")
    m = serialize.make_manifest("solve-finite", {"horizon": 2}, {"model_sha256": "0"})
    assert "wall_time" not in m and m["version"]
    doc = serialize.report_document(m, {"value": 0.5})
    assert doc["schema"] == serialize.REPORT_SCHEMA


def test_design_arrays_are_plain_lists(binary):
    rep = solve_finite(binary, 1)
    doc = json.loads(serialize.dumps(serialize.design_to_dict(rep.design)))
    stage = doc["stages"][0]
    assert np.array(stage["encoder"]).shape == (2, 1)
    assert all(len(e["belief"]) == 2 for e in stage["controller"])
