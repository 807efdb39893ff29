import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_table_demo
from groundalign.env.synth import generate_synthetic_dataset
from groundalign.errors import ChecksumMismatch, UnknownVersion, ValidationError
from groundalign.features import FeatureTemplateConfig
from groundalign.io import (
    demo_from_json,
    demo_to_json,
    load_demos,
    load_model,
    model_from_json,
    model_to_json,
    read_jsonl,
    save_demos,
    save_model,
    validate_prediction_record,
)
from groundalign.learn import TrainConfig, train_icm


@pytest.fixture(scope="module")
def model():
    demos = [random_table_demo(s) for s in range(4)]
    return train_icm(demos, TrainConfig(icm_rounds=1), FeatureTemplateConfig())


def test_model_round_trip(model, tmp_path):
    p = tmp_path / "m.json"
    digest = save_model(model, p)
    back = load_model(p)
    assert back.theta.weights.tobytes() == model.theta.weights.tobytes()
    assert back.index.names == model.index.names and back.index.frozen
    assert back.train_cfg == model.train_cfg and back.feature_cfg == model.feature_cfg
    assert save_model(back, tmp_path / "again.json") == digest
    assert (tmp_path / "again.json").read_bytes() == p.read_bytes()


def test_corrupted_weight_byte(model, tmp_path):
    p = tmp_path / "m.json"
    save_model(model, p)
    raw = bytearray(p.read_bytes())
    at = raw.index(b'"weights": [') + len(b'"weights": [')
    while not chr(raw[at]).isdigit():
        at += 1
    raw[at] = ord("7") if raw[at] != ord("7") else ord("3")
    p.write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatch):
        load_model(p)


def test_truncated_file(model, tmp_path):
    p = tmp_path / "m.json"
    save_model(model, p)
    p.write_bytes(p.read_bytes()[:-20])
    with pytest.raises(ChecksumMismatch):
        load_model(p)


def test_future_version(model):
    obj = model_to_json(model)
    obj["version"] = 99
    with pytest.raises(UnknownVersion):
        model_from_json(obj)
    with pytest.raises(ValidationError):
        model_from_json({"format": "something-else"})


def test_tampered_payload(model):
    obj = model_to_json(model)
    obj["weights"][0] += 1.0
    with pytest.raises(ChecksumMismatch):
        model_from_json(obj)


@pytest.mark.parametrize("kind", ["maze", "crossblock", "map"])
def test_demos_round_trip(kind, tmp_path):
    demos = generate_synthetic_dataset(kind, 5, 9, redundancy=0.5)
    p = tmp_path / "d.jsonl"
    assert save_demos(p, demos) == 5
    back = load_demos(p)
    for a, b in zip(demos, back):
        assert a.path == b.path and a.instructions == b.instructions
        assert a.gold_alignment == b.gold_alignment and a.id == b.id
    assert [demo_to_json(d) for d in back] == list(read_jsonl(p))


def test_table_demo_round_trip():
    d = random_table_demo(5)
    assert demo_from_json(json.loads(json.dumps(demo_to_json(d)))).path == d.path


def test_bad_records():
    rec = demo_to_json(generate_synthetic_dataset("maze", 1, 0)[0])
    for mutate in (lambda r: r.pop("actions"),
                   lambda r: r["instructions"][0]["tokens"][0][0].__setitem__(2, "bogus"),
                   lambda r: r.__setitem__("env", "chess"),
                   lambda r: r["actions"].insert(0, [["type", "fly", "sym"]]),
                   lambda r: r.__setitem__("alignment", [0])):
        bad = json.loads(json.dumps(rec))
        mutate(bad)
        with pytest.raises(ValidationError):
            demo_from_json(bad)


def test_unparsable_jsonl(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"id": "a"}\n{oops\n')
    with pytest.raises(ValidationError):
        list(read_jsonl(p))


def test_prediction_schema():
    validate_prediction_record({"id": "a", "actions": [[["type", "move", "sym"]]], "alignment": [0]})
    validate_prediction_record({"id": "b", "error": "NoPathFound"})
    with pytest.raises(ValidationError):
        validate_prediction_record({"actions": []})
    with pytest.raises(ValidationError):
        validate_prediction_record({"id": "c", "alignment": [-1]})


@settings(max_examples=30)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=5))
def test_weights_survive_json_exactly(ws):
    from groundalign.core import FeatureIndex, ParamVector
    from groundalign.learn import TrainedModel

    m = TrainedModel(ParamVector(FeatureIndex([f"f{i}" for i in range(len(ws))]), np.array(ws)),
                     TrainConfig(), FeatureTemplateConfig(), "table")
    back = model_from_json(json.loads(json.dumps(model_to_json(m))))
    assert back.theta.weights.tobytes() == m.theta.weights.tobytes()
