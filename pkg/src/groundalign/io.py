"""JSON Lines data, prediction records and versioned model files.

Label sets serialize as sorted ``[key, value, kind]`` triples.  A
demonstration record stores actions rather than states; the path is rebuilt
by replaying the actions from the start state, which also checks that the
record is legal under its environment.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path as FsPath
from typing import Iterable, Iterator

import jsonschema
import numpy as np

from .core import (
    DependencyTree,
    Demonstration,
    FeatureIndex,
    InstructionSequence,
    Label,
    LabelSet,
    ParamVector,
    SeqAlignment,
    check_alignment,
    validate_dependency_tree,
)
from .errors import ChecksumMismatch, IllegalTransition, UnknownVersion, ValidationError
from .features import FeatureTemplateConfig

MODEL_FORMAT = "groundalign-model"
MODEL_VERSION = 1

_LABELS = {
    "type": "array",
    "items": {
        "type": "array",
        "prefixItems": [{"type": "string", "minLength": 1}, {},
                        {"enum": ["sym", "str", "real"]}],
        "minItems": 3,
        "maxItems": 3,
    },
}

DEMO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["id", "env", "instance", "start", "instructions", "actions"],
    "properties": {
        "id": {"type": "string"},
        "env": {"type": "string"},
        "instance": {"type": "object"},
        "start": {},
        "instructions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["tokens", "heads", "deps"],
                "properties": {
                    "tokens": {"type": "array", "items": _LABELS, "minItems": 1},
                    "heads": {"type": "array", "items": {"type": "integer", "minimum": -1}},
                    "deps": {"type": "array", "items": _LABELS},
                },
            },
        },
        "actions": {"type": "array", "items": _LABELS},
        "alignment": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}

PREDICTION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["id"],
    "properties": {
        "id": {"type": "string"},
        "actions": {"type": "array", "items": _LABELS},
        "alignment": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "error": {"type": "string"},
    },
}

_demo_validator = jsonschema.Draft202012Validator(DEMO_SCHEMA)
_pred_validator = jsonschema.Draft202012Validator(PREDICTION_SCHEMA)


def _check(validator, obj, what: str):
    err = jsonschema.exceptions.best_match(validator.iter_errors(obj))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<record>"
        raise ValidationError(f"{what} at {where}: {err.message}")


def validate_demo_record(obj) -> None:
    _check(_demo_validator, obj, "bad demonstration record")


def validate_prediction_record(obj) -> None:
    _check(_pred_validator, obj, "bad prediction record")


# --- labels and trees ---------------------------------------------------------

def labels_to_json(labels: LabelSet) -> list:
    return [[lab.key, lab.value, lab.kind] for lab in LabelSet(labels).sorted()]


def labels_from_json(obj) -> LabelSet:
    return LabelSet(Label(k, v, kind) for k, v, kind in obj)


def tree_to_json(t: DependencyTree) -> dict:
    return {"tokens": [labels_to_json(x) for x in t.tokens], "heads": list(t.heads),
            "deps": [labels_to_json(d) for d in t.dep_labels]}


def tree_from_json(obj) -> DependencyTree:
    toks = tuple(labels_from_json(x) for x in obj["tokens"])
    deps = obj.get("deps")
    t = DependencyTree(toks, tuple(obj["heads"]),
                       None if deps is None else tuple(labels_from_json(d) for d in deps))
    if len(t.dep_labels) != len(t.tokens):
        raise ValidationError("deps and tokens differ in length")
    validate_dependency_tree(t)
    return t


# --- demonstrations -------------------------------------------------------------

def demo_to_json(demo: Demonstration) -> dict:
    from .env import make_env

    env = make_env(demo.env_kind, demo.instance)
    rec = {
        "id": demo.id,
        "env": demo.env_kind,
        "instance": demo.instance.to_json(),
        "start": env.state_to_json(demo.start_state),
        "instructions": [tree_to_json(t) for t in demo.instructions],
        "actions": [labels_to_json(a) for a in demo.path.actions],
    }
    if demo.gold_alignment is not None:
        rec["alignment"] = list(demo.gold_alignment)
    return rec


def demo_from_json(obj) -> Demonstration:
    from .env import ENVIRONMENTS, instance_from_json, make_env

    validate_demo_record(obj)
    kind = obj["env"]
    if kind not in ENVIRONMENTS:
        raise ValidationError(f"unknown environment kind {kind!r}")
    try:
        inst = instance_from_json(kind, obj["instance"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"bad {kind} instance: {e}") from e
    env = make_env(kind, inst)
    start = env.state_from_json(obj["start"])
    try:
        path = env.replay(start, [labels_from_json(a) for a in obj["actions"]])
    except IllegalTransition as e:
        raise ValidationError(f"record {obj['id']!r} does not replay: {e}") from e
    x = InstructionSequence(tuple(tree_from_json(t) for t in obj["instructions"]))
    align = None
    if "alignment" in obj:
        align = SeqAlignment(tuple(obj["alignment"]))
        if len(align) != len(x):
            raise ValidationError("alignment length differs from instruction count")
        check_alignment(align, len(path))
    return Demonstration(x, path, kind, inst, start, env_id=obj["id"], id=obj["id"],
                         gold_alignment=align)


def write_jsonl(path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{lineno}: {e.msg}") from e


def save_demos(path, demos: Iterable[Demonstration]) -> int:
    return write_jsonl(path, (demo_to_json(d) for d in demos))


def load_demos(path) -> list[Demonstration]:
    return [demo_from_json(obj) for obj in read_jsonl(path)]


# --- models -----------------------------------------------------------------------

def _canonical(payload: dict) -> bytes:
    # repr-exact floats: json writes the shortest round-tripping decimal
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, allow_nan=False).encode("utf-8")


def model_to_json(model) -> dict:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "env": model.env_kind,
        "features": list(model.theta.index.names),
        "weights": [float(w) for w in model.theta.weights],
        "train_config": model.train_cfg.to_dict(),
        "feature_config": model.feature_cfg.to_dict(),
        "diagnostics": model.diagnostics,
    }
    payload = json.loads(_canonical(payload))   # diagnostics must survive JSON unchanged
    return {**payload, "checksum": hashlib.sha256(_canonical(payload)).hexdigest()}


def model_from_json(obj):
    from .learn import TrainConfig, TrainedModel

    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise ValidationError("not a model file")
    if obj.get("version") != MODEL_VERSION:
        raise UnknownVersion(f"model format version {obj.get('version')!r} is not supported")
    payload = {k: v for k, v in obj.items() if k != "checksum"}
    if hashlib.sha256(_canonical(payload)).hexdigest() != obj.get("checksum"):
        raise ChecksumMismatch("model checksum does not match its contents")
    names, weights = obj["features"], obj["weights"]
    if len(names) != len(weights) or len(set(names)) != len(names):
        raise ValidationError("feature table and weights disagree")
    theta = ParamVector(FeatureIndex(names, frozen=True), np.array(weights, dtype=float))
    return TrainedModel(theta, TrainConfig.from_dict(obj["train_config"]),
                        FeatureTemplateConfig.from_dict(obj["feature_config"]),
                        obj["env"], obj.get("diagnostics", {}))


def save_model(model, path) -> str:
    """Write the model atomically; returns its checksum."""
    obj = model_to_json(model)
    path = FsPath(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(_canonical(obj) + b"\n")
    os.replace(tmp, path)
    return obj["checksum"]


def load_model(path):
    raw = FsPath(path).read_bytes()
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ChecksumMismatch(f"model file is not readable JSON: {e}") from e
    return model_from_json(obj)
