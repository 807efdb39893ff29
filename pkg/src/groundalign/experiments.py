"""Experiment configs and the train → predict → evaluate loop.

The three presets are the desk-scale evaluation regimes:

* ``maze``        single-instruction navigation, success = final pose,
* ``crossblock``  whole puzzles with hints, exact match and win rate,
* ``map``         landmark routes, transition precision/recall/F1.

Configs are YAML (or JSON) files; any key can be overridden from the
environment as ``GROUNDALIGN_<SECTION>__<KEY>=value``, e.g.
``GROUNDALIGN_TRAIN__L2=0.01`` or ``GROUNDALIGN_TEST_COUNT=20``.
"""
from __future__ import annotations

import copy
import os
import time
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np
import yaml

from .core import InstructionSequence, ParamVector
from .env import ENVIRONMENTS, make_env
from .env.synth import generate_synthetic_dataset, single_instruction_demos
from .errors import NoPathFound, ValidationError
from .features import FeatureTemplateConfig
from .learn import TrainConfig, TrainedModel, train_icm
from .metrics import MetricsReport, evaluate
from .plan import PlanConfig, beam_search_plan, icm_infer
from .seqmodel import Scorer

ENV_PREFIX = "GROUNDALIGN_"
BASELINES = ("zero", "notext")


@dataclass
class ExperimentConfig:
    env: str = "maze"
    train_count: int = 200
    test_count: int = 50
    train_seed: int = 1
    test_seed: int = 2
    split_seed: int = 0
    redundancy: float = 0.2
    drop: float = 0.0
    single_instruction: bool = False   # evaluate one sentence at a time
    length_slack: int | None = None    # if set, max_length = #sentences + slack
    baselines: tuple[str, ...] = ()
    train: TrainConfig = field(default_factory=TrainConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    features: FeatureTemplateConfig = field(default_factory=FeatureTemplateConfig)
    watch_features: tuple[str, ...] = ()   # weights echoed in the report
    out_dir: str | None = None

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ValidationError(f"unknown environment kind {self.env!r}")
        if self.train_count < 0 or self.test_count < 0:
            raise ValidationError("counts must be nonnegative")
        self.baselines = tuple(self.baselines)
        self.watch_features = tuple(self.watch_features)
        for b in self.baselines:
            if b not in BASELINES:
                raise ValidationError(f"unknown baseline {b!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["baselines"] = list(self.baselines)
        d["watch_features"] = list(self.watch_features)
        d["train"] = self.train.to_dict()
        d["plan"] = self.plan.to_dict()
        d["features"] = self.features.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        try:
            d["train"] = TrainConfig.from_dict(d.get("train"))
            d["plan"] = PlanConfig.from_dict(d.get("plan"))
            d["features"] = FeatureTemplateConfig.from_dict(d.get("features"))
            return cls(**d)
        except TypeError as e:
            raise ValidationError(str(e)) from e


PRESETS: dict[str, dict] = {
    "maze": dict(env="maze", train_count=200, test_count=50, redundancy=0.2, drop=0.2,
                 single_instruction=True, baselines=["zero"],
                 train=dict(stop_contrast=True, skip_contrast=True), plan=dict(max_length=4)),
    "crossblock": dict(env="crossblock", train_count=200, test_count=100, redundancy=0.2,
                       baselines=["notext"], plan=dict(max_length=6)),
    "map": dict(env="map", train_count=200, test_count=50, redundancy=0.2, length_slack=2,
                train=dict(stop_contrast=True, skip_contrast=True),
                watch_features=["word=top∧side=North", "word=top∧side=East"]),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    d = copy.deepcopy(PRESETS[name])
    for k, v in overrides.items():
        if isinstance(v, Mapping) and isinstance(d.get(k), Mapping):
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    return ExperimentConfig.from_dict(d)


def env_overrides(d: dict, environ: Mapping[str, str] | None = None) -> dict:
    """Apply ``GROUNDALIGN_A__B=value`` overrides; values parse as YAML scalars."""
    environ = os.environ if environ is None else environ
    d = copy.deepcopy(d)
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX) or key == ENV_PREFIX + "CONFIG":
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        node = d
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValidationError(f"{key}: {p!r} is not a config section")
        node[path[-1]] = yaml.safe_load(raw)
    return d


def load_config(path=None, base: str | None = None, environ=None) -> ExperimentConfig:
    """Preset ``base`` (if any), then the file at ``path``, then environment overrides."""
    d: dict = copy.deepcopy(PRESETS[base]) if base else {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ValidationError("config file must hold a mapping")
        for k, v in loaded.items():
            if isinstance(v, dict) and isinstance(d.get(k), dict):
                d[k] = {**d[k], **v}
            else:
                d[k] = v
    return ExperimentConfig.from_dict(env_overrides(d, environ))


# --- prediction ----------------------------------------------------------------------

def plan_config_for(cfg: PlanConfig, m: int, length_slack: int | None) -> PlanConfig:
    if length_slack is None:
        return cfg
    return PlanConfig.from_dict({**cfg.to_dict(), "max_length": max(1, m + length_slack)})


def predict(demos, theta: ParamVector, features: FeatureTemplateConfig, plan: PlanConfig,
            length_slack: int | None = None, use_text: bool = True):
    """One ``(path | None, alignment | None, error | None)`` per demonstration."""
    sc = Scorer(theta, features)
    out = []
    for d in demos:
        env = make_env(d.env_kind, d.instance)
        pc = plan_config_for(plan, len(d.instructions), length_slack)
        try:
            if use_text:
                y, a = icm_infer(d.instructions, env, d.start_state, None, pc, scorer=sc)
            else:
                y = beam_search_plan(InstructionSequence(()), env, d.start_state, None, None, pc,
                                     scorer=sc)
                a = None
            out.append((y, a, None))
        except NoPathFound as e:
            out.append((None, None, str(e)))
    return out


def held_out_set(cfg: ExperimentConfig):
    demos = generate_synthetic_dataset(cfg.env, cfg.test_count, cfg.test_seed,
                                       redundancy=cfg.redundancy, drop=cfg.drop)
    if not cfg.single_instruction:
        return demos
    # one sentence per test case, picked reproducibly from each demonstration
    rng = np.random.default_rng(cfg.split_seed)
    picked = []
    for d in demos:
        pieces = single_instruction_demos(d)
        picked.append(pieces[int(rng.integers(len(pieces)))])
    return picked


def evaluate_model(model: TrainedModel, demos, cfg: ExperimentConfig, theta=None,
                   use_text: bool = True) -> MetricsReport:
    theta = model.theta if theta is None else theta
    preds = predict(demos, theta, model.feature_cfg, cfg.plan, cfg.length_slack, use_text)
    return evaluate([(d, p[0]) for d, p in zip(demos, preds)])


def run_experiment(cfg: ExperimentConfig, train_demos=None, test_demos=None) -> dict:
    t0 = time.perf_counter()
    if train_demos is None:
        train_demos = generate_synthetic_dataset(cfg.env, cfg.train_count, cfg.train_seed,
                                                 redundancy=cfg.redundancy, drop=cfg.drop)
    if test_demos is None:
        test_demos = held_out_set(cfg)
    model = train_icm(train_demos, cfg.train, cfg.features)
    t_train = time.perf_counter() - t0
    report = evaluate_model(model, test_demos, cfg)
    result = {
        "config": cfg.to_dict(),
        "model": model,
        "report": report,
        "baselines": {},
        "weights": {name: model.theta[name] for name in cfg.watch_features},
    }
    for b in cfg.baselines:
        if b == "zero":
            zero = ParamVector(model.theta.index, np.zeros(model.theta.dim))
            result["baselines"][b] = evaluate_model(model, test_demos, cfg, theta=zero)
        else:
            result["baselines"][b] = evaluate_model(model, test_demos, cfg, use_text=False)
    result["seconds"] = {"train": t_train, "total": time.perf_counter() - t0}
    return result


def summarize(result: dict) -> dict:
    """JSON-friendly view of :func:`run_experiment` output."""
    return {
        "config": result["config"],
        "report": result["report"].to_dict(per_example=False),
        "baselines": {k: v.to_dict(per_example=False) for k, v in result["baselines"].items()},
        "weights": result["weights"],
        "seconds": result["seconds"],
        "diagnostics": result["model"].diagnostics,
    }
