"""Evaluation: exact action match, task success, transition precision/recall/F1.

Transition scores are micro-averaged: true/false positives are pooled over
all examples before dividing.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

from .core import Path
from .errors import IdMismatch


def prf(pred: set, gold: set) -> tuple[float, float, float, int, int, int]:
    tp = len(pred & gold)
    fp = len(pred - gold)
    fn = len(gold - pred)
    return (*_prf_counts(tp, fp, fn), tp, fp, fn)


def _prf_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class ExampleMetrics:
    id: str
    exact_match: bool
    success: bool
    tp: int
    fp: int
    fn: int
    failed: bool = False      # no prediction (planner found no path)


@dataclass
class MetricsReport:
    exact_match: float
    success: float
    precision: float
    recall: float
    f1: float
    n: int
    failures: int = 0
    examples: list = field(default_factory=list)

    def to_dict(self, per_example: bool = True) -> dict:
        d = asdict(self)
        if not per_example:
            d.pop("examples")
        return d

    def summary(self) -> str:
        return (f"n={self.n} match={self.exact_match:.3f} success={self.success:.3f} "
                f"P={self.precision:.3f} R={self.recall:.3f} F1={self.f1:.3f}")


def score_example(env, pred: Path | None, gold: Path, start, ex_id: str = "") -> ExampleMetrics:
    gold_t = env.transitions(gold, start)
    if pred is None:
        return ExampleMetrics(ex_id, False, False, 0, 0, len(gold_t), failed=True)
    _, _, _, tp, fp, fn = prf(env.transitions(pred, start), gold_t)
    match = [a.serialize() for a in pred.actions] == [a.serialize() for a in gold.actions]
    ok = env.success(pred.final_state(start), gold.final_state(start))
    return ExampleMetrics(ex_id, match, bool(ok), tp, fp, fn)


def aggregate(examples: Sequence[ExampleMetrics]) -> MetricsReport:
    n = len(examples)
    tp = sum(e.tp for e in examples)
    fp = sum(e.fp for e in examples)
    fn = sum(e.fn for e in examples)
    p, r, f = _prf_counts(tp, fp, fn)
    return MetricsReport(
        exact_match=sum(e.exact_match for e in examples) / n if n else 0.0,
        success=sum(e.success for e in examples) / n if n else 0.0,
        precision=p, recall=r, f1=f, n=n,
        failures=sum(e.failed for e in examples),
        examples=[asdict(e) for e in examples],
    )


def evaluate(pairs, envs=None) -> MetricsReport:
    """``pairs`` holds ``(gold_demo, predicted_path_or_None)`` in matching order."""
    from .env import make_env

    out = []
    for k, (gold, pred) in enumerate(pairs):
        env = envs[k] if envs is not None else make_env(gold.env_kind, gold.instance)
        out.append(score_example(env, pred, gold.path, gold.start_state, gold.id))
    return aggregate(out)


def match_ids(gold_ids: Sequence[str], pred_ids: Sequence[str]) -> None:
    if list(gold_ids) != list(pred_ids):
        missing = sorted(set(gold_ids) - set(pred_ids))[:3]
        extra = sorted(set(pred_ids) - set(gold_ids))[:3]
        raise IdMismatch(f"prediction ids do not match gold (missing {missing}, extra {extra})")
