"""Joining features between a linguistic label set and a perceptual one.

A feature vector is a plain ``dict[int, float]`` (coordinate -> value) with no
explicit zeros.  Coordinates come from a :class:`~groundalign.core.FeatureIndex`.

Template kinds
--------------
bias
    a single always-on feature.
conjunction
    ``k1=v1∧k2=v2`` for every symbol label on the left and symbol label on
    the right.
edit
    for label pairs where at least one side is a string (the other a string
    or symbol), the normalized edit similarity ``1 - lev/max(len)`` is bucketed
    and the bucket indicator ``k1~k2>=b`` fires.
product
    ``k1=v1∧k2`` with the real value of the right label (and vice versa).

Labels whose key starts with ``#`` are identifiers (e.g. a landmark id that
only disambiguates actions) and are skipped by every template.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .core import REAL, SYM, FeatureIndex, LabelSet, ParamVector
from .errors import CoordinateOutOfRange, FrozenIndexMiss, ValidationError

SparseVec = dict  # dict[int, float]

TEMPLATE_KINDS = ("bias", "conjunction", "edit", "product")
AND = "∧"
HIDDEN = "#"  # labels keyed "#..." are identifiers and never enter features


@dataclass(frozen=True)
class FeatureTemplateConfig:
    kinds: tuple[str, ...] = TEMPLATE_KINDS
    edit_buckets: tuple[float, ...] = (0.5, 0.75, 0.9, 1.0)
    # kind -> allowed (left key, right key) pairs; "*" matches any key.
    # Kinds without an entry are unfiltered.
    key_filters: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = ()
    fail_on_unseen: bool = False
    _filters: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "edit_buckets", tuple(float(b) for b in self.edit_buckets))
        if isinstance(self.key_filters, Mapping):
            kf = tuple((k, tuple(tuple(p) for p in v)) for k, v in sorted(self.key_filters.items()))
        else:
            kf = tuple((k, tuple(tuple(p) for p in v)) for k, v in self.key_filters)
        object.__setattr__(self, "key_filters", kf)
        object.__setattr__(self, "_filters", {k: v for k, v in kf})
        self.validate()

    def validate(self):
        for k in self.kinds:
            if k not in TEMPLATE_KINDS:
                raise ValidationError(f"unknown feature template {k!r}")
        b = self.edit_buckets
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise ValidationError("edit buckets must be strictly increasing")

    def allows(self, kind: str, ka: str, kb: str) -> bool:
        pairs = self._filters.get(kind)
        if pairs is None:
            return True
        return any((pa in ("*", ka)) and (pb in ("*", kb)) for pa, pb in pairs)

    def to_dict(self) -> dict:
        return {
            "kinds": list(self.kinds),
            "edit_buckets": list(self.edit_buckets),
            "key_filters": {k: [list(p) for p in v] for k, v in self.key_filters},
            "fail_on_unseen": self.fail_on_unseen,
        }

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "FeatureTemplateConfig":
        d = dict(d or {})
        return cls(
            kinds=tuple(d.get("kinds", TEMPLATE_KINDS)),
            edit_buckets=tuple(d.get("edit_buckets", (0.5, 0.75, 0.9, 1.0))),
            key_filters=d.get("key_filters", {}),
            fail_on_unseen=bool(d.get("fail_on_unseen", False)),
        )


def levenshtein(s: str, t: str) -> int:
    if len(s) < len(t):
        s, t = t, s
    prev = list(range(len(t) + 1))
    for i, cs in enumerate(s, 1):
        cur = [i]
        for j, ct in enumerate(t, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (cs != ct)))
        prev = cur
    return prev[-1]


def edit_similarity(s: str, t: str) -> float:
    longest = max(len(s), len(t))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(s, t) / longest


def _bucket(sim: float, buckets: tuple[float, ...]):
    hit = None
    for b in buckets:
        if sim >= b - 1e-12:
            hit = b
    return hit


def feature_names(a: LabelSet, b: LabelSet, cfg: FeatureTemplateConfig, prefix: str = ""):
    """Yield ``(name, value)`` for the joined pair, in a deterministic order."""
    kinds = cfg.kinds
    if "bias" in kinds:
        yield prefix + "bias", 1.0
    la = [lab for lab in a.sorted() if not lab.key.startswith(HIDDEN)]
    lb = [lab for lab in b.sorted() if not lab.key.startswith(HIDDEN)]
    for x in la:
        for y in lb:
            if x.kind == SYM and y.kind == SYM:
                if "conjunction" in kinds and cfg.allows("conjunction", x.key, y.key):
                    yield f"{prefix}{x.key}={x.value}{AND}{y.key}={y.value}", 1.0
            elif x.kind != REAL and y.kind != REAL:
                # at least one side is a string
                if "edit" in kinds and cfg.allows("edit", x.key, y.key):
                    bucket = _bucket(edit_similarity(x.value, y.value), cfg.edit_buckets)
                    if bucket is not None:
                        yield f"{prefix}{x.key}~{y.key}>={bucket:g}", 1.0
            elif "product" in kinds and cfg.allows("product", x.key, y.key):
                if x.kind == SYM and y.kind == REAL:
                    yield f"{prefix}{x.key}={x.value}{AND}{y.key}", y.value
                elif x.kind == REAL and y.kind == SYM:
                    yield f"{prefix}{x.key}{AND}{y.key}={y.value}", x.value


def _index_name(idx: FeatureIndex, name: str, cfg: FeatureTemplateConfig):
    i = idx.get(name)
    if i is None and cfg.fail_on_unseen:
        raise FrozenIndexMiss(name)
    return i


def join_features(a: LabelSet, b: LabelSet, cfg: FeatureTemplateConfig,
                  idx: FeatureIndex, prefix: str = "") -> SparseVec:
    """phi(a, b) as a sparse vector.  Unseen names grow ``idx`` unless it is frozen."""
    out: SparseVec = {}
    for name, val in feature_names(a, b, cfg, prefix):
        i = _index_name(idx, name, cfg)
        if i is None:
            continue
        out[i] = out.get(i, 0.0) + val
    return {i: v for i, v in out.items() if v != 0.0}


def named_vector(pairs: Iterable[tuple[str, float]], idx: FeatureIndex,
                 cfg: FeatureTemplateConfig | None = None) -> SparseVec:
    out: SparseVec = {}
    for name, val in pairs:
        i = idx.get(name)
        if i is None:
            if cfg is not None and cfg.fail_on_unseen:
                raise FrozenIndexMiss(name)
            continue
        out[i] = out.get(i, 0.0) + val
    return {i: v for i, v in out.items() if v != 0.0}


def _weights(theta) -> np.ndarray:
    return theta.weights if isinstance(theta, ParamVector) else np.asarray(theta, dtype=float)


def sparse_dot(v: SparseVec, theta) -> float:
    w = _weights(theta)
    d = len(w)
    total = 0.0
    for i, val in v.items():
        if not 0 <= i < d:
            raise CoordinateOutOfRange(f"coordinate {i} outside dimension {d}")
        total += val * w[i]
    return float(total)


def sparse_add(u: SparseVec, v: SparseVec, alpha: float = 1.0) -> SparseVec:
    """u + alpha * v."""
    out = dict(u)
    for i, val in v.items():
        out[i] = out.get(i, 0.0) + alpha * val
    return {i: x for i, x in out.items() if x != 0.0}


def to_dense(v: SparseVec, d: int) -> np.ndarray:
    x = np.zeros(d)
    for i, val in v.items():
        x[i] += val
    return x


class Featurizer:
    """Caches joined features per label-set pair as index/value arrays.

    Entries computed against a frozen index stay cached if the index is later
    unfrozen; build a new Featurizer in that case.
    """

    def __init__(self, cfg: FeatureTemplateConfig, index: FeatureIndex):
        self.cfg = cfg
        self.index = index
        self._cache: dict = {}

    def join(self, a: LabelSet, b: LabelSet, prefix: str = ""):
        key = (prefix, a, b)
        hit = self._cache.get(key)
        if hit is None:
            vec = join_features(a, b, self.cfg, self.index, prefix)
            cols = np.fromiter(vec.keys(), dtype=np.int64, count=len(vec))
            vals = np.fromiter(vec.values(), dtype=float, count=len(vec))
            hit = self._cache[key] = (cols, vals)
        return hit

    def vector(self, pairs: Iterable[tuple[str, float]], key=None):
        if key is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        vec = named_vector(pairs, self.index, self.cfg)
        cols = np.fromiter(vec.keys(), dtype=np.int64, count=len(vec))
        vals = np.fromiter(vec.values(), dtype=float, count=len(vec))
        if key is not None:
            self._cache[key] = (cols, vals)
        return cols, vals
