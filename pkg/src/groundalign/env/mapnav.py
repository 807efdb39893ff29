"""Landmark map: hop between named landmarks within a visibility radius.

States are landmark indices.  Coordinates use ``y`` pointing north.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..core import Edge, GroundingGraph, Label, LabelSet
from ..errors import ValidationError
from .base import Environment

MAX_DIST_BUCKET = 4


@dataclass(frozen=True)
class Landmark:
    name: str
    x: float
    y: float


@dataclass(frozen=True)
class MapInstance:
    landmarks: tuple[Landmark, ...]
    start: int = 0
    radius: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        if not 0 <= self.start < len(self.landmarks):
            raise ValidationError("start landmark does not exist")
        for lm in self.landmarks:
            if not (math.isfinite(lm.x) and math.isfinite(lm.y)):
                raise ValidationError(f"non-finite coordinate for {lm.name!r}")

    def to_json(self) -> dict:
        return {"landmarks": [[lm.name, lm.x, lm.y] for lm in self.landmarks],
                "start": self.start, "radius": self.radius}

    @classmethod
    def from_json(cls, obj) -> "MapInstance":
        return cls(tuple(Landmark(n, float(x), float(y)) for n, x, y in obj["landmarks"]),
                   int(obj["start"]), float(obj["radius"]))


def side_of(src: Landmark, dst: Landmark) -> str:
    """Compass side of ``dst`` as seen from ``src``; the dominant axis wins, ties go north/south."""
    dx, dy = dst.x - src.x, dst.y - src.y
    if abs(dx) > abs(dy):
        return "East" if dx > 0 else "West"
    return "North" if dy >= 0 else "South"


def dist_bucket(d: float) -> str:
    b = int(d // 2)
    return str(b) if b <= MAX_DIST_BUCKET else "far"


class MapEnv(Environment):
    kind = "map"

    def initial_state(self):
        return self.instance.start

    def _successors(self, state):
        lms = self.instance.landmarks
        here = lms[state]
        out = []
        for j, lm in enumerate(lms):
            if j == state:
                continue
            d = math.hypot(lm.x - here.x, lm.y - here.y)
            if d <= self.instance.radius:
                act = LabelSet([Label.sym("type", "move"), Label.sym("side", side_of(here, lm)),
                                Label.sym("dist", dist_bucket(d)), Label.sym("#to", str(j))])
                out.append((act, j))
        return out

    def _graph(self, pre, action, post):
        lms = self.instance.landmarks
        root = LabelSet(action)
        dest = LabelSet([Label.string("name", lms[post].name), Label.sym("kind", "landmark")])
        way = LabelSet.of(kind="direction", side=action.get("side"), dist=action.get("dist"))
        # the origin carries no name: a sentence naming it describes the previous hop
        origin = LabelSet.of(kind="origin")
        verts = (root, dest, way, origin)
        edges = [Edge(0, 1, LabelSet.of(rel="target-of")), Edge(0, 2, LabelSet.of(rel="at-dist")),
                 Edge(0, 3, LabelSet.of(rel="from"))]
        edges += [Edge(v, v, LabelSet.of(rel="self")) for v in range(4)]
        return GroundingGraph(verts, tuple(edges), 0)

    def success(self, final_state, gold_final_state) -> bool:
        return final_state == gold_final_state

    def transitions(self, path, start=None) -> set:
        return {(s.pre_state, s.post_state) for s in path.steps}
