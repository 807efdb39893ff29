"""Grid maze navigation.

Poses are ``(x, y, o)`` with ``o`` in 0..3 for N, E, S, W and ``y`` growing
southwards.  Actions are ``rotate(±90)`` and ``move(d)`` for every ``d`` with
``d`` clear cells ahead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..core import Edge, GroundingGraph, Label, LabelSet
from .base import Environment

HEADINGS = "NESW"
STEP = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}
VISIBLE_DEPTH = 3

ROTATE_RIGHT = LabelSet.of(type="rotate", angle="90", dir="right")
ROTATE_LEFT = LabelSet.of(type="rotate", angle="-90", dir="left")
NUMBER_WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]


def move_action(d: int) -> LabelSet:
    return LabelSet.of(type="move", magnitude=str(d))


@dataclass(frozen=True)
class Cell:
    floor: str = "gray"
    wall: str = "plain"
    object: str | None = None


@dataclass(frozen=True)
class MazeInstance:
    grid: tuple[str, ...]                 # '#' wall, '.' open
    cells: dict = field(default_factory=dict, hash=False, compare=True)   # (x, y) -> Cell
    start: tuple[int, int, int] = (1, 1, 0)
    goal: tuple[int, int, int] | None = None

    def is_open(self, x: int, y: int) -> bool:
        return 0 <= y < len(self.grid) and 0 <= x < len(self.grid[y]) and self.grid[y][x] == "."

    def cell(self, x: int, y: int) -> Cell:
        return self.cells.get((x, y), Cell())

    def to_json(self) -> dict:
        return {
            "grid": list(self.grid),
            "cells": [[x, y, c.floor, c.wall, c.object] for (x, y), c in sorted(self.cells.items())],
            "start": list(self.start),
            "goal": None if self.goal is None else list(self.goal),
        }

    @classmethod
    def from_json(cls, obj) -> "MazeInstance":
        cells = {(x, y): Cell(f, w, o) for x, y, f, w, o in obj["cells"]}
        goal = obj.get("goal")
        return cls(tuple(obj["grid"]), cells, tuple(obj["start"]),
                   None if goal is None else tuple(goal))


def rotate(pose, action: LabelSet):
    x, y, o = pose
    return (x, y, (o + (1 if action.get("dir") == "right" else -1)) % 4)


class MazeEnv(Environment):
    kind = "maze"

    def initial_state(self):
        return tuple(self.instance.start)

    def clear_ahead(self, pose) -> int:
        x, y, o = pose
        dx, dy = STEP[o]
        d = 0
        while self.instance.is_open(x + dx * (d + 1), y + dy * (d + 1)):
            d += 1
        return d

    def _successors(self, state):
        x, y, o = state
        out = [(ROTATE_RIGHT, rotate(state, ROTATE_RIGHT)), (ROTATE_LEFT, rotate(state, ROTATE_LEFT))]
        dx, dy = STEP[o]
        for d in range(1, self.clear_ahead(state) + 1):
            out.append((move_action(d), (x + dx * d, y + dy * d, o)))
        return out

    def visible_cells(self, pose) -> list[tuple[int, tuple[int, int]]]:
        """(depth, cell) for the current cell and up to VISIBLE_DEPTH open cells ahead."""
        x, y, o = pose
        dx, dy = STEP[o]
        out = [(0, (x, y))]
        for d in range(1, VISIBLE_DEPTH + 1):
            cx, cy = x + dx * d, y + dy * d
            if not self.instance.is_open(cx, cy):
                break
            out.append((d, (cx, cy)))
        return out

    def _graph(self, pre, action, post):
        blocked = lambda pose: "wall" if self.clear_ahead(pose) == 0 else "open"
        root = LabelSet(set(action) | {Label.sym("pre", blocked(pre)), Label.sym("post", blocked(post))})
        verts = [root]
        edges = [Edge(0, 0, LabelSet.of(rel="self"))]
        for depth, (cx, cy) in self.visible_cells(post):
            c = self.instance.cell(cx, cy)
            labs = dict(kind="cell", floor=c.floor, wall=c.wall, depth=str(depth))
            if c.object:
                labs["object"] = c.object
            v = len(verts)
            verts.append(LabelSet.of(**labs))
            edges.append(Edge(0, v, LabelSet.of(rel="at" if depth == 0 else "forward-of")))
            edges.append(Edge(v, v, LabelSet.of(rel="self")))
        return GroundingGraph(tuple(verts), tuple(edges), 0)

    def success(self, final_state, gold_final_state) -> bool:
        return tuple(final_state) == tuple(gold_final_state)

    def transitions(self, path, start=None) -> set:
        return {(s.pre_state[:2], s.post_state[:2]) for s in path.steps
                if s.pre_state[:2] != s.post_state[:2]}

    def state_to_json(self, state):
        return list(state)

    def state_from_json(self, obj):
        return tuple(obj)
