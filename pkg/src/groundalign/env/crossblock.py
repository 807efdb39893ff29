"""Crossblock-style puzzle: clear a board of blocks, k at a time.

Each move removes ``k`` contiguous present blocks lying in one row or one
column.  The puzzle is won when the board is empty.  States are tuples of
row strings with ``X`` for a block and ``.`` for an empty cell.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..core import Edge, GroundingGraph, LabelSet
from ..errors import ValidationError
from .base import Environment

BLOCK, EMPTY_CELL = "X", "."

# surface words for line positions (1-based) and segment parts
ROW_WORDS = {1: "top", 2: "second", 3: "third", 4: "bottom"}
COL_WORDS = {1: "left", 2: "second", 3: "third", 4: "right"}
ROW_PART_WORDS = {"start": "left", "middle": "middle", "end": "right"}
COL_PART_WORDS = {"start": "top", "middle": "middle", "end": "bottom"}


@dataclass(frozen=True)
class CrossblockInstance:
    board: tuple[str, ...]
    k: int = 2

    def __post_init__(self):
        object.__setattr__(self, "board", tuple(self.board))
        if self.k < 1:
            raise ValidationError("segment length must be >= 1")
        if not any(BLOCK in row for row in self.board):
            raise ValidationError("board has no blocks")
        if len({len(r) for r in self.board}) != 1:
            raise ValidationError("board rows differ in width")

    def to_json(self) -> dict:
        return {"board": list(self.board), "k": self.k}

    @classmethod
    def from_json(cls, obj) -> "CrossblockInstance":
        return cls(tuple(obj["board"]), int(obj["k"]))


def count_blocks(board) -> int:
    return sum(row.count(BLOCK) for row in board)


def segment_action(line: str, index: int, start: int, k: int, length: int) -> LabelSet:
    """Labels of clearing cells ``start..start+k-1`` of row/column ``index``."""
    if start == 0 and start + k == length:
        part = "whole"
    elif start == 0:
        part = "start"
    elif start + k == length:
        part = "end"
    else:
        part = "middle"
    return LabelSet.of(type="clear", line=line, pos=str(index + 1), part=part,
                       offset=str(start), size=str(k))


def clear_segment(board, line: str, index: int, start: int, k: int):
    rows = [list(r) for r in board]
    for t in range(start, start + k):
        r, c = (index, t) if line == "row" else (t, index)
        rows[r][c] = EMPTY_CELL
    return tuple("".join(r) for r in rows)


class CrossblockEnv(Environment):
    kind = "crossblock"
    goal_directed = True

    def initial_state(self):
        return self.instance.board

    def _successors(self, state):
        k = self.instance.k
        H, W = len(state), len(state[0])
        out = []
        for r in range(H):
            for s in range(W - k + 1):
                if all(state[r][c] == BLOCK for c in range(s, s + k)):
                    out.append((segment_action("row", r, s, k, W), clear_segment(state, "row", r, s, k)))
        for c in range(W):
            for s in range(H - k + 1):
                if all(state[r][c] == BLOCK for r in range(s, s + k)):
                    out.append((segment_action("column", c, s, k, H), clear_segment(state, "column", c, s, k)))
        return out

    def is_goal(self, state) -> bool:
        return count_blocks(state) == 0

    def _graph(self, pre, action, post):
        line, index = action.get("line"), int(action.get("pos")) - 1
        cells = post[index] if line == "row" else "".join(row[index] for row in post)
        root = LabelSet(action)
        line_v = LabelSet.of(kind="line", line=line, pos=action.get("pos"),
                             left_in_line=str(cells.count(BLOCK)))
        part_v = LabelSet.of(kind="part", part=action.get("part"), size=action.get("size"))
        remaining = count_blocks(post)
        rest_v = LabelSet.of(kind="board", remaining=str(remaining),
                             done="yes" if remaining == 0 else "no")
        verts = (root, line_v, part_v, rest_v)
        edges = [Edge(0, 1, LabelSet.of(rel="in")), Edge(1, 2, LabelSet.of(rel="part")),
                 Edge(0, 3, LabelSet.of(rel="leaves"))]
        edges += [Edge(v, v, LabelSet.of(rel="self")) for v in range(4)]
        return GroundingGraph(verts, tuple(edges), 0)

    def success(self, final_state, gold_final_state=None) -> bool:
        return count_blocks(final_state) == 0

    def state_to_json(self, state):
        return list(state)

    def state_from_json(self, obj):
        return tuple(obj)
