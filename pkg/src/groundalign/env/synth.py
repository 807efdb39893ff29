"""Synthetic demonstrations with templated instructions.

Each generator walks an instance procedurally and records a *script*: a list
of segments, each a run of actions described by one intent.  The last action
of a segment is the step its sentence describes; earlier actions in the
segment are implicit.  Sentences come from a :class:`TemplateBank` and carry
their dependency parses.

``redundancy`` adds a paraphrase of a segment's sentence with that
probability.  ``drop`` removes the sentence of a *droppable* segment (a
rotation forced by facing a wall with one open side, such as the second
turn out of a dead end), which is how implicit actions arise.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..core import Demonstration, InstructionSequence, LabelSet, Path, SeqAlignment
from ..errors import GenerationFailure
from . import crossblock as cb
from . import maze as mz
from . import mapnav as mp
from .language import TemplateBank

MAX_RETRIES = 100

FLOORS = ("blue", "brick", "wood", "grass", "rose", "stone")
WALLS = ("plain", "fish", "tower", "butterfly")
OBJECTS = ("chair", "lamp", "easel", "sofa", "stool", "hatrack")
SYLLABLES = ("ba", "ko", "mi", "ru", "te", "lo", "fen", "dar", "vi", "son", "pa", "gri")
SIDE_WORDS = {"North": "top", "South": "bottom", "East": "right", "West": "left"}


@dataclass
class Segment:
    actions: list[LabelSet]
    intent: str
    slots: dict = field(default_factory=dict)
    droppable: bool = False


@dataclass
class Script:
    instance: object
    start: object
    segments: list[Segment]


# --- maze -------------------------------------------------------------------

def make_maze(rng: np.random.Generator, size: int = 9, n_objects: int = 5) -> mz.MazeInstance:
    """Perfect maze carved by randomized depth-first search on odd coordinates."""
    grid = [["#"] * size for _ in range(size)]
    nodes = [(x, y) for y in range(1, size - 1, 2) for x in range(1, size - 1, 2)]
    start = nodes[int(rng.integers(len(nodes)))]
    grid[start[1]][start[0]] = "."
    stack, seen = [start], {start}
    while stack:
        x, y = stack[-1]
        nbrs = [(x + dx, y + dy) for dx, dy in ((2, 0), (-2, 0), (0, 2), (0, -2))
                if (x + dx, y + dy) in nodes and (x + dx, y + dy) not in seen]
        if not nbrs:
            stack.pop()
            continue
        nx, ny = nbrs[int(rng.integers(len(nbrs)))]
        grid[(y + ny) // 2][(x + nx) // 2] = "."
        grid[ny][nx] = "."
        seen.add((nx, ny))
        stack.append((nx, ny))
    rows = tuple("".join(r) for r in grid)
    open_cells = [(x, y) for y in range(size) for x in range(size) if rows[y][x] == "."]
    cells = {c: mz.Cell(FLOORS[int(rng.integers(len(FLOORS)))], WALLS[int(rng.integers(len(WALLS)))])
             for c in open_cells}
    picks = rng.choice(len(open_cells), size=min(n_objects, len(open_cells)), replace=False)
    for n, p in enumerate(sorted(int(i) for i in picks)):
        c = open_cells[p]
        cells[c] = replace(cells[c], object=OBJECTS[n % len(OBJECTS)])
    sx, sy = open_cells[int(rng.integers(len(open_cells)))]
    return mz.MazeInstance(rows, cells, (sx, sy, int(rng.integers(4))))


def _maze_script(rng: np.random.Generator, n_segments: tuple[int, int] = (3, 6)) -> Script:
    inst = make_maze(rng)
    env = mz.MazeEnv(inst)
    pose = env.initial_state()
    start = pose
    target = int(rng.integers(n_segments[0], n_segments[1] + 1))
    segs: list[Segment] = []
    rotations = {"right": mz.ROTATE_RIGHT, "left": mz.ROTATE_LEFT}
    while len(segs) < target or segs[-1].actions[0].get("type") == "rotate":
        if len(segs) > 3 * target:
            raise GenerationFailure("maze route did not settle")
        ahead = env.clear_ahead(pose)
        after_move = bool(segs) and segs[-1].actions[0].get("type") == "move"
        if ahead == 0 or (after_move and rng.random() < 0.15):
            opts = [d for d in ("right", "left") if env.clear_ahead(mz.rotate(pose, rotations[d])) > 0]
            # a dead end takes two turns: the first is described, the second is forced
            forced = ahead == 0 and len(opts) == 1
            if not opts and ahead == 0:
                opts = ["right", "left"]
            if opts:
                d = opts[int(rng.integers(len(opts)))]
                segs.append(Segment([rotations[d]], "turn", {"dir": d}, droppable=forced))
                pose = mz.rotate(pose, rotations[d])
                continue
        x, y, o = pose
        dx, dy = mz.STEP[o]
        kinds = ["steps", "forward"]
        seen, target_d = set(), None
        for d in range(1, ahead + 1):
            obj = inst.cell(x + dx * d, y + dy * d).object
            if obj and obj not in seen:
                target_d = target_d or []
                target_d.append((d, obj))
            if obj:
                seen.add(obj)
        if target_d:
            kinds.append("walkto")
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == "steps":
            d = int(rng.integers(1, min(ahead, 4) + 1))
            seg = Segment([mz.move_action(d)], "steps", {"num": mz.NUMBER_WORDS[d]})
        elif kind == "forward":
            d = ahead
            seg = Segment([mz.move_action(d)], "forward")
        else:
            d, obj = target_d[int(rng.integers(len(target_d)))]
            seg = Segment([mz.move_action(d)], "walkto", {"object": obj})
        segs.append(seg)
        pose = (x + dx * d, y + dy * d, o)
    return Script(inst, start, segs)


# --- crossblock -------------------------------------------------------------

def _crossblock_script(rng: np.random.Generator, size: int = 4,
                       moves: tuple[int, int] = (2, 4)) -> Script:
    k = int(rng.choice([2, 3]))
    n = int(rng.integers(moves[0], moves[1] + 1))
    board = [["."] * size for _ in range(size)]
    placed = []
    for _ in range(n):
        windows = []
        for line in ("row", "column"):
            for idx in range(size):
                for s in range(size - k + 1):
                    cells = [(idx, t) if line == "row" else (t, idx) for t in range(s, s + k)]
                    if all(board[r][c] == "." for r, c in cells):
                        windows.append((line, idx, s, cells))
        if not windows:
            break
        line, idx, s, cells = windows[int(rng.integers(len(windows)))]
        for r, c in cells:
            board[r][c] = cb.BLOCK
        placed.append((line, idx, s))
    if len(placed) < 2:
        raise GenerationFailure("could not place two segments")
    inst = cb.CrossblockInstance(tuple("".join(r) for r in board), k)
    state = inst.board
    segs = []
    for p in rng.permutation(len(placed)):
        line, idx, s = placed[int(p)]
        act = cb.segment_action(line, idx, s, k, size)
        cells = state[idx] if line == "row" else "".join(row[idx] for row in state)
        words = cb.ROW_WORDS if line == "row" else cb.COL_WORDS
        parts = cb.ROW_PART_WORDS if line == "row" else cb.COL_PART_WORDS
        slots = {"pos": words[idx + 1], "line": line}
        if cells.count(cb.BLOCK) == k and rng.random() < 0.5:
            segs.append(Segment([act], "clear", slots))
        else:
            segs.append(Segment([act], "clearpart", {**slots, "part": parts[act.get("part")]}))
        state = cb.clear_segment(state, line, idx, s, k)
    return Script(inst, inst.board, segs)


# --- map --------------------------------------------------------------------

def _pseudo_word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(SYLLABLES[int(rng.integers(len(SYLLABLES)))] for _ in range(n))


def make_map(rng: np.random.Generator, n_landmarks: tuple[int, int] = (6, 9),
             extent: float = 10.0, radius: float = 5.0, min_sep: float = 1.5) -> mp.MapInstance:
    n = int(rng.integers(n_landmarks[0], n_landmarks[1] + 1))
    pts: list[tuple[float, float]] = []
    for _ in range(50 * n):
        if len(pts) == n:
            break
        x, y = (round(float(v), 2) for v in rng.uniform(0, extent, size=2))
        if all((x - a) ** 2 + (y - b) ** 2 >= min_sep ** 2 for a, b in pts):
            pts.append((x, y))
    names: list[str] = []
    while len(names) < len(pts):
        w = _pseudo_word(rng)
        if w not in names:
            names.append(w)
    lms = tuple(mp.Landmark(nm, x, y) for nm, (x, y) in zip(names, pts))
    return mp.MapInstance(lms, int(rng.integers(len(lms))), radius)


def _map_script(rng: np.random.Generator, hops: tuple[int, int] = (2, 4)) -> Script:
    inst = make_map(rng)
    env = mp.MapEnv(inst)
    here = inst.start
    visited = {here}
    segs = []
    for _ in range(int(rng.integers(hops[0], hops[1] + 1))):
        opts = [(a, s) for a, s in env.successors(here) if s not in visited]
        if not opts:
            break
        act, nxt = opts[int(rng.integers(len(opts)))]
        segs.append(Segment([act], "goto", {"dir": SIDE_WORDS[act.get("side")],
                                            "name": inst.landmarks[nxt].name}))
        visited.add(nxt)
        here = nxt
    if len(segs) < hops[0]:
        raise GenerationFailure("map route too short")
    return Script(inst, inst.start, segs)


SCRIPTS: dict[str, Callable[[np.random.Generator], Script]] = {
    "maze": _maze_script,
    "crossblock": _crossblock_script,
    "map": _map_script,
}

ENV_CLASSES = {"maze": mz.MazeEnv, "crossblock": cb.CrossblockEnv, "map": mp.MapEnv}


# --- assembly ---------------------------------------------------------------

def _sentence(bank: TemplateBank, env_kind: str, seg: Segment, rng, avoid=None):
    options = bank.for_intent(env_kind, seg.intent)
    if avoid is not None and len(options) > 1:
        options = [t for t in options if t is not avoid]
    t = options[int(rng.integers(len(options)))]
    return t, t.fill(seg.slots)


def script_to_demo(script: Script, env_kind: str, bank: TemplateBank, rng: np.random.Generator,
                   redundancy: float = 0.0, drop: float = 0.0, demo_id: str = "") -> Demonstration:
    env = ENV_CLASSES[env_kind](script.instance)
    actions = [a for seg in script.segments for a in seg.actions]
    path = env.replay(script.start, actions)
    sentences, assign = [], []
    step = -1
    for n, seg in enumerate(script.segments):
        step += len(seg.actions)
        last = n == len(script.segments) - 1
        if seg.droppable and not last and rng.random() < drop:
            continue
        t, tree = _sentence(bank, env_kind, seg, rng)
        sentences.append(tree)
        assign.append(step)
        if rng.random() < redundancy:
            _, tree2 = _sentence(bank, env_kind, seg, rng, avoid=t)
            sentences.append(tree2)
            assign.append(step)
    return Demonstration(InstructionSequence(tuple(sentences)), path, env_kind, script.instance,
                         script.start, env_id=demo_id, id=demo_id,
                         gold_alignment=SeqAlignment(tuple(assign)))


def generate_synthetic_dataset(env_kind: str, count: int, seed: int, bank: TemplateBank | None = None,
                               redundancy: float = 0.0, drop: float = 0.0) -> list[Demonstration]:
    """``count`` demonstrations; demo ``i`` depends only on ``(seed, i)``."""
    if env_kind not in SCRIPTS:
        raise ValueError(f"no generator for environment {env_kind!r}")
    bank = bank or TemplateBank.load()
    demos = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        for _ in range(MAX_RETRIES):
            try:
                script = SCRIPTS[env_kind](rng)
                break
            except GenerationFailure:
                continue
        else:
            raise GenerationFailure(f"no solvable {env_kind} instance after {MAX_RETRIES} tries")
        demos.append(script_to_demo(script, env_kind, bank, rng, redundancy, drop,
                                    demo_id=f"{env_kind}-{seed}-{i:05d}"))
    return demos


def single_instruction_demos(demo: Demonstration) -> list[Demonstration]:
    """Split a demonstration into one-sentence demonstrations.

    Each piece runs from the step after the previous sentence's step to the
    sentence's own step, so implicit actions stay with the sentence that
    follows them.  Paraphrases of an already covered step are skipped.
    """
    if demo.gold_alignment is None:
        raise ValueError("demonstration carries no alignment")
    out, prev = [], -1
    for i, j in enumerate(demo.gold_alignment):
        if j == prev:
            continue
        steps = demo.path.steps[prev + 1: j + 1]
        out.append(Demonstration(InstructionSequence((demo.instructions[i],)), Path(steps),
                                 demo.env_kind, demo.instance, steps[0].pre_state,
                                 env_id=demo.env_id, id=f"{demo.id}/{i}",
                                 gold_alignment=SeqAlignment((len(steps) - 1,))))
        prev = j
    return out
