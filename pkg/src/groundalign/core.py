"""Domain types shared across the package.

All types are immutable after construction.  Environment states are opaque
hashable values owned by the environment that produced them; nothing in here
looks inside them.

Index conventions: token, vertex, step and instruction indices are 0-based.
An alignment ``a`` maps instruction ``i`` to step ``a[i]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadEdgeIndex,
    BadLabel,
    BadRootIndex,
    BrokenChain,
    CyclicParse,
    DanglingHead,
    IndexOutOfRange,
    MultipleRoots,
    NonMonotoneAlignment,
    ValidationError,
)

SYM = "sym"
STR = "str"
REAL = "real"
LABEL_KINDS = (SYM, STR, REAL)

ROOT = -1


@dataclass(frozen=True, order=True)
class Label:
    """A typed ``key=value`` label.

    ``kind`` distinguishes symbols (matched by identity), strings (matched by
    edit similarity) and reals (multiplied into features).
    """

    key: str
    value: Any
    kind: str = SYM

    def __post_init__(self):
        if not self.key:
            raise BadLabel("label key must be nonempty")
        if self.kind not in LABEL_KINDS:
            raise BadLabel(f"unknown label kind {self.kind!r}")
        if self.kind == REAL:
            v = float(self.value)
            if not math.isfinite(v):
                raise BadLabel(f"real label {self.key} is not finite")
            object.__setattr__(self, "value", v)
        else:
            object.__setattr__(self, "value", str(self.value))

    def __str__(self):
        if self.kind == STR:
            return f'{self.key}="{self.value}"'
        return f"{self.key}={self.value}"

    @classmethod
    def sym(cls, key: str, value) -> "Label":
        return cls(key, value, SYM)

    @classmethod
    def string(cls, key: str, value) -> "Label":
        return cls(key, value, STR)

    @classmethod
    def real(cls, key: str, value) -> "Label":
        return cls(key, value, REAL)


class LabelSet(frozenset):
    """Finite set of labels; no two labels may share ``(key, value)``."""

    def __new__(cls, labels: Iterable[Label] = ()):
        self = super().__new__(cls, labels)
        seen = set()
        for lab in self:
            if not isinstance(lab, Label):
                raise BadLabel(f"not a Label: {lab!r}")
            kv = (lab.key, lab.value)
            if kv in seen:
                raise BadLabel(f"duplicate label {lab.key}={lab.value}")
            seen.add(kv)
        return self

    @classmethod
    def of(cls, **symbols) -> "LabelSet":
        """Build a set of symbol labels: ``LabelSet.of(word="top")``."""
        return cls(Label.sym(k, v) for k, v in symbols.items())

    def get(self, key: str, default=None):
        for lab in self:
            if lab.key == key:
                return lab.value
        return default

    def sorted(self) -> list[Label]:
        return sorted(self, key=lambda lab: (lab.key, lab.kind, str(lab.value)))

    def serialize(self) -> str:
        """Canonical string; used for deterministic tie-breaking."""
        return ",".join(str(lab) for lab in self.sorted())

    def __repr__(self):
        return "{" + self.serialize() + "}"


EMPTY = LabelSet()


class Edge(NamedTuple):
    src: int
    dst: int
    labels: LabelSet


@dataclass(frozen=True)
class GroundingGraph:
    vertices: tuple[LabelSet, ...]
    edges: tuple[Edge, ...]
    root: int = 0
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(Edge(*e) for e in self.edges))
        object.__setattr__(self, "_hash", hash((self.vertices, self.edges, self.root)))

    def __hash__(self):
        return self._hash

    def __len__(self):
        return len(self.vertices)

    def out_edges(self, j: int) -> list[int]:
        return [e for e, edge in enumerate(self.edges) if edge.src == j]

    @property
    def root_labels(self) -> LabelSet:
        return self.vertices[self.root]


@dataclass(frozen=True)
class DependencyTree:
    """Dependency parse.  ``heads[i]`` is the head of token ``i`` or ROOT;
    ``dep_labels[i]`` labels the arc from ``heads[i]`` to ``i``."""

    tokens: tuple[LabelSet, ...]
    heads: tuple[int, ...]
    dep_labels: tuple[LabelSet, ...] = None
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        deps = self.dep_labels
        if deps is None:
            deps = (EMPTY,) * len(self.tokens)
        object.__setattr__(self, "dep_labels", tuple(deps))
        object.__setattr__(self, "_hash", hash((self.tokens, self.heads, self.dep_labels)))

    def __hash__(self):
        return self._hash

    def __len__(self):
        return len(self.tokens)

    @property
    def root(self) -> int:
        return self.heads.index(ROOT)

    def dependents(self, i: int) -> list[int]:
        return [k for k, h in enumerate(self.heads) if h == i]

    def words(self) -> list[str]:
        return [t.get("word", "?") for t in self.tokens]

    def text(self) -> str:
        return " ".join(self.words())


@dataclass(frozen=True)
class ActionStep:
    pre_state: Hashable
    action: LabelSet
    post_state: Hashable
    graph: GroundingGraph


@dataclass(frozen=True)
class Path:
    steps: tuple[ActionStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self):
        return len(self.steps)

    def __iter__(self) -> Iterator[ActionStep]:
        return iter(self.steps)

    def __getitem__(self, j):
        return self.steps[j]

    @property
    def actions(self) -> list[LabelSet]:
        return [s.action for s in self.steps]

    @property
    def graphs(self) -> list[GroundingGraph]:
        return [s.graph for s in self.steps]

    def states(self, start=None) -> list:
        if not self.steps:
            return [] if start is None else [start]
        return [self.steps[0].pre_state] + [s.post_state for s in self.steps]

    def final_state(self, start=None):
        return self.steps[-1].post_state if self.steps else start


@dataclass(frozen=True)
class InstructionSequence:
    sentences: tuple[DependencyTree, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


@dataclass(frozen=True)
class SeqAlignment:
    """``assign[i]`` is the (0-based) step that instruction ``i`` describes."""

    assign: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "assign", tuple(int(a) for a in self.assign))

    def __len__(self):
        return len(self.assign)

    def __iter__(self):
        return iter(self.assign)

    def __getitem__(self, i):
        return self.assign[i]

    def one_based(self) -> tuple[int, ...]:
        return tuple(a + 1 for a in self.assign)


@dataclass(frozen=True)
class Demonstration:
    instructions: InstructionSequence
    path: Path
    env_kind: str
    instance: Any
    start_state: Hashable
    env_id: str = ""
    id: str = ""
    # generator-truth alignment, when known; never read by training
    gold_alignment: SeqAlignment | None = None


class FeatureIndex:
    """Growable bijection between feature names and coordinates."""

    def __init__(self, names: Iterable[str] = (), frozen: bool = False):
        self.names: list[str] = []
        self._ids: dict[str, int] = {}
        for n in names:
            self.add(n)
        self.frozen = frozen

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._ids

    def add(self, name: str) -> int:
        i = self._ids.get(name)
        if i is None:
            i = len(self.names)
            self._ids[name] = i
            self.names.append(name)
        return i

    def get(self, name: str, grow: bool | None = None):
        """Coordinate for ``name``; grows unless frozen.  None when dropped."""
        i = self._ids.get(name)
        if i is None and (not self.frozen if grow is None else grow):
            i = self.add(name)
        return i

    def freeze(self) -> "FeatureIndex":
        self.frozen = True
        return self

    def copy(self) -> "FeatureIndex":
        return FeatureIndex(self.names, frozen=self.frozen)


@dataclass
class ParamVector:
    index: FeatureIndex
    weights: np.ndarray = None

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.zeros(len(self.index))
        self.weights = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(self.weights)):
            raise ValidationError("non-finite weight")

    @property
    def dim(self) -> int:
        return len(self.index)

    def dense(self, d: int | None = None) -> np.ndarray:
        """Weights padded with zeros to dimension ``d`` (default: index size)."""
        d = len(self.index) if d is None else d
        w = self.weights
        if len(w) >= d:
            return w[:d]
        return np.concatenate([w, np.zeros(d - len(w))])

    def __getitem__(self, name: str) -> float:
        i = self.index._ids.get(name)
        if i is None or i >= len(self.weights):
            return 0.0
        return float(self.weights[i])


# --- validation -----------------------------------------------------------

def validate_dependency_tree(t: DependencyTree) -> None:
    n = len(t.tokens)
    if n == 0:
        raise ValidationError("dependency tree has no tokens")
    if len(t.heads) != n or len(t.dep_labels) != n:
        raise ValidationError("tokens, heads and dep_labels differ in length")
    for i, h in enumerate(t.heads):
        if h != ROOT and not 0 <= h < n:
            raise DanglingHead(f"token {i} has head {h} outside 0..{n - 1}")
    roots = [i for i, h in enumerate(t.heads) if h == ROOT]
    if len(roots) > 1:
        raise MultipleRoots(f"tokens {roots} are all marked ROOT")
    for i in range(n):
        seen = {i}
        h = t.heads[i]
        while h != ROOT:
            if h in seen:
                raise CyclicParse(f"head chain from token {i} revisits token {h}")
            seen.add(h)
            h = t.heads[h]
    if not roots:
        raise CyclicParse("no ROOT token")


def validate_grounding_graph(g: GroundingGraph) -> None:
    n = len(g.vertices)
    if not 0 <= g.root < n:
        raise BadRootIndex(f"root {g.root} outside a graph with {n} vertices")
    for e, edge in enumerate(g.edges):
        if not (0 <= edge.src < n and 0 <= edge.dst < n):
            raise BadEdgeIndex(f"edge {e} ({edge.src}, {edge.dst}) outside 0..{n - 1}")


def validate_path(path: Path, start=None) -> None:
    prev = start
    for j, step in enumerate(path.steps):
        if j > 0 or start is not None:
            if step.pre_state != prev:
                raise BrokenChain(f"step {j} does not start where step {j - 1} ended")
        prev = step.post_state


def check_alignment(a: Sequence[int] | SeqAlignment, n: int) -> None:
    prev = 0
    for i, j in enumerate(a):
        if not 0 <= j < n:
            raise IndexOutOfRange(f"instruction {i} aligned to step {j}, path has {n}")
        if j < prev:
            raise NonMonotoneAlignment(f"a[{i}]={j} < a[{i - 1}]={prev}")
        prev = j


def reverse_topological_order(t: DependencyTree) -> list[int]:
    """Tokens ordered dependents-first, root last; siblings by ascending index."""
    deps: list[list[int]] = [[] for _ in t.tokens]
    for k, h in enumerate(t.heads):
        if h != ROOT:
            deps[h].append(k)
    order: list[int] = []
    stack = [(t.root, False)]
    while stack:
        i, expanded = stack.pop()
        if expanded:
            order.append(i)
            continue
        stack.append((i, True))
        for k in reversed(deps[i]):
            stack.append((k, False))
    return order
