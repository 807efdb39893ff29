"""Path-level model: length and step potentials plus aligned pair potentials.

The log-potential of (instructions x, path y, alignment a) is

    ψ(n) + Σ_j ψ(y_j) + Σ_i ψ(x_i, y_{a_i})

with ψ(n) and ψ(y_j) linear in θ and ψ(x_i, y_j) the log pair score from
:mod:`groundalign.structalign`.  Alignments are monotone non-decreasing.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    REAL,
    SYM,
    DependencyTree,
    GroundingGraph,
    InstructionSequence,
    ParamVector,
    Path,
    SeqAlignment,
    check_alignment,
)
from .errors import EmptyMatrix, TooLarge
from .features import AND, HIDDEN, FeatureTemplateConfig, Featurizer
from .structalign import PairBatch

MAX_EXACT_LENGTH = 20
PATH_PREFIX = "path:"


def length_feature_names(n: int) -> list[tuple[str, float]]:
    if n <= MAX_EXACT_LENGTH:
        return [(f"len={n}", 1.0)]
    return [(f"len>{MAX_EXACT_LENGTH}", 1.0)]


def path_feature_names(g: GroundingGraph) -> list[tuple[str, float]]:
    """Text-independent features of one step: root-vertex labels and their pairwise conjunctions."""
    labs = [lab for lab in g.root_labels.sorted() if not lab.key.startswith(HIDDEN)]
    out = [(PATH_PREFIX + "bias", 1.0)]
    syms = [lab for lab in labs if lab.kind == SYM]
    out += [(f"{PATH_PREFIX}{lab.key}={lab.value}", 1.0) for lab in syms]
    out += [(f"{PATH_PREFIX}{lab.key}", lab.value) for lab in labs if lab.kind == REAL]
    for a, b in itertools.combinations(syms, 2):
        out.append((f"{PATH_PREFIX}{a.key}={a.value}{AND}{b.key}={b.value}", 1.0))
    return out


class Scorer:
    """Caches every potential for one θ.

    Pair scores are computed in batches (one :class:`PairBatch` per call to
    :meth:`pair_scores`) and memoized by (tree, graph).
    """

    def __init__(self, theta: ParamVector, cfg: FeatureTemplateConfig,
                 featurizer: Featurizer | None = None):
        self.theta = theta
        self.cfg = cfg
        self.featurizer = featurizer or Featurizer(cfg, theta.index)
        self._pair: dict = {}
        self._path: dict = {}

    def _dot(self, cols, vals) -> float:
        w = self.theta.weights
        keep = cols < len(w)
        return float(np.dot(vals[keep], w[cols[keep]]))

    def length_score(self, n: int) -> float:
        cols, vals = self.featurizer.vector(length_feature_names(n), key=("len", n))
        return self._dot(cols, vals)

    def path_score(self, g: GroundingGraph) -> float:
        s = self._path.get(g)
        if s is None:
            cols, vals = self.featurizer.vector(path_feature_names(g), key=("path", g))
            s = self._path[g] = self._dot(cols, vals)
        return s

    def pair_scores(self, pairs: Sequence[tuple[DependencyTree, GroundingGraph]]) -> np.ndarray:
        todo = list(dict.fromkeys(p for p in pairs if p not in self._pair))
        if todo:
            batch = PairBatch(todo, self.featurizer)
            for p, s in zip(todo, batch.log_scores(self.theta)):
                self._pair[p] = float(s)
        return np.array([self._pair[p] for p in pairs], dtype=float)

    def pair_score(self, x: DependencyTree, g: GroundingGraph) -> float:
        return float(self.pair_scores([(x, g)])[0])

    def pair_matrix(self, x: InstructionSequence, graphs: Sequence[GroundingGraph]) -> np.ndarray:
        pairs = [(s, g) for s in x.sentences for g in graphs]
        return self.pair_scores(pairs).reshape(len(x), len(graphs))

    def step_scores(self, graphs: Sequence[GroundingGraph]) -> np.ndarray:
        return np.array([self.path_score(g) for g in graphs], dtype=float)

    def joint_score(self, x: InstructionSequence, graphs: Sequence[GroundingGraph],
                    a: Sequence[int]) -> float:
        total = self.length_score(len(graphs)) + float(self.step_scores(graphs).sum())
        if len(x):
            P = self.pair_matrix(x, graphs)
            total += float(sum(P[i, j] for i, j in enumerate(a)))
        return total


@dataclass(frozen=True)
class PathPotentialBreakdown:
    length_term: float
    step_terms: tuple[float, ...]
    pair_terms: tuple[float, ...]   # ψ(x_i, y_{a_i}) per instruction
    total: float


def path_log_potential(x: InstructionSequence, y: Path, a: SeqAlignment | Sequence[int],
                       theta: ParamVector, cfg: FeatureTemplateConfig,
                       scorer: Scorer | None = None) -> PathPotentialBreakdown:
    a = tuple(a)
    if len(a) != len(x):
        raise ValueError("alignment length differs from instruction count")
    check_alignment(a, len(y))
    sc = scorer or Scorer(theta, cfg)
    graphs = y.graphs
    length = sc.length_score(len(y))
    steps = tuple(float(s) for s in sc.step_scores(graphs))
    pairs = tuple(float(s) for s in sc.pair_scores([(x[i], graphs[j]) for i, j in enumerate(a)]))
    total = length + sum(steps) + sum(pairs)
    return PathPotentialBreakdown(length, steps, pairs, total)


def viterbi_sequence_alignment(P: np.ndarray) -> tuple[SeqAlignment, float]:
    """Best monotone non-decreasing alignment of rows (instructions) to columns (steps).

    Among optimal alignments the one with the smallest last step wins, then
    the smallest second-to-last, and so on.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0 or P.shape[1] == 0:
        raise EmptyMatrix(f"need m, n >= 1, got shape {P.shape}")
    m, _ = P.shape
    A = np.empty_like(P)
    A[0] = P[0]
    for i in range(1, m):
        A[i] = P[i] + np.maximum.accumulate(A[i - 1])
    j = int(np.argmax(A[m - 1]))
    score = float(A[m - 1, j])
    assign = [j]
    for i in range(m - 2, -1, -1):
        j = int(np.argmax(A[i, : j + 1]))
        assign.append(j)
    return SeqAlignment(tuple(reversed(assign))), score


def monotone_alignments(m: int, n: int):
    return itertools.combinations_with_replacement(range(n), m)


def brute_force_alignment(P: np.ndarray) -> tuple[SeqAlignment, float]:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0 or P.shape[1] == 0:
        raise EmptyMatrix(f"need m, n >= 1, got shape {P.shape}")
    m, n = P.shape
    if m > 6 or n > 6:
        raise TooLarge("brute-force alignment limited to 6 x 6")
    best, best_score = None, -np.inf
    for a in monotone_alignments(m, n):
        s = 0.0
        for i, j in enumerate(a):
            s += P[i, j]
        if best is None or s > best_score or (s == best_score and a[::-1] < best[::-1]):
            best, best_score = a, s
    return SeqAlignment(best), float(best_score)
