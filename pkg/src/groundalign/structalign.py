"""Tree-to-graph alignment scores.

A structure alignment ``b`` maps every token of a dependency tree onto a
vertex of a grounding graph: the root token goes to the graph root, and a
dependent ``k`` of token ``i`` goes to the head of some out-edge of
``vertex(i)``.  Its log-potential is

    sum_i  θ·φ(token_i, vertex(i))  +  sum_k  θ·φ(arc_k, edge(k))

and the pair score is ``log Σ_b exp(...)``.  The inside recursion runs over
tokens dependents-first, so graphs may contain cycles and self-loops.

:class:`PairBatch` compiles many (tree, graph) pairs into padded arrays and
sparse feature matrices so that scores and expected feature counts for a whole
training set cost a handful of numpy calls per tree level.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    ROOT,
    DependencyTree,
    GroundingGraph,
    ParamVector,
    reverse_topological_order,
)
from .errors import DegenerateScore, TooLarge
from .features import FeatureTemplateConfig, Featurizer, join_features, sparse_dot

EDGE_PREFIX = "edge:"
NEG_INF = -np.inf


@dataclass(frozen=True)
class StructAlignment:
    pairs: tuple[tuple[int, int], ...]          # (token, vertex), sorted by token
    edges: tuple[tuple[int, int], ...] = ()     # (dependent token, graph edge)

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


def _segment_logsumexp(vals: np.ndarray, onehot: np.ndarray) -> np.ndarray:
    """Row-wise logsumexp of ``vals`` (n, E) grouped by ``onehot`` (n, E, V)."""
    masked = np.where(onehot, vals[:, :, None], NEG_INF)
    m = masked.max(axis=1)
    msafe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(masked - msafe[:, None, :]).sum(axis=1)) + msafe


class PairBatch:
    """Compiled (tree, graph) pairs sharing one feature index."""

    def __init__(self, pairs: Sequence[tuple[DependencyTree, GroundingGraph]],
                 featurizer: Featurizer):
        self.n_pairs = P = len(pairs)
        self.trees = [x for x, _ in pairs]
        self.graphs = [g for _, g in pairs]
        self.n_vert = np.array([len(g.vertices) for g in self.graphs], dtype=np.int64)
        self.n_tok = np.array([len(x.tokens) for x in self.trees], dtype=np.int64)
        self.V = V = int(self.n_vert.max()) if P else 1
        self.E = E = max([len(g.edges) for g in self.graphs] + [1])
        self.tok_start = np.concatenate([[0], np.cumsum(self.n_tok)]).astype(np.int64)
        self.NT = NT = int(self.tok_start[-1])

        tok_prob = np.repeat(np.arange(P), self.n_tok)
        tok_head = np.full(NT, -1, dtype=np.int64)
        height = np.zeros(NT, dtype=np.int64)
        depth = np.zeros(NT, dtype=np.int64)
        root_tok = np.zeros(P, dtype=np.int64)
        root_vert = np.zeros(P, dtype=np.int64)
        src = np.zeros((P, E), dtype=np.int64)
        dst = np.zeros((P, E), dtype=np.int64)
        emask = np.zeros((P, E), dtype=bool)
        vmask = np.arange(V)[None, :] < self.n_vert[:, None]

        nrows, ncols, nvals = [], [], []
        erows, ecols, evals = [], [], []
        for p, (x, g) in enumerate(pairs):
            off = self.tok_start[p]
            order = reverse_topological_order(x)
            for i in order:
                kids = [k for k, h in enumerate(x.heads) if h == i]
                height[off + i] = 1 + max((height[off + k] for k in kids), default=-1)
            for i in reversed(order):
                h = x.heads[i]
                if h != ROOT:
                    tok_head[off + i] = off + h
                    depth[off + i] = depth[off + h] + 1
            root_tok[p] = off + x.root
            root_vert[p] = g.root
            for e, edge in enumerate(g.edges):
                src[p, e], dst[p, e], emask[p, e] = edge.src, edge.dst, True
            for i, tok in enumerate(x.tokens):
                t = off + i
                for j, vert in enumerate(g.vertices):
                    cols, vals = featurizer.join(tok, vert)
                    if len(cols):
                        nrows.append(np.full(len(cols), t * V + j))
                        ncols.append(cols)
                        nvals.append(vals)
                if x.heads[i] == ROOT:
                    continue
                for e, edge in enumerate(g.edges):
                    cols, vals = featurizer.join(x.dep_labels[i], edge.labels, EDGE_PREFIX)
                    if len(cols):
                        erows.append(np.full(len(cols), t * E + e))
                        ecols.append(cols)
                        evals.append(vals)

        self.dim = d = len(featurizer.index)

        def build(rows, cols, vals, nr):
            if rows:
                return sp.csr_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(nr, d))
            return sp.csr_matrix((nr, d))

        self.node_phi = build(nrows, ncols, nvals, NT * V)
        self.edge_phi = build(erows, ecols, evals, NT * E)
        self.tok_prob, self.tok_head = tok_prob, tok_head
        self.root_tok, self.root_vert = root_tok, root_vert
        self.src, self.dst, self.emask = src, dst, emask
        self.node_mask = vmask[tok_prob]
        self.tok_emask = emask[tok_prob]
        vr = np.arange(V)[None, None, :]
        self.src_onehot = emask[:, :, None] & (src[:, :, None] == vr)
        self.dst_onehot = emask[:, :, None] & (dst[:, :, None] == vr)
        self.has_head = tok_head >= 0
        self.inside_levels = [np.flatnonzero(height == h) for h in range(int(height.max(initial=-1)) + 1)]
        self.outside_levels = [np.flatnonzero(depth == k) for k in range(1, int(depth.max(initial=0)) + 1)]

    # -- scoring ------------------------------------------------------------

    def _theta(self, theta) -> np.ndarray:
        w = theta.weights if isinstance(theta, ParamVector) else np.asarray(theta, dtype=float)
        if len(w) >= self.dim:
            return w[: self.dim]
        return np.concatenate([w, np.zeros(self.dim - len(w))])

    def local_scores(self, theta):
        w = self._theta(theta)
        ns = (self.node_phi @ w).reshape(self.NT, self.V)
        es = (self.edge_phi @ w).reshape(self.NT, self.E)
        ns = np.where(self.node_mask, ns, NEG_INF)
        es = np.where(self.tok_emask, es, NEG_INF)
        return ns, es

    def inside(self, theta):
        """Returns ``(logZ, chart, S, ns, es)``.

        ``chart[t, j]`` is the log inside score of token ``t`` at vertex ``j``;
        ``S[t, j]`` sums token ``t``'s subtree over the out-edges of ``j``.
        """
        ns, es = self.local_scores(theta)
        acc = np.zeros((self.NT, self.V))
        chart = np.full((self.NT, self.V), NEG_INF)
        S = np.full((self.NT, self.V), NEG_INF)
        for lvl in self.inside_levels:
            chart[lvl] = ns[lvl] + acc[lvl]
            dep = lvl[self.has_head[lvl]]
            if dep.size == 0:
                continue
            p = self.tok_prob[dep]
            vals = es[dep] + np.take_along_axis(chart[dep], self.dst[p], axis=1)
            s = _segment_logsumexp(vals, self.src_onehot[p])
            S[dep] = s
            np.add.at(acc, self.tok_head[dep], s)
        logZ = chart[self.root_tok, self.root_vert]
        return logZ, chart, S, ns, es

    def log_scores(self, theta) -> np.ndarray:
        return self.inside(theta)[0]

    def marginals(self, theta, inside=None):
        """Posterior token-vertex and arc-edge marginals, shapes (NT, V) and (NT, E)."""
        logZ, chart, S, ns, es = inside if inside is not None else self.inside(theta)
        valid = np.isfinite(logZ)
        zsafe = np.where(valid, logZ, 0.0)
        out = np.full((self.NT, self.V), NEG_INF)
        out[self.root_tok[valid], self.root_vert[valid]] = 0.0
        mu_edge = np.zeros((self.NT, self.E))
        with np.errstate(invalid="ignore"):
            for lvl in self.outside_levels:
                h = self.tok_head[lvl]
                p = self.tok_prob[lvl]
                base = np.where(np.isfinite(S[lvl]), out[h] + chart[h] - S[lvl], NEG_INF)
                ew = np.take_along_axis(base, self.src[p], axis=1) + es[lvl]
                out[lvl] = _segment_logsumexp(ew, self.dst_onehot[p])
                inner = np.take_along_axis(chart[lvl], self.dst[p], axis=1)
                mu_edge[lvl] = np.exp(ew + inner - zsafe[p][:, None])
            mu_node = np.exp(out + chart - zsafe[self.tok_prob][:, None])
        mu_node = np.nan_to_num(mu_node, nan=0.0)
        mu_edge = np.nan_to_num(mu_edge, nan=0.0)
        return mu_node, mu_edge

    def expected_features(self, theta, weights=None, inside=None) -> np.ndarray:
        """``Σ_p weights[p] · ∇ log ψ_p`` as a dense vector of length ``dim``.

        Pairs with a ``-inf`` score contribute nothing.
        """
        mu_node, mu_edge = self.marginals(theta, inside)
        if weights is not None:
            wt = np.asarray(weights, dtype=float)[self.tok_prob][:, None]
            mu_node = mu_node * wt
            mu_edge = mu_edge * wt
        return self.node_phi.T @ mu_node.ravel() + self.edge_phi.T @ mu_edge.ravel()

    def chart_of(self, chart: np.ndarray, p: int) -> np.ndarray:
        a, b = self.tok_start[p], self.tok_start[p + 1]
        return chart[a:b, : self.n_vert[p]].copy()


# --- per-instance API -------------------------------------------------------

def _single(x, g, theta: ParamVector, cfg: FeatureTemplateConfig) -> PairBatch:
    return PairBatch([(x, g)], Featurizer(cfg, theta.index))


def pair_log_score(x: DependencyTree, g: GroundingGraph, theta: ParamVector,
                   cfg: FeatureTemplateConfig) -> tuple[float, np.ndarray]:
    """``log Σ_b ψ(x, g, b)`` and the token × vertex chart of log inside scores."""
    batch = _single(x, g, theta, cfg)
    logZ, chart, *_ = batch.inside(theta)
    return float(logZ[0]), batch.chart_of(chart, 0)


def pair_score_gradient(x: DependencyTree, g: GroundingGraph, theta: ParamVector,
                        cfg: FeatureTemplateConfig) -> dict:
    """Gradient of the pair log score: expected feature counts under the posterior over b."""
    batch = _single(x, g, theta, cfg)
    ins = batch.inside(theta)
    if not np.isfinite(ins[0][0]):
        raise DegenerateScore("pair score is -inf; no valid structure alignment")
    grad = batch.expected_features(theta, inside=ins)
    return {int(i): float(grad[i]) for i in np.flatnonzero(grad)}


def best_structure_alignment(x: DependencyTree, g: GroundingGraph, theta: ParamVector,
                             cfg: FeatureTemplateConfig) -> tuple[StructAlignment, float]:
    """Max-product variant of the inside pass with backpointers.

    Ties go to the lowest destination vertex, then the lowest edge index.
    """
    batch = _single(x, g, theta, cfg)
    ns, es = batch.local_scores(theta)
    V = len(g.vertices)
    best = np.full((len(x), V), NEG_INF)
    back: dict[tuple[int, int, int], int] = {}
    out = [g.out_edges(j) for j in range(V)]
    for i in reverse_topological_order(x):
        for j in range(V):
            total = ns[i, j]
            for k in x.dependents(i):
                choice, val = None, NEG_INF
                for e in sorted(out[j], key=lambda e: (g.edges[e].dst, e)):
                    v = es[k, e] + best[k, g.edges[e].dst]
                    if v > val:
                        choice, val = e, v
                total = total + val
                if choice is not None:
                    back[(i, j, k)] = choice
            best[i, j] = total
    score = float(best[x.root, g.root])
    if not np.isfinite(score):
        raise DegenerateScore("no valid structure alignment")
    pairs, edges = {x.root: g.root}, {}
    stack = [x.root]
    while stack:
        i = stack.pop()
        for k in x.dependents(i):
            e = back[(i, pairs[i], k)]
            pairs[k] = g.edges[e].dst
            edges[k] = e
            stack.append(k)
    return StructAlignment(tuple(sorted(pairs.items())), tuple(sorted(edges.items()))), score


# --- enumeration oracle -----------------------------------------------------

MAX_ORACLE_SIZE = 6


def enumerate_structure_alignments(x: DependencyTree, g: GroundingGraph, theta: ParamVector,
                                   cfg: FeatureTemplateConfig) -> Iterator[tuple[float, StructAlignment]]:
    """Every valid b with its log-potential, scored straight from ``join_features``."""
    if len(x) > MAX_ORACLE_SIZE or len(g) > MAX_ORACLE_SIZE:
        raise TooLarge(f"oracle limited to {MAX_ORACLE_SIZE} tokens and vertices")
    idx = theta.index
    w = theta.dense(None)

    def dot(v):
        return sparse_dot(v, np.concatenate([w, np.zeros(max(0, len(idx) - len(w)))]))

    order = list(reversed(reverse_topological_order(x)))  # heads before dependents
    rest = order[1:]
    choices = [[e for e, edge in enumerate(g.edges)] for _ in rest]
    for combo in itertools.product(*choices):
        vertex = {x.root: g.root}
        ok = True
        for k, e in zip(rest, combo):
            edge = g.edges[e]
            if edge.src != vertex[x.heads[k]]:
                ok = False
                break
            vertex[k] = edge.dst
        if not ok:
            continue
        score = 0.0
        for i, j in vertex.items():
            score += dot(join_features(x.tokens[i], g.vertices[j], cfg, idx))
        for k, e in zip(rest, combo):
            score += dot(join_features(x.dep_labels[k], g.edges[e].labels, cfg, idx, EDGE_PREFIX))
        yield score, StructAlignment(tuple(sorted(vertex.items())), tuple(sorted(zip(rest, combo))))


def brute_force_pair_score(x: DependencyTree, g: GroundingGraph, theta: ParamVector,
                           cfg: FeatureTemplateConfig) -> float:
    scores = [s for s, _ in enumerate_structure_alignments(x, g, theta, cfg)]
    if not scores:
        return -math.inf
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))
