"""Slow, obviously-correct reference computations for the tests.

Nothing in here shares code with the implementations under test beyond the
domain types and ``join_features`` (the definition of φ itself).
"""
import math

import numpy as np

from groundalign.core import ROOT
from groundalign.features import join_features, sparse_dot
from groundalign.structalign import EDGE_PREFIX


# --- edit distance: every edit script, no memo ------------------------------------------

def edit_distance_scripts(s: str, t: str) -> int:
    if not s:
        return len(t)
    if not t:
        return len(s)
    return min(
        edit_distance_scripts(s[1:], t) + 1,                       # delete s[0]
        edit_distance_scripts(s, t[1:]) + 1,                       # insert t[0]
        edit_distance_scripts(s[1:], t[1:]) + (s[0] != t[0]),      # substitute / match
    )


# --- tree-to-graph alignments by recursive assignment --------------------------------------

def structure_alignments(x, g):
    """Yield (token -> vertex, token -> edge) for every valid alignment."""
    kids = {i: [k for k, h in enumerate(x.heads) if h == i] for i in range(len(x))}
    root = x.heads.index(ROOT)

    def place(todo, vertex, edge):
        if not todo:
            yield dict(vertex), dict(edge)
            return
        k, rest = todo[0], todo[1:]
        here = vertex[x.heads[k]]
        for e, ed in enumerate(g.edges):
            if ed.src != here:
                continue
            vertex[k], edge[k] = ed.dst, e
            yield from place(rest + kids[k], vertex, edge)
            del vertex[k], edge[k]

    yield from place(list(kids[root]), {root: g.root}, {})


def alignment_log_potential(x, g, theta, cfg, vertex, edge) -> float:
    w = theta.weights
    idx = theta.index
    s = 0.0
    for i, j in vertex.items():
        s += sparse_dot(join_features(x.tokens[i], g.vertices[j], cfg, idx), w)
    for k, e in edge.items():
        s += sparse_dot(join_features(x.dep_labels[k], g.edges[e].labels, cfg, idx, EDGE_PREFIX), w)
    return s


def pair_score_by_enumeration(x, g, theta, cfg) -> float:
    terms = [alignment_log_potential(x, g, theta, cfg, v, e) for v, e in structure_alignments(x, g)]
    if not terms:
        return -math.inf
    m = max(terms)
    return m + math.log(math.fsum(math.exp(t - m) for t in terms))


def best_alignment_by_enumeration(x, g, theta, cfg):
    best = None
    for v, e in structure_alignments(x, g):
        s = alignment_log_potential(x, g, theta, cfg, v, e)
        if best is None or s > best[0]:
            best = (s, v)
    return best


# --- monotone sequence alignments ------------------------------------------------------------

def monotone_sequences(m: int, n: int, lo: int = 0):
    if m == 0:
        yield ()
        return
    for j in range(lo, n):
        for rest in monotone_sequences(m - 1, n, j):
            yield (j,) + rest


def best_monotone(P):
    """Max score; ties go to the colexicographically smallest alignment."""
    m, n = P.shape
    best = None
    for a in monotone_sequences(m, n):
        s = 0.0
        for i, j in enumerate(a):
            s += P[i, j]
        key = (-s, a[::-1])
        if best is None or key < best[0]:
            best = (key, a, s)
    return best[1], best[2]


# --- finite differences -----------------------------------------------------------------------

def central_difference(f, theta, h=1e-4):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def max_rel_error(g, fd, floor=1e-3) -> float:
    g, fd = np.asarray(g), np.asarray(fd)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)
    return float(np.max(np.abs(g - fd) / denom)) if len(g) else 0.0


# --- joint planning by brute force ---------------------------------------------------------------

def all_paths(env, start, max_length):
    """Every action path of length 1..max_length as tuples of ActionStep."""
    out = []

    def walk(prefix, state):
        if len(prefix) == max_length:
            return
        for st in env.expand(state):
            path = prefix + (st,)
            out.append(path)
            walk(path, st.post_state)

    walk((), start)
    return out


def best_joint_score(x, env, start, scorer, max_length, goal_only=False):
    best = -math.inf
    for steps in all_paths(env, start, max_length):
        if goal_only and not env.is_goal(steps[-1].post_state):
            continue
        graphs = [s.graph for s in steps]
        base = scorer.length_score(len(steps)) + sum(scorer.path_score(g) for g in graphs)
        if len(x):
            P = scorer.pair_matrix(x, graphs)
            base += max(sum(P[i, j] for i, j in enumerate(a))
                        for a in monotone_sequences(len(x), len(steps)))
        best = max(best, base)
    return best
