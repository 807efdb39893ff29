"""Parameter estimation by iterated conditional modes.

Training alternates two maximizations:

* alignments ``a`` given θ, by Viterbi over each demonstration's pair-score
  matrix, and
* θ given alignments, by L-BFGS ascent on a contrastive objective.

The contrastive objective replaces the path-level normalizer with one softmax
per step over a sampled set of alternative actions that includes the
demonstrated one:

    Σ_demos Σ_j [ s(y_j) - log Σ_{ỹ ∈ Ỹ_j} exp s(ỹ) ]  -  (l2/2) ‖θ‖²
    s(ỹ) = ψ(ỹ) + Σ_{i : a_i = j} ψ(x_i, ỹ)

With ``stop_contrast`` extra sets contrast stopping (a zero-scored option,
always the gold choice) against text-free continuations.  One such set sits
wherever a sentence's span ends under the current alignment, including the
end of the path.  This pins text-free step scores below zero, which the
planner relies on to choose path lengths.

With ``skip_contrast`` as well, every described step after the first must
also beat skipping it, its sentences then describing the previous step.
This stops the planner from piling several sentences onto one step, and
lets a described move outweigh folding its sentence onto an implicit turn.
The contrast only runs in one last pass over the settled alignments: inside
the ICM loop it pushes sentences off the step before theirs, which feeds
back into realignment and drags alignments away from the truth.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    Demonstration,
    FeatureIndex,
    GroundingGraph,
    LabelSet,
    ParamVector,
    SeqAlignment,
    check_alignment,
)
from .errors import LineSearchFailure, NoSuccessors, ValidationError
from .features import FeatureTemplateConfig, Featurizer
from .seqmodel import (
    MAX_EXACT_LENGTH,
    length_feature_names,
    path_feature_names,
    viterbi_sequence_alignment,
)
from .structalign import EDGE_PREFIX, PairBatch


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    K: int = 16
    icm_rounds: int = 5
    seed: int = 0
    memory: int = 10
    max_iters: int = 100
    grad_tol: float = 1e-5
    l2: float = 1e-3
    init_scale: float = 0.01
    stop_contrast: bool = False
    skip_contrast: bool = False   # only with stop_contrast
    align_init: str = "diagonal"  # first-round alignment: "diagonal" or "viterbi"

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.grad_tol <= 0 or self.l2 < 0 or self.init_scale < 0 or self.memory < 1:
            raise ValidationError("optimizer settings out of range")
        if self.align_init not in ("diagonal", "viterbi"):
            raise ValidationError(f"unknown align_init {self.align_init!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in dict(d or {}).items() if k in known})


@dataclass
class TrainedModel:
    theta: ParamVector
    train_cfg: TrainConfig
    feature_cfg: FeatureTemplateConfig
    env_kind: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def index(self) -> FeatureIndex:
        return self.theta.index

    def __post_init__(self):
        if not np.all(np.isfinite(self.theta.weights)):
            raise ValidationError("trained weights are not finite")


# --- candidate sets ---------------------------------------------------------

@dataclass(frozen=True)
class CandidateSet:
    pre_state: Hashable
    actions: tuple[LabelSet, ...]
    graphs: tuple[GroundingGraph, ...]
    gold: int | None          # None for a stop set

    def __post_init__(self):
        if self.gold is not None and not 0 <= self.gold < len(self.actions):
            raise ValidationError("gold action missing from candidate set")

    def __len__(self):
        return len(self.actions)


def _sample(succ: list, gold_idx: int | None, K: int, rng: np.random.Generator) -> list[int]:
    """Indices into ``succ``: all of them if they fit, else gold plus a uniform sample."""
    if len(succ) <= K:
        return list(range(len(succ)))
    if gold_idx is None:
        return sorted(int(i) for i in rng.choice(len(succ), size=K, replace=False))
    others = [i for i in range(len(succ)) if i != gold_idx]
    picked = rng.choice(len(others), size=K - 1, replace=False) if K > 1 else []
    return sorted([gold_idx] + [others[int(i)] for i in picked])


def build_candidate_sets(demo: Demonstration, env, K: int, seed) -> list[CandidateSet]:
    """Alternative-action sets for each step of ``demo``, gold action included."""
    rng = np.random.default_rng(seed)
    out = []
    for j, st in enumerate(demo.path.steps):
        succ = env.successors(st.pre_state)
        if not succ:
            raise NoSuccessors(f"state {st.pre_state!r} has no successors")
        acts = [a for a, _ in succ]
        try:
            gold = acts.index(st.action)
        except ValueError:
            raise ValidationError(f"step {j} action is not a legal successor") from None
        keep = _sample(succ, gold, K, rng)
        out.append(CandidateSet(
            st.pre_state,
            tuple(acts[i] for i in keep),
            tuple(env.grounding_graph(st.pre_state, acts[i], succ[i][1]) for i in keep),
            keep.index(gold)))
    return out


def span_ends(demo: Demonstration, a: Sequence[int]) -> list[int]:
    """Steps after which some prefix of the instructions is fully carried out.

    That is the step just before each sentence that starts a new step, plus
    the final step of the path.  Unaligned steps ahead of a sentence stay
    inside the preceding span, since the demonstration does take them.
    """
    a = tuple(a)
    n = len(demo.path)
    ends = {a[i + 1] - 1 for i in range(len(a) - 1) if a[i] < a[i + 1]}
    ends.add(n - 1)
    return sorted(ends)


def stop_sets(demo: Demonstration, env, a: Sequence[int], K: int, seed) -> list[CandidateSet]:
    """Text-free continuations from each span end; stopping is the gold choice."""
    rng = np.random.default_rng(seed)
    out = []
    for j in span_ends(demo, a):
        state = demo.path.steps[j].post_state
        succ = env.successors(state)
        keep = _sample(succ, None, K, rng)
        out.append(CandidateSet(
            state,
            tuple(succ[i][0] for i in keep),
            tuple(env.grounding_graph(state, succ[i][0], succ[i][1]) for i in keep),
            None))
    return out


def diagonal_alignment(m: int, n: int) -> SeqAlignment:
    """Spread ``m`` instructions evenly over ``n`` steps (identity when m = n)."""
    return SeqAlignment(tuple(max(0, math.ceil((i + 1) * n / m) - 1) for i in range(m)))


# --- contrastive objective ----------------------------------------------------

def _csr(rows, cols, vals, shape):
    if rows:
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=shape)
    return sp.csr_matrix(shape)


class ContrastiveObjective:
    """The contrastive objective compiled for fixed alignments and candidate sets.

    Every candidate is one *entry*; entries of the same step form a contiguous
    group.  Entry scores are ``F @ θ + M @ pair_scores`` where ``F`` holds
    path features and ``M`` counts how many aligned sentences pair with the
    entry's graph.
    """

    def __init__(self, demos: Sequence[Demonstration], alignments: Sequence[Sequence[int]],
                 candidates: Sequence[Sequence[CandidateSet]], featurizer: Featurizer,
                 l2: float = 1e-3, stop_contrast: bool = False, skip_contrast: bool = False):
        self.l2 = l2
        skip_contrast = skip_contrast and stop_contrast
        pair_id: dict = {}
        frow, fcol, fval = [], [], []
        mrow, mcol = [], []
        group_start, gold_entry = [], []
        e = 0
        for demo, a, cands in zip(demos, alignments, candidates):
            a = tuple(a)
            check_alignment(a, len(demo.path))
            aligned: dict[int, list[int]] = {}
            for i, j in enumerate(a):
                aligned.setdefault(j, []).append(i)
            for j, cs in enumerate(cands):
                stop = cs.gold is None
                if stop and not stop_contrast:
                    continue
                # a described step (after the first) must also beat skipping it,
                # with its sentences falling back onto the previous step
                fallback = skip_contrast and not stop and j > 0 and j in aligned
                group_start.append(e)
                gold_entry.append(e + len(cs) if stop else e + cs.gold)
                for g in cs.graphs:
                    cols, vals = featurizer.vector(path_feature_names(g), key=("path", g))
                    frow.append(np.full(len(cols), e))
                    fcol.append(cols)
                    fval.append(vals)
                    for i in () if stop else aligned.get(j, ()):
                        p = pair_id.setdefault((demo.instructions[i], g), len(pair_id))
                        mrow.append(e)
                        mcol.append(p)
                    e += 1
                if stop:
                    e += 1  # the stop entry: no features, score 0
                elif fallback:
                    prev = demo.path.steps[j - 1].graph
                    for i in aligned[j]:
                        p = pair_id.setdefault((demo.instructions[i], prev), len(pair_id))
                        mrow.append(e)
                        mcol.append(p)
                    e += 1
        self.n_entries = e
        self.pairs = list(pair_id)
        self.batch = PairBatch(self.pairs, featurizer) if self.pairs else None
        self.dim = len(featurizer.index)
        self.F = _csr(frow, fcol, fval, (e, self.dim))
        self.M = sp.csr_matrix((np.ones(len(mrow)), (mrow, mcol)), shape=(e, len(self.pairs)))
        self.group_start = np.array(group_start, dtype=np.int64)
        self.gold = np.array(gold_entry, dtype=np.int64)
        sizes = np.diff(np.append(self.group_start, e))
        self.group_of = np.repeat(np.arange(len(group_start)), sizes)

    def _w(self, theta) -> np.ndarray:
        w = theta.weights if isinstance(theta, ParamVector) else np.asarray(theta, dtype=float)
        if len(w) < self.dim:
            w = np.concatenate([w, np.zeros(self.dim - len(w))])
        return w

    def __call__(self, theta) -> tuple[float, np.ndarray]:
        w = self._w(theta)
        s = self.F @ w
        ins = None
        if self.batch is not None:
            ins = self.batch.inside(w)
            s = s + self.M @ ins[0]
        if len(self.group_start) == 0:
            return -0.5 * self.l2 * float(w @ w), -self.l2 * w
        gmax = np.maximum.reduceat(s, self.group_start)
        gsafe = np.where(np.isfinite(gmax), gmax, 0.0)
        z = np.exp(s - gsafe[self.group_of])
        lse = np.log(np.add.reduceat(z, self.group_start)) + gsafe
        value = float(np.sum(s[self.gold] - lse)) - 0.5 * self.l2 * float(w @ w)
        r = -z / np.exp(lse - gsafe)[self.group_of]
        r[self.gold] += 1.0
        grad = self.F.T @ r - self.l2 * w
        if self.batch is not None:
            pw = self.M.T @ r
            grad = grad + self.batch.expected_features(w, weights=pw, inside=ins)
        return value, np.asarray(grad, dtype=float)


def contrastive_objective(demos, alignments, candidates, theta: ParamVector,
                          cfg: FeatureTemplateConfig, l2: float = 1e-3,
                          stop_contrast: bool = False,
                          skip_contrast: bool = False) -> tuple[float, dict]:
    """Objective value and its gradient as a sparse vector."""
    fz = Featurizer(cfg, theta.index)
    obj = ContrastiveObjective(demos, alignments, candidates, fz, l2, stop_contrast, skip_contrast)
    value, grad = obj(theta)
    return value, {int(i): float(grad[i]) for i in np.flatnonzero(grad)}


# --- optimizer ------------------------------------------------------------------

@dataclass
class OptimizeResult:
    theta: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    line_search_failed: bool = False
    history: list = field(default_factory=list)


def optimize_theta(fn: Callable[[np.ndarray], tuple[float, np.ndarray]], theta0: np.ndarray,
                   memory: int = 10, max_iters: int = 100, grad_tol: float = 1e-5,
                   c1: float = 1e-4, shrink: float = 0.5, max_backtracks: int = 40) -> OptimizeResult:
    """Maximize ``fn`` by L-BFGS with a backtracking Armijo line search.

    ``fn`` returns ``(value, gradient)``.  Accepted steps never decrease the
    objective.  On line-search failure the best iterate is returned with
    ``line_search_failed`` set and a :class:`LineSearchFailure` warning.
    """
    x = np.array(theta0, dtype=float)
    f, g = fn(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValidationError("objective is not finite at the initial point")
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    history = [f]
    for it in range(max_iters):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= grad_tol:
            return OptimizeResult(x, f, gnorm, it, True, history=history)
        # two-loop recursion on the ascent direction
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            rho = 1.0 / float(y @ s)
            al = rho * float(s @ q)
            alphas.append((rho, al))
            q -= al * y
        if S:
            q *= float(S[-1] @ Y[-1]) / float(Y[-1] @ Y[-1])
        else:
            q /= max(1.0, float(np.linalg.norm(g)))
        for (s, y), (rho, al) in zip(zip(S, Y), reversed(alphas)):
            b = rho * float(y @ q)
            q += (al - b) * s
        d = q
        slope = float(g @ d)
        if slope <= 0:       # not an ascent direction: reset memory, use the gradient
            S.clear()
            Y.clear()
            d = g / max(1.0, float(np.linalg.norm(g)))
            slope = float(g @ d)
        t = 1.0
        for _ in range(max_backtracks):
            xn = x + t * d
            fn_, gn = fn(xn)
            if np.isfinite(fn_) and fn_ >= f + c1 * t * slope:
                break
            t *= shrink
        else:
            warnings.warn("line search failed; returning best iterate", LineSearchFailure)
            return OptimizeResult(x, f, gnorm, it, False, True, history)
        s, y = xn - x, g - gn      # y is the change in the *negated* gradient
        if float(s @ y) > 1e-12:
            S.append(s)
            Y.append(y)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        x, f, g = xn, fn_, gn
        history.append(f)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return OptimizeResult(x, f, gnorm, max_iters, gnorm <= grad_tol, history=history)


def finite_difference_gradcheck(fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
                                theta: np.ndarray, step: float = 1e-5, max_coords: int = 200,
                                floor: float = 1e-3, seed: int = 0) -> float:
    """Largest relative error between ``fn``'s gradient and central differences.

    Relative error is ``|g - fd| / max(|g|, |fd|, floor)``; coordinates beyond
    ``max_coords`` are subsampled.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.array(theta, dtype=float)
    _, g = fn(theta)
    d = len(theta)
    coords = np.arange(d)
    if d > max_coords:
        coords = np.sort(np.random.default_rng(seed).choice(d, size=max_coords, replace=False))
    worst = 0.0
    for i in coords:
        e = np.zeros(d)
        e[i] = step
        fd = (fn(theta + e)[0] - fn(theta - e)[0]) / (2 * step)
        err = abs(g[i] - fd) / max(abs(g[i]), abs(fd), floor)
        worst = max(worst, err)
    return worst


# --- ICM training -------------------------------------------------------------

def _env_for(demo: Demonstration, env_factory, cache: dict):
    key = id(demo.instance)
    env = cache.get(key)
    if env is None:
        env = cache[key] = env_factory(demo.env_kind, demo.instance)
    return env


def discover_features(demos: Sequence[Demonstration], envs: Sequence, featurizer: Featurizer,
                      max_length: int = MAX_EXACT_LENGTH) -> None:
    """Register every feature that training or alignment can touch.

    This covers each sentence joined with every step graph and every
    alternative graph of its demonstration, plus path and length features.
    """
    for n in range(1, max_length + 2):
        featurizer.vector(length_feature_names(n), key=("len", n))
    for demo, env in zip(demos, envs):
        graphs = []
        for st in demo.path.steps:
            graphs.extend(s.graph for s in env.expand(st.pre_state))
        graphs.extend(s.graph for s in env.expand(demo.path.final_state(demo.start_state)))
        graphs = list(dict.fromkeys(graphs))
        for g in graphs:
            featurizer.vector(path_feature_names(g), key=("path", g))
        for x in demo.instructions:
            for g in graphs:
                for tok in x.tokens:
                    for v in g.vertices:
                        featurizer.join(tok, v)
                for k, dep in enumerate(x.dep_labels):
                    if x.heads[k] >= 0:
                        for edge in g.edges:
                            featurizer.join(dep, edge.labels, EDGE_PREFIX)


def _alignment_batch(demos, featurizer):
    pairs = [(x, st.graph) for d in demos for x in d.instructions for st in d.path.steps]
    pairs = list(dict.fromkeys(pairs))
    return pairs, (PairBatch(pairs, featurizer) if pairs else None)


def realign(demos, pairs, batch, w) -> list[SeqAlignment]:
    scores = dict(zip(pairs, batch.log_scores(w))) if batch is not None else {}
    out = []
    for d in demos:
        P = np.array([[scores[(x, st.graph)] for st in d.path.steps] for x in d.instructions])
        out.append(viterbi_sequence_alignment(P)[0] if len(d.instructions) else SeqAlignment(()))
    return out


def train_icm(demos: Sequence[Demonstration], cfg: TrainConfig = TrainConfig(),
              features: FeatureTemplateConfig | None = None, env_factory=None,
              index: FeatureIndex | None = None) -> TrainedModel:
    if env_factory is None:
        from .env import make_env as env_factory
    if not demos:
        raise ValidationError("no demonstrations to train on")
    features = features or FeatureTemplateConfig()
    cache: dict = {}
    envs = [_env_for(d, env_factory, cache) for d in demos]
    index = index.copy() if index is not None else FeatureIndex()
    index.frozen = False
    fz = Featurizer(features, index)
    discover_features(demos, envs, fz)
    index.freeze()
    fz = Featurizer(features, index)

    rng = np.random.default_rng(cfg.seed)
    w = rng.uniform(-cfg.init_scale, cfg.init_scale, size=len(index))
    diag: dict = {"objective_start": [], "objective_end": [], "alignment_changes": [],
                  "iterations": [], "converged": [], "line_search_failed": []}
    pairs, abatch = _alignment_batch(demos, fz)
    prev = None
    for r in range(cfg.icm_rounds):
        if prev is None and cfg.align_init == "diagonal":
            align = [diagonal_alignment(len(d.instructions), len(d.path)) for d in demos]
        else:
            align = realign(demos, pairs, abatch, w)
        changes = len(demos) if prev is None else sum(a != b for a, b in zip(align, prev))
        diag["alignment_changes"].append(int(changes))
        if prev is not None and changes == 0:
            break
        prev = align
        cands = [build_candidate_sets(d, env, cfg.K, [cfg.seed, r, i])
                 for i, (d, env) in enumerate(zip(demos, envs))]
        if cfg.stop_contrast:
            for i, (d, env) in enumerate(zip(demos, envs)):
                cands[i] = cands[i] + stop_sets(d, env, align[i], cfg.K, [cfg.seed, r, i, 1])
        obj = ContrastiveObjective(demos, align, cands, fz, cfg.l2, cfg.stop_contrast)
        res = optimize_theta(obj, w, cfg.memory, cfg.max_iters, cfg.grad_tol)
        diag["objective_start"].append(float(res.history[0]))
        diag["objective_end"].append(float(res.value))
        diag["iterations"].append(int(res.iterations))
        diag["converged"].append(bool(res.converged))
        diag["line_search_failed"].append(bool(res.line_search_failed))
        w = res.theta
    if cfg.skip_contrast and cfg.stop_contrast and prev is not None:
        obj = ContrastiveObjective(demos, prev, cands, fz, cfg.l2, True, True)
        res = optimize_theta(obj, w, cfg.memory, cfg.max_iters, cfg.grad_tol)
        diag["skip_objective"] = [float(res.history[0]), float(res.value)]
        w = res.theta
    diag["alignments"] = [list(a) for a in (prev or [])]
    kind = demos[0].env_kind
    return TrainedModel(ParamVector(index, w), cfg, features, kind, diag)
