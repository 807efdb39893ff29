"""Test-time inference: beam search over paths, alternated with alignment.

A prefix of ``t + 1`` steps carries its path score ``Σ ψ(y_j)`` and an
alignment frontier ``B`` with

    B[i] = max over monotone a_0..a_i ≤ t of Σ_{k ≤ i} P[k][a_k]

updated per new column ``t`` by ``B[i] = max(B_prev[i], B[i-1] + P[i][t])``.
``B[m-1]`` is then the exact best alignment score of the prefix, so complete
paths are scored exactly; partial prefixes are ranked by
``Σ ψ(y_j) + max_i B[i]``, i.e. each instruction bound to the best step seen
so far.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import InstructionSequence, ParamVector, Path, SeqAlignment, check_alignment
from .errors import NoPathFound, TooLarge, ValidationError
from .features import FeatureTemplateConfig
from .seqmodel import Scorer, viterbi_sequence_alignment

TIE_EPS = 1e-9
MAX_EXHAUSTIVE_STATES = 10_000
MAX_EXHAUSTIVE_LENGTH = 8
MAX_EXHAUSTIVE_PATHS = 500_000


@dataclass(frozen=True)
class PlanConfig:
    beam_width: int = 32
    max_length: int = 8
    length_mode: str = "bounded"     # "bounded" (all lengths up to max) or "fixed"
    icm_rounds_infer: int = 3

    def __post_init__(self):
        if self.beam_width < 1 or self.max_length < 1:
            raise ValidationError("beam_width and max_length must be >= 1")
        if self.length_mode not in ("bounded", "fixed"):
            raise ValidationError(f"unknown length mode {self.length_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "PlanConfig":
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in dict(d or {}).items() if k in known})


@dataclass(frozen=True)
class BeamEntry:
    steps: tuple
    key: tuple                  # action serializations, for tie-breaking
    path_score: float
    frontier: np.ndarray        # B over instructions (or fixed-alignment partial sum)
    rank: float                 # pruning score

    @property
    def state(self):
        return self.steps[-1].post_state


def _better(score, length, key, best) -> bool:
    """Higher score wins; within TIE_EPS the shorter path, then the smaller key."""
    if best is None:
        return True
    bs, bl, bk = best
    if score > bs + TIE_EPS:
        return True
    if score < bs - TIE_EPS:
        return False
    return (length, key) < (bl, bk)


def _scorer(theta, features, scorer) -> Scorer:
    if scorer is not None:
        return scorer
    return Scorer(theta, features or FeatureTemplateConfig())


def beam_search_plan(x: InstructionSequence, env, start, a: SeqAlignment | Sequence[int] | None,
                     theta: ParamVector | None, cfg: PlanConfig = PlanConfig(),
                     features: FeatureTemplateConfig | None = None,
                     scorer: Scorer | None = None) -> Path:
    return _beam(x, env, start, a, _scorer(theta, features, scorer), cfg)[0]


def _beam(x, env, start, a, sc: Scorer, cfg: PlanConfig):
    m = len(x)
    fixed = None if a is None else tuple(a)
    if fixed is not None and len(fixed) != m:
        raise ValidationError("alignment length differs from instruction count")
    min_len = (max(fixed) + 1) if fixed else 1
    goal_directed = env.is_goal(start) is not None
    lengths = [cfg.max_length] if cfg.length_mode == "fixed" else range(1, cfg.max_length + 1)
    want = set(lengths)
    beam = [BeamEntry((), (), 0.0, np.full(m, -np.inf) if fixed is None else np.zeros(1), 0.0)]
    best = None
    best_path = None
    for t in range(cfg.max_length):
        children = []
        for e in beam:
            state = start if not e.steps else e.state
            for st in env.expand(state):
                children.append((e, st))
        if not children:
            break
        graphs = [st.graph for _, st in children]
        path_s = sc.step_scores(graphs)
        if m:
            uniq = list(dict.fromkeys(graphs))
            col = {g: k for k, g in enumerate(uniq)}
            Pu = sc.pair_scores([(s, g) for g in uniq for s in x.sentences]).reshape(len(uniq), m)
        new = []
        for (e, st), ps in zip(children, path_s):
            steps = e.steps + (st,)
            key = e.key + (st.action.serialize(),)
            pscore = e.path_score + float(ps)
            if fixed is None:
                if m:
                    p = Pu[col[st.graph]]
                    B = e.frontier.copy()
                    prev = 0.0
                    for i in range(m):
                        B[i] = max(e.frontier[i], prev + p[i])
                        prev = B[i]
                    rank = pscore + float(B.max())
                    align_total = float(B[-1])
                else:
                    B, rank, align_total = e.frontier, pscore, 0.0
            else:
                add = 0.0
                if m:
                    p = Pu[col[st.graph]]
                    add = sum(float(p[i]) for i in range(m) if fixed[i] == t)
                B = e.frontier + add
                rank = pscore + float(B[0])
                align_total = float(B[0])
            n = t + 1
            if n in want and n >= min_len and (not goal_directed or env.is_goal(st.post_state)):
                total = pscore + align_total + sc.length_score(n)
                if math.isfinite(total) and _better(total, n, key, best):
                    best = (total, n, key)
                    best_path = steps
            new.append(BeamEntry(steps, key, pscore, B, rank))
        new.sort(key=lambda b: (-b.rank, b.key))
        beam = new[: cfg.beam_width]
    if best_path is None:
        raise NoPathFound("no complete path within the length bound")
    return Path(best_path), best[0]


def _align(x, y: Path, sc: Scorer) -> tuple[SeqAlignment, float]:
    if not len(x):
        return SeqAlignment(()), 0.0
    return viterbi_sequence_alignment(sc.pair_matrix(x, y.graphs))


def icm_infer(x: InstructionSequence, env, start, theta: ParamVector | None,
              cfg: PlanConfig = PlanConfig(), features: FeatureTemplateConfig | None = None,
              scorer: Scorer | None = None, trace: list | None = None) -> tuple[Path, SeqAlignment]:
    """Alternate ``y ← beam plan given a`` and ``a ← Viterbi given y``.

    The alignment starts from whichever of two plans scores higher: a
    text-free plan, or a plan under the frontier alignment.  A round is kept
    only if it raises the joint score, so the joint score never decreases.
    ``trace`` (if given) receives the joint score after every kept round.
    """
    sc = _scorer(theta, features, scorer)
    inits = []
    for use_text in (False, True):
        try:
            y = _beam(x if use_text else InstructionSequence(()), env, start, None, sc, cfg)[0]
        except NoPathFound:
            continue
        a, _ = _align(x, y, sc)
        inits.append((sc.joint_score(x, y.graphs, a), y, a))
    if not inits:
        raise NoPathFound("no complete path within the length bound")
    best = max(inits, key=lambda t: t[0])
    score, y, a = best
    if trace is not None:
        trace.append(score)
    for _ in range(cfg.icm_rounds_infer):
        try:
            y2 = _beam(x, env, start, a, sc, cfg)[0]
        except NoPathFound:
            break
        a2, _ = _align(x, y2, sc)
        s2 = sc.joint_score(x, y2.graphs, a2)
        if s2 <= score + TIE_EPS:
            break
        score, y, a = s2, y2, a2
        if trace is not None:
            trace.append(score)
    return y, a


def joint_score(x, y: Path, a, sc: Scorer) -> float:
    return sc.joint_score(x, y.graphs, tuple(a))


def _reachable(env, start, depth: int) -> int:
    seen, frontier = {start}, [start]
    for _ in range(depth):
        nxt = []
        for s in frontier:
            for _, t in env.successors(s):
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
                    if len(seen) > MAX_EXHAUSTIVE_STATES:
                        raise TooLarge("reachable state space exceeds 10^4")
        frontier = nxt
    return len(seen)


def exhaustive_plan(x: InstructionSequence, env, start, theta: ParamVector | None,
                    cfg: PlanConfig = PlanConfig(), features: FeatureTemplateConfig | None = None,
                    scorer: Scorer | None = None) -> tuple[Path, SeqAlignment]:
    """Joint argmax over every path up to ``max_length`` and every monotone alignment.

    Alignments are enumerated directly (no dynamic program).  Ties follow the
    beam search: shorter path, then smaller action serialization, then the
    alignment with the smallest last step.
    """
    if cfg.max_length > MAX_EXHAUSTIVE_LENGTH:
        raise TooLarge(f"exhaustive planning limited to length {MAX_EXHAUSTIVE_LENGTH}")
    _reachable(env, start, cfg.max_length)
    sc = _scorer(theta, features, scorer)
    m = len(x)
    goal_directed = env.is_goal(start) is not None
    lengths = {cfg.max_length} if cfg.length_mode == "fixed" else set(range(1, cfg.max_length + 1))
    best, best_ya = None, None
    count = 0
    stack = [((), start)]
    while stack:
        steps, state = stack.pop()
        for st in env.expand(state):
            path = steps + (st,)
            count += 1
            if count > MAX_EXHAUSTIVE_PATHS:
                raise TooLarge("too many paths to enumerate")
            n = len(path)
            if n < cfg.max_length:
                stack.append((path, st.post_state))
            if n not in lengths or (goal_directed and not env.is_goal(st.post_state)):
                continue
            graphs = [s.graph for s in path]
            base = sc.length_score(n) + float(sc.step_scores(graphs).sum())
            key = tuple(s.action.serialize() for s in path)
            if m:
                P = sc.pair_matrix(x, graphs)
                cand = None
                for a in itertools.combinations_with_replacement(range(n), m):
                    s = sum(float(P[i, j]) for i, j in enumerate(a))
                    if cand is None or s > cand[0] or (s == cand[0] and a[::-1] < cand[1][::-1]):
                        cand = (s, a)
                total, a = base + cand[0], cand[1]
            else:
                total, a = base, ()
            if math.isfinite(total) and _better(total, n, key, best):
                best = (total, n, key)
                best_ya = (Path(path), SeqAlignment(a))
    if best_ya is None:
        raise NoPathFound("no complete path within the length bound")
    y, a = best_ya
    check_alignment(tuple(a), len(y))
    return y, a
