import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_table_demo
from oracles import central_difference, max_rel_error
from groundalign.core import (
    Demonstration,
    DependencyTree,
    FeatureIndex,
    InstructionSequence,
    LabelSet,
    ParamVector,
    ROOT,
)
from groundalign.env import TableEnv, TableInstance, make_env
from groundalign.errors import LineSearchFailure, NoSuccessors, ValidationError
from groundalign.features import FeatureTemplateConfig, Featurizer
from groundalign.learn import (
    CandidateSet,
    ContrastiveObjective,
    TrainConfig,
    build_candidate_sets,
    contrastive_objective,
    diagonal_alignment,
    finite_difference_gradcheck,
    optimize_theta,
    realign,
    span_ends,
    stop_sets,
    train_icm,
    _alignment_batch,
)
from groundalign.seqmodel import Scorer

CFG = FeatureTemplateConfig()


def compiled(demos, K=4, seed=0, stop=False, skip=False, l2=0.0):
    envs = [make_env(d.env_kind, d.instance) for d in demos]
    align = [diagonal_alignment(len(d.instructions), len(d.path)) for d in demos]
    cands = []
    for i, (d, env) in enumerate(zip(demos, envs)):
        cs = build_candidate_sets(d, env, K, [seed, i])
        if stop:
            cs = cs + stop_sets(d, env, align[i], K, [seed, i, 1])
        cands.append(cs)
    fz = Featurizer(CFG, FeatureIndex())
    obj = ContrastiveObjective(demos, align, cands, fz, l2, stop, skip)
    return obj, align, cands, fz.index


# --- candidate sets ---

def _fan(n_succ):
    inst = TableInstance(0, [(0, LabelSet.of(id=str(k)), k + 1) for k in range(n_succ)])
    env = TableEnv(inst)
    path = env.replay(0, [LabelSet.of(id="1")])
    x = InstructionSequence((DependencyTree((LabelSet.of(word="go"),), (ROOT,)),))
    return Demonstration(x, path, "table", inst, 0), env


def test_small_fan_is_taken_whole():
    demo, env = _fan(3)
    (cs,) = build_candidate_sets(demo, env, 16, 0)
    assert len(cs) == 3 and cs.actions[cs.gold] == LabelSet.of(id="1")


def test_k_one_is_gold_only():
    demo, env = _fan(8)
    (cs,) = build_candidate_sets(demo, env, 1, 0)
    assert cs.actions == (LabelSet.of(id="1"),) and cs.gold == 0


@given(st.integers(0, 10**6), st.integers(1, 6))
def test_sampling_is_deterministic_and_keeps_gold(seed, K):
    demo, env = _fan(9)
    a = build_candidate_sets(demo, env, K, seed)
    b = build_candidate_sets(demo, env, K, seed)
    assert a == b
    (cs,) = a
    assert len(cs) == K and cs.actions[cs.gold] == demo.path.steps[0].action
    legal = {act for act, _ in env.successors(0)}
    assert set(cs.actions) <= legal


def test_missing_successors():
    inst = TableInstance(0, [(0, LabelSet.of(id="a"), 1)])
    env = TableEnv(inst)
    demo = Demonstration(InstructionSequence(()), env.replay(0, [LabelSet.of(id="a")]), "table", inst, 0)
    bad = Demonstration(demo.instructions, demo.path, "table", TableInstance(9, []), 0)
    with pytest.raises(NoSuccessors):
        build_candidate_sets(bad, TableEnv(bad.instance), 4, 0)


def test_candidate_set_requires_gold():
    with pytest.raises(ValidationError):
        CandidateSet(0, (LabelSet(),), (None,), 3)


def test_span_ends_keep_implicit_steps_inside():
    inst = TableInstance(0, [(0, LabelSet.of(id="loop"), 0)])
    path = TableEnv(inst).replay(0, [LabelSet.of(id="loop")] * 5)
    d = Demonstration(InstructionSequence(()), path, "table", inst, 0)
    # sentences on steps 0, 2, 2, 4 of a five-step path
    assert span_ends(d, (0, 2, 2, 4)) == [1, 3, 4]
    assert span_ends(d, (4,)) == [4]


# --- objective ---

def test_gold_only_sets_leave_the_regularizer():
    demos = [random_table_demo(s) for s in range(3)]
    obj, *_ = compiled(demos, K=1, l2=0.5)
    w = np.random.default_rng(0).normal(size=obj.dim)
    v, g = obj(w)
    assert v == pytest.approx(-0.25 * float(w @ w))
    np.testing.assert_allclose(g, -0.5 * w, atol=1e-12)


def test_uniform_softmax_at_zero():
    demos = [random_table_demo(s) for s in range(5)]
    obj, align, cands, idx = compiled(demos, K=16)
    v, _ = obj(np.zeros(obj.dim))
    expected = -sum(math.log(len(cs)) for cs_list in cands for cs in cs_list)
    assert v == pytest.approx(expected)
    val, _ = contrastive_objective(demos, align, cands, ParamVector(idx, np.zeros(len(idx))), CFG, l2=0.0)
    assert val == pytest.approx(expected)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    demos = [random_table_demo(seed * 7 + k) for k in range(2)]
    obj, *_ = compiled(demos, K=3, seed=seed, stop=seed % 2 == 1, skip=seed % 4 == 3, l2=1e-3)
    w = np.random.default_rng(seed).uniform(-1, 1, obj.dim)
    _, g = obj(w)
    fd = central_difference(lambda t: obj(t)[0], w)
    assert max_rel_error(g, fd) <= 1e-5


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.floats(0.1, 3))
def test_objective_is_a_log_probability(seed, scale):
    demos = [random_table_demo(seed), random_table_demo(seed + 1)]
    obj, *_ = compiled(demos, K=4, seed=seed, stop=True)
    w = np.random.default_rng(seed).normal(scale=scale, size=obj.dim)
    assert obj(w)[0] <= 1e-12


# --- optimizer ---

def test_quadratic_converges():
    c = np.array([1.0, -2.0, 0.5, 3.0])
    res = optimize_theta(lambda t: (-float((t - c) @ (t - c)), -2 * (t - c)), np.zeros(4), grad_tol=1e-9)
    assert res.converged
    np.testing.assert_allclose(res.theta, c, atol=1e-6)
    assert all(b >= a for a, b in zip(res.history, res.history[1:]))


def test_already_optimal():
    c = np.array([0.3, 0.4])
    res = optimize_theta(lambda t: (-float((t - c) @ (t - c)), -2 * (t - c)), c.copy())
    assert res.iterations == 0 and np.array_equal(res.theta, c)


def test_contrastive_ascent_is_monotone():
    demos = [random_table_demo(11), random_table_demo(12)]
    obj, *_ = compiled(demos, K=4, l2=1e-3)
    res = optimize_theta(obj, np.zeros(obj.dim))
    assert res.value >= res.history[0]
    assert all(b >= a for a, b in zip(res.history, res.history[1:]))


def test_line_search_failure_returns_best():
    # gradient points the wrong way, so no step is ever accepted
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LineSearchFailure)
        res = optimize_theta(lambda t: (-float(t @ t), t.copy() + 1.0), np.ones(2))
    assert res.line_search_failed and np.array_equal(res.theta, np.ones(2))


def test_non_finite_start_rejected():
    with pytest.raises(ValidationError):
        optimize_theta(lambda t: (math.nan, t), np.zeros(1))


# --- gradcheck ---

def test_gradcheck_linear_and_constant():
    v = np.array([1.5, -2.0, 0.25])
    assert finite_difference_gradcheck(lambda t: (float(t @ v), v.copy()), np.zeros(3), 1e-4) <= 1e-10
    assert finite_difference_gradcheck(lambda t: (7.0, np.zeros(3)), np.ones(3), 1e-4) <= 1e-10
    # a wrong gradient is caught
    assert finite_difference_gradcheck(lambda t: (float(t @ v), v + 1), np.zeros(3), 1e-4) > 0.1


def test_gradcheck_on_contrastive():
    obj, *_ = compiled([random_table_demo(3), random_table_demo(4)], K=3, stop=True, l2=1e-3)
    w = np.random.default_rng(1).uniform(-0.5, 0.5, obj.dim)
    assert finite_difference_gradcheck(obj, w, 1e-4) <= 1e-5
    with pytest.raises(ValueError):
        finite_difference_gradcheck(obj, w, 0.0)


# --- training ---

def test_zero_rounds_keep_the_seeded_init():
    demos = [random_table_demo(s) for s in range(3)]
    cfg = TrainConfig(icm_rounds=0, seed=42, init_scale=0.01)
    model = train_icm(demos, cfg, CFG)
    expected = np.random.default_rng(42).uniform(-0.01, 0.01, size=len(model.index))
    assert np.array_equal(model.theta.weights, expected)


def _red_blue(count, seed):
    """The word "red" always goes toward red-labelled actions, "blue" toward blue."""
    rng = np.random.default_rng(seed)
    demos = []
    for i in range(count):
        colors = ["red", "blue", "green"]
        rng.shuffle(colors)
        inst = TableInstance(0, [(0, LabelSet.of(color=c, id=str(k)), k + 1) for k, c in enumerate(colors)])
        env = TableEnv(inst)
        target = ["red", "blue"][i % 2]
        act = next(a for a, _ in env.successors(0) if a.get("color") == target)
        x = InstructionSequence((DependencyTree((LabelSet.of(word=target),), (ROOT,)),))
        demos.append(Demonstration(x, env.replay(0, [act]), "table", inst, 0, id=str(i)))
    return demos


def test_red_blue_sign_check():
    model = train_icm(_red_blue(20, 0), TrainConfig(icm_rounds=2), FeatureTemplateConfig(kinds=("conjunction",)))
    th = model.theta
    assert th["word=red∧color=red"] > th["word=red∧color=blue"]
    assert th["word=blue∧color=blue"] > th["word=blue∧color=red"]


def test_training_is_deterministic():
    demos = [random_table_demo(s) for s in range(6)]
    cfg = TrainConfig(icm_rounds=2, seed=5, stop_contrast=True)
    a = train_icm(demos, cfg, CFG)
    b = train_icm(demos, cfg, CFG)
    assert a.theta.weights.tobytes() == b.theta.weights.tobytes()
    assert a.index.names == b.index.names
    assert a.diagnostics == b.diagnostics


@pytest.mark.parametrize("seed", range(5))
def test_realignment_never_lowers_the_pair_total(seed):
    demos = [random_table_demo(seed * 10 + k, max_steps=4) for k in range(4)]
    model = train_icm(demos, TrainConfig(icm_rounds=1, seed=seed), CFG)
    fz = Featurizer(CFG, model.index)
    pairs, batch = _alignment_batch(demos, fz)
    new = realign(demos, pairs, batch, model.theta.weights)
    sc = Scorer(model.theta, CFG, fz)
    for d, a in zip(demos, new):
        P = sc.pair_matrix(d.instructions, d.path.graphs)
        old = diagonal_alignment(len(d.instructions), len(d.path))
        m = np.arange(len(a))
        assert P[m, list(a)].sum() >= P[m, list(old)].sum() - 1e-9


def test_skip_contrast_only_polishes_after_icm():
    demos = [random_table_demo(s, max_steps=4) for s in range(6)]
    base = train_icm(demos, TrainConfig(icm_rounds=2, stop_contrast=True), CFG)
    skip = train_icm(demos, TrainConfig(icm_rounds=2, stop_contrast=True, skip_contrast=True), CFG)
    # the loop itself is untouched, so alignments and per-round values agree
    assert skip.diagnostics["alignments"] == base.diagnostics["alignments"]
    assert skip.diagnostics["objective_end"] == base.diagnostics["objective_end"]
    start, end = skip.diagnostics["skip_objective"]
    assert end >= start
    assert "skip_objective" not in base.diagnostics


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(K=0)
    with pytest.raises(ValidationError):
        TrainConfig(grad_tol=0)
    with pytest.raises(ValidationError):
        TrainConfig(align_init="random")
    cfg = TrainConfig(K=3, skip_contrast=True)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
