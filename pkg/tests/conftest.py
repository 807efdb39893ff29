import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from groundalign.core import (
    ROOT,
    DependencyTree,
    Edge,
    FeatureIndex,
    GroundingGraph,
    Label,
    LabelSet,
    ParamVector,
    Demonstration,
    InstructionSequence,
)
from groundalign.env import TableEnv, TableInstance
from groundalign.features import FeatureTemplateConfig, join_features
from groundalign.structalign import EDGE_PREFIX

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WORDS = ("red", "blue", "go", "left", "hill")
COLORS = ("red", "blue", "green")
RELS = ("to", "of", "self")
DEPS = ("obj", "mod")


# --- random small instances (numpy rng) --------------------------------------------

def random_tree(rng, max_tokens=4) -> DependencyTree:
    n = int(rng.integers(1, max_tokens + 1))
    order = rng.permutation(n)
    heads = [ROOT] * n
    for pos in range(1, n):
        heads[order[pos]] = int(order[rng.integers(pos)])
    toks = tuple(LabelSet([Label.sym("word", WORDS[int(rng.integers(len(WORDS)))]),
                           Label.string("form", WORDS[int(rng.integers(len(WORDS)))])])
                 for _ in range(n))
    deps = tuple(LabelSet() if h == ROOT else LabelSet.of(dep=DEPS[int(rng.integers(len(DEPS)))])
                 for h in heads)
    return DependencyTree(toks, tuple(heads), deps)


def random_graph(rng, max_vertices=4, max_out=3) -> GroundingGraph:
    V = int(rng.integers(1, max_vertices + 1))
    verts = tuple(LabelSet([Label.sym("color", COLORS[int(rng.integers(len(COLORS)))]),
                            Label.string("name", WORDS[int(rng.integers(len(WORDS)))])])
                  for _ in range(V))
    edges = []
    for j in range(V):
        for _ in range(int(rng.integers(0, max_out + 1))):
            edges.append(Edge(j, int(rng.integers(V)), LabelSet.of(rel=RELS[int(rng.integers(len(RELS)))])))
    return GroundingGraph(verts, tuple(edges), int(rng.integers(V)))


def index_for(pairs, cfg) -> FeatureIndex:
    idx = FeatureIndex()
    for x, g in pairs:
        for tok in x.tokens:
            for v in g.vertices:
                join_features(tok, v, cfg, idx)
        for k, dep in enumerate(x.dep_labels):
            if x.heads[k] != ROOT:
                for e in g.edges:
                    join_features(dep, e.labels, cfg, idx, EDGE_PREFIX)
    return idx.freeze()


def random_pair_instance(seed, max_tokens=4, max_vertices=4):
    rng = np.random.default_rng(seed)
    x = random_tree(rng, max_tokens)
    g = random_graph(rng, max_vertices)
    cfg = FeatureTemplateConfig()
    idx = index_for([(x, g)], cfg)
    theta = ParamVector(idx, rng.uniform(-1, 1, size=len(idx)))
    return x, g, theta, cfg


def random_table(rng, n_states=5, max_out=3, goals=()) -> TableInstance:
    """Random transition table; every state has at least one way out."""
    trans = []
    for s in range(n_states):
        for k in range(int(rng.integers(1, max_out + 1))):
            act = LabelSet([Label.sym("id", f"{s}.{k}"),
                            Label.sym("color", COLORS[int(rng.integers(len(COLORS)))]),
                            Label.string("name", WORDS[int(rng.integers(len(WORDS)))])])
            trans.append((s, act, int(rng.integers(n_states))))
    labels = {s: LabelSet.of(shade=COLORS[int(rng.integers(len(COLORS)))]) for s in range(n_states)}
    return TableInstance(0, trans, labels, goals)


def random_table_demo(seed, max_steps=3, max_sentences=3, max_tokens=3) -> Demonstration:
    rng = np.random.default_rng(seed)
    inst = random_table(rng)
    env = TableEnv(inst)
    state, acts = inst.start, []
    for _ in range(int(rng.integers(1, max_steps + 1))):
        succ = env.successors(state)
        a, state = succ[int(rng.integers(len(succ)))]
        acts.append(a)
    path = env.replay(inst.start, acts)
    x = InstructionSequence(tuple(random_tree(rng, max_tokens)
                                  for _ in range(int(rng.integers(1, max_sentences + 1)))))
    return Demonstration(x, path, "table", inst, inst.start, id=f"table-{seed}")


# --- hypothesis strategies -------------------------------------------------------------

labels = st.one_of(
    st.builds(Label.sym, st.sampled_from(["word", "color", "side"]), st.sampled_from(COLORS + WORDS)),
    st.builds(Label.string, st.sampled_from(["name", "form"]), st.text("abc", max_size=5)),
    st.builds(Label.real, st.sampled_from(["x", "y"]),
              st.floats(-10, 10, allow_nan=False, allow_infinity=False)),
)


@st.composite
def label_sets(draw, max_size=4):
    out, seen = [], set()
    for lab in draw(st.lists(labels, max_size=max_size)):
        if (lab.key, lab.value) not in seen:
            seen.add((lab.key, lab.value))
            out.append(lab)
    return LabelSet(out)


@st.composite
def trees(draw, max_tokens=5):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_tree(np.random.default_rng(seed), max_tokens)


@st.composite
def graphs(draw, max_vertices=5):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_graph(np.random.default_rng(seed), max_vertices)


# --- acceptance reporting -----------------------------------------------------------------

@pytest.fixture
def record_criterion(request):
    lines = request.config.stash.setdefault(_ACCEPT, {})

    def record(n: int, ok: bool, detail: str):
        lines[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return record


_ACCEPT = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPT, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
