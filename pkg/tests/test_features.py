import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import label_sets
from oracles import edit_distance_scripts
from groundalign.core import FeatureIndex, Label, LabelSet, ParamVector
from groundalign.errors import CoordinateOutOfRange, FrozenIndexMiss, ValidationError
from groundalign.features import (
    FeatureTemplateConfig,
    edit_similarity,
    join_features,
    levenshtein,
    sparse_add,
    sparse_dot,
)

short = st.text("abcd", max_size=7)


def named(vec, idx):
    return {idx.names[i]: v for i, v in vec.items()}


def test_symbol_conjunction():
    idx = FeatureIndex()
    v = join_features(LabelSet.of(word="top"), LabelSet.of(side="North"),
                      FeatureTemplateConfig(kinds=("conjunction",)), idx)
    assert named(v, idx) == {"word=top∧side=North": 1.0}


def test_bias_only_on_empty_sets():
    idx = FeatureIndex()
    v = join_features(LabelSet(), LabelSet(), FeatureTemplateConfig(kinds=("bias",)), idx)
    assert named(v, idx) == {"bias": 1.0}


def test_identical_strings_hit_top_edit_bucket():
    idx = FeatureIndex()
    v = join_features(LabelSet.of(word="hill"), LabelSet([Label.string("name", "hill")]),
                      FeatureTemplateConfig(kinds=("edit",)), idx)
    assert named(v, idx) == {"word~name>=1": 1.0}


def test_edit_bucket_is_highest_reached():
    idx = FeatureIndex()
    # similarity 1 - 1/4 = 0.75
    v = join_features(LabelSet.of(word="hill"), LabelSet([Label.string("name", "hall")]),
                      FeatureTemplateConfig(kinds=("edit",)), idx)
    assert named(v, idx) == {"word~name>=0.75": 1.0}
    # below the lowest bucket: nothing
    v = join_features(LabelSet.of(word="abcd"), LabelSet([Label.string("name", "wxyz")]),
                      FeatureTemplateConfig(kinds=("edit",)), idx)
    assert v == {}


def test_symbol_real_product():
    idx = FeatureIndex()
    v = join_features(LabelSet.of(word="yellow"), LabelSet([Label.real("r", 0.5)]),
                      FeatureTemplateConfig(kinds=("product",)), idx)
    assert named(v, idx) == {"word=yellow∧r": 0.5}


def test_hidden_labels_never_join():
    idx = FeatureIndex()
    v = join_features(LabelSet.of(word="a"), LabelSet([Label.sym("#id", "7")]),
                      FeatureTemplateConfig(kinds=("conjunction",)), idx)
    assert v == {}


def test_key_filters_restrict_pairs():
    cfg = FeatureTemplateConfig(kinds=("conjunction",),
                                key_filters={"conjunction": [("word", "side")]})
    idx = FeatureIndex()
    v = join_features(LabelSet.of(word="top"), LabelSet.of(side="North", dist="0"), cfg, idx)
    assert named(v, idx) == {"word=top∧side=North": 1.0}


def test_frozen_index_drops_or_fails():
    idx = FeatureIndex().freeze()
    a, b = LabelSet.of(word="x"), LabelSet.of(c="y")
    assert join_features(a, b, FeatureTemplateConfig(), idx) == {}
    with pytest.raises(FrozenIndexMiss):
        join_features(a, b, FeatureTemplateConfig(fail_on_unseen=True), idx)


def test_bucket_boundaries_must_increase():
    with pytest.raises(ValidationError):
        FeatureTemplateConfig(edit_buckets=(0.5, 0.5))
    with pytest.raises(ValidationError):
        FeatureTemplateConfig(kinds=("bias", "nope"))


def test_config_round_trip():
    cfg = FeatureTemplateConfig(kinds=("bias", "edit"), key_filters={"edit": [("word", "*")]})
    assert FeatureTemplateConfig.from_dict(cfg.to_dict()) == cfg


@given(label_sets(), label_sets())
def test_join_is_deterministic(a, b):
    cfg = FeatureTemplateConfig()
    i1, i2 = FeatureIndex(), FeatureIndex()
    v1, v2 = join_features(a, b, cfg, i1), join_features(a, b, cfg, i2)
    assert named(v1, i1) == named(v2, i2)
    assert all(val != 0.0 for val in v1.values())


# --- edit distance ---

@pytest.mark.parametrize("s,t,d", [("", "abc", 3), ("hill", "hill", 0), ("kitten", "sitting", 3)])
def test_levenshtein_examples(s, t, d):
    assert levenshtein(s, t) == d


@given(short, short)
def test_levenshtein_matches_script_enumeration(s, t):
    assert levenshtein(s, t) == edit_distance_scripts(s, t)


@given(short, short)
def test_levenshtein_symmetric_with_zero_diagonal(s, t):
    assert levenshtein(s, t) == levenshtein(t, s)
    assert levenshtein(s, s) == 0


@given(st.text("abc", max_size=8), st.text("abc", max_size=8), st.text("abc", max_size=8))
def test_levenshtein_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


@given(short, short)
def test_edit_similarity_in_unit_interval(s, t):
    assert 0.0 <= edit_similarity(s, t) <= 1.0


# --- sparse dot ---

def test_sparse_dot_examples():
    th = ParamVector(FeatureIndex(["a", "b"]), np.array([1.0, 3.0]))
    assert sparse_dot({}, th) == 0.0
    assert sparse_dot({0: 1.0}, ParamVector(FeatureIndex(["t"]), np.array([1.31]))) == 1.31
    assert sparse_dot({0: 2.0, 1: -1.0}, th) == -1.0


def test_sparse_dot_range_check():
    with pytest.raises(CoordinateOutOfRange):
        sparse_dot({5: 1.0}, np.zeros(3))


sparse = st.dictionaries(st.integers(0, 9), st.floats(-5, 5, allow_nan=False), max_size=6)


@given(sparse, sparse, st.floats(-3, 3, allow_nan=False), st.lists(st.floats(-2, 2), min_size=10, max_size=10))
def test_sparse_dot_linear(u, v, alpha, w):
    w = np.array(w)
    lhs = sparse_dot(sparse_add(v, u, alpha), w)
    rhs = alpha * sparse_dot(u, w) + sparse_dot(v, w)
    assert lhs == pytest.approx(rhs, abs=1e-9)
