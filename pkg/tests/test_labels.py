import itertools
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from consnet.labels import (NodeId, SplitError, ZeroShotSplit, build_label_space, filter_training_corpus,
                            held_out_categories, make_zero_shot_split, tokenize_label, uc_feasible)


def grid_space(n_a, n_o):
    acts = [f"a{i}" for i in range(n_a)]
    objs = [f"o{i}" for i in range(n_o)]
    return build_label_space(acts, objs, itertools.product(acts, objs))


@dataclass
class Sample:
    hoi_ids: tuple


def test_hico_sized_space_node_count():
    acts = [f"a{i}" for i in range(117)]
    objs = [f"o{i}" for i in range(80)]
    pairs = list(itertools.islice(itertools.product(acts, objs), 600))
    space = build_label_space(acts, objs, pairs)
    assert space.C == 600 and space.num_nodes == 798


def test_minimal_space():
    assert build_label_space(["ride"], ["horse"], [("ride", "horse")]).num_nodes == 4


def test_three_by_three_five_pairs():
    space = build_label_space("abc", "xyz", [("a", "x"), ("a", "y"), ("b", "y"), ("c", "z"), ("c", "x")])
    assert space.num_nodes == 1 + 3 + 3 + 5


def test_node_index_is_a_bijection():
    space = build_label_space("abc", "xyz", [("a", "x"), ("b", "y"), ("c", "z"), ("a", "z")])
    idx = [space.node_index(n) for n in space.nodes()]
    assert idx == list(range(space.num_nodes))


def test_label_normalization():
    assert tokenize_label("Sit_on") == ["sit", "on"]
    space = build_label_space(["Sit On"], ["Chair"], [("sit_on", "chair")])
    assert space.actions == ("sit_on",) and space.hoi_index("sit_on", "chair") == 0


@pytest.mark.parametrize("actions,objects,pairs", [
    (["a", "a"], ["x"], [("a", "x")]),
    (["a"], ["x"], [("a", "x"), ("a", "x")]),
    (["a"], ["x"], [("b", "x")]),
    ([], ["x"], []),
])
def test_invalid_spaces_rejected(actions, objects, pairs):
    with pytest.raises(ValueError):
        build_label_space(actions, objects, pairs)


def test_bad_node_kind():
    with pytest.raises(ValueError):
        NodeId("verb", 0)


def test_ua_holds_out_every_hoi_of_the_chosen_actions():
    space = grid_space(117, 3)
    split = make_zero_shot_split(space, "UA", 22, seed=3)
    held_a, _ = held_out_categories(space, split)
    assert len(held_a) == 22
    expected = {i for i, (a, _) in enumerate(space.hois) if a in held_a}
    assert split.unseen_hoi_ids == expected


def test_uc_k0_is_empty():
    assert make_zero_shot_split(grid_space(3, 3), "UC", 0, seed=0).unseen_hoi_ids == frozenset()


def test_uc_toy_split_keeps_every_category_seen():
    space = grid_space(8, 10)
    split = make_zero_shot_split(space, "UC", 8, seed=1)
    assert len(split.unseen_hoi_ids) == 8
    seen = [space.hois[i] for i in range(space.C) if i not in split.unseen_hoi_ids]
    assert {a for a, _ in seen} == set(range(8))
    assert {o for _, o in seen} == set(range(10))


def test_infeasible_splits():
    with pytest.raises(SplitError):
        make_zero_shot_split(grid_space(2, 2), "UC", 3, seed=0)
    # each action has exactly one object, so any UC hold-out orphans a category
    one_each = build_label_space("ab", "xy", [("a", "x"), ("b", "y")])
    with pytest.raises(SplitError):
        make_zero_shot_split(one_each, "UC", 1, seed=0, max_tries=50)
    with pytest.raises(SplitError):
        make_zero_shot_split(grid_space(2, 2), "UA", 2, seed=0)


@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 1000), st.sampled_from(["UC", "UO", "UA"]))
def test_split_is_deterministic_and_in_range(n_a, n_o, seed, scenario):
    space = grid_space(n_a, n_o)
    k = 1
    a = make_zero_shot_split(space, scenario, k, seed)
    assert a == make_zero_shot_split(space, scenario, k, seed)
    assert all(0 <= i < space.C for i in a.unseen_hoi_ids)
    if scenario == "UC":
        assert uc_feasible(space, a.unseen_hoi_ids)
    assert ZeroShotSplit.from_json(a.to_json()) == a


def test_filter_empty_split_is_identity():
    corpus = [Sample((0,)), Sample(())]
    assert filter_training_corpus(corpus, ZeroShotSplit("UC")) == corpus


def test_filter_all_unseen_keeps_only_negatives():
    corpus = [Sample((0,)), Sample(()), Sample((1, 2)), Sample(())]
    out = filter_training_corpus(corpus, ZeroShotSplit("UC", frozenset({0, 1, 2})))
    assert out == [Sample(()), Sample(())]


def test_filter_matches_set_scan():
    rng = np.random.default_rng(0)
    C = 20
    corpus = [Sample(tuple(rng.choice(C, size=rng.integers(0, 3), replace=False))) for _ in range(100)]
    unseen = frozenset(int(i) for i in rng.choice(C, size=4, replace=False))
    out = filter_training_corpus(corpus, ZeroShotSplit("UC", unseen))
    expected = sum(1 for s in corpus if not any(i in unseen for i in s.hoi_ids))
    assert len(out) == expected
    assert all(not set(s.hoi_ids) & unseen for s in out)


def test_label_space_round_trip(tmp_path):
    space = grid_space(3, 2)
    space.save(tmp_path / "ls.json")
    assert type(space).load(tmp_path / "ls.json") == space
