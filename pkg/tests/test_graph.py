import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from consnet.embeddings import WordVectorTable, fuse_word_embedding
from consnet.graph import (COMPOSITIONAL, ConsistencyGraph, build_graph, consistency, node_feature_matrix,
                           node_of, top_k_peers)
from consnet.labels import build_label_space


def random_space(rng, n_a=3, n_o=3, C=5):
    acts = [f"a{i}" for i in range(n_a)]
    objs = [f"o{i}" for i in range(n_o)]
    pairs = list(itertools.product(range(n_a), range(n_o)))
    pick = rng.choice(len(pairs), size=C, replace=False)
    return build_label_space(acts, objs, [(acts[pairs[i][0]], objs[pairs[i][1]]) for i in sorted(pick)])


def random_feats(rng, space, d=4):
    return {"action": rng.normal(size=(len(space.actions), d)),
            "object": rng.normal(size=(len(space.objects), d)),
            "interaction": rng.normal(size=(space.C, d))}


def edge_set(graph):
    return {(i, j) for i, j, _ in graph.edges()}


def test_consistency_examples():
    assert consistency([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-15)
    assert consistency([1, 0], [0, 1]) == 0.0
    assert consistency([1, 1, 0], [1, 0, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    with pytest.raises(ValueError):
        consistency([0, 0], [1, 0])


def test_shared_action_links_both_interactions():
    space = build_label_space(["ride"], ["bicycle", "horse"], [("ride", "bicycle"), ("ride", "horse")])
    assert space.num_nodes == 6
    g = build_graph(space, random_feats(np.random.default_rng(0), space), 0, 0, 0)
    ride = node_of(space, "action", 0)
    for t in range(2):
        assert ride in g.neighbors(node_of(space, "interaction", t))


def test_zero_eps_gives_compositional_edges_only(ride_space, rng):
    g = build_graph(ride_space, random_feats(rng, ride_space), 0, 0, 0)
    assert all(tag == COMPOSITIONAL for _, _, tag in g.edges())
    assert len(g.edges()) == 3 * ride_space.C
    assert np.all(np.diag(g.adjacency))


def test_toy_space_matches_oracle(rng):
    space = random_space(rng)
    feats = random_feats(rng, space)
    g = build_graph(space, feats, 1, 1, 1)
    eps = {"action": 1, "object": 1, "interaction": 1}
    assert edge_set(g) == oracles.graph_edges(space.actions, space.objects, space.hois, feats, eps)


@given(st.integers(0, 10_000))
def test_graph_invariants(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng, 4, 4, 7)
    g = build_graph(space, random_feats(rng, space), 2, 2, 3)
    A = g.adjacency
    assert np.array_equal(A, A.T) and np.all(np.diag(A))
    rows = space.class_node_rows()
    for c in range(space.C):
        for key in "hao":
            assert A[rows["t"][c], rows[key][c]]
    # similarity edges stay within one node kind
    for i, j, tag in g.edges():
        if tag != COMPOSITIONAL:
            assert space.nodes()[i].kind == space.nodes()[j].kind


def test_ties_go_to_lower_index():
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 2.0]])
    assert top_k_peers(Z, 1)[0] == [1]
    with pytest.raises(ValueError):
        top_k_peers(Z, 4)


def test_wrong_feature_count_rejected(ride_space, rng):
    feats = random_feats(rng, ride_space)
    feats["object"] = feats["object"][:2]
    with pytest.raises(ValueError):
        build_graph(ride_space, feats, 1, 1, 1)


def test_node_feature_matrix(rng):
    space = build_label_space(["ride"], ["horse"], [("ride", "horse")])
    t = WordVectorTable({w: rng.normal(size=6) for w in ("human", "ride", "horse")})
    Z = node_feature_matrix(space, t)
    assert Z.shape == (4, 6)
    np.testing.assert_allclose(Z[3], fuse_word_embedding(t, ["human", "ride", "horse"]), rtol=1e-14)


def test_graph_round_trip(tmp_path, ride_space, rng):
    g = build_graph(ride_space, random_feats(rng, ride_space), 1, 1, 2)
    g.save(tmp_path / "g.json")
    back = ConsistencyGraph.load(ride_space, tmp_path / "g.json")
    assert np.array_equal(back.adjacency, g.adjacency) and back.edges() == g.edges()
