import itertools

import pytest
from hypothesis import given, settings, strategies as st

from maastar.model import builtin
from maastar.policy import (
    ExpansionCursor,
    PolicyTree,
    PolicyVector,
    action_at,
    all_trees,
    decode_child,
    dump_policy,
    encode_child,
    expand_child,
    history_from_rank,
    history_rank,
    level_offset,
    load_policy,
    num_children,
    root_vectors,
    vector_to_dot,
)

from helpers import random_model


def test_level_offset():
    assert [level_offset(2, l) for l in range(5)] == [0, 1, 3, 7, 15]
    assert [level_offset(1, l) for l in range(4)] == [0, 1, 2, 3]
    assert level_offset(3, 3) == 13


@given(st.integers(1, 4), st.integers(0, 5), st.data())
def test_history_rank_round_trip(m, length, data):
    hist = tuple(data.draw(st.lists(st.integers(0, m - 1), min_size=length, max_size=length)))
    assert history_from_rank(history_rank(hist, m), length, m) == hist


def test_tree_node_count_enforced():
    with pytest.raises(ValueError):
        PolicyTree(0, 2, 2, (0, 1))


def test_action_at_follows_histories():
    # depth 3, binary observations: root, then level 1 (0,1), then level 2 (00,01,10,11)
    t = PolicyTree(0, 2, 3, (0, 1, 2, 3, 4, 5, 6))
    assert action_at(t, ()) == 0
    assert action_at(t, (1,)) == 2
    assert action_at(t, (1, 0)) == 5
    with pytest.raises(ValueError):
        action_at(t, (0, 0, 0))


def test_subtree():
    t = PolicyTree(0, 2, 3, (0, 1, 2, 3, 4, 5, 6))
    assert t.subtree((1,)).actions == (2, 5, 6)
    assert t.subtree(()).actions == t.actions
    assert t.prefix(2).actions == (0, 1, 2)


def test_root_vectors_cover_joint_actions():
    m = builtin("tiger-a")
    roots = root_vectors(m)
    assert len(roots) == 9
    assert len(set(roots)) == 9
    assert all(r.depth == 1 for r in roots)


@pytest.mark.parametrize(
    "name, depth, expected",
    [("tiger-a", 1, 3**2 * 3**2), ("tiger-a", 2, 3**4 * 3**4), ("channel", 3, 2**8 * 2**8)],
)
def test_num_children(name, depth, expected):
    assert num_children(builtin(name), depth) == expected


def test_num_children_overflow():
    with pytest.raises(OverflowError):
        num_children(builtin("tiger-a"), 6)


@pytest.mark.parametrize("seed", range(8))
def test_expansion_is_complete_and_duplicate_free(seed):
    model = random_model(seed)
    for parent in root_vectors(model):
        cursor = ExpansionCursor.for_parent(model, parent)
        seen = []
        while (child := expand_child(model, parent, cursor)) is not None:
            seen.append(child)
        assert len(seen) == num_children(model, 1) == len(set(seen))
        assert all(c.prefix(1) == parent for c in seen)
        assert expand_child(model, parent, cursor) is None


def test_expansion_order_last_leaf_of_last_agent_varies_fastest():
    model = builtin("channel")
    parent = root_vectors(model)[0]
    cursor = ExpansionCursor.for_parent(model, parent)
    first = expand_child(model, parent, cursor)
    second = expand_child(model, parent, cursor)
    assert first.trees[0].actions[1:] == (0, 0)
    assert first.trees[1].actions[1:] == (0, 0)
    assert second.trees[1].actions[1:] == (0, 1)
    assert second.trees[0].actions == first.trees[0].actions


@settings(max_examples=60)
@given(st.integers(0, 2**16 - 1))
def test_decode_encode(index):
    model = builtin("channel")
    leaves = decode_child(model, 3, index)
    assert [len(l) for l in leaves] == [8, 8]
    assert encode_child(model, leaves) == index


def test_decode_out_of_range():
    with pytest.raises(ValueError):
        decode_child(builtin("channel"), 1, num_children(builtin("channel"), 1))


def test_all_trees_counts():
    assert len(list(all_trees(3, 2, 2))) == 27
    assert len(set(all_trees(2, 2, 3))) == 2**7


def test_policy_json_round_trip():
    model = builtin("tiger-a")
    vec = PolicyVector.from_actions(model, [(0, 0, 1), (0, 2, 0)])
    text = dump_policy(vec, model, value=-4.0)
    saved = load_policy(text)
    assert saved.vector == vec
    assert saved.meta == {"value": -4.0}
    assert saved.action_names == [list(a) for a in model.actions]


def test_dot_export_structure():
    model = builtin("tiger-a")
    vec = PolicyVector.from_actions(model, [(0, 0, 1), (0, 2, 0)])
    dots = vector_to_dot(vec, model.actions, model.observations)
    assert len(dots) == 2
    d = dots[0]
    assert d.startswith("digraph agent0 {")
    assert d.count(" -> ") == 2
    assert "{ rank=same; n1 n2 }" in d
    for o in model.observations[0]:
        assert f'label="{o}"' in d


def test_vectors_are_hashable_values():
    model = builtin("channel")
    a = PolicyVector.constant(model, 2, (0, 1))
    b = PolicyVector.from_actions(model, [(0, 0, 0), (1, 1, 1)])
    assert a == b and hash(a) == hash(b)
    assert len({a, b}) == 1


def test_all_trees_matches_product():
    expected = set(itertools.product(range(2), repeat=3))
    assert set(all_trees(2, 2, 2)) == expected
