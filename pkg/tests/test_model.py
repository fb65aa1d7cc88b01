import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maastar.model import (
    DecPomdp,
    ModelError,
    builtin,
    channel,
    parse_model,
    serialize,
    validate,
)

from helpers import random_model

TRIVIAL = """
agents: 1
states: only
start: 1
actions 0: noop
observations 0: seen
T: only : noop : only : 1
O: only : noop : seen : 1
"""


def test_trivial_document():
    m = parse_model(TRIVIAL)
    assert m.n_states == 1
    assert m.n_agents == 1
    assert np.all(m.reward == 0.0)
    assert validate(m) == []


def test_tiger_dimensions():
    m = builtin("tiger-a")
    assert m.n_states == 2
    assert m.action_counts == (3, 3)
    assert m.observation_counts == (2, 2)


def test_shipped_tiger_document_round_trips():
    m = parse_model(serialize(builtin("tiger-a")))
    assert m.n_states == 2 and m.action_counts == (3, 3) and m.observation_counts == (2, 2)
    assert m.same_tables(builtin("tiger-a"))


def test_channel_dimensions():
    m = builtin("channel")
    assert m.n_states == 4
    assert m.action_counts == (2, 2)
    assert m.observation_counts == (2, 2)


def test_row_sum_error_names_row():
    text = TRIVIAL.replace("T: only : noop : only : 1", "T: only : noop : only : 0.9")
    with pytest.raises(ModelError) as err:
        parse_model(text)
    assert "transition row [only : (noop)]" in str(err.value)
    assert "0.9" in str(err.value)
    assert err.value.line == 7


@pytest.mark.parametrize("name", ["tiger-a", "tiger-b", "channel"])
def test_builtins_validate_and_are_deterministic(name):
    assert validate(builtin(name)) == []
    assert builtin(name).same_tables(builtin(name))


def test_noisy_channel_variant_validates():
    assert validate(channel(collision_accuracy=0.9)) == []


def test_tiger_b_differs_only_on_joint_tiger_door():
    a, b = builtin("tiger-a"), builtin("tiger-b")
    assert np.array_equal(a.transition, b.transition)
    assert np.array_equal(a.observation_fn, b.observation_fn)
    diff = np.argwhere(a.reward != b.reward)
    # (tiger-left, open-left open-left) and (tiger-right, open-right open-right)
    assert sorted(map(tuple, diff)) == [(0, a.joint_action((1, 1))), (1, a.joint_action((2, 2)))]
    assert np.all(b.reward[tuple(diff.T)] == 0.0)
    assert np.all(a.reward[tuple(diff.T)] == -50.0)


def test_tiger_b_single_step_expected_reward():
    # both open the same door under the uniform start: 0.5 * 20 + 0.5 * 0
    b = builtin("tiger-b")
    expected = b.start @ b.reward
    assert expected[b.joint_action((1, 1))] == pytest.approx(10.0)
    assert expected.max() == pytest.approx(10.0)


def test_tiger_start_is_uniform():
    assert tuple(builtin("tiger-a").start) == (0.5, 0.5)


def test_validate_negative_probability():
    m = builtin("channel")
    T = m.transition.copy()
    T[0, 0, 0] = -0.25
    T[0, 0, 1] += 0.25
    bad = DecPomdp(m.states, m.actions, m.observations, T, m.observation_fn, m.reward, m.start)
    problems = validate(bad)
    assert any("full-full" in p and "-0.25" in p and "not a probability" in p for p in problems)


def test_validate_reports_all_violations():
    m = builtin("tiger-a")
    bad = m.with_start([0.6, 0.6])
    R = m.reward.copy()
    R[0, 0] = np.inf
    bad = DecPomdp(m.states, m.actions, m.observations, m.transition, m.observation_fn, R, [0.6, 0.6])
    problems = validate(bad)
    assert any("start distribution sums to" in p for p in problems)
    assert any("not finite" in p for p in problems)


def test_wildcards_and_overrides():
    text = """
    agents: 2
    states: x y
    start: 0.25 0.75
    actions 0: a b
    actions 1: c
    observations 0: u
    observations 1: v w
    T: * : * * : x : 1
    T: y : b c : x : 0     # specific entry overrides the wildcard
    T: y : b c : y : 1
    O: * : * * : u v : 0.5
    O: * : * * : u w : 0.5
    R: * : a * : 3
    R: x : a c : -1
    """
    m = parse_model(text)
    assert m.transition[1, m.joint_action((1, 0)), 1] == 1.0
    assert m.transition[0, m.joint_action((1, 0)), 0] == 1.0
    assert m.reward[0, 0] == -1.0
    assert m.reward[1, 0] == 3.0
    assert m.reward[0, m.joint_action((1, 0))] == 0.0


def test_duplicate_specific_entry():
    text = TRIVIAL + "R: only : noop : 1\nR: only : noop : 2\n"
    with pytest.raises(ModelError, match="duplicate R entry"):
        parse_model(text)


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("T: nowhere : noop : only : 1", "unknown state"),
        ("R: only : jump : 1", "unknown action"),
        ("O: only : noop : blind : 1", "unknown observation"),
        ("R: only : noop : lots", "expected a number"),
        ("Q: only", "unknown keyword"),
        ("R: only : noop", "needs 3"),
    ],
)
def test_entry_errors_carry_location(line, fragment):
    with pytest.raises(ModelError, match=fragment) as err:
        parse_model(TRIVIAL + line + "\n")
    assert err.value.line == 9
    assert err.value.column is not None


def test_scientific_notation():
    m = parse_model(TRIVIAL + "R: only : noop : -2.5e-3\n")
    assert m.reward[0, 0] == -0.0025


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_serialize_round_trip(seed):
    m = random_model(seed)
    again = parse_model(serialize(m))
    assert again.same_tables(m)
