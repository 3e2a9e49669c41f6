import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxreward import NULL_TOKEN
from ctxreward.memory import (
    EPSILON_METERS,
    ContextMemory,
    InteractionCounter,
    InteractionEvent,
    activity_reward,
    coverage_reward,
    load_event_log,
    save_event_log,
    total_reward,
)
from ctxreward.priors import CompatibilityTable
from ctxreward.vocab import Vocabulary

from oracles import NaiveMemory


@pytest.fixture
def faucet_table():
    vocab = Vocabulary.build(["cup", "bottle"], ["faucet", "sink"])
    n = len(vocab)
    s = np.zeros((n, n))
    s[vocab.index("cup"), vocab.index("faucet")] = 0.4
    s[vocab.index("bottle"), vocab.index("faucet")] = 0.2
    s[vocab.index("cup"), vocab.index("sink")] = 0.6
    return CompatibilityTable(vocab, s)


# ---------------------------------------------------------------------------
# memory mechanics


def test_put_registers_within_radius():
    m = ContextMemory()
    world = {
        "sink#0": ("sink", (0.0, 0.0)),
        "faucet#0": ("faucet", (0.25, 0.0)),
        "stove#0": ("stove", (2.0, 2.0)),
    }
    m.record_put("cup#0", "cup", (0.0, 0.0), world)
    assert "cup#0" in m.stored("sink")
    assert "cup#0" in m.stored("faucet")
    assert m.stored("stove") == {}


def test_radius_is_strict():
    m = ContextMemory()
    world = {"a#0": ("a", (EPSILON_METERS, 0.0)), "b#0": ("b", (EPSILON_METERS - 1e-9, 0.0))}
    m.record_put("cup#0", "cup", (0.0, 0.0), world)
    assert m.stored("a") == {}
    assert "cup#0" in m.stored("b")


def test_take_of_never_placed_is_noop():
    m = ContextMemory()
    m.record_put("cup#0", "cup", (0.0, 0.0), {"sink#0": ("sink", (0.1, 0.0))})
    m.record_take("plate#0", "plate")
    assert "cup#0" in m.stored("sink")


def test_take_removes_everywhere_and_clears_own_class():
    m = ContextMemory()
    world = {"sink#0": ("sink", (0.0, 0.0)), "faucet#0": ("faucet", (0.25, 0.0))}
    m.record_put("cup#0", "cup", (0.0, 0.0), world)
    m.record_put("bottle#0", "bottle", (0.1, 0.0), {**world, "cup#0": ("cup", (0.0, 0.0))})
    assert "bottle#0" in m.stored("cup")
    m.record_take("cup#0", "cup")
    assert all("cup#0" not in m.stored(c) for c in ("sink", "faucet"))
    assert m.stored("cup") == {}  # own class memory cleared
    assert "bottle#0" in m.stored("sink")  # unrelated registrations survive


def test_apply_ignores_failures_and_non_put_take():
    m = ContextMemory()
    world = {"sink#0": ("sink", (0.0, 0.0))}
    fail = InteractionEvent("put", "put", None, "cup", "cup#0", (0.0, 0.0), False)
    m.apply(fail, world)
    assert m.stored("sink") == {}
    nav = InteractionEvent("navigate", "move_forward", None, None, None, None, True)
    m.apply(nav, world)
    ok = InteractionEvent("put", "put", "cup", "cup", "cup#0", (0.0, 0.0), True)
    m.apply(ok, world)
    assert "cup#0" in m.stored("sink")


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_random_put_take_matches_naive_replay(seed):
    """Library memory equals a list-scan replay over random put/take streams."""
    rng = random.Random(seed)
    classes = ["cup", "bottle", "plate", "sink", "faucet"]
    fixed = {f"{c}#f": (c, (rng.uniform(0, 2), rng.uniform(0, 2))) for c in classes}
    m, naive = ContextMemory(), NaiveMemory()
    placed: dict[str, tuple[str, tuple[float, float]]] = {}
    ids = [f"{c}#{k}" for c in ("cup", "bottle", "plate") for k in range(3)]
    for _ in range(200):
        iid = rng.choice(ids)
        cls = iid.split("#")[0]
        if iid in placed and rng.random() < 0.5:
            del placed[iid]
            m.record_take(iid, cls)
            naive.take(iid, cls)
        else:
            pos = (rng.uniform(0, 2), rng.uniform(0, 2))
            world = dict(fixed)
            world.update(placed)
            placed[iid] = (cls, pos)
            m.record_put(iid, cls, pos, world)
            naive.put(iid, cls, pos, world)
        for host in classes:
            assert m.stored(host) == naive.stored(host)


# ---------------------------------------------------------------------------
# reward


def test_worked_faucet_example(faucet_table):
    m = ContextMemory()
    m.entries["faucet"] = {
        "cup#0": ("cup", (0.0, 0.0)),
        "bottle#0": ("bottle", (0.1, 0.0)),
    }
    r = activity_reward(m, "toggle_on", "faucet", None, InteractionCounter(), faucet_table)
    # (0.4 + 0.2) / 0.4, null contributes zero
    assert r == pytest.approx(1.5)


def test_lone_argmax_entry_pays_exactly_one(faucet_table):
    m = ContextMemory()
    m.entries["sink"] = {"cup#0": ("cup", (0.0, 0.0))}
    r = activity_reward(m, "put", "sink", None, InteractionCounter(), faucet_table)
    assert r == 1.0


def test_held_object_contributes(faucet_table):
    m = ContextMemory()
    r = activity_reward(m, "toggle_on", "faucet", "bottle", InteractionCounter(), faucet_table)
    assert r == pytest.approx(0.2 / 0.4)


def test_navigation_and_repeats_zero(faucet_table):
    m = ContextMemory()
    m.entries["faucet"] = {"cup#0": ("cup", (0.0, 0.0))}
    c = InteractionCounter()
    assert activity_reward(m, "move_forward", None, None, c, faucet_table) == 0.0
    assert activity_reward(m, "toggle_on", "faucet", None, c, faucet_table) == 1.0
    assert activity_reward(m, "toggle_on", "faucet", None, c, faucet_table) == 0.0
    # a different verb on the same class is a fresh pair
    assert activity_reward(m, "toggle_off", "faucet", None, c, faucet_table) == 1.0


def test_counter_bumped_even_when_reward_zero(faucet_table):
    c = InteractionCounter()
    m = ContextMemory()
    # stove-less table: column max 0 for a class with no prior mass
    r = activity_reward(m, "put", "cup", None, c, faucet_table)
    assert r == 0.0
    assert c.count("put", "cup") == 1


def test_counter_reset():
    c = InteractionCounter()
    c.increment("put", "sink")
    c.reset()
    assert c.count("put", "sink") == 0


def test_total_reward_combines():
    assert total_reward(10.0, 1.5, 1.0) == 11.5
    assert total_reward(-0.01, 2.0, 0.0) == -0.01
    with pytest.raises(ValueError):
        total_reward(0.0, 1.0, -0.5)


def test_coverage_reward_first_sight_only():
    r, visited = coverage_reward({"sink", "cup"}, set())
    assert r == 2.0
    r, visited = coverage_reward({"sink"}, visited)
    assert r == 0.0
    r, visited = coverage_reward({"stove"}, visited)
    assert r == 1.0 and visited == {"sink", "cup", "stove"}


# ---------------------------------------------------------------------------
# event log round trip


def test_event_log_round_trip(tmp_path):
    events = [
        InteractionEvent("put", "put", "cup", "cup", "cup#0", (0.5, 0.25), True),
        InteractionEvent("navigate", "move_forward", None, None, None, None, False),
    ]
    path = tmp_path / "events.jsonl"
    save_event_log(events, path)
    assert load_event_log(path) == events
