import numpy as np
import pytest

from ctxreward.layouts import make_layout
from ctxreward.world import (
    ActionError,
    ClassSpec,
    Layout,
    LayoutError,
    World,
    build_action_space,
    build_world,
    cell_position,
)


@pytest.fixture
def layout():
    return make_layout("kitchen_a")


def simple_world(layout, placements, agent=(5, 5), heading=0):
    return World(layout, placements, agent, heading)


# ---------------------------------------------------------------------------
# layout schema


def test_layout_round_trip(layout):
    loaded = Layout.from_json(layout.to_json())
    assert loaded == layout


def test_layout_version_check(layout):
    text = layout.to_json().replace('"version": 1', '"version": 99')
    with pytest.raises(LayoutError):
        Layout.from_json(text)


def test_layout_rejects_bad_fixture():
    with pytest.raises(LayoutError):
        Layout(
            name="bad",
            width=4,
            height=4,
            classes=(ClassSpec("mug", True, frozenset({"movable"})),),
            fixtures=(("mug", (0, 0)),),  # movable class used as fixture
            spawn_pool=(),
        )


def test_class_spec_movable_consistency():
    with pytest.raises(LayoutError):
        ClassSpec("mug", True, frozenset({"cleanable"}))
    with pytest.raises(LayoutError):
        ClassSpec("mug", False, frozenset({"movable"}))


# ---------------------------------------------------------------------------
# determinism and geometry


def test_build_world_deterministic(layout):
    a, b = build_world(layout, 7), build_world(layout, 7)
    assert a.agent_cell == b.agent_cell and a.agent_heading == b.agent_heading
    assert {i: o.cell for i, o in a.objects.items()} == {i: o.cell for i, o in b.objects.items()}
    c = build_world(layout, 8)
    assert any(a.objects[i].cell != c.objects[i].cell for i in a.objects)


def test_cell_position_centers():
    assert cell_position((0, 0)) == (0.125, 0.125)
    assert cell_position((3, 1)) == (0.875, 0.375)


def test_fixtures_block_movement(layout):
    # sink_basin at (2, 0); approach from (2, 1) facing north
    w = simple_world(layout, [], agent=(2, 1), heading=0)
    _, ok = w.step(w.action_id("move_forward", None))
    assert not ok and w.agent_cell == (2, 1)
    # walking off the edge also fails
    w = simple_world(layout, [], agent=(0, 0), heading=3)
    _, ok = w.step(w.action_id("move_forward", None))
    assert not ok and w.agent_cell == (0, 0)


def test_turns_wrap(layout):
    w = simple_world(layout, [], heading=0)
    w.step(w.action_id("turn_left", None))
    assert w.agent_heading == 3
    w.step(w.action_id("turn_right", None))
    assert w.agent_heading == 0


def test_visibility_half_plane(layout):
    w = simple_world(layout, [("mug", (5, 3))], agent=(5, 5), heading=0)
    mug = w.objects["mug#0"]
    assert w.visible(mug)  # 0.5 m ahead, facing north
    w.agent_heading = 2  # face south: behind the agent now
    assert not w.visible(mug)


def test_visibility_range(layout):
    # 7 cells = 1.75 m > 1.5 m range
    w = simple_world(layout, [("mug", (5, 5 - 7))], agent=(5, 5), heading=0)
    assert not w.visible(w.objects["mug#0"])
    w2 = simple_world(layout, [("mug", (5, 5 - 5))], agent=(5, 5), heading=0)
    assert w2.visible(w2.objects["mug#0"])


def test_invalid_action_raises(layout):
    w = simple_world(layout, [])
    with pytest.raises(ActionError):
        w.step(len(w.action_space))
    with pytest.raises(ActionError):
        w.action_id("take", "faucet")


# ---------------------------------------------------------------------------
# interaction preconditions and effects


def test_take_then_put(layout):
    w = simple_world(layout, [("mug", (5, 4))], agent=(5, 5), heading=0)
    event, ok = w.step(w.action_id("take", "mug"))
    assert ok and event.kind == "take" and w.held == "mug#0"
    assert w.objects["mug#0"].cell is None
    # second take fails: hands full
    _, ok = w.step(w.action_id("take", "mug"))
    assert not ok
    # walk to the counter at (6, 11) and put
    w.agent_cell, w.agent_heading = (6, 10), 2
    event, ok = w.step(w.action_id("put", "counter"))
    assert ok and event.kind == "put"
    mug = w.objects["mug#0"]
    assert mug.cell == (6, 11) and mug.contained_in == "counter#0" and w.held is None


def test_take_requires_visibility(layout):
    w = simple_world(layout, [("mug", (9, 9))], agent=(0, 1), heading=0)
    _, ok = w.step(w.action_id("take", "mug"))
    assert not ok and w.held is None


def test_put_needs_held_and_open_receptacle(layout):
    w = simple_world(layout, [], agent=(1, 5), heading=3)  # facing fridge at (0, 5)
    _, ok = w.step(w.action_id("put", "fridge"))
    assert not ok  # empty-handed
    w2 = simple_world(layout, [("apple", (1, 4))], agent=(1, 5), heading=0)
    w2.step(w2.action_id("take", "apple"))
    w2.agent_heading = 3
    _, ok = w2.step(w2.action_id("put", "fridge"))
    assert not ok  # fridge closed
    _, ok = w2.step(w2.action_id("open", "fridge"))
    assert ok
    _, ok = w2.step(w2.action_id("put", "fridge"))
    assert ok and w2.objects["apple#0"].contained_in == "fridge#0"


def test_open_close_toggle_preconditions(layout):
    w = simple_world(layout, [], agent=(1, 5), heading=3)  # at fridge
    _, ok = w.step(w.action_id("close", "fridge"))
    assert not ok  # already closed
    _, ok = w.step(w.action_id("open", "fridge"))
    assert ok
    _, ok = w.step(w.action_id("open", "fridge"))
    assert not ok  # already open
    w2 = simple_world(layout, [], agent=(1, 2), heading=3)  # beside faucet at (0, 2)
    _, ok = w2.step(w2.action_id("toggle_off", "faucet"))
    assert not ok
    _, ok = w2.step(w2.action_id("toggle_on", "faucet"))
    assert ok and w2.objects["faucet#0"].toggled_on
    _, ok = w2.step(w2.action_id("toggle_on", "faucet"))
    assert not ok


def test_slice_requires_knife(layout):
    w = simple_world(layout, [("tomato", (5, 4)), ("knife", (5, 3))], agent=(5, 5), heading=0)
    _, ok = w.step(w.action_id("slice", "tomato"))
    assert not ok  # empty-handed
    w.step(w.action_id("take", "knife"))
    _, ok = w.step(w.action_id("slice", "tomato"))
    assert ok and w.objects["tomato#0"].sliced
    _, ok = w.step(w.action_id("slice", "tomato"))
    assert not ok  # already sliced


def test_closed_container_hides_contents(layout):
    w = simple_world(layout, [("apple", (1, 4))], agent=(1, 5), heading=0)
    w.step(w.action_id("take", "apple"))
    w.agent_heading = 3
    w.step(w.action_id("open", "fridge"))
    w.step(w.action_id("put", "fridge"))
    assert w.visible(w.objects["apple#0"])
    w.step(w.action_id("close", "fridge"))
    assert not w.visible(w.objects["apple#0"])
    # hidden objects cannot be taken
    _, ok = w.step(w.action_id("take", "apple"))
    assert not ok


def test_cannot_take_container_with_contents(layout):
    w = simple_world(layout, [("pot", (5, 4)), ("tomato", (5, 3))], agent=(5, 5), heading=0)
    w.step(w.action_id("take", "tomato"))
    _, ok = w.step(w.action_id("put", "pot"))
    assert ok
    _, ok = w.step(w.action_id("take", "pot"))
    assert not ok  # pot holds the tomato


def test_object_conservation(layout):
    """Random action storms never create or destroy instances."""
    import random

    w = build_world(layout, seed=42)
    ids = set(w.objects)
    rng = random.Random(0)
    for _ in range(2000):
        w.step(rng.randrange(len(w.action_space)))
    assert set(w.objects) == ids
    held = {w.held} - {None}
    for iid, obj in w.objects.items():
        assert (obj.cell is None) == (iid in held)


def test_event_log_fidelity(layout):
    """Replaying logged events through a fresh memory matches live bookkeeping."""
    import random

    from ctxreward.memory import ContextMemory

    w = build_world(layout, seed=3)
    live, replay_events = ContextMemory(), []
    rng = random.Random(1)
    snapshots = []
    for _ in range(1500):
        event, success = w.step(rng.randrange(len(w.action_space)))
        positions = w.world_positions()
        live.apply(event, positions)
        replay_events.append((event, positions))
        snapshots.append({c: dict(live.stored(c)) for c in w.vocab.names})
    fresh = ContextMemory()
    for i, (event, positions) in enumerate(replay_events):
        fresh.apply(event, positions)
        assert {c: dict(fresh.stored(c)) for c in w.vocab.names} == snapshots[i]


# ---------------------------------------------------------------------------
# observations


def test_observation_shape_and_range(layout):
    w = build_world(layout, seed=5)
    obs = w.observe()
    assert obs.shape == (w.observation_size(),)
    assert np.isfinite(obs).all()
    assert obs.min() >= -1.0 and obs.max() <= 1.0 + 1e-6


def test_window_rotation_forward_is_row_zero(layout):
    """An object straight ahead lands in the top rows of the egocentric window
    regardless of heading."""
    c = len(w_vocab := layout.vocabulary())
    channel = 1 + w_vocab.names.index("mug")
    from ctxreward.world import WINDOW

    for heading, cell in ((0, (5, 3)), (1, (7, 5)), (2, (5, 7)), (3, (3, 5))):
        w = simple_world(layout, [("mug", cell)], agent=(5, 5), heading=heading)
        obs = w.observe()
        ofs = c + 6
        win = obs[ofs : ofs + WINDOW * WINDOW * (c + 1)].reshape(WINDOW, WINDOW, c + 1)
        ys, xs = np.nonzero(win[:, :, channel])
        assert list(zip(ys, xs)) == [(1, 3)]  # 2 cells ahead, centered


def test_observation_held_flag_and_clock(layout):
    w = simple_world(layout, [("mug", (5, 4))], agent=(5, 5), heading=0)
    vocab = layout.vocabulary()
    assert w.observe()[vocab.names.index("mug")] == 0.0
    assert w.observe()[-1] == 0.0
    w.step(w.action_id("take", "mug"))
    obs = w.observe()
    assert obs[vocab.names.index("mug")] == 1.0
    assert obs[-1] == pytest.approx(1 / 256)


def test_action_space_layout(layout):
    actions = build_action_space(layout)
    assert actions[:3] == (("move_forward", None), ("turn_left", None), ("turn_right", None))
    assert ("take", "mug") in actions and ("take", "sink_basin") not in actions
    assert ("toggle_on", "faucet") in actions and ("toggle_on", "mug") not in actions
    assert len(set(actions)) == len(actions)
