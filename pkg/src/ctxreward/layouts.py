"""Built-in desk-scale kitchen scenes."""

from __future__ import annotations

from .world import ClassSpec, Layout

_CLASS_TABLE = {
    # movables
    "mug": {"movable", "cleanable"},
    "plate": {"movable", "cleanable"},
    "cup": {"movable"},
    "bowl": {"movable", "receptacle"},
    "fork": {"movable", "storable"},
    "spoon": {"movable", "storable"},
    "knife": {"movable", "storable"},
    "pot": {"movable", "receptacle", "heatable"},
    "pan": {"movable", "receptacle"},
    "kettle": {"movable", "heatable"},
    "tomato": {"movable", "coolable", "sliceable", "cookable"},
    "apple": {"movable", "coolable", "sliceable"},
    "bread": {"movable", "sliceable", "trashable"},
    "potato": {"movable", "sliceable", "cookable", "trashable"},
    # clutter: household odds and ends that belong to no routine
    "sponge": {"movable"},
    "towel": {"movable"},
    "jar": {"movable"},
    "can": {"movable"},
    "spatula": {"movable"},
    "ladle": {"movable"},
    "whisk": {"movable"},
    "peeler": {"movable"},
    # fixtures
    "sink_basin": {"receptacle"},
    "faucet": {"toggleable"},
    "stove_burner": {"receptacle"},
    "stove_knob": {"toggleable"},
    "fridge": {"receptacle", "openable"},
    "drawer": {"receptacle", "openable"},
    "garbage_can": {"receptacle"},
    "counter": {"receptacle"},
}

# Fixture arrangements per scene. Controls sit a few cells from the appliance
# they govern (wall-mounted tap lever, stove control panel), so finishing a
# chore takes a short walk between its fixtures.
_SCENES = {
    "kitchen_a": {
        "sink_basin": (2, 0),
        "faucet": (0, 2),
        "stove_burner": (8, 0),
        "stove_knob": (11, 1),
        "fridge": (0, 5),
        "drawer": (0, 8),
        "garbage_can": (11, 10),
        "counter": (6, 11),
    },
    "kitchen_b": {
        "sink_basin": (11, 3),
        "faucet": (11, 7),
        "stove_burner": (0, 3),
        "stove_knob": (0, 7),
        "fridge": (5, 0),
        "drawer": (11, 9),
        "garbage_can": (0, 11),
        "counter": (5, 11),
    },
    "kitchen_c": {
        "sink_basin": (6, 11),
        "faucet": (2, 11),
        "stove_burner": (0, 6),
        "stove_knob": (0, 2),
        "fridge": (11, 0),
        "drawer": (2, 0),
        "garbage_can": (11, 6),
        "counter": (0, 0),
    },
    "kitchen_d": {
        "sink_basin": (0, 4),
        "faucet": (0, 0),
        "stove_burner": (6, 0),
        "stove_knob": (10, 0),
        "fridge": (11, 5),
        "drawer": (11, 9),
        "garbage_can": (4, 11),
        "counter": (9, 11),
    },
    "kitchen_e": {
        "sink_basin": (9, 11),
        "faucet": (5, 11),
        "stove_burner": (11, 4),
        "stove_knob": (11, 0),
        "fridge": (0, 0),
        "drawer": (0, 10),
        "garbage_can": (6, 0),
        "counter": (11, 11),
    },
}

TRAIN_SCENES = ("kitchen_a", "kitchen_b", "kitchen_c")
TEST_SCENES = ("kitchen_d", "kitchen_e")


def default_classes() -> tuple[ClassSpec, ...]:
    return tuple(
        ClassSpec(name, "movable" in aff, frozenset(aff)) for name, aff in _CLASS_TABLE.items()
    )


def make_layout(name: str, size: int = 12) -> Layout:
    scale = (size - 1) / 11  # scene coordinates are authored on a 12-cell grid
    fixtures = tuple(
        (cls, (round(x * scale), round(y * scale))) for cls, (x, y) in _SCENES[name].items()
    )
    movables = tuple((cls, 1) for cls, aff in _CLASS_TABLE.items() if "movable" in aff)
    return Layout(
        name=name,
        width=size,
        height=size,
        classes=default_classes(),
        fixtures=fixtures,
        spawn_pool=movables,
    )


def default_layouts() -> dict[str, Layout]:
    return {name: make_layout(name) for name in _SCENES}


def train_layouts() -> list[Layout]:
    return [make_layout(n) for n in TRAIN_SCENES]


def test_layouts() -> list[Layout]:
    return [make_layout(n) for n in TEST_SCENES]
