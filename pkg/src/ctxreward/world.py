"""Deterministic desk-scale kitchen gridworld.

Geometry is a 2D grid of 0.25 m cells with 4-way agent heading. Fixtures
(sink, stove, fridge, ...) occupy cells and block movement; movable objects do
not block. An interaction succeeds when the target class has a visible instance
within 1.5 m in the agent's facing half-plane and the verb's preconditions
hold. All transitions are deterministic.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

import numpy as np

from .memory import InteractionEvent
from .vocab import Vocabulary

CELL_METERS = 0.25
INTERACTION_RANGE = 1.5
WINDOW = 7  # egocentric local window edge, in cells

HEADINGS = ("N", "E", "S", "W")
HEADING_VECS = ((0, -1), (1, 0), (0, 1), (-1, 0))

NAV_VERBS = ("move_forward", "turn_left", "turn_right")
INTERACTION_VERBS = ("take", "put", "open", "close", "toggle_on", "toggle_off", "slice")

AFFORDANCES = frozenset(
    {
        "movable",
        "receptacle",
        "openable",
        "toggleable",
        "sliceable",
        "storable",
        "heatable",
        "coolable",
        "cleanable",
        "cookable",
        "trashable",
    }
)


class LayoutError(ValueError):
    pass


class ActionError(ValueError):
    pass


@dataclass(frozen=True)
class ClassSpec:
    name: str
    movable: bool
    affordances: frozenset[str]

    def __post_init__(self):
        unknown = self.affordances - AFFORDANCES
        if unknown:
            raise LayoutError(f"unknown affordances {unknown} for {self.name}")
        if self.movable != ("movable" in self.affordances):
            raise LayoutError(f"movable flag mismatch for {self.name}")


@dataclass(frozen=True)
class Layout:
    """Scene description: grid size, fixture cells, movable spawn pool, class table."""

    name: str
    width: int
    height: int
    classes: tuple[ClassSpec, ...]
    fixtures: tuple[tuple[str, tuple[int, int]], ...]  # (class, cell)
    spawn_pool: tuple[tuple[str, int], ...]  # (movable class, count)
    knife_classes: tuple[str, ...] = ("knife",)
    version: int = 1

    def __post_init__(self):
        by_name = {c.name: c for c in self.classes}
        if len(by_name) != len(self.classes):
            raise LayoutError("duplicate class specs")
        for cls, (x, y) in self.fixtures:
            if cls not in by_name or by_name[cls].movable:
                raise LayoutError(f"fixture {cls} must be a fixed class")
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise LayoutError(f"fixture {cls} out of bounds at {(x, y)}")
        for cls, count in self.spawn_pool:
            if cls not in by_name or not by_name[cls].movable or count < 1:
                raise LayoutError(f"bad spawn pool entry ({cls}, {count})")

    def class_spec(self, name: str) -> ClassSpec:
        for c in self.classes:
            if c.name == name:
                return c
        raise LayoutError(f"unknown class {name}")

    def vocabulary(self) -> Vocabulary:
        movable = [c.name for c in self.classes if c.movable]
        fixed = [c.name for c in self.classes if not c.movable]
        return Vocabulary.build(movable, fixed)

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "name": self.name,
                "width": self.width,
                "height": self.height,
                "classes": [
                    {"name": c.name, "movable": c.movable, "affordances": sorted(c.affordances)}
                    for c in self.classes
                ],
                "fixtures": [[cls, list(cell)] for cls, cell in self.fixtures],
                "spawn_pool": [[cls, count] for cls, count in self.spawn_pool],
                "knife_classes": list(self.knife_classes),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "Layout":
        rec = json.loads(text)
        if rec.get("version") != 1:
            raise LayoutError(f"unsupported layout version {rec.get('version')}")
        return cls(
            name=rec["name"],
            width=int(rec["width"]),
            height=int(rec["height"]),
            classes=tuple(
                ClassSpec(c["name"], bool(c["movable"]), frozenset(c["affordances"]))
                for c in rec["classes"]
            ),
            fixtures=tuple((f[0], (int(f[1][0]), int(f[1][1]))) for f in rec["fixtures"]),
            spawn_pool=tuple((p[0], int(p[1])) for p in rec["spawn_pool"]),
            knife_classes=tuple(rec.get("knife_classes", ["knife"])),
        )


@dataclass
class ObjectInstance:
    instance_id: str
    cls: str
    cell: tuple[int, int] | None  # None while held
    affordances: frozenset[str]
    open: bool = False
    toggled_on: bool = False
    sliced: bool = False
    contained_in: str | None = None

    @property
    def movable(self) -> bool:
        return "movable" in self.affordances


def cell_position(cell: tuple[int, int]) -> tuple[float, float]:
    """Center of a grid cell in meters."""
    return ((cell[0] + 0.5) * CELL_METERS, (cell[1] + 0.5) * CELL_METERS)


class World:
    """Full mutable simulator state for one episode."""

    def __init__(
        self,
        layout: Layout,
        placements: list[tuple[str, tuple[int, int]]],
        agent_cell: tuple[int, int],
        agent_heading: int,
        contained: dict[str, str] | None = None,
    ):
        self.layout = layout
        self.vocab = layout.vocabulary()
        self.objects: dict[str, ObjectInstance] = {}
        self.held: str | None = None

        counters: dict[str, int] = {}
        for cls, cell in list(layout.fixtures) + list(placements):
            spec = layout.class_spec(cls)
            k = counters.get(cls, 0)
            counters[cls] = k + 1
            iid = f"{cls}#{k}"
            self.objects[iid] = ObjectInstance(iid, cls, cell, spec.affordances)

        self.blocked = np.zeros((layout.height, layout.width), dtype=bool)
        for cls, (x, y) in layout.fixtures:
            self.blocked[y, x] = True
        if self.blocked[agent_cell[1], agent_cell[0]]:
            raise LayoutError(f"agent spawn {agent_cell} is blocked")
        self.agent_cell = agent_cell
        self.agent_heading = agent_heading  # index into HEADINGS
        self.steps_taken = 0

        if contained:
            for iid, container in contained.items():
                self.objects[iid].contained_in = container
                self.objects[iid].cell = self.objects[container].cell

        self.initial_container = {iid: obj.contained_in for iid, obj in self.objects.items()}
        self.initially_sliced = {iid for iid, obj in self.objects.items() if obj.sliced}

        self.action_space = build_action_space(layout)
        self._action_index = {a: i for i, a in enumerate(self.action_space)}
        self._class_channel = {name: i for i, name in enumerate(self.vocab.names)}
        self._init_presence()

    # -- geometry ----------------------------------------------------------

    def agent_position(self) -> tuple[float, float]:
        return cell_position(self.agent_cell)

    def instance_position(self, obj: ObjectInstance) -> tuple[float, float] | None:
        if obj.cell is None:
            return None
        return cell_position(obj.cell)

    def _hidden(self, obj: ObjectInstance) -> bool:
        """Inside a closed openable receptacle (walking the containment chain)."""
        seen = set()
        current = obj
        while current.contained_in is not None and current.contained_in not in seen:
            seen.add(current.contained_in)
            container = self.objects[current.contained_in]
            if "openable" in container.affordances and not container.open:
                return True
            current = container
        return False

    def visible(self, obj: ObjectInstance) -> bool:
        """Within interaction range in the facing half-plane and not hidden."""
        if obj.cell is None or self._hidden(obj):
            return False
        ax, ay = self.agent_position()
        ox, oy = cell_position(obj.cell)
        dx, dy = ox - ax, oy - ay
        if math.hypot(dx, dy) > INTERACTION_RANGE:
            return False
        hx, hy = HEADING_VECS[self.agent_heading]
        return dx * hx + dy * hy >= 0.0

    def visible_classes(self) -> set[str]:
        return {obj.cls for obj in self.objects.values() if self.visible(obj)}

    def nearest_visible(self, cls: str) -> ObjectInstance | None:
        best, best_d = None, None
        ax, ay = self.agent_position()
        for obj in sorted(self.objects.values(), key=lambda o: o.instance_id):
            if obj.cls != cls or not self.visible(obj):
                continue
            ox, oy = cell_position(obj.cell)
            d = math.hypot(ox - ax, oy - ay)
            if best is None or d < best_d:
                best, best_d = obj, d
        return best

    def world_positions(self) -> dict[str, tuple[str, tuple[float, float]]]:
        """instance-id -> (class, position in meters) for positioned instances."""
        out = {}
        for iid, obj in self.objects.items():
            if obj.cell is not None:
                out[iid] = (obj.cls, cell_position(obj.cell))
        return out

    # -- presence grid for observations ------------------------------------

    def _init_presence(self):
        h, w = self.layout.height, self.layout.width
        c = len(self.vocab)
        half = WINDOW // 2
        self._pad = np.zeros((h + 2 * half, w + 2 * half, c + 1), dtype=np.float32)
        self._pad[:, :, 0] = 1.0  # outside counts as blocked
        self._pad[half : half + h, half : half + w, 0] = self.blocked.astype(np.float32)
        self._half = half
        for obj in self.objects.values():
            self._presence_add(obj)

    def _shown(self, obj: ObjectInstance) -> bool:
        return obj.cell is not None and not self._hidden(obj)

    def _presence_add(self, obj: ObjectInstance):
        if self._shown(obj):
            x, y = obj.cell
            self._pad[y + self._half, x + self._half, 1 + self._class_channel[obj.cls]] += 1.0

    def _presence_remove(self, obj: ObjectInstance):
        if self._shown(obj):
            x, y = obj.cell
            self._pad[y + self._half, x + self._half, 1 + self._class_channel[obj.cls]] -= 1.0

    def _contents(self, container_id: str):
        return [o for o in self.objects.values() if o.contained_in == container_id]

    # -- actions ------------------------------------------------------------

    def action_id(self, verb: str, target: str | None) -> int:
        try:
            return self._action_index[(verb, target)]
        except KeyError:
            raise ActionError(f"invalid action {(verb, target)}") from None

    def step(self, action: int) -> tuple[InteractionEvent, bool]:
        """Apply one action; returns the emitted event and its success flag."""
        if not 0 <= action < len(self.action_space):
            raise ActionError(f"action id {action} out of range")
        self.steps_taken += 1
        verb, target = self.action_space[action]
        held_cls = self.objects[self.held].cls if self.held else None

        if verb in NAV_VERBS:
            success = self._navigate(verb)
            return (
                InteractionEvent("navigate", verb, held_cls, None, None, None, success),
                success,
            )

        handler = getattr(self, f"_do_{verb}")
        return handler(target, held_cls)

    def _navigate(self, verb: str) -> bool:
        if verb == "turn_left":
            self.agent_heading = (self.agent_heading - 1) % 4
            return True
        if verb == "turn_right":
            self.agent_heading = (self.agent_heading + 1) % 4
            return True
        dx, dy = HEADING_VECS[self.agent_heading]
        nx, ny = self.agent_cell[0] + dx, self.agent_cell[1] + dy
        if not (0 <= nx < self.layout.width and 0 <= ny < self.layout.height):
            return False
        if self.blocked[ny, nx]:
            return False
        self.agent_cell = (nx, ny)
        return True

    def _fail(self, kind: str, verb: str, held_cls, target: str):
        return InteractionEvent(kind, verb, held_cls, target, None, None, False), False

    def _do_take(self, target: str, held_cls):
        obj = self.nearest_visible(target)
        if obj is None or not obj.movable or self.held is not None or self._contents(obj.instance_id):
            return self._fail("take", "take", held_cls, target)
        position = cell_position(obj.cell)
        self._presence_remove(obj)
        obj.cell = None
        obj.contained_in = None
        self.held = obj.instance_id
        event = InteractionEvent("take", "take", held_cls, obj.cls, obj.instance_id, position, True)
        return event, True

    def _do_put(self, target: str, held_cls):
        receptacle = self.nearest_visible(target)
        if (
            self.held is None
            or receptacle is None
            or "receptacle" not in receptacle.affordances
            or ("openable" in receptacle.affordances and not receptacle.open)
        ):
            return self._fail("put", "put", held_cls, target)
        obj = self.objects[self.held]
        obj.cell = receptacle.cell
        obj.contained_in = receptacle.instance_id
        self.held = None
        self._presence_add(obj)
        event = InteractionEvent(
            "put", "put", held_cls, obj.cls, obj.instance_id, cell_position(obj.cell), True
        )
        return event, True

    def _do_open(self, target: str, held_cls):
        obj = self.nearest_visible(target)
        if obj is None or "openable" not in obj.affordances or obj.open:
            return self._fail("interact", "open", held_cls, target)
        contents = self._contents(obj.instance_id)
        obj.open = True
        for item in contents:
            self._presence_add(item)
        event = InteractionEvent(
            "interact", "open", held_cls, obj.cls, obj.instance_id, cell_position(obj.cell), True
        )
        return event, True

    def _do_close(self, target: str, held_cls):
        obj = self.nearest_visible(target)
        if obj is None or "openable" not in obj.affordances or not obj.open:
            return self._fail("interact", "close", held_cls, target)
        for item in self._contents(obj.instance_id):
            self._presence_remove(item)
        obj.open = False
        event = InteractionEvent(
            "interact", "close", held_cls, obj.cls, obj.instance_id, cell_position(obj.cell), True
        )
        return event, True

    def _do_toggle_on(self, target: str, held_cls):
        obj = self.nearest_visible(target)
        if obj is None or "toggleable" not in obj.affordances or obj.toggled_on:
            return self._fail("interact", "toggle_on", held_cls, target)
        obj.toggled_on = True
        event = InteractionEvent(
            "interact", "toggle_on", held_cls, obj.cls, obj.instance_id, cell_position(obj.cell), True
        )
        return event, True

    def _do_toggle_off(self, target: str, held_cls):
        obj = self.nearest_visible(target)
        if obj is None or "toggleable" not in obj.affordances or not obj.toggled_on:
            return self._fail("interact", "toggle_off", held_cls, target)
        obj.toggled_on = False
        event = InteractionEvent(
            "interact", "toggle_off", held_cls, obj.cls, obj.instance_id, cell_position(obj.cell), True
        )
        return event, True

    def _do_slice(self, target: str, held_cls):
        obj = self.nearest_visible(target)
        holding_knife = held_cls in self.layout.knife_classes
        if obj is None or "sliceable" not in obj.affordances or obj.sliced or not holding_knife:
            return self._fail("interact", "slice", held_cls, target)
        obj.sliced = True
        event = InteractionEvent(
            "interact", "slice", held_cls, obj.cls, obj.instance_id, cell_position(obj.cell), True
        )
        return event, True

    # -- observation ---------------------------------------------------------

    def observation_size(self) -> int:
        c = len(self.vocab)
        return c + 6 + WINDOW * WINDOW * (c + 1) + c + 3 * c + 1

    def observe(self) -> np.ndarray:
        """Fixed-length feature vector: held class, pose, egocentric window,
        per-class nearest-instance distance, per-class state flags,
        normalized episode clock."""
        c = len(self.vocab)
        parts = np.zeros(self.observation_size(), dtype=np.float32)
        ofs = 0

        if self.held is not None:
            parts[self._class_channel[self.objects[self.held].cls]] = 1.0
        ofs += c

        parts[ofs] = (self.agent_cell[0] + 0.5) / self.layout.width
        parts[ofs + 1] = (self.agent_cell[1] + 0.5) / self.layout.height
        parts[ofs + 2 + self.agent_heading] = 1.0
        ofs += 6

        x, y = self.agent_cell
        win = self._pad[y : y + WINDOW, x : x + WINDOW, :]
        win = np.rot90(win, k=self.agent_heading)  # forward direction maps to row 0
        n = WINDOW * WINDOW * (c + 1)
        parts[ofs : ofs + n] = win.ravel()
        ofs += n

        ax, ay = self.agent_position()
        dists = np.full(c, 5.0, dtype=np.float32)
        any_open = np.zeros(c, dtype=np.float32)
        any_on = np.zeros(c, dtype=np.float32)
        any_sliced = np.zeros(c, dtype=np.float32)
        for obj in self.objects.values():
            ch = self._class_channel[obj.cls]
            if self._shown(obj):
                ox, oy = cell_position(obj.cell)
                d = math.hypot(ox - ax, oy - ay)
                if d < dists[ch]:
                    dists[ch] = d
            if obj.open:
                any_open[ch] = 1.0
            if obj.toggled_on:
                any_on[ch] = 1.0
            if obj.sliced:
                any_sliced[ch] = 1.0
        parts[ofs : ofs + c] = dists / 5.0
        ofs += c
        parts[ofs : ofs + c] = any_open
        ofs += c
        parts[ofs : ofs + c] = any_on
        ofs += c
        parts[ofs : ofs + c] = any_sliced
        ofs += c
        parts[ofs] = min(self.steps_taken / 256.0, 1.0)
        return parts


def build_action_space(layout: Layout) -> tuple[tuple[str, str | None], ...]:
    """Navigation actions followed by all valid (verb, class) interactions."""
    actions: list[tuple[str, str | None]] = [(v, None) for v in NAV_VERBS]
    by_verb = {
        "take": lambda c: c.movable,
        "put": lambda c: "receptacle" in c.affordances,
        "open": lambda c: "openable" in c.affordances,
        "close": lambda c: "openable" in c.affordances,
        "toggle_on": lambda c: "toggleable" in c.affordances,
        "toggle_off": lambda c: "toggleable" in c.affordances,
        "slice": lambda c: "sliceable" in c.affordances,
    }
    for verb in INTERACTION_VERBS:
        for spec in layout.classes:
            if by_verb[verb](spec):
                actions.append((verb, spec.name))
    return tuple(actions)


def build_world(layout: Layout, seed: int, presence: float = 0.25) -> World:
    """Deterministic random world: fixtures fixed, movables at random free cells.

    Each spawn-pool entry is present with probability `presence`, so the
    movable inventory varies from episode to episode the way real scenes do.
    """
    rng = random.Random(seed)
    free = [
        (x, y)
        for y in range(layout.height)
        for x in range(layout.width)
        if not any(cell == (x, y) for _, cell in layout.fixtures)
    ]
    placements = []
    cells = list(free)
    for cls, count in layout.spawn_pool:
        for _ in range(count):
            if rng.random() >= presence:
                continue
            if not cells:
                raise LayoutError("not enough free cells for spawn pool")
            cell = cells.pop(rng.randrange(len(cells)))
            placements.append((cls, cell))
    agent_cell = cells.pop(rng.randrange(len(cells)))
    heading = rng.randrange(4)
    return World(layout, placements, agent_cell, heading)
