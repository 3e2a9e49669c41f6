"""Persistent spatial memory of placed objects and the auxiliary rewards built on it.

Putting an object down registers it as a potential context object in the memory
of every instance within the neighborhood radius; picking it up removes it
everywhere and clears the memory of its own class. Interactions are rewarded by
the compatibility mass of remembered nearby objects (plus the held object),
normalized so the single best context object is worth exactly 1.0, and only the
first successful occurrence of each (action, class) pair per episode pays out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import NULL_TOKEN
from .priors import CompatibilityTable

EPSILON_METERS = 0.5
NAVIGATION_VERBS = frozenset({"move_forward", "turn_left", "turn_right"})

Position = tuple[float, float]


@dataclass(frozen=True)
class InteractionEvent:
    """One simulator interaction, as consumed by the memory and the event log."""

    kind: str  # put | take | interact | navigate
    verb: str
    held_before: str | None
    target_class: str | None
    target_instance: str | None
    position: Position | None
    success: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "verb": self.verb,
                "held_before": self.held_before,
                "target_class": self.target_class,
                "target_instance": self.target_instance,
                "position": list(self.position) if self.position else None,
                "success": self.success,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "InteractionEvent":
        rec = json.loads(line)
        pos = tuple(rec["position"]) if rec["position"] else None
        return cls(
            rec["kind"],
            rec["verb"],
            rec["held_before"],
            rec["target_class"],
            rec["target_instance"],
            pos,
            rec["success"],
        )


def save_event_log(events, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for event in events:
            f.write(event.to_json() + "\n")


def load_event_log(path) -> list[InteractionEvent]:
    with open(path, "r", encoding="utf-8") as f:
        return [InteractionEvent.from_json(line) for line in f if line.strip()]


class ContextMemory:
    """Per-class store of nearby placed instances: host class -> {instance: (class, pos)}."""

    def __init__(self, epsilon: float = EPSILON_METERS):
        self.epsilon = epsilon
        self.entries: dict[str, dict[str, tuple[str, Position]]] = {}

    def stored(self, host_class: str) -> dict[str, tuple[str, Position]]:
        return self.entries.get(host_class, {})

    def record_put(
        self,
        instance_id: str,
        obj_class: str,
        position: Position,
        world_positions: dict[str, tuple[str, Position]],
    ) -> None:
        """Register a placed instance with every other instance inside the radius.

        world_positions maps instance-id -> (class, position) for instances that
        currently have a position (the placed one may be included; it is skipped).
        """
        for other_id, (other_class, other_pos) in world_positions.items():
            if other_id == instance_id:
                continue
            if math.dist(position, other_pos) < self.epsilon:
                self.entries.setdefault(other_class, {})[instance_id] = (obj_class, position)

    def record_take(self, instance_id: str, obj_class: str) -> None:
        """Remove a picked-up instance everywhere; clear its own class's memory.

        Taking an instance the agent never placed is a no-op: the object spawned
        in place and was never registered anywhere.
        """
        if not any(instance_id in stored for stored in self.entries.values()):
            return
        for stored in self.entries.values():
            stored.pop(instance_id, None)
        self.entries[obj_class] = {}

    def apply(self, event: InteractionEvent, world_positions) -> None:
        if not event.success or event.kind not in ("put", "take"):
            return
        if event.kind == "put":
            self.record_put(event.target_instance, event.target_class, event.position, world_positions)
        else:
            self.record_take(event.target_instance, event.target_class)


class InteractionCounter:
    """Per-episode counts of successful (verb, target-class) interactions."""

    def __init__(self):
        self.counts: dict[tuple[str, str], int] = {}

    def count(self, verb: str, target_class: str) -> int:
        return self.counts.get((verb, target_class), 0)

    def increment(self, verb: str, target_class: str) -> None:
        self.counts[(verb, target_class)] = self.counts.get((verb, target_class), 0) + 1

    def reset(self) -> None:
        self.counts.clear()


def activity_reward(
    memory: ContextMemory,
    verb: str,
    target_class: str | None,
    held_class: str | None,
    counter: InteractionCounter,
    table: CompatibilityTable,
) -> float:
    """Compatibility mass of remembered neighbors of the interaction target.

    Returns 0 for navigation actions and for repeats of an (action, class) pair
    within the episode. Otherwise sums table scores of every stored instance
    near the target plus the held class (null when empty-handed), divided by the
    best achievable single-object score for that target. Callers invoke this
    only for successful interactions; the counter is bumped on every rewardable
    call, including ones where the target has no prior mass.
    """
    if verb in NAVIGATION_VERBS or target_class is None:
        return 0.0
    if counter.count(verb, target_class) > 0:
        return 0.0
    counter.increment(verb, target_class)
    z = table.column_max(target_class)
    if z <= 0.0:
        return 0.0
    total = 0.0
    for obj_class, _pos in memory.stored(target_class).values():
        total += table.score(obj_class, target_class)
    total += table.score(held_class if held_class is not None else NULL_TOKEN, target_class)
    return total / z


def total_reward(task_r: float, aux_r: float, lambda_aux: float) -> float:
    """Task reward plus weighted auxiliary reward."""
    if lambda_aux < 0:
        raise ValueError("lambda_aux must be nonnegative")
    return task_r + lambda_aux * aux_r


def coverage_reward(visible_classes, visited: set[str]) -> tuple[float, set[str]]:
    """Constant bonus per object class seen in interaction range for the first time."""
    new = set(visible_classes) - visited
    return float(len(new)), visited | new
