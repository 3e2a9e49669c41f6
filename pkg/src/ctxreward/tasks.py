"""Task goal predicates, episode generation, and navigation difficulty."""

from __future__ import annotations

import json
import logging
import math
import random
from collections import deque
from dataclasses import dataclass

from .world import CELL_METERS, INTERACTION_RANGE, Layout, World, build_world

log = logging.getLogger(__name__)

GOAL_REWARD = 10.0
STEP_PENALTY = -0.01


@dataclass(frozen=True)
class TaskSpec:
    """Goal predicate conjunction plus the eligible-object affordance filter."""

    task_id: str
    eligible_affordance: str
    receptacle_classes: tuple[str, ...]
    require_container_closed: bool = False
    require_toggled_class: str | None = None
    slice_goal: bool = False


TASKS: dict[str, TaskSpec] = {
    "store": TaskSpec("store", "storable", ("drawer",), require_container_closed=True),
    "heat": TaskSpec("heat", "heatable", ("stove_burner",), require_toggled_class="stove_knob"),
    "cool": TaskSpec("cool", "coolable", ("fridge",), require_container_closed=True),
    "clean": TaskSpec("clean", "cleanable", ("sink_basin",), require_toggled_class="faucet"),
    "slice": TaskSpec("slice", "sliceable", (), slice_goal=True),
    "prep": TaskSpec("prep", "cookable", ("pot", "pan")),
    "trash": TaskSpec("trash", "trashable", ("garbage_can",)),
}


def eligible_instances(world: World, task: TaskSpec):
    return [
        obj
        for obj in sorted(world.objects.values(), key=lambda o: o.instance_id)
        if task.eligible_affordance in obj.affordances
    ]


def _initially_outside(world: World, obj, task: TaskSpec) -> bool:
    init = world.initial_container.get(obj.instance_id)
    if init is None:
        return True
    return world.objects[init].cls not in task.receptacle_classes


def check_goal(world: World, task: TaskSpec) -> bool:
    """True iff some eligible instance satisfies the task's full conjunction,
    including the requirement that it started outside the goal receptacle."""
    if task.slice_goal:
        held = world.objects[world.held].cls if world.held else None
        if held not in world.layout.knife_classes:
            return False
        return any(
            obj.sliced and obj.instance_id not in world.initially_sliced
            for obj in world.objects.values()
            if task.eligible_affordance in obj.affordances
        )

    toggled_ok = True
    if task.require_toggled_class is not None:
        toggled_ok = any(
            obj.toggled_on for obj in world.objects.values() if obj.cls == task.require_toggled_class
        )
        if not toggled_ok:
            return False

    for obj in eligible_instances(world, task):
        if obj.contained_in is None:
            continue
        container = world.objects[obj.contained_in]
        if container.cls not in task.receptacle_classes:
            continue
        if task.require_container_closed and container.open:
            continue
        if not _initially_outside(world, obj, task):
            continue
        return True
    return False


def task_reward(world: World, task: TaskSpec) -> tuple[float, bool]:
    """Goal bonus on first satisfaction, small time penalty otherwise."""
    if check_goal(world, task):
        return GOAL_REWARD, True
    return STEP_PENALTY, False


# ---------------------------------------------------------------------------
# Episodes


@dataclass(frozen=True)
class EpisodeConfig:
    scene: str
    seed: int
    task_id: str
    horizon: int
    agent_cell: tuple[int, int]
    agent_heading: int
    placements: tuple[tuple[str, tuple[int, int]], ...]
    difficulty: float

    def to_dict(self) -> dict:
        return {
            "scene": self.scene,
            "seed": self.seed,
            "task_id": self.task_id,
            "horizon": self.horizon,
            "agent_cell": list(self.agent_cell),
            "agent_heading": self.agent_heading,
            "placements": [[cls, list(cell)] for cls, cell in self.placements],
            "difficulty": self.difficulty,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "EpisodeConfig":
        return cls(
            scene=rec["scene"],
            seed=int(rec["seed"]),
            task_id=rec["task_id"],
            horizon=int(rec["horizon"]),
            agent_cell=tuple(rec["agent_cell"]),
            agent_heading=int(rec["agent_heading"]),
            placements=tuple((p[0], (int(p[1][0]), int(p[1][1]))) for p in rec["placements"]),
            difficulty=float(rec["difficulty"]),
        )


def save_episodes(episodes: list[EpisodeConfig], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ep in episodes:
            f.write(json.dumps(ep.to_dict()) + "\n")


def load_episodes(path) -> list[EpisodeConfig]:
    with open(path, "r", encoding="utf-8") as f:
        return [EpisodeConfig.from_dict(json.loads(line)) for line in f if line.strip()]


def world_from_config(layout: Layout, config: EpisodeConfig) -> World:
    return World(layout, list(config.placements), config.agent_cell, config.agent_heading)


def _bfs_distances(world: World, start: tuple[int, int]) -> dict[tuple[int, int], int]:
    dist = {start: 0}
    queue = deque([start])
    w, h = world.layout.width, world.layout.height
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and not world.blocked[ny, nx] and (nx, ny) not in dist:
                dist[(nx, ny)] = dist[(x, y)] + 1
                queue.append((nx, ny))
    return dist


def interaction_cells(world: World, cell: tuple[int, int], margin: float = 0.0):
    """Free cells from which an object at `cell` is inside interaction range."""
    cx, cy = cell
    out = []
    reach = (INTERACTION_RANGE - margin) / CELL_METERS
    r = int(reach) + 1
    for y in range(max(0, cy - r), min(world.layout.height, cy + r + 1)):
        for x in range(max(0, cx - r), min(world.layout.width, cx + r + 1)):
            if world.blocked[y, x]:
                continue
            if math.hypot(x - cx, y - cy) <= reach:
                out.append((x, y))
    return out


def _target_groups(world: World, task: TaskSpec):
    """Groups of candidate instances; reaching any member of a group suffices."""
    groups = []
    groups.append([o for o in eligible_instances(world, task) if o.cell is not None])
    for cls_group in ([task.receptacle_classes] if task.receptacle_classes else []):
        groups.append([o for o in world.objects.values() if o.cls in cls_group])
    if task.require_toggled_class:
        groups.append([o for o in world.objects.values() if o.cls == task.require_toggled_class])
    if task.slice_goal:
        groups.append(
            [o for o in world.objects.values() if o.cls in world.layout.knife_classes and o.cell]
        )
    return groups


def navigation_difficulty(world: World, task: TaskSpec) -> float:
    """Ideal geodesic path length (meters) through the task-required objects.

    From the agent spawn, repeatedly walk to the nearest remaining required
    object (shortest grid path into its interaction range). Unreachable
    objects yield infinity.
    """
    groups = _target_groups(world, task)
    if any(not g for g in groups):
        return math.inf
    current = world.agent_cell
    total_steps = 0
    remaining = list(groups)
    while remaining:
        dist = _bfs_distances(world, current)
        best = None
        for gi, group in enumerate(remaining):
            for obj in group:
                for cell in interaction_cells(world, obj.cell):
                    if cell in dist and (best is None or dist[cell] < best[0]):
                        best = (dist[cell], gi, cell)
        if best is None:
            return math.inf
        steps, gi, cell = best
        total_steps += steps
        current = cell
        remaining.pop(gi)
    return total_steps * CELL_METERS


def generate_episodes(
    layouts: list[Layout],
    task_id: str,
    n_per_scene: int,
    seed: int,
    horizon: int = 96,
) -> list[EpisodeConfig]:
    """Deterministic episode configs with randomized object and agent spawns.

    Scenes in which the task is unsatisfiable (a required class is missing)
    are skipped with a log report. Every returned config has a finite
    navigation difficulty and its eligible object outside the goal receptacle.
    """
    task = TASKS[task_id]
    rng = random.Random(seed)
    episodes = []
    for layout in layouts:
        base = rng.randrange(1 << 30)
        produced = 0
        attempt = 0
        while produced < n_per_scene and attempt < n_per_scene * 20:
            ep_seed = base + attempt
            attempt += 1
            world = build_world(layout, ep_seed)
            difficulty = navigation_difficulty(world, task)
            if not math.isfinite(difficulty):
                continue
            placements = tuple(
                (obj.cls, obj.cell)
                for obj in world.objects.values()
                if obj.movable and obj.cell is not None
            )
            episodes.append(
                EpisodeConfig(
                    scene=layout.name,
                    seed=ep_seed,
                    task_id=task_id,
                    horizon=horizon,
                    agent_cell=world.agent_cell,
                    agent_heading=world.agent_heading,
                    placements=placements,
                    difficulty=difficulty,
                )
            )
            produced += 1
        if produced < n_per_scene:
            log.warning(
                "scene %s: only %d/%d %s episodes generated", layout.name, produced, n_per_scene, task_id
            )
    return episodes
