"""Deterministic scripted controllers that solve each task, used as test oracles."""

from __future__ import annotations

import math
from collections import deque

from .tasks import TaskSpec, interaction_cells
from .world import HEADING_VECS, INTERACTION_RANGE, World, cell_position


def _euclid(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _heading_toward(world: World, target_cell) -> int:
    ax, ay = world.agent_position()
    qx, qy = cell_position(target_cell)
    dots = [(qx - ax) * hx + (qy - ay) * hy for hx, hy in HEADING_VECS]
    return max(range(4), key=lambda i: dots[i])


def _turn_action(world: World, desired_heading: int) -> int:
    diff = (desired_heading - world.agent_heading) % 4
    verb = "turn_left" if diff == 3 else "turn_right"
    return world.action_id(verb, None)


def _first_step(world: World, goal_cells) -> tuple[int, int] | None:
    """First cell on a shortest path from the agent to the nearest goal cell."""
    goals = set(goal_cells)
    start = world.agent_cell
    if start in goals:
        return None
    parents = {start: None}
    queue = deque([start])
    w, h = world.layout.width, world.layout.height
    found = None
    while queue and found is None:
        x, y = queue.popleft()
        for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
            nxt = (x + dx, y + dy)
            if not (0 <= nxt[0] < w and 0 <= nxt[1] < h):
                continue
            if world.blocked[nxt[1], nxt[0]] or nxt in parents:
                continue
            parents[nxt] = (x, y)
            if nxt in goals:
                found = nxt
                break
            queue.append(nxt)
    if found is None:
        return None
    cell = found
    while parents[cell] != start:
        cell = parents[cell]
    return cell

def _nearest_instance(world: World, classes, predicate=None):
    ax, ay = world.agent_position()
    best, best_key = None, None
    for obj in sorted(world.objects.values(), key=lambda o: o.instance_id):
        if obj.cls not in classes or obj.cell is None or world._hidden(obj):
            continue
        if predicate is not None and not predicate(obj):
            continue
        key = (_euclid(cell_position(obj.cell), (ax, ay)), obj.instance_id)
        if best is None or key < best_key:
            best, best_key = obj, key
    return best


def approach_and(world: World, verb: str, obj) -> int:
    """Interact with obj's class if it is visible, otherwise move or turn toward it."""
    if world.visible(obj):
        return world.action_id(verb, obj.cls)
    if _euclid(cell_position(obj.cell), world.agent_position()) <= INTERACTION_RANGE:
        return _turn_action(world, _heading_toward(world, obj.cell))
    step = _first_step(world, interaction_cells(world, obj.cell, margin=0.3))
    if step is None:
        # already inside the zone but out of half-plane: face the object
        return _turn_action(world, _heading_toward(world, obj.cell))
    desired = HEADING_VECS.index((step[0] - world.agent_cell[0], step[1] - world.agent_cell[1]))
    if desired != world.agent_heading:
        return _turn_action(world, desired)
    return world.action_id("move_forward", None)


def scripted_action(world: World, task: TaskSpec) -> int:
    """Next action of a deterministic solver for the task; replans every call."""
    held = world.objects[world.held] if world.held else None

    if task.slice_goal:
        if held is not None and held.cls in world.layout.knife_classes:
            target = _nearest_instance(
                world,
                {o.cls for o in world.objects.values() if task.eligible_affordance in o.affordances},
                predicate=lambda o: not o.sliced,
            )
            return approach_and(world, "slice", target)
        return approach_and(world, "take", _nearest_instance(world, set(world.layout.knife_classes)))

    # an eligible object already sits in the goal receptacle: finish the state conditions
    for obj in sorted(world.objects.values(), key=lambda o: o.instance_id):
        if task.eligible_affordance not in obj.affordances or obj.contained_in is None:
            continue
        container = world.objects[obj.contained_in]
        if container.cls not in task.receptacle_classes:
            continue
        if task.require_container_closed and container.open:
            return approach_and(world, "close", container)
        if task.require_toggled_class is not None:
            toggle = _nearest_instance(world, {task.require_toggled_class})
            if not toggle.toggled_on:
                return approach_and(world, "toggle_on", toggle)
        break

    if held is not None and task.eligible_affordance in held.affordances:
        receptacle = _nearest_instance(world, set(task.receptacle_classes))
        if "openable" in receptacle.affordances and not receptacle.open:
            return approach_and(world, "open", receptacle)
        return approach_and(world, "put", receptacle)

    if held is not None:
        # not a goal object: drop it on the counter and start over
        return approach_and(world, "put", _nearest_instance(world, {"counter"}))

    target = _nearest_instance(
        world,
        {o.cls for o in world.objects.values() if task.eligible_affordance in o.affordances},
        predicate=lambda o: o.movable,
    )
    return approach_and(world, "take", target)


def run_scripted(world: World, task: TaskSpec, horizon: int = 200) -> bool:
    """Roll the scripted controller until the goal fires or the horizon runs out."""
    from .tasks import check_goal

    for _ in range(horizon):
        if check_goal(world, task):
            return True
        world.step(scripted_action(world, task))
    return check_goal(world, task)
