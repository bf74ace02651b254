"""Deterministic 2D grid environment.

One cell is one meter. The agent has a discrete pose (cell, heading in
{0, 90, 180, 270}, pitch in {-30, 0, +30}) and perceives the world through a
13x6 egocentric viewport. Metric thresholds: 6.0 m visibility range, 90 degree
forward cone, 1.5 m interaction range.

Heading 0 points north (decreasing y); 90 east, 180 south, 270 west.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

Cell = tuple[int, int]

HEADINGS = (0, 90, 180, 270)
PITCHES = (-30, 0, 30)
ELEVATIONS = ("low", "mid", "high")

VISIBILITY_RANGE = 6.0
INTERACT_RANGE = 1.5

VIEW_COLS = 13
VIEW_ROWS = 6
VIEW_CENTER_COL = 6
COORD_MAX = 1000

# Band of object elevations readable at each camera pitch.
PITCH_BAND = {30: "high", 0: "mid", -30: "low"}

# heading -> (forward unit vector, right unit vector) in grid coordinates
_FRAME_VECTORS = {
    0: ((0, -1), (1, 0)),
    90: ((1, 0), (0, 1)),
    180: ((0, 1), (-1, 0)),
    270: ((-1, 0), (0, -1)),
}

NAVIGATE_MODES = ("forward", "backward", "turn_left", "turn_right")
LOOK_DIRECTIONS = ("up", "down")

CANONICAL_INTENTS = (
    "ground",
    "open_access",
    "close_access",
    "activate",
    "deactivate",
    "pick",
    "place",
    "drop",
)


@dataclass
class SceneObject:
    """One object instance; capability flags drive which intents apply to it."""

    object_id: str
    category: str
    position: Optional[Cell]
    elevation: str = "mid"
    toggleable: bool = False
    is_toggled: bool = False
    openable: bool = False
    is_open: bool = False
    pickable: bool = False
    receptacle: bool = False
    blocking: bool = False
    contained_in: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "category": self.category,
            "position": list(self.position) if self.position is not None else None,
            "elevation": self.elevation,
            "toggleable": self.toggleable,
            "is_toggled": self.is_toggled,
            "openable": self.openable,
            "is_open": self.is_open,
            "pickable": self.pickable,
            "receptacle": self.receptacle,
            "blocking": self.blocking,
            "contained_in": self.contained_in,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        d = dict(d)
        pos = d.pop("position")
        return cls(position=tuple(pos) if pos is not None else None, **d)


@dataclass
class AgentState:
    """Agent pose plus the held-object fact (held objects are off the grid)."""

    position: Cell
    heading: int = 0
    pitch: int = 0
    held: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "heading": self.heading,
            "pitch": self.pitch,
            "held": self.held,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentState":
        return cls(
            position=tuple(d["position"]),
            heading=d["heading"],
            pitch=d["pitch"],
            held=d.get("held"),
        )


@dataclass
class GridScene:
    """Hidden world state the evaluator scores against."""

    scene_id: str
    width: int
    height: int
    walls: set[Cell]
    objects: list[SceneObject]
    agent_start: AgentState

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_wall(self, cell: Cell) -> bool:
        return cell in self.walls

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)

    def objects_at(self, cell: Cell) -> list[SceneObject]:
        return [o for o in self.objects if o.position == cell]

    def blocking_cells(self) -> set[Cell]:
        """Cells occupied by sight/movement blockers (held objects excluded)."""
        return {
            o.position
            for o in self.objects
            if o.blocking and o.position is not None and o.contained_in is None
        }

    def passable(self, cell: Cell) -> bool:
        return (
            self.in_bounds(cell)
            and not self.is_wall(cell)
            and cell not in self.blocking_cells()
        )

    def validate(self) -> list[str]:
        """Structural invariant check; returns human-readable violations."""
        violations = []
        ids = [o.object_id for o in self.objects]
        if len(ids) != len(set(ids)):
            violations.append("duplicate_object_id")
        start = self.agent_start.position
        if not self.in_bounds(start) or self.is_wall(start):
            violations.append("agent_start_not_floor")
        elif start in self.blocking_cells():
            violations.append("agent_start_blocked")
        if self.agent_start.heading not in HEADINGS or self.agent_start.pitch not in PITCHES:
            violations.append("agent_start_bad_pose")
        seen_blocking: set[Cell] = set()
        for obj in self.objects:
            if obj.position is None:
                violations.append(f"{obj.object_id}:off_grid")
                continue
            if not self.in_bounds(obj.position) or self.is_wall(obj.position):
                violations.append(f"{obj.object_id}:not_on_floor")
            if obj.elevation not in ELEVATIONS:
                violations.append(f"{obj.object_id}:bad_elevation")
            if obj.is_toggled and not obj.toggleable:
                violations.append(f"{obj.object_id}:toggled_not_toggleable")
            if obj.is_open and not obj.openable:
                violations.append(f"{obj.object_id}:open_not_openable")
            if obj.blocking and obj.contained_in is None:
                if obj.position in seen_blocking:
                    violations.append(f"{obj.object_id}:blocking_overlap")
                seen_blocking.add(obj.position)
            if obj.contained_in is not None:
                try:
                    container = self.object_by_id(obj.contained_in)
                except KeyError:
                    violations.append(f"{obj.object_id}:container_missing")
                    continue
                if not (container.receptacle and container.openable):
                    violations.append(f"{obj.object_id}:container_not_openable_receptacle")
                if container.position != obj.position:
                    violations.append(f"{obj.object_id}:container_cell_mismatch")
        return violations

    def to_dict(self) -> dict:
        rows = []
        for y in range(self.height):
            rows.append(
                "".join("#" if (x, y) in self.walls else "." for x in range(self.width))
            )
        return {
            "scene_id": self.scene_id,
            "width": self.width,
            "height": self.height,
            "grid": rows,
            "objects": [o.to_dict() for o in sorted(self.objects, key=lambda o: o.object_id)],
            "agent_start": self.agent_start.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridScene":
        walls = {
            (x, y)
            for y, row in enumerate(d["grid"])
            for x, ch in enumerate(row)
            if ch == "#"
        }
        return cls(
            scene_id=d["scene_id"],
            width=d["width"],
            height=d["height"],
            walls=walls,
            objects=[SceneObject.from_dict(o) for o in d["objects"]],
            agent_start=AgentState.from_dict(d["agent_start"]),
        )

    def clone(self) -> "GridScene":
        return GridScene.from_dict(self.to_dict())


@dataclass
class FeedbackEvent:
    """Execution-outcome booleans about the immediately preceding action."""

    too_far: bool = False
    path_blocked: bool = False

    def to_dict(self) -> dict:
        return {"too_far": self.too_far, "path_blocked": self.path_blocked}


@dataclass
class CellReport:
    """Agent-visible content of one viewport cell; never carries identity."""

    kind: str  # out_of_view | wall | floor | object
    category: Optional[str] = None
    visual_state: Optional[str] = None  # on | off | open | closed | none

    def to_dict(self) -> dict:
        if self.kind != "object":
            return {"kind": self.kind}
        return {
            "kind": "object",
            "category": self.category,
            "visual_state": self.visual_state,
        }


@dataclass
class Frame:
    """Egocentric 13x6 viewport; row 0 is the far depth band, row 5 the near one."""

    cells: list[list[CellReport]]
    role: str = "current"

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "cells": [[c.to_dict() for c in row] for row in self.cells],
        }

    def report_at(self, row: int, col: int) -> CellReport:
        return self.cells[row][col]


@dataclass
class RenderedView:
    """A frame plus the evaluator-side map of which object each cell shows.

    The target map never leaves the evaluator; only ``frame`` is serialized
    toward the agent.
    """

    frame: Frame
    targets: list[list[Optional[str]]]

    def rendered_cell_of(self, object_id: str) -> Optional[tuple[int, int]]:
        for r in range(VIEW_ROWS):
            for k in range(VIEW_COLS):
                if self.targets[r][k] == object_id:
                    return (r, k)
        return None


@dataclass
class InteractOutcome:
    """Evaluator-side result of an interact_pixel application."""

    result: str  # applied | no_target | too_far | incompatible
    intent: str
    target_id: Optional[str] = None
    clicked: Optional[tuple[int, int]] = None  # (row, col) in the viewport


def frame_vectors(heading: int) -> tuple[Cell, Cell]:
    return _FRAME_VECTORS[heading]


def agent_frame_coords(pose_position: Cell, heading: int, cell: Cell) -> tuple[int, int]:
    """(forward, lateral) components of ``cell`` in the agent frame."""
    (fx, fy), (rx, ry) = frame_vectors(heading)
    dx = cell[0] - pose_position[0]
    dy = cell[1] - pose_position[1]
    return dx * fx + dy * fy, dx * rx + dy * ry


def bresenham_line(a: Cell, b: Cell) -> list[Cell]:
    """Discrete line from a to b inclusive (integer error accumulation form)."""
    x0, y0 = a
    x1, y1 = b
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = [(x0, y0)]
    while (x0, y0) != (x1, y1):
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
        out.append((x0, y0))
    return out


def euclid(a: Cell, b: Cell) -> float:
    return math.dist(a, b)


def visible_cells(scene: GridScene, pose: AgentState) -> set[Cell]:
    """Cells within range, inside the 90 degree forward cone, with a clear ray.

    The ray check uses the Bresenham line from the agent cell to the target
    cell; intermediate wall or blocking-object cells occlude. The target cell
    itself never occludes (walls and blockers are themselves visible).
    """
    px, py = pose.position
    occluders = scene.walls | scene.blocking_cells()
    reach = int(VISIBILITY_RANGE)
    out: set[Cell] = set()
    for x in range(max(0, px - reach), min(scene.width, px + reach + 1)):
        for y in range(max(0, py - reach), min(scene.height, py + reach + 1)):
            cell = (x, y)
            ddx = x - px
            ddy = y - py
            if ddx * ddx + ddy * ddy > VISIBILITY_RANGE * VISIBILITY_RANGE:
                continue
            f, l = agent_frame_coords(pose.position, pose.heading, cell)
            if f < 0 or abs(l) > f:
                continue
            ray = bresenham_line(pose.position, cell)
            if any(c in occluders for c in ray[1:-1]):
                continue
            out.add(cell)
    return out


def _render_candidate(scene: GridScene, cell: Cell, band: str) -> Optional[SceneObject]:
    """Object to show at a cell for the given elevation band, or None.

    A contained object is hidden while its container is openable and closed;
    when visible it wins the tie against its container so reveals are
    observable.
    """
    contained = []
    free = []
    for obj in scene.objects_at(cell):
        if obj.elevation != band:
            continue
        if obj.contained_in is not None:
            container = scene.object_by_id(obj.contained_in)
            if container.openable and not container.is_open:
                continue
            contained.append(obj)
        else:
            free.append(obj)
    contained.sort(key=lambda o: o.object_id)
    free.sort(key=lambda o: o.object_id)
    if contained:
        return contained[0]
    if free:
        return free[0]
    return None


def _visual_state(obj: SceneObject) -> str:
    if obj.toggleable:
        return "on" if obj.is_toggled else "off"
    if obj.openable:
        return "open" if obj.is_open else "closed"
    return "none"


def render_view(scene: GridScene, pose: AgentState) -> RenderedView:
    """Project the scene into the egocentric viewport.

    Row r covers depth band d = 6 - r; column k covers lateral offset
    l = k - 6. A cell renders only if it is visible and |l| <= d. Objects
    render only when their elevation matches the pitch band; gated objects
    show as floor. Walls and floor ignore pitch.
    """
    vis = visible_cells(scene, pose)
    band = PITCH_BAND[pose.pitch]
    (fx, fy), (rx, ry) = frame_vectors(pose.heading)
    px, py = pose.position
    cells: list[list[CellReport]] = []
    targets: list[list[Optional[str]]] = []
    for r in range(VIEW_ROWS):
        d = VIEW_ROWS - r
        row: list[CellReport] = []
        trow: list[Optional[str]] = []
        for k in range(VIEW_COLS):
            l = k - VIEW_CENTER_COL
            cell = (px + d * fx + l * rx, py + d * fy + l * ry)
            if abs(l) > d or cell not in vis:
                row.append(CellReport("out_of_view"))
                trow.append(None)
                continue
            if scene.is_wall(cell):
                row.append(CellReport("wall"))
                trow.append(None)
                continue
            obj = _render_candidate(scene, cell, band)
            if obj is None:
                row.append(CellReport("floor"))
                trow.append(None)
            else:
                row.append(CellReport("object", obj.category, _visual_state(obj)))
                trow.append(obj.object_id)
        cells.append(row)
        targets.append(trow)
    return RenderedView(Frame(cells), targets)


def render_frame(scene: GridScene, pose: AgentState) -> Frame:
    return render_view(scene, pose).frame


def quantize_positive(magnitude: float, unit: int) -> int:
    """Round to the nearest positive multiple of ``unit`` (half away from zero)."""
    q = math.floor(magnitude / unit + 0.5)
    return max(1, q) * unit


def apply_navigate(
    scene: GridScene, state: AgentState, mode: str, magnitude: float
) -> tuple[AgentState, FeedbackEvent]:
    """Move or turn. Partial moves stop at the first obstruction."""
    if mode in ("turn_left", "turn_right"):
        q = quantize_positive(magnitude, 90)
        delta = q if mode == "turn_right" else -q
        return replace(state, heading=(state.heading + delta) % 360), FeedbackEvent()
    steps = int(magnitude)
    (fx, fy), _ = frame_vectors(state.heading)
    if mode == "backward":
        fx, fy = -fx, -fy
    pos = state.position
    blocked = False
    moved = 0
    blockers = scene.blocking_cells()
    while moved < steps:
        nxt = (pos[0] + fx, pos[1] + fy)
        if not scene.in_bounds(nxt) or scene.is_wall(nxt) or nxt in blockers:
            blocked = True
            break
        pos = nxt
        moved += 1
    return replace(state, position=pos), FeedbackEvent(path_blocked=blocked)


def apply_look(state: AgentState, direction: str, magnitude: float) -> AgentState:
    """Pitch by the nearest positive multiple of 30 degrees, clamped to [-30, 30]."""
    q = quantize_positive(magnitude, 30)
    delta = q if direction == "up" else -q
    pitch = max(-30, min(30, state.pitch + delta))
    return replace(state, pitch=pitch)


def click_to_cell(x: int, y: int) -> tuple[int, int]:
    """Map normalized [0, 1000] click coordinates to a (row, col) viewport cell."""
    col = min(VIEW_COLS - 1, x * VIEW_COLS // COORD_MAX)
    row = min(VIEW_ROWS - 1, y * VIEW_ROWS // COORD_MAX)
    return row, col


def cell_to_click(row: int, col: int) -> tuple[int, int]:
    """Center click coordinates of a viewport cell (inverse of click_to_cell)."""
    x = (2 * col + 1) * COORD_MAX // (2 * VIEW_COLS)
    y = (2 * row + 1) * COORD_MAX // (2 * VIEW_ROWS)
    return x, y


def apply_interact(
    scene: GridScene,
    state: AgentState,
    view: RenderedView,
    intent: str,
    x: Optional[int],
    y: Optional[int],
) -> tuple[GridScene, AgentState, FeedbackEvent, InteractOutcome]:
    """Apply a pixel-grounded interaction against the current rendered view.

    ``ground`` is a pure pointing act: distance-exempt and side-effect free;
    the targeted identity is recorded evaluator-side only. Every other
    intent (except drop, which has no target) enforces the 1.5 m limit.
    Capability mismatches are outcomes, not invalid actions.
    """
    feedback = FeedbackEvent()
    if intent == "drop":
        if state.held is None:
            return scene, state, feedback, InteractOutcome("incompatible", intent)
        held = scene.object_by_id(state.held)
        (fx, fy), _ = frame_vectors(state.heading)
        ahead = (state.position[0] + fx, state.position[1] + fy)
        drop_cell = ahead if scene.passable(ahead) else state.position
        held.position = drop_cell
        held.contained_in = None
        new_state = replace(state, held=None)
        return scene, new_state, feedback, InteractOutcome("applied", intent, held.object_id)

    row, col = click_to_cell(x, y)
    target_id = view.targets[row][col]
    if target_id is None:
        return scene, state, feedback, InteractOutcome("no_target", intent, clicked=(row, col))
    target = scene.object_by_id(target_id)

    if intent == "ground":
        return scene, state, feedback, InteractOutcome(
            "applied", intent, target_id, clicked=(row, col)
        )

    if euclid(state.position, target.position) > INTERACT_RANGE:
        feedback = FeedbackEvent(too_far=True)
        return scene, state, feedback, InteractOutcome(
            "too_far", intent, target_id, clicked=(row, col)
        )

    if intent in ("open_access", "close_access"):
        if not target.openable:
            return scene, state, feedback, InteractOutcome(
                "incompatible", intent, target_id, clicked=(row, col)
            )
        target.is_open = intent == "open_access"
        return scene, state, feedback, InteractOutcome(
            "applied", intent, target_id, clicked=(row, col)
        )

    if intent in ("activate", "deactivate"):
        if not target.toggleable:
            return scene, state, feedback, InteractOutcome(
                "incompatible", intent, target_id, clicked=(row, col)
            )
        target.is_toggled = intent == "activate"
        return scene, state, feedback, InteractOutcome(
            "applied", intent, target_id, clicked=(row, col)
        )

    if intent == "pick":
        if not target.pickable or state.held is not None:
            return scene, state, feedback, InteractOutcome(
                "incompatible", intent, target_id, clicked=(row, col)
            )
        if target.contained_in is not None:
            container = scene.object_by_id(target.contained_in)
            if container.openable and not container.is_open:
                return scene, state, feedback, InteractOutcome(
                    "incompatible", intent, target_id, clicked=(row, col)
                )
        target.position = None
        target.contained_in = None
        new_state = replace(state, held=target.object_id)
        return scene, new_state, feedback, InteractOutcome(
            "applied", intent, target_id, clicked=(row, col)
        )

    if intent == "place":
        if state.held is None or not target.receptacle:
            return scene, state, feedback, InteractOutcome(
                "incompatible", intent, target_id, clicked=(row, col)
            )
        held = scene.object_by_id(state.held)
        held.position = target.position
        held.contained_in = target.object_id
        held.elevation = target.elevation
        new_state = replace(state, held=None)
        return scene, new_state, feedback, InteractOutcome(
            "applied", intent, held.object_id, clicked=(row, col)
        )

    raise ValueError(f"unknown canonical intent: {intent}")


def reachable_cells(scene: GridScene, start: Cell) -> set[Cell]:
    """4-connected flood fill over passable cells."""
    if not scene.passable(start):
        return set()
    seen = {start}
    frontier = [start]
    while frontier:
        x, y = frontier.pop()
        for nxt in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if nxt not in seen and scene.passable(nxt):
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def can_reach_within(scene: GridScene, start: Cell, target: Cell, radius: float) -> bool:
    """True iff some passable cell within ``radius`` of target is reachable."""
    return any(euclid(c, target) <= radius for c in reachable_cells(scene, start))
