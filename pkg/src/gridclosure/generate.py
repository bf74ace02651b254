"""Procedural episode generation, validation, and frozen-pack assembly.

Templates draw every choice from a single seeded RNG, so (family, seed)
maps to a byte-identical episode. Generation guarantees the family
visibility flag, non-pre-satisfied goals, SM multi-object bindings, and
the CR blocked-path precondition; validation re-checks all of it
independently and additionally requires the scripted oracle to solve the
episode within budget.
"""

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .canon import canon_bytes, derive_seed, sha256_hex
from .episodes import (
    FAMILIES,
    FAMILY_SPECS,
    GOAL_COMPLETION_FAMILIES,
    NEAR_SEMANTIC,
    EpisodeEvaluator,
    EpisodeSpec,
    SuccessSpec,
)
from .world import (
    AgentState,
    GridScene,
    SceneObject,
    euclid,
    reachable_cells,
    render_view,
    visible_cells,
)

MAX_ATTEMPTS = 64


@dataclass(frozen=True)
class CategoryTraits:
    toggleable: bool = False
    openable: bool = False
    pickable: bool = False
    receptacle: bool = False
    blocking: bool = False
    elevation: str = "mid"


CATALOG = {
    # toggleables
    "lamp": CategoryTraits(toggleable=True),
    "television": CategoryTraits(toggleable=True, blocking=True),
    "fan": CategoryTraits(toggleable=True),
    "radio": CategoryTraits(toggleable=True),
    "heater": CategoryTraits(toggleable=True, elevation="low"),
    "wall_switch": CategoryTraits(toggleable=True, elevation="high"),
    # openable receptacles
    "fridge": CategoryTraits(openable=True, receptacle=True, blocking=True),
    "cabinet": CategoryTraits(openable=True, receptacle=True, blocking=True),
    "microwave": CategoryTraits(openable=True, receptacle=True),
    "toybox": CategoryTraits(openable=True, receptacle=True, elevation="low"),
    # pickable smalls
    "apple": CategoryTraits(pickable=True, elevation="low"),
    "egg": CategoryTraits(pickable=True, elevation="low"),
    "watch": CategoryTraits(pickable=True, elevation="low"),
    "mug": CategoryTraits(pickable=True),
    "book": CategoryTraits(pickable=True),
    "pen": CategoryTraits(pickable=True),
    # movable obstacle
    "crate": CategoryTraits(pickable=True, blocking=True),
    # distractors
    "plant": CategoryTraits(blocking=True),
    "sofa": CategoryTraits(blocking=True),
    "chair": CategoryTraits(blocking=True),
}

TOGGLEABLES = ("lamp", "television", "fan", "radio")
OPENABLES = ("fridge", "cabinet", "microwave")
MID_PICKABLES = ("mug", "book", "pen")
SMALLS = ("apple", "egg", "watch", "mug", "book", "pen")
DISTRACTOR_BLOCKING = ("plant", "sofa", "chair")
SV_CATEGORIES = ("lamp", "fan", "radio", "heater", "wall_switch", "fridge", "cabinet", "microwave", "toybox")
INTERACT_TARGETS = ("lamp", "fan", "radio", "fridge", "cabinet", "microwave")

ELEVATION_PITCH = {"low": -30, "mid": 0, "high": 30}


class GenerationError(Exception):
    """Raised when a template cannot satisfy its constraints within bounds."""

    def __init__(self, family: str, seed: int, constraint: str):
        self.family = family
        self.seed = seed
        self.constraint = constraint
        super().__init__(f"generation failed for {family} seed {seed}: {constraint}")


class _Retry(Exception):
    def __init__(self, constraint: str):
        self.constraint = constraint


def make_object(object_id: str, category: str, position, *, elevation=None,
                is_toggled=False, is_open=False, contained_in=None) -> SceneObject:
    traits = CATALOG[category]
    return SceneObject(
        object_id=object_id,
        category=category,
        position=position,
        elevation=elevation or traits.elevation,
        toggleable=traits.toggleable,
        is_toggled=is_toggled,
        openable=traits.openable,
        is_open=is_open,
        pickable=traits.pickable,
        receptacle=traits.receptacle,
        blocking=traits.blocking,
        contained_in=contained_in,
    )


def _empty_room(rng: random.Random, scene_id: str) -> GridScene:
    width = rng.randint(10, 13)
    height = rng.randint(10, 13)
    walls = set()
    for x in range(width):
        walls.add((x, 0))
        walls.add((x, height - 1))
    for y in range(height):
        walls.add((0, y))
        walls.add((width - 1, y))
    return GridScene(
        scene_id=scene_id,
        width=width,
        height=height,
        walls=walls,
        objects=[],
        agent_start=AgentState(position=(1, 1)),
    )


def _floor_cells(scene: GridScene) -> list:
    occupied = {o.position for o in scene.objects if o.position is not None}
    return [
        (x, y)
        for x in range(1, scene.width - 1)
        for y in range(1, scene.height - 1)
        if (x, y) not in scene.walls and (x, y) not in occupied
    ]


def _place(rng: random.Random, scene: GridScene, exclude=()) -> tuple:
    cells = [c for c in _floor_cells(scene) if c not in exclude]
    if not cells:
        raise _Retry("no_free_cell")
    return rng.choice(cells)


def _add_distractors(rng: random.Random, scene: GridScene, forbidden_categories,
                     forbidden_cells=()):
    """Sprinkle small and blocking clutter away from load-bearing cells."""
    smalls = [c for c in SMALLS if c not in forbidden_categories]
    n_small = rng.randint(1, 3)
    for i in range(n_small):
        category = rng.choice(smalls)
        cell = _place(rng, scene, exclude=tuple(forbidden_cells) + (scene.agent_start.position,))
        scene.objects.append(make_object(f"distractor_{i}", category, cell))
    if rng.random() < 0.5:
        category = rng.choice([c for c in DISTRACTOR_BLOCKING if c not in forbidden_categories])
        cell = _place(rng, scene, exclude=tuple(forbidden_cells) + (scene.agent_start.position,))
        scene.objects.append(make_object("distractor_b", category, cell))


def _start_view(spec_scene: GridScene):
    return render_view(spec_scene, spec_scene.agent_start)


def _rendered_at_start(scene: GridScene, object_id: str) -> bool:
    return _start_view(scene).rendered_cell_of(object_id) is not None


def _reach_near(scene: GridScene, start, target_cell) -> bool:
    return any(euclid(c, target_cell) < NEAR_SEMANTIC for c in reachable_cells(scene, start))


def _random_pose(rng: random.Random, scene: GridScene, pitch: int = 0) -> AgentState:
    cell = _place(rng, scene)
    heading = rng.choice((0, 90, 180, 270))
    return AgentState(position=cell, heading=heading, pitch=pitch)


def _pick_phrase(rng: random.Random, options) -> str:
    return rng.choice(options)


INTENT_PHRASES = {
    "activate": ("turn on the {c}", "switch on the {c}"),
    "deactivate": ("turn off the {c}", "switch off the {c}"),
    "open_access": ("open the {c}",),
    "close_access": ("close the {c}",),
    "pick": ("pick up the {c}", "take the {c}"),
}


# ---------------------------------------------------------------------------
# family templates
# ---------------------------------------------------------------------------

def _build_pg(rng: random.Random, scene_id: str):
    scene = _empty_room(rng, scene_id)
    category = rng.choice(TOGGLEABLES + OPENABLES + MID_PICKABLES)
    target_cell = _place(rng, scene)
    target = make_object("target", category, target_cell)
    scene.objects.append(target)
    scene.agent_start = _random_pose(rng, scene)
    _add_distractors(rng, scene, {category}, [target_cell])
    if not _rendered_at_start(scene, "target"):
        raise _Retry("target_not_rendered")
    if not _reach_near(scene, scene.agent_start.position, target_cell):
        raise _Retry("target_not_reachable")
    instruction = _pick_phrase(rng, (
        f"Point at the {category}.",
        f"Click on the {category}.",
        f"Locate the {category} in view.",
    ))
    return scene, SuccessSpec(kind="target_grounded", target_id="target"), instruction


def _build_da(rng: random.Random, scene_id: str):
    scene = _empty_room(rng, scene_id)
    category = rng.choice(TOGGLEABLES + OPENABLES)
    target_cell = _place(rng, scene)
    target = make_object("target", category, target_cell)
    scene.objects.append(target)
    scene.agent_start = _random_pose(rng, scene)
    d0 = euclid(scene.agent_start.position, target_cell)
    if not 3.0 <= d0 <= 6.0:
        raise _Retry("start_distance_out_of_range")
    _add_distractors(rng, scene, {category}, [target_cell])
    if not _rendered_at_start(scene, "target"):
        raise _Retry("target_not_rendered")
    if not _reach_near(scene, scene.agent_start.position, target_cell):
        raise _Retry("target_not_reachable")
    instruction = _pick_phrase(rng, (
        f"Walk over to the {category}.",
        f"Go to the {category}.",
        f"Approach the {category}.",
    ))
    return scene, SuccessSpec(kind="agent_near_target", target_id="target"), instruction


def _build_vs(rng: random.Random, scene_id: str):
    scene = _empty_room(rng, scene_id)
    category = rng.choice(SV_CATEGORIES)
    target_cell = _place(rng, scene)
    target = make_object("target", category, target_cell)
    scene.objects.append(target)
    scene.agent_start = _random_pose(rng, scene)
    _add_distractors(rng, scene, {category}, [target_cell])
    if target_cell in visible_cells(scene, scene.agent_start):
        raise _Retry("target_visible_at_start")
    instruction = _pick_phrase(rng, (
        f"Find the {category}.",
        f"Search the room for the {category}.",
        f"Look around until you can see the {category}.",
    ))
    return scene, SuccessSpec(kind="object_visible_latched", target_id="target"), instruction


def _build_sv(rng: random.Random, scene_id: str):
    scene = _empty_room(rng, scene_id)
    category = rng.choice(SV_CATEGORIES)
    traits = CATALOG[category]
    target_cell = _place(rng, scene)
    if traits.toggleable:
        state = rng.random() < 0.5
        target = make_object("target", category, target_cell, is_toggled=state)
        expected = "on" if state else "off"
        question = _pick_phrase(rng, (
            f"Report whether the {category} is on or off.",
            f"Check the {category} and report its on/off state.",
        ))
    else:
        state = rng.random() < 0.5
        target = make_object("target", category, target_cell, is_open=state)
        expected = "open" if state else "closed"
        question = _pick_phrase(rng, (
            f"Report whether the {category} is open or closed.",
            f"Check the {category} and report its open/closed state.",
        ))
    scene.objects.append(target)
    # Start pitch matches the target band so the queried state is readable
    # from the initial frame; wandering pitch away loses observability.
    scene.agent_start = _random_pose(rng, scene, pitch=ELEVATION_PITCH[target.elevation])
    _add_distractors(rng, scene, {category}, [target_cell])
    if not _rendered_at_start(scene, "target"):
        raise _Retry("target_not_rendered")
    success = SuccessSpec(kind="report_status", target_id="target", expected_label=expected)
    return scene, success, question


def _interaction_setup(rng: random.Random, category: str):
    """Pick an intent compatible with the category plus the initial state and
    expected end label that make the goal unsatisfied at the start."""
    traits = CATALOG[category]
    if traits.toggleable:
        intent = rng.choice(("activate", "deactivate"))
        start_toggled = intent == "deactivate"
        expected = "on" if intent == "activate" else "off"
        return intent, {"is_toggled": start_toggled}, expected
    intent = rng.choice(("open_access", "close_access"))
    start_open = intent == "close_access"
    expected = "open" if intent == "open_access" else "closed"
    return intent, {"is_open": start_open}, expected


def _build_ai(rng: random.Random, scene_id: str, visible: bool = True):
    scene = _empty_room(rng, scene_id)
    use_pick = rng.random() < 0.3
    if use_pick:
        category = rng.choice(MID_PICKABLES)
        target_cell = _place(rng, scene)
        target = make_object("target", category, target_cell)
        scene.objects.append(target)
        success = SuccessSpec(kind="object_held", target_id="target")
        phrase = _pick_phrase(rng, INTENT_PHRASES["pick"]).format(c=category)
    else:
        category = rng.choice(INTERACT_TARGETS)
        intent, start_state, expected = _interaction_setup(rng, category)
        target_cell = _place(rng, scene)
        target = make_object("target", category, target_cell, **start_state)
        scene.objects.append(target)
        success = SuccessSpec(kind="object_state", target_id="target", expected_label=expected)
        phrase = _pick_phrase(rng, INTENT_PHRASES[intent]).format(c=category)
    scene.agent_start = _random_pose(rng, scene)
    _add_distractors(rng, scene, {category}, [target_cell])
    if visible:
        if not _rendered_at_start(scene, "target"):
            raise _Retry("target_not_rendered")
        instruction = phrase[0].upper() + phrase[1:] + "."
    else:
        if target_cell in visible_cells(scene, scene.agent_start):
            raise _Retry("target_visible_at_start")
        instruction = f"Find the {category} and {phrase}."
    if not _reach_near(scene, scene.agent_start.position, target_cell):
        raise _Retry("target_not_reachable")
    return scene, success, instruction


def _build_si(rng: random.Random, scene_id: str):
    return _build_ai(rng, scene_id, visible=False)


def _build_sm(rng: random.Random, scene_id: str):
    scene = _empty_room(rng, scene_id)
    template = rng.choice(("reveal_pick", "put_into", "rearrange", "open_pick_place"))
    item_cat = rng.choice(MID_PICKABLES)
    recep_cats = list(OPENABLES)
    rng.shuffle(recep_cats)

    if template == "reveal_pick":
        a_cat = recep_cats[0]
        a_cell = _place(rng, scene)
        container = make_object("recep_a", a_cat, a_cell)
        item = make_object("item", item_cat, a_cell, elevation=container.elevation,
                           contained_in="recep_a")
        scene.objects.extend([container, item])
        chain = [
            {"kind": "object_state", "target_id": "recep_a", "expected_label": "open",
             "receptacle_id": None},
            {"kind": "object_held", "target_id": "item", "expected_label": None,
             "receptacle_id": None},
        ]
        anchor = "recep_a"
        instruction = f"Open the {a_cat} and take the {item_cat} from it."
        load_cells = [a_cell]
    elif template == "put_into":
        b_cat = recep_cats[0]
        item_cell = _place(rng, scene)
        item = make_object("item", item_cat, item_cell)
        b_cell = _place(rng, scene, exclude=(item_cell,))
        recep = make_object("recep_b", b_cat, b_cell)
        scene.objects.extend([item, recep])
        chain = [
            {"kind": "object_held", "target_id": "item", "expected_label": None,
             "receptacle_id": None},
            {"kind": "object_at_receptacle", "target_id": "item", "expected_label": None,
             "receptacle_id": "recep_b"},
        ]
        anchor = "item"
        instruction = f"Put the {item_cat} into the {b_cat}."
        load_cells = [item_cell, b_cell]
    elif template == "rearrange":
        a_cat, b_cat = recep_cats[0], recep_cats[1]
        a_cell = _place(rng, scene)
        container = make_object("recep_a", a_cat, a_cell, is_open=True)
        item = make_object("item", item_cat, a_cell, elevation=container.elevation,
                           contained_in="recep_a")
        b_cell = _place(rng, scene, exclude=(a_cell,))
        recep = make_object("recep_b", b_cat, b_cell)
        scene.objects.extend([container, item, recep])
        chain = [
            {"kind": "object_held", "target_id": "item", "expected_label": None,
             "receptacle_id": None},
            {"kind": "object_at_receptacle", "target_id": "item", "expected_label": None,
             "receptacle_id": "recep_b"},
        ]
        anchor = "item"
        instruction = f"Move the {item_cat} from the {a_cat} to the {b_cat}."
        load_cells = [a_cell, b_cell]
    else:  # open_pick_place
        a_cat, b_cat = recep_cats[0], recep_cats[1]
        a_cell = _place(rng, scene)
        container = make_object("recep_a", a_cat, a_cell)
        item = make_object("item", item_cat, a_cell, elevation=container.elevation,
                           contained_in="recep_a")
        b_cell = _place(rng, scene, exclude=(a_cell,))
        recep = make_object("recep_b", b_cat, b_cell)
        scene.objects.extend([container, item, recep])
        chain = [
            {"kind": "object_state", "target_id": "recep_a", "expected_label": "open",
             "receptacle_id": None},
            {"kind": "object_held", "target_id": "item", "expected_label": None,
             "receptacle_id": None},
            {"kind": "object_at_receptacle", "target_id": "item", "expected_label": None,
             "receptacle_id": "recep_b"},
        ]
        anchor = "recep_a"
        instruction = f"Open the {a_cat}, take the {item_cat}, and put it into the {b_cat}."
        load_cells = [a_cell, b_cell]

    scene.agent_start = _random_pose(rng, scene)
    used = {o.category for o in scene.objects}
    _add_distractors(rng, scene, used, load_cells)
    if not _rendered_at_start(scene, anchor):
        raise _Retry("anchor_not_rendered")
    for cell in load_cells:
        if not _reach_near(scene, scene.agent_start.position, cell):
            raise _Retry("stage_not_reachable")
    success = SuccessSpec(kind="ordered_chain", target_id=anchor, chain=chain)
    return scene, success, instruction


# CR pocket template, local offsets relative to the target for a pocket that
# opens south; _rotate maps them onto the chosen orientation.
_CR_WALLS = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (1, 1))
_CR_POCKET = (0, 1)
_CR_MOUTH = (0, 2)
_CR_HEADINGS = {0: 0, 1: 90, 2: 180, 3: 270}


def _rotate(offset, k):
    dx, dy = offset
    for _ in range(k):
        dx, dy = -dy, dx
    return dx, dy


def _build_cr(rng: random.Random, scene_id: str):
    scene = _empty_room(rng, scene_id)
    k = rng.randrange(4)
    side = rng.choice((-1, 1))
    tx = rng.randint(4, scene.width - 5)
    ty = rng.randint(4, scene.height - 5)

    def cell_at(offset):
        dx, dy = _rotate(offset, k)
        return (tx + dx, ty + dy)

    wall_cells = [cell_at(o) for o in _CR_WALLS]
    pocket = cell_at(_CR_POCKET)
    mouth = cell_at(_CR_MOUTH)
    agent_cell = cell_at((side, 3))
    layout = wall_cells + [pocket, mouth, agent_cell, (tx, ty)]
    if any(not scene.in_bounds(c) or c in scene.walls for c in layout):
        raise _Retry("pocket_out_of_bounds")
    scene.walls.update(wall_cells)

    category = rng.choice(INTERACT_TARGETS)
    intent, start_state, expected = _interaction_setup(rng, category)
    target = make_object("target", category, (tx, ty), **start_state)
    crate = make_object("obstacle", "crate", mouth)
    scene.objects.extend([target, crate])
    scene.agent_start = AgentState(position=agent_cell, heading=_CR_HEADINGS[k])
    _add_distractors(rng, scene, {category, "crate"}, [pocket, mouth, (tx, ty), agent_cell])

    if not _rendered_at_start(scene, "target"):
        raise _Retry("target_not_rendered")
    if not _rendered_at_start(scene, "obstacle"):
        raise _Retry("obstacle_not_rendered")
    if _reach_near(scene, agent_cell, (tx, ty)):
        raise _Retry("constraint_not_binding")
    # removing the obstacle must open a path
    probe = scene.clone()
    probe.object_by_id("obstacle").position = None
    if not _reach_near(probe, agent_cell, (tx, ty)):
        raise _Retry("unsolvable_after_resolution")

    goal = {"kind": "object_state", "target_id": "target", "expected_label": expected,
            "receptacle_id": None}
    success = SuccessSpec(kind="constrained_goal", target_id="target",
                          obstacle_id="obstacle", goal=goal)
    phrase = _pick_phrase(rng, INTENT_PHRASES[intent]).format(c=category)
    instruction = f"The crate is blocking the way. Move it aside and {phrase}."
    return scene, success, instruction


_BUILDERS = {
    "pg": _build_pg,
    "da": _build_da,
    "vs": _build_vs,
    "sv": _build_sv,
    "ai": _build_ai,
    "si": _build_si,
    "sm": _build_sm,
    "cr": _build_cr,
}


def generate_episode(family: str, seed: int, episode_id: Optional[str] = None) -> EpisodeSpec:
    """Deterministically build one episode for (family, seed)."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family: {family}")
    rng = random.Random(seed)
    fam = FAMILY_SPECS[family]
    last = "exhausted_attempts"
    for attempt in range(MAX_ATTEMPTS):
        scene_id = f"{family}-s{seed}-a{attempt}"
        try:
            scene, success, instruction = _BUILDERS[family](rng, scene_id)
        except _Retry as retry:
            last = retry.constraint
            continue
        spec = EpisodeSpec(
            episode_id=episode_id or f"{family}-seed{seed}",
            family=family,
            instruction=instruction,
            scene=scene,
            success=success,
            step_budget=fam.step_budget,
            invalid_limit=fam.invalid_limit,
            seed=seed,
        )
        quick = check_episode(spec, solvability=False)
        if quick:
            last = ",".join(quick)
            continue
        return spec
    raise GenerationError(family, seed, last)


def check_episode(spec: EpisodeSpec, solvability: bool = True) -> list[str]:
    """Independent re-check of every generator guarantee.

    Returns the violation list (empty means valid). With ``solvability``
    the scripted oracle must finish the episode with benchmark success
    inside the family budget.
    """
    violations = list(spec.scene.validate())
    fam = FAMILY_SPECS.get(spec.family)
    if fam is None:
        return violations + ["unknown_family"]
    if spec.step_budget != fam.step_budget or spec.invalid_limit != fam.invalid_limit:
        violations.append("budget_mismatch")

    scene = spec.scene
    start = scene.agent_start
    success = spec.success

    anchor = success.target_id
    view = render_view(scene, start)
    if fam.target_visible_at_start:
        if anchor is None or view.rendered_cell_of(anchor) is None:
            violations.append("target_not_rendered_at_start")
    else:
        target = scene.object_by_id(anchor)
        if target.position in visible_cells(scene, start):
            violations.append("target_visible_at_start")

    if spec.family in GOAL_COMPLETION_FAMILIES:
        evaluator = EpisodeEvaluator(spec, scene, start, view)
        if evaluator.step0.w:
            violations.append("pre_satisfied")

    if success.kind == "report_status" and success.expected_label is None:
        violations.append("missing_expected_label")
    if success.kind == "ordered_chain":
        if not success.chain or len(success.chain) < 2:
            violations.append("chain_too_short")
        else:
            for sub in success.chain:
                try:
                    obj = scene.object_by_id(sub["target_id"])
                except KeyError:
                    violations.append("chain_target_missing")
                    continue
                if sub["kind"] == "object_held" and not obj.pickable:
                    violations.append("chain_target_not_pickable")
                if sub["kind"] == "object_at_receptacle":
                    try:
                        recep = scene.object_by_id(sub["receptacle_id"])
                    except KeyError:
                        violations.append("chain_receptacle_missing")
                        continue
                    if not recep.receptacle:
                        violations.append("chain_receptacle_invalid")
    if success.kind == "constrained_goal":
        target = scene.object_by_id(success.target_id)
        if _reach_near(scene, start.position, target.position):
            violations.append("constraint_not_binding")
        else:
            obstacle = scene.object_by_id(success.obstacle_id)
            if not (obstacle.pickable and obstacle.blocking):
                violations.append("obstacle_not_movable")
            probe = scene.clone()
            probe.object_by_id(success.obstacle_id).position = None
            if not _reach_near(probe, start.position, target.position):
                violations.append("unsolvable_after_resolution")

    if violations or not solvability:
        return violations

    from .agents import PolicyConfig, run_policy  # noqa: PLC0415 (cycle guard)

    try:
        trace = run_policy(spec, PolicyConfig(policy="oracle", seed=spec.seed))
    except Exception as exc:  # planning failure means unsolvable
        return [f"oracle_error:{type(exc).__name__}"]
    if not trace.settlement.b:
        violations.append("oracle_cannot_close")
    return violations


def validate_episode(spec: EpisodeSpec) -> tuple[bool, list[str]]:
    violations = check_episode(spec, solvability=True)
    return (not violations), violations


# ---------------------------------------------------------------------------
# pack assembly
# ---------------------------------------------------------------------------

@dataclass
class PackManifest:
    pack_name: str
    base_seed: int
    families: dict
    episode_ids: list
    content_hash: str

    def to_dict(self) -> dict:
        return {
            "pack_name": self.pack_name,
            "base_seed": self.base_seed,
            "families": self.families,
            "episode_ids": self.episode_ids,
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PackManifest":
        return cls(
            pack_name=d["pack_name"],
            base_seed=d["base_seed"],
            families=d["families"],
            episode_ids=d["episode_ids"],
            content_hash=d["content_hash"],
        )


def build_pack(families, per_family_count: int, base_seed: int,
               pack_name: str = "pack", validate: bool = True):
    """Generate, validate, and freeze a balanced episode set.

    Returns (manifest, episodes) with episodes sorted by id. The content
    hash covers every episode's canonical bytes in id order.
    """
    if per_family_count < 1:
        raise ValueError("per_family_count must be >= 1")
    episodes = []
    for family in families:
        if family not in FAMILIES:
            raise ValueError(f"unknown family: {family}")
        for index in range(per_family_count):
            spec = None
            reasons: list[str] = []
            for attempt in range(MAX_ATTEMPTS):
                seed = derive_seed(base_seed, family, index, attempt)
                episode_id = f"{family}-{index:04d}"
                candidate = generate_episode(family, seed, episode_id=episode_id)
                if not validate:
                    spec = candidate
                    break
                ok, reasons = validate_episode(candidate)
                if ok:
                    spec = candidate
                    break
            if spec is None:
                raise GenerationError(
                    family, derive_seed(base_seed, family, index, 0),
                    f"validation kept failing: {reasons}"
                )
            episodes.append(spec)
    episodes.sort(key=lambda e: e.episode_id)
    payload = b"".join(canon_bytes(e.to_dict()) for e in episodes)
    manifest = PackManifest(
        pack_name=pack_name,
        base_seed=base_seed,
        families={f: per_family_count for f in families},
        episode_ids=[e.episode_id for e in episodes],
        content_hash=sha256_hex(payload),
    )
    return manifest, episodes


def write_pack(out_dir, manifest: PackManifest, episodes) -> None:
    out = Path(out_dir)
    (out / "episodes").mkdir(parents=True, exist_ok=True)
    for spec in episodes:
        (out / "episodes" / f"{spec.episode_id}.json").write_bytes(
            canon_bytes(spec.to_dict())
        )
    (out / "manifest.json").write_bytes(canon_bytes(manifest.to_dict()))


def load_pack(pack_dir, verify: bool = True):
    """Load a frozen pack; with ``verify`` the content hash must match."""
    import json

    pack = Path(pack_dir)
    manifest = PackManifest.from_dict(json.loads((pack / "manifest.json").read_text()))
    raws = [
        (pack / "episodes" / f"{episode_id}.json").read_bytes()
        for episode_id in manifest.episode_ids
    ]
    if verify and sha256_hex(b"".join(raws)) != manifest.content_hash:
        raise ValueError(f"pack content hash mismatch for {pack_dir}")
    return manifest, [EpisodeSpec.from_dict(json.loads(raw)) for raw in raws]
