"""World geometry and physics tests.

The visibility oracle here is an independent brute-force check: it
enumerates every cell of the scene and walks every intermediate ray cell,
with the ray computed by exact rational midpoint sampling instead of the
integer error-accumulation form used by the package.
"""

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridclosure.world import (
    AgentState,
    FeedbackEvent,
    GridScene,
    SceneObject,
    apply_interact,
    apply_look,
    apply_navigate,
    bresenham_line,
    cell_to_click,
    click_to_cell,
    quantize_positive,
    render_frame,
    render_view,
    visible_cells,
)


def rational_line(a, b):
    """Exact midpoint discretization; ties round toward the minor travel
    direction (the package's documented convention)."""
    (x0, y0), (x1, y1) = a, b
    dx, dy = x1 - x0, y1 - y0
    if dx == 0 and dy == 0:
        return [a]
    if abs(dx) >= abs(dy):
        n, s_major = abs(dx), (1 if dx > 0 else -1)
        s_minor = 1 if dy >= 0 else -1
        return [
            (x0 + s_major * k, y0 + s_minor * int(Fraction(k * abs(dy), n) + Fraction(1, 2)))
            for k in range(n + 1)
        ]
    n, s_major = abs(dy), (1 if dy > 0 else -1)
    s_minor = 1 if dx >= 0 else -1
    return [
        (x0 + s_minor * int(Fraction(k * abs(dx), n) + Fraction(1, 2)), y0 + s_major * k)
        for k in range(n + 1)
    ]


def brute_force_visible(scene, pose):
    """Enumerate every cell; check range, cone, and every intermediate ray
    cell explicitly."""
    out = set()
    px, py = pose.position
    heading = pose.heading
    fw = {0: (0, -1), 90: (1, 0), 180: (0, 1), 270: (-1, 0)}[heading]
    rt = {0: (1, 0), 90: (0, 1), 180: (-1, 0), 270: (0, -1)}[heading]
    occluders = scene.walls | scene.blocking_cells()
    for x in range(scene.width):
        for y in range(scene.height):
            dx, dy = x - px, y - py
            if dx * dx + dy * dy > 36:
                continue
            f = dx * fw[0] + dy * fw[1]
            l = dx * rt[0] + dy * rt[1]
            if f < 0 or abs(l) > f:
                continue
            ray = rational_line((px, py), (x, y))
            if any(c in occluders for c in ray[1:-1]):
                continue
            out.add((x, y))
    return out


def empty_scene(width=11, height=11, scene_id="test"):
    walls = {(x, 0) for x in range(width)} | {(x, height - 1) for x in range(width)}
    walls |= {(0, y) for y in range(height)} | {(width - 1, y) for y in range(height)}
    return GridScene(
        scene_id=scene_id,
        width=width,
        height=height,
        walls=walls,
        objects=[],
        agent_start=AgentState(position=(5, 5)),
    )


def lamp(object_id="lamp1", position=(5, 3), elevation="mid", on=False):
    return SceneObject(
        object_id=object_id, category="lamp", position=position,
        elevation=elevation, toggleable=True, is_toggled=on,
    )


def test_line_convention_pinned_exhaustively():
    # the integer form and the rational form must agree on every pair,
    # including exact half-point ties
    for x in range(-8, 9):
        for y in range(-8, 9):
            for start in ((0, 0), (3, -2), (-1, 4)):
                end = (start[0] + x, start[1] + y)
                assert bresenham_line(start, end) == rational_line(start, end)


def test_visible_on_axis_unobstructed():
    scene = empty_scene()
    pose = AgentState(position=(5, 5), heading=0)
    assert (5, 1) in visible_cells(scene, pose)


def test_wall_on_ray_occludes():
    scene = empty_scene()
    scene.walls.add((5, 3))
    pose = AgentState(position=(5, 5), heading=0)
    vis = visible_cells(scene, pose)
    assert (5, 1) not in vis
    assert (5, 3) in vis  # the occluder itself is visible


def test_blocking_object_occludes_but_is_visible():
    scene = empty_scene()
    scene.objects.append(
        SceneObject(object_id="f", category="fridge", position=(5, 3), blocking=True)
    )
    pose = AgentState(position=(5, 5), heading=0)
    vis = visible_cells(scene, pose)
    assert (5, 3) in vis
    assert (5, 2) not in vis


def test_own_cell_visible_and_range_limit():
    scene = empty_scene(15, 15)
    pose = AgentState(position=(7, 13), heading=0)
    vis = visible_cells(scene, pose)
    assert (7, 13) in vis
    assert (7, 7) in vis  # distance 6.0 exactly, inclusive
    assert (7, 6) not in vis  # distance 7


def random_scene(rng, width=15, height=15):
    scene = empty_scene(width, height, scene_id=f"rand{rng.random()}")
    for _ in range(rng.randint(4, 14)):
        cell = (rng.randint(1, width - 2), rng.randint(1, height - 2))
        scene.walls.add(cell)
    for i in range(rng.randint(0, 4)):
        cell = (rng.randint(1, width - 2), rng.randint(1, height - 2))
        if cell not in scene.walls:
            scene.objects.append(
                SceneObject(object_id=f"b{i}", category="sofa", position=cell, blocking=True)
            )
    while True:
        start = (rng.randint(1, width - 2), rng.randint(1, height - 2))
        if start not in scene.walls and start not in scene.blocking_cells():
            break
    scene.agent_start = AgentState(
        position=start, heading=rng.choice((0, 90, 180, 270))
    )
    return scene


@pytest.mark.parametrize("block", range(4))
def test_visibility_matches_brute_force_on_random_scenes(block):
    # 4 x 60 = 240 random scenes overall
    rng = random.Random(1234 + block)
    for _ in range(60):
        scene = random_scene(rng)
        pose = scene.agent_start
        assert visible_cells(scene, pose) == brute_force_visible(scene, pose)


class TestNavigate:
    def test_forward_clear_path(self):
        scene = empty_scene()
        state = AgentState(position=(5, 5), heading=0)
        new, event = apply_navigate(scene, state, "forward", 3)
        assert new.position == (5, 2)
        assert not event.path_blocked

    def test_forward_stops_at_wall_and_flags(self):
        scene = empty_scene()
        scene.walls.add((5, 3))
        state = AgentState(position=(5, 5), heading=0)
        new, event = apply_navigate(scene, state, "forward", 3)
        assert new.position == (5, 4)
        assert event.path_blocked

    def test_backward_moves_against_heading(self):
        scene = empty_scene()
        state = AgentState(position=(5, 5), heading=0)
        new, event = apply_navigate(scene, state, "backward", 2)
        assert new.position == (5, 7)

    def test_turn_quantizes_to_nearest_multiple(self):
        scene = empty_scene()
        state = AgentState(position=(5, 5), heading=0)
        new, _ = apply_navigate(scene, state, "turn_left", 100)
        assert new.heading == 270
        new, _ = apply_navigate(scene, state, "turn_right", 100)
        assert new.heading == 90
        new, _ = apply_navigate(scene, state, "turn_right", 170)
        assert new.heading == 180

    def test_turn_minimum_one_unit(self):
        scene = empty_scene()
        state = AgentState(position=(5, 5), heading=0)
        new, _ = apply_navigate(scene, state, "turn_right", 10)
        assert new.heading == 90

    def test_fractional_forward_floors(self):
        scene = empty_scene()
        state = AgentState(position=(5, 5), heading=0)
        new, event = apply_navigate(scene, state, "forward", 0.9)
        assert new.position == (5, 5)
        assert not event.path_blocked

    def test_huge_magnitude_stops_at_boundary(self):
        scene = empty_scene()
        state = AgentState(position=(5, 5), heading=0)
        new, event = apply_navigate(scene, state, "forward", 1e9)
        assert new.position == (5, 1)
        assert event.path_blocked

    def test_never_enters_wall_or_blocker(self):
        rng = random.Random(99)
        for _ in range(50):
            scene = random_scene(rng)
            state = scene.agent_start
            for _ in range(20):
                mode = rng.choice(("forward", "backward", "turn_left", "turn_right"))
                state, _ = apply_navigate(scene, state, mode, rng.randint(1, 4))
                assert scene.passable(state.position)


class TestLook:
    def test_up_from_level(self):
        state = AgentState(position=(5, 5), pitch=0)
        assert apply_look(state, "up", 30).pitch == 30

    def test_clamps_at_limit(self):
        state = AgentState(position=(5, 5), pitch=30)
        assert apply_look(state, "up", 30).pitch == 30

    def test_quantize_then_clamp(self):
        state = AgentState(position=(5, 5), pitch=0)
        assert apply_look(state, "down", 45).pitch == -30

    def test_quantize_positive_minimum(self):
        assert quantize_positive(10, 30) == 30
        assert quantize_positive(44, 30) == 30
        assert quantize_positive(46, 30) == 60

    @given(st.floats(min_value=0.01, max_value=10000), st.sampled_from((30, 90)))
    @settings(max_examples=200, deadline=None)
    def test_quantize_properties(self, magnitude, unit):
        q = quantize_positive(magnitude, unit)
        assert q >= unit
        assert q % unit == 0
        # nearest multiple: never off by more than half a unit, except when
        # the positive-minimum floor kicks in
        if magnitude >= unit / 2:
            assert abs(q - magnitude) <= unit / 2

    @given(st.integers(min_value=-180, max_value=540).map(lambda d: d % 360))
    @settings(max_examples=100, deadline=None)
    def test_pitch_always_in_enumerated_set(self, noise):
        state = AgentState(position=(5, 5), pitch=random.Random(noise).choice((-30, 0, 30)))
        rng = random.Random(noise)
        for _ in range(5):
            state = apply_look(state, rng.choice(("up", "down")), rng.uniform(1, 120))
            assert state.pitch in (-30, 0, 30)


class TestFrame:
    def test_object_two_ahead_lands_at_row4_col6(self):
        scene = empty_scene()
        scene.objects.append(lamp(position=(5, 3)))
        frame = render_frame(scene, AgentState(position=(5, 5), heading=0))
        report = frame.report_at(4, 6)  # depth band 2, centered
        assert report.kind == "object"
        assert report.category == "lamp"

    def test_pitch_gate_hides_object_as_floor(self):
        scene = empty_scene()
        scene.objects.append(lamp(position=(5, 3)))
        frame = render_frame(scene, AgentState(position=(5, 5), heading=0, pitch=30))
        assert frame.report_at(4, 6).kind == "floor"

    def test_toggled_lamp_reports_on(self):
        scene = empty_scene()
        scene.objects.append(lamp(position=(5, 3), on=True))
        frame = render_frame(scene, AgentState(position=(5, 5), heading=0))
        assert frame.report_at(4, 6).visual_state == "on"

    def test_walls_render_regardless_of_pitch(self):
        scene = empty_scene()
        scene.walls.add((5, 3))
        for pitch in (-30, 0, 30):
            frame = render_frame(scene, AgentState(position=(5, 5), heading=0, pitch=pitch))
            assert frame.report_at(4, 6).kind == "wall"

    def test_contained_hidden_until_open_then_wins_tie(self):
        scene = empty_scene()
        box = SceneObject(
            object_id="box", category="cabinet", position=(5, 3),
            openable=True, receptacle=True,
        )
        apple = SceneObject(
            object_id="apple", category="apple", position=(5, 3),
            pickable=True, contained_in="box",
        )
        scene.objects.extend([box, apple])
        pose = AgentState(position=(5, 5), heading=0)
        assert render_frame(scene, pose).report_at(4, 6).category == "cabinet"
        box.is_open = True
        assert render_frame(scene, pose).report_at(4, 6).category == "apple"

    def test_serialized_frame_never_leaks_ids_or_coordinates(self):
        rng = random.Random(7)
        forbidden = ("object_id", "position", "contained_in", "is_toggled", "is_open")
        for _ in range(20):
            scene = random_scene(rng)
            scene.objects.append(lamp(position=(7, 7)))
            blob = json.dumps(render_frame(scene, scene.agent_start).to_dict())
            for key in forbidden:
                assert key not in blob

    def test_render_is_deterministic(self):
        scene = empty_scene()
        scene.objects.append(lamp())
        pose = AgentState(position=(5, 5), heading=0)
        a = json.dumps(render_frame(scene, pose).to_dict())
        b = json.dumps(render_frame(scene, pose).to_dict())
        assert a == b


class TestInteract:
    def make(self):
        scene = empty_scene()
        scene.objects.append(lamp(position=(5, 3)))
        state = AgentState(position=(5, 5), heading=0)
        view = render_view(scene, state)
        return scene, state, view

    def test_click_mapping_center_bottom(self):
        assert click_to_cell(500, 900) == (5, 6)

    def test_click_mapping_extremes(self):
        assert click_to_cell(0, 0) == (0, 0)
        assert click_to_cell(1000, 1000) == (5, 12)

    def test_cell_to_click_round_trips(self):
        for row in range(6):
            for col in range(13):
                x, y = cell_to_click(row, col)
                assert click_to_cell(x, y) == (row, col)

    @given(st.integers(min_value=0, max_value=1000), st.integers(min_value=0, max_value=1000))
    @settings(max_examples=300, deadline=None)
    def test_click_mapping_total_and_in_bounds(self, x, y):
        row, col = click_to_cell(x, y)
        assert 0 <= row <= 5
        assert 0 <= col <= 12

    def test_activate_beyond_range_sets_too_far(self):
        scene, state, view = self.make()  # lamp at distance 2
        x, y = cell_to_click(4, 6)
        scene2, state2, event, outcome = apply_interact(scene, state, view, "activate", x, y)
        assert event.too_far
        assert outcome.result == "too_far"
        assert not scene2.object_by_id("lamp1").is_toggled

    def test_activate_within_range(self):
        scene = empty_scene()
        scene.objects.append(lamp(position=(5, 4)))
        state = AgentState(position=(5, 5), heading=0)
        view = render_view(scene, state)
        x, y = cell_to_click(5, 6)
        _, _, event, outcome = apply_interact(scene, state, view, "activate", x, y)
        assert outcome.result == "applied"
        assert not event.too_far
        assert scene.object_by_id("lamp1").is_toggled

    def test_pick_at_diagonal_distance_succeeds(self):
        scene = empty_scene()
        scene.objects.append(
            SceneObject(object_id="mug", category="mug", position=(6, 4), pickable=True)
        )
        state = AgentState(position=(5, 5), heading=0)
        view = render_view(scene, state)
        cell = view.rendered_cell_of("mug")
        x, y = cell_to_click(*cell)
        _, state2, event, outcome = apply_interact(scene, state, view, "pick", x, y)
        assert outcome.result == "applied"  # distance 1.414 <= 1.5
        assert state2.held == "mug"
        assert scene.object_by_id("mug").position is None

    def test_ground_is_distance_exempt_and_pure(self):
        scene, state, view = self.make()
        before = json.dumps(scene.to_dict()) + json.dumps(state.to_dict())
        x, y = cell_to_click(4, 6)
        scene2, state2, event, outcome = apply_interact(scene, state, view, "ground", x, y)
        assert outcome.result == "applied"
        assert outcome.target_id == "lamp1"
        assert not event.too_far
        after = json.dumps(scene2.to_dict()) + json.dumps(state2.to_dict())
        assert before == after

    def test_capability_mismatch_is_incompatible_not_invalid(self):
        scene = empty_scene()
        scene.objects.append(
            SceneObject(object_id="mug", category="mug", position=(5, 4), pickable=True)
        )
        state = AgentState(position=(5, 5), heading=0)
        view = render_view(scene, state)
        x, y = cell_to_click(5, 6)
        _, _, _, outcome = apply_interact(scene, state, view, "activate", x, y)
        assert outcome.result == "incompatible"

    def test_click_on_empty_cell_is_no_target(self):
        scene, state, view = self.make()
        x, y = cell_to_click(5, 5)
        _, _, _, outcome = apply_interact(scene, state, view, "ground", x, y)
        assert outcome.result == "no_target"

    def test_place_sets_containment_and_clears_hand(self):
        scene = empty_scene()
        fridge = SceneObject(
            object_id="fridge", category="fridge", position=(5, 4),
            openable=True, receptacle=True, blocking=True,
        )
        scene.objects.append(fridge)
        mug = SceneObject(object_id="mug", category="mug", position=None, pickable=True)
        scene.objects.append(mug)
        state = AgentState(position=(5, 5), heading=0, held="mug")
        view = render_view(scene, state)
        x, y = cell_to_click(5, 6)
        _, state2, _, outcome = apply_interact(scene, state, view, "place", x, y)
        assert outcome.result == "applied"
        assert state2.held is None
        assert mug.contained_in == "fridge"
        assert mug.position == (5, 4)

    def test_drop_ahead_when_free_else_own_cell(self):
        scene = empty_scene()
        mug = SceneObject(object_id="mug", category="mug", position=None, pickable=True)
        scene.objects.append(mug)
        state = AgentState(position=(5, 5), heading=0, held="mug")
        view = render_view(scene, state)
        _, state2, _, outcome = apply_interact(scene, state, view, "drop", None, None)
        assert outcome.result == "applied"
        assert mug.position == (5, 4)
        assert state2.held is None
        # blocked ahead: drops on own cell
        mug.position = None
        scene.walls.add((5, 3))
        state3 = AgentState(position=(5, 4), heading=0, held="mug")
        view3 = render_view(scene, state3)
        _, state4, _, _ = apply_interact(scene, state3, view3, "drop", None, None)
        assert mug.position == (5, 4)

    def test_contained_pick_requires_open_container(self):
        scene = empty_scene()
        box = SceneObject(
            object_id="box", category="microwave", position=(5, 4),
            openable=True, receptacle=True, is_open=True,
        )
        apple = SceneObject(
            object_id="apple", category="apple", position=(5, 4),
            pickable=True, contained_in="box", elevation="mid",
        )
        scene.objects.extend([box, apple])
        state = AgentState(position=(5, 5), heading=0)
        view = render_view(scene, state)
        cell = view.rendered_cell_of("apple")
        assert cell is not None  # open container reveals the content
        x, y = cell_to_click(*cell)
        _, state2, _, outcome = apply_interact(scene, state, view, "pick", x, y)
        assert outcome.result == "applied"
        assert state2.held == "apple"


def test_scene_roundtrip_and_clone_identity():
    rng = random.Random(5)
    scene = random_scene(rng)
    scene.objects.append(lamp(position=(7, 7), on=True))
    again = GridScene.from_dict(json.loads(json.dumps(scene.to_dict())))
    assert again.to_dict() == scene.to_dict()
    assert scene.clone().to_dict() == scene.to_dict()


def test_scene_validate_flags_violations():
    scene = empty_scene()
    scene.objects.append(lamp(position=(0, 0)))  # on a wall
    assert any("not_on_floor" in v for v in scene.validate())
    scene2 = empty_scene()
    scene2.objects.append(
        SceneObject(object_id="a", category="sofa", position=(4, 4), blocking=True)
    )
    scene2.objects.append(
        SceneObject(object_id="b", category="sofa", position=(4, 4), blocking=True)
    )
    assert any("blocking_overlap" in v for v in scene2.validate())
