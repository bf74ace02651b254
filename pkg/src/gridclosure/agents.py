"""Scripted verification policies.

The oracle plans with full hidden state (it is an evaluator-side
instrument, never exposed over the wire); drift shares its execution but
never closes; eager_reporter and honest_fail commit blindly on step one;
random samples valid actions; state_coupled executes like the oracle but
gates its terminal report on its own observation history and consumes
action feedback when the intervention exposes it.
"""

import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

from .canon import canon_dumps
from .engine import RunConfig, StepContext, run_episode
from .episodes import EpisodeSpec, _subgoal_holds
from .generate import ELEVATION_PITCH
from .settlement import Trace
from .world import (
    CANONICAL_INTENTS,
    INTERACT_RANGE,
    VISIBILITY_RANGE,
    AgentState,
    GridScene,
    agent_frame_coords,
    bresenham_line,
    cell_to_click,
    euclid,
    frame_vectors,
    render_view,
)

POLICIES = ("oracle", "drift", "eager_reporter", "honest_fail", "random", "state_coupled")

GROUND_NOOP = {"skill_name": "interact_pixel", "arguments": {"intent": "ground", "x": 0, "y": 0}}

# Cell-to-cell distances below the interaction limit are 1 and sqrt(2), so
# this radius admits exactly the reachable interaction ring.
APPROACH_RADIUS = 1.45


class PlanningError(Exception):
    """The scripted planner could not complete the task from this state."""


@dataclass
class PolicyConfig:
    policy: str
    report_delay: int = 1
    execution_noise: float = 0.0
    stumbles: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy: {self.policy}")
        if self.report_delay < 1:
            raise ValueError("report_delay must be >= 1")
        if not 0.0 <= self.execution_noise <= 1.0:
            raise ValueError("execution_noise must be in [0, 1]")

    def params(self) -> dict:
        return {
            "report_delay": self.report_delay,
            "execution_noise": self.execution_noise,
            "stumbles": self.stumbles,
            "policy_seed": self.seed,
        }


def _nav(mode: str, magnitude: int) -> dict:
    return {"skill_name": "navigate", "arguments": {"mode": mode, "magnitude": magnitude}}


def _look(direction: str, magnitude: int) -> dict:
    return {"skill_name": "look", "arguments": {"direction": direction, "magnitude": magnitude}}


def _interact(intent: str, x: Optional[int] = None, y: Optional[int] = None) -> dict:
    args = {"intent": intent}
    if x is not None:
        args["x"] = x
        args["y"] = y
    return {"skill_name": "interact_pixel", "arguments": args}


def _report(status: str, summary: str) -> dict:
    return {"skill_name": "report", "arguments": {"status": status, "summary": summary}}


def geo_visible(scene: GridScene, pos, heading: int, target_cell) -> bool:
    """Target cell lands in the viewport from this pose (ignoring pitch)."""
    if euclid(pos, target_cell) > VISIBILITY_RANGE:
        return False
    f, l = agent_frame_coords(pos, heading, target_cell)
    if f < 1 or abs(l) > f:
        return False
    occluders = scene.walls | scene.blocking_cells()
    ray = bresenham_line(pos, target_cell)
    return not any(c in occluders for c in ray[1:-1])


def _pose_neighbors(scene: GridScene, pos, heading: int):
    yield ("turn_left", (pos, (heading - 90) % 360))
    yield ("turn_right", (pos, (heading + 90) % 360))
    (fx, fy), _ = frame_vectors(heading)
    ahead = (pos[0] + fx, pos[1] + fy)
    if scene.passable(ahead):
        yield ("forward", (ahead, heading))


def _pose_plan(scene, state, goal_fn, avoid_near=None, avoid_radius=0.0):
    """BFS in (position, heading) space; returns primitive move names.

    With ``avoid_near`` set, poses inside the radius are admissible only as
    terminal goal nodes, never expanded; the first pose inside the radius on
    the returned path is therefore the final one.
    """
    start = (state.position, state.heading)
    if goal_fn(*start):
        return []
    parents = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        pos, heading = node
        if (
            avoid_near is not None
            and node != start
            and euclid(pos, avoid_near) < avoid_radius
        ):
            continue
        for move, nxt in _pose_neighbors(scene, pos, heading):
            if nxt in parents:
                continue
            parents[nxt] = (node, move)
            if goal_fn(*nxt):
                moves = []
                cursor = nxt
                while parents[cursor] is not None:
                    prev, move_name = parents[cursor]
                    moves.append(move_name)
                    cursor = prev
                moves.reverse()
                return moves
            queue.append(nxt)
    raise PlanningError("no pose satisfies the goal")


def _compress_moves(moves) -> list:
    """Merge consecutive forward steps into single navigate actions."""
    actions = []
    i = 0
    while i < len(moves):
        move = moves[i]
        if move == "forward":
            j = i
            while j < len(moves) and moves[j] == "forward":
                j += 1
            actions.append(_nav("forward", j - i))
            i = j
        else:
            actions.append(_nav(move, 90))
            i += 1
    return actions


class TaskPlanner:
    """Plans the action sequence that achieves the world goal.

    Operates on a private clone of the scene so planning never touches the
    live episode state; emitted actions are replayed against the clone to
    keep subsequent phases consistent.
    """

    def __init__(self, spec: EpisodeSpec, scene: GridScene, state: AgentState):
        self.spec = spec
        self.scene = scene.clone()
        self.state = replace(state)
        self.actions: list[dict] = []

    def _emit(self, action: dict) -> None:
        from .world import apply_interact, apply_look, apply_navigate

        self.actions.append(action)
        skill = action["skill_name"]
        args = action["arguments"]
        if skill == "navigate":
            self.state, _ = apply_navigate(self.scene, self.state, args["mode"], args["magnitude"])
        elif skill == "look":
            self.state = apply_look(self.state, args["direction"], args["magnitude"])
        elif skill == "interact_pixel":
            view = render_view(self.scene, self.state)
            self.scene, self.state, _, outcome = apply_interact(
                self.scene, self.state, view, args["intent"], args.get("x"), args.get("y")
            )
            if outcome.result not in ("applied",):
                raise PlanningError(f"planned interaction failed: {outcome.result}")

    def _approach(self, target_cell, require_near: bool, keep_out: bool = False) -> None:
        scene = self.scene

        if require_near:
            def goal(pos, heading):
                return (
                    euclid(pos, target_cell) <= APPROACH_RADIUS
                    and geo_visible(scene, pos, heading, target_cell)
                )
        else:
            def goal(pos, heading):
                return geo_visible(scene, pos, heading, target_cell)

        moves = _pose_plan(
            scene,
            self.state,
            goal,
            avoid_near=target_cell if keep_out else None,
            avoid_radius=1.5 if keep_out else 0.0,
        )
        for action in _compress_moves(moves):
            self._emit(action)

    def _ensure_pitch(self, elevation: str) -> None:
        wanted = ELEVATION_PITCH[elevation]
        delta = wanted - self.state.pitch
        if delta > 0:
            self._emit(_look("up", delta))
        elif delta < 0:
            self._emit(_look("down", -delta))

    def _click(self, target_id: str, intent: str) -> None:
        obj = self.scene.object_by_id(target_id)
        self._ensure_pitch(obj.elevation)
        view = render_view(self.scene, self.state)
        cell = view.rendered_cell_of(target_id)
        if cell is None:
            raise PlanningError(f"{target_id} not rendered at click pose")
        x, y = cell_to_click(*cell)
        self._emit(_interact(intent, x, y))

    def _interaction_intent(self, expected_label: str) -> str:
        return {
            "on": "activate",
            "off": "deactivate",
            "open": "open_access",
            "closed": "close_access",
        }[expected_label]

    def _solve_subgoal(self, sub: dict) -> None:
        if _subgoal_holds(sub, self.scene, self.state, strict=False):
            return
        target = self.scene.object_by_id(sub["target_id"])
        if sub["kind"] == "object_state":
            self._approach(target.position, require_near=True)
            self._click(target.object_id, self._interaction_intent(sub["expected_label"]))
        elif sub["kind"] == "object_held":
            self._approach(target.position, require_near=True)
            self._click(target.object_id, "pick")
        elif sub["kind"] == "object_at_receptacle":
            recep = self.scene.object_by_id(sub["receptacle_id"])
            self._approach(recep.position, require_near=True)
            self._click(recep.object_id, "place")
        else:
            raise PlanningError(f"unplannable sub-goal: {sub['kind']}")

    def plan(self) -> list[dict]:
        success = self.spec.success
        kind = success.kind

        if kind == "target_grounded":
            target = self.scene.object_by_id(success.target_id)
            if render_view(self.scene, self.state).rendered_cell_of(success.target_id) is None:
                self._approach(target.position, require_near=False)
            self._click(success.target_id, "ground")

        elif kind == "agent_near_target":
            target = self.scene.object_by_id(success.target_id)
            self._approach(target.position, require_near=True, keep_out=True)

        elif kind == "object_visible_latched":
            target = self.scene.object_by_id(success.target_id)
            self._approach(target.position, require_near=False)
            self._ensure_pitch(target.elevation)

        elif kind == "report_status":
            target = self.scene.object_by_id(success.target_id)
            if render_view(self.scene, self.state).rendered_cell_of(success.target_id) is None:
                self._approach(target.position, require_near=False)
                self._ensure_pitch(target.elevation)

        elif kind == "object_state":
            self._solve_subgoal({
                "kind": "object_state",
                "target_id": success.target_id,
                "expected_label": success.expected_label,
                "receptacle_id": None,
            })

        elif kind == "object_held":
            self._solve_subgoal({
                "kind": "object_held",
                "target_id": success.target_id,
                "expected_label": None,
                "receptacle_id": None,
            })

        elif kind == "ordered_chain":
            for sub in success.chain:
                self._solve_subgoal(sub)

        elif kind == "constrained_goal":
            obstacle = self.scene.object_by_id(success.obstacle_id)
            if obstacle.position is not None:
                self._approach(obstacle.position, require_near=True)
                self._click(success.obstacle_id, "pick")
            self._solve_subgoal(success.goal)

        else:
            raise PlanningError(f"unplannable success kind: {kind}")

        return self.actions


def plan_task(spec: EpisodeSpec, scene: GridScene, state: AgentState) -> list[dict]:
    """Action sequence that achieves the world goal from the given state."""
    return TaskPlanner(spec, scene, state).plan()


# ---------------------------------------------------------------------------
# observation-grounded support tracking (no hidden state)
# ---------------------------------------------------------------------------

class SupportTracker:
    """Judges goal attainment from frames and the policy's own actions.

    Honors the no-feedback contract inside a scripted policy: only rendered
    categories, visual states, and self-issued clicks feed the judgment.
    """

    def __init__(self, spec: EpisodeSpec):
        self.spec = spec
        self.scene = spec.scene
        self.frame: Optional[dict] = None
        self.seen_latch = False
        self.sv_state: Optional[str] = None
        self.pending_pick: Optional[tuple] = None  # (target category, cell)
        self.pending_pick_stage: Optional[int] = None
        self.stage_flags: dict[int, bool] = {}
        self.state_latches: dict = {}
        self.clicked_target = False

    def _category_of(self, object_id: str) -> str:
        return self.scene.object_by_id(object_id).category

    def _cells_with(self, frame: dict, category: str):
        out = []
        for r, row in enumerate(frame["cells"]):
            for k, cell in enumerate(row):
                if cell["kind"] == "object" and cell["category"] == category:
                    out.append((r, k, cell))
        return out

    def _watched_states(self):
        """(latch key, target_id, expected_label) for every object_state
        predicate whose satisfaction must be remembered once seen."""
        success = self.spec.success
        if success.kind == "object_state":
            yield ("top", success.target_id, success.expected_label)
        elif success.kind == "ordered_chain":
            for i, sub in enumerate(success.chain):
                if sub["kind"] == "object_state":
                    yield (("chain", i), sub["target_id"], sub["expected_label"])
        elif success.kind == "constrained_goal":
            yield ("goal", success.goal["target_id"], success.goal["expected_label"])

    def observe(self, payload: dict) -> None:
        frame = payload["frame"]
        success = self.spec.success
        if self.pending_pick is not None:
            category, (r, k) = self.pending_pick
            cell = frame["cells"][r][k]
            if not (cell["kind"] == "object" and cell["category"] == category):
                stage = self.pending_pick_stage
                self.stage_flags[stage] = True
            self.pending_pick = None
        if success.kind == "object_visible_latched":
            if self._cells_with(frame, self._category_of(success.target_id)):
                self.seen_latch = True
        if success.kind == "report_status":
            hits = self._cells_with(frame, self._category_of(success.target_id))
            self.sv_state = hits[0][2]["visual_state"] if hits else None
        for key, target_id, expected in self._watched_states():
            for _, _, cell in self._cells_with(frame, self._category_of(target_id)):
                if cell["visual_state"] == expected:
                    self.state_latches[key] = True
        self.frame = frame

    def note_action(self, action: dict) -> None:
        if action["skill_name"] != "interact_pixel" or self.frame is None:
            return
        args = action["arguments"]
        intent = args.get("intent")
        success = self.spec.success
        if intent == "ground" and success.kind == "target_grounded":
            from .world import click_to_cell

            r, k = click_to_cell(args["x"], args["y"])
            cell = self.frame["cells"][r][k]
            if cell["kind"] == "object" and cell["category"] == self._category_of(success.target_id):
                self.clicked_target = True
        if intent == "pick":
            from .world import click_to_cell

            r, k = click_to_cell(args["x"], args["y"])
            cell = self.frame["cells"][r][k]
            if cell["kind"] == "object":
                stage = self._held_stage_for(cell["category"])
                if stage is not None:
                    self.pending_pick = (cell["category"], (r, k))
                    self.pending_pick_stage = stage
        if intent == "place":
            stage = self._place_stage()
            if stage is not None:
                self.stage_flags[stage] = True

    def _held_stage_for(self, category: str) -> Optional[int]:
        success = self.spec.success
        if success.kind == "object_held" and category == self._category_of(success.target_id):
            return -1
        if success.kind == "constrained_goal" and category == self._category_of(success.obstacle_id):
            return -2
        if success.kind == "ordered_chain":
            for i, sub in enumerate(success.chain):
                if sub["kind"] == "object_held" and category == self._category_of(sub["target_id"]):
                    return i
        return None

    def _place_stage(self) -> Optional[int]:
        success = self.spec.success
        if success.kind != "ordered_chain":
            return None
        for i, sub in enumerate(success.chain):
            if sub["kind"] == "object_at_receptacle":
                return i
        return None

    def supported(self) -> bool:
        success = self.spec.success
        kind = success.kind
        if kind == "target_grounded":
            return self.clicked_target
        if kind == "agent_near_target":
            if self.frame is None:
                return False
            category = self._category_of(success.target_id)
            for r, k, _ in self._cells_with(self.frame, category):
                if r == 5 and 5 <= k <= 7:  # depth band 1, lateral within 1
                    return True
            return False
        if kind == "object_visible_latched":
            return self.seen_latch
        if kind == "report_status":
            return self.sv_state in ("on", "off", "open", "closed")
        if kind == "object_state":
            return self.state_latches.get("top", False)
        if kind == "object_held":
            return self.stage_flags.get(-1, False)
        if kind == "ordered_chain":
            for i, sub in enumerate(success.chain):
                if sub["kind"] == "object_state":
                    if not self.state_latches.get(("chain", i), False):
                        return False
                elif not self.stage_flags.get(i, False):
                    return False
            return True
        if kind == "constrained_goal":
            return self.stage_flags.get(-2, False) and self.state_latches.get("goal", False)
        return False

    def report_label(self) -> str:
        if self.spec.success.kind == "report_status":
            return self.sv_state or "invalid"
        return "success"


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class _QueuePolicy:
    """Plays a precomputed action list, then a filler action forever."""

    def __init__(self, actions, filler=None):
        self.queue = deque(actions)
        self.filler = filler

    def step(self, ctx: StepContext) -> str:
        if self.queue:
            return canon_dumps(self.queue.popleft())
        if self.filler is None:
            raise PlanningError("action queue exhausted")
        return canon_dumps(self.filler)


def _oracle_actions(spec: EpisodeSpec, delay: int) -> list[dict]:
    actions = plan_task(spec, spec.scene, spec.scene.agent_start)
    if spec.family == "sv":
        fill = delay
        label = spec.success.expected_label
        summary = "observed state reported"
    else:
        fill = delay - 1
        label = "success"
        summary = "goal reached and verified"
    return actions + [GROUND_NOOP] * fill + [_report(label, summary)]


class OraclePolicy(_QueuePolicy):
    def __init__(self, spec: EpisodeSpec, config: PolicyConfig):
        super().__init__(_oracle_actions(spec, config.report_delay))


class DriftPolicy(_QueuePolicy):
    """Oracle execution prefix, never reports; pads with grounding no-ops so
    the terminal world state (and SV observability) match the oracle's."""

    def __init__(self, spec: EpisodeSpec, config: PolicyConfig):
        super().__init__(plan_task(spec, spec.scene, spec.scene.agent_start), filler=GROUND_NOOP)


class EagerReporter:
    def __init__(self, spec: EpisodeSpec, config: PolicyConfig):
        pass

    def step(self, ctx: StepContext) -> str:
        return canon_dumps(_report("success", "task complete"))


class HonestFail:
    def __init__(self, spec: EpisodeSpec, config: PolicyConfig):
        pass

    def step(self, ctx: StepContext) -> str:
        return canon_dumps(_report("fail", "unable to complete the task"))


class RandomPolicy:
    """Uniform valid actions; reports with a small fixed per-step probability."""

    REPORT_PROB = 0.1

    def __init__(self, spec: EpisodeSpec, config: PolicyConfig):
        self.rng = random.Random(config.seed)

    def step(self, ctx: StepContext) -> str:
        rng = self.rng
        if rng.random() < self.REPORT_PROB:
            status = rng.choice(("success", "fail", "unsafe", "invalid", "on", "off", "open", "closed"))
            return canon_dumps(_report(status, "random report"))
        skill = rng.choice(("navigate", "look", "interact_pixel"))
        if skill == "navigate":
            mode = rng.choice(("forward", "backward", "turn_left", "turn_right"))
            return canon_dumps(_nav(mode, rng.randint(1, 3) if mode in ("forward", "backward") else 90))
        if skill == "look":
            return canon_dumps(_look(rng.choice(("up", "down")), 30))
        intent = rng.choice(CANONICAL_INTENTS)
        if intent == "drop":
            return canon_dumps(_interact("drop"))
        return canon_dumps(_interact(intent, rng.randint(0, 1000), rng.randint(0, 1000)))


class StateCoupledPolicy:
    """Oracle-grade execution whose report decision is observation-coupled.

    Injects no-op "stumbles" (face a blocked cell, walk into it, turn back)
    when the budget allows, to generate path_blocked events; with the
    feedback intervention on, the first path_blocked signal cancels every
    stumble not yet started (a stumble in flight always finishes so the
    heading is restored). Per-action execution noise substitutes a stray
    turn and forces a replan from the live state.
    """

    def __init__(self, spec: EpisodeSpec, config: PolicyConfig):
        self.spec = spec
        self.config = config
        self.rng = random.Random(config.seed)
        self.plan = deque(plan_task(spec, spec.scene, spec.scene.agent_start))
        self.support = SupportTracker(spec)
        self.pending: deque = deque()
        self.stumbles_left = config.stumbles
        self.cancelled = False
        self.needs_replan = False
        self.delay_left = config.report_delay

    def _find_stumble(self, ctx: StepContext):
        """Cheapest turn-in/bump/turn-back sequence against an adjacent
        obstruction, or None if the agent stands in open floor."""
        scene = ctx.scene
        pos = ctx.state.position
        for diff, into, back in (
            (0, (), ()),
            (90, ("turn_right",), ("turn_left",)),
            (270, ("turn_left",), ("turn_right",)),
            (180, ("turn_right", "turn_right"), ("turn_left", "turn_left")),
        ):
            heading = (ctx.state.heading + diff) % 360
            (fx, fy), _ = frame_vectors(heading)
            ahead = (pos[0] + fx, pos[1] + fy)
            if not scene.passable(ahead):
                actions = [_nav(m, 90) for m in into]
                actions.append(_nav("forward", 1))
                actions.extend(_nav(m, 90) for m in back)
                return actions
        return None

    def _emit(self, action: dict) -> str:
        self.support.note_action(action)
        return canon_dumps(action)

    def step(self, ctx: StepContext) -> str:
        self.support.observe(ctx.payload)
        feedback = ctx.payload.get("feedback")
        if feedback and feedback.get("path_blocked"):
            self.cancelled = True

        if self.pending:
            return self._emit(self.pending.popleft())

        if self.stumbles_left > 0 and not self.cancelled:
            stumble = self._find_stumble(ctx)
            if stumble is not None:
                # leave room to finish the task and report afterwards
                needed = len(stumble) + len(self.plan) + self.delay_left + 2
                if ctx.budget.steps_remaining >= needed:
                    self.stumbles_left -= 1
                    self.pending.extend(stumble)
                    return self._emit(self.pending.popleft())

        if self.needs_replan:
            self.plan = deque(plan_task(self.spec, ctx.scene, ctx.state))
            self.needs_replan = False

        if self.plan:
            action = self.plan.popleft()
            if self.config.execution_noise > 0 and self.rng.random() < self.config.execution_noise:
                self.needs_replan = True
                self.plan.appendleft(action)
                return self._emit(_nav("turn_right", 90))
            return self._emit(action)

        if self.support.supported():
            if self.delay_left > 1:
                self.delay_left -= 1
                return self._emit(GROUND_NOOP)
            label = self.support.report_label()
            return self._emit(_report(label, "observation supports closure"))
        return self._emit(GROUND_NOOP)


_POLICY_CLASSES = {
    "oracle": OraclePolicy,
    "drift": DriftPolicy,
    "eager_reporter": EagerReporter,
    "honest_fail": HonestFail,
    "random": RandomPolicy,
    "state_coupled": StateCoupledPolicy,
}


def make_policy(spec: EpisodeSpec, config: PolicyConfig):
    return _POLICY_CLASSES[config.policy](spec, config)


def run_policy(
    spec: EpisodeSpec,
    config: PolicyConfig,
    feedback: bool = False,
    run_config: Optional[RunConfig] = None,
) -> Trace:
    """Execute one scripted policy in-process and return the settled trace."""
    policy = make_policy(spec, config)
    cfg = run_config or RunConfig(
        agent_id=config.policy,
        agent_params=config.params(),
        feedback=feedback,
        seed=config.seed,
    )
    return run_episode(spec, policy.step, cfg)
