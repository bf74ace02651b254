"""Task families, success specifications, and the per-step evaluator.

The evaluator tracks the semantic and strict world predicates in parallel
and emits a [0, 1] progress scalar after every applied action. Distance
sub-conditions contribute clamp01((d0 - d) / (d0 - 1.5)); boolean
sub-conditions contribute 0/1; ordered chains contribute their completed
prefix fraction; composites average their sub-conditions.
"""

from dataclasses import dataclass
from typing import Optional

from .world import (
    AgentState,
    GridScene,
    InteractOutcome,
    RenderedView,
    can_reach_within,
    euclid,
)

FAMILIES = ("pg", "da", "vs", "sv", "ai", "si", "sm", "cr")

NEAR_SEMANTIC = 1.5   # agent_near_target: strict inequality
NEAR_STRICT = 1.0     # strict refinement of the near predicate
RECEPTACLE_TOLERANCE = 1.0  # semantic placement accepts this radius

GOAL_COMPLETION_FAMILIES = ("pg", "da", "vs", "ai", "si", "sm", "cr")
STATE_VERIFICATION_FAMILIES = ("sv",)


@dataclass(frozen=True)
class FamilySpec:
    """Per-family budgets and the start-visibility contract."""

    family: str
    step_budget: int
    invalid_limit: int
    target_visible_at_start: bool


FAMILY_SPECS = {
    "pg": FamilySpec("pg", 5, 3, True),
    "da": FamilySpec("da", 12, 4, True),
    "vs": FamilySpec("vs", 20, 6, False),
    "sv": FamilySpec("sv", 5, 2, True),
    "ai": FamilySpec("ai", 25, 8, True),
    "si": FamilySpec("si", 35, 10, False),
    "sm": FamilySpec("sm", 30, 10, True),
    "cr": FamilySpec("cr", 40, 12, True),
}

SUCCESS_KINDS = (
    "target_grounded",
    "agent_near_target",
    "object_visible_latched",
    "report_status",
    "object_state",
    "object_held",
    "object_at_receptacle",
    "constrained_goal",
    "ordered_chain",
)


@dataclass
class SuccessSpec:
    """One episode's hidden success condition (semantic + strict variants)."""

    kind: str
    target_id: Optional[str] = None
    expected_label: Optional[str] = None       # report_status / object_state
    receptacle_id: Optional[str] = None        # object_at_receptacle
    obstacle_id: Optional[str] = None          # constrained_goal
    goal: Optional[dict] = None                # constrained_goal inner predicate
    chain: Optional[list[dict]] = None         # ordered_chain sub-goals

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target_id": self.target_id,
            "expected_label": self.expected_label,
            "receptacle_id": self.receptacle_id,
            "obstacle_id": self.obstacle_id,
            "goal": self.goal,
            "chain": self.chain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuccessSpec":
        return cls(**d)


@dataclass
class EpisodeSpec:
    """One frozen task: instruction, scene, budgets, success condition."""

    episode_id: str
    family: str
    instruction: str
    scene: GridScene
    success: SuccessSpec
    step_budget: int
    invalid_limit: int
    seed: int

    @property
    def mode(self) -> str:
        return "state_verification" if self.family == "sv" else "goal_completion"

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "family": self.family,
            "instruction": self.instruction,
            "scene": self.scene.to_dict(),
            "success": self.success.to_dict(),
            "step_budget": self.step_budget,
            "invalid_limit": self.invalid_limit,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeSpec":
        return cls(
            episode_id=d["episode_id"],
            family=d["family"],
            instruction=d["instruction"],
            scene=GridScene.from_dict(d["scene"]),
            success=SuccessSpec.from_dict(d["success"]),
            step_budget=d["step_budget"],
            invalid_limit=d["invalid_limit"],
            seed=d["seed"],
        )


@dataclass
class ProgressSample:
    """Per-step evaluation record. W implies progress 1; no monotonicity."""

    step: int
    w: bool
    w_strict: bool
    progress: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "w": int(self.w),
            "w_strict": int(self.w_strict),
            "progress": self.progress,
        }


def clamp01(value: float) -> float:
    return max(0.0, min(1.0, value))


def _subgoal_holds(goal: dict, scene: GridScene, state: AgentState, strict: bool) -> bool:
    """Atomic predicate used by chains and the constrained-goal wrapper."""
    kind = goal["kind"]
    if kind == "object_state":
        obj = scene.object_by_id(goal["target_id"])
        label = goal["expected_label"]
        if label in ("on", "off"):
            return obj.is_toggled == (label == "on")
        return obj.is_open == (label == "open")
    if kind == "object_held":
        return state.held == goal["target_id"]
    if kind == "object_at_receptacle":
        obj = scene.object_by_id(goal["target_id"])
        recep = scene.object_by_id(goal["receptacle_id"])
        contained = obj.contained_in == recep.object_id
        if strict:
            return contained
        if contained:
            return True
        if obj.position is None or recep.position is None:
            return False
        return euclid(obj.position, recep.position) <= RECEPTACLE_TOLERANCE
    raise ValueError(f"unknown sub-goal kind: {kind}")


class EpisodeEvaluator:
    """Tracks latched evidence and scores world completion per step.

    Latched facts: grounding hits (a click happened), view-search visibility
    (stays satisfied once achieved), and ordered-chain prefixes (a sub-goal
    counts once completed in order). Everything else is evaluated against
    the current state, so W at settlement is simply the final sample.
    """

    def __init__(self, spec: EpisodeSpec, scene: GridScene, state: AgentState,
                 initial_view: RenderedView):
        self.spec = spec
        self.grounded_sem = False
        self.grounded_strict = False
        self.seen_latch = False
        self.chain_done = 0
        self.chain_done_strict = 0
        self.d0 = None
        if spec.success.kind == "agent_near_target":
            target = scene.object_by_id(spec.success.target_id)
            self.d0 = euclid(state.position, target.position)
        self.step0 = self._sample(0, scene, state, initial_view)

    # -- per-step hooks -------------------------------------------------

    def note_interact(self, outcome: InteractOutcome, view: RenderedView) -> None:
        """Record grounding evidence from an interact outcome against the
        view the click was resolved on."""
        if outcome.intent != "ground" or outcome.clicked is None:
            return
        target_id = self.spec.success.target_id
        if target_id is None:
            return
        rendered = view.rendered_cell_of(target_id)
        if rendered is None:
            return
        rr, rc = rendered
        cr, cc = outcome.clicked
        if (cr, cc) == (rr, rc):
            self.grounded_strict = True
            self.grounded_sem = True
        elif max(abs(cr - rr), abs(cc - rc)) <= 1:
            self.grounded_sem = True

    def update(self, step: int, scene: GridScene, state: AgentState,
               view: RenderedView) -> ProgressSample:
        """Evaluate after an applied action; ``view`` is the post-action frame."""
        return self._sample(step, scene, state, view)

    # -- scoring --------------------------------------------------------

    def _sample(self, step: int, scene: GridScene, state: AgentState,
                view: RenderedView) -> ProgressSample:
        success = self.spec.success
        kind = success.kind

        if kind == "target_grounded":
            w, ws = self.grounded_sem, self.grounded_strict
            progress = 1.0 if w else 0.0

        elif kind == "agent_near_target":
            target = scene.object_by_id(success.target_id)
            d = euclid(state.position, target.position)
            w = d < NEAR_SEMANTIC
            ws = d <= NEAR_STRICT
            if w or self.d0 is None or self.d0 <= NEAR_SEMANTIC:
                progress = 1.0 if w else 0.0
            else:
                progress = clamp01((self.d0 - d) / (self.d0 - NEAR_SEMANTIC))

        elif kind == "object_visible_latched":
            if view.rendered_cell_of(success.target_id) is not None:
                self.seen_latch = True
            w = ws = self.seen_latch
            progress = 1.0 if w else 0.0

        elif kind == "report_status":
            # Observability of the queried state in the current frame.
            w = ws = view.rendered_cell_of(success.target_id) is not None
            progress = 1.0 if w else 0.0

        elif kind in ("object_state", "object_held", "object_at_receptacle"):
            goal = {
                "kind": kind,
                "target_id": success.target_id,
                "expected_label": success.expected_label,
                "receptacle_id": success.receptacle_id,
            }
            w = _subgoal_holds(goal, scene, state, strict=False)
            ws = _subgoal_holds(goal, scene, state, strict=True)
            progress = 1.0 if w else 0.0

        elif kind == "ordered_chain":
            chain = success.chain
            while self.chain_done < len(chain) and _subgoal_holds(
                chain[self.chain_done], scene, state, strict=False
            ):
                self.chain_done += 1
            while self.chain_done_strict < len(chain) and _subgoal_holds(
                chain[self.chain_done_strict], scene, state, strict=True
            ):
                self.chain_done_strict += 1
            w = self.chain_done == len(chain)
            ws = self.chain_done_strict == len(chain)
            progress = self.chain_done / len(chain)

        elif kind == "constrained_goal":
            target = scene.object_by_id(success.target_id)
            resolved = can_reach_within(
                scene, state.position, target.position, NEAR_SEMANTIC
            )
            goal_sem = _subgoal_holds(success.goal, scene, state, strict=False)
            goal_strict = _subgoal_holds(success.goal, scene, state, strict=True)
            w = resolved and goal_sem
            ws = resolved and goal_strict
            progress = (float(resolved) + float(goal_sem)) / 2.0

        else:
            raise ValueError(f"unknown success kind: {kind}")

        if w:
            progress = 1.0
        return ProgressSample(step=step, w=w, w_strict=ws, progress=progress)
