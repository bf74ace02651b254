"""Episode executor shared by in-process policies and the wire server.

Drives the turn loop: observation out, raw action in, contract gating,
world application, per-step evaluation, trace record. The agent-facing
observation payload carries only public-contract content.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .canon import digest_obj
from .contract import (
    GATE_INVALID_LIMIT,
    GATE_NO_REPORT,
    PROFILE_NAME,
    PROMPT_POLICY,
    Action,
    BudgetState,
    DialogueHistory,
    Invalid,
    parse_action,
    render_prompt,
    step_gate,
)
from .episodes import EpisodeEvaluator, EpisodeSpec
from .settlement import (
    TERMINAL_ABORTED,
    TERMINAL_BUDGET,
    TERMINAL_INVALID,
    TERMINAL_REPORT,
    StepRecord,
    Trace,
    settle,
)
from .world import (
    FeedbackEvent,
    RenderedView,
    apply_interact,
    apply_look,
    apply_navigate,
    render_view,
)

PROTOCOL_VERSION = 1


class AgentTimeout(Exception):
    """Turn deadline missed; counted as an invalid action."""


class AgentDisconnect(Exception):
    """Transport dropped; the episode settles as aborted."""


@dataclass
class RunConfig:
    """Identity of one run; every field lands in the trace header."""

    agent_id: str
    agent_params: dict = field(default_factory=dict)
    feedback: bool = False
    seed: int = 0
    pack_hash: str = ""
    prompt_policy: str = PROMPT_POLICY
    profile: str = PROFILE_NAME

    def header(self, spec: EpisodeSpec) -> dict:
        _, prompt_digest = render_prompt(spec.instruction)
        return {
            "protocol": PROTOCOL_VERSION,
            "episode_id": spec.episode_id,
            "family": spec.family,
            "pack_hash": self.pack_hash,
            "agent": {"policy": self.agent_id, **self.agent_params},
            "feedback": self.feedback,
            "seed": self.seed,
            "prompt_policy": self.prompt_policy,
            "prompt_digest": prompt_digest,
            "profile": self.profile,
        }


@dataclass
class StepContext:
    """What a stepper sees each turn.

    Wire-attached agents receive only ``payload``; in-process scripted
    policies may additionally use the evaluator-side world handles.
    """

    payload: dict
    spec: EpisodeSpec
    scene: object
    state: object
    view: RenderedView
    budget: BudgetState
    step_index: int
    feedback_enabled: bool
    last_feedback: FeedbackEvent


def observation_summary(payload: dict) -> str:
    cats = sorted(
        {
            cell["category"]
            for row in payload["frame"]["cells"]
            for cell in row
            if cell["kind"] == "object"
        }
    )
    return f"step {payload['step']}: visible={','.join(cats) if cats else 'nothing'}"


def build_payload(
    spec: EpisodeSpec,
    view: RenderedView,
    budget: BudgetState,
    history: DialogueHistory,
    feedback_enabled: bool,
    last_feedback: FeedbackEvent,
) -> dict:
    payload = {
        "kind": "observation",
        "protocol": PROTOCOL_VERSION,
        "episode_id": spec.episode_id,
        "step": budget.steps_used + 1,
        "instruction": spec.instruction,
        "frame": view.frame.to_dict(),
        "steps_remaining": budget.steps_remaining,
        "invalids_remaining": budget.invalids_remaining,
        "history": [[obs, raw] for obs, raw in history.turns()],
    }
    if feedback_enabled:
        payload["feedback"] = last_feedback.to_dict()
    return payload


def run_episode(
    spec: EpisodeSpec,
    step_fn: Callable[[StepContext], str],
    config: RunConfig,
) -> Trace:
    """Execute one episode to settlement and return its trace."""
    scene = spec.scene.clone()
    state = replace(scene.agent_start)
    view = render_view(scene, state)
    evaluator = EpisodeEvaluator(spec, scene, state, view)
    budget = BudgetState(spec.step_budget, spec.invalid_limit)
    history = DialogueHistory()
    last_feedback = FeedbackEvent()

    records: list[StepRecord] = []
    terminal: Optional[str] = None
    report = None

    while terminal is None:
        payload = build_payload(spec, view, budget, history, config.feedback, last_feedback)
        ctx = StepContext(
            payload=payload,
            spec=spec,
            scene=scene,
            state=state,
            view=view,
            budget=budget,
            step_index=budget.steps_used + 1,
            feedback_enabled=config.feedback,
            last_feedback=last_feedback,
        )
        try:
            raw = step_fn(ctx)
        except AgentTimeout:
            raw = ""
            parsed = Invalid("timeout", "turn deadline missed", raw)
        except AgentDisconnect:
            terminal = TERMINAL_ABORTED
            break
        else:
            parsed = parse_action(raw)

        verdict = step_gate(budget, parsed)
        if verdict == GATE_NO_REPORT:
            terminal = TERMINAL_BUDGET
            break

        step = budget.steps_used
        event = FeedbackEvent()
        outcome = None
        prev_view = view
        if isinstance(parsed, Action):
            if parsed.skill == "navigate":
                state, event = apply_navigate(scene, state, parsed.mode, parsed.magnitude)
            elif parsed.skill == "look":
                state = apply_look(state, parsed.direction, parsed.magnitude)
            elif parsed.skill == "interact_pixel":
                scene, state, event, outcome = apply_interact(
                    scene, state, prev_view, parsed.intent, parsed.x, parsed.y
                )
            elif parsed.skill == "report":
                report = parsed.report

        view = render_view(scene, state)
        if outcome is not None:
            evaluator.note_interact(outcome, prev_view)
        sample = evaluator.update(step, scene, state, view)
        records.append(
            StepRecord(
                step=step,
                raw=raw,
                action=parsed.to_dict() if isinstance(parsed, Action) else None,
                invalid_reason=parsed.reason if isinstance(parsed, Invalid) else None,
                skill=parsed.skill if isinstance(parsed, Action) else None,
                feedback=event,
                sample=sample,
                world_digest=digest_obj({"scene": scene.to_dict(), "state": state.to_dict()}),
            )
        )
        history.push(observation_summary(payload), raw)
        last_feedback = event

        if verdict == GATE_INVALID_LIMIT:
            terminal = TERMINAL_INVALID
        elif isinstance(parsed, Action) and parsed.skill == "report":
            terminal = TERMINAL_REPORT
        elif budget.steps_used >= budget.step_budget:
            terminal = TERMINAL_BUDGET

    settlement = settle(spec, records, terminal, report, evaluator.step0)
    return Trace(header=config.header(spec), steps=records, settlement=settlement)


def replay_trace(spec: EpisodeSpec, trace: Trace) -> Trace:
    """Re-run the stored raw agent lines through the engine.

    Used by the audit path: replaying a stored trace must reproduce the
    stored settlement byte-exactly.
    """
    raws = [record.raw for record in trace.steps]
    cursor = {"i": 0}

    def scripted(ctx: StepContext) -> str:
        if cursor["i"] >= len(raws):
            raise AgentDisconnect()
        raw = raws[cursor["i"]]
        cursor["i"] += 1
        return raw

    header = trace.header
    config = RunConfig(
        agent_id=header["agent"]["policy"],
        agent_params={k: v for k, v in header["agent"].items() if k != "policy"},
        feedback=header["feedback"],
        seed=header["seed"],
        pack_hash=header["pack_hash"],
        prompt_policy=header["prompt_policy"],
        profile=header["profile"],
    )
    return run_episode(spec, scripted, config)
