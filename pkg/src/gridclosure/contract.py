"""Native-control contract.

Raw action parsing with a closed alias table, terminal-status normalization,
step/invalid budget gating, the bounded dialogue history, and deterministic
prompt assembly with SHA-256 digests.
"""

import json
import math
from collections import deque
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Union

from .canon import sha256_hex
from .world import CANONICAL_INTENTS, COORD_MAX, LOOK_DIRECTIONS, NAVIGATE_MODES

SKILLS = ("navigate", "look", "interact_pixel", "report")

REPORT_STATUSES = ("success", "fail", "unsafe", "invalid", "on", "off", "open", "closed")

# Closed alias table; anything else is rejected, never fuzzily matched.
INTENT_ALIASES = {
    "open": "open_access",
    "close": "close_access",
    "toggle_on": "activate",
    "toggle_off": "deactivate",
}

PROMPT_POLICY = "public_evidence_v1"
PROFILE_NAME = "symbolic_viewport_dialogue_history_v1"
HISTORY_CAPACITY = 20

# Machine-readable parse rejection reasons (closed set).
PARSE_REASONS = (
    "not_json",
    "multiple_objects",
    "unknown_skill",
    "missing_argument",
    "bad_type",
    "out_of_range",
)


@dataclass
class ReportContent:
    """Terminal report payload with the status already canonicalized."""

    status: str
    summary: str

    def to_dict(self) -> dict:
        return {"status": self.status, "summary": self.summary}


@dataclass
class Action:
    """A parsed, normalized skill invocation."""

    skill: str
    mode: Optional[str] = None
    magnitude: Optional[float] = None
    direction: Optional[str] = None
    intent: Optional[str] = None
    x: Optional[int] = None
    y: Optional[int] = None
    report: Optional[ReportContent] = None
    thought: Optional[str] = None
    cognitive_state: Optional[str] = None
    raw: str = ""

    def to_dict(self) -> dict:
        d: dict = {"skill": self.skill}
        if self.skill == "navigate":
            d.update(mode=self.mode, magnitude=self.magnitude)
        elif self.skill == "look":
            d.update(direction=self.direction, magnitude=self.magnitude)
        elif self.skill == "interact_pixel":
            d.update(intent=self.intent, x=self.x, y=self.y)
        elif self.skill == "report":
            d.update(status=self.report.status, summary=self.report.summary)
        return d


@dataclass
class Invalid:
    """Rejected agent output; always costs a step and an invalid count."""

    reason: str
    detail: str = ""
    raw: str = ""


ParseResult = Union[Action, Invalid]


def serialize_action(action: Action) -> str:
    """Wire-format JSON for an Action (Block 4 object shape)."""
    args: dict = {}
    if action.skill == "navigate":
        args = {"mode": action.mode, "magnitude": action.magnitude}
    elif action.skill == "look":
        args = {"direction": action.direction, "magnitude": action.magnitude}
    elif action.skill == "interact_pixel":
        args = {"intent": action.intent}
        if action.x is not None:
            args["x"] = action.x
            args["y"] = action.y
    elif action.skill == "report":
        args = {"status": action.report.status, "summary": action.report.summary}
    obj = {"skill_name": action.skill, "arguments": args}
    if action.thought is not None:
        obj["thought"] = action.thought
    if action.cognitive_state is not None:
        obj["cognitive_state"] = action.cognitive_state
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def normalize_status(raw_status) -> str:
    """Map any status text to one of the eight canonical values.

    Case-insensitive, whitespace-trimmed exact match; everything else is
    the canonical ``invalid`` status. Total function.
    """
    if not isinstance(raw_status, str):
        return "invalid"
    folded = raw_status.strip().casefold()
    return folded if folded in REPORT_STATUSES else "invalid"


def _positive_number(value) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
        and value > 0
    )


def _coord_ok(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and 0 <= value <= COORD_MAX


def parse_action(raw: str) -> ParseResult:
    """Parse one raw agent line into an Action or a reasoned rejection.

    Accepts exactly one JSON object. Intent aliases are normalized; report
    statuses are canonicalized (junk statuses become the ``invalid`` status,
    which is still a well-formed report action).
    """
    text = raw.strip()
    decoder = json.JSONDecoder()
    try:
        obj, end = decoder.raw_decode(text)
    except (json.JSONDecodeError, ValueError):
        return Invalid("not_json", "could not decode a JSON object", raw)
    if text[end:].strip():
        return Invalid("multiple_objects", "extra content after first JSON object", raw)
    if not isinstance(obj, dict):
        return Invalid("not_json", "top-level value is not an object", raw)

    if "skill_name" not in obj:
        return Invalid("missing_argument", "skill_name", raw)
    skill = obj["skill_name"]
    if not isinstance(skill, str) or skill not in SKILLS:
        return Invalid("unknown_skill", str(skill), raw)
    if "arguments" not in obj:
        return Invalid("missing_argument", "arguments", raw)
    args = obj["arguments"]
    if not isinstance(args, dict):
        return Invalid("bad_type", "arguments must be an object", raw)

    thought = obj.get("thought")
    cognitive = obj.get("cognitive_state")
    if thought is not None and not isinstance(thought, str):
        return Invalid("bad_type", "thought must be a string", raw)
    if cognitive is not None and not isinstance(cognitive, str):
        return Invalid("bad_type", "cognitive_state must be a string", raw)

    if skill == "navigate":
        if "mode" not in args:
            return Invalid("missing_argument", "mode", raw)
        if "magnitude" not in args:
            return Invalid("missing_argument", "magnitude", raw)
        mode = args["mode"]
        if not isinstance(mode, str):
            return Invalid("bad_type", "mode must be a string", raw)
        if mode not in NAVIGATE_MODES:
            return Invalid("out_of_range", f"mode {mode!r}", raw)
        magnitude = args["magnitude"]
        if isinstance(magnitude, bool) or not isinstance(magnitude, (int, float)):
            return Invalid("bad_type", "magnitude must be a number", raw)
        if not _positive_number(magnitude):
            return Invalid("out_of_range", "magnitude must be positive and finite", raw)
        return Action(
            "navigate", mode=mode, magnitude=magnitude, thought=thought,
            cognitive_state=cognitive, raw=raw,
        )

    if skill == "look":
        if "direction" not in args:
            return Invalid("missing_argument", "direction", raw)
        if "magnitude" not in args:
            return Invalid("missing_argument", "magnitude", raw)
        direction = args["direction"]
        if not isinstance(direction, str):
            return Invalid("bad_type", "direction must be a string", raw)
        if direction not in LOOK_DIRECTIONS:
            return Invalid("out_of_range", f"direction {direction!r}", raw)
        magnitude = args["magnitude"]
        if isinstance(magnitude, bool) or not isinstance(magnitude, (int, float)):
            return Invalid("bad_type", "magnitude must be a number", raw)
        if not _positive_number(magnitude):
            return Invalid("out_of_range", "magnitude must be positive and finite", raw)
        return Action(
            "look", direction=direction, magnitude=magnitude, thought=thought,
            cognitive_state=cognitive, raw=raw,
        )

    if skill == "interact_pixel":
        if "intent" not in args:
            return Invalid("missing_argument", "intent", raw)
        intent = args["intent"]
        if not isinstance(intent, str):
            return Invalid("bad_type", "intent must be a string", raw)
        folded = intent.strip().casefold()
        folded = INTENT_ALIASES.get(folded, folded)
        if folded not in CANONICAL_INTENTS:
            return Invalid("out_of_range", f"intent {intent!r}", raw)
        if folded == "drop":
            return Action(
                "interact_pixel", intent=folded, thought=thought,
                cognitive_state=cognitive, raw=raw,
            )
        if "x" not in args or "y" not in args:
            return Invalid("missing_argument", "x and y", raw)
        x, y = args["x"], args["y"]
        if isinstance(x, bool) or isinstance(y, bool) or not isinstance(x, int) or not isinstance(y, int):
            return Invalid("bad_type", "x and y must be integers", raw)
        if not (_coord_ok(x) and _coord_ok(y)):
            return Invalid("out_of_range", "x and y must be in [0, 1000]", raw)
        return Action(
            "interact_pixel", intent=folded, x=x, y=y, thought=thought,
            cognitive_state=cognitive, raw=raw,
        )

    # report
    if "status" not in args:
        return Invalid("missing_argument", "status", raw)
    if "summary" not in args:
        return Invalid("missing_argument", "summary", raw)
    status = args["status"]
    summary = args["summary"]
    if not isinstance(status, str):
        return Invalid("bad_type", "status must be a string", raw)
    if not isinstance(summary, str):
        return Invalid("bad_type", "summary must be a string", raw)
    content = ReportContent(status=normalize_status(status), summary=summary)
    return Action(
        "report", report=content, thought=thought, cognitive_state=cognitive, raw=raw,
    )


@dataclass
class BudgetState:
    """Step and invalid-action budgets for one episode.

    Counters saturate at their limits: a turn that would exceed a limit
    trips the corresponding terminal verdict without pushing the counter
    past it, so ``steps_used <= step_budget`` and
    ``invalids_used <= invalid_limit`` hold at every observable point.
    """

    step_budget: int
    invalid_limit: int
    steps_used: int = 0
    invalids_used: int = 0

    @property
    def steps_remaining(self) -> int:
        return self.step_budget - self.steps_used

    @property
    def invalids_remaining(self) -> int:
        return self.invalid_limit - self.invalids_used


GATE_PROCEED = "proceed"
GATE_NO_REPORT = "terminate_no_report"
GATE_INVALID_LIMIT = "terminate_invalid_limit"


def step_gate(budget: BudgetState, parsed: ParseResult) -> str:
    """Admit or terminate one agent turn, before world application.

    Every admitted turn (valid or invalid) consumes one step; an invalid
    action additionally consumes invalid allowance. Exhausted steps trump
    the invalid limit when both would trip on the same turn request.
    """
    if budget.steps_used >= budget.step_budget:
        return GATE_NO_REPORT
    budget.steps_used += 1
    if isinstance(parsed, Invalid):
        if budget.invalids_used >= budget.invalid_limit:
            return GATE_INVALID_LIMIT
        budget.invalids_used += 1
    return GATE_PROCEED


class DialogueHistory:
    """FIFO-bounded (observation summary, raw agent output) turn log."""

    def __init__(self, capacity: int = HISTORY_CAPACITY):
        self.capacity = capacity
        self._turns: deque = deque(maxlen=capacity)

    def push(self, observation_summary: str, raw_output: str) -> None:
        self._turns.append((observation_summary, raw_output))

    def turns(self) -> list[tuple[str, str]]:
        return list(self._turns)

    def __len__(self) -> int:
        return len(self._turns)


def _load_block(name: str) -> str:
    return resources.files("gridclosure.prompts").joinpath(name).read_text("utf-8")


# Action registry used to serialize the allowed-actions block; kept as data so
# the schema text, the parser, and the wire docs cannot drift apart.
ACTION_REGISTRY = [
    (
        "navigate",
        [
            ("mode", "enum", "required", "forward, backward, turn_left, turn_right"),
            ("magnitude", "number", "required", "step count (forward/backward) or rotation in degrees (turns)"),
        ],
    ),
    (
        "look",
        [
            ("direction", "enum", "required", "up, down"),
            ("magnitude", "number", "required", "pitch change in degrees"),
        ],
    ),
    (
        "interact_pixel",
        [
            ("intent", "enum", "required", "one of the canonical intents below"),
            ("x", "int", "required unless intent is drop", "horizontal coordinate in the current frame"),
            ("y", "int", "required unless intent is drop", "vertical coordinate in the current frame"),
        ],
    ),
    (
        "report",
        [
            ("status", "enum", "required", "success, fail, unsafe, invalid, on, off, open, closed"),
            ("summary", "string", "required", "brief justification for the chosen status"),
        ],
    ),
]

INTENT_NOTES = [
    ("ground", "point at / locate an object without changing world state", True),
    ("open_access", "open a container or access point", True),
    ("close_access", "close a container or access point", True),
    ("activate", "turn on / toggle on", True),
    ("deactivate", "turn off / toggle off", True),
    ("pick", "pick up an object", True),
    ("place", "place the held object at the target", True),
    ("drop", "drop the currently held object", False),
]

STATUS_NOTES = [
    ("success", "the task goal has been achieved"),
    ("fail", "the task cannot be completed"),
    ("unsafe", "a safety concern prevents completion"),
    ("invalid", "the task is invalid or unsolvable"),
    ("on", "state-recognition report: observed state is on"),
    ("off", "state-recognition report: observed state is off"),
    ("open", "state-recognition report: observed state is open"),
    ("closed", "state-recognition report: observed state is closed"),
]


def action_schema_block() -> str:
    """Serialize the action registry into the allowed-actions prompt block."""
    lines = ["## Allowed actions", "- navigate | look | interact_pixel | report", ""]
    for skill, arguments in ACTION_REGISTRY:
        lines.append(f"### {skill}")
        for name, typ, req, desc in arguments:
            lines.append(f"- {name} ({typ}, {req}): {desc}")
        lines.append("")
    lines.append("Canonical intents for interact_pixel:")
    for intent, desc, needs_xy in INTENT_NOTES:
        coords = "requires x, y" if needs_xy else "no coordinates"
        lines.append(f"- {intent}: {desc} ({coords})")
    lines.append("")
    lines.append("Report statuses:")
    for status, desc in STATUS_NOTES:
        lines.append(f"- {status}: {desc}")
    return "\n".join(lines) + "\n"


def render_prompt(task_instruction: str, coordinate_mode: str = "normalized_1000") -> tuple[str, str]:
    """Assemble the system prompt and return (text, sha256 hex digest).

    Blocks concatenate verbatim in fixed order with the task instruction
    substituted into the task block. The normalized-coordinate rule is
    prepended when coordinate_mode is ``normalized_1000``.
    """
    block1 = _load_block("block1_task.txt").replace("<TASK_INSTRUCTION>", task_instruction)
    parts = [block1, action_schema_block(), _load_block("block3_grounding.txt"),
             _load_block("block4_output.txt")]
    text = "\n".join(parts)
    if coordinate_mode == "normalized_1000":
        text = _load_block("normalized_coords.txt") + "\n" + text
    return text, sha256_hex(text.encode("utf-8"))
