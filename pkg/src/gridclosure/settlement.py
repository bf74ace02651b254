"""Deterministic episode settlement.

Dual-metric world completion (semantic/strict), report matching in
goal-completion and state-verification modes, benchmark success, the
FR/NR/IL closure labels, and immutable JSON-Lines trace records with
content digests.
"""

import json
from dataclasses import dataclass
from typing import Optional

from .canon import canon_dumps, sha256_hex
from .contract import ReportContent
from .episodes import EpisodeSpec, ProgressSample
from .world import FeedbackEvent

TERMINAL_REPORT = "report"
TERMINAL_BUDGET = "budget_exhausted"
TERMINAL_INVALID = "invalid_limit"
TERMINAL_ABORTED = "aborted"  # transport failure; outside the three paper causes

TERMINAL_CAUSES = (TERMINAL_REPORT, TERMINAL_BUDGET, TERMINAL_INVALID, TERMINAL_ABORTED)

NEGATIVE_STATUSES = ("fail", "unsafe", "invalid")
CATEGORICAL_STATUSES = ("on", "off", "open", "closed")


def match_report(
    mode: str,
    status: str,
    w_sem: bool,
    expected_label: Optional[str] = None,
) -> bool:
    """Deterministic report-content match.

    Goal-completion: success must coincide with W=1; fail/unsafe/invalid
    match only W=0 (the honest-fail branch); categorical state labels never
    match. State-verification: exact equality with the expected label;
    observability gates benchmark success separately, not the match.
    """
    if mode == "goal_completion":
        if status == "success":
            return w_sem
        if status in NEGATIVE_STATUSES:
            return not w_sem
        return False
    if mode == "state_verification":
        return status == expected_label
    raise ValueError(f"unknown match mode: {mode}")


@dataclass
class Settlement:
    terminal_cause: str
    w_sem: bool
    w_strict: bool
    b: bool
    match: bool
    report: Optional[ReportContent]
    fr: bool
    nr: bool
    il: bool
    first_goal_step: Optional[int]
    report_step: Optional[int]
    progress_at_report: Optional[float]

    def to_dict(self) -> dict:
        return {
            "terminal_cause": self.terminal_cause,
            "w_sem": int(self.w_sem),
            "w_strict": int(self.w_strict),
            "b": int(self.b),
            "match": self.match,
            "report": self.report.to_dict() if self.report else None,
            "fr": self.fr,
            "nr": self.nr,
            "il": self.il,
            "first_goal_step": self.first_goal_step,
            "report_step": self.report_step,
            "progress_at_report": self.progress_at_report,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Settlement":
        report = d["report"]
        return cls(
            terminal_cause=d["terminal_cause"],
            w_sem=bool(d["w_sem"]),
            w_strict=bool(d["w_strict"]),
            b=bool(d["b"]),
            match=d["match"],
            report=ReportContent(**report) if report else None,
            fr=d["fr"],
            nr=d["nr"],
            il=d["il"],
            first_goal_step=d["first_goal_step"],
            report_step=d["report_step"],
            progress_at_report=d["progress_at_report"],
        )

    def closure_case(self) -> str:
        """The five-way partition of episode closures."""
        if self.b:
            return "benchmark_success"
        if self.fr:
            return "false_report"
        if self.nr:
            return "no_report"
        if self.il:
            return "invalid_limit"
        if self.terminal_cause == TERMINAL_ABORTED:
            return "aborted"
        return "honest_non_success_match"


@dataclass
class StepRecord:
    """Exactly one record per consumed step."""

    step: int
    raw: str
    action: Optional[dict]
    invalid_reason: Optional[str]
    skill: Optional[str]
    feedback: FeedbackEvent
    sample: ProgressSample
    world_digest: str

    def to_dict(self) -> dict:
        return {
            "kind": "step",
            "step": self.step,
            "raw": self.raw,
            "action": self.action,
            "invalid_reason": self.invalid_reason,
            "skill": self.skill,
            "feedback": self.feedback.to_dict(),
            "sample": self.sample.to_dict(),
            "world_digest": self.world_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        sample = d["sample"]
        return cls(
            step=d["step"],
            raw=d["raw"],
            action=d["action"],
            invalid_reason=d["invalid_reason"],
            skill=d["skill"],
            feedback=FeedbackEvent(**d["feedback"]),
            sample=ProgressSample(
                step=sample["step"],
                w=bool(sample["w"]),
                w_strict=bool(sample["w_strict"]),
                progress=sample["progress"],
            ),
            world_digest=d["world_digest"],
        )


@dataclass
class Trace:
    """Header + step records + settlement; the canonical JSONL is the
    hashed artifact."""

    header: dict
    steps: list
    settlement: Settlement

    @property
    def episode_id(self) -> str:
        return self.header["episode_id"]

    def to_jsonl(self) -> str:
        lines = [canon_dumps({"kind": "header", **self.header})]
        lines.extend(canon_dumps(s.to_dict()) for s in self.steps)
        settle_line = {"kind": "settlement", "episode_id": self.episode_id}
        settle_line.update(self.settlement.to_dict())
        lines.append(canon_dumps(settle_line))
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return sha256_hex(self.to_jsonl().encode("utf-8"))

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        header = None
        steps = []
        settlement = None
        for obj in lines:
            kind = obj.pop("kind")
            if kind == "header":
                header = obj
            elif kind == "step":
                steps.append(StepRecord.from_dict({"kind": "step", **obj}))
            elif kind == "settlement":
                obj.pop("episode_id", None)
                settlement = Settlement.from_dict(obj)
        if header is None or settlement is None:
            raise ValueError("corrupt trace: missing header or settlement line")
        return cls(header=header, steps=steps, settlement=settlement)


def settle(
    spec: EpisodeSpec,
    steps: list,
    terminal_cause: str,
    report: Optional[ReportContent],
    initial_sample: ProgressSample,
) -> Settlement:
    """Settle a finished episode from its step records.

    World completion is the final sample's verdict (latched predicates are
    already folded into per-step samples). Budget and invalid-limit causes
    zero out benchmark success regardless of world state.
    """
    if terminal_cause not in TERMINAL_CAUSES:
        raise ValueError(f"unknown terminal cause: {terminal_cause}")
    if (terminal_cause == TERMINAL_REPORT) != (report is not None):
        raise ValueError("corrupt trace: report content inconsistent with terminal cause")
    for i, record in enumerate(steps, start=1):
        if record.step != i:
            raise ValueError("corrupt trace: non-contiguous step indices")

    final = steps[-1].sample if steps else initial_sample
    w_sem = final.w
    w_strict = final.w_strict

    matched = False
    b = False
    report_step = None
    progress_at_report = None
    if terminal_cause == TERMINAL_REPORT:
        matched = match_report(spec.mode, report.status, w_sem, spec.success.expected_label)
        b = bool(w_sem and matched)
        report_step = steps[-1].step
        progress_at_report = steps[-1].sample.progress

    first_goal_step = None
    for record in steps:
        if record.sample.w:
            first_goal_step = record.step
            break

    return Settlement(
        terminal_cause=terminal_cause,
        w_sem=w_sem,
        w_strict=w_strict,
        b=b,
        match=matched,
        report=report,
        fr=terminal_cause == TERMINAL_REPORT and not matched,
        nr=terminal_cause == TERMINAL_BUDGET,
        il=terminal_cause == TERMINAL_INVALID,
        first_goal_step=first_goal_step,
        report_step=report_step,
        progress_at_report=progress_at_report,
    )
