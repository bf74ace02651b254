"""Aggregate metrics, closure decomposition, step-level diagnostics,
counterfactual report-policy rescoring, and paired feedback comparison.

All functions are pure reads over settled traces. Counterfactual
identities hold exactly: the oracle rescore equals W, the analytic random
policy equals 0.5 * W, and always-success equals W on goal-completion
episodes and zero on state-verification episodes.
"""

from dataclasses import dataclass
from typing import Optional

from .settlement import TERMINAL_ABORTED, TERMINAL_REPORT, Trace

COUNTERFACTUAL_POLICIES = ("always_success", "random_expected", "oracle")

_SKILL_BUCKETS = ("navigate", "look", "interact_pixel", "report", "invalid")


def _family(trace: Trace) -> str:
    return trace.header["family"]


def _is_sv(trace: Trace) -> bool:
    return _family(trace) == "sv"


def _pct(numerator: int, denominator: int) -> Optional[float]:
    if denominator == 0:
        return None
    return 100.0 * numerator / denominator


def _check_same_pack(traces) -> str:
    hashes = {t.header.get("pack_hash", "") for t in traces}
    if len(hashes) > 1:
        raise ValueError(f"traces span multiple packs: {sorted(hashes)}")
    return next(iter(hashes)) if hashes else ""


def _live(traces) -> list:
    """Traces inside the three-cause taxonomy; aborted ones are reported
    separately and never enter rates."""
    return [t for t in traces if t.settlement.terminal_cause != TERMINAL_ABORTED]


@dataclass
class MetricsReport:
    pack_hash: str
    n_episodes: int
    n_aborted: int
    overall: dict
    families: dict
    rates: dict
    belief_lag: dict
    false_success: dict
    post_attainment: Optional[dict]
    counterfactual: dict
    feedback: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "pack_hash": self.pack_hash,
            "n_episodes": self.n_episodes,
            "n_aborted": self.n_aborted,
            "overall": self.overall,
            "families": self.families,
            "rates": self.rates,
            "belief_lag": self.belief_lag,
            "false_success": self.false_success,
            "post_attainment": self.post_attainment,
            "counterfactual": self.counterfactual,
            "feedback": self.feedback,
        }


def _wb_block(traces) -> dict:
    n = len(traces)
    w = sum(t.settlement.w_sem for t in traces)
    ws = sum(t.settlement.w_strict for t in traces)
    b = sum(t.settlement.b for t in traces)
    w_pct = _pct(w, n)
    b_pct = _pct(b, n)
    return {
        "n": n,
        "w": w_pct,
        "w_strict": _pct(ws, n),
        "b": b_pct,
        "delta": (w_pct - b_pct) if n else None,
    }


@dataclass
class RunPair:
    """A base run and a feedback run over the identical episode set."""

    base_run_id: str
    feedback_run_id: str
    pack_hash: str


def aggregate(traces) -> MetricsReport:
    """Fold settled traces into the full metrics report.

    Order-insensitive: traces are sorted by episode id before folding.
    Feedback deltas are attached separately via :func:`compare_feedback`.
    """
    traces = sorted(traces, key=lambda t: t.episode_id)
    pack_hash = _check_same_pack(traces)
    live = _live(traces)
    n = len(live)

    families: dict = {}
    for trace in live:
        families.setdefault(_family(trace), []).append(trace)
    family_blocks = {fam: _wb_block(items) for fam, items in sorted(families.items())}

    stop = sum(1 for t in live if t.settlement.terminal_cause == TERMINAL_REPORT)
    fr = sum(1 for t in live if t.settlement.fr)
    nr = sum(1 for t in live if t.settlement.nr)
    il = sum(1 for t in live if t.settlement.il)
    w0 = [t for t in live if not t.settlement.w_sem]
    w1 = [t for t in live if t.settlement.w_sem]
    rep_w0 = sum(1 for t in w0 if t.settlement.terminal_cause == TERMINAL_REPORT)
    norep_w1 = sum(1 for t in w1 if t.settlement.terminal_cause != TERMINAL_REPORT)

    rates = {
        "fr": _pct(fr, n),
        "nr": _pct(nr, n),
        "il": _pct(il, n),
        "stop_pct": _pct(stop, n),
        "p_report_given_w0": _pct(rep_w0, len(w0)),
        "p_noreport_given_w1": _pct(norep_w1, len(w1)),
        "n_w0": len(w0),
        "n_w1": len(w1),
    }

    report = MetricsReport(
        pack_hash=pack_hash,
        n_episodes=n,
        n_aborted=len(traces) - n,
        overall=_wb_block(live),
        families=family_blocks,
        rates=rates,
        belief_lag=belief_lag(live),
        false_success=false_success_buckets(live),
        post_attainment=post_attainment_distribution(live),
        counterfactual={
            "actual": _wb_block(live)["b"],
            "always_success": rescore_counterfactual(live, "always_success"),
            "random_expected": rescore_counterfactual(live, "random_expected"),
            "oracle": rescore_counterfactual(live, "oracle"),
        },
    )
    return report


def belief_lag(traces) -> dict:
    """Steps from first goal satisfaction to the correct terminal report,
    over W=1 and B=1 episodes. Empty conditioning set reports an absent
    mean, never zero."""
    lags = {}
    for trace in _live(traces):
        s = trace.settlement
        if s.w_sem and s.b and s.first_goal_step is not None and s.report_step is not None:
            lags[trace.episode_id] = s.report_step - s.first_goal_step
    values = list(lags.values())
    return {
        "n": len(values),
        "mean": (sum(values) / len(values)) if values else None,
        "per_episode": lags,
    }


def false_success_buckets(traces) -> dict:
    """Premature success claims by task progress at the report step.

    Conditioning set: goal-completion traces with a false report whose
    status was ``success``. Buckets: exactly zero, intermediate (0, 0.75],
    and above 0.75.
    """
    fs = [
        t
        for t in _live(traces)
        if not _is_sv(t)
        and t.settlement.fr
        and t.settlement.report is not None
        and t.settlement.report.status == "success"
    ]
    at_zero = sum(1 for t in fs if t.settlement.progress_at_report == 0.0)
    high = sum(1 for t in fs if t.settlement.progress_at_report > 0.75)
    mid = len(fs) - at_zero - high
    return {
        "n": len(fs),
        "at_zero": at_zero,
        "intermediate": mid,
        "above_075": high,
        "at_zero_pct": _pct(at_zero, len(fs)),
        "intermediate_pct": _pct(mid, len(fs)),
        "above_075_pct": _pct(high, len(fs)),
    }


def post_attainment_distribution(traces) -> Optional[dict]:
    """Pooled action-type fractions over steps strictly after the first
    goal satisfaction, across W=1 episodes."""
    counts = {bucket: 0 for bucket in _SKILL_BUCKETS}
    total = 0
    for trace in _live(traces):
        s = trace.settlement
        if not s.w_sem or s.first_goal_step is None:
            continue
        for record in trace.steps:
            if record.step <= s.first_goal_step:
                continue
            bucket = record.skill if record.skill is not None else "invalid"
            counts[bucket] += 1
            total += 1
    if total == 0:
        return None
    return {
        "n_steps": total,
        **{bucket: 100.0 * counts[bucket] / total for bucket in _SKILL_BUCKETS},
    }


def rescore_counterfactual(traces, policy: str) -> Optional[float]:
    """Benchmark success (percent) under a substituted terminal report.

    Execution, stop timing, and the final world state are never altered;
    only the report content is replaced at the final state. Pure read.
    """
    if policy not in COUNTERFACTUAL_POLICIES:
        raise ValueError(f"unknown counterfactual policy: {policy}")
    live = _live(traces)
    if not live:
        return None
    total = 0.0
    for trace in live:
        w = 1.0 if trace.settlement.w_sem else 0.0
        if policy == "oracle":
            total += w
        elif policy == "random_expected":
            total += 0.5 * w
        elif policy == "always_success":
            # success matches only in goal-completion mode and only when W=1
            total += 0.0 if _is_sv(trace) else w
    return 100.0 * total / len(live)


def _event_means(traces) -> dict:
    n = len(traces)
    too_far = 0
    path_blocked = 0
    retries = 0
    for trace in traces:
        signatures: dict = {}
        for record in trace.steps:
            if record.feedback.too_far:
                too_far += 1
            if record.feedback.path_blocked:
                path_blocked += 1
            if record.skill == "interact_pixel" and record.action is not None:
                sig = (record.action.get("intent"), record.action.get("x"), record.action.get("y"))
                signatures[sig] = signatures.get(sig, 0) + 1
        retries += sum(c - 1 for c in signatures.values() if c > 1)
    return {
        "too_far_mean": too_far / n if n else None,
        "path_blocked_mean": path_blocked / n if n else None,
        "retry_mean": retries / n if n else None,
    }


def compare_feedback(base_traces, feedback_traces) -> dict:
    """Deltas (feedback minus base, in points) plus per-run event means.

    Both runs must cover the identical episode set of the same pack.
    """
    base_hash = _check_same_pack(base_traces)
    fb_hash = _check_same_pack(feedback_traces)
    if base_hash != fb_hash:
        raise ValueError("paired runs come from different packs")
    base_ids = sorted(t.episode_id for t in base_traces)
    fb_ids = sorted(t.episode_id for t in feedback_traces)
    if base_ids != fb_ids:
        raise ValueError("paired runs cover different episode sets")

    def rates(traces):
        live = _live(traces)
        n = len(live)
        return {
            "w": _pct(sum(t.settlement.w_sem for t in live), n),
            "b": _pct(sum(t.settlement.b for t in live), n),
            "fr": _pct(sum(t.settlement.fr for t in live), n),
            "nr": _pct(sum(t.settlement.nr for t in live), n),
        }

    base_rates = rates(base_traces)
    fb_rates = rates(feedback_traces)
    return {
        "delta_w": fb_rates["w"] - base_rates["w"],
        "delta_b": fb_rates["b"] - base_rates["b"],
        "delta_fr": fb_rates["fr"] - base_rates["fr"],
        "delta_nr": fb_rates["nr"] - base_rates["nr"],
        "base": {**base_rates, **_event_means(_live(base_traces))},
        "feedback": {**fb_rates, **_event_means(_live(feedback_traces))},
    }
