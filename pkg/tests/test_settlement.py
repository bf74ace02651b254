"""Match rules, settlement, closure labels, trace digests, and replay."""

import pytest

from gridclosure.agents import PolicyConfig, run_policy
from gridclosure.canon import canon_dumps
from gridclosure.contract import ReportContent
from gridclosure.engine import replay_trace
from gridclosure.episodes import ProgressSample
from gridclosure.generate import generate_episode
from gridclosure.settlement import (
    TERMINAL_BUDGET,
    TERMINAL_INVALID,
    TERMINAL_REPORT,
    Settlement,
    StepRecord,
    Trace,
    match_report,
    settle,
)
from gridclosure.world import FeedbackEvent

STATUSES = ("success", "fail", "unsafe", "invalid", "on", "off", "open", "closed")

# Independent enumeration of the goal-completion match rule:
# success pairs with W=1; fail/unsafe/invalid pair with W=0 (honest fail);
# categorical labels never match in goal mode.
GOAL_TABLE = {
    ("success", 0): False, ("success", 1): True,
    ("fail", 0): True, ("fail", 1): False,
    ("unsafe", 0): True, ("unsafe", 1): False,
    ("invalid", 0): True, ("invalid", 1): False,
    ("on", 0): False, ("on", 1): False,
    ("off", 0): False, ("off", 1): False,
    ("open", 0): False, ("open", 1): False,
    ("closed", 0): False, ("closed", 1): False,
}


class TestMatchTruthTable:
    def test_goal_mode_all_sixteen_cases(self):
        for (status, w), expected in GOAL_TABLE.items():
            assert match_report("goal_completion", status, bool(w)) is expected, (status, w)

    def test_state_verification_exact_equality_only(self):
        # 8 statuses x 2 W values; the match is W-independent string equality
        for expected_label in ("on", "off", "open", "closed"):
            for status in STATUSES:
                for w in (False, True):
                    got = match_report("state_verification", status, w, expected_label)
                    assert got is (status == expected_label), (expected_label, status, w)

    def test_sv_rejects_success_and_fail(self):
        # the anomaly rule: goal statuses can never close a verification task
        assert not match_report("state_verification", "success", True, "on")
        assert not match_report("state_verification", "fail", False, "on")

    def test_unknown_mode_raises(self):
        with pytest.raises(ValueError):
            match_report("other", "success", True)


def _record(step, w, progress, skill="navigate", raw="{}", w_strict=None):
    return StepRecord(
        step=step,
        raw=raw,
        action={"skill": skill},
        invalid_reason=None,
        skill=skill,
        feedback=FeedbackEvent(),
        sample=ProgressSample(step=step, w=w, w_strict=w if w_strict is None else w_strict,
                              progress=progress),
        world_digest="0" * 64,
    )


def _initial():
    return ProgressSample(step=0, w=False, w_strict=False, progress=0.0)


class TestSettle:
    def spec(self, family="da"):
        return generate_episode(family, 12321)

    def test_oracle_shape(self):
        steps = [_record(1, False, 0.5), _record(2, True, 1.0),
                 _record(3, True, 1.0, skill="report")]
        s = settle(self.spec(), steps, TERMINAL_REPORT,
                   ReportContent("success", "done"), _initial())
        assert s.w_sem and s.b and s.match
        assert s.first_goal_step == 2
        assert s.report_step == 3
        assert s.closure_case() == "benchmark_success"

    def test_drift_shape_goal_met_then_budget(self):
        steps = [_record(i, i >= 7, 1.0 if i >= 7 else 0.3) for i in range(1, 13)]
        s = settle(self.spec(), steps, TERMINAL_BUDGET, None, _initial())
        assert s.w_sem and not s.b
        assert s.nr and not s.fr and not s.il
        assert s.first_goal_step == 7
        assert s.report_step is None
        assert s.closure_case() == "no_report"

    def test_eager_shape_false_success_at_zero_progress(self):
        steps = [_record(1, False, 0.0, skill="report")]
        s = settle(self.spec(), steps, TERMINAL_REPORT,
                   ReportContent("success", "sure"), _initial())
        assert not s.w_sem and not s.b
        assert s.fr
        assert s.progress_at_report == 0.0
        assert s.closure_case() == "false_report"

    def test_honest_fail_is_match_not_fr(self):
        steps = [_record(1, False, 0.0, skill="report")]
        s = settle(self.spec(), steps, TERMINAL_REPORT,
                   ReportContent("fail", "cannot"), _initial())
        assert s.match and not s.b and not s.fr
        assert s.closure_case() == "honest_non_success_match"

    def test_invalid_limit_labels_il(self):
        steps = [_record(1, False, 0.0)]
        s = settle(self.spec(), steps, TERMINAL_INVALID, None, _initial())
        assert s.il and not s.nr and not s.fr
        assert s.closure_case() == "invalid_limit"

    def test_budget_zeroes_b_regardless_of_world(self):
        steps = [_record(1, True, 1.0)]
        s = settle(self.spec(), steps, TERMINAL_BUDGET, None, _initial())
        assert s.w_sem and not s.b

    def test_sv_requires_observable_at_closure(self):
        spec = self.spec("sv")
        expected = spec.success.expected_label
        # correct label, state not observable at closure: match but no B
        steps = [_record(1, False, 0.0, skill="report")]
        s = settle(spec, steps, TERMINAL_REPORT, ReportContent(expected, "x"), _initial())
        assert s.match and not s.b
        # observable: benchmark success
        steps = [_record(1, True, 1.0, skill="report")]
        s = settle(spec, steps, TERMINAL_REPORT, ReportContent(expected, "x"), _initial())
        assert s.match and s.b

    def test_inconsistent_inputs_hard_error(self):
        with pytest.raises(ValueError):
            settle(self.spec(), [_record(1, False, 0.0)], TERMINAL_REPORT, None, _initial())
        with pytest.raises(ValueError):
            settle(self.spec(), [_record(2, False, 0.0)], TERMINAL_BUDGET, None, _initial())
        with pytest.raises(ValueError):
            settle(self.spec(), [], "weird_cause", None, _initial())

    def test_b_implies_w_and_match_across_policies(self):
        for family in ("pg", "sv", "sm"):
            spec = generate_episode(family, 777)
            for policy in ("oracle", "drift", "eager_reporter", "honest_fail", "random"):
                s = run_policy(spec, PolicyConfig(policy=policy, seed=3)).settlement
                if s.b:
                    assert s.w_sem and s.terminal_cause == TERMINAL_REPORT and s.match
                assert not s.w_strict or s.w_sem
                cases = [s.b, s.fr, s.nr, s.il,
                         s.terminal_cause == TERMINAL_REPORT and s.match and not s.b]
                assert sum(cases) == 1  # closure cases partition


class TestTraceDigest:
    def run_trace(self, seed=5, policy="oracle"):
        spec = generate_episode("ai", 424242)
        return spec, run_policy(spec, PolicyConfig(policy=policy, seed=seed))

    def test_identical_runs_equal_digests(self):
        _, a = self.run_trace()
        _, b = self.run_trace()
        assert a.digest() == b.digest()

    def test_feedback_flag_changes_digest(self):
        spec = generate_episode("ai", 424242)
        a = run_policy(spec, PolicyConfig(policy="oracle", seed=5), feedback=False)
        b = run_policy(spec, PolicyConfig(policy="oracle", seed=5), feedback=True)
        assert a.digest() != b.digest()

    def test_jsonl_roundtrip_preserves_bytes(self):
        _, trace = self.run_trace()
        text = trace.to_jsonl()
        again = Trace.from_jsonl(text)
        assert again.to_jsonl() == text
        assert again.digest() == trace.digest()

    def test_step_indices_contiguous(self):
        _, trace = self.run_trace(policy="random")
        for i, record in enumerate(trace.steps, start=1):
            assert record.step == i

    def test_replay_reproduces_settlement_byte_exactly(self):
        for family in ("pg", "da", "sv", "sm", "cr"):
            spec = generate_episode(family, 31415)
            for policy in ("oracle", "drift", "random"):
                trace = run_policy(spec, PolicyConfig(policy=policy, seed=9))
                stored = Trace.from_jsonl(trace.to_jsonl())
                replayed = replay_trace(spec, stored)
                assert canon_dumps(replayed.settlement.to_dict()) == canon_dumps(
                    stored.settlement.to_dict()
                )
                # raw lines replayed through the full engine also reproduce
                # the records themselves
                assert replayed.to_jsonl() == stored.to_jsonl()

    def test_settlement_roundtrip(self):
        _, trace = self.run_trace()
        d = trace.settlement.to_dict()
        assert Settlement.from_dict(dict(d)).to_dict() == d
