"""Action parsing, status normalization, budget gating, dialogue history,
and prompt assembly."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridclosure.contract import (
    GATE_INVALID_LIMIT,
    GATE_NO_REPORT,
    GATE_PROCEED,
    HISTORY_CAPACITY,
    REPORT_STATUSES,
    Action,
    BudgetState,
    DialogueHistory,
    Invalid,
    ReportContent,
    normalize_status,
    parse_action,
    render_prompt,
    serialize_action,
    step_gate,
)

# Reference digest for render_prompt("Turn on the lamp.") computed once with
# the coreutils sha256sum tool over the rendered bytes.
PROMPT_FIXTURE_DIGEST = "41bdac00c4625dc2f5a6180a3eae614d1d0b1f9a63c73e687fa7daf947428775"


class TestParse:
    def test_alias_open_normalizes(self):
        raw = '{"skill_name":"interact_pixel","arguments":{"intent":"open","x":310,"y":620}}'
        action = parse_action(raw)
        assert isinstance(action, Action)
        assert action.intent == "open_access"
        assert (action.x, action.y) == (310, 620)

    @pytest.mark.parametrize(
        "alias,canonical",
        [("open", "open_access"), ("close", "close_access"),
         ("toggle_on", "activate"), ("toggle_off", "deactivate"),
         (" Open ", "open_access"), ("TOGGLE_ON", "activate")],
    )
    def test_closed_alias_table(self, alias, canonical):
        raw = json.dumps({"skill_name": "interact_pixel",
                          "arguments": {"intent": alias, "x": 1, "y": 1}})
        action = parse_action(raw)
        assert isinstance(action, Action)
        assert action.intent == canonical

    def test_drop_valid_without_coordinates(self):
        raw = '{"skill_name":"interact_pixel","arguments":{"intent":"drop"}}'
        action = parse_action(raw)
        assert isinstance(action, Action)
        assert action.intent == "drop"
        assert action.x is None

    def test_prose_rejected_as_not_json(self):
        result = parse_action("I will now open the fridge")
        assert isinstance(result, Invalid)
        assert result.reason == "not_json"

    def test_code_fence_rejected(self):
        result = parse_action('```json\n{"skill_name":"report"}\n```')
        assert isinstance(result, Invalid)
        assert result.reason == "not_json"

    def test_two_objects_rejected(self):
        result = parse_action('{"skill_name":"look","arguments":{}} {"a":1}')
        assert isinstance(result, Invalid)
        assert result.reason == "multiple_objects"

    def test_trailing_prose_rejected(self):
        raw = '{"skill_name":"interact_pixel","arguments":{"intent":"drop"}} done'
        assert parse_action(raw).reason == "multiple_objects"

    def test_non_object_json_rejected(self):
        assert parse_action("[1,2,3]").reason == "not_json"
        assert parse_action("42").reason == "not_json"

    def test_unknown_skill(self):
        result = parse_action('{"skill_name":"fly","arguments":{}}')
        assert result.reason == "unknown_skill"

    def test_skill_names_exact_no_aliases(self):
        result = parse_action('{"skill_name":"Navigate","arguments":{"mode":"forward","magnitude":1}}')
        assert result.reason == "unknown_skill"

    def test_missing_required_keys(self):
        assert parse_action('{"arguments":{}}').reason == "missing_argument"
        assert parse_action('{"skill_name":"look"}').reason == "missing_argument"
        assert parse_action('{"skill_name":"look","arguments":{"direction":"up"}}').reason == "missing_argument"

    def test_unknown_intent_after_normalization_rejected(self):
        raw = '{"skill_name":"interact_pixel","arguments":{"intent":"smash","x":1,"y":1}}'
        assert parse_action(raw).reason == "out_of_range"

    def test_coordinates_required_and_ranged(self):
        base = {"skill_name": "interact_pixel", "arguments": {"intent": "pick"}}
        assert parse_action(json.dumps(base)).reason == "missing_argument"
        base["arguments"].update(x=1001, y=0)
        assert parse_action(json.dumps(base)).reason == "out_of_range"
        base["arguments"].update(x=3.5, y=0)
        assert parse_action(json.dumps(base)).reason == "bad_type"
        base["arguments"].update(x=True, y=0)
        assert parse_action(json.dumps(base)).reason == "bad_type"

    def test_navigate_magnitude_validation(self):
        raw = '{"skill_name":"navigate","arguments":{"mode":"forward","magnitude":-1}}'
        assert parse_action(raw).reason == "out_of_range"
        raw = '{"skill_name":"navigate","arguments":{"mode":"forward","magnitude":"two"}}'
        assert parse_action(raw).reason == "bad_type"
        raw = '{"skill_name":"navigate","arguments":{"mode":"sideways","magnitude":1}}'
        assert parse_action(raw).reason == "out_of_range"

    def test_non_finite_magnitudes_rejected(self):
        # json.loads accepts bare Infinity/NaN tokens; the contract must not
        for token in ("Infinity", "-Infinity", "NaN"):
            raw = f'{{"skill_name":"navigate","arguments":{{"mode":"forward","magnitude":{token}}}}}'
            result = parse_action(raw)
            assert isinstance(result, Invalid)
            assert result.reason == "out_of_range"

    def test_boolean_magnitude_rejected(self):
        raw = '{"skill_name":"look","arguments":{"direction":"up","magnitude":true}}'
        assert parse_action(raw).reason == "bad_type"

    def test_report_requires_status_and_summary(self):
        assert parse_action('{"skill_name":"report","arguments":{"status":"success"}}').reason == "missing_argument"
        raw = '{"skill_name":"report","arguments":{"status":"success","summary":"done"}}'
        action = parse_action(raw)
        assert isinstance(action, Action)
        assert action.report.status == "success"

    def test_garbled_status_becomes_canonical_invalid_status(self):
        raw = '{"skill_name":"report","arguments":{"status":"done","summary":"x"}}'
        action = parse_action(raw)
        assert isinstance(action, Action)  # still a well-formed report action
        assert action.report.status == "invalid"

    def test_thought_accepted_and_typed(self):
        raw = '{"skill_name":"look","arguments":{"direction":"up","magnitude":30},"thought":"hm"}'
        action = parse_action(raw)
        assert action.thought == "hm"
        raw = '{"skill_name":"look","arguments":{"direction":"up","magnitude":30},"thought":7}'
        assert parse_action(raw).reason == "bad_type"

    def test_unknown_extra_keys_tolerated(self):
        raw = '{"skill_name":"interact_pixel","arguments":{"intent":"drop","zz":1},"extra":true}'
        assert isinstance(parse_action(raw), Action)


def _valid_actions():
    magnitude = st.one_of(
        st.integers(min_value=1, max_value=500),
        st.floats(min_value=0.1, max_value=500, allow_nan=False, allow_infinity=False),
    )
    coord = st.integers(min_value=0, max_value=1000)
    summary = st.text(min_size=0, max_size=40)
    navigate = st.builds(
        lambda m, g: Action("navigate", mode=m, magnitude=g),
        st.sampled_from(("forward", "backward", "turn_left", "turn_right")),
        magnitude,
    )
    look = st.builds(
        lambda d, g: Action("look", direction=d, magnitude=g),
        st.sampled_from(("up", "down")),
        magnitude,
    )
    interact = st.one_of(
        st.builds(
            lambda i, x, y: Action("interact_pixel", intent=i, x=x, y=y),
            st.sampled_from(("ground", "open_access", "close_access", "activate",
                             "deactivate", "pick", "place")),
            coord,
            coord,
        ),
        st.just(Action("interact_pixel", intent="drop")),
    )
    report = st.builds(
        lambda s, t: Action("report", report=ReportContent(status=s, summary=t)),
        st.sampled_from(REPORT_STATUSES),
        summary,
    )
    return st.one_of(navigate, look, interact, report)


@given(_valid_actions())
@settings(max_examples=300, deadline=None)
def test_parse_serialize_roundtrip(action):
    parsed = parse_action(serialize_action(action))
    assert isinstance(parsed, Action)
    assert parsed.to_dict() == action.to_dict()


class TestNormalizeStatus:
    @pytest.mark.parametrize("raw,expected", [
        (" Success ", "success"),
        ("CLOSED", "closed"),
        ("on", "on"),
        ("done", "invalid"),
        ("", "invalid"),
        ("yes", "invalid"),
        (None, "invalid"),
    ])
    def test_total_normalization(self, raw, expected):
        assert normalize_status(raw) == expected


class TestStepGate:
    def pg_budget(self):
        return BudgetState(step_budget=5, invalid_limit=3)

    def valid(self):
        return parse_action('{"skill_name":"look","arguments":{"direction":"up","magnitude":30}}')

    def invalid(self):
        return parse_action("nonsense")

    def test_budget_exhaustion_trips_no_report(self):
        budget = self.pg_budget()
        for _ in range(5):
            assert step_gate(budget, self.valid()) == GATE_PROCEED
        assert step_gate(budget, self.valid()) == GATE_NO_REPORT
        assert budget.steps_used == 5  # saturates, never exceeds

    def test_fourth_invalid_trips_limit(self):
        budget = BudgetState(step_budget=12, invalid_limit=3)
        for _ in range(3):
            assert step_gate(budget, self.invalid()) == GATE_PROCEED
        assert step_gate(budget, self.invalid()) == GATE_INVALID_LIMIT
        assert budget.invalids_used == 3  # saturates at the limit

    def test_every_turn_consumes_a_step(self):
        budget = self.pg_budget()
        step_gate(budget, self.valid())
        step_gate(budget, self.invalid())
        assert budget.steps_used == 2
        assert budget.invalids_used == 1

    def test_valid_report_proceeds(self):
        budget = self.pg_budget()
        budget.steps_used = 1
        report = parse_action('{"skill_name":"report","arguments":{"status":"success","summary":""}}')
        assert step_gate(budget, report) == GATE_PROCEED

    def test_step_exhaustion_precedes_invalid_check(self):
        budget = BudgetState(step_budget=2, invalid_limit=0)
        budget.steps_used = 2
        assert step_gate(budget, self.invalid()) == GATE_NO_REPORT


class TestDialogueHistory:
    def test_capacity_bounded_fifo(self):
        history = DialogueHistory()
        for i in range(25):
            history.push(f"obs {i}", f"raw {i}")
            assert len(history) <= HISTORY_CAPACITY
        turns = history.turns()
        assert len(turns) == 20
        assert turns[0] == ("obs 5", "raw 5")  # oldest five evicted first
        assert turns[-1] == ("obs 24", "raw 24")


class TestPrompt:
    def test_same_instruction_same_digest(self):
        _, d1 = render_prompt("Find the mug.")
        _, d2 = render_prompt("Find the mug.")
        assert d1 == d2

    def test_different_instructions_differ(self):
        _, d1 = render_prompt("Find the mug.")
        _, d2 = render_prompt("Find the pen.")
        assert d1 != d2

    def test_fixture_digest_matches_independent_tool(self):
        text, digest = render_prompt("Turn on the lamp.")
        assert digest == PROMPT_FIXTURE_DIGEST
        assert "Turn on the lamp." in text

    def test_normalized_coordinate_rule_prepended(self):
        with_rule, _ = render_prompt("x", coordinate_mode="normalized_1000")
        without, _ = render_prompt("x", coordinate_mode="frame_pixels")
        assert with_rule.startswith("For interact_pixel")
        assert not without.startswith("For interact_pixel")
        assert with_rule.endswith(without)
