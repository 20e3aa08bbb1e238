from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FunctionJudge, load_responses, prefers_marker
from hmaw.backend import Constant, MockBackend, Sequence
from hmaw.errors import EmptyInput, GoldUnparseable, ScriptExhausted
from hmaw.evaluation import (
    PreferenceScore,
    Verdict,
    aggregate,
    debiased_preference,
    extract_numeric_answer,
    judge_pair,
    parse_choice,
    parse_gold,
    render_judge_prompt,
    score_objective,
    timing_summary,
)
from hmaw.workflow import Query

Q = Query("q", "How do magnets work?")


# -- judge parsing -------------------------------------------------------------


@pytest.mark.parametrize(
    "reply, expected",
    [
        ("1", Verdict.First),
        ("2", Verdict.Second),
        (" 2.\n", Verdict.Second),
        ("**1**", Verdict.First),
        ("Response 2 is clearer and more complete.", Verdict.Second),
        ("I prefer response 1 because it is concise.", Verdict.First),
        ("Output: 2", Verdict.Second),
        ("Both responses are fine, hard to say.", Verdict.Invalid),
        ("Response 1 is good but Response 2 is better", Verdict.Invalid),
        ("", Verdict.Invalid),
        ("3", Verdict.Invalid),
        ("I'd give it 1.5 out of 2 stars", Verdict.Invalid),
    ],
)
def test_parse_choice(reply, expected):
    assert parse_choice(reply) is expected


def test_judge_pair_labels_in_given_order():
    judge = MockBackend(Constant("1"))
    verdict = judge_pair(judge, Q, "alpha", "beta")
    assert verdict.preferred is Verdict.First and verdict.raw_reply == "1"
    prompt = judge.requests[0].messages[-1].content
    assert prompt.index("### Response 1\nalpha") < prompt.index("### Response 2\nbeta")
    assert Q.text in prompt
    assert judge.requests[0].temperature == 0.0


def test_judge_pair_second_and_invalid():
    assert judge_pair(MockBackend(Constant("2")), Q, "a", "b").preferred is Verdict.Second
    assert judge_pair(MockBackend(Constant("no idea")), Q, "a", "b").preferred is Verdict.Invalid


def test_judge_pair_rejects_empty_responses():
    with pytest.raises(ValueError):
        judge_pair(MockBackend(Constant("1")), Q, "", "b")


def test_render_judge_prompt_custom_template():
    assert render_judge_prompt(Q, "A", "B", "$query|$first|$second") == f"{Q.text}|A|B"


# -- debiasing -----------------------------------------------------------------


def test_position_bias_cancels():
    judge = MockBackend(Constant("1"))
    s = debiased_preference(judge, Q, "cand", "ref")
    assert s.score == 0.5
    assert judge.call_count == 2


def test_prefers_candidate_both_passes():
    judge = FunctionJudge(prefers_marker())
    assert debiased_preference(judge, Q, "GOOD cand", "ref").score == 1.0
    assert judge.calls == [("GOOD cand", "ref"), ("ref", "GOOD cand")]


def test_prefers_reference_both_passes():
    assert debiased_preference(FunctionJudge(prefers_marker()), Q, "cand", "GOOD ref").score == 0.0


def test_invalid_pass_is_neutral():
    judge = MockBackend(Sequence(["1", "blah"]))
    s = debiased_preference(judge, Q, "c", "r")
    assert s.verdict_b_first.preferred is Verdict.Invalid
    assert s.score == 0.5


def test_judge_retries_on_invalid():
    judge = MockBackend(Sequence(["???", "1", "2"]))
    s = debiased_preference(judge, Q, "c", "r", max_attempts=2)
    assert s.score == 1.0 and judge.call_count == 3


def test_backend_error_reports_pass():
    with pytest.raises(ScriptExhausted) as info:
        debiased_preference(MockBackend(Sequence(["1"])), Q, "c", "r")
    assert info.value.step_index == 1


responses = st.text(alphabet="abcxyz GOD", min_size=1, max_size=12).filter(str.strip)
replies = st.sampled_from(["1", "2", "garbage"])


@given(a=responses, b=responses, table=st.dictionaries(st.tuples(responses, responses), replies))
def test_symmetry_for_deterministic_judges(a, b, table):
    def decide(first, second):
        return table.get((first, second), "1" if len(first) >= len(second) else "2")

    ab = debiased_preference(FunctionJudge(decide), Q, a, b).score
    ba = debiased_preference(FunctionJudge(decide), Q, b, a).score
    assert ab + ba == 1
    assert ab in (0, 0.5, 1)


@given(a=responses, b=responses, position=st.sampled_from(["1", "2"]))
def test_pure_position_bias_is_half(a, b, position):
    assert debiased_preference(MockBackend(Constant(position)), Q, a, b).score == 0.5


# Ten-case fixture for aggregation. Verdicts per case were enumerated by hand
# from the judge rule "prefer the reply containing GOOD; reply 1 when neither
# or both do; reply 'unsure' if either contains UNSURE":
#   case  candidate / reference       pass1 (c,r)  pass2 (r,c)  score
#   1-4   GOOD / plain                1 -> 1pt     2 -> 1pt     1.0
#   5-6   plain / GOOD                2 -> 0pt     1 -> 0pt     0.0
#   7-8   plain / plain               1 -> 1pt     1 -> 0pt     0.5
#   9     GOOD / GOOD                 1 -> 1pt     1 -> 0pt     0.5
#   10    UNSURE / plain              invalid      invalid      0.5 (neutral)
# sum = 4 + 0 + 1 + 0.5 + 0.5 = 6.0, mean = 0.6
TEN_CASES = (
    [("GOOD c", "r")] * 4 + [("c", "GOOD r")] * 2 + [("c", "r")] * 2 + [("GOOD c", "GOOD r"), ("UNSURE c", "r")]
)
HAND_SCORES = [1.0] * 4 + [0.0] * 2 + [0.5] * 4


def _ten_case_judge(first, second):
    if "UNSURE" in first or "UNSURE" in second:
        return "unsure"
    return prefers_marker()(first, second)


def test_ten_case_aggregate_matches_hand_tally():
    judge = FunctionJudge(_ten_case_judge)
    scores = [debiased_preference(judge, Query(f"c{i}", "q?"), c, r) for i, (c, r) in enumerate(TEN_CASES)]
    assert [s.score for s in scores] == HAND_SCORES
    report = aggregate(scores)
    assert report.mean == 0.6
    assert report.reference_mean == pytest.approx(0.4)
    assert report.metric_kind == "preference" and report.n == 10


# -- objective -----------------------------------------------------------------


@pytest.mark.parametrize(
    "text, expected",
    [
        ("So the answer is 42.", Fraction(42)),
        ("She pays $1,250.50 total", Fraction("1250.50")),
        ("no digits here", None),
        ("between 3 and 4, so 3-4", Fraction(4)),
        ("It drops to -7 degrees", Fraction(-7)),
        ("about .5 of it", Fraction(1, 2)),
        ("1,000,000 people!", Fraction(1000000)),
        ("72.0", Fraction(72)),
    ],
)
def test_extract_numeric_answer(text, expected):
    assert extract_numeric_answer(text) == expected


def test_exact_rational_comparison():
    assert extract_numeric_answer("0.3") == Fraction(1, 10) + Fraction(2, 10)


@pytest.mark.parametrize(
    "response, gold, correct",
    [("answer: 72", "72", True), ("answer: 72.0", "72", True), ("answer: 71", "72", False), ("none", "72", False)],
)
def test_score_objective(response, gold, correct):
    assert score_objective(response, gold).correct is correct


def test_gold_formats():
    assert parse_gold("#### 1,234") == 1234
    assert parse_gold("$5.50") == Fraction(11, 2)
    with pytest.raises(GoldUnparseable):
        parse_gold("seventy two")
    with pytest.raises(GoldUnparseable):
        score_objective("72", "")


def test_accuracy_matches_independent_tally(gsm20):
    responses = load_responses("gsm20_responses.json")
    scores = [score_objective(responses[q.id]["response"], q.gold_answer, q.id) for q in gsm20.queries]
    tally = sum(1 for q in gsm20.queries if responses[q.id]["hand_tally"])
    report = aggregate(scores)
    assert report.metric_kind == "accuracy"
    assert report.mean == tally / len(gsm20) == 0.75
    assert [s.correct for s in scores] == [responses[q.id]["hand_tally"] for q in gsm20.queries]


# -- aggregation ---------------------------------------------------------------


def _pref(score):
    from hmaw.evaluation import JudgeVerdict

    v = JudgeVerdict(Verdict.First, "1")
    return PreferenceScore("x", score, v, v)


def test_aggregate_mean():
    assert aggregate([_pref(s) for s in (1, 0, 0.5, 0.5)]).mean == 0.5


def test_aggregate_empty():
    with pytest.raises(EmptyInput):
        aggregate([])


def test_overhead_percent_education_figures():
    timing = timing_summary([3.74], [3.74 + 7.76])
    assert timing.mean_overhead_latency == pytest.approx(7.76)
    assert timing.overhead_percent == pytest.approx(207.49, abs=0.01)


def test_overhead_zero_baseline():
    assert timing_summary([0.0], [1.0]).overhead_percent is None
