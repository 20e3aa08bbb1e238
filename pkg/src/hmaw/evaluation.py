"""Response scoring.

Subjective tasks use a pairwise LLM judge run twice with the two responses
in swapped order, which cancels any preference for a listing position.
Objective tasks compare the last number in a response with the gold
answer using exact rational arithmetic.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from string import Template
from typing import Any

from hmaw.backend import ChatBackend, ChatRequest, Message
from hmaw.errors import BackendError, EmptyInput, GoldUnparseable
from hmaw.workflow import Query


class Verdict(str, enum.Enum):
    First = "first"
    Second = "second"
    Invalid = "invalid"


@dataclass(frozen=True)
class JudgeVerdict:
    preferred: Verdict
    raw_reply: str


@dataclass(frozen=True)
class PreferenceScore:
    query_id: str
    score: float
    verdict_a_first: JudgeVerdict
    verdict_b_first: JudgeVerdict

    @property
    def value(self) -> float:
        return self.score

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "score": self.score,
            "verdict_candidate_first": self.verdict_a_first.preferred.value,
            "verdict_reference_first": self.verdict_b_first.preferred.value,
            "raw_candidate_first": self.verdict_a_first.raw_reply,
            "raw_reference_first": self.verdict_b_first.raw_reply,
        }


@dataclass(frozen=True)
class ObjectiveScore:
    query_id: str
    extracted: Fraction | None
    correct: bool

    @property
    def value(self) -> float:
        return 1.0 if self.correct else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "extracted": None if self.extracted is None else str(self.extracted),
            "correct": self.correct,
            "score": self.value,
        }


# -- judge -------------------------------------------------------------------


def judge_template() -> str:
    return (resources.files("hmaw") / "templates" / "judge.txt").read_text(encoding="utf-8")


def render_judge_prompt(query: Query, first: str, second: str, template: str | None = None) -> str:
    template = judge_template() if template is None else template
    return Template(template).safe_substitute(query=query.text, first=first, second=second)


_BARE_CHOICE = re.compile(r"[\W_]*([12])[\W_]*")
_LABELED_CHOICE = re.compile(r"\b(?:response|answer|option|assistant)\s*#?\s*([12])\b", re.IGNORECASE)
_LOOSE_CHOICE = re.compile(r"(?<![\w.])([12])(?![\w]|\.\d)")
_ANY_NUMBER = re.compile(r"\d+(?:\.\d+)?")


def parse_choice(reply: str) -> Verdict:
    """Read a ``1``/``2`` choice from a judge reply.

    Tries a reply that is just the digit, then labeled mentions such as
    "Response 2", then stray digits. A reply naming both or neither is
    Invalid.
    """
    text = reply.strip()
    m = _BARE_CHOICE.fullmatch(text)
    if m:
        return Verdict.First if m.group(1) == "1" else Verdict.Second
    found = set(_LABELED_CHOICE.findall(text))
    if not found and set(_ANY_NUMBER.findall(text)) <= {"1", "2"}:
        # stray digits count only when the reply holds no other numbers
        found = set(_LOOSE_CHOICE.findall(text))
    if len(found) == 1:
        return Verdict.First if found.pop() == "1" else Verdict.Second
    return Verdict.Invalid


def judge_pair(
    judge: ChatBackend,
    query: Query,
    first: str,
    second: str,
    *,
    model: str = "default",
    template: str | None = None,
) -> JudgeVerdict:
    if not first.strip() or not second.strip():
        raise ValueError("both responses must be non-empty")
    prompt = render_judge_prompt(query, first, second, template)
    request = ChatRequest(model=model, messages=(Message("user", prompt),), temperature=0.0)
    reply = judge.chat(request).content
    return JudgeVerdict(parse_choice(reply), reply)


_PASS_POINTS = {
    # candidate listed first
    0: {Verdict.First: 1.0, Verdict.Second: 0.0},
    # reference listed first
    1: {Verdict.First: 0.0, Verdict.Second: 1.0},
}


def debiased_preference(
    judge: ChatBackend,
    query: Query,
    candidate: str,
    reference: str,
    *,
    model: str = "default",
    template: str | None = None,
    max_attempts: int = 1,
) -> PreferenceScore:
    """Score the candidate against the reference in both listing orders.

    Each pass gives the candidate 1 point if preferred and 0 if not; the
    score is the mean of the two passes. If either pass is still unreadable
    after ``max_attempts`` tries the case scores a neutral 0.5.
    """
    orders = [(candidate, reference), (reference, candidate)]
    verdicts = []
    for index, (first, second) in enumerate(orders):
        for _ in range(max_attempts):
            try:
                verdict = judge_pair(judge, query, first, second, model=model, template=template)
            except BackendError as exc:
                exc.step_index = index
                raise
            if verdict.preferred is not Verdict.Invalid:
                break
        verdicts.append(verdict)
    if any(v.preferred is Verdict.Invalid for v in verdicts):
        # neutral case; keeps every score in {0, 0.5, 1}
        score = 0.5
    else:
        score = sum(_PASS_POINTS[i][v.preferred] for i, v in enumerate(verdicts)) / 2
    return PreferenceScore(query.id, score, verdicts[0], verdicts[1])


# -- objective answers -------------------------------------------------------

_NUMBER = re.compile(
    r"(?<![\w.])-?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?!\d)"
    r"|(?<![\w.])-?\.\d+"
)
_GOLD = re.compile(r"-?(?:\d+(?:\.\d+)?|\.\d+)")


def extract_numeric_answer(text: str) -> Fraction | None:
    """Return the last number in ``text`` as an exact fraction, or None."""
    matches = _NUMBER.findall(text)
    if not matches:
        return None
    return Fraction(matches[-1].replace(",", ""))


def parse_gold(gold: str) -> Fraction:
    """Canonicalize a gold answer; GSM8K-style ``... #### 72`` is accepted."""
    text = gold.split("####")[-1].strip()
    text = text.replace(",", "").lstrip("$").strip().rstrip(".")
    if not _GOLD.fullmatch(text):
        raise GoldUnparseable(f"gold answer {gold!r} is not a number")
    return Fraction(text)


def score_objective(response: str, gold: str, query_id: str = "") -> ObjectiveScore:
    expected = parse_gold(gold)
    extracted = extract_numeric_answer(response)
    return ObjectiveScore(query_id, extracted, extracted is not None and extracted == expected)


# -- aggregation -------------------------------------------------------------


@dataclass
class Timing:
    mean_baseline_latency: float
    mean_pipeline_latency: float
    mean_overhead_latency: float
    overhead_percent: float | None

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class BenchmarkReport:
    dataset: str
    metric_kind: str  # "preference" or "accuracy"
    per_case: list[PreferenceScore | ObjectiveScore]
    mean: float
    n: int
    timing: Timing | None = None
    token_totals: dict[str, int | None] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def reference_mean(self) -> float | None:
        if self.metric_kind != "preference":
            return None
        return sum(1.0 - s.value for s in self.per_case) / self.n

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "metric_kind": self.metric_kind,
            "mean": self.mean,
            "reference_mean": self.reference_mean,
            "n": self.n,
            "timing": self.timing.to_dict() if self.timing else None,
            "token_totals": self.token_totals,
            "metadata": self.metadata,
            "per_case": [s.to_dict() for s in self.per_case],
        }


def timing_summary(baseline: list[float], pipeline: list[float]) -> Timing:
    """Mean latencies and the relative cost of the pipeline over the baseline.

    ``pipeline`` holds total per-case latency of the optimized run; the
    overhead is what it adds on top of the baseline.
    """
    if not baseline or len(baseline) != len(pipeline):
        raise EmptyInput("timing needs matching, non-empty latency lists")
    mean_base = sum(baseline) / len(baseline)
    mean_pipe = sum(pipeline) / len(pipeline)
    overhead = mean_pipe - mean_base
    percent = 100.0 * overhead / mean_base if mean_base > 0 else None
    return Timing(mean_base, mean_pipe, overhead, percent)


def aggregate(
    scores: list[PreferenceScore | ObjectiveScore],
    timings: tuple[list[float], list[float]] | None = None,
    *,
    dataset: str = "",
    token_totals: dict[str, int | None] | None = None,
) -> BenchmarkReport:
    if not scores:
        raise EmptyInput("no scores to aggregate")
    kinds = {type(s) for s in scores}
    if len(kinds) != 1:
        raise ValueError("cannot mix preference and objective scores")
    kind = "preference" if PreferenceScore in kinds else "accuracy"
    mean = sum(s.value for s in scores) / len(scores)
    timing = timing_summary(*timings) if timings is not None else None
    return BenchmarkReport(dataset, kind, list(scores), mean, len(scores), timing, token_totals or {})
