from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from hmaw.backend import ChatResponse
from hmaw.datasets import TaskKind, load_jsonl

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def education():
    return load_jsonl(FIXTURES / "education.jsonl", TaskKind.Subjective)


@pytest.fixture
def gsm20():
    return load_jsonl(FIXTURES / "gsm20.jsonl", TaskKind.Objective)


def load_responses(name: str) -> dict:
    return json.loads((FIXTURES / name).read_text())


_RESPONSES = re.compile(r"### Response 1\n(.*)\n\n### Response 2\n(.*)\n\nWhich response", re.S)


def split_judge_prompt(prompt: str) -> tuple[str, str]:
    m = _RESPONSES.search(prompt)
    assert m, "judge prompt lost its response blocks"
    return m.group(1), m.group(2)


class FunctionJudge:
    """Judge whose reply is a pure function of the two listed responses."""

    def __init__(self, decide):
        self.decide = decide
        self.calls = []

    def chat(self, request):
        first, second = split_judge_prompt(request.messages[-1].content)
        self.calls.append((first, second))
        return ChatResponse(self.decide(first, second), latency=0.0)


def prefers_marker(marker: str = "GOOD"):
    """Prefer the response containing ``marker``; otherwise say "1"."""

    def decide(first, second):
        if marker in second and marker not in first:
            return "2"
        return "1"

    return decide


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # acceptance criteria print their own PASS line; report failures and skips here
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__ != "test_acceptance" or rep.when not in ("setup", "call"):
        return
    name = item.name.removeprefix("test_").replace("_", " ")
    if rep.failed:
        reason = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
        print(f"\n[FAIL] {name}: {reason}")
    elif rep.skipped:
        print(f"\n[SKIP] {name}: {rep.longrepr[-1] if isinstance(rep.longrepr, tuple) else ''}")
