"""JSONL benchmark datasets and seeded subsetting.

Every dataset uses the same line schema::

    {"id": "g1", "query": "2+2?", "answer": "4"}

``answer`` is required for objective (exact-answer) tasks and optional
otherwise.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

from hmaw.errors import DuplicateId, GoldUnparseable, MalformedLine, MissingGoldAnswer, SubsetTooLarge
from hmaw.evaluation import parse_gold
from hmaw.workflow import Query

_MASK64 = (1 << 64) - 1


class TaskKind(str, enum.Enum):
    Subjective = "subjective"
    Objective = "objective"


@dataclass(frozen=True)
class Dataset:
    name: str
    task_kind: TaskKind
    queries: tuple[Query, ...]

    def __len__(self):
        return len(self.queries)

    @property
    def ids(self) -> list[str]:
        return [q.id for q in self.queries]


def load_jsonl(path: str | Path, task_kind: TaskKind, name: str | None = None) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    task_kind = TaskKind(task_kind)

    queries: list[Query] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise MalformedLine(line_no, "expected a JSON object")
            qid, text, answer = record.get("id"), record.get("query"), record.get("answer")
            if not isinstance(qid, str) or not qid:
                raise MalformedLine(line_no, "missing or non-string 'id'")
            if not isinstance(text, str) or not text.strip():
                raise MalformedLine(line_no, "missing or empty 'query'")
            if answer is not None and not isinstance(answer, str):
                raise MalformedLine(line_no, "'answer' must be a string")
            if task_kind is TaskKind.Objective:
                if answer is None:
                    raise MissingGoldAnswer(line_no)
                try:
                    parse_gold(answer)
                except GoldUnparseable:
                    raise MalformedLine(line_no, f"answer {answer!r} is not a number") from None
            if qid in seen:
                raise DuplicateId(qid)
            seen.add(qid)
            queries.append(Query(qid, text, answer))
    return Dataset(name or path.stem, task_kind, tuple(queries))


def write_jsonl(dataset: Dataset, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for q in dataset.queries:
            record = {"id": q.id, "query": q.text}
            if q.gold_answer is not None:
                record["answer"] = q.gold_answer
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


class SplitMix64:
    """SplitMix64 generator, pinned so subsets agree across platforms."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound), by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next()
            if x < limit:
                return x % bound


def sample_indices(size: int, n: int, seed: int) -> list[int]:
    """Choose ``n`` of ``range(size)`` with a partial Fisher-Yates shuffle.

    Returned indices are sorted, so the subset keeps dataset order.
    """
    rng = SplitMix64(seed)
    pool = list(range(size))
    for i in range(n):
        j = i + rng.below(size - i)
        pool[i], pool[j] = pool[j], pool[i]
    return sorted(pool[:n])


def sample_subset(dataset: Dataset, n: int, seed: int) -> Dataset:
    if n <= 0:
        raise ValueError("subset size must be positive")
    if n > len(dataset):
        raise SubsetTooLarge(f"asked for {n} records from a dataset of {len(dataset)}")
    picked = sample_indices(len(dataset), n, seed)
    return replace(dataset, queries=tuple(dataset.queries[i] for i in picked))
