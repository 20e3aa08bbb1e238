import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmaw.datasets import Dataset, SplitMix64, TaskKind, load_jsonl, sample_indices, sample_subset, write_jsonl
from hmaw.errors import DuplicateId, MalformedLine, MissingGoldAnswer, SubsetTooLarge
from hmaw.workflow import Query


def write_lines(tmp_path, lines):
    p = tmp_path / "d.jsonl"
    p.write_text("".join((l if isinstance(l, str) else json.dumps(l)) + "\n" for l in lines), encoding="utf-8")
    return p


def test_objective_record(tmp_path):
    ds = load_jsonl(write_lines(tmp_path, [{"id": "g1", "query": "2+2?", "answer": "4"}]), TaskKind.Objective)
    assert ds.queries == (Query("g1", "2+2?", "4"),)
    assert ds.name == "d" and ds.task_kind is TaskKind.Objective


def test_missing_answer(tmp_path):
    p = write_lines(tmp_path, [{"id": "a", "query": "x", "answer": "1"}, {"id": "b", "query": "y"}])
    with pytest.raises(MissingGoldAnswer) as info:
        load_jsonl(p, TaskKind.Objective)
    assert info.value.line_no == 2
    assert len(load_jsonl(p, TaskKind.Subjective)) == 2


def test_duplicate_id(tmp_path):
    p = write_lines(tmp_path, [{"id": "a", "query": "x"}, {"id": "a", "query": "y"}])
    with pytest.raises(DuplicateId) as info:
        load_jsonl(p, TaskKind.Subjective)
    assert info.value.query_id == "a"


@pytest.mark.parametrize(
    "bad",
    ["{not json", '["a list"]', '{"id": 3, "query": "x"}', '{"id": "a", "query": "  "}', '{"id": "a", "query": "x", "answer": 4}'],
)
def test_malformed_lines_report_line_number(tmp_path, bad):
    p = write_lines(tmp_path, [{"id": "ok", "query": "fine"}, bad])
    with pytest.raises(MalformedLine) as info:
        load_jsonl(p, TaskKind.Subjective)
    assert info.value.line_no == 2


def test_unparseable_gold(tmp_path):
    p = write_lines(tmp_path, [{"id": "a", "query": "x", "answer": "many"}])
    with pytest.raises(MalformedLine):
        load_jsonl(p, TaskKind.Objective)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_jsonl(tmp_path / "nope.jsonl", TaskKind.Subjective)


def test_blank_lines_skipped(tmp_path):
    p = write_lines(tmp_path, [{"id": "a", "query": "x"}, "", {"id": "b", "query": "y"}])
    assert load_jsonl(p, TaskKind.Subjective).ids == ["a", "b"]


def test_fixtures_load(education, gsm20):
    assert len(education) == 10 and len(gsm20) == 20
    assert all(q.gold_answer for q in gsm20.queries)


def test_roundtrip(tmp_path, gsm20, education):
    for ds in (gsm20, education):
        out = tmp_path / f"{ds.name}.jsonl"
        write_jsonl(ds, out)
        assert load_jsonl(out, ds.task_kind) == ds


@given(
    records=st.lists(
        st.tuples(st.text(min_size=1, max_size=8), st.text(min_size=1).filter(str.strip), st.none() | st.text()),
        max_size=12,
        unique_by=lambda r: r[0],
    )
)
def test_roundtrip_property(tmp_path_factory, records):
    ds = Dataset("prop", TaskKind.Subjective, tuple(Query(i, t, a) for i, t, a in records))
    out = tmp_path_factory.mktemp("rt") / "prop.jsonl"
    write_jsonl(ds, out)
    assert load_jsonl(out, TaskKind.Subjective) == ds


# -- subsetting ----------------------------------------------------------------


def test_splitmix_reference_vectors():
    # published SplitMix64 outputs for seed 0
    rng = SplitMix64(0)
    assert [rng.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def _synthetic(size):
    return Dataset("syn", TaskKind.Subjective, tuple(Query(f"r{i:04d}", f"q{i}") for i in range(size)))


def test_full_subset_is_identity(education):
    assert sample_subset(education, len(education), seed=3) == education


def test_same_seed_same_subset(education):
    assert sample_subset(education, 4, 11).ids == sample_subset(education, 4, 11).ids


def test_subset_golden(fixtures):
    golden = json.loads((fixtures / "subset_n300_seed7.json").read_text())
    subset = sample_subset(_synthetic(golden["size"]), golden["n"], golden["seed"])
    assert subset.ids == golden["ids"]


def test_subset_too_large(education):
    with pytest.raises(SubsetTooLarge):
        sample_subset(education, 11, 0)


@given(size=st.integers(1, 200), data=st.data())
def test_subset_properties(size, data):
    n = data.draw(st.integers(1, size))
    seed = data.draw(st.integers(0, 2**64))
    idx = sample_indices(size, n, seed)
    assert len(idx) == n == len(set(idx))
    assert idx == sorted(idx) and all(0 <= i < size for i in idx)


def test_subset_roughly_uniform():
    counts = [0] * 10
    for seed in range(2000):
        for i in sample_indices(10, 3, seed):
            counts[i] += 1
    # each index expected 600 times; binomial sd is about 20
    assert all(500 < c < 700 for c in counts)


def test_below_bounds():
    rng = SplitMix64(42)
    assert all(0 <= rng.below(7) < 7 for _ in range(1000))
    with pytest.raises(ValueError):
        rng.below(0)
