"""Run directories: batch generation, manifests, evaluation and sweeps.

Layout of a run directory::

    <out>/manifest.json
    <out>/traces/<query_id>.json

Evaluation reads traces back, so judging never re-pays generation cost.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import urllib.parse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from hmaw import __version__
from hmaw.backend import ChatBackend
from hmaw.chains import ChainConfig, build_chain, config_for_name
from hmaw.datasets import Dataset, TaskKind, load_jsonl, sample_subset
from hmaw.errors import ConfigError, HMAWError, MissingTraces, QueryIdMismatch
from hmaw.evaluation import (
    BenchmarkReport,
    aggregate,
    debiased_preference,
    score_objective,
)
from hmaw.workflow import BaselineStrategy, LayerChain, Query, WorkflowTrace, run_baseline, run_workflow

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TRACES = "traces"


@dataclass
class RunManifest:
    run_id: str
    dataset: dict[str, Any]
    backend: dict[str, Any]
    chain_config: dict[str, Any] | None = None
    baseline: str | None = None
    seed: int = 0
    limit: int | None = None
    tool_version: str = __version__
    query_ids: list[str] = field(default_factory=list)
    failures: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunManifest:
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class RunResult:
    out_dir: Path
    manifest: RunManifest
    traces: dict[str, WorkflowTrace]

    @property
    def ok(self) -> bool:
        return not self.manifest.failures


def new_run_id(label: str = "run") -> str:
    return f"{label}-{dt.datetime.now().strftime('%Y%m%dT%H%M%S%f')}"


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def trace_filename(query_id: str) -> str:
    return urllib.parse.quote(query_id, safe="") + ".json"


def write_json(path: Path, data: Any) -> None:
    """Write JSON atomically (temp file then rename)."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def prepare_out_dir(out_dir: str | Path, *, traces: bool = True) -> Path:
    out = Path(out_dir)
    try:
        (out / TRACES if traces else out).mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


def select_queries(dataset: Dataset, limit: int | None, seed: int) -> Dataset:
    if limit is None or limit >= len(dataset):
        return dataset
    return sample_subset(dataset, limit, seed)


def run_dataset(
    dataset: Dataset,
    out_dir: str | Path,
    backend: ChatBackend,
    *,
    chain: LayerChain | None = None,
    baseline: BaselineStrategy | None = None,
    manifest: RunManifest,
    model: str = "default",
    temperature: float = 0.0,
    max_tokens: int | None = None,
    workers: int = 1,
) -> RunResult:
    """Run every query through a chain or a baseline and persist traces.

    A failing query is recorded in the manifest and does not stop the batch.
    """
    if (chain is None) == (baseline is None):
        raise ConfigError("give exactly one of a chain or a baseline")
    out = prepare_out_dir(out_dir)
    settings = {"model": model, "temperature": temperature, "max_tokens": max_tokens}

    def one(query: Query):
        try:
            if chain is not None:
                trace = run_workflow(chain, query, backend, **settings)
            else:
                trace = run_baseline(baseline, query, backend, **settings)
        except HMAWError as exc:
            log.warning("query %s failed: %s", query.id, exc)
            return query.id, None, {
                "query_id": query.id,
                "error": type(exc).__name__,
                "message": str(exc),
                "step_index": getattr(exc, "step_index", None),
            }
        write_json(out / TRACES / trace_filename(query.id), trace.to_dict())
        return query.id, trace, None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(one, dataset.queries))

    traces = {qid: t for qid, t, _ in results if t is not None}
    manifest.query_ids = [q.id for q in dataset.queries]
    manifest.failures = [f for _, _, f in results if f is not None]
    write_json(out / MANIFEST, manifest.to_dict())
    return RunResult(out, manifest, traces)


def load_run(run_dir: str | Path) -> tuple[RunManifest, dict[str, WorkflowTrace]]:
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST
    if not manifest_path.is_file():
        raise MissingTraces(f"{run_dir} has no {MANIFEST}")
    manifest = RunManifest.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))
    traces = {}
    for path in sorted((run_dir / TRACES).glob("*.json")):
        trace = WorkflowTrace.from_dict(json.loads(path.read_text(encoding="utf-8")))
        traces[trace.query_id] = trace
    missing = [qid for qid in manifest.query_ids if qid not in traces]
    if missing or not traces:
        raise MissingTraces(f"{run_dir}: no trace for {missing[:5] or 'any query'}")
    return manifest, traces


def _token_totals(prefix: str, traces: dict[str, WorkflowTrace]) -> dict[str, int | None]:
    totals: dict[str, int | None] = {}
    for key in ("prompt_tokens", "completion_tokens"):
        values = [t.token_usage[key] for t in traces.values()]
        totals[f"{prefix}_{key}"] = None if any(v is None for v in values) else sum(values)
    return totals


def evaluate_preference(
    candidate_dir: str | Path,
    reference_dir: str | Path,
    judge: ChatBackend,
    *,
    judge_model: str = "default",
    max_attempts: int = 1,
    workers: int = 1,
) -> BenchmarkReport:
    cand_manifest, cand = load_run(candidate_dir)
    ref_manifest, ref = load_run(reference_dir)
    if set(cand) != set(ref):
        only_c = sorted(set(cand) - set(ref))[:5]
        only_r = sorted(set(ref) - set(cand))[:5]
        raise QueryIdMismatch(f"query ids differ: candidate-only {only_c}, reference-only {only_r}")

    ids = [qid for qid in cand_manifest.query_ids if qid in cand]
    queries = _queries_for(cand_manifest, ids, cand)

    def one(qid):
        return debiased_preference(
            judge,
            queries[qid],
            cand[qid].final_response,
            ref[qid].final_response,
            model=judge_model,
            max_attempts=max_attempts,
        )

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        scores = list(pool.map(one, ids))

    report = aggregate(
        scores,
        ([ref[q].total_latency for q in ids], [cand[q].total_latency for q in ids]),
        dataset=cand_manifest.dataset.get("name", ""),
        token_totals={**_token_totals("candidate", cand), **_token_totals("reference", ref)},
    )
    report.metadata = {
        "candidate": str(candidate_dir),
        "reference": str(reference_dir),
        "judge_model": judge_model,
        "calls_per_query": _calls_per_query(cand),
    }
    return report


def evaluate_accuracy(
    run_dir: str | Path,
    gold: dict[str, str],
    *,
    reference_dir: str | Path | None = None,
) -> BenchmarkReport:
    manifest, traces = load_run(run_dir)
    ids = [qid for qid in manifest.query_ids if qid in traces]
    missing_gold = [qid for qid in ids if gold.get(qid) is None]
    if missing_gold:
        raise QueryIdMismatch(f"no gold answer for {missing_gold[:5]}")
    scores = [score_objective(traces[q].final_response, gold[q], q) for q in ids]

    timings = None
    if reference_dir is not None:
        _, ref = load_run(reference_dir)
        if set(ref) != set(traces):
            raise QueryIdMismatch("candidate and reference runs cover different queries")
        timings = ([ref[q].total_latency for q in ids], [traces[q].total_latency for q in ids])
    report = aggregate(
        scores,
        timings,
        dataset=manifest.dataset.get("name", ""),
        token_totals=_token_totals("candidate", traces),
    )
    report.metadata = {"candidate": str(run_dir), "calls_per_query": _calls_per_query(traces)}
    return report


def _calls_per_query(traces: dict[str, WorkflowTrace]) -> float:
    return sum(len(t.steps) for t in traces.values()) / len(traces)


def _queries_for(manifest: RunManifest, ids: list[str], traces: dict[str, WorkflowTrace]) -> dict[str, Query]:
    """Recover query texts for judging, preferring the dataset on disk."""
    path = manifest.dataset.get("path")
    if path and Path(path).is_file():
        ds = load_jsonl(path, TaskKind(manifest.dataset.get("task_kind", "subjective")))
        by_id = {q.id: q for q in ds.queries}
        if all(qid in by_id for qid in ids):
            return {qid: by_id[qid] for qid in ids}
    raise MissingTraces(f"dataset {path!r} recorded in the manifest is not available")


def gold_answers(manifest: RunManifest, dataset_path: str | Path | None = None) -> dict[str, str]:
    path = dataset_path or manifest.dataset.get("path")
    if not path:
        raise ConfigError("no dataset given for objective scoring")
    ds = load_jsonl(path, TaskKind.Objective)
    return {q.id: q.gold_answer for q in ds.queries}


# -- sweeps ------------------------------------------------------------------


SWEEP_GROUPS = {
    "components": ("full", "no-skip-manager", "no-skip-worker", "no-skips", "drop-ceo", "drop-manager"),
    "layers": tuple(f"layers={n}" for n in range(1, 7)),
    "themes": ("theme=company", "theme=government", "theme=university", "theme=temple"),
}


def expand_ablations(names: list[str]) -> list[str]:
    out: list[str] = []
    for name in names:
        for item in SWEEP_GROUPS.get(name, (name,)):
            if item not in out:
                out.append(item)
    return out


def slug(name: str) -> str:
    return name.replace("=", "-")


@dataclass
class AblationRow:
    name: str
    roles: list[str]
    skip_flags: list[bool]
    mean: float
    reference_mean: float
    n: int
    calls_per_query: float
    overhead_percent: float | None
    failures: int = 0

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def run_ablations(
    dataset: Dataset,
    out_dir: str | Path,
    backend: ChatBackend,
    judge: ChatBackend,
    names: list[str],
    *,
    manifest_base: dict[str, Any],
    base_config: ChainConfig | None = None,
    model: str = "default",
    judge_model: str = "default",
    temperature: float = 0.0,
    max_attempts: int = 1,
    workers: int = 1,
) -> dict[str, Any]:
    """Run each configuration, judge it against a shared no-prompting run."""
    out = prepare_out_dir(out_dir, traces=False)
    names = expand_ablations(names)
    configs = {name: config_for_name(name, base_config) for name in names}
    chains = {name: build_chain(cfg) for name, cfg in configs.items()}

    settings = {"model": model, "temperature": temperature, "workers": workers}
    reference_dir = out / "reference"
    run_dataset(
        dataset,
        reference_dir,
        backend,
        baseline=BaselineStrategy.NoPrompting,
        manifest=RunManifest(run_id=new_run_id("reference"), baseline="no-prompting", **manifest_base),
        **settings,
    )

    rows = []
    for name in names:
        run_dir = out / slug(name)
        result = run_dataset(
            dataset,
            run_dir,
            backend,
            chain=chains[name],
            manifest=RunManifest(
                run_id=new_run_id(slug(name)), chain_config=configs[name].to_dict(), **manifest_base
            ),
            **settings,
        )
        report = evaluate_preference(
            run_dir, reference_dir, judge, judge_model=judge_model, max_attempts=max_attempts, workers=workers
        )
        write_json(run_dir / "report.json", report.to_dict())
        rows.append(
            AblationRow(
                name=name,
                roles=[r.value for r in chains[name].roles],
                skip_flags=[layer.receives_skip for layer in chains[name].layers],
                mean=report.mean,
                reference_mean=report.reference_mean,
                n=report.n,
                calls_per_query=report.metadata["calls_per_query"],
                overhead_percent=report.timing.overhead_percent if report.timing else None,
                failures=len(result.manifest.failures),
            )
        )
    return {
        "kind": "ablation",
        "dataset": dataset.name,
        "reference": str(reference_dir),
        "rows": [r.to_dict() for r in rows],
    }
