"""Command-line entry point: ``hmaw run | eval | ablate | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from hmaw.backend import ENV_BASE_URL, OpenAIChatClient, RetryPolicy, mock_from_dict
from hmaw.chains import Ablation, ChainConfig, build_chain, load_chain_config, parse_theme
from hmaw.datasets import TaskKind, load_jsonl
from hmaw.errors import ConfigError, HMAWError
from hmaw.reports import ablation_csv, render, write_per_case
from hmaw.runs import (
    RunManifest,
    evaluate_accuracy,
    evaluate_preference,
    file_digest,
    gold_answers,
    load_run,
    new_run_id,
    prepare_out_dir,
    run_ablations,
    run_dataset,
    select_queries,
    write_json,
)
from hmaw.workflow import BaselineStrategy

log = logging.getLogger("hmaw")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


# -- backends ----------------------------------------------------------------


def _load_script(path: str) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read mock script {path}: {exc}") from exc


def backend_from_config(config: dict[str, Any], *, max_in_flight: int = 8):
    if config["kind"] == "mock":
        return mock_from_dict(config["script"])
    if config["kind"] == "openai":
        return OpenAIChatClient.from_env(
            config.get("base_url"),
            retry=RetryPolicy(max_attempts=config.get("max_attempts", 3)),
            max_in_flight=max_in_flight,
        )
    raise ConfigError(f"unknown backend kind {config['kind']!r}")


def backend_config(kind: str, url: str | None, script: str | None) -> dict[str, Any]:
    if kind == "mock":
        if not script:
            raise ConfigError("--backend mock needs a script file")
        return {"kind": "mock", "script": _load_script(script)}
    return {"kind": "openai", "base_url": url}


# -- argument parsing --------------------------------------------------------


def _add_backend_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("generation backend")
    g.add_argument("--backend", choices=["openai", "mock"], default="openai")
    g.add_argument("--backend-url", help=f"OpenAI-compatible base URL (default ${ENV_BASE_URL})")
    g.add_argument("--mock-script", help="JSON script for --backend mock")
    g.add_argument("--model", default="gpt-3.5-turbo")
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--max-tokens", type=int)
    g.add_argument("--workers", type=int, default=4, help="queries processed concurrently")


def _add_judge_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("judge backend")
    g.add_argument("--judge-backend", choices=["openai", "mock"], default="openai")
    g.add_argument("--judge-url", help="base URL for the judge (defaults to --backend-url)")
    g.add_argument("--judge-script", help="JSON script for --judge-backend mock")
    g.add_argument("--judge-model", default="gpt-3.5-turbo")
    g.add_argument(
        "--judge-retries", type=int, default=1, help="judge calls per pass before an unreadable verdict counts as a tie"
    )


def _add_chain_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("chain")
    g.add_argument("--chain-config", help="YAML/JSON chain configuration file")
    g.add_argument("--baseline", choices=[b.value for b in BaselineStrategy])
    g.add_argument("--layers", type=int)
    g.add_argument("--theme")
    g.add_argument("--reversed", action="store_true")
    g.add_argument("--ablate", choices=[a.value for a in Ablation])


def _add_dataset_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--dataset", required=required)
    p.add_argument("--task-kind", choices=[k.value for k in TaskKind])
    p.add_argument("--limit", type=int)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmaw", description="Hierarchical prompt optimization and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="generate traces for a dataset")
    _add_dataset_flags(p, required=False)
    _add_chain_flags(p)
    _add_backend_flags(p)
    p.add_argument("--manifest", help="replay the configuration recorded in a manifest.json")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a run against a reference run or gold answers")
    p.add_argument("--candidate", required=True, help="run directory to score")
    p.add_argument("--reference", help="run directory to compare against")
    p.add_argument("--dataset", help="dataset with gold answers (defaults to the one in the manifest)")
    p.add_argument("--task-kind", choices=[k.value for k in TaskKind])
    _add_judge_flags(p)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out", required=True, help="directory for report.json, report.txt, per_case.jsonl")

    p = sub.add_parser("ablate", help="sweep chain configurations against no prompting")
    _add_dataset_flags(p)
    _add_backend_flags(p)
    _add_judge_flags(p)
    p.add_argument("--chain-config", help="base configuration the sweep entries modify")
    p.add_argument(
        "--ablate",
        action="append",
        required=True,
        help="comma-separated entries: full, drop-ceo, drop-manager, no-skip-manager, no-skip-worker, "
        "no-skips, layers=N, theme=NAME, reversed, or the groups components, layers, themes",
    )
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="render report.txt and figures for a report.json")
    p.add_argument("path", help="report.json or a directory containing it")
    p.add_argument("--no-figures", action="store_true")
    return parser


# -- commands ----------------------------------------------------------------


def _chain_config(args) -> ChainConfig:
    config = load_chain_config(args.chain_config) if args.chain_config else ChainConfig()
    if args.layers is not None:
        config = replace(config, num_layers=args.layers)
    if args.theme is not None:
        config = replace(config, theme=parse_theme(args.theme))
    if args.reversed:
        config = replace(config, reversed=True)
    if args.ablate is not None:
        config = replace(config, ablation=Ablation(args.ablate))
    return config


def _dataset_record(path: str, task_kind: TaskKind, name: str) -> dict[str, Any]:
    return {
        "path": str(Path(path).resolve()),
        "name": name,
        "task_kind": task_kind.value,
        "sha256": file_digest(path),
    }


def cmd_run(args) -> int:
    if args.manifest:
        manifest = RunManifest.from_dict(json.loads(Path(args.manifest).read_text(encoding="utf-8")))
        task_kind = TaskKind(manifest.dataset["task_kind"])
        dataset = load_jsonl(manifest.dataset["path"], task_kind, manifest.dataset.get("name"))
        if file_digest(manifest.dataset["path"]) != manifest.dataset.get("sha256"):
            log.warning("dataset %s changed since the manifest was written", manifest.dataset["path"])
        bcfg = manifest.backend
        chain_cfg = ChainConfig.from_dict(manifest.chain_config) if manifest.chain_config else None
        baseline = BaselineStrategy(manifest.baseline) if manifest.baseline else None
        seed, limit = manifest.seed, manifest.limit
    else:
        if not args.dataset:
            raise ConfigError("--dataset is required unless --manifest is given")
        task_kind = TaskKind(args.task_kind or "subjective")
        dataset = load_jsonl(args.dataset, task_kind)
        bcfg = backend_config(args.backend, args.backend_url, args.mock_script)
        bcfg.update(model=args.model, temperature=args.temperature, max_tokens=args.max_tokens)
        baseline = BaselineStrategy(args.baseline) if args.baseline else None
        chain_cfg = None if baseline else _chain_config(args)
        seed, limit = args.seed, args.limit

    chain = build_chain(chain_cfg) if chain_cfg else None
    subset = select_queries(dataset, limit, seed)
    manifest = RunManifest(
        run_id=new_run_id(),
        dataset=_dataset_record(
            args.dataset if not args.manifest else manifest.dataset["path"], task_kind, dataset.name
        ),
        backend=bcfg,
        chain_config=chain_cfg.to_dict() if chain_cfg else None,
        baseline=baseline.value if baseline else None,
        seed=seed,
        limit=limit,
    )
    backend = backend_from_config(bcfg, max_in_flight=args.workers)
    result = run_dataset(
        subset,
        args.out,
        backend,
        chain=chain,
        baseline=baseline,
        manifest=manifest,
        model=bcfg.get("model", "default"),
        temperature=bcfg.get("temperature", 0.0),
        max_tokens=bcfg.get("max_tokens"),
        workers=args.workers,
    )
    print(f"{len(result.traces)} traces written to {result.out_dir}")
    if not result.ok:
        print(f"{len(result.manifest.failures)} of {len(subset)} queries failed:", file=sys.stderr)
        for failure in result.manifest.failures:
            print(f"  {failure['query_id']}: {failure['error']}: {failure['message']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _judge(args):
    url = args.judge_url or getattr(args, "backend_url", None)
    return backend_from_config(backend_config(args.judge_backend, url, args.judge_script), max_in_flight=args.workers)


def _write_report(report: dict[str, Any], out: Path) -> None:
    write_json(out / "report.json", report)
    (out / "report.txt").write_text(render(report), encoding="utf-8")
    if report.get("kind") == "ablation":
        (out / "table.csv").write_text(ablation_csv(report), encoding="utf-8")
    else:
        write_per_case(report, out / "per_case.jsonl")


def cmd_eval(args) -> int:
    out = prepare_out_dir(args.out, traces=False)
    manifest, _ = load_run(args.candidate)
    task_kind = TaskKind(args.task_kind or manifest.dataset.get("task_kind", "subjective"))
    if task_kind is TaskKind.Objective:
        gold = gold_answers(manifest, args.dataset)
        report = evaluate_accuracy(args.candidate, gold, reference_dir=args.reference)
    else:
        if not args.reference:
            raise ConfigError("subjective evaluation needs --reference")
        report = evaluate_preference(
            args.candidate,
            args.reference,
            _judge(args),
            judge_model=args.judge_model,
            max_attempts=args.judge_retries,
            workers=args.workers,
        )
    data = report.to_dict()
    _write_report(data, out)
    print(render(data), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    task_kind = TaskKind(args.task_kind or "subjective")
    if task_kind is not TaskKind.Subjective:
        raise ConfigError("ablation sweeps use judge preference; pass a subjective dataset")
    dataset = select_queries(load_jsonl(args.dataset, task_kind), args.limit, args.seed)
    names = [n.strip() for entry in args.ablate for n in entry.split(",") if n.strip()]
    bcfg = backend_config(args.backend, args.backend_url, args.mock_script)
    bcfg.update(model=args.model, temperature=args.temperature)
    base = load_chain_config(args.chain_config) if args.chain_config else None
    table = run_ablations(
        dataset,
        args.out,
        backend_from_config(bcfg, max_in_flight=args.workers),
        _judge(args),
        names,
        manifest_base={
            "dataset": _dataset_record(args.dataset, task_kind, dataset.name),
            "backend": bcfg,
            "seed": args.seed,
            "limit": args.limit,
        },
        base_config=base,
        model=args.model,
        judge_model=args.judge_model,
        temperature=args.temperature,
        max_attempts=args.judge_retries,
        workers=args.workers,
    )
    out = Path(args.out)
    _write_report(table, out)
    print(render(table), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "report.json"
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc
    text = render(report)
    (path.parent / "report.txt").write_text(text, encoding="utf-8")
    if not args.no_figures:
        from hmaw.plotting import write_figures

        for fig in write_figures(report, path.parent):
            print(f"figure: {fig}", file=sys.stderr)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "ablate": cmd_ablate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (HMAWError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
