"""Command-line entry points: validate, seed-select, simulate, metrics,
export, review-serve."""

from __future__ import annotations

import json
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from agentsim import dataset_io
from agentsim.config import RunConfig, load_config_lenient, validate_config
from agentsim.corpus import Corpus, build_index, load_documents_jsonl
from agentsim.embedding import make_provider
from agentsim.errors import AgentSimError
from agentsim.metrics import behavior_metrics, seeding_metrics, significance_tests, write_pairwise_csv
from agentsim.seeding import cluster_queries, read_seeds, select_seeds, write_seeds
from agentsim.simulation import run_trajectory
from agentsim.validation import ReviewQueue, apply_review_outcomes


def _fail(code: int, kind: str, message: str) -> None:
    click.echo(json.dumps({"error": kind, "message": message}), err=True)
    sys.exit(code)


def _load_config_or_exit(path: str) -> RunConfig:
    config, diagnostics = load_config_lenient(path)
    errors = [d for d in diagnostics if d.severity == "error"]
    if config is None or errors:
        _fail(2, "invalid-config", "; ".join(str(d) for d in errors) or "config unreadable")
    assert config is not None
    return config


def _load_corpus(config: RunConfig) -> Corpus:
    documents = load_documents_jsonl(config.corpus_path)
    stopwords = None
    if config.stopwords_path:
        with open(config.stopwords_path, encoding="utf-8") as fh:
            stopwords = frozenset(
                line.strip() for line in fh if line.strip() and not line.startswith("#")
            )
    return build_index(documents, stopwords=stopwords)


def _read_query_pool(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


@click.group()
def cli() -> None:
    """Retrieval-augmented agent trace simulation toolkit."""


@cli.command("validate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--probe", is_flag=True, help="Also check backend reachability.")
def cmd_validate(config_path: str, probe: bool) -> None:
    """Check a config for schema, range, and file problems."""
    config, diagnostics = load_config_lenient(config_path)
    if config is not None:
        diagnostics = diagnostics + validate_config(config, probe=probe)
    for diag in diagnostics:
        click.echo(str(diag))
    if any(d.severity == "error" for d in diagnostics):
        sys.exit(2)
    click.echo("OK")


@cli.command("seed-select")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--strategy", default=None, help="Override the configured strategy.")
@click.option("--rng-seed", default=None, type=int, help="Override the configured RNG seed.")
def cmd_seed_select(config_path: str, out_dir: str | None, strategy: str | None, rng_seed: int | None) -> None:
    """Select simulation seeds and write seeds.jsonl."""
    config = _load_config_or_exit(config_path)
    problems = [d for d in validate_config(config) if d.severity == "error"]
    if problems:
        _fail(2, "invalid-config", "; ".join(str(d) for d in problems))
    if not config.queries_path:
        _fail(2, "invalid-config", "queries.path is required for seed selection")

    seeding = config.seeding
    if strategy is not None:
        seeding.strategy = strategy
    if rng_seed is not None:
        seeding.rng_seed = rng_seed

    try:
        corpus = _load_corpus(config)
        queries = _read_query_pool(config.queries_path)
        provider = make_provider(config.embedding)
        seeds = select_seeds(queries, corpus, seeding, provider)
    except AgentSimError as exc:
        _fail(1, type(exc).__name__, str(exc))
        return

    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_seeds(seeds, out / "seeds.jsonl")

    per_cluster: dict[int, int] = {}
    for seed in seeds:
        per_cluster[seed.cluster_id] = per_cluster.get(seed.cluster_id, 0) + 1
    mean_novelty = sum(s.novelty for s in seeds) / len(seeds) if seeds else 0.0
    click.echo(f"selected {len(seeds)} seeds ({seeding.strategy}) -> {out / 'seeds.jsonl'}")
    click.echo(f"mean novelty: {mean_novelty:.3f}")
    for cluster in sorted(per_cluster):
        click.echo(f"  cluster {cluster}: {per_cluster[cluster]} seeds")


def _load_manifest(path: Path) -> dict[str, dict]:
    entries: dict[str, dict] = {}
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entry = json.loads(line)
                    entries[entry["seed_id"]] = entry
    return entries


def _export_trees(out: Path, corpus: Corpus, queue: ReviewQueue) -> dict:
    """Rebuild the three export trees from the raw trace store."""
    raw_dir = out / "raw"
    traces = []
    for path in sorted(raw_dir.glob("*.jsonl")):
        traces.extend(dataset_io.read_traces(path))
    apply_review_outcomes(traces, queue)

    exportable = [
        t
        for t in traces
        if t.outcome != "discarded" and not dataset_io.has_pending_review(t)
    ]
    from agentsim.simulation import build_trajectory

    trajectories = [build_trajectory(t) for t in exportable]
    pairs = dataset_io.extract_supervised_pairs(exportable, corpus)

    dataset_io.write_traces_tree(exportable, out / "traces")
    dataset_io.write_trajectories_tree(trajectories, out / "trajectories")
    dataset_io.write_supervised_tree(pairs, out / "supervised")
    return {
        "traces": len(exportable),
        "held_for_review": sum(1 for t in traces if dataset_io.has_pending_review(t)),
        "discarded": sum(1 for t in traces if t.outcome == "discarded"),
        "supervised_pairs": len(pairs),
    }


@cli.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seeds", "seeds_path", default=None, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--parallelism", default=None, type=int)
def cmd_simulate(config_path: str, seeds_path: str | None, out_dir: str | None, parallelism: int | None) -> None:
    """Run one trajectory per seed (and exploration) with scripted or remote backends."""
    config = _load_config_or_exit(config_path)
    if config.simulation is None:
        _fail(2, "invalid-config", "config has no simulation section")
    problems = [d for d in validate_config(config) if d.severity == "error"]
    if problems:
        _fail(2, "invalid-config", "; ".join(str(d) for d in problems))

    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "raw").mkdir(exist_ok=True)

    corpus = _load_corpus(config)
    seeds = read_seeds(seeds_path or out / "seeds.jsonl")
    sim = config.simulation
    assert sim is not None

    manifest_path = out / "manifest.jsonl"
    manifest = _load_manifest(manifest_path)
    done = {sid for sid, entry in manifest.items() if entry["status"] == "completed"}
    todo = [seed for seed in seeds if seed.seed_id not in done]

    queue = ReviewQueue(out / "review", config.validation)
    manifest_lock = threading.Lock()

    def record(entry: dict) -> None:
        with manifest_lock:
            with open(manifest_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=True) + "\n")
            manifest[entry["seed_id"]] = entry

    def run_seed(seed) -> dict:
        try:
            trace_ids = []
            failed = False
            for exploration in range(sim.explorations_per_seed):
                trace, _ = run_trajectory(seed, corpus, sim, queue=queue, exploration=exploration)
                dataset_io.dump_trace(trace, out / "raw" / f"{trace.trace_id}.jsonl")
                trace_ids.append(trace.trace_id)
                if trace.outcome == "discarded":
                    failed = True
            status = "failed" if failed else "completed"
            return {"seed_id": seed.seed_id, "status": status, "trace_ids": trace_ids, "error": None}
        except AgentSimError as exc:
            return {
                "seed_id": seed.seed_id,
                "status": "failed",
                "trace_ids": [],
                "error": f"{type(exc).__name__}: {exc}",
            }

    workers = max(1, parallelism if parallelism is not None else config.parallelism)
    if todo:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for entry in pool.map(run_seed, todo):
                record(entry)

    summary = _export_trees(out, corpus, queue)
    completed = sum(1 for e in manifest.values() if e["status"] == "completed")
    failed_ids = sorted(sid for sid, e in manifest.items() if e["status"] == "failed")
    summary.update(
        {
            "executed": len(todo),
            "skipped": len(seeds) - len(todo),
            "completed_total": completed,
            "failed_seeds": failed_ids,
            "review_pending": queue.stats()["pending"],
        }
    )
    click.echo(json.dumps(summary, ensure_ascii=True))
    sys.exit(0 if completed >= 1 else 1)


@cli.command("export")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_export(config_path: str, out_dir: str | None) -> None:
    """Re-export the dataset trees, folding in review decisions."""
    config = _load_config_or_exit(config_path)
    out = Path(out_dir or config.output_dir)
    corpus = _load_corpus(config)
    queue = ReviewQueue(out / "review", config.validation)
    summary = _export_trees(out, corpus, queue)
    click.echo(json.dumps(summary, ensure_ascii=True))


@cli.command("metrics")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--stats-csv", "stats_csv", default=None, type=click.Path())
def cmd_metrics(config_path: str, out_dir: str | None, stats_csv: str | None) -> None:
    """Aggregate metrics over a finished run directory."""
    config = _load_config_or_exit(config_path)
    out = Path(out_dir or config.output_dir)
    trajectories = dataset_io.read_trajectories_tree(out / "trajectories")
    if not trajectories:
        _fail(1, "empty-run", f"no trajectories under {out / 'trajectories'}")

    report: dict = {"behavior": behavior_metrics(trajectories).as_dict(), "seeding": None}

    seeds_file = out / "seeds.jsonl"
    if seeds_file.exists() and config.queries_path and Path(config.queries_path).exists():
        corpus = _load_corpus(config)
        provider = make_provider(config.embedding)
        queries = _read_query_pool(config.queries_path)
        from agentsim.embedding import embed

        assignment = cluster_queries(embed(provider, queries), config.seeding.k, config.seeding.rng_seed)
        seeds = read_seeds(seeds_file)
        if len(seeds) >= 2:
            report["seeding"] = seeding_metrics(seeds, assignment, corpus, provider).as_dict()

    report_path = out / "metrics.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, ensure_ascii=True)
        fh.write("\n")
    click.echo(f"wrote {report_path}")

    if stats_csv:
        groups: dict[str, list[float]] = {}
        for traj in trajectories:
            docs: set[str] = set()
            for call in traj.tool_calls:
                if call.tool == "search" and isinstance(call.output, (list, tuple)):
                    docs.update(call.output)
            groups.setdefault(traj.analyst_model or "unknown", []).append(float(len(docs)))
        eligible = {k: v for k, v in groups.items() if len(v) >= 2}
        if len(eligible) >= 2:
            write_pairwise_csv(significance_tests(eligible), stats_csv)
            click.echo(f"wrote {stats_csv}")
        else:
            click.echo("stats csv skipped: need >= 2 model groups with >= 2 trajectories each")


@cli.command("review-serve")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--port", default=8377, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--ui-dir", "ui_dir", default=None, type=click.Path())
def cmd_review_serve(config_path: str, out_dir: str | None, port: int, host: str, ui_dir: str | None) -> None:
    """Serve the review API (and the built review UI, when available)."""
    import uvicorn

    from agentsim.review_service import create_app

    config = _load_config_or_exit(config_path)
    out = Path(out_dir or config.output_dir)
    queue = ReviewQueue(out / "review", config.validation)
    corpus = _load_corpus(config) if Path(config.corpus_path).exists() else None
    app = create_app(queue, corpus=corpus, ui_dir=Path(ui_dir) if ui_dir else None)

    # uvicorn logs bind failures but exits 0; check the port up front instead.
    import socket

    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
        probe.close()
    except OSError as exc:
        _fail(1, "port-unavailable", f"cannot bind {host}:{port}: {exc}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
