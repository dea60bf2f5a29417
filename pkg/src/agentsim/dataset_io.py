"""Serialization of traces, trajectories, and supervised pairs.

Three JSONL formats with a schema-version field on every line, gzip when the
filename ends in ``.gz`` (written with a zeroed gzip header so identical
inputs produce identical bytes), and sharding at 10,000 records per file.
Discarded trajectories never appear in any export, and traces with pending
review items cannot be exported at all.
"""

from __future__ import annotations

import gzip
import io
import json
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from agentsim.actions import action_from_dict, action_to_dict
from agentsim.corpus import Corpus, RetrievalResult
from agentsim.errors import PendingReviewItems, UnknownDocId
from agentsim.seeding import SeedRecord
from agentsim.simulation import ToolCall, Trace, TraceStep, Trajectory

SCHEMA_VERSION = 1
SHARD_SIZE = 10_000

# Judge statuses whose cycle contributes to a supervised reasoning chain.
CHAIN_STATUSES = ("accepted", "promoted", "revised")


@dataclass
class SupervisedPair:
    question: str
    documents: list[tuple[str, str]]
    answer: str | None
    abstain_reason: str | None
    reasoning_chain: list[str]
    source_trace_id: str


@contextmanager
def _open_write(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.name.endswith(".gz"):
        with open(path, "wb") as raw:
            gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
            text = io.TextIOWrapper(gz, encoding="utf-8", newline="\n")
            try:
                yield text
            finally:
                text.flush()
                gz.close()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as text:
            yield text


@contextmanager
def _open_read(path: Path):
    if path.name.endswith(".gz"):
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            yield fh
    else:
        with open(path, encoding="utf-8") as fh:
            yield fh


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=True)


# ---------------------------------------------------------------------------
# field mappings
# ---------------------------------------------------------------------------


def _seed_to_dict(seed: SeedRecord) -> dict:
    return {
        "seed_id": seed.seed_id,
        "query": seed.query,
        "cluster_id": seed.cluster_id,
        "novelty": seed.novelty,
        "retrieved_doc_ids": list(seed.retrieved_doc_ids),
        "strategy": seed.strategy,
        "rank": seed.rank,
    }


def _seed_from_dict(obj: dict) -> SeedRecord:
    return SeedRecord(
        seed_id=obj["seed_id"],
        query=obj["query"],
        cluster_id=int(obj["cluster_id"]),
        novelty=float(obj["novelty"]),
        retrieved_doc_ids=list(obj["retrieved_doc_ids"]),
        strategy=obj["strategy"],
        rank=int(obj["rank"]),
    )


def _observation_to_dict(observation) -> dict | None:
    if observation is None:
        return None
    if isinstance(observation, RetrievalResult):
        return {
            "kind": "retrieval",
            "query": observation.query,
            "hits": [[doc_id, score] for doc_id, score in observation.hits],
            "depth": observation.depth,
        }
    return {"kind": "text", "text": observation}


def _observation_from_dict(obj: dict | None):
    if obj is None:
        return None
    if obj["kind"] == "retrieval":
        return RetrievalResult(
            query=obj["query"],
            hits=tuple((doc_id, float(score)) for doc_id, score in obj["hits"]),
            depth=int(obj["depth"]),
        )
    return obj["text"]


def _step_to_dict(step: TraceStep) -> dict:
    return {
        "step_index": step.step_index,
        "cycle_index": step.cycle_index,
        "role": step.role,
        "model_id": step.model_id,
        "thought": step.thought,
        "action": action_to_dict(step.action) if step.action else None,
        "observation": _observation_to_dict(step.observation),
        "divergence_score": step.divergence_score,
        "grounding_confidence": step.grounding_confidence,
        "status": step.status,
        "prompt": step.prompt,
        "raw_response": step.raw_response,
        "timestamp": step.timestamp,
    }


def _step_from_dict(trace_id: str, obj: dict) -> TraceStep:
    return TraceStep(
        trace_id=trace_id,
        step_index=int(obj["step_index"]),
        cycle_index=int(obj["cycle_index"]),
        role=obj["role"],
        model_id=obj["model_id"],
        thought=obj["thought"],
        action=action_from_dict(obj["action"]) if obj["action"] else None,
        observation=_observation_from_dict(obj["observation"]),
        divergence_score=obj["divergence_score"],
        grounding_confidence=obj["grounding_confidence"],
        status=obj["status"],
        prompt=obj["prompt"],
        raw_response=obj["raw_response"],
        timestamp=float(obj["timestamp"]),
    )


def has_pending_review(trace: Trace) -> bool:
    return any(step.status == "flagged" for step in trace.steps)


def _step_lines(trace: Trace):
    for step in trace.steps:
        yield _dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "trace_id": trace.trace_id,
                "outcome": trace.outcome,
                "prompt_hash": trace.prompt_hash,
                "analyst_model": trace.analyst_model,
                "created_at": trace.created_at,
                "seed": _seed_to_dict(trace.seed),
                "step": _step_to_dict(step),
            }
        )


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


def write_traces(traces: list[Trace], path: str | Path) -> Path:
    """Write finalized traces, one step object per line.

    Discarded trajectories are excluded; a non-discarded trace with an
    undecided flagged step raises ``PendingReviewItems``.
    """
    path = Path(path)
    included = [t for t in traces if t.outcome != "discarded"]
    pending = [t.trace_id for t in included if has_pending_review(t)]
    if pending:
        raise PendingReviewItems(f"traces with undecided review items: {pending}")
    with _open_write(path) as fh:
        for trace in included:
            for line in _step_lines(trace):
                fh.write(line + "\n")
    return path


def dump_trace(trace: Trace, path: str | Path) -> Path:
    """Write a single trace without finalization checks (working storage)."""
    path = Path(path)
    with _open_write(path) as fh:
        for line in _step_lines(trace):
            fh.write(line + "\n")
    return path


def read_traces(path: str | Path) -> list[Trace]:
    grouped: dict[str, Trace] = {}
    with _open_read(Path(path)) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            trace_id = obj["trace_id"]
            trace = grouped.get(trace_id)
            if trace is None:
                trace = Trace(
                    trace_id=trace_id,
                    seed=_seed_from_dict(obj["seed"]),
                    steps=[],
                    outcome=obj["outcome"],
                    prompt_hash=obj["prompt_hash"],
                    analyst_model=obj["analyst_model"],
                    created_at=float(obj["created_at"]),
                )
                grouped[trace_id] = trace
            trace.steps.append(_step_from_dict(trace_id, obj["step"]))
    for trace in grouped.values():
        trace.steps.sort(key=lambda s: s.step_index)
    return list(grouped.values())


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def _trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "trace_id": traj.trace_id,
        "outcome": traj.outcome,
        "analyst_model": traj.analyst_model,
        "seed": _seed_to_dict(traj.seed),
        "tool_calls": [
            {
                "tool": call.tool,
                "input": call.input,
                "output": list(call.output) if isinstance(call.output, tuple) else call.output,
            }
            for call in traj.tool_calls
        ],
        "final": traj.final,
    }


def _trajectory_from_dict(obj: dict) -> Trajectory:
    return Trajectory(
        trace_id=obj["trace_id"],
        seed=_seed_from_dict(obj["seed"]),
        tool_calls=[
            ToolCall(
                tool=c["tool"],
                input=c["input"],
                output=tuple(c["output"]) if isinstance(c["output"], list) else c["output"],
            )
            for c in obj["tool_calls"]
        ],
        final=dict(obj["final"]),
        outcome=obj["outcome"],
        analyst_model=obj.get("analyst_model", ""),
    )


def write_trajectories(trajectories: list[Trajectory], path: str | Path) -> Path:
    """One trajectory per line: tool calls only, prompt text stripped."""
    path = Path(path)
    with _open_write(path) as fh:
        for traj in trajectories:
            if traj.outcome == "discarded":
                continue
            fh.write(_dumps(_trajectory_to_dict(traj)) + "\n")
    return path


def read_trajectories(path: str | Path) -> list[Trajectory]:
    out: list[Trajectory] = []
    with _open_read(Path(path)) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(_trajectory_from_dict(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# supervised pairs
# ---------------------------------------------------------------------------


def extract_supervised_pairs(traces: list[Trace], corpus: Corpus) -> list[SupervisedPair]:
    """One question/documents/answer record per terminal trajectory.

    Answered traces cite their synthesis evidence; abstained traces carry the
    refusal reason and the evidence that was considered (every document
    retrieved along the way). The reasoning chain is the ordered analyst
    thoughts of cycles whose judged step stands as accepted, promoted, or
    revised.
    """
    pairs: list[SupervisedPair] = []
    for trace in traces:
        if trace.outcome == "discarded":
            continue
        if has_pending_review(trace):
            raise PendingReviewItems(f"trace {trace.trace_id} has undecided review items")

        chain_cycles = {
            step.cycle_index
            for step in trace.steps
            if step.role == "judge" and step.status in CHAIN_STATUSES
        }
        chain = [
            step.thought
            for step in trace.steps
            if step.role == "analyst" and step.cycle_index in chain_cycles and step.thought
        ]

        if trace.outcome == "answered":
            synth = next(
                (
                    step
                    for step in reversed(trace.steps)
                    if step.role == "judge"
                    and step.action is not None
                    and step.action.action_type == "synthesize"
                ),
                None,
            )
            if synth is None or synth.action is None:
                continue
            cites = list(synth.action.payload["cites"])
            documents = []
            for doc_id in cites:
                if doc_id not in corpus:
                    raise UnknownDocId(
                        f"trace {trace.trace_id} cites unknown doc {doc_id!r}"
                    )
                documents.append((doc_id, corpus.get(doc_id).text))
            pairs.append(
                SupervisedPair(
                    question=trace.seed.query,
                    documents=documents,
                    answer=synth.action.payload["answer"],
                    abstain_reason=None,
                    reasoning_chain=chain,
                    source_trace_id=trace.trace_id,
                )
            )
        else:  # abstained
            reason = ""
            for step in reversed(trace.steps):
                if step.action is not None and step.action.action_type == "abstain":
                    reason = step.action.payload["reason"]
                    break
            considered: list[str] = []
            for step in trace.steps:
                if isinstance(step.observation, RetrievalResult):
                    for doc_id in step.observation.doc_ids:
                        if doc_id not in considered:
                            considered.append(doc_id)
            documents = [(doc_id, corpus.get(doc_id).text) for doc_id in considered if doc_id in corpus]
            pairs.append(
                SupervisedPair(
                    question=trace.seed.query,
                    documents=documents,
                    answer=None,
                    abstain_reason=reason,
                    reasoning_chain=chain,
                    source_trace_id=trace.trace_id,
                )
            )
    return pairs


def write_supervised(pairs: list[SupervisedPair], path: str | Path) -> Path:
    path = Path(path)
    with _open_write(path) as fh:
        for pair in pairs:
            fh.write(
                _dumps(
                    {
                        "schema_version": SCHEMA_VERSION,
                        "question": pair.question,
                        "documents": [[doc_id, text] for doc_id, text in pair.documents],
                        "answer": pair.answer,
                        "abstain_reason": pair.abstain_reason,
                        "reasoning_chain": pair.reasoning_chain,
                        "source_trace_id": pair.source_trace_id,
                    }
                )
                + "\n"
            )
    return path


def read_supervised(path: str | Path) -> list[SupervisedPair]:
    pairs: list[SupervisedPair] = []
    with _open_read(Path(path)) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pairs.append(
                SupervisedPair(
                    question=obj["question"],
                    documents=[(d[0], d[1]) for d in obj["documents"]],
                    answer=obj["answer"],
                    abstain_reason=obj["abstain_reason"],
                    reasoning_chain=list(obj["reasoning_chain"]),
                    source_trace_id=obj["source_trace_id"],
                )
            )
    return pairs


# ---------------------------------------------------------------------------
# sharded trees
# ---------------------------------------------------------------------------


def _shard_path(directory: Path, index: int) -> Path:
    return directory / f"part-{index:05d}.jsonl.gz"


def write_traces_tree(
    traces: list[Trace], directory: str | Path, shard_size: int = SHARD_SIZE
) -> list[Path]:
    """Shard traces into ``part-*.jsonl.gz`` files, never splitting a trace."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shards: list[list[Trace]] = []
    current: list[Trace] = []
    lines = 0
    for trace in traces:
        if trace.outcome == "discarded":
            continue
        if current and lines + len(trace.steps) > shard_size:
            shards.append(current)
            current, lines = [], 0
        current.append(trace)
        lines += len(trace.steps)
    if current:
        shards.append(current)
    paths = []
    for i, shard in enumerate(shards):
        paths.append(write_traces(shard, _shard_path(directory, i)))
    return paths


def read_traces_tree(directory: str | Path) -> list[Trace]:
    directory = Path(directory)
    traces: list[Trace] = []
    for path in sorted(directory.glob("part-*.jsonl*")):
        traces.extend(read_traces(path))
    return traces


def write_trajectories_tree(
    trajectories: list[Trajectory], directory: str | Path, shard_size: int = SHARD_SIZE
) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    kept = [t for t in trajectories if t.outcome != "discarded"]
    paths = []
    for i in range(0, max(len(kept), 1), shard_size):
        shard = kept[i : i + shard_size]
        paths.append(write_trajectories(shard, _shard_path(directory, i // shard_size)))
    return paths


def read_trajectories_tree(directory: str | Path) -> list[Trajectory]:
    directory = Path(directory)
    out: list[Trajectory] = []
    for path in sorted(directory.glob("part-*.jsonl*")):
        out.extend(read_trajectories(path))
    return out


def write_supervised_tree(
    pairs: list[SupervisedPair], directory: str | Path, shard_size: int = SHARD_SIZE
) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(0, max(len(pairs), 1), shard_size):
        shard = pairs[i : i + shard_size]
        paths.append(write_supervised(shard, _shard_path(directory, i // shard_size)))
    return paths


def read_supervised_tree(directory: str | Path) -> list[SupervisedPair]:
    directory = Path(directory)
    out: list[SupervisedPair] = []
    for path in sorted(directory.glob("part-*.jsonl*")):
        out.extend(read_supervised(path))
    return out
