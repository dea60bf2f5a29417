"""Grounding verification and the dual-trigger validation policy.

Two independent triggers route problematic steps: model disagreement (the
divergence score) sends a step to the human review queue, and low grounding
confidence sends it to automatic re-retrieval. Neither trigger feeds the
other. The review queue is backed by an append-only decision log plus an
item snapshot file; replaying the log reconstructs the queue state exactly.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from agentsim.actions import AgentAction, action_from_dict, action_to_dict
from agentsim.corpus import Corpus, Document, tokenize
from agentsim.errors import (
    AlreadyDecided,
    NoDoubleAnnotatedItems,
    PersistenceError,
    StaleItem,
    UnknownDocId,
)

if TYPE_CHECKING:  # pragma: no cover
    from agentsim.simulation import Trace, TraceStep

VERDICTS = ("promote", "revise", "discard")

RUBRIC_GUIDANCE = (
    "Query-document relevance",
    "Evidence sufficiency",
    "Synthesis faithfulness",
)


@dataclass
class ValidationConfig:
    theta: float = 0.4
    grounding_threshold: float = 0.3
    double_annotation_rate: float = 0.10
    max_reretrievals: int = 2

    def __post_init__(self) -> None:
        for name in ("theta", "grounding_threshold", "double_annotation_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.max_reretrievals < 0:
            raise ValueError("max_reretrievals must be >= 0")


@dataclass
class GroundingReport:
    token_coverage: float
    covered_tokens: frozenset[str]
    uncovered_tokens: frozenset[str]
    vacuous: bool
    is_refusal: bool


def verify_grounding(
    answer: AgentAction,
    evidence: list[Document],
    stopwords: frozenset[str],
) -> GroundingReport:
    """Token coverage of an answer against its cited evidence.

    Coverage is computed over the distinct content-token types of the answer;
    a token counts as covered when it appears anywhere in any cited
    document's content tokens. Answers with no content tokens are vacuous
    (coverage 1.0), and abstain actions are refusals with no coverage
    computed.
    """
    if answer.action_type == "abstain":
        return GroundingReport(
            token_coverage=1.0,
            covered_tokens=frozenset(),
            uncovered_tokens=frozenset(),
            vacuous=True,
            is_refusal=True,
        )
    if answer.action_type != "synthesize":
        raise ValueError(f"grounding applies to synthesize/abstain, got {answer.action_type}")

    answer_types = set(tokenize(answer.payload["answer"], stopwords).content_tokens)
    if not answer_types:
        return GroundingReport(
            token_coverage=1.0,
            covered_tokens=frozenset(),
            uncovered_tokens=frozenset(),
            vacuous=True,
            is_refusal=False,
        )

    evidence_types: set[str] = set()
    for doc in evidence:
        evidence_types.update(tokenize(doc.text, stopwords).content_tokens)
    covered = frozenset(answer_types & evidence_types)
    uncovered = frozenset(answer_types - evidence_types)
    return GroundingReport(
        token_coverage=len(covered) / len(answer_types),
        covered_tokens=covered,
        uncovered_tokens=uncovered,
        vacuous=False,
        is_refusal=False,
    )


def resolve_evidence(action: AgentAction, corpus: Corpus, ignore_unknown: bool = False) -> list[Document]:
    docs: list[Document] = []
    for doc_id in action.payload.get("cites", []):
        if doc_id in corpus:
            docs.append(corpus.get(doc_id))
        elif not ignore_unknown:
            raise UnknownDocId(f"cited doc {doc_id!r} not in corpus")
    return docs


def grounding_report_for_action(
    action: AgentAction,
    corpus: Corpus,
    stopwords: frozenset[str],
    ignore_unknown: bool = False,
) -> GroundingReport:
    """Grounding of a synthesize/abstain action with cites resolved from the corpus.

    With ``ignore_unknown`` (the engine path), unknown cited ids simply
    contribute no evidence instead of raising.
    """
    return verify_grounding(action, resolve_evidence(action, corpus, ignore_unknown), stopwords)


def grounding_confidence(step: "TraceStep", corpus: Corpus, stopwords: frozenset[str]) -> float:
    """Token coverage of a synthesize step's answer; below the configured
    threshold this signals automatic re-retrieval."""
    if step.action is None or step.action.action_type != "synthesize":
        raise ValueError("grounding_confidence requires a synthesize step")
    return grounding_report_for_action(step.action, corpus, stopwords).token_coverage


# ---------------------------------------------------------------------------
# review queue
# ---------------------------------------------------------------------------


@dataclass
class ReviewDecision:
    reviewer_id: str
    verdict: str
    chosen_candidate_index: int | None = None
    revised_action: AgentAction | None = None
    notes: str = ""
    decided_at: float = 0.0

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if self.verdict == "promote" and self.chosen_candidate_index is None:
            raise ValueError("promote requires chosen_candidate_index")
        if self.verdict == "revise" and self.revised_action is None:
            raise ValueError("revise requires revised_action")

    def outcome_key(self) -> tuple:
        """Two decisions agree when these keys are equal."""
        if self.verdict == "promote":
            return ("promote", self.chosen_candidate_index)
        if self.verdict == "revise":
            from agentsim.actions import canonical_key

            assert self.revised_action is not None
            return ("revise", canonical_key(self.revised_action))
        return ("discard",)


@dataclass
class ReviewItem:
    item_id: str
    trace_id: str
    step_index: int
    seed_query: str
    context: str
    candidates: list[tuple[str, AgentAction]]
    divergence_score: float
    double_annotation: bool
    status: str = "pending"  # pending | decided
    needs_adjudication: bool = False
    decisions: list[ReviewDecision] = field(default_factory=list)
    version: int = 0

    @property
    def required_decisions(self) -> int:
        return 2 if self.double_annotation else 1

    def resolution(self) -> ReviewDecision | None:
        """The decision that stands once the item is decided."""
        if self.status != "decided":
            return None
        if not self.double_annotation:
            return self.decisions[0]
        first, second = self.decisions[0], self.decisions[1]
        if first.outcome_key() == second.outcome_key():
            return first
        # Adjudicated: majority of the three stands; with three distinct
        # outcomes the adjudicator's decision is final.
        third = self.decisions[2]
        if third.outcome_key() == first.outcome_key():
            return first
        return third


def is_double_annotated(item_id: str, rate: float) -> bool:
    """Deterministic assignment to the double-annotation band."""
    digest = hashlib.sha256(item_id.encode("utf-8")).digest()
    return int.from_bytes(digest, "big") % 100 < 100.0 * rate


def _item_to_dict(item: ReviewItem) -> dict:
    return {
        "item_id": item.item_id,
        "trace_id": item.trace_id,
        "step_index": item.step_index,
        "seed_query": item.seed_query,
        "context": item.context,
        "candidates": [
            {"model_id": model_id, "action": action_to_dict(action)}
            for model_id, action in item.candidates
        ],
        "divergence_score": item.divergence_score,
        "double_annotation": item.double_annotation,
    }


def _item_from_dict(obj: dict) -> ReviewItem:
    return ReviewItem(
        item_id=obj["item_id"],
        trace_id=obj["trace_id"],
        step_index=int(obj["step_index"]),
        seed_query=obj["seed_query"],
        context=obj["context"],
        candidates=[
            (c["model_id"], action_from_dict(c["action"])) for c in obj["candidates"]
        ],
        divergence_score=float(obj["divergence_score"]),
        double_annotation=bool(obj["double_annotation"]),
    )


def _decision_to_dict(item_id: str, decision: ReviewDecision) -> dict:
    return {
        "item_id": item_id,
        "reviewer_id": decision.reviewer_id,
        "verdict": decision.verdict,
        "chosen_candidate_index": decision.chosen_candidate_index,
        "revised_action": (
            action_to_dict(decision.revised_action) if decision.revised_action else None
        ),
        "notes": decision.notes,
        "decided_at": decision.decided_at,
    }


def _decision_from_dict(obj: dict) -> tuple[str, ReviewDecision]:
    revised = obj.get("revised_action")
    return obj["item_id"], ReviewDecision(
        reviewer_id=obj["reviewer_id"],
        verdict=obj["verdict"],
        chosen_candidate_index=obj.get("chosen_candidate_index"),
        revised_action=action_from_dict(revised) if revised else None,
        notes=obj.get("notes", ""),
        decided_at=float(obj.get("decided_at", 0.0)),
    )


class ReviewQueue:
    """Persistent queue of divergence-flagged steps awaiting human review.

    ``items.jsonl`` snapshots each item at enqueue time; ``decisions.jsonl``
    is the append-only decision log. Reads are unrestricted; decision writes
    are serialized through a single lock, with optimistic conflict detection
    via per-item version numbers.
    """

    ITEMS_FILE = "items.jsonl"
    DECISIONS_FILE = "decisions.jsonl"

    def __init__(self, directory: str | Path, config: ValidationConfig | None = None):
        self.directory = Path(directory)
        self.config = config or ValidationConfig()
        self._items: dict[str, ReviewItem] = {}
        self._lock = threading.RLock()
        self.directory.mkdir(parents=True, exist_ok=True)
        self._load()

    # -- persistence --------------------------------------------------------

    def _load(self) -> None:
        items_path = self.directory / self.ITEMS_FILE
        decisions_path = self.directory / self.DECISIONS_FILE
        try:
            if items_path.exists():
                with open(items_path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            item = _item_from_dict(json.loads(line))
                            self._items[item.item_id] = item
            if decisions_path.exists():
                with open(decisions_path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            item_id, decision = _decision_from_dict(json.loads(line))
                            self._apply(self._items[item_id], decision)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise PersistenceError(f"corrupt review queue in {self.directory}: {exc}") from exc

    def _append(self, filename: str, record: dict) -> None:
        try:
            with open(self.directory / filename, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=True) + "\n")
                fh.flush()
        except OSError as exc:
            raise PersistenceError(f"cannot append to {filename}: {exc}") from exc

    # -- operations ----------------------------------------------------------

    def enqueue(
        self,
        trace_id: str,
        step_index: int,
        seed_query: str,
        context: str,
        candidates: list[tuple[str, AgentAction]],
        divergence_score: float,
    ) -> ReviewItem:
        """Persist a flagged step as a pending review item.

        Callers must only enqueue genuinely flagged steps (divergence above
        theta, at least two distinct candidates).
        """
        if divergence_score <= self.config.theta:
            raise ValueError("enqueue requires divergence_score > theta")
        if len(candidates) < 2:
            raise ValueError("enqueue requires at least 2 distinct candidates")
        item_id = f"{trace_id}-s{step_index:03d}"
        item = ReviewItem(
            item_id=item_id,
            trace_id=trace_id,
            step_index=step_index,
            seed_query=seed_query,
            context=context,
            candidates=list(candidates),
            divergence_score=divergence_score,
            double_annotation=is_double_annotated(item_id, self.config.double_annotation_rate),
        )
        with self._lock:
            if item_id in self._items:
                raise ValueError(f"item {item_id} already enqueued")
            self._items[item_id] = item
            self._append(self.ITEMS_FILE, _item_to_dict(item))
        return item

    def _apply(self, item: ReviewItem, decision: ReviewDecision) -> None:
        """In-memory state transition (shared by live decisions and replay)."""
        item.decisions.append(decision)
        item.version += 1
        n = len(item.decisions)
        if not item.double_annotation:
            item.status = "decided"
            return
        if n == 1:
            return
        if n == 2:
            if item.decisions[0].outcome_key() == item.decisions[1].outcome_key():
                item.status = "decided"
            else:
                item.needs_adjudication = True
            return
        item.status = "decided"

    def decide(
        self,
        item_id: str,
        decision: ReviewDecision,
        expected_version: int | None = None,
    ) -> ReviewItem:
        """Record a reviewer decision and advance the item's state.

        Raises ``AlreadyDecided`` when the item is settled or the reviewer
        already voted, and ``StaleItem`` when ``expected_version`` no longer
        matches.
        """
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise KeyError(item_id)
            if expected_version is not None and expected_version != item.version:
                raise StaleItem(
                    f"item {item_id} is at version {item.version}, expected {expected_version}"
                )
            if item.status == "decided":
                raise AlreadyDecided(f"item {item_id} is already decided")
            if any(d.reviewer_id == decision.reviewer_id for d in item.decisions):
                raise AlreadyDecided(
                    f"reviewer {decision.reviewer_id!r} already decided on {item_id}"
                )
            if decision.verdict == "promote":
                index = decision.chosen_candidate_index
                if index is None or not 0 <= index < len(item.candidates):
                    raise ValueError(f"invalid candidate index {index!r}")
            self._apply(item, decision)
            self._append(self.DECISIONS_FILE, _decision_to_dict(item_id, decision))
            return item

    def get(self, item_id: str) -> ReviewItem:
        item = self._items.get(item_id)
        if item is None:
            raise KeyError(item_id)
        return item

    def items(self, status: str | None = None) -> list[ReviewItem]:
        values = list(self._items.values())
        if status:
            values = [i for i in values if i.status == status]
        return sorted(values, key=lambda i: (-i.divergence_score, i.item_id))

    def agreement_rate(self) -> float:
        """Fraction of double-annotated items whose first two decisions agree."""
        eligible = [
            i for i in self._items.values() if i.double_annotation and len(i.decisions) >= 2
        ]
        if not eligible:
            raise NoDoubleAnnotatedItems("no double-annotated items with two decisions")
        agreeing = sum(
            1
            for i in eligible
            if i.decisions[0].outcome_key() == i.decisions[1].outcome_key()
        )
        return agreeing / len(eligible)

    def stats(self) -> dict:
        pending = sum(1 for i in self._items.values() if i.status == "pending")
        decided = [i for i in self._items.values() if i.status == "decided"]
        counts = {"promote": 0, "revise": 0, "discard": 0}
        for item in decided:
            resolution = item.resolution()
            if resolution is not None:
                counts[resolution.verdict] += 1
        try:
            agreement: float | None = self.agreement_rate()
        except NoDoubleAnnotatedItems:
            agreement = None
        return {
            "pending": pending,
            "decided": len(decided),
            "promote": counts["promote"],
            "revise": counts["revise"],
            "discard": counts["discard"],
            "agreement_rate": agreement,
        }


def apply_review_outcomes(traces: list["Trace"], queue: ReviewQueue) -> None:
    """Fold decided review items back into their traces.

    Promote installs the chosen candidate on the flagged step, revise
    installs the reviewer's action, and discard marks the whole trajectory
    discarded (excluding it from every export).
    """
    by_trace: dict[str, list[ReviewItem]] = {}
    for item in queue.items():
        by_trace.setdefault(item.trace_id, []).append(item)

    for trace in traces:
        for item in by_trace.get(trace.trace_id, []):
            resolution = item.resolution()
            if resolution is None:
                continue
            step = trace.steps[item.step_index]
            if step.step_index != item.step_index:  # pragma: no cover - defensive
                raise ValueError(f"step index mismatch in trace {trace.trace_id}")
            if resolution.verdict == "promote":
                assert resolution.chosen_candidate_index is not None
                step.action = item.candidates[resolution.chosen_candidate_index][1]
                step.status = "promoted"
            elif resolution.verdict == "revise":
                step.action = resolution.revised_action
                step.status = "revised"
            else:
                step.status = "discarded"
                trace.outcome = "discarded"
