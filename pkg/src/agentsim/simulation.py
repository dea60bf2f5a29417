"""Analyst-critic-judge simulation loop over a document corpus.

One trajectory runs up to ``max_cycles`` retrieval-reasoning cycles. Each
cycle the analyst proposes an action, the critics independently review it,
and the judge scores their disagreement: low-divergence steps proceed with
the plurality action, high-divergence steps are flagged for human review and
proceed provisionally with the analyst's proposal. Search actions execute
against the corpus and append an observation step; synthesize and abstain
actions terminate the loop. Poorly grounded syntheses trigger bounded
automatic re-retrieval instead of terminating.

Step layout per cycle: one analyst step, one step per consulted critic, one
judge step carrying the divergence score and the canonical action, then an
execution/observation step when the action touches the corpus.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable

import httpx

from agentsim import prompts
from agentsim.actions import (
    AgentAction,
    abstain_action,
    canonical_key,
    describe_action,
    format_action,
    is_approval,
    parse_response,
    search_action,
)
from agentsim.corpus import Corpus, RetrievalResult, retrieve, tokenize
from agentsim.errors import BackendError, EmptyQuery, UnparseableAction
from agentsim.seeding import SeedRecord
from agentsim.validation import (
    ReviewQueue,
    ValidationConfig,
    grounding_report_for_action,
)

OBSERVATION_SNIPPET_WORDS = 40


# ---------------------------------------------------------------------------
# model backends
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    kind: str  # remote_chat | scripted
    endpoint_url: str = ""
    model_name: str = ""
    responses: tuple[str, ...] = ()
    rules: tuple[tuple[str, str], ...] = ()
    temperature: float = 0.0
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.kind not in ("remote_chat", "scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote_chat" and (not self.endpoint_url or not self.model_name):
            raise ValueError("remote_chat backend requires endpoint_url and model_name")
        if self.kind == "scripted" and not self.responses and not self.rules:
            raise ValueError("scripted backend requires responses or rules")


def api_key_env_name(backend_id: str) -> str:
    return "AGENTSIM_API_KEY_" + re.sub(r"[^A-Za-z0-9]", "_", backend_id).upper()


class ScriptedClient:
    """Deterministic backend: substring rules first, then an ordered script."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._responses = list(config.responses)
        self._cursor = 0

    def complete(self, prompt: str) -> str:
        for when, respond in self.config.rules:
            if when in prompt:
                return respond
        if self._cursor >= len(self._responses):
            raise BackendError(
                f"scripted backend {self.config.backend_id!r}: "
                f"no rule matched and script exhausted"
            )
        response = self._responses[self._cursor]
        self._cursor += 1
        return response


class RemoteChatClient:
    """Chat-completions client with bounded retries and exponential backoff."""

    MAX_ATTEMPTS = 3

    def __init__(
        self,
        config: BackendConfig,
        rng_seed: int = 0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.config = config
        self.rng_seed = rng_seed
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=config.timeout)
        self._api_key = os.environ.get(api_key_env_name(config.backend_id), "")

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "seed": self.rng_seed,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
        last_error: Exception | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                response = self._client.post(
                    self.config.endpoint_url, json=payload, headers=headers
                )
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (httpx.HTTPError, ValueError, KeyError, IndexError) as exc:
                last_error = exc
                if attempt < self.MAX_ATTEMPTS - 1:
                    self._sleep(0.5 * (2**attempt))
        raise BackendError(
            f"backend {self.config.backend_id!r} failed after "
            f"{self.MAX_ATTEMPTS} attempts: {last_error}"
        )


BackendClient = ScriptedClient | RemoteChatClient


def make_client(
    config: BackendConfig,
    rng_seed: int = 0,
    transport: httpx.BaseTransport | None = None,
) -> BackendClient:
    if config.kind == "scripted":
        return ScriptedClient(config)
    return RemoteChatClient(config, rng_seed=rng_seed, transport=transport)


# ---------------------------------------------------------------------------
# trace data model
# ---------------------------------------------------------------------------


class FixedClock:
    """Deterministic injectable time source: start, start+step, ..."""

    def __init__(self, start: float = 0.0, step: float = 1.0):
        self.start = start
        self.step = step
        self._ticks = 0

    def __call__(self) -> float:
        value = self.start + self._ticks * self.step
        self._ticks += 1
        return value


@dataclass
class TraceStep:
    trace_id: str
    step_index: int
    cycle_index: int
    role: str  # analyst | critic | judge | system
    model_id: str
    thought: str
    action: AgentAction | None
    observation: RetrievalResult | str | None = None
    divergence_score: float | None = None
    grounding_confidence: float | None = None
    status: str = "accepted"
    prompt: str = ""
    raw_response: str = ""
    timestamp: float = 0.0


@dataclass
class Trace:
    trace_id: str
    seed: SeedRecord
    steps: list[TraceStep]
    outcome: str  # answered | abstained | discarded
    prompt_hash: str
    analyst_model: str
    created_at: float


@dataclass(frozen=True)
class ToolCall:
    tool: str
    input: str
    output: str | tuple[str, ...]


@dataclass
class Trajectory:
    trace_id: str
    seed: SeedRecord
    tool_calls: list[ToolCall]
    final: dict
    outcome: str
    analyst_model: str = ""


@dataclass
class SimulationConfig:
    analyst: BackendConfig
    critics: tuple[BackendConfig, ...]
    max_cycles: int = 7
    retrieval_depth: int = 10
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    adaptive_consultation: bool = False
    explorations_per_seed: int = 1
    context_token_budget: int = 4000
    rng_seed: int = 0
    clock: Callable[[], float] | None = None

    def __post_init__(self) -> None:
        if len(self.critics) < 1:
            raise ValueError("at least one critic backend is required")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")
        if self.retrieval_depth < 1:
            raise ValueError("retrieval_depth must be >= 1")


# ---------------------------------------------------------------------------
# prompt rendering
# ---------------------------------------------------------------------------


def _snippet(text: str, words: int = OBSERVATION_SNIPPET_WORDS) -> str:
    parts = text.split()
    clipped = " ".join(parts[:words])
    return clipped + (" ..." if len(parts) > words else "")


def _history_blocks(steps: list[TraceStep], corpus: Corpus) -> list[tuple[str, str]]:
    blocks: list[tuple[str, str]] = []
    for step in steps:
        if step.role == "judge" and step.action is not None:
            blocks.append(
                ("action", f"[cycle {step.cycle_index}] {describe_action(step.action)}")
            )
        elif step.role == "system" and isinstance(step.observation, RetrievalResult):
            lines = [f"[retrieved for: {step.observation.query}]"]
            for doc_id, _score in step.observation.hits:
                lines.append(f"  {doc_id}: {_snippet(corpus.get(doc_id).text)}")
            if not step.observation.hits:
                lines.append("  (no documents matched)")
            blocks.append(("observation", "\n".join(lines)))
        elif step.role == "system" and isinstance(step.observation, str):
            blocks.append(("observation", f"[observation] {step.observation}"))
    return blocks


def render_history(steps: list[TraceStep], corpus: Corpus, token_budget: int) -> str:
    """Compact prior-step history; oldest observations are elided first when
    the whitespace-token count exceeds the budget."""
    blocks = _history_blocks(steps, corpus)
    if not blocks:
        return "History: (none yet)"

    def total(blks: list[tuple[str, str]]) -> int:
        return sum(len(text.split()) for _, text in blks)

    i = 0
    while total(blocks) > token_budget and i < len(blocks):
        kind, _ = blocks[i]
        if kind == "observation":
            blocks[i] = ("observation", "[observation elided]")
        i += 1
    return "History:\n" + "\n".join(text for _, text in blocks)


def render_analyst_prompt(question: str, steps: list[TraceStep], corpus: Corpus, budget: int) -> str:
    return prompts.ANALYST_TEMPLATE.format(
        action_format=prompts.ACTION_FORMAT,
        question=question,
        history=render_history(steps, corpus, budget),
    )


def render_critic_prompt(
    question: str,
    steps: list[TraceStep],
    corpus: Corpus,
    proposal: AgentAction,
    budget: int,
) -> str:
    return prompts.CRITIC_TEMPLATE.format(
        action_format=prompts.ACTION_FORMAT,
        question=question,
        history=render_history(steps, corpus, budget),
        proposal=format_action(proposal),
    )


# ---------------------------------------------------------------------------
# analyst / critic / judge
# ---------------------------------------------------------------------------


def analyst_propose(client: BackendClient, prompt: str) -> tuple[str, AgentAction, str]:
    """Prompt the analyst and parse its reply; one retry on a format miss."""
    raw = client.complete(prompt)
    try:
        thought, action = parse_response(raw)
    except UnparseableAction:
        raw = client.complete(prompt + prompts.FORMAT_REMINDER)
        thought, action = parse_response(raw)
    return thought, action, raw


def critic_review(
    client: BackendClient, proposal: AgentAction, prompt: str
) -> tuple[str, AgentAction, str]:
    """Prompt a critic; an approval returns the proposal unchanged."""
    raw = client.complete(prompt)
    if is_approval(raw):
        return "", proposal, raw
    try:
        thought, action = parse_response(raw)
    except UnparseableAction:
        raw = client.complete(prompt + prompts.FORMAT_REMINDER)
        if is_approval(raw):
            return "", proposal, raw
        thought, action = parse_response(raw)
    return thought, action, raw


@dataclass
class JudgeOutcome:
    divergence_score: float
    status: str  # accepted | flagged
    chosen: AgentAction | None
    candidates: list[tuple[str, AgentAction]]


def judge_step(
    proposals: list[tuple[str, AgentAction]], config: ValidationConfig
) -> JudgeOutcome:
    """Score model disagreement and pick the canonical action.

    The divergence score is one minus the plurality fraction over canonical
    action-equality classes. Above theta the step is flagged and every
    distinct candidate is surfaced for review; otherwise the plurality action
    is chosen, with ties broken in favor of the analyst's proposal and then
    by lexicographic payload.
    """
    if len(proposals) < 2:
        raise ValueError("judge_step requires at least 2 proposals")

    class_order: list[tuple] = []
    classes: dict[tuple, dict] = {}
    for model_id, action in proposals:
        key = canonical_key(action)
        if key not in classes:
            classes[key] = {"model_id": model_id, "action": action, "count": 0}
            class_order.append(key)
        classes[key]["count"] += 1

    plurality = max(c["count"] for c in classes.values())
    ds = 1.0 - plurality / len(proposals)

    if ds > config.theta:
        candidates = [(classes[k]["model_id"], classes[k]["action"]) for k in class_order]
        return JudgeOutcome(divergence_score=ds, status="flagged", chosen=None, candidates=candidates)

    tied = [k for k in class_order if classes[k]["count"] == plurality]
    analyst_key = canonical_key(proposals[0][1])
    winner = analyst_key if analyst_key in tied else min(tied, key=repr)
    return JudgeOutcome(
        divergence_score=ds,
        status="accepted",
        chosen=classes[winner]["action"],
        candidates=[],
    )


# ---------------------------------------------------------------------------
# trajectory execution
# ---------------------------------------------------------------------------


def _safe_retrieve(corpus: Corpus, query: str, depth: int) -> RetrievalResult:
    try:
        return retrieve(corpus, query, depth)
    except EmptyQuery:
        return RetrievalResult(query=query, hits=(), depth=depth)


def should_consult_critics(
    adaptive: bool, last_synthesis_confidence: float | None, threshold: float
) -> bool:
    """Critics always review unless adaptive mode saw a well-grounded synthesis."""
    return not (
        adaptive
        and last_synthesis_confidence is not None
        and last_synthesis_confidence >= threshold
    )


def _repair_query(
    last_query: str, uncovered: frozenset[str], answer: str, stopwords: frozenset[str]
) -> str:
    """Augment the last search with the first 3 uncovered answer tokens."""
    ordered: list[str] = []
    for tok in tokenize(answer, stopwords).content_tokens:
        if tok in uncovered and tok not in ordered:
            ordered.append(tok)
        if len(ordered) == 3:
            break
    extras = [t for t in ordered if t not in last_query.lower().split()]
    return (last_query + " " + " ".join(extras)).strip() if extras else last_query


def run_trajectory(
    seed: SeedRecord,
    corpus: Corpus,
    config: SimulationConfig,
    queue: ReviewQueue | None = None,
    exploration: int = 0,
    client_factory=make_client,
) -> tuple[Trace, Trajectory]:
    """Run one simulation from ``seed`` and return its trace and trajectory.

    A backend failure aborts the run: the error is recorded as a system step
    and the trajectory is discarded. When a review queue is supplied, every
    flagged step is enqueued with its competing candidates.
    """
    clock = config.clock if config.clock is not None else time.time
    vcfg = config.validation
    stopwords = corpus.stopwords
    trace_id = f"{seed.seed_id}-e{exploration:02d}"

    analyst = client_factory(config.analyst, rng_seed=config.rng_seed)
    critics = [client_factory(c, rng_seed=config.rng_seed) for c in config.critics]

    trace = Trace(
        trace_id=trace_id,
        seed=seed,
        steps=[],
        outcome="discarded",
        prompt_hash=prompts.PROMPT_BUNDLE_HASH,
        analyst_model=config.analyst.backend_id,
        created_at=clock(),
    )
    steps = trace.steps

    def add_step(**kwargs) -> TraceStep:
        action = kwargs.get("action")
        gc = kwargs.pop("grounding_confidence", None)
        if gc is None and action is not None and action.action_type == "synthesize":
            gc = grounding_report_for_action(
                action, corpus, stopwords, ignore_unknown=True
            ).token_coverage
        step = TraceStep(
            trace_id=trace_id,
            step_index=len(steps),
            grounding_confidence=gc,
            timestamp=clock(),
            **kwargs,
        )
        steps.append(step)
        return step

    last_search_query = seed.query
    reretrievals_used = 0
    last_synth_gc: float | None = None
    final: dict = {}
    outcome: str | None = None

    for cycle in range(config.max_cycles):
        analyst_prompt = render_analyst_prompt(
            seed.query, steps, corpus, config.context_token_budget
        )
        try:
            thought, proposal, raw = analyst_propose(analyst, analyst_prompt)
        except BackendError as exc:
            add_step(
                cycle_index=cycle,
                role="system",
                model_id="engine",
                thought="",
                action=abstain_action(f"backend error: {exc}"),
                status="discarded",
            )
            trace.outcome = "discarded"
            return trace, build_trajectory(trace)

        add_step(
            cycle_index=cycle,
            role="analyst",
            model_id=config.analyst.backend_id,
            thought=thought,
            action=proposal,
            prompt=analyst_prompt,
            raw_response=raw,
        )

        consult = should_consult_critics(
            config.adaptive_consultation, last_synth_gc, vcfg.grounding_threshold
        )
        proposals: list[tuple[str, AgentAction]] = [(config.analyst.backend_id, proposal)]
        if consult:
            critic_prompt = render_critic_prompt(
                seed.query, steps, corpus, proposal, config.context_token_budget
            )
            try:
                for backend, client in zip(config.critics, critics):
                    cthought, caction, craw = critic_review(client, proposal, critic_prompt)
                    add_step(
                        cycle_index=cycle,
                        role="critic",
                        model_id=backend.backend_id,
                        thought=cthought,
                        action=caction,
                        prompt=critic_prompt,
                        raw_response=craw,
                    )
                    proposals.append((backend.backend_id, caction))
            except BackendError as exc:
                add_step(
                    cycle_index=cycle,
                    role="system",
                    model_id="engine",
                    thought="",
                    action=abstain_action(f"backend error: {exc}"),
                    status="discarded",
                )
                trace.outcome = "discarded"
                return trace, build_trajectory(trace)

        if len(proposals) >= 2:
            verdict = judge_step(proposals, vcfg)
            ds: float | None = verdict.divergence_score
            flagged = verdict.status == "flagged"
            # Flagged steps proceed provisionally with the analyst's proposal;
            # review may later promote a competing candidate or revise it.
            chosen = proposal if flagged else verdict.chosen
        else:
            verdict = None
            ds = None
            flagged = False
            chosen = proposal

        assert chosen is not None
        judge = add_step(
            cycle_index=cycle,
            role="judge",
            model_id="judge",
            thought="",
            action=chosen,
            divergence_score=ds,
            status="flagged" if flagged else "accepted",
        )
        if flagged and queue is not None and verdict is not None:
            queue.enqueue(
                trace_id=trace_id,
                step_index=judge.step_index,
                seed_query=seed.query,
                context=render_history(steps, corpus, config.context_token_budget),
                candidates=verdict.candidates,
                divergence_score=verdict.divergence_score,
            )

        if chosen.action_type == "search":
            query = chosen.payload["query"]
            result = _safe_retrieve(corpus, query, config.retrieval_depth)
            add_step(
                cycle_index=cycle,
                role="system",
                model_id="retriever",
                thought="",
                action=chosen,
                observation=result,
            )
            last_search_query = query
        elif chosen.action_type == "rerank":
            add_step(
                cycle_index=cycle,
                role="system",
                model_id="engine",
                thought="",
                action=chosen,
                observation="order applied: " + ", ".join(chosen.payload["order"]),
            )
        elif chosen.action_type == "summarize":
            add_step(
                cycle_index=cycle,
                role="system",
                model_id="engine",
                thought="",
                action=chosen,
                observation=chosen.payload["summary"],
            )
        elif chosen.action_type == "synthesize":
            report = grounding_report_for_action(chosen, corpus, stopwords, ignore_unknown=True)
            gc = report.token_coverage
            judge.grounding_confidence = gc
            last_synth_gc = gc
            if gc < vcfg.grounding_threshold and reretrievals_used < vcfg.max_reretrievals:
                judge.status = "flagged" if flagged else "auto_reretrieved"
                reretrievals_used += 1
                repair = _repair_query(
                    last_search_query, report.uncovered_tokens, chosen.payload["answer"], stopwords
                )
                result = _safe_retrieve(corpus, repair, config.retrieval_depth)
                add_step(
                    cycle_index=cycle,
                    role="system",
                    model_id="engine",
                    thought="",
                    action=search_action(repair),
                    observation=result,
                )
                last_search_query = repair
                continue
            if gc < vcfg.grounding_threshold and not flagged:
                judge.status = "auto_reretrieved"
            outcome = "answered"
            final = {
                "answer": chosen.payload["answer"],
                "cited_doc_ids": list(chosen.payload["cites"]),
            }
            break
        else:  # abstain
            outcome = "abstained"
            final = {"abstain_reason": chosen.payload["reason"]}
            break

    if outcome is None:
        add_step(
            cycle_index=config.max_cycles,
            role="system",
            model_id="engine",
            thought="",
            action=abstain_action("maximum retrieval-reasoning cycles reached"),
        )
        outcome = "abstained"
        final = {"abstain_reason": "maximum retrieval-reasoning cycles reached"}

    trace.outcome = outcome
    trajectory = build_trajectory(trace, final)
    return trace, trajectory


# ---------------------------------------------------------------------------
# trajectory projection
# ---------------------------------------------------------------------------


def project_tool_calls(trace: Trace) -> list[ToolCall]:
    """Deterministic projection of executed actions out of a trace.

    System steps with an action are executions (searches, reranks,
    summaries, forced abstains); judge steps contribute their synthesize or
    abstain terminations.
    """
    calls: list[ToolCall] = []
    for step in trace.steps:
        action = step.action
        if action is None:
            continue
        is_execution = step.role == "system"
        is_termination = step.role == "judge" and action.action_type in ("synthesize", "abstain")
        if not (is_execution or is_termination):
            continue
        if action.action_type == "search":
            doc_ids: tuple[str, ...] = ()
            if isinstance(step.observation, RetrievalResult):
                doc_ids = tuple(step.observation.doc_ids)
            calls.append(ToolCall("search", action.payload["query"], doc_ids))
        elif action.action_type == "rerank":
            order = ", ".join(action.payload["order"])
            calls.append(ToolCall("rerank", order, order))
        elif action.action_type == "summarize":
            calls.append(
                ToolCall(
                    "summarize",
                    ", ".join(action.payload["doc_ids"]),
                    action.payload["summary"],
                )
            )
        elif action.action_type == "synthesize":
            calls.append(
                ToolCall(
                    "synthesize",
                    action.payload["answer"],
                    tuple(action.payload["cites"]),
                )
            )
        else:
            calls.append(ToolCall("abstain", action.payload["reason"], ""))
    return calls


def _final_from_trace(trace: Trace) -> dict:
    if trace.outcome == "answered":
        for step in reversed(trace.steps):
            if (
                step.role == "judge"
                and step.action is not None
                and step.action.action_type == "synthesize"
            ):
                return {
                    "answer": step.action.payload["answer"],
                    "cited_doc_ids": list(step.action.payload["cites"]),
                }
    if trace.outcome == "abstained":
        for step in reversed(trace.steps):
            if step.action is not None and step.action.action_type == "abstain":
                return {"abstain_reason": step.action.payload["reason"]}
    return {}


def build_trajectory(trace: Trace, final: dict | None = None) -> Trajectory:
    return Trajectory(
        trace_id=trace.trace_id,
        seed=trace.seed,
        tool_calls=project_tool_calls(trace),
        final=final if final is not None else _final_from_trace(trace),
        outcome=trace.outcome,
        analyst_model=trace.analyst_model,
    )
