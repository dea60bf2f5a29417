"""HTTP facade over the review queue, consumed by the review UI.

Every state change goes through the queue's single-writer decision path, so
the full service state can always be reproduced by replaying
``decisions.jsonl``. Reviewer identity is a plain request header; this is a
local annotation tool, not a multi-tenant product.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from agentsim.actions import AgentAction, action_to_dict, describe_action
from agentsim.corpus import Corpus
from agentsim.errors import AlreadyDecided, PersistenceError, StaleItem
from agentsim.validation import (
    RUBRIC_GUIDANCE,
    ReviewDecision,
    ReviewItem,
    ReviewQueue,
)

EVIDENCE_SNIPPET_CHARS = 240


class DecisionBody(BaseModel):
    verdict: str
    chosen_candidate_index: int | None = None
    revised_action: dict | None = None
    notes: str = ""
    expected_version: int | None = None


def _summary(item: ReviewItem) -> dict:
    return {
        "item_id": item.item_id,
        "trace_id": item.trace_id,
        "step_index": item.step_index,
        "seed_query": item.seed_query,
        "divergence_score": item.divergence_score,
        "candidate_count": len(item.candidates),
        "double_annotation": item.double_annotation,
        "needs_adjudication": item.needs_adjudication,
        "status": item.status,
        "decision_count": len(item.decisions),
        "version": item.version,
    }


def _candidate_payload(model_id: str, action: AgentAction, corpus: Corpus | None) -> dict:
    entry = {
        "model_id": model_id,
        "action": action_to_dict(action),
        "display": describe_action(action),
        "evidence": [],
    }
    if corpus is not None and action.action_type == "synthesize":
        for doc_id in action.payload.get("cites", []):
            if doc_id in corpus:
                text = corpus.get(doc_id).text
                entry["evidence"].append(
                    {"doc_id": doc_id, "snippet": text[:EVIDENCE_SNIPPET_CHARS]}
                )
            else:
                entry["evidence"].append({"doc_id": doc_id, "snippet": "(not in corpus)"})
    return entry


def _detail(item: ReviewItem, corpus: Corpus | None) -> dict:
    payload = _summary(item)
    payload.update(
        {
            "context": item.context,
            "candidates": [
                _candidate_payload(model_id, action, corpus)
                for model_id, action in item.candidates
            ],
            "rubric": list(RUBRIC_GUIDANCE),
            "decisions": [
                {
                    "reviewer_id": d.reviewer_id,
                    "verdict": d.verdict,
                    "chosen_candidate_index": d.chosen_candidate_index,
                    "revised_action": action_to_dict(d.revised_action) if d.revised_action else None,
                    "notes": d.notes,
                    "decided_at": d.decided_at,
                }
                for d in item.decisions
            ],
        }
    )
    return payload


API_DOCS_HTML = """<!doctype html>
<html><head><title>Review API</title></head><body>
<h1>Review API</h1>
<p>All bodies are JSON (UTF-8). Mutating requests require the
<code>X-Reviewer-Id</code> header.</p>
<ul>
<li><code>GET /api/review/items?status=pending&amp;limit=N</code> —
item summaries, divergence score descending.</li>
<li><code>GET /api/review/items/{id}</code> — full item: context, candidates
with model ids and evidence snippets, rubric checklist, decisions.</li>
<li><code>POST /api/review/items/{id}/decision</code> — body
<code>{"verdict": "promote"|"revise"|"discard", "chosen_candidate_index"?,
"revised_action"?, "notes"?, "expected_version"?}</code>. 409 on conflicts,
422 on invalid bodies.</li>
<li><code>GET /api/review/stats</code> — pending/decided counts, verdict
counts, inter-reviewer agreement rate.</li>
</ul>
</body></html>
"""


def create_app(
    queue: ReviewQueue,
    corpus: Corpus | None = None,
    ui_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="agentsim review service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/api/review/items")
    def list_items(
        status: str = Query(default="pending"),
        limit: int = Query(default=50, ge=1, le=1000),
    ) -> list[dict]:
        try:
            items = queue.items(None if status == "all" else status)
        except PersistenceError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return [_summary(item) for item in items[:limit]]

    @app.get("/api/review/items/{item_id}")
    def get_item(item_id: str) -> dict:
        try:
            item = queue.get(item_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        return _detail(item, corpus)

    @app.post("/api/review/items/{item_id}/decision")
    def post_decision(
        item_id: str,
        body: DecisionBody,
        x_reviewer_id: str = Header(default=""),
    ) -> dict:
        if not x_reviewer_id.strip():
            raise HTTPException(status_code=422, detail="X-Reviewer-Id header is required")
        try:
            item = queue.get(item_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")

        revised = None
        if body.revised_action is not None:
            try:
                revised = AgentAction(
                    action_type=body.revised_action.get("action_type", ""),
                    payload=dict(body.revised_action.get("payload", {})),
                )
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=f"invalid revised_action: {exc}")
        try:
            decision = ReviewDecision(
                reviewer_id=x_reviewer_id.strip(),
                verdict=body.verdict,
                chosen_candidate_index=body.chosen_candidate_index,
                revised_action=revised,
                notes=body.notes,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if decision.verdict == "promote":
            index = decision.chosen_candidate_index
            if index is None or not 0 <= index < len(item.candidates):
                raise HTTPException(status_code=422, detail=f"invalid candidate index {index!r}")

        try:
            updated = queue.decide(item_id, decision, expected_version=body.expected_version)
        except (AlreadyDecided, StaleItem) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _detail(updated, corpus)

    @app.get("/api/review/stats")
    def get_stats() -> dict:
        return queue.stats()

    @app.get("/api/docs", response_class=HTMLResponse)
    def api_docs() -> str:
        return API_DOCS_HTML

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
