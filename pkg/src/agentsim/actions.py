"""Agent actions: construction, canonical equality, and the text wire format.

Model backends emit actions as plain text blocks (``Action: search`` /
``Query: ...``); this module parses and renders that format. Canonical
equality collapses whitespace and case on the payload text so that
trivially-reworded proposals count as the same action when scoring
disagreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from agentsim.errors import UnparseableAction

ACTION_TYPES = ("search", "rerank", "summarize", "synthesize", "abstain")


@dataclass(frozen=True)
class AgentAction:
    action_type: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.action_type not in ACTION_TYPES:
            raise ValueError(f"unknown action type {self.action_type!r}")
        if self.action_type == "search" and not str(self.payload.get("query", "")).strip():
            raise ValueError("search action requires a non-empty query")
        if self.action_type == "synthesize" and not self.payload.get("cites"):
            raise ValueError("synthesize action must cite at least one doc_id")


def search_action(query: str) -> AgentAction:
    return AgentAction("search", {"query": query})


def rerank_action(order: list[str]) -> AgentAction:
    return AgentAction("rerank", {"order": list(order)})


def summarize_action(doc_ids: list[str], summary: str) -> AgentAction:
    return AgentAction("summarize", {"doc_ids": list(doc_ids), "summary": summary})


def synthesize_action(answer: str, cites: list[str]) -> AgentAction:
    return AgentAction("synthesize", {"answer": answer, "cites": list(cites)})


def abstain_action(reason: str) -> AgentAction:
    return AgentAction("abstain", {"reason": reason})


def _collapse(text: str) -> str:
    return " ".join(str(text).split()).lower()


def canonical_key(action: AgentAction) -> tuple:
    """Equality key used when counting which models chose "the same" action.

    Free-text payloads compare whitespace-collapsed and lowercased; rerank
    compares the doc_id sequence; abstaining is one action regardless of the
    stated reason.
    """
    p = action.payload
    if action.action_type == "search":
        return ("search", _collapse(p["query"]))
    if action.action_type == "rerank":
        return ("rerank", tuple(p["order"]))
    if action.action_type == "summarize":
        return ("summarize", tuple(p["doc_ids"]), _collapse(p["summary"]))
    if action.action_type == "synthesize":
        return ("synthesize", _collapse(p["answer"]))
    return ("abstain",)


def action_to_dict(action: AgentAction) -> dict:
    return {"action_type": action.action_type, "payload": dict(action.payload)}


def action_from_dict(obj: dict) -> AgentAction:
    return AgentAction(action_type=obj["action_type"], payload=dict(obj["payload"]))


def format_action(action: AgentAction) -> str:
    """Render an action as the text block a backend would emit."""
    p = action.payload
    if action.action_type == "search":
        return f"Action: search\nQuery: {p['query']}"
    if action.action_type == "rerank":
        return "Action: rerank\nOrder: " + ", ".join(p["order"])
    if action.action_type == "summarize":
        return (
            "Action: summarize\nDocs: "
            + ", ".join(p["doc_ids"])
            + f"\nSummary: {p['summary']}"
        )
    if action.action_type == "synthesize":
        return f"Action: synthesize\nAnswer: {p['answer']}\nCites: " + ", ".join(p["cites"])
    return f"Action: abstain\nReason: {p['reason']}"


def describe_action(action: AgentAction) -> str:
    """One-line human-readable form used in prompt history."""
    p = action.payload
    if action.action_type == "search":
        return f"search: {p['query']}"
    if action.action_type == "rerank":
        return "rerank: " + ", ".join(p["order"])
    if action.action_type == "summarize":
        return "summarize " + ", ".join(p["doc_ids"]) + f": {p['summary']}"
    if action.action_type == "synthesize":
        return f"synthesize: {p['answer']} [cites: " + ", ".join(p["cites"]) + "]"
    return f"abstain: {p['reason']}"


_KEYS = ("thought", "action", "query", "order", "docs", "summary", "answer", "cites", "reason")


def _split_sections(text: str) -> dict[str, str]:
    """Collect ``Key: value`` sections; a value runs until the next known key."""
    sections: dict[str, str] = {}
    current: str | None = None
    buffer: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        matched = None
        for key in _KEYS:
            prefix = key + ":"
            if stripped.lower().startswith(prefix):
                matched = key
                value = stripped[len(prefix) :].strip()
                break
        if matched is not None:
            if current is not None:
                sections[current] = "\n".join(buffer).strip()
            current = matched
            buffer = [value]
        elif current is not None:
            buffer.append(stripped)
    if current is not None:
        sections[current] = "\n".join(buffer).strip()
    return sections


def _id_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def parse_response(text: str) -> tuple[str, AgentAction]:
    """Parse a backend reply into ``(thought, action)``.

    Raises ``UnparseableAction`` when the action block is missing or
    incomplete.
    """
    sections = _split_sections(text)
    thought = sections.get("thought", "")
    kind = sections.get("action", "").strip().lower()
    if kind not in ACTION_TYPES:
        raise UnparseableAction(f"missing or unknown action type in reply: {text[:200]!r}")
    try:
        if kind == "search":
            if not sections.get("query"):
                raise KeyError("query")
            return thought, search_action(sections["query"])
        if kind == "rerank":
            order = _id_list(sections.get("order", ""))
            if not order:
                raise KeyError("order")
            return thought, rerank_action(order)
        if kind == "summarize":
            doc_ids = _id_list(sections.get("docs", ""))
            if not doc_ids or "summary" not in sections:
                raise KeyError("docs/summary")
            return thought, summarize_action(doc_ids, sections["summary"])
        if kind == "synthesize":
            cites = _id_list(sections.get("cites", ""))
            if not sections.get("answer") or not cites:
                raise KeyError("answer/cites")
            return thought, synthesize_action(sections["answer"], cites)
        if not sections.get("reason"):
            raise KeyError("reason")
        return thought, abstain_action(sections["reason"])
    except (KeyError, ValueError) as exc:
        raise UnparseableAction(f"incomplete {kind} action: {exc}") from exc


def is_approval(text: str) -> bool:
    for line in text.splitlines():
        stripped = line.strip()
        if stripped:
            return stripped.lower().startswith("approve")
    return False
