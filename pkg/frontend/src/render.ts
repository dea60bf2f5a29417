// DOM construction for the queue, the side-by-side comparison view, and the
// decision form. Rendering is data-in, element-out; state lives in main.ts.

import { diffAgainst, primaryText } from "./diff.js";
import { validateForm } from "./form.js";
import type { FormState } from "./form.js";
import type { ItemDetail, ItemSummary, Stats, Verdict } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className = "",
    text = "",
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text) node.textContent = text;
    return node;
}

export function renderStats(stats: Stats | null): HTMLElement {
    const bar = el("div", "stats");
    if (!stats) {
        bar.append(el("span", "stat", "stats unavailable"));
        return bar;
    }
    const agreement =
        stats.agreement_rate === null ? "n/a" : `${Math.round(stats.agreement_rate * 100)}%`;
    const parts: [string, string][] = [
        ["pending", String(stats.pending)],
        ["decided", String(stats.decided)],
        ["promote", String(stats.promote)],
        ["revise", String(stats.revise)],
        ["discard", String(stats.discard)],
        ["agreement", agreement],
    ];
    for (const [label, value] of parts) {
        const stat = el("span", "stat");
        stat.append(el("strong", "", value), el("span", "", ` ${label}`));
        bar.append(stat);
    }
    return bar;
}

export function renderQueue(
    items: ItemSummary[],
    selectedId: string | null,
    onSelect: (itemId: string) => void,
): HTMLElement {
    const list = el("ul", "queue-list");
    if (items.length === 0) {
        list.append(el("li", "queue-empty", "No pending items."));
        return list;
    }
    for (const item of items) {
        const row = el("li", "queue-item" + (item.item_id === selectedId ? " selected" : ""));
        const button = el("button", "queue-button");
        button.type = "button";
        button.addEventListener("click", () => onSelect(item.item_id));
        const ds = el("span", "ds-badge", item.divergence_score.toFixed(2));
        const label = el("span", "queue-query", item.seed_query);
        button.append(ds, label);
        if (item.double_annotation) {
            button.append(el("span", "tag tag-double", "2x"));
        }
        if (item.needs_adjudication) {
            button.append(el("span", "tag tag-adjudicate", "adjudicate"));
        }
        row.append(button);
        list.append(row);
    }
    return list;
}

export interface DetailCallbacks {
    onSelectCandidate: (index: number) => void;
    onVerdict: (verdict: Verdict) => void;
    onRevisionText: (text: string) => void;
    onNotes: (text: string) => void;
    onSubmit: () => void;
}

export function renderDetail(
    item: ItemDetail,
    form: FormState,
    callbacks: DetailCallbacks,
): HTMLElement {
    const root = el("section", "detail");

    const heading = el("header", "detail-header");
    heading.append(
        el("h2", "", item.seed_query),
        el(
            "p",
            "detail-meta",
            `${item.item_id} · step ${item.step_index} · divergence ${item.divergence_score.toFixed(2)}` +
                (item.double_annotation ? " · double-annotated" : "") +
                (item.needs_adjudication ? " · needs adjudication" : ""),
        ),
    );
    root.append(heading);

    const context = el("details", "context");
    context.append(el("summary", "", "Step context"));
    context.append(el("pre", "context-body", item.context));
    root.append(context);

    root.append(renderCandidates(item, form, callbacks.onSelectCandidate));
    root.append(renderRubric(item.rubric));
    root.append(renderForm(item, form, callbacks));
    if (item.decisions.length > 0) {
        root.append(renderDecisions(item));
    }
    return root;
}

function renderCandidates(
    item: ItemDetail,
    form: FormState,
    onSelect: (index: number) => void,
): HTMLElement {
    const grid = el("div", "candidates");
    const reference = item.candidates.length > 0 ? primaryText(item.candidates[0].action) : "";
    item.candidates.forEach((candidate, index) => {
        const selected = form.candidateIndex === index;
        const card = el("article", "candidate" + (selected ? " selected" : ""));
        card.setAttribute("role", "button");
        card.tabIndex = 0;
        const choose = () => onSelect(index);
        card.addEventListener("click", choose);
        card.addEventListener("keydown", (event) => {
            if (event.key === " ") {
                event.preventDefault();
                choose();
            }
        });

        const head = el("header", "candidate-head");
        head.append(
            el("span", "candidate-key", String(index + 1)),
            el("span", "model-badge", candidate.model_id),
            el("span", "action-type", candidate.action.action_type),
        );
        card.append(head);

        const body = el("p", "candidate-body");
        if (index === 0) {
            body.textContent = primaryText(candidate.action);
        } else {
            for (const segment of diffAgainst(reference, primaryText(candidate.action))) {
                const span = el("span", segment.changed ? "diff-changed" : "", segment.text);
                body.append(span, document.createTextNode(" "));
            }
        }
        card.append(body);

        if (candidate.evidence.length > 0) {
            const evidence = el("ul", "evidence");
            for (const snippet of candidate.evidence) {
                const entry = el("li", "evidence-item");
                entry.append(
                    el("span", "evidence-doc", snippet.doc_id),
                    el("span", "evidence-text", snippet.snippet),
                );
                evidence.append(entry);
            }
            card.append(evidence);
        }
        grid.append(card);
    });
    return grid;
}

function renderRubric(rubric: string[]): HTMLElement {
    const box = el("aside", "rubric");
    box.append(el("h3", "", "Review checklist"));
    const list = el("ul", "rubric-list");
    for (const entry of rubric) {
        const row = el("li");
        const label = el("label");
        const checkbox = el("input") as HTMLInputElement;
        checkbox.type = "checkbox";
        label.append(checkbox, document.createTextNode(" " + entry));
        row.append(label);
        list.append(row);
    }
    box.append(list);
    return box;
}

function renderForm(item: ItemDetail, form: FormState, callbacks: DetailCallbacks): HTMLElement {
    const panel = el("form", "decision-form");
    panel.addEventListener("submit", (event) => {
        event.preventDefault();
        callbacks.onSubmit();
    });

    const verdicts = el("div", "verdicts");
    (["promote", "revise", "discard"] as Verdict[]).forEach((verdict) => {
        const label = el("label", "verdict" + (form.verdict === verdict ? " selected" : ""));
        const radio = el("input") as HTMLInputElement;
        radio.type = "radio";
        radio.name = "verdict";
        radio.value = verdict;
        radio.checked = form.verdict === verdict;
        radio.addEventListener("change", () => callbacks.onVerdict(verdict));
        label.append(radio, document.createTextNode(` ${verdict} (${verdict[0].toUpperCase()})`));
        verdicts.append(label);
    });
    panel.append(verdicts);

    const revision = el("textarea", "revision") as HTMLTextAreaElement;
    revision.placeholder = "Replacement text for the revised action";
    revision.value = form.revisionText;
    revision.disabled = form.verdict !== "revise";
    revision.addEventListener("input", () => callbacks.onRevisionText(revision.value));
    panel.append(revision);

    const notes = el("textarea", "notes") as HTMLTextAreaElement;
    notes.placeholder = "Notes (optional)";
    notes.value = form.notes;
    notes.addEventListener("input", () => callbacks.onNotes(notes.value));
    panel.append(notes);

    const problems = validateForm(form, item.candidates.length);
    const submitRow = el("div", "submit-row");
    const submit = el("button", "submit") as HTMLButtonElement;
    submit.type = "submit";
    submit.textContent = "Submit decision (Enter)";
    submit.disabled = problems.length > 0;
    submitRow.append(submit);
    if (problems.length > 0) {
        submitRow.append(el("span", "problems", problems.join(" · ")));
    }
    panel.append(submitRow);
    return panel;
}

function renderDecisions(item: ItemDetail): HTMLElement {
    const box = el("section", "decisions");
    box.append(el("h3", "", "Decisions so far"));
    const list = el("ul");
    for (const decision of item.decisions) {
        const text =
            `${decision.reviewer_id}: ${decision.verdict}` +
            (decision.chosen_candidate_index !== null
                ? ` candidate ${decision.chosen_candidate_index + 1}`
                : "") +
            (decision.notes ? ` — ${decision.notes}` : "");
        list.append(el("li", "", text));
    }
    box.append(list);
    return box;
}

export function renderBanner(message: string, onRetry: (() => void) | null): HTMLElement {
    const banner = el("div", "banner");
    banner.setAttribute("role", "alert");
    banner.append(el("span", "", message));
    if (onRetry) {
        const retry = el("button", "retry") as HTMLButtonElement;
        retry.type = "button";
        retry.textContent = "Retry";
        retry.addEventListener("click", onRetry);
        banner.append(retry);
    }
    return banner;
}
