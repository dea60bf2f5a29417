// Decision form state and validation, kept free of DOM concerns so the
// submit-gating rules (mirroring the API's 422 responses) are testable.

import type { ActionDict, DecisionBody, ItemDetail, Verdict } from "./types.js";

export interface FormState {
    verdict: Verdict | null;
    candidateIndex: number | null;
    revisionText: string;
    notes: string;
    reviewerId: string;
}

export function emptyForm(reviewerId = ""): FormState {
    return {
        verdict: null,
        candidateIndex: null,
        revisionText: "",
        notes: "",
        reviewerId,
    };
}

/** Problems that must be fixed before submitting; empty means valid. */
export function validateForm(state: FormState, candidateCount: number): string[] {
    const problems: string[] = [];
    if (!state.reviewerId.trim()) {
        problems.push("set a reviewer id");
    }
    if (state.verdict === null) {
        problems.push("pick a verdict (P/R/D)");
        return problems;
    }
    if (state.verdict === "promote") {
        if (
            state.candidateIndex === null ||
            state.candidateIndex < 0 ||
            state.candidateIndex >= candidateCount
        ) {
            problems.push("promote needs a selected candidate (1-9)");
        }
    }
    if (state.verdict === "revise" && !state.revisionText.trim()) {
        problems.push("revise needs replacement text");
    }
    return problems;
}

/**
 * A revision reuses the shape of the candidate being revised (the selected
 * one, else the first) and swaps in the edited primary text.
 */
export function buildRevisedAction(base: ActionDict, text: string): ActionDict {
    const payload: Record<string, unknown> = { ...base.payload };
    switch (base.action_type) {
        case "search":
            payload["query"] = text;
            break;
        case "rerank":
            payload["order"] = text
                .split(",")
                .map((part) => part.trim())
                .filter((part) => part.length > 0);
            break;
        case "summarize":
            payload["summary"] = text;
            break;
        case "synthesize":
            payload["answer"] = text;
            break;
        default:
            payload["reason"] = text;
    }
    return { action_type: base.action_type, payload };
}

export function buildDecisionBody(state: FormState, item: ItemDetail): DecisionBody {
    if (state.verdict === null) {
        throw new Error("cannot build a decision without a verdict");
    }
    const body: DecisionBody = {
        verdict: state.verdict,
        expected_version: item.version,
    };
    if (state.notes.trim()) {
        body.notes = state.notes.trim();
    }
    if (state.verdict === "promote" && state.candidateIndex !== null) {
        body.chosen_candidate_index = state.candidateIndex;
    }
    if (state.verdict === "revise") {
        const baseIndex = state.candidateIndex ?? 0;
        const base = item.candidates[baseIndex]?.action ?? item.candidates[0].action;
        body.revised_action = buildRevisedAction(base, state.revisionText.trim());
    }
    return body;
}
