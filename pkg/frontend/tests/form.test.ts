import { describe, expect, it } from "vitest";

import { buildDecisionBody, buildRevisedAction, emptyForm, validateForm } from "../src/form.js";
import type { ItemDetail } from "../src/types.js";

function detail(candidateCount = 3): ItemDetail {
    return {
        item_id: "tr-1-s003",
        trace_id: "tr-1",
        step_index: 3,
        seed_query: "what is alpha",
        divergence_score: 0.67,
        candidate_count: candidateCount,
        double_annotation: false,
        needs_adjudication: false,
        status: "pending",
        decision_count: 0,
        version: 2,
        context: "",
        candidates: Array.from({ length: candidateCount }, (_, i) => ({
            model_id: `m${i}`,
            action: { action_type: "search", payload: { query: `variant ${i}` } },
            display: `search: variant ${i}`,
            evidence: [],
        })),
        rubric: [],
        decisions: [],
    };
}

describe("validateForm", () => {
    it("requires a reviewer id and a verdict", () => {
        const problems = validateForm(emptyForm(), 3);
        expect(problems.some((p) => p.includes("reviewer"))).toBe(true);
        expect(problems.some((p) => p.includes("verdict"))).toBe(true);
    });

    it("promote requires a candidate in range", () => {
        const state = { ...emptyForm("alice"), verdict: "promote" as const };
        expect(validateForm(state, 3)).toHaveLength(1);
        expect(validateForm({ ...state, candidateIndex: 1 }, 3)).toHaveLength(0);
        expect(validateForm({ ...state, candidateIndex: 5 }, 3)).toHaveLength(1);
    });

    it("revise requires replacement text", () => {
        const state = { ...emptyForm("alice"), verdict: "revise" as const };
        expect(validateForm(state, 3)).toHaveLength(1);
        expect(validateForm({ ...state, revisionText: "  " }, 3)).toHaveLength(1);
        expect(validateForm({ ...state, revisionText: "better query" }, 3)).toHaveLength(0);
    });

    it("discard needs only the verdict", () => {
        const state = { ...emptyForm("alice"), verdict: "discard" as const };
        expect(validateForm(state, 3)).toHaveLength(0);
    });
});

describe("buildRevisedAction", () => {
    it("replaces the primary field per action type", () => {
        expect(
            buildRevisedAction({ action_type: "search", payload: { query: "old" } }, "new"),
        ).toEqual({ action_type: "search", payload: { query: "new" } });

        expect(
            buildRevisedAction(
                { action_type: "rerank", payload: { order: ["a"] } },
                "d2, d1 , d3",
            ),
        ).toEqual({ action_type: "rerank", payload: { order: ["d2", "d1", "d3"] } });

        const synth = buildRevisedAction(
            { action_type: "synthesize", payload: { answer: "old", cites: ["d1"] } },
            "new answer",
        );
        expect(synth.payload).toEqual({ answer: "new answer", cites: ["d1"] });
    });
});

describe("buildDecisionBody", () => {
    it("promote carries the candidate index and version", () => {
        const state = {
            ...emptyForm("alice"),
            verdict: "promote" as const,
            candidateIndex: 2,
            notes: " looks right ",
        };
        expect(buildDecisionBody(state, detail())).toEqual({
            verdict: "promote",
            expected_version: 2,
            chosen_candidate_index: 2,
            notes: "looks right",
        });
    });

    it("revise builds the action from the selected candidate", () => {
        const state = {
            ...emptyForm("alice"),
            verdict: "revise" as const,
            candidateIndex: 1,
            revisionText: "a better query",
        };
        const body = buildDecisionBody(state, detail());
        expect(body.revised_action).toEqual({
            action_type: "search",
            payload: { query: "a better query" },
        });
    });

    it("revise falls back to the first candidate's shape", () => {
        const state = {
            ...emptyForm("alice"),
            verdict: "revise" as const,
            revisionText: "fallback",
        };
        const body = buildDecisionBody(state, detail());
        expect(body.revised_action?.payload).toEqual({ query: "fallback" });
    });

    it("discard sends no extra fields", () => {
        const state = { ...emptyForm("alice"), verdict: "discard" as const };
        expect(buildDecisionBody(state, detail())).toEqual({
            verdict: "discard",
            expected_version: 2,
        });
    });
});
