import { describe, expect, it } from "vitest";

import { diffAgainst, primaryText, tokenizeWords } from "../src/diff.js";

describe("tokenizeWords", () => {
    it("splits on whitespace and drops empties", () => {
        expect(tokenizeWords("  alpha   beta\ngamma ")).toEqual(["alpha", "beta", "gamma"]);
    });
});

describe("diffAgainst", () => {
    it("marks nothing for identical text", () => {
        const segments = diffAgainst("manhattan project", "manhattan project");
        expect(segments).toEqual([{ text: "manhattan project", changed: false }]);
    });

    it("is case-insensitive", () => {
        const segments = diffAgainst("manhattan project", "Manhattan Project");
        expect(segments.every((s) => !s.changed)).toBe(true);
    });

    it("highlights added tokens", () => {
        const segments = diffAgainst("manhattan project", "manhattan project key scientists");
        expect(segments).toEqual([
            { text: "manhattan project", changed: false },
            { text: "key scientists", changed: true },
        ]);
    });

    it("highlights replacements", () => {
        const segments = diffAgainst("search for alpha", "search for beta");
        const changed = segments.filter((s) => s.changed).map((s) => s.text);
        expect(changed).toEqual(["beta"]);
    });

    it("handles a fully different candidate", () => {
        const segments = diffAgainst("one two", "three four");
        expect(segments).toEqual([{ text: "three four", changed: true }]);
    });

    it("merges adjacent segments of the same kind", () => {
        const segments = diffAgainst("a b c", "a x y c");
        expect(segments).toEqual([
            { text: "a", changed: false },
            { text: "x y", changed: true },
            { text: "c", changed: false },
        ]);
    });
});

describe("primaryText", () => {
    it("extracts the comparable field per action type", () => {
        expect(primaryText({ action_type: "search", payload: { query: "q" } })).toBe("q");
        expect(
            primaryText({ action_type: "rerank", payload: { order: ["d2", "d1"] } }),
        ).toBe("d2, d1");
        expect(
            primaryText({ action_type: "summarize", payload: { summary: "s", doc_ids: [] } }),
        ).toBe("s");
        expect(
            primaryText({ action_type: "synthesize", payload: { answer: "a", cites: ["d"] } }),
        ).toBe("a");
        expect(primaryText({ action_type: "abstain", payload: { reason: "r" } })).toBe("r");
    });
});
