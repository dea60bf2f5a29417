import { describe, expect, it } from "vitest";

import { keyToIntent } from "../src/keyboard.js";

const page = { inTextField: false, ctrl: false };
const field = { inTextField: true, ctrl: false };

describe("keyToIntent", () => {
    it("digits select candidates (0-indexed)", () => {
        expect(keyToIntent("1", page)).toEqual({ kind: "select-candidate", index: 0 });
        expect(keyToIntent("9", page)).toEqual({ kind: "select-candidate", index: 8 });
        expect(keyToIntent("0", page)).toEqual({ kind: "none" });
    });

    it("P/R/D set verdicts, case-insensitive", () => {
        expect(keyToIntent("p", page)).toEqual({ kind: "set-verdict", verdict: "promote" });
        expect(keyToIntent("R", page)).toEqual({ kind: "set-verdict", verdict: "revise" });
        expect(keyToIntent("d", page)).toEqual({ kind: "set-verdict", verdict: "discard" });
    });

    it("enter submits outside text fields", () => {
        expect(keyToIntent("Enter", page)).toEqual({ kind: "submit" });
    });

    it("typing in a field is left alone, except ctrl+enter", () => {
        expect(keyToIntent("p", field)).toEqual({ kind: "none" });
        expect(keyToIntent("3", field)).toEqual({ kind: "none" });
        expect(keyToIntent("Enter", field)).toEqual({ kind: "none" });
        expect(keyToIntent("Enter", { inTextField: true, ctrl: true })).toEqual({ kind: "submit" });
    });

    it("other keys do nothing", () => {
        expect(keyToIntent("x", page)).toEqual({ kind: "none" });
        expect(keyToIntent("Escape", page)).toEqual({ kind: "none" });
    });
});
