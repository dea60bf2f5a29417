// Keyboard-driven triage: 1-9 select a candidate, P/R/D set the verdict,
// Enter submits. Keys typed into text fields are left alone (Ctrl+Enter
// still submits from inside a field).

import type { Verdict } from "./types.js";

export type KeyIntent =
    | { kind: "select-candidate"; index: number }
    | { kind: "set-verdict"; verdict: Verdict }
    | { kind: "submit" }
    | { kind: "none" };

export interface KeyContext {
    inTextField: boolean;
    ctrl: boolean;
}

const VERDICT_KEYS: Record<string, Verdict> = {
    p: "promote",
    r: "revise",
    d: "discard",
};

export function keyToIntent(key: string, context: KeyContext): KeyIntent {
    if (key === "Enter") {
        if (!context.inTextField || context.ctrl) {
            return { kind: "submit" };
        }
        return { kind: "none" };
    }
    if (context.inTextField) {
        return { kind: "none" };
    }
    if (/^[1-9]$/.test(key)) {
        return { kind: "select-candidate", index: Number(key) - 1 };
    }
    const verdict = VERDICT_KEYS[key.toLowerCase()];
    if (verdict) {
        return { kind: "set-verdict", verdict };
    }
    return { kind: "none" };
}
