// Token-level diff used to highlight how a candidate differs from the
// reference candidate (candidate 1 in the comparison view).

export interface DiffSegment {
    text: string;
    changed: boolean;
}

export function tokenizeWords(text: string): string[] {
    return text.split(/\s+/).filter((t) => t.length > 0);
}

/**
 * Longest-common-subsequence table over word tokens. Candidate payloads are
 * short (queries, answers), so the quadratic table is fine.
 */
function lcsTable(a: string[], b: string[]): number[][] {
    const table: number[][] = [];
    for (let i = 0; i <= a.length; i++) {
        table.push(new Array(b.length + 1).fill(0));
    }
    for (let i = a.length - 1; i >= 0; i--) {
        for (let j = b.length - 1; j >= 0; j--) {
            table[i][j] =
                a[i] === b[j]
                    ? table[i + 1][j + 1] + 1
                    : Math.max(table[i + 1][j], table[i][j + 1]);
        }
    }
    return table;
}

/**
 * Segments of `text` relative to `reference`: tokens not part of a common
 * subsequence are marked changed. Case-insensitive, whitespace-collapsed.
 */
export function diffAgainst(reference: string, text: string): DiffSegment[] {
    const refTokens = tokenizeWords(reference.toLowerCase());
    const tokens = tokenizeWords(text);
    const lowered = tokens.map((t) => t.toLowerCase());
    const table = lcsTable(lowered, refTokens);

    const segments: DiffSegment[] = [];
    let i = 0;
    let j = 0;
    const push = (token: string, changed: boolean) => {
        const last = segments[segments.length - 1];
        if (last && last.changed === changed) {
            last.text += " " + token;
        } else {
            segments.push({ text: token, changed });
        }
    };
    while (i < lowered.length) {
        if (j < refTokens.length && lowered[i] === refTokens[j]) {
            push(tokens[i], false);
            i++;
            j++;
        } else if (
            j < refTokens.length &&
            table[i][j + 1] >= table[i + 1][j]
        ) {
            j++; // token removed from reference; nothing to render on this side
        } else {
            push(tokens[i], true);
            i++;
        }
    }
    return segments;
}

/** The free-text payload field an action is compared and revised by. */
export function primaryText(action: { action_type: string; payload: Record<string, unknown> }): string {
    const p = action.payload;
    switch (action.action_type) {
        case "search":
            return String(p["query"] ?? "");
        case "rerank":
            return (p["order"] as string[] | undefined)?.join(", ") ?? "";
        case "summarize":
            return String(p["summary"] ?? "");
        case "synthesize":
            return String(p["answer"] ?? "");
        default:
            return String(p["reason"] ?? "");
    }
}
