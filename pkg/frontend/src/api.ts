// Minimal typed client for the review service.

import type { DecisionBody, ItemDetail, ItemSummary, Stats } from "./types.js";

export class ApiError extends Error {
    constructor(
        public readonly status: number,
        public readonly detail: string,
    ) {
        super(`HTTP ${status}: ${detail}`);
    }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<ApiError> {
    let detail = response.statusText;
    try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) {
            detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
        }
    } catch {
        // non-JSON error body; keep the status text
    }
    return new ApiError(response.status, detail);
}

export class ApiClient {
    constructor(
        private readonly baseUrl = "",
        private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    ) {}

    private async get<T>(path: string): Promise<T> {
        const response = await this.fetchFn(this.baseUrl + path);
        if (!response.ok) {
            throw await parseError(response);
        }
        return (await response.json()) as T;
    }

    listItems(status = "pending", limit = 50): Promise<ItemSummary[]> {
        return this.get(`/api/review/items?status=${encodeURIComponent(status)}&limit=${limit}`);
    }

    getItem(itemId: string): Promise<ItemDetail> {
        return this.get(`/api/review/items/${encodeURIComponent(itemId)}`);
    }

    getStats(): Promise<Stats> {
        return this.get("/api/review/stats");
    }

    async postDecision(
        itemId: string,
        body: DecisionBody,
        reviewerId: string,
    ): Promise<ItemDetail> {
        const response = await this.fetchFn(
            `${this.baseUrl}/api/review/items/${encodeURIComponent(itemId)}/decision`,
            {
                method: "POST",
                headers: {
                    "Content-Type": "application/json",
                    "X-Reviewer-Id": reviewerId,
                },
                body: JSON.stringify(body),
            },
        );
        if (!response.ok) {
            throw await parseError(response);
        }
        return (await response.json()) as ItemDetail;
    }
}
