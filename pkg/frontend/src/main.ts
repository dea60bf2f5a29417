// App wiring: polls the queue, renders the selected item, and drives the
// keyboard-first decision flow. All displayed numbers come from the API; the
// only local state worth keeping is the reviewer id.

import { ApiClient, ApiError } from "./api.js";
import { buildDecisionBody, emptyForm, validateForm } from "./form.js";
import type { FormState } from "./form.js";
import { keyToIntent } from "./keyboard.js";
import { renderBanner, renderDetail, renderQueue, renderStats } from "./render.js";
import type { ItemDetail, ItemSummary, Stats, Verdict } from "./types.js";

const POLL_INTERVAL_MS = 10_000;
const REVIEWER_KEY = "agentsim.reviewer_id";

class App {
    private client = new ApiClient();
    private items: ItemSummary[] = [];
    private stats: Stats | null = null;
    private detail: ItemDetail | null = null;
    private form: FormState = emptyForm(localStorage.getItem(REVIEWER_KEY) ?? "");
    private banner: { message: string; retry: (() => void) | null } | null = null;
    private timer: number | undefined;

    constructor(private readonly root: HTMLElement) {}

    start(): void {
        document.addEventListener("keydown", (event) => this.onKeydown(event));
        this.timer = window.setInterval(() => void this.refresh(false), POLL_INTERVAL_MS);
        void this.refresh(true);
    }

    stop(): void {
        if (this.timer !== undefined) {
            window.clearInterval(this.timer);
        }
    }

    private async refresh(selectFirst: boolean): Promise<void> {
        try {
            const [items, stats] = await Promise.all([
                this.client.listItems("pending"),
                this.client.getStats(),
            ]);
            this.items = items;
            this.stats = stats;
            this.banner = null;
            if (selectFirst && this.detail === null && items.length > 0) {
                await this.select(items[0].item_id);
                return;
            }
        } catch (error) {
            this.banner = {
                message: `Cannot reach the review service: ${String(error)}`,
                retry: () => void this.refresh(selectFirst),
            };
        }
        this.render();
    }

    private async select(itemId: string): Promise<void> {
        try {
            this.detail = await this.client.getItem(itemId);
            this.form = { ...emptyForm(this.form.reviewerId) };
            this.banner = null;
        } catch (error) {
            this.banner = {
                message: `Cannot load item ${itemId}: ${String(error)}`,
                retry: () => void this.select(itemId),
            };
        }
        this.render();
    }

    private async submit(): Promise<void> {
        const item = this.detail;
        if (item === null || this.form.verdict === null) {
            return;
        }
        const body = buildDecisionBody(this.form, item);
        try {
            await this.client.postDecision(item.item_id, body, this.form.reviewerId.trim());
            await this.advance(item.item_id);
        } catch (error) {
            if (error instanceof ApiError && error.status === 409) {
                this.banner = {
                    message: "Another reviewer changed this item; reloaded it.",
                    retry: null,
                };
                await this.select(item.item_id);
            } else if (error instanceof ApiError && error.status === 422) {
                this.banner = { message: `Rejected: ${error.detail}`, retry: null };
                this.render();
            } else {
                // Network failure: keep the form intact and offer a retry.
                this.banner = {
                    message: `Submit failed: ${String(error)}`,
                    retry: () => void this.submit(),
                };
                this.render();
            }
        }
    }

    private async advance(decidedId: string): Promise<void> {
        this.detail = null;
        await this.refresh(false);
        const next = this.items.find((item) => item.item_id !== decidedId);
        if (next) {
            await this.select(next.item_id);
        } else {
            this.render();
        }
    }

    private onKeydown(event: KeyboardEvent): void {
        const target = event.target as HTMLElement | null;
        const inTextField =
            target !== null && (target.tagName === "TEXTAREA" || target.tagName === "INPUT");
        const intent = keyToIntent(event.key, { inTextField, ctrl: event.ctrlKey });
        if (intent.kind === "none" || this.detail === null) {
            return;
        }
        event.preventDefault();
        if (intent.kind === "select-candidate") {
            if (intent.index < this.detail.candidates.length) {
                this.form = { ...this.form, candidateIndex: intent.index };
                this.render();
            }
        } else if (intent.kind === "set-verdict") {
            this.setVerdict(intent.verdict);
        } else {
            void this.submit();
        }
    }

    private setVerdict(verdict: Verdict): void {
        this.form = { ...this.form, verdict };
        this.render();
    }

    private render(): void {
        this.root.replaceChildren();

        const header = document.createElement("header");
        header.className = "app-header";
        const title = document.createElement("h1");
        title.textContent = "Review queue";
        header.append(title, renderStats(this.stats));

        const reviewer = document.createElement("input");
        reviewer.className = "reviewer-id";
        reviewer.placeholder = "reviewer id";
        reviewer.value = this.form.reviewerId;
        reviewer.setAttribute("aria-label", "reviewer id");
        reviewer.addEventListener("input", () => {
            this.form = { ...this.form, reviewerId: reviewer.value };
            localStorage.setItem(REVIEWER_KEY, reviewer.value);
            // no full render: keep focus in the field
        });
        header.append(reviewer);
        this.root.append(header);

        if (this.banner) {
            this.root.append(renderBanner(this.banner.message, this.banner.retry));
        }

        const main = document.createElement("main");
        main.className = "layout";
        const aside = document.createElement("aside");
        aside.className = "queue";
        aside.append(
            renderQueue(this.items, this.detail?.item_id ?? null, (id) => void this.select(id)),
        );
        main.append(aside);

        if (this.detail) {
            main.append(
                renderDetail(this.detail, this.form, {
                    onSelectCandidate: (index) => {
                        this.form = { ...this.form, candidateIndex: index };
                        this.render();
                    },
                    onVerdict: (verdict) => this.setVerdict(verdict),
                    onRevisionText: (text) => {
                        this.form = { ...this.form, revisionText: text };
                        this.refreshSubmitGate();
                    },
                    onNotes: (text) => {
                        this.form = { ...this.form, notes: text };
                    },
                    onSubmit: () => void this.submit(),
                }),
            );
        } else {
            const placeholder = document.createElement("section");
            placeholder.className = "detail placeholder";
            placeholder.textContent =
                this.items.length > 0
                    ? "Select an item from the queue."
                    : "Nothing pending. The queue refreshes every 10 seconds.";
            main.append(placeholder);
        }
        this.root.append(main);
    }

    /** Re-evaluate only the submit button so typing does not lose focus. */
    private refreshSubmitGate(): void {
        if (this.detail === null) {
            return;
        }
        const submit = this.root.querySelector<HTMLButtonElement>("button.submit");
        if (submit) {
            submit.disabled =
                validateForm(this.form, this.detail.candidates.length).length > 0;
        }
    }
}

const mount = document.getElementById("app");
if (mount) {
    new App(mount).start();
}

export { App };
