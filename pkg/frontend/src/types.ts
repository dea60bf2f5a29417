// API payload shapes, mirroring the review service's JSON exactly.

export interface ActionDict {
    action_type: string;
    payload: Record<string, unknown>;
}

export interface ItemSummary {
    item_id: string;
    trace_id: string;
    step_index: number;
    seed_query: string;
    divergence_score: number;
    candidate_count: number;
    double_annotation: boolean;
    needs_adjudication: boolean;
    status: string;
    decision_count: number;
    version: number;
}

export interface EvidenceSnippet {
    doc_id: string;
    snippet: string;
}

export interface CandidateView {
    model_id: string;
    action: ActionDict;
    display: string;
    evidence: EvidenceSnippet[];
}

export interface DecisionView {
    reviewer_id: string;
    verdict: string;
    chosen_candidate_index: number | null;
    revised_action: ActionDict | null;
    notes: string;
    decided_at: number;
}

export interface ItemDetail extends ItemSummary {
    context: string;
    candidates: CandidateView[];
    rubric: string[];
    decisions: DecisionView[];
}

export interface Stats {
    pending: number;
    decided: number;
    promote: number;
    revise: number;
    discard: number;
    agreement_rate: number | null;
}

export type Verdict = "promote" | "revise" | "discard";

export interface DecisionBody {
    verdict: Verdict;
    chosen_candidate_index?: number;
    revised_action?: ActionDict;
    notes?: string;
    expected_version?: number;
}
