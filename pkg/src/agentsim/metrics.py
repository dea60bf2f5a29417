"""Seeding-quality metrics, behavioral metrics, and significance statistics.

Everything here is a pure function over immutable inputs. The statistical
machinery (rank statistics, effect sizes, step-down correction) is
implemented directly; only distribution tail functions come from scipy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from scipy.stats import chi2 as chi2_dist

from agentsim.corpus import Corpus, retrieve, tokenize
from agentsim.embedding import EmbeddingProvider, EmbeddingVector, cosine_similarity, embed
from agentsim.errors import EmptyQuery, SingleSeed, ZeroVariance
from agentsim.seeding import ClusterAssignment, SeedSet
from agentsim.simulation import Trajectory

DEFAULT_META_TERMS = frozenset(
    {"search", "find", "look", "results", "source", "sources", "verify", "check", "browse", "query"}
)

COVERAGE_RETRIEVAL_DEPTH = 100


@dataclass
class SeedingMetricsReport:
    cluster_coverage: float
    document_redundancy: float
    semantic_diversity: float
    corpus_coverage_at_100: float
    runs: int = 1

    def as_dict(self) -> dict:
        return {
            "cluster_coverage": self.cluster_coverage,
            "document_redundancy": self.document_redundancy,
            "semantic_diversity": self.semantic_diversity,
            "corpus_coverage_at_100": self.corpus_coverage_at_100,
            "runs": self.runs,
        }


@dataclass
class BehaviorReport:
    exploration_breadth: int
    retrieval_redundancy: float
    query_count: int
    mean_query_length_initial: float
    mean_query_length_reformulated: float
    reformulation_distribution: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "exploration_breadth": self.exploration_breadth,
            "retrieval_redundancy": self.retrieval_redundancy,
            "query_count": self.query_count,
            "mean_query_length_initial": self.mean_query_length_initial,
            "mean_query_length_reformulated": self.mean_query_length_reformulated,
            "reformulation_distribution": self.reformulation_distribution,
        }


def _top_docs(corpus: Corpus, query: str, depth: int) -> set[str]:
    try:
        return set(retrieve(corpus, query, depth).doc_ids)
    except EmptyQuery:
        return set()


def _jaccard(a: set[str], b: set[str]) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def nearest_centroid(vec: EmbeddingVector, centroids: list[EmbeddingVector]) -> int:
    """Index of the closest centroid (highest cosine similarity, lowest index wins ties)."""
    best = 0
    best_sim = -math.inf
    for i, c in enumerate(centroids):
        sim = cosine_similarity(vec, c)
        if sim > best_sim:
            best_sim = sim
            best = i
    return best


def seeding_metrics(
    seed_set: SeedSet,
    assignment: ClusterAssignment,
    corpus: Corpus,
    provider: EmbeddingProvider,
    depth: int = COVERAGE_RETRIEVAL_DEPTH,
) -> SeedingMetricsReport:
    """Coverage, redundancy, diversity, and corpus reach of a seed set.

    A cluster counts as covered when its centroid is the nearest centroid of
    at least one selected seed; redundancy is the mean Jaccard overlap of
    top-``depth`` retrievals over all seed pairs; diversity is the mean
    pairwise cosine distance of the seed embeddings; corpus coverage is the
    fraction of documents reached by any seed's top-``depth`` retrieval.
    """
    if len(seed_set) < 2:
        raise SingleSeed("pairwise seeding metrics require at least 2 seeds")

    vectors = embed(provider, [s.query for s in seed_set])

    covered = {nearest_centroid(v, assignment.centroids) for v in vectors}
    cluster_coverage = len(covered) / assignment.k

    footprints = [_top_docs(corpus, s.query, depth) for s in seed_set]
    overlaps: list[float] = []
    distances: list[float] = []
    for i in range(len(seed_set)):
        for j in range(i + 1, len(seed_set)):
            overlaps.append(_jaccard(footprints[i], footprints[j]))
            distances.append(1.0 - cosine_similarity(vectors[i], vectors[j]))
    # fsum: exactly-rounded totals keep the report invariant under seed order.
    redundancy = math.fsum(overlaps) / len(overlaps)
    # Unit vectors admit cosine distance up to 2; clamp into the reported range.
    diversity = min(1.0, max(0.0, math.fsum(distances) / len(distances)))

    reached: set[str] = set()
    for fp in footprints:
        reached.update(fp)
    corpus_coverage = len(reached) / len(corpus)

    return SeedingMetricsReport(
        cluster_coverage=cluster_coverage,
        document_redundancy=redundancy,
        semantic_diversity=diversity,
        corpus_coverage_at_100=corpus_coverage,
    )


def _search_calls(trajectory: Trajectory) -> list[tuple[str, list[str]]]:
    calls = []
    for call in trajectory.tool_calls:
        if call.tool == "search":
            output = call.output if isinstance(call.output, (list, tuple)) else []
            calls.append((call.input, list(output)))
    return calls


def behavior_metrics(
    trajectories: list[Trajectory],
    stopwords: frozenset[str] | None = None,
    meta_terms: frozenset[str] = DEFAULT_META_TERMS,
) -> BehaviorReport:
    """Exploration breadth, retrieval redundancy, and reformulation behavior.

    Breadth is the number of unique documents retrieved anywhere; redundancy
    is the fraction of retrieval events that revisit an already-retrieved
    document. ``query_count`` counts follow-up (reformulated) queries, and
    the distribution classifies each consecutive query pair.
    """
    if not trajectories:
        raise ValueError("behavior_metrics requires at least one trajectory")
    from agentsim.corpus import load_default_stopwords

    stop = stopwords if stopwords is not None else load_default_stopwords()

    unique_docs: set[str] = set()
    total_events = 0
    initial_lengths: list[int] = []
    reformulated_lengths: list[int] = []
    labels: dict[str, int] = {"conceptual": 0, "procedural": 0, "syntactic": 0}
    pair_count = 0

    for traj in trajectories:
        searches = _search_calls(traj)
        for _, doc_ids in searches:
            unique_docs.update(doc_ids)
            total_events += len(doc_ids)
        queries = [q for q, _ in searches]
        if queries:
            initial_lengths.append(len(queries[0].split()))
        for old, new in zip(queries, queries[1:]):
            reformulated_lengths.append(len(new.split()))
            labels[classify_reformulation(old, new, stop, meta_terms)] += 1
            pair_count += 1

    redundancy = 1.0 - len(unique_docs) / total_events if total_events > 0 else 0.0
    distribution = {
        name: (count / pair_count if pair_count else 0.0) for name, count in labels.items()
    }
    return BehaviorReport(
        exploration_breadth=len(unique_docs),
        retrieval_redundancy=redundancy,
        query_count=pair_count,
        mean_query_length_initial=(
            sum(initial_lengths) / len(initial_lengths) if initial_lengths else 0.0
        ),
        mean_query_length_reformulated=(
            sum(reformulated_lengths) / len(reformulated_lengths) if reformulated_lengths else 0.0
        ),
        reformulation_distribution=distribution,
    )


def classify_reformulation(
    old_query: str,
    new_query: str,
    stopwords: frozenset[str],
    meta_terms: frozenset[str] = DEFAULT_META_TERMS,
) -> str:
    """Label a query rewrite as procedural, syntactic, or conceptual.

    Decision ladder: procedural when the new query mentions the search
    process itself (content tokens intersect ``meta_terms``); syntactic when
    the new query is a pure keyword form (zero stopwords) and strictly
    shorter in words than the old one; conceptual otherwise.
    """
    if not old_query or not new_query:
        raise ValueError("both queries must be non-empty")
    new_tokens = tokenize(new_query, stopwords)
    if set(new_tokens.content_tokens) & meta_terms:
        return "procedural"
    has_stopword = len(new_tokens.content_tokens) < len(new_tokens.tokens)
    if not has_stopword and len(new_query.split()) < len(old_query.split()):
        return "syntactic"
    return "conceptual"


def query_length_delta(pairs: list[tuple[str, str]]) -> tuple[float, float, float]:
    """Mean word counts of old vs new queries plus relative change.

    Word counts split on whitespace; the change is ``(new - old) / old`` as a
    fraction (0.5 means +50%).
    """
    if not pairs:
        raise ValueError("query_length_delta requires at least one pair")
    mean_old = sum(len(old.split()) for old, _ in pairs) / len(pairs)
    mean_new = sum(len(new.split()) for _, new in pairs) / len(pairs)
    change = (mean_new - mean_old) / mean_old if mean_old else 0.0
    return mean_old, mean_new, change


# ---------------------------------------------------------------------------
# significance statistics
# ---------------------------------------------------------------------------


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """U statistic of the first sample and a two-sided normal-approximation p.

    U counts pairs where x beats y (ties count one half), computed via
    midranks. The variance uses the standard tie correction; a degenerate
    pooled sample yields p = 1.
    """
    n1, n2 = len(xs), len(ys)
    if n1 < 1 or n2 < 1:
        raise ValueError("both samples must be non-empty")
    combined = list(xs) + list(ys)
    ranks = _midranks(combined)
    r1 = sum(ranks[:n1])
    u = r1 - n1 * (n1 + 1) / 2.0

    n = n1 + n2
    tie_counts: dict[float, int] = {}
    for v in combined:
        tie_counts[v] = tie_counts.get(v, 0) + 1
    tie_term = sum(t**3 - t for t in tie_counts.values())
    if n > 1:
        variance = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    else:
        variance = 0.0
    if variance <= 0.0:
        return u, 1.0
    z = (u - n1 * n2 / 2.0) / math.sqrt(variance)
    p = min(1.0, 2.0 * _normal_sf(abs(z)))
    return u, p


def cohens_d(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Magnitude of the standardized mean difference (pooled sample sd)."""
    n1, n2 = len(xs), len(ys)
    if n1 < 2 or n2 < 2:
        raise ValueError("cohens_d requires at least 2 samples per group")
    m1 = sum(xs) / n1
    m2 = sum(ys) / n2
    v1 = sum((x - m1) ** 2 for x in xs) / (n1 - 1)
    v2 = sum((y - m2) ** 2 for y in ys) / (n2 - 1)
    pooled = math.sqrt(((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2))
    if pooled == 0.0:
        raise ZeroVariance("pooled standard deviation is zero")
    return abs(m1 - m2) / pooled


def holm_bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[bool]:
    """Step-down rejection decisions in the original order of ``p_values``."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    rejected = [False] * m
    for step, idx in enumerate(order):
        if p_values[idx] <= alpha / (m - step):
            rejected[idx] = True
        else:
            break
    return rejected


@dataclass
class PairwiseTest:
    group_a: str
    group_b: str
    u_statistic: float
    p_value: float
    cohens_d: float | None
    holm_rejected: bool = False


@dataclass
class SignificanceReport:
    alpha: float
    pairs: list[PairwiseTest] = field(default_factory=list)


def significance_tests(
    groups: dict[str, Sequence[float]], alpha: float = 0.05
) -> SignificanceReport:
    """Pairwise Mann-Whitney U + Cohen's d with Holm-Bonferroni correction.

    Groups are compared in sorted-label order. Cohen's d is ``None`` for a
    pair whose pooled variance is zero.
    """
    labels = sorted(groups)
    if len(labels) < 2:
        raise ValueError("significance_tests requires at least 2 groups")
    for label in labels:
        if len(groups[label]) < 2:
            raise ValueError(f"group {label!r} needs at least 2 samples")

    pairs: list[PairwiseTest] = []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            a, b = labels[i], labels[j]
            u, p = mann_whitney_u(groups[a], groups[b])
            try:
                d: float | None = cohens_d(groups[a], groups[b])
            except ZeroVariance:
                d = None
            pairs.append(PairwiseTest(group_a=a, group_b=b, u_statistic=u, p_value=p, cohens_d=d))

    for pair, rejected in zip(pairs, holm_bonferroni([p.p_value for p in pairs], alpha)):
        pair.holm_rejected = rejected
    return SignificanceReport(alpha=alpha, pairs=pairs)


@dataclass
class ChiSquaredResult:
    statistic: float
    p_value: float
    dof: int
    cramers_v: float


def chi_squared(table: Sequence[Sequence[float]]) -> ChiSquaredResult:
    """Pearson chi-squared over a contingency table, with Cramér's V.

    Requires at least a 2x2 table with strictly positive marginals.
    """
    rows = len(table)
    cols = len(table[0]) if rows else 0
    if rows < 2 or cols < 2:
        raise ValueError("chi_squared requires at least a 2x2 table")
    if any(len(row) != cols for row in table):
        raise ValueError("ragged contingency table")

    row_sums = [sum(row) for row in table]
    col_sums = [sum(row[j] for row in table) for j in range(cols)]
    total = sum(row_sums)
    if total <= 0 or any(s <= 0 for s in row_sums) or any(s <= 0 for s in col_sums):
        raise ValueError("all marginals must be positive")

    stat = 0.0
    for i in range(rows):
        for j in range(cols):
            expected = row_sums[i] * col_sums[j] / total
            stat += (table[i][j] - expected) ** 2 / expected
    dof = (rows - 1) * (cols - 1)
    p = float(chi2_dist.sf(stat, dof))
    v = math.sqrt(stat / (total * (min(rows, cols) - 1)))
    return ChiSquaredResult(statistic=stat, p_value=p, dof=dof, cramers_v=v)


def write_pairwise_csv(report: SignificanceReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_a", "group_b", "mann_whitney_u", "p_value", "cohens_d", "holm_rejected"])
        for pair in report.pairs:
            writer.writerow(
                [
                    pair.group_a,
                    pair.group_b,
                    pair.u_statistic,
                    pair.p_value,
                    "" if pair.cohens_d is None else pair.cohens_d,
                    pair.holm_rejected,
                ]
            )
