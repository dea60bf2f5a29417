"""Seed selection: coverage-driven selection plus three baseline strategies.

The ``corpus_aware`` strategy clusters the candidate queries in embedding
space, then repeatedly takes the least-covered cluster, keeps only candidates
whose retrieval would surface enough unseen documents (novelty above tau,
with a max-novelty fallback), and picks among them by maximal marginal
relevance. Baselines: ``random`` (uniform), ``stratified`` (round-robin over
clusters), and ``dpp`` (greedy log-determinant diversity maximization).

All strategies are deterministic given the same inputs and ``rng_seed``, and
every selected seed records its novelty and retrieved-document footprint.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from agentsim.corpus import Corpus, retrieve
from agentsim.embedding import EmbeddingProvider, EmbeddingVector, cosine_similarity, embed
from agentsim.errors import EmptyQuery, EmptyQueryPool, NoCandidates

logger = logging.getLogger(__name__)

STRATEGIES = ("corpus_aware", "random", "stratified", "dpp")

KMEANS_MAX_ITER = 100
KMEANS_SHIFT_TOL = 1e-4
DPP_DIAG_REG = 1e-6
DPP_VARIANCE_FLOOR = 1e-12


@dataclass
class SeedingConfig:
    budget: int = 0
    k: int = 50
    tau: float = 0.4
    mmr_lambda: float = 0.7
    strategy: str = "corpus_aware"
    seed_retrieval_depth: int = 10
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValueError("mmr lambda must be in [0, 1]")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.k < 1:
            raise ValueError("cluster count must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class ClusterAssignment:
    labels: list[int]
    centroids: list[EmbeddingVector]
    coverage: list[int]

    @property
    def k(self) -> int:
        return len(self.centroids)


@dataclass
class SeedRecord:
    seed_id: str
    query: str
    cluster_id: int
    novelty: float
    retrieved_doc_ids: list[str]
    strategy: str
    rank: int


SeedSet = list[SeedRecord]


@dataclass
class SeedingState:
    selected: SeedSet = field(default_factory=list)
    seen_docs: set[str] = field(default_factory=set)
    remaining: dict[int, list[int]] = field(default_factory=dict)


def _as_matrix(vectors: list[EmbeddingVector]) -> np.ndarray:
    return np.asarray([v.values for v in vectors], dtype=np.float64)


def _to_vector(row: np.ndarray) -> EmbeddingVector:
    norm = float(np.linalg.norm(row))
    if norm <= 0.0:
        raise ValueError("cannot normalize a zero vector")
    return EmbeddingVector(values=tuple(float(x) for x in row / norm))


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = x[idx]
        closest = np.minimum(closest, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _assign(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _repair_empty(
    x: np.ndarray, labels: np.ndarray, centers: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Give each empty cluster the point currently farthest from its centroid."""
    k = centers.shape[0]
    stolen: set[int] = set()
    for c in range(k):
        if np.any(labels == c):
            continue
        dist = np.sum((x - centers[labels]) ** 2, axis=1)
        for idx in stolen:
            dist[idx] = -1.0
        # Avoid emptying another cluster by stealing its only member.
        for idx in np.argsort(-dist):
            idx = int(idx)
            if idx in stolen:
                continue
            if np.sum(labels == labels[idx]) > 1:
                labels[idx] = c
                centers[c] = x[idx]
                stolen.add(idx)
                break
    return labels, centers


def _normalize_centers(x: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> np.ndarray:
    new = centers.copy()
    for c in range(centers.shape[0]):
        members = x[labels == c]
        if members.shape[0] == 0:
            continue
        mean = members.mean(axis=0)
        norm = np.linalg.norm(mean)
        new[c] = mean / norm if norm > 1e-12 else centers[c]
    return new


def cluster_queries(
    embeddings: list[EmbeddingVector], k: int, rng_seed: int
) -> ClusterAssignment:
    """Spherical k-means with k-means++ initialization, seeded and bounded.

    Runs Lloyd's algorithm for at most ``KMEANS_MAX_ITER`` iterations or until
    the largest centroid shift drops below ``KMEANS_SHIFT_TOL``; centroids are
    normalized mean directions. The effective cluster count is
    ``min(k, len(embeddings))`` and empty clusters are repaired by reassigning
    the point farthest from its centroid. A final assignment pass guarantees
    that each label is the argmin-distance centroid of its point.
    """
    if not embeddings:
        raise ValueError("embeddings must be non-empty")
    x = _as_matrix(embeddings)
    k_eff = min(k, x.shape[0])
    rng = np.random.default_rng(rng_seed)

    centers = _kmeans_pp_init(x, k_eff, rng)
    for _ in range(KMEANS_MAX_ITER):
        labels = _assign(x, centers)
        labels, centers = _repair_empty(x, labels, centers)
        new_centers = _normalize_centers(x, labels, centers)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < KMEANS_SHIFT_TOL:
            break
    labels = _assign(x, centers)
    labels, centers = _repair_empty(x, labels, centers)

    return ClusterAssignment(
        labels=[int(l) for l in labels],
        centroids=[_to_vector(centers[c]) for c in range(k_eff)],
        coverage=[0] * k_eff,
    )


def novelty_from_footprint(doc_ids: list[str], seen_docs: set[str]) -> float:
    """Fraction of retrieved documents not yet seen; 0.0 for empty retrievals."""
    if not doc_ids:
        return 0.0
    unseen = sum(1 for d in doc_ids if d not in seen_docs)
    return unseen / len(doc_ids)


def compute_novelty(query: str, corpus: Corpus, state: SeedingState, depth: int) -> float:
    """Novelty of ``query`` against the documents already seen in ``state``."""
    result = retrieve(corpus, query, depth)
    return novelty_from_footprint(list(result.doc_ids), state.seen_docs)


def mmr_next(
    candidates: list[tuple[str, EmbeddingVector, float]],
    selected: list[EmbeddingVector],
    lam: float,
) -> str:
    """Maximal-marginal-relevance pick over ``(query, embedding, novelty)``.

    Scores ``lam * novelty - (1 - lam) * max_sim_to_selected`` (the penalty is
    zero when nothing is selected yet); ties go to the lexicographically
    smallest query.
    """
    if not candidates:
        raise NoCandidates("mmr_next requires at least one candidate")
    best_query: str | None = None
    best_score = -math.inf
    for query, vec, novelty in candidates:
        penalty = max((cosine_similarity(vec, s) for s in selected), default=0.0)
        score = lam * novelty - (1.0 - lam) * penalty
        if score > best_score or (score == best_score and (best_query is None or query < best_query)):
            best_score = score
            best_query = query
    assert best_query is not None
    return best_query


class _FootprintCache:
    """Memoized top-depth retrieval footprints; the corpus never changes."""

    def __init__(self, corpus: Corpus, depth: int):
        self.corpus = corpus
        self.depth = depth
        self._cache: dict[str, list[str]] = {}

    def get(self, query: str) -> list[str]:
        if query not in self._cache:
            try:
                self._cache[query] = list(retrieve(self.corpus, query, self.depth).doc_ids)
            except EmptyQuery:
                # Queries with no content tokens retrieve nothing.
                self._cache[query] = []
        return self._cache[query]


def select_seeds(
    queries: list[str],
    corpus: Corpus,
    config: SeedingConfig,
    provider: EmbeddingProvider,
) -> SeedSet:
    """Select ``config.budget`` seed queries with the configured strategy.

    Returns exactly ``min(budget, len(queries))`` seeds unless the
    corpus_aware loop exhausts every cluster first, in which case the partial
    set is returned with a warning.
    """
    if not queries:
        raise EmptyQueryPool("no candidate queries")
    deduped = list(dict.fromkeys(queries))
    if len(deduped) != len(queries):
        logger.warning("dropped %d duplicate candidate queries", len(queries) - len(deduped))
    queries = deduped

    budget = config.budget
    if budget > len(queries):
        logger.warning(
            "budget %d exceeds candidate pool size %d; returning all queries",
            budget,
            len(queries),
        )
        budget = len(queries)
    if budget == 0:
        return []

    embeddings = embed(provider, queries)
    assignment = cluster_queries(embeddings, config.k, config.rng_seed)
    cache = _FootprintCache(corpus, config.seed_retrieval_depth)

    if config.strategy == "corpus_aware":
        order = _select_corpus_aware(queries, embeddings, assignment, cache, config, budget)
    elif config.strategy == "random":
        order = _select_random(queries, config, budget)
    elif config.strategy == "stratified":
        order = _select_stratified(queries, assignment, config, budget)
    elif config.strategy == "dpp":
        order = _select_dpp(queries, embeddings, budget)
    else:  # pragma: no cover - guarded by SeedingConfig
        raise ValueError(f"unknown strategy {config.strategy!r}")

    # corpus_aware computes novelty inside its loop; the baselines get the
    # same sequential accounting over their selection order.
    if config.strategy == "corpus_aware":
        chosen, novelties = order
    else:
        chosen = order
        novelties = []
        seen: set[str] = set()
        for idx in chosen:
            footprint = cache.get(queries[idx])
            novelties.append(novelty_from_footprint(footprint, seen))
            seen.update(footprint)

    seeds: SeedSet = []
    for rank, (idx, novelty) in enumerate(zip(chosen, novelties)):
        seeds.append(
            SeedRecord(
                seed_id=f"s{rank:04d}",
                query=queries[idx],
                cluster_id=assignment.labels[idx],
                novelty=novelty,
                retrieved_doc_ids=list(cache.get(queries[idx])),
                strategy=config.strategy,
                rank=rank,
            )
        )
    return seeds


def _select_corpus_aware(
    queries: list[str],
    embeddings: list[EmbeddingVector],
    assignment: ClusterAssignment,
    cache: _FootprintCache,
    config: SeedingConfig,
    budget: int,
) -> tuple[list[int], list[float]]:
    state = SeedingState()
    state.remaining = {c: [] for c in range(assignment.k)}
    for idx, label in enumerate(assignment.labels):
        state.remaining[label].append(idx)
    coverage = assignment.coverage
    active = {c for c, members in state.remaining.items() if members}

    chosen: list[int] = []
    novelties: list[float] = []
    selected_vecs: list[EmbeddingVector] = []
    while len(chosen) < budget and active:
        cluster = min(active, key=lambda c: (coverage[c], c))
        members = state.remaining[cluster]
        if not members:
            active.discard(cluster)
            continue

        scored = [
            (idx, novelty_from_footprint(cache.get(queries[idx]), state.seen_docs))
            for idx in members
        ]
        passing = [(idx, nov) for idx, nov in scored if nov > config.tau]
        if not passing:
            # Nothing clears tau: fall back to the single max-novelty query so
            # the selection loop cannot stall on a saturated cluster.
            best_nov = max(nov for _, nov in scored)
            tied = [(idx, nov) for idx, nov in scored if nov == best_nov]
            passing = [min(tied, key=lambda item: queries[item[0]])]

        candidates = [(queries[idx], embeddings[idx], nov) for idx, nov in passing]
        picked_query = mmr_next(candidates, selected_vecs, config.mmr_lambda)
        picked_idx, picked_nov = next(
            (idx, nov) for idx, nov in passing if queries[idx] == picked_query
        )

        chosen.append(picked_idx)
        novelties.append(picked_nov)
        selected_vecs.append(embeddings[picked_idx])
        state.seen_docs.update(cache.get(queries[picked_idx]))
        coverage[cluster] += 1
        members.remove(picked_idx)
        if not members:
            active.discard(cluster)

    if len(chosen) < budget:
        logger.warning(
            "candidate pool exhausted after %d of %d seeds", len(chosen), budget
        )
    return chosen, novelties


def _select_random(queries: list[str], config: SeedingConfig, budget: int) -> list[int]:
    rng = np.random.default_rng(config.rng_seed)
    return [int(i) for i in rng.permutation(len(queries))[:budget]]


def _select_stratified(
    queries: list[str],
    assignment: ClusterAssignment,
    config: SeedingConfig,
    budget: int,
) -> list[int]:
    rng = np.random.default_rng(config.rng_seed)
    pools: dict[int, list[int]] = {c: [] for c in range(assignment.k)}
    for idx, label in enumerate(assignment.labels):
        pools[label].append(idx)

    chosen: list[int] = []
    while len(chosen) < budget:
        progressed = False
        for cluster in range(assignment.k):
            pool = pools[cluster]
            if not pool:
                continue
            pick = pool.pop(int(rng.integers(len(pool))))
            chosen.append(pick)
            progressed = True
            if len(chosen) >= budget:
                break
        if not progressed:
            break
    return chosen


def greedy_dpp_indices(
    embeddings: list[EmbeddingVector], budget: int, tie_keys: list[str] | None = None
) -> tuple[list[int], list[float]]:
    """Greedy MAP selection under the cosine-similarity kernel.

    Each step adds the candidate with the largest conditional variance (the
    multiplicative determinant increment), computed by incremental Cholesky
    updates over the kernel with ``DPP_DIAG_REG`` added to the diagonal.
    Returns the selected indices plus the per-step log-determinant gains,
    clamped at >= 0 so the tracked objective never decreases on the numerical
    floor. Ties break on ``tie_keys`` (ascending), then index.
    """
    n = len(embeddings)
    budget = min(budget, n)
    if budget == 0:
        return [], []
    x = _as_matrix(embeddings)
    kernel = x @ x.T
    np.fill_diagonal(kernel, kernel.diagonal() + DPP_DIAG_REG)

    keys = tie_keys if tie_keys is not None else [""] * n
    d2 = kernel.diagonal().copy()
    cis = np.zeros((budget, n), dtype=np.float64)
    available = np.ones(n, dtype=bool)

    selected: list[int] = []
    gains: list[float] = []
    while len(selected) < budget:
        best = -1
        for i in range(n):
            if not available[i]:
                continue
            if best < 0 or d2[i] > d2[best] or (d2[i] == d2[best] and keys[i] < keys[best]):
                best = i
        variance = max(float(d2[best]), DPP_VARIANCE_FLOOR)
        gains.append(max(math.log(variance), 0.0))

        k = len(selected)
        di = math.sqrt(variance)
        eis = (kernel[best, :] - cis[:k, best] @ cis[:k, :]) / di
        cis[k, :] = eis
        d2 = d2 - eis**2
        available[best] = False
        selected.append(best)
    return selected, gains


def _select_dpp(queries: list[str], embeddings: list[EmbeddingVector], budget: int) -> list[int]:
    selected, _ = greedy_dpp_indices(embeddings, budget, tie_keys=queries)
    return selected


def write_seeds(seeds: SeedSet, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for seed in seeds:
            fh.write(
                json.dumps(
                    {
                        "seed_id": seed.seed_id,
                        "query": seed.query,
                        "cluster_id": seed.cluster_id,
                        "novelty": seed.novelty,
                        "retrieved_doc_ids": seed.retrieved_doc_ids,
                        "strategy": seed.strategy,
                        "rank": seed.rank,
                    },
                    ensure_ascii=True,
                )
                + "\n"
            )


def read_seeds(path: str | Path) -> SeedSet:
    seeds: SeedSet = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            seeds.append(
                SeedRecord(
                    seed_id=obj["seed_id"],
                    query=obj["query"],
                    cluster_id=int(obj["cluster_id"]),
                    novelty=float(obj["novelty"]),
                    retrieved_doc_ids=list(obj["retrieved_doc_ids"]),
                    strategy=obj["strategy"],
                    rank=int(obj["rank"]),
                )
            )
    return seeds
