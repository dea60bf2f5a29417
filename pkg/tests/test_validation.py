from __future__ import annotations

import pytest

from agentsim.actions import abstain_action, search_action, synthesize_action
from agentsim.corpus import Document, build_index, load_default_stopwords
from agentsim.errors import (
    AlreadyDecided,
    NoDoubleAnnotatedItems,
    StaleItem,
    UnknownDocId,
)
from agentsim.validation import (
    ReviewDecision,
    ReviewQueue,
    ValidationConfig,
    grounding_report_for_action,
    is_double_annotated,
    verify_grounding,
)

STOPWORDS = load_default_stopwords()


class TestVerifyGrounding:
    def test_fully_covered(self):
        answer = synthesize_action("Paris is the capital", ["d1"])
        evidence = [Document("d1", "Paris is the capital of France")]
        report = verify_grounding(answer, evidence, STOPWORDS)
        assert report.token_coverage == 1.0
        assert not report.vacuous and not report.is_refusal
        assert report.covered_tokens == frozenset({"paris", "capital"})

    def test_partial_coverage(self):
        answer = synthesize_action("alpha beta gamma", ["d1"])
        evidence = [Document("d1", "alpha beta delta")]
        report = verify_grounding(answer, evidence, STOPWORDS)
        assert report.token_coverage == pytest.approx(2 / 3)
        assert report.uncovered_tokens == frozenset({"gamma"})

    def test_abstain_is_refusal(self):
        report = verify_grounding(abstain_action("not enough evidence"), [], STOPWORDS)
        assert report.is_refusal

    def test_stopword_only_answer_is_vacuous(self):
        answer = synthesize_action("it is the and of", ["d1"])
        report = verify_grounding(answer, [Document("d1", "whatever")], STOPWORDS)
        assert report.vacuous
        assert report.token_coverage == 1.0

    def test_coverage_counts_types_not_occurrences(self):
        answer = synthesize_action("alpha alpha alpha beta", ["d1"])
        evidence = [Document("d1", "alpha")]
        report = verify_grounding(answer, evidence, STOPWORDS)
        assert report.token_coverage == pytest.approx(1 / 2)

    def test_evidence_union_across_documents(self):
        answer = synthesize_action("alpha beta", ["d1", "d2"])
        evidence = [Document("d1", "alpha"), Document("d2", "beta")]
        report = verify_grounding(answer, evidence, STOPWORDS)
        assert report.token_coverage == 1.0

    def test_rejects_non_answer_actions(self):
        with pytest.raises(ValueError):
            verify_grounding(search_action("query"), [], STOPWORDS)


class TestGroundingFromCorpus:
    @pytest.fixture()
    def corpus(self):
        return build_index([Document("d1", "alpha beta gamma")])

    def test_resolves_cites(self, corpus):
        action = synthesize_action("alpha beta", ["d1"])
        report = grounding_report_for_action(action, corpus, STOPWORDS)
        assert report.token_coverage == 1.0

    def test_unknown_doc_raises(self, corpus):
        action = synthesize_action("alpha", ["missing"])
        with pytest.raises(UnknownDocId):
            grounding_report_for_action(action, corpus, STOPWORDS)

    def test_unknown_doc_ignored_on_engine_path(self, corpus):
        action = synthesize_action("alpha", ["missing"])
        report = grounding_report_for_action(action, corpus, STOPWORDS, ignore_unknown=True)
        assert report.token_coverage == 0.0


def make_candidates():
    return [
        ("analyst", search_action("alpha history")),
        ("critic-0", search_action("alpha origins")),
        ("critic-1", search_action("alpha timeline")),
    ]


def decision(reviewer, verdict="promote", index=0, revised=None, notes=""):
    return ReviewDecision(
        reviewer_id=reviewer,
        verdict=verdict,
        chosen_candidate_index=index if verdict == "promote" else None,
        revised_action=revised,
        notes=notes,
    )


class TestReviewQueue:
    def enqueue_one(self, queue, trace="tr-1", step=3):
        return queue.enqueue(
            trace_id=trace,
            step_index=step,
            seed_query="what is alpha",
            context="[cycle 0] search: alpha",
            candidates=make_candidates(),
            divergence_score=2 / 3,
        )

    def test_enqueue_requires_high_divergence(self, tmp_path):
        queue = ReviewQueue(tmp_path)
        with pytest.raises(ValueError):
            queue.enqueue("tr", 0, "q", "", make_candidates(), divergence_score=0.2)

    def test_enqueue_requires_two_candidates(self, tmp_path):
        queue = ReviewQueue(tmp_path)
        with pytest.raises(ValueError):
            queue.enqueue("tr", 0, "q", "", make_candidates()[:1], divergence_score=0.9)

    def test_single_annotation_lifecycle(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=0.0))
        item = self.enqueue_one(queue)
        assert item.status == "pending"
        assert not item.double_annotation

        updated = queue.decide(item.item_id, decision("alice", "promote", 1))
        assert updated.status == "decided"
        assert updated.resolution().chosen_candidate_index == 1

    def test_double_annotation_agreement(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        item = self.enqueue_one(queue)
        assert item.double_annotation

        queue.decide(item.item_id, decision("alice", "promote", 0))
        assert queue.get(item.item_id).status == "pending"
        updated = queue.decide(item.item_id, decision("bob", "promote", 0))
        assert updated.status == "decided"
        assert not updated.needs_adjudication

    def test_double_annotation_disagreement_then_adjudication(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        item = self.enqueue_one(queue)

        queue.decide(item.item_id, decision("alice", "promote", 0))
        updated = queue.decide(item.item_id, decision("bob", "discard"))
        assert updated.status == "pending"
        assert updated.needs_adjudication

        final = queue.decide(item.item_id, decision("adjudicator", "discard"))
        assert final.status == "decided"
        assert final.resolution().verdict == "discard"

    def test_adjudicator_breaks_three_way_split(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        item = self.enqueue_one(queue)
        queue.decide(item.item_id, decision("alice", "promote", 0))
        queue.decide(item.item_id, decision("bob", "promote", 1))
        final = queue.decide(item.item_id, decision("carol", "discard"))
        assert final.status == "decided"
        assert final.resolution().verdict == "discard"

    def test_same_candidate_required_for_agreement(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        item = self.enqueue_one(queue)
        queue.decide(item.item_id, decision("alice", "promote", 0))
        updated = queue.decide(item.item_id, decision("bob", "promote", 1))
        assert updated.needs_adjudication

    def test_already_decided(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=0.0))
        item = self.enqueue_one(queue)
        queue.decide(item.item_id, decision("alice"))
        with pytest.raises(AlreadyDecided):
            queue.decide(item.item_id, decision("bob"))

    def test_reviewer_cannot_vote_twice(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        item = self.enqueue_one(queue)
        queue.decide(item.item_id, decision("alice"))
        with pytest.raises(AlreadyDecided):
            queue.decide(item.item_id, decision("alice", "discard"))

    def test_stale_version(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        item = self.enqueue_one(queue)
        queue.decide(item.item_id, decision("alice"), expected_version=0)
        with pytest.raises(StaleItem):
            queue.decide(item.item_id, decision("bob"), expected_version=0)

    def test_invalid_candidate_index(self, tmp_path):
        queue = ReviewQueue(tmp_path)
        item = self.enqueue_one(queue)
        with pytest.raises(ValueError):
            queue.decide(item.item_id, decision("alice", "promote", 99))

    def test_replay_reconstructs_state(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        first = self.enqueue_one(queue, trace="tr-1")
        second = self.enqueue_one(queue, trace="tr-2")
        queue.decide(first.item_id, decision("alice", "promote", 0))
        queue.decide(first.item_id, decision("bob", "discard"))
        queue.decide(second.item_id, decision("alice", "revise", revised=search_action("better query"), index=None))

        replayed = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))
        item = replayed.get(first.item_id)
        assert item.needs_adjudication and item.status == "pending"
        assert len(item.decisions) == 2
        assert replayed.get(second.item_id).decisions[0].revised_action == search_action("better query")

    def test_items_sorted_by_divergence(self, tmp_path):
        queue = ReviewQueue(tmp_path)
        queue.enqueue("tr-1", 0, "q", "", make_candidates(), divergence_score=0.5)
        queue.enqueue("tr-2", 0, "q", "", make_candidates(), divergence_score=0.67)
        items = queue.items("pending")
        assert [i.divergence_score for i in items] == [0.67, 0.5]

    def test_queue_conservation(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=0.0))
        for i in range(4):
            self.enqueue_one(queue, trace=f"tr-{i}")
        items = queue.items()
        queue.decide(items[0].item_id, decision("a", "promote", 0))
        queue.decide(items[1].item_id, decision("a", "revise", revised=search_action("x"), index=None))
        queue.decide(items[2].item_id, decision("a", "discard"))
        stats = queue.stats()
        assert stats["pending"] == 1
        assert stats["decided"] == 3
        assert stats["promote"] + stats["revise"] + stats["discard"] == stats["decided"]


class TestAgreementRate:
    def _double_queue(self, tmp_path):
        return ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=1.0))

    def test_requires_double_annotated(self, tmp_path):
        queue = ReviewQueue(tmp_path, ValidationConfig(double_annotation_rate=0.0))
        with pytest.raises(NoDoubleAnnotatedItems):
            queue.agreement_rate()

    def test_three_of_four_agree(self, tmp_path):
        queue = self._double_queue(tmp_path)
        for i in range(4):
            queue.enqueue(f"tr-{i}", 0, "q", "", make_candidates(), divergence_score=0.9)
        items = sorted(queue.items(), key=lambda item: item.trace_id)
        for item in items[:3]:
            queue.decide(item.item_id, decision("a", "promote", 0))
            queue.decide(item.item_id, decision("b", "promote", 0))
        queue.decide(items[3].item_id, decision("a", "promote", 0))
        queue.decide(items[3].item_id, decision("b", "promote", 1))
        assert queue.agreement_rate() == pytest.approx(0.75)

    def test_promote_different_candidates_is_disagreement(self, tmp_path):
        queue = self._double_queue(tmp_path)
        item = queue.enqueue("tr", 0, "q", "", make_candidates(), divergence_score=0.9)
        queue.decide(item.item_id, decision("a", "promote", 0))
        queue.decide(item.item_id, decision("b", "promote", 2))
        assert queue.agreement_rate() == 0.0


class TestDoubleAnnotationBand:
    def test_deterministic(self):
        assert is_double_annotated("item-x", 0.10) == is_double_annotated("item-x", 0.10)

    def test_rate_zero_and_one(self):
        assert not is_double_annotated("anything", 0.0)
        assert is_double_annotated("anything", 1.0)

    def test_rate_roughly_honored(self):
        hits = sum(1 for i in range(2000) if is_double_annotated(f"item-{i}", 0.10))
        assert 120 <= hits <= 280  # 10% of 2000 within a generous band
