from __future__ import annotations

import json

import httpx
import pytest

from agentsim.actions import (
    abstain_action,
    canonical_key,
    format_action,
    is_approval,
    parse_response,
    rerank_action,
    search_action,
    summarize_action,
    synthesize_action,
)
from agentsim.corpus import Document, build_index
from agentsim.errors import BackendError, UnparseableAction
from agentsim.seeding import SeedRecord
from agentsim.simulation import (
    BackendConfig,
    FixedClock,
    RemoteChatClient,
    ScriptedClient,
    SimulationConfig,
    analyst_propose,
    build_trajectory,
    judge_step,
    project_tool_calls,
    run_trajectory,
    should_consult_critics,
)
from agentsim.validation import ReviewQueue, ValidationConfig


def seed(query="manhattan project", seed_id="s0000"):
    return SeedRecord(
        seed_id=seed_id,
        query=query,
        cluster_id=0,
        novelty=1.0,
        retrieved_doc_ids=[],
        strategy="corpus_aware",
        rank=0,
    )


def scripted(backend_id, responses=(), rules=()):
    return BackendConfig(backend_id=backend_id, kind="scripted", responses=tuple(responses), rules=tuple(rules))


APPROVING = (("", "Approve"),)  # empty substring matches every prompt


def sim_config(analyst, critics=None, **kwargs):
    if critics is None:
        critics = (scripted("critic-0", rules=APPROVING), scripted("critic-1", rules=APPROVING))
    kwargs.setdefault("clock", FixedClock())
    return SimulationConfig(analyst=analyst, critics=tuple(critics), **kwargs)


SEARCH = "Thought: need evidence\nAction: search\nQuery: manhattan project"
SYNTH = (
    "Thought: evidence is sufficient\n"
    "Action: synthesize\n"
    "Answer: the manhattan project developed nuclear weapons\n"
    "Cites: d2"
)


@pytest.fixture()
def corpus():
    docs = [
        Document("d1", "Paris is the capital of France"),
        Document("d2", "The Manhattan Project developed the first nuclear weapons"),
        Document("d3", "Berlin is the capital of Germany"),
    ]
    return build_index(docs)


class TestActionParsing:
    def test_search_round_trip(self):
        thought, action = parse_response("Thought: t\nAction: search\nQuery: alpha beta")
        assert thought == "t"
        assert action == search_action("alpha beta")
        assert parse_response(format_action(action))[1] == action

    @pytest.mark.parametrize(
        "action",
        [
            rerank_action(["d2", "d1"]),
            summarize_action(["d1", "d3"], "a short summary"),
            synthesize_action("an answer", ["d1", "d2"]),
            abstain_action("not enough evidence"),
        ],
    )
    def test_format_parse_round_trip(self, action):
        _, parsed = parse_response(format_action(action))
        assert parsed == action

    def test_multiline_answer(self):
        text = "Action: synthesize\nAnswer: first line\nsecond line\nCites: d1"
        _, action = parse_response(text)
        assert action.payload["answer"] == "first line\nsecond line"

    def test_case_insensitive_keys(self):
        _, action = parse_response("THOUGHT: x\nACTION: Search\nQUERY: q")
        assert action.action_type == "search"

    @pytest.mark.parametrize(
        "bad",
        [
            "no action here",
            "Action: search",  # missing query
            "Action: synthesize\nAnswer: a",  # missing cites
            "Action: warp\nQuery: q",  # unknown type
        ],
    )
    def test_unparseable(self, bad):
        with pytest.raises(UnparseableAction):
            parse_response(bad)

    def test_approval_detection(self):
        assert is_approval("Approve")
        assert is_approval("\n  approved, looks good")
        assert not is_approval("Action: search\nQuery: x")


class TestCanonicalEquality:
    def test_whitespace_and_case_collapse(self):
        a = search_action("Manhattan   Project")
        b = search_action("manhattan project")
        assert canonical_key(a) == canonical_key(b)

    def test_rerank_by_sequence(self):
        assert canonical_key(rerank_action(["a", "b"])) != canonical_key(rerank_action(["b", "a"]))

    def test_abstain_reason_insensitive(self):
        assert canonical_key(abstain_action("x")) == canonical_key(abstain_action("y"))

    def test_synthesize_ignores_cites(self):
        a = synthesize_action("same answer", ["d1"])
        b = synthesize_action("same  ANSWER", ["d2"])
        assert canonical_key(a) == canonical_key(b)


class TestJudge:
    CFG = ValidationConfig()

    def test_unanimous(self):
        action = search_action("q")
        out = judge_step([("m1", action), ("m2", action), ("m3", action)], self.CFG)
        assert out.divergence_score == 0.0
        assert out.status == "accepted"
        assert out.chosen == action

    def test_two_of_three(self):
        a, b = search_action("x"), search_action("y")
        out = judge_step([("m1", a), ("m2", a), ("m3", b)], self.CFG)
        assert out.divergence_score == pytest.approx(1 / 3)
        assert out.status == "accepted"
        assert out.chosen == a

    def test_three_distinct_flagged(self):
        out = judge_step(
            [("m1", search_action("x")), ("m2", search_action("y")), ("m3", search_action("z"))],
            self.CFG,
        )
        assert out.divergence_score == pytest.approx(2 / 3)
        assert out.status == "flagged"
        assert len(out.candidates) == 3
        assert [m for m, _ in out.candidates] == ["m1", "m2", "m3"]

    def test_tie_prefers_analyst(self):
        # A plurality tie always means DS > 0.4, so raise theta to reach the
        # tie-breaking path.
        a, b = search_action("analyst pick"), search_action("critic pick")
        out = judge_step(
            [("analyst", a), ("c1", a), ("c2", b), ("c3", b)], ValidationConfig(theta=0.6)
        )
        assert out.status == "accepted"
        assert out.chosen == a

    def test_tie_without_analyst_is_lexicographic(self):
        x, a, b = search_action("solo"), search_action("apple"), search_action("zebra")
        out = judge_step(
            [("analyst", x), ("c1", a), ("c2", a), ("c3", b), ("c4", b)],
            ValidationConfig(theta=0.7),
        )
        assert out.chosen == a

    def test_requires_two_proposals(self):
        with pytest.raises(ValueError):
            judge_step([("m1", search_action("q"))], self.CFG)


class TestScriptedClient:
    def test_ordered_script_exhaustion(self):
        client = ScriptedClient(scripted("b", responses=["one", "two"]))
        assert client.complete("p") == "one"
        assert client.complete("p") == "two"
        with pytest.raises(BackendError):
            client.complete("p")

    def test_rules_match_substring(self):
        client = ScriptedClient(
            scripted("b", responses=["fallback"], rules=[("alpha", "A"), ("beta", "B")])
        )
        assert client.complete("contains alpha here") == "A"
        assert client.complete("beta stuff") == "B"
        assert client.complete("nothing matches") == "fallback"


class TestRemoteChatClient:
    def make_client(self, handler, sleeps=None, backend_id="analyst"):
        config = BackendConfig(
            backend_id=backend_id,
            kind="remote_chat",
            endpoint_url="http://chat.test/v1",
            model_name="test-model",
            temperature=0.2,
        )
        return RemoteChatClient(
            config,
            rng_seed=7,
            transport=httpx.MockTransport(handler),
            sleep=(sleeps.append if sleeps is not None else (lambda s: None)),
        )

    def test_payload_contract(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["model"] == "test-model"
            assert body["messages"][0]["role"] == "user"
            assert body["temperature"] == 0.2
            assert body["seed"] == 7
            return httpx.Response(
                200, json={"choices": [{"message": {"content": "Approve"}}]}
            )

        assert self.make_client(handler).complete("hello") == "Approve"

    def test_api_key_header(self, monkeypatch):
        monkeypatch.setenv("AGENTSIM_API_KEY_ANALYST", "sk-test")

        def handler(request):
            assert request.headers["authorization"] == "Bearer sk-test"
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

        assert self.make_client(handler).complete("x") == "ok"

    def test_retry_backoff_then_error(self):
        sleeps: list[float] = []

        def handler(request):
            return httpx.Response(500)

        client = self.make_client(handler, sleeps=sleeps)
        with pytest.raises(BackendError):
            client.complete("x")
        assert sleeps == [0.5, 1.0]


class TestAnalystPropose:
    def test_retry_once_on_parse_failure(self):
        client = ScriptedClient(scripted("a", responses=["garbage", SEARCH]))
        thought, action, raw = analyst_propose(client, "prompt")
        assert action == search_action("manhattan project")

    def test_unparseable_after_retry(self):
        client = ScriptedClient(scripted("a", responses=["garbage", "still garbage"]))
        with pytest.raises(UnparseableAction):
            analyst_propose(client, "prompt")


class TestRunTrajectory:
    def test_search_then_synthesize(self, corpus):
        config = sim_config(scripted("analyst", responses=[SEARCH, SYNTH]))
        trace, trajectory = run_trajectory(seed(), corpus, config)

        assert trace.outcome == "answered"
        assert trajectory.outcome == "answered"
        assert trajectory.final == {
            "answer": "the manhattan project developed nuclear weapons",
            "cited_doc_ids": ["d2"],
        }
        tools = [c.tool for c in trajectory.tool_calls]
        assert tools == ["search", "synthesize"]
        assert trajectory.tool_calls[0].output == ("d2",)
        cycles = {s.cycle_index for s in trace.steps}
        assert cycles == {0, 1}

    def test_max_cycles_forces_abstain(self, corpus):
        config = sim_config(
            scripted("analyst", rules=[("", SEARCH)]), max_cycles=7
        )
        trace, trajectory = run_trajectory(seed(), corpus, config)
        analyst_steps = [s for s in trace.steps if s.role == "analyst"]
        assert len(analyst_steps) == 7
        assert trace.outcome == "abstained"
        assert trajectory.tool_calls[-1].tool == "abstain"

    def test_cycle_bound_respected(self, corpus):
        config = sim_config(scripted("analyst", rules=[("", SEARCH)]), max_cycles=3)
        trace, _ = run_trajectory(seed(), corpus, config)
        assert sum(1 for s in trace.steps if s.role == "analyst") == 3
        assert all(s.cycle_index <= 3 for s in trace.steps)

    def test_low_grounding_triggers_reretrieval(self, corpus):
        # 1 of 4 answer token types covered by d2 -> coverage 0.25 < 0.3.
        bad_synth = (
            "Thought: premature\n"
            "Action: synthesize\n"
            "Answer: manhattan zebra yeti unicorn\n"
            "Cites: d2"
        )
        config = sim_config(scripted("analyst", responses=[SEARCH, bad_synth, SYNTH]))
        trace, trajectory = run_trajectory(seed(), corpus, config)

        reretrieved = [s for s in trace.steps if s.status == "auto_reretrieved"]
        assert len(reretrieved) == 1
        assert reretrieved[0].grounding_confidence == pytest.approx(0.25)
        # The repair search carries the uncovered answer tokens.
        repair_steps = [
            s
            for s in trace.steps
            if s.role == "system" and s.model_id == "engine" and s.action is not None
            and s.action.action_type == "search"
        ]
        assert len(repair_steps) == 1
        repair_query = repair_steps[0].action.payload["query"]
        for token in ("zebra", "yeti", "unicorn"):
            assert token in repair_query
        assert trace.outcome == "answered"

    def test_boundary_grounding_not_triggered(self, corpus):
        # 3 of 10 types covered -> exactly 0.30, strict < threshold.
        answer_tokens = "manhattan project nuclear q1 q2 q3 q4 q5 q6 q7"
        boundary_synth = (
            f"Thought: enough\nAction: synthesize\nAnswer: {answer_tokens}\nCites: d2"
        )
        config = sim_config(scripted("analyst", responses=[SEARCH, boundary_synth]))
        trace, _ = run_trajectory(seed(), corpus, config)
        synth_step = next(
            s for s in trace.steps if s.role == "judge" and s.action.action_type == "synthesize"
        )
        assert synth_step.grounding_confidence == pytest.approx(0.3)
        assert synth_step.status == "accepted"
        assert not any(s.status == "auto_reretrieved" for s in trace.steps)

    def test_reretrieval_capped_then_stands(self, corpus):
        bad_synth = (
            "Thought: premature\nAction: synthesize\nAnswer: zzz yyy xxx www\nCites: d2"
        )
        config = sim_config(scripted("analyst", rules=[("", bad_synth)]), max_cycles=7)
        trace, _ = run_trajectory(seed(), corpus, config)
        reretrieved = [s for s in trace.steps if s.status == "auto_reretrieved"]
        # two repairs plus the standing final synthesis
        assert len(reretrieved) == 3
        assert trace.outcome == "answered"

    def test_divergent_critics_flag_step(self, corpus, tmp_path):
        critics = (
            scripted("critic-0", rules=[("", "Action: search\nQuery: first alternative")]),
            scripted("critic-1", rules=[("", "Action: search\nQuery: second alternative")]),
        )
        config = sim_config(scripted("analyst", responses=[SEARCH, SYNTH]), critics=critics)
        queue = ReviewQueue(tmp_path)
        trace, _ = run_trajectory(seed(), corpus, config, queue=queue)

        flagged = [s for s in trace.steps if s.status == "flagged"]
        assert flagged, "expected at least one flagged step"
        items = queue.items("pending")
        assert len(items) == len(flagged)
        assert items[0].divergence_score == pytest.approx(2 / 3)
        assert len(items[0].candidates) == 3
        # provisional action is the analyst's proposal
        assert flagged[0].action == search_action("manhattan project")

    def test_backend_error_discards(self, corpus):
        config = sim_config(scripted("analyst", responses=[SEARCH]))
        trace, trajectory = run_trajectory(seed(), corpus, config)
        assert trace.outcome == "discarded"
        assert trajectory.outcome == "discarded"
        system_steps = [s for s in trace.steps if s.role == "system" and s.status == "discarded"]
        assert system_steps and "backend error" in system_steps[0].action.payload["reason"]

    def test_deterministic_across_runs(self, corpus):
        def run():
            config = sim_config(scripted("analyst", responses=[SEARCH, SYNTH]))
            return run_trajectory(seed(), corpus, config)

        trace_a, traj_a = run()
        trace_b, traj_b = run()
        assert trace_a == trace_b
        assert traj_a == traj_b

    def test_trajectory_fidelity_reprojection(self, corpus):
        config = sim_config(scripted("analyst", responses=[SEARCH, SYNTH]))
        trace, trajectory = run_trajectory(seed(), corpus, config)
        assert project_tool_calls(trace) == trajectory.tool_calls
        assert build_trajectory(trace).tool_calls == trajectory.tool_calls

    def test_every_synthesize_step_has_confidence_and_judged_steps_have_ds(self, corpus):
        config = sim_config(scripted("analyst", responses=[SEARCH, SYNTH]))
        trace, _ = run_trajectory(seed(), corpus, config)
        for step in trace.steps:
            if step.action is not None and step.action.action_type == "synthesize":
                assert step.grounding_confidence is not None
            if step.role == "judge":
                assert step.divergence_score is not None

    def test_timestamps_come_from_injected_clock(self, corpus):
        config = sim_config(scripted("analyst", responses=[SEARCH, SYNTH]))
        trace, _ = run_trajectory(seed(), corpus, config)
        stamps = [trace.created_at] + [s.timestamp for s in trace.steps]
        assert stamps == sorted(stamps)
        assert stamps[0] == 0.0 and stamps[1] == 1.0


class TestAdaptiveConsultation:
    def test_predicate(self):
        assert should_consult_critics(False, 0.9, 0.3)
        assert should_consult_critics(True, None, 0.3)
        assert should_consult_critics(True, 0.2, 0.3)
        assert not should_consult_critics(True, 0.3, 0.3)
        assert not should_consult_critics(True, 0.9, 0.3)

    def test_critics_still_consulted_after_poor_synthesis(self, corpus):
        bad_synth = "Action: synthesize\nAnswer: qqq www eee rrr\nCites: d2"
        config = sim_config(
            scripted("analyst", responses=[bad_synth, SYNTH]),
            adaptive_consultation=True,
        )
        trace, _ = run_trajectory(seed(), corpus, config)
        critic_cycles = {s.cycle_index for s in trace.steps if s.role == "critic"}
        assert critic_cycles == {0, 1}
