import json
from fractions import Fraction

import httpx
import pytest

from tpgsolve.formal import load_problem
from tpgsolve.planners import (
    CandidateLine,
    GreedyPlanner,
    HistoryEntry,
    OraclePlanner,
    PlannerError,
    PlannerView,
    PromptBundle,
    RandomPlanner,
    RemotePlanner,
    RemoteSettings,
    build_prompt,
    parse_planner_reply,
    render_messages,
)
from tpgsolve.prioritize import BLOCKED, READY, ScoredCandidate


def _bundle(**over):
    doc = dict(
        problem_id="p1",
        statement="AB is parallel to CD.",
        premises=("Parallel(AB,CD)",),
        goal="Parallel(CD,AB)",
        state_summary="1 facts",
        delta=(),
        candidates=(CandidateLine("parallel_symmetry", "ready", "15.00"), CandidateLine("angle_sum", "blocked", "5.00")),
        history=(),
    )
    doc.update(over)
    return PromptBundle(**doc)


def test_empty_history_keeps_section():
    _, user = render_messages(_bundle())
    lines = user.splitlines()
    i = lines.index("[HISTORY]")
    assert lines[i + 2] == "[OUTPUT]"
    assert "[FAILURE]" not in lines


def test_section_order_and_candidate_order():
    _, user = render_messages(_bundle(recovery=True, failures=("angle_sum",)))
    order = [user.index(s) for s in ("[INPUT]", "[CANDIDATES]", "[HISTORY]", "[FAILURE]", "[OUTPUT]")]
    assert order == sorted(order)
    assert user.index("parallel_symmetry") < user.index("angle_sum | status")
    assert "recent failed: angle_sum" in user


def test_rendering_is_deterministic():
    b = _bundle(history=(HistoryEntry(1, "x", "applied"),))
    assert build_prompt(b) == build_prompt(_bundle(history=(HistoryEntry(1, "x", "applied"),)))


def test_history_limit():
    with pytest.raises(ValueError):
        _bundle(history=tuple(HistoryEntry(i, "x", "applied") for i in range(6)))


def test_parse_spec_examples():
    assert parse_planner_reply('{"calls": ["parallel_property"]}').theorem == "parallel_property"
    assert parse_planner_reply('sure! {"calls": ["x"]}').theorem == "x"
    with pytest.raises(PlannerError) as err:
        parse_planner_reply('{"calls": []}')
    assert err.value.code == "empty-calls"


def _cand(name, readiness, total=0):
    z = Fraction(0)
    return ScoredCandidate(name, readiness, z, z, z, Fraction(total))


PROBLEM = load_problem({"id": "p", "premises": ["Line(AB)"], "goal": "Line(CD)", "trace": ["t1", "t2"]})


def _view(cands, validated=True, applied=(), bundle=None):
    return PlannerView(PROBLEM, 1, cands, validated, list(applied), bundle_factory=bundle)


def test_greedy_takes_first_ready():
    view = _view([_cand("b", BLOCKED, 9), _cand("a", READY, 5), _cand("c", READY, 1)])
    assert GreedyPlanner().decide(view).theorem == "a"


def test_greedy_unvalidated_takes_first():
    view = _view([_cand("b", None), _cand("a", None)], validated=False)
    assert GreedyPlanner().decide(view).theorem == "b"


def test_greedy_without_ready_candidates_errors():
    with pytest.raises(PlannerError):
        GreedyPlanner().decide(_view([_cand("b", BLOCKED)]))


def test_random_is_seeded():
    cands = [_cand(f"t{i}", READY) for i in range(20)]
    r1, r2 = RandomPlanner("s"), RandomPlanner("s")
    seq1 = [r1.decide(_view(cands)).theorem for _ in range(10)]
    seq2 = [r2.decide(_view(cands)).theorem for _ in range(10)]
    assert seq1 == seq2
    assert len(set(seq1)) > 1


def test_oracle_follows_trace_even_off_candidates():
    o = OraclePlanner(["t1", "t2"])
    assert o.decide(_view([])).theorem == "t1"
    assert o.decide(_view([], applied=["t1"])).theorem == "t2"


def _remote(handler, tmp_path=None, **settings):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    trace = str(tmp_path / "trace.jsonl") if tmp_path else None
    return RemotePlanner(RemoteSettings(base_url="http://llm.test/v1", trace_path=trace, **settings), client)


def test_remote_request_shape(tmp_path, monkeypatch):
    monkeypatch.setenv("TPGSOLVE_API_KEY", "secret")
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": '{"calls": ["parallel_symmetry"]}'}}]})

    planner = _remote(handler, tmp_path, model="m1", temperature=0.1)
    view = _view([_cand("parallel_symmetry", READY)], bundle=_bundle)
    assert planner.decide(view).theorem == "parallel_symmetry"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer secret"
    assert seen["body"]["model"] == "m1" and seen["body"]["temperature"] == 0.1
    assert [m["role"] for m in seen["body"]["messages"]] == ["system", "user"]
    logged = [json.loads(l) for l in (tmp_path / "trace.jsonl").read_text().splitlines()]
    assert logged[0]["response"]["choices"][0]["message"]["content"].startswith("{")


def test_remote_transport_error_maps_to_planner_error():
    def handler(request):
        return httpx.Response(503, text="down")

    with pytest.raises(PlannerError) as err:
        _remote(handler).decide(_view([], bundle=_bundle))
    assert err.value.code == "transport"


def test_remote_timeout_maps_to_planner_error():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(PlannerError) as err:
        _remote(handler).decide(_view([], bundle=_bundle))
    assert err.value.code == "timeout"


def test_remote_bad_reply_is_parse_error():
    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {"content": "I pick parallel_symmetry"}}]})

    with pytest.raises(PlannerError) as err:
        _remote(handler).decide(_view([], bundle=_bundle))
    assert err.value.code == "no-json"
