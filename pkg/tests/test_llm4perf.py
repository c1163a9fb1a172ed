import json
from importlib import resources

import pytest

from perf_sampler.config_space import Configuration, load_space, parse_documentation
from perf_sampler.exceptions import GenerationExhausted, NoJsonFound, TransportError
from perf_sampler.harness.datasets import system_dataset, system_docs, system_space
from perf_sampler.harness.mock_expert import SyntheticExpert
from perf_sampler.llm4perf import (AnalysisDoc, LLM4PerfSampler, MeasurementHistory, PromptSet, SamplingBudget,
                                   StrategyDoc, analyze_trends, design_strategy, filter_options,
                                   generate_candidates, run_sampling_loop, tally_votes, vote_candidates)
from perf_sampler.llm_gateway import MockScript, TranscriptLog

FIXTURE = resources.files("perf_sampler.fixtures").joinpath("lrzip")


def fence(obj):
    return "```json\n" + json.dumps(obj) + "\n```"


@pytest.fixture
def lrzip():
    space = load_space(FIXTURE.joinpath("space.json"))
    docs = parse_documentation(FIXTURE.joinpath("docs.json").read_text())
    return space, docs


@pytest.fixture
def script():
    return MockScript.load(FIXTURE.joinpath("mock_script.json"))


def answer(role, obj, it="*"):
    return MockScript().add(role, it, fence(obj))


def test_prompt_templates_have_versions():
    prompts = PromptSet.load()
    for role in ("filter", "analyzer", "designer", "generator"):
        assert prompts[role].version == "1"
    system, user = prompts.render("generator", space="S", history="H", strategy="T", n="4")
    assert "Propose 4 distinct configurations" in user
    with pytest.raises(KeyError):
        prompts.render("filter", bogus="x")


def test_filter_drops_documented_insensitive_option(lrzip):
    space, docs = lrzip
    pruned, why = filter_options(space, docs, answer("filter", {"keep": ["algorithm"]}))
    assert pruned.names == ("algorithm",)
    assert "-N" in pruned.dropped_defaults and why["-N"]["decision"] == "drop"
    pruned, _ = filter_options(space, docs, answer("filter", {"keep": ["algorithm"], "drop": ["-N"]}))
    assert pruned.names == ("algorithm", "-w", "-p", "-L")
    assert pruned.dropped_defaults == {"-N": 0}


def test_filter_identity_and_fail_open(lrzip, caplog):
    space, docs = lrzip
    same, _ = filter_options(space, docs, answer("filter", {"keep": list(space.names)}))
    assert same == space
    ghost, _ = filter_options(space, docs, answer("filter", {"keep": ["ghost"]}))
    assert ghost.names == space.names
    assert "ghost" in caplog.text


def test_analyzer_reports_anomaly(lrzip, script):
    space, docs = lrzip
    pruned, _ = filter_options(space, docs, script)
    hist = MeasurementHistory(("Compression Time", "Max Memory"))
    hist.add(Configuration({"algorithm": "-b", "-w": 81, "-p": 4, "-L": 9}), {"Compression Time": 21.2, "Max Memory": 3.0}, 1)
    hist.add(Configuration({"algorithm": "-g", "-w": 1, "-p": 1, "-L": 9}), {"Compression Time": 40.27, "Max Memory": 1.0}, 1)
    doc = analyze_trends(hist, ("Compression Time", "Max Memory"), script, pruned, iteration=2)
    assert doc.anomalies[0][0] == "algorithm=-g" and "40.27" in doc.anomalies[0][1]
    assert ("-L", "low") in [(o, s) for o, s, _ in doc.hypotheses]
    with pytest.raises(NoJsonFound):
        analyze_trends(hist, ("Compression Time", "Max Memory"), MockScript().add("analyzer", "*", "no json"), pruned)


def test_designer_first_and_second_iteration(lrzip, script):
    space, docs = lrzip
    pruned, _ = filter_options(space, docs, script)
    first = design_strategy(None, pruned, 20, script, iteration=1)
    focus = dict(first.focus_regions)
    assert set(focus["algorithm"]) == {"-b", "-g", "-l", "-n", "-z"}
    assert set(focus["-w"]) == {1, 81} and set(focus["-p"]) == {1, 4}
    second = design_strategy(AnalysisDoc("x", (), ()), pruned, 13, script, iteration=2)
    assert ("-L", 8) in second.deprioritized


def test_designer_drops_unknown_focus(lrzip, caplog):
    space, _ = lrzip
    mock = answer("designer", {"narrative": "n", "focus_regions": [{"option": "ghost", "values": [1]}],
                               "deprioritized": []})
    doc = design_strategy(None, space, 5, mock)
    assert doc.focus_regions == () and "ghost" in caplog.text


def test_strategy_invariant():
    with pytest.raises(ValueError):
        StrategyDoc("n", (("-L", (8,)),), (("-L", 8),))


def test_generators_validate_and_collect(lrzip):
    space, _ = lrzip
    good = [{"algorithm": "-b", "-w": 1, "-p": 1, "-L": 8, "-N": 0},
            {"algorithm": "-z", "-w": 81, "-p": 4, "-L": 9, "-N": 0}]
    strat = StrategyDoc("n")
    lists = generate_candidates(strat, space, 2, [answer("generator", {"configurations": good})] * 3)
    assert [len(x) for x in lists] == [2, 2, 2]
    bad = [good[0], {**good[1], "-w": 7}]
    lists = generate_candidates(strat, space, 2, [answer("generator", {"configurations": bad})])
    assert len(lists[0]) == 1


def test_generators_all_fail(lrzip):
    space, _ = lrzip

    def broken(req):
        raise TransportError("down")

    with pytest.raises(GenerationExhausted):
        generate_candidates(StrategyDoc("n"), space, 2, [broken, broken])


def test_voting_counts_generators_once():
    a, b, c = (Configuration({"x": i}) for i in range(3))
    ranked = tally_votes([[a, a, b], [b, c], [b]])
    assert ranked == [(b, 3), (a, 1), (c, 1)]
    assert vote_candidates([[a, b], [b]], {b}, 5) == [a]


def test_budget_batches():
    assert SamplingBudget(20, 7, 3).batch_sizes() == [7, 7, 6]
    with pytest.raises(ValueError):
        SamplingBudget(5, 7, 3)


def test_fixture_loop_and_replay(lrzip, script, tmp_path):
    space, docs = lrzip
    data = system_dataset("lrzip")
    budget = SamplingBudget(20, 7, 3)
    out = run_sampling_loop(space, docs, budget, data.row, script, data.metrics, seed=0,
                            transcript=TranscriptLog(tmp_path / "t.jsonl"))
    out.check(20)
    assert out.meta["batch_sizes"] == [7, 7, 6]
    assert out.meta["dropped_options"] == {"-N": 0}
    assert out.meta["calls"] == {"filter": 1, "analyzer": 2, "designer": 3, "generator": 9}
    first = out.meta["iterations"][0]["batch"]
    assert {"algorithm": "-b", "-w": 81, "-p": 4, "-L": 9} in first
    assert {"algorithm": "-g", "-w": 1, "-p": 1, "-L": 9} in first
    assert {"algorithm": "-z", "-w": 41, "-p": 3, "-L": 8} in out.meta["iterations"][1]["batch"]
    replay = run_sampling_loop(space, docs, budget, data.row, MockScript.from_transcript(tmp_path / "t.jsonl"),
                               data.metrics, seed=0)
    assert replay.sampled == out.sampled


def test_random_topup_when_generators_fall_short(lrzip):
    space, docs = lrzip
    one = {"algorithm": "-b", "-w": 1, "-p": 1, "-L": 8}
    mock = (answer("filter", {"keep": ["algorithm", "-w", "-p", "-L"]})
            .add("designer", "*", fence({"focus_regions": [], "deprioritized": []}))
            .add("analyzer", "*", fence({"anomalies": [], "hypotheses": []}))
            .add("generator", "*", fence({"configurations": [one]})))
    data = system_dataset("lrzip")
    out = run_sampling_loop(space, docs, SamplingBudget(10, 5, 2), data.row, mock, data.metrics, seed=1)
    out.check(10)
    assert [it["voted"] for it in out.meta["iterations"]] == [1, 0]


def test_sampler_wrapper_with_synthetic_expert():
    space = system_space("javagc")
    data = system_dataset("javagc")
    sampler = LLM4PerfSampler(llm=SyntheticExpert(space, system_docs("javagc")), docs=system_docs("javagc"))
    a = sampler.sample(space, 15, data.row, data.metrics, seed=4)
    b = sampler.sample(space, 15, data.row, data.metrics, seed=4)
    a.check(15)
    assert a.sampled == b.sampled
    assert "Xlog:gc" in a.meta["dropped_options"]
    assert all("Xlog:gc" in c for c in a.full_configurations())
