"""Acceptance suite: one or more tests per criterion, summarized as PASS/FAIL lines at the end of the run."""

import itertools
import json
import time
from argparse import Namespace
from importlib import resources

import numpy as np
import pytest
from scipy.stats import rankdata

from perf_sampler.baseline_samplers import RandomSampler
from perf_sampler.cli import cmd_evaluate
from perf_sampler.config_space import encoded_space, load_space, parse_documentation
from perf_sampler.harness import (ExperimentSpec, build_report, cliffs_delta, format_cell, improvement_pct,
                                  markers, random_landscape, system_dataset, system_docs, wilcoxon_signed_rank)
from perf_sampler.harness.datasets import pruned_space_of
from perf_sampler.harness.mock_expert import SyntheticExpert
from perf_sampler.harness.protocol import SAMPLERS, report_from_records
from perf_sampler.llm4perf import SamplingBudget, run_sampling_loop
from perf_sampler.llm_gateway import MockScript, TranscriptLog
from perf_sampler.mobo import (ParetoFront, ehvi_from_posterior, gp_fit, gp_predict, hypervolume,
                               non_dominated_sort, se_kernel)
from perf_sampler.perf_models import GBTRegressor, mlp_loss_and_grad, rmse, train_gbt

FIXTURE = resources.files("perf_sampler.fixtures").joinpath("lrzip")


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# -- 1: statistics ------------------------------------------------------------

def brute_delta(a, b):
    return sum(np.sign(x - y) for x in a for y in b) / (len(a) * len(b))


def enumerated_wilcoxon(a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    if len(d) == 0:
        return 1.0
    ranks = rankdata(np.abs(d))
    t = ranks[d > 0].sum()
    signs = np.array(list(itertools.product([0, 1], repeat=len(d))))
    sums = signs @ ranks
    lower = np.mean(sums <= t + 1e-9)
    upper = np.mean(sums >= t - 1e-9)
    return min(1.0, 2 * min(lower, upper))


@criterion(1, "Cliff's delta and exact Wilcoxon match brute-force enumeration")
def test_c01_statistics():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    assert cliffs_delta([1, 3], [2, 4]) == -0.5
    for _ in range(200):
        a = rng.integers(0, 6, size=rng.integers(1, 12)).astype(float)
        b = rng.integers(0, 6, size=rng.integers(1, 12)).astype(float)
        assert cliffs_delta(a, b) == pytest.approx(brute_delta(a, b), abs=1e-15)
    assert wilcoxon_signed_rank([1, 2, 3], [0, 0, 0]) == pytest.approx(0.25, abs=1e-12)
    for _ in range(200):
        n = int(rng.integers(1, 11))
        a, b = rng.integers(0, 5, size=n).astype(float), rng.integers(0, 5, size=n).astype(float)
        assert abs(wilcoxon_signed_rank(a, b) - enumerated_wilcoxon(a, b)) < 1e-9
    assert time.perf_counter() - start < 10


# -- 2: hypervolume -----------------------------------------------------------

def monte_carlo_hv(front, ref, n, rng, chunk=200_000):
    low = front.min(axis=0)
    box = np.prod(ref - low)
    hits = 0
    for start in range(0, n, chunk):
        z = low + rng.random((min(chunk, n - start), len(ref))) * (ref - low)
        dominated = np.zeros(len(z), dtype=bool)
        for p in front:
            dominated |= np.all(z >= p, axis=1)
        hits += dominated.sum()
    return box * hits / n


@criterion(2, "Hypervolume exact values and agreement with Monte Carlo")
def test_c02_hypervolume():
    start = time.perf_counter()
    assert hypervolume([(1, 3), (3, 1)], (4, 4)) == 5.0
    rng = np.random.default_rng(2)
    for trial in range(20):
        m = 2 + trial % 2
        front = rng.random((int(rng.integers(1, 9)), m))
        ref = np.full(m, 1.1)
        exact = hypervolume(front, ref)
        approx = monte_carlo_hv(front, ref, 10**6, rng)
        assert abs(exact - approx) <= 0.01 * exact
    assert time.perf_counter() - start < 60


# -- 3: dominance -------------------------------------------------------------

def brute_fronts(P):
    remaining = list(range(len(P)))
    fronts = []
    while remaining:
        front = [i for i in remaining
                 if not any(np.all(P[j] <= P[i]) and np.any(P[j] < P[i]) for j in remaining)]
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


@criterion(3, "non_dominated_sort equals brute-force sorting")
def test_c03_dominance():
    rng = np.random.default_rng(3)
    for _ in range(100):
        P = rng.integers(0, 6, size=(rng.integers(1, 51), rng.integers(1, 5))).astype(float)
        assert non_dominated_sort(P) == brute_fronts(P)


# -- 4: Gaussian process ------------------------------------------------------

@criterion(4, "GP interpolation, one-point closed form and mean gradient")
def test_c04_gp():
    rng = np.random.default_rng(4)
    X = rng.random((10, 3))
    y = np.sin(4 * X[:, 0]) + X[:, 1] * X[:, 2]
    gp = gp_fit(X, y, {"length_scale": 0.6, "signal_variance": 1.0, "noise_variance": 0.0})
    assert np.max(np.abs(gp.predict(X) - y)) < 1e-6

    x0, y0 = np.array([[0.3, -0.2]]), np.array([1.7])
    one = gp_fit(x0, y0, {"length_scale": 0.8, "signal_variance": 2.0, "noise_variance": 0.5}, normalize_y=False)
    for x in rng.normal(size=(5, 2)):
        k = se_kernel(x[None], x0, 0.8, 2.0)[0, 0]
        mean, var = gp_predict(one, x)
        assert abs(mean - k / 2.5 * y0[0]) < 1e-10
        assert abs(var - (2.0 - k * k / 2.5)) < 1e-10

    fitted = gp_fit(X, y)
    h = 1e-6
    for x in rng.random((5, 3)):
        g = fitted.predict_mean_gradient(x)
        fd = np.array([(fitted.predict([x + h * e])[0] - fitted.predict([x - h * e])[0]) / (2 * h)
                       for e in np.eye(3)])
        assert np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-4


# -- 5: EHVI ------------------------------------------------------------------

def improvement_2d(front, ref, Y):
    """Exact 2-D hypervolume improvement of each row of Y over a front (staircase cells)."""
    P = front[np.argsort(front[:, 0])]
    xs = np.concatenate([P[:, 0], [ref[0]]])
    tops = np.concatenate([[ref[1]], P[:, 1]])
    lefts = np.concatenate([[-np.inf], P[:, 0]])
    total = np.zeros(len(Y))
    for left, right, top in zip(lefts, xs, tops):
        width = np.clip(right - np.maximum(Y[:, 0], left), 0, None)
        height = np.clip(top - Y[:, 1], 0, None)
        total += width * height
    return total


@criterion(5, "EHVI deterministic limit, QMC vs Monte Carlo, non-negativity")
def test_c05_ehvi():
    limit = ParetoFront(np.array([[0.0, 0.0]]), np.array([1.0, 1.0]))
    assert abs(ehvi_from_posterior([[-1.0, -1.0]], [[1e-14, 1e-14]], limit)[0] - 3.0) < 1e-3

    rng = np.random.default_rng(5)
    for _ in range(20):
        pts = rng.random((int(rng.integers(1, 6)), 2))
        front = ParetoFront.from_points(pts, [1.1, 1.1])
        # the oracle itself against the generic hypervolume routine
        for y in rng.random((3, 2)) * 1.2 - 0.1:
            direct = hypervolume(np.vstack([front.points, y]), front.reference) - hypervolume(front.points,
                                                                                             front.reference)
            assert improvement_2d(front.points, front.reference, y[None])[0] == pytest.approx(direct, abs=1e-12)
        mean = rng.random(2) * 0.8
        sd = 0.05 + rng.random(2) * 0.25
        qmc_value = ehvi_from_posterior(mean[None], (sd**2)[None], front, seed=0)[0]
        Y = mean + sd * rng.standard_normal((10**6, 2))
        mc_value = improvement_2d(front.points, front.reference, Y).mean()
        assert abs(qmc_value - mc_value) <= 0.05 * mc_value

    front = ParetoFront.from_points(rng.random((6, 2)), [1.1, 1.1])
    values = ehvi_from_posterior(rng.normal(size=(2000, 2)), rng.random((2000, 2)) * 2, front)
    assert np.all(values >= 0)


# -- 6: sampler contract fuzz -------------------------------------------------

BUDGETS = tuple(range(10, 71, 10))


def draw(name, data, k, seed):
    params = {}
    if name == "llm4perf":
        params = {"llm": SyntheticExpert(data.space, system_docs(data.name), seed=seed),
                  "docs": system_docs(data.name)}
    sampler = SAMPLERS[name](**params)
    if not sampler.requires_oracle:
        return sampler.sample(data.space, k, seed=seed)
    objectives = data.metrics if sampler.multi_objective else data.metrics.single(data.metrics.names[0])
    return sampler.sample(data.space, k, data.row, objectives, seed=seed)


@pytest.mark.slow
@criterion(6, "every sampler returns k distinct valid configurations, seed-deterministically")
@pytest.mark.parametrize("system,cardinality", [("lrzip", 1200), ("javagc", 6240), ("sqlite", 9216),
                                                ("x264", 13824)])
def test_c06_sampler_contract(system, cardinality):
    data = system_dataset(system)
    assert data.space.cardinality == cardinality
    for name in SAMPLERS:
        dumps = {}
        for k in BUDGETS:
            out = draw(name, data, k, seed=k)
            out.check(k)
            dumps[k] = out.dumps()
        # determinism is re-checked at the smallest and largest budget
        for k in (BUDGETS[0], BUDGETS[-1]):
            assert draw(name, data, k, seed=k).dumps() == dumps[k], (name, k)


# -- 7: performance models ----------------------------------------------------

@criterion(7, "GBT fit and monotone training curve; FNN gradient check")
def test_c07_models():
    rng = np.random.default_rng(7)
    X = rng.random((200, 4))
    y = X @ [3.0, -2.0, 1.0, 0.5] + 1.0
    gbt = train_gbt(X, y)
    assert rmse(gbt.predict(X), y) < 0.05 * y.std()
    curve = np.asarray(gbt.train_rmse_)
    assert np.all(np.diff(curve) <= 1e-12)

    Xs, ys = rng.normal(size=(6, 3)), rng.normal(size=6)
    layers = [[rng.normal(size=(3, 4)), rng.normal(size=4)], [rng.normal(size=(4, 4)), rng.normal(size=4)],
              [rng.normal(size=(4, 1)), rng.normal(size=1)]]
    _, grads = mlp_loss_and_grad(layers, Xs, ys)
    h = 1e-6
    for li, (W, b) in enumerate(layers):
        for pi, P in enumerate((W, b)):
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + h
                up = mlp_loss_and_grad(layers, Xs, ys)[0]
                P[idx] = old - h
                down = mlp_loss_and_grad(layers, Xs, ys)[0]
                P[idx] = old
                fd = (up - down) / (2 * h)
                g = grads[li][pi][idx]
                assert abs(fd - g) / max(abs(fd), abs(g), 1e-8) < 1e-4


# -- 8: pipeline replay -------------------------------------------------------

def untimed(path):
    return [{k: v for k, v in json.loads(line).items() if k != "timestamp"}
            for line in path.read_text(encoding="utf-8").splitlines()]


@criterion(8, "scripted lrzip run: iterations [7,7,6], -N pruned, two analyzer calls, byte-identical replay")
def test_c08_pipeline_replay(tmp_path):
    start = time.perf_counter()
    space = load_space(FIXTURE.joinpath("space.json"))
    docs = parse_documentation(FIXTURE.joinpath("docs.json").read_text())
    data = system_dataset("lrzip")
    budget = SamplingBudget(20, 7, 3)
    out = run_sampling_loop(space, docs, budget, data.row, MockScript.load(FIXTURE.joinpath("mock_script.json")),
                            data.metrics, seed=0, transcript=TranscriptLog(tmp_path / "t.jsonl"))
    out.check(20)
    assert out.meta["batch_sizes"] == [7, 7, 6]
    assert "-N" in out.meta["dropped_options"]
    assert out.meta["calls"]["analyzer"] == 2
    replay = run_sampling_loop(space, docs, budget, data.row, MockScript.from_transcript(tmp_path / "t.jsonl"),
                               data.metrics, seed=0, transcript=TranscriptLog(tmp_path / "replay.jsonl"))
    # the transcript location is provenance, not outcome
    out.meta["transcript"] = replay.meta["transcript"] = "transcript.jsonl"
    assert replay.dumps() == out.dumps()
    assert untimed(tmp_path / "replay.jsonl") == untimed(tmp_path / "t.jsonl")
    assert time.perf_counter() - start < 30


# -- 9: pruning helps random sampling ------------------------------------------

@criterion(9, "pruned-space random sampling beats full-space random sampling in >= 16 of 20 trials")
def test_c09_pruning_helps():
    start = time.perf_counter()
    wins = {"metric1": 0, "metric2": 0}
    for trial in range(20):
        data = random_landscape(seed=trial, insensitive_fraction=0.5)
        pruned = pruned_space_of(data)
        X = encoded_space(data.space)
        for metric in wins:
            y = data.metric(metric)
            means = []
            for space in (data.space, pruned):
                scores = []
                for rep in range(5):
                    out = RandomSampler().sample(space, 20, seed=100 * trial + rep)
                    train = np.array([data.space.index_of(c) for c in out.full_configurations()])
                    test = np.setdiff1d(np.arange(len(y)), train)
                    scores.append(rmse(GBTRegressor().fit(X[train], y[train]).predict(X[test]), y[test]))
                means.append(np.mean(scores))
            wins[metric] += means[1] <= means[0]
    print(f"pruned-space wins out of 20: {wins}")
    assert min(wins.values()) >= 16
    assert time.perf_counter() - start < 300


# -- 10: report fidelity -------------------------------------------------------

@criterion(10, "report cell renders 2.309(↑59.3%) with markers from p and delta")
def test_c10_report_cell():
    offsets = np.linspace(-0.045, 0.045, 10)
    ref, cand = 5.672 + offsets, 2.309 + offsets[::-1]
    assert np.mean(cand) == pytest.approx(2.309) and np.mean(ref) == pytest.approx(5.672)
    spec = ExperimentSpec({"synth": {}}, ["nsga3", "llm4perf"], budgets=(10,), repetitions=10, models=("gbt",))
    records = [{"system": "lrzip", "metric": "time", "model": "gbt", "budget": 10, "sampler": s,
                "repetition": r, "rmse": float(v)}
               for s, vals in (("nsga3", ref), ("llm4perf", cand)) for r, v in enumerate(vals)]
    report = report_from_records(spec, records)
    cell = report.cells[("lrzip", "time", "gbt", 10, "llm4perf")]
    p, delta = wilcoxon_signed_rank(ref, cand), cliffs_delta(ref, cand)
    assert cell.p_value == pytest.approx(p) and cell.delta == pytest.approx(delta)
    expected = "2.309(↑59.3%)" + markers(p, delta)
    assert expected == "2.309(↑59.3%)*L"
    assert format_cell(cell.mean, improvement_pct(np.mean(ref), cell.mean), cell.markers) == expected
    assert expected in build_report(report, "text")
    assert expected in build_report(report, "csv")


# -- 11: end-to-end mock benchmark ---------------------------------------------

@pytest.mark.slow
@criterion(11, "evaluate on a synthetic system completes with a full CSV and no failed cells")
def test_c11_end_to_end(tmp_path):
    start = time.perf_counter()
    spec = {"dataset": {"synth": {"seed": 0}},
            "samplers": ["random", "nsbs", {"name": "llm4perf", "label": "llm4perf-mock"}],
            "budgets": [10, 20, 30], "repetitions": 5, "models": ["gbt", "fnn"],
            "reference": "random", "llm": "auto"}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    args = Namespace(command="evaluate", spec=str(path), out=str(tmp_path / "out"), seed=None, mock=None,
                     verbose=False, axis=None, values=None, system=None)
    assert cmd_evaluate(args) == 0
    (csv_path,) = (tmp_path / "out").glob("*/report.csv")
    rows = csv_path.read_text(encoding="utf-8").splitlines()
    header = rows[0].split(",")
    assert len(rows) - 1 == 2 * 2 * 3 * 3
    status = header.index("status")
    assert all(r.split(",")[status] == "ok" for r in rows[1:])
    assert time.perf_counter() - start < 600
