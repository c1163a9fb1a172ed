import math

import numpy as np
import pytest

from perf_sampler.baseline_samplers import (CoMSASampler, FlashSampler, GeneticSampler, NSBSSampler, NSGA3Sampler,
                                            RandomSampler, das_dennis, default_divisions, nsga3_select)
from perf_sampler.config_space import encoded_space
from perf_sampler.exceptions import BudgetError
from perf_sampler.harness import system_dataset
from perf_sampler.mobo import EHVISampler, TSEMOSampler


@pytest.fixture(scope="module")
def lrzip():
    return system_dataset("lrzip")


def run(cls, data, k, seed, **params):
    sampler = cls(**params)
    if not sampler.requires_oracle:
        return sampler.sample(data.space, k, seed=seed)
    objectives = data.metrics if sampler.multi_objective else data.metrics.single(data.metrics.names[0])
    return sampler.sample(data.space, k, data.row, objectives, seed=seed)


FAST = [RandomSampler, NSBSSampler, GeneticSampler, FlashSampler, CoMSASampler, NSGA3Sampler]


@pytest.mark.parametrize("cls", FAST + [TSEMOSampler, EHVISampler], ids=lambda c: c.name)
def test_contract_and_determinism(cls, lrzip):
    k = 12
    a = run(cls, lrzip, k, seed=3)
    a.check(k)
    assert a.meta["sampler"] == cls.name and a.meta["seed"] == 3
    assert a.dumps() == run(cls, lrzip, k, seed=3).dumps()


@pytest.mark.parametrize("cls", FAST, ids=lambda c: c.name)
def test_budget_errors(cls, lrzip):
    for k in (0, -1, lrzip.space.cardinality + 1):
        with pytest.raises(BudgetError):
            run(cls, lrzip, k, seed=0)


def test_oracle_required(lrzip):
    with pytest.raises(ValueError):
        GeneticSampler().sample(lrzip.space, 10, seed=0)
    with pytest.raises(ValueError):
        FlashSampler().sample(lrzip.space, 10, lrzip.row, lrzip.metrics, seed=0)
    with pytest.raises(ValueError):
        NSGA3Sampler().sample(lrzip.space, 10, lrzip.row, lrzip.metrics.single("Max Memory"), seed=0)


def test_budget_equal_to_space(lrzip):
    from perf_sampler.harness import system_pruned_space
    space = system_pruned_space("lrzip")
    out = RandomSampler().sample(space, space.cardinality, seed=1)
    out.check(space.cardinality)


def test_nsbs_is_greedy_max_min(lrzip):
    out = NSBSSampler().sample(lrzip.space, 8, seed=0)
    X = encoded_space(lrzip.space)
    idx = [lrzip.space.index_of(c) for c in out.sampled]
    for step in range(1, len(idx)):
        d = np.abs(X[:, None, :] - X[idx[:step]][None]).sum(axis=2).min(axis=1)
        d[idx[:step]] = -1
        assert d[idx[step]] == pytest.approx(d.max())
    gaps = out.meta["min_distances"]
    assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_single_objective_search_beats_random(lrzip):
    metric = "Compression Time"
    y = lrzip.metric(metric)
    objective = lrzip.metrics.single(metric)
    best = {}
    for cls in (RandomSampler, GeneticSampler, FlashSampler):
        vals = []
        for seed in range(5):
            s = cls()
            out = s.sample(lrzip.space, 30, lrzip.row, objective, seed=seed) if s.requires_oracle else \
                s.sample(lrzip.space, 30, seed=seed)
            vals.append(min(y[lrzip.space.index_of(c)] for c in out.sampled))
        best[cls.name] = np.mean(vals)
    assert best["flash"] <= best["random"]


def test_genetic_generation_means_recorded(lrzip):
    out = run(GeneticSampler, lrzip, 40, seed=2)
    assert len(out.meta["generation_means"]) >= 2
    bests = out.meta["generation_best"]
    assert all(b <= a + 1e-12 for a, b in zip(bests, bests[1:]))


def test_das_dennis():
    dirs = das_dennis(3, 4)
    assert len(dirs) == math.comb(3 + 4 - 1, 4)
    assert np.allclose(dirs.sum(axis=1), 1.0) and dirs.min() >= 0
    assert len({tuple(d) for d in dirs}) == len(dirs)
    assert math.comb(2 + default_divisions(2, 10) - 1, default_divisions(2, 10)) >= 10


def test_nsga3_select_keeps_first_front():
    rng = np.random.default_rng(0)
    F = np.array([[0, 1], [1, 0], [0.5, 0.5], [2, 2], [3, 3], [1, 1]], dtype=float)
    chosen, _ = nsga3_select(F, 3, das_dennis(2, 4), rng)
    assert sorted(np.asarray(chosen).tolist()) == [0, 1, 2]
