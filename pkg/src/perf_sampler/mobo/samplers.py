"""EHVI and TSEMO samplers over a finite configuration space."""

from __future__ import annotations

import numpy as np

from ..config_space import CATEGORICAL, ConfigSpace, encoded_space, encoding_layout
from ..config_space import _scalar_table
from ..sampling import BaseSampler, Evaluator, SamplerOutcome
from .ehvi import DEFAULT_QMC_SAMPLES, argmax_ehvi
from .gp import GaussianProcess
from .pareto import ParetoFront, pareto_mask


def reference_point(values: np.ndarray) -> np.ndarray:
    """Worst measured value per objective pushed out by 10% of its magnitude."""
    worst = values.max(axis=0)
    pad = 0.1 * np.abs(worst)
    spread = worst - values.min(axis=0)
    pad = np.where(pad > 0, pad, 0.1 * spread)
    return worst + np.where(pad > 0, pad, 1e-6)


def _fit_models(X, values, hyper):
    return [GaussianProcess(hyper=hyper).fit(X, values[:, j]) for j in range(values.shape[1])]


def _initial_design(ev: Evaluator, n_init: int, rng) -> None:
    n = min(n_init, ev.budget)
    for i in rng.choice(len(ev.space.configurations), size=n, replace=False):
        ev.measure(int(i))


class EHVISampler(BaseSampler):
    """Measure the unmeasured configuration with the largest expected hypervolume improvement."""

    name = "ehvi"
    requires_oracle = True
    multi_objective = True

    def __init__(self, n_init=5, n_samples=DEFAULT_QMC_SAMPLES, hyper="auto", random_state=None):
        self.n_init = n_init
        self.n_samples = n_samples
        self.hyper = hyper
        self.random_state = random_state

    def _sample(self, space, k, oracle, objectives, rng):
        ev = Evaluator(space, oracle, objectives, k)
        X = encoded_space(space)
        _initial_design(ev, self.n_init, rng)
        picks = []
        while not ev.done:
            idx, vals = ev.matrix()
            models = _fit_models(X[idx], vals, self.hyper)
            front = ParetoFront.from_points(vals, reference_point(vals))
            pool = ev.unmeasured()
            mean = np.empty((len(pool), len(models)))
            var = np.empty_like(mean)
            for j, gp in enumerate(models):
                mean[:, j], var[:, j] = gp.predict(X[pool], return_var=True)
            qmc_seed = int(rng.integers(2**31))
            best, value = argmax_ehvi(mean, var, front, self.n_samples, qmc_seed)
            ev.measure(int(pool[best]))
            picks.append(value)
        return ev.outcome({"n_init": min(self.n_init, k), "ehvi": picks})


class _GridPrior:
    """Exact joint draws from the SE-kernel GP prior over a space's full option grid.

    On the grid the kernel factorizes over options, so a joint draw is a chain
    of small per-option matrix products instead of one large Cholesky.
    """

    def __init__(self, space: ConfigSpace):
        self.shape = tuple(len(o.values) for o in space.options)
        self.sq_dists = []
        for lay in encoding_layout(space):
            if lay.option.kind == CATEGORICAL:
                d = 2.0 * (1.0 - np.eye(len(lay.option.values)))
            else:
                v = _scalar_table(lay.option)
                d = (v[:, None] - v[None, :]) ** 2
            self.sq_dists.append(d)
        self.flat = np.ravel_multi_index(space.index_matrix.T, self.shape)

    def draw(self, length_scale, signal_variance, rng) -> np.ndarray:
        """One prior sample at every configuration, in enumeration order."""
        z = rng.standard_normal(self.shape)
        for axis, d in enumerate(self.sq_dists):
            lam, Q = np.linalg.eigh(np.exp(-0.5 * d / length_scale**2))
            root = Q * np.sqrt(np.maximum(lam, 0.0))
            z = np.moveaxis(np.tensordot(root, z, axes=([1], [axis])), 0, axis)
        return np.sqrt(signal_variance) * z.reshape(-1)[self.flat]


class TSEMOSampler(BaseSampler):
    """Thompson sampling: measure a point on the Pareto front of one joint posterior draw.

    Candidate sets above ``max_joint`` are replaced by a seeded uniform
    subsample of ``subsample`` unmeasured configurations.
    """

    name = "tsemo"
    requires_oracle = True
    multi_objective = True

    def __init__(self, n_init=5, max_joint=5000, subsample=2000, hyper="auto", random_state=None):
        self.n_init = n_init
        self.max_joint = max_joint
        self.subsample = subsample
        self.hyper = hyper
        self.random_state = random_state

    def _sample(self, space, k, oracle, objectives, rng):
        ev = Evaluator(space, oracle, objectives, k)
        X = encoded_space(space)
        prior = _GridPrior(space)
        _initial_design(ev, self.n_init, rng)
        front_sizes = []
        while not ev.done:
            idx, vals = ev.matrix()
            models = _fit_models(X[idx], vals, self.hyper)
            pool = ev.unmeasured()
            if len(pool) > self.max_joint:
                pool = np.sort(rng.choice(pool, size=self.subsample, replace=False))
            draws = np.empty((len(pool), len(models)))
            for j, gp in enumerate(models):
                f = prior.draw(gp.length_scale_, gp._s2, rng)
                draws[:, j] = gp.condition_prior_sample(X[pool], f[pool], f[idx], rng)
            first = np.flatnonzero(pareto_mask(draws))
            front_sizes.append(len(first))
            ev.measure(int(pool[first[rng.integers(len(first))]]))
        return ev.outcome({"n_init": min(self.n_init, k), "sampled_front_sizes": front_sizes})


def sample_ehvi(space, k, seed, oracle, objectives, **params) -> SamplerOutcome:
    return EHVISampler(**params).sample(space, k, oracle, objectives, seed=seed)


def sample_tsemo(space, k, seed, oracle, objectives, **params) -> SamplerOutcome:
    return TSEMOSampler(**params).sample(space, k, oracle, objectives, seed=seed)
