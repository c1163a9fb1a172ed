"""Baseline configuration samplers behind the common :class:`BaseSampler` contract.

Random, Genetic, Flash, CoMSA, NSBS and NSGA-III. The budget counts oracle
measurements: every sampler returns exactly ``k`` distinct configurations and
calls the oracle at most once per configuration. Ties are broken by the lowest
enumeration index.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np
from sklearn.base import clone

from .config_space import ConfigSpace, encoded_space
from .mobo.pareto import non_dominated_sort
from .perf_models import RegressionTree
from .sampling import BaseSampler, Evaluator, SamplerOutcome


def row_lookup(space: ConfigSpace) -> dict:
    """Map from value-index tuple to enumeration index (cached on the space)."""
    cache = space.__dict__.get("_row_lookup")
    if cache is None:
        cache = {tuple(r): i for i, r in enumerate(space.index_matrix.tolist())}
        space.__dict__["_row_lookup"] = cache
    return cache


class RandomSampler(BaseSampler):
    """Uniform sampling without replacement."""

    name = "random"

    def __init__(self, random_state=None):
        self.random_state = random_state

    def _sample(self, space, k, oracle, objectives, rng):
        idx = rng.choice(space.cardinality, size=k, replace=False)
        return SamplerOutcome([space.configurations[i] for i in idx], space, {})


class NSBSSampler(BaseSampler):
    """Greedy max-min Manhattan-distance (diversity) sampling.

    The first pick is uniform; each later pick maximizes the minimum L1
    distance, over encoded vectors, to everything already selected.
    """

    name = "nsbs"

    def __init__(self, random_state=None):
        self.random_state = random_state

    def _sample(self, space, k, oracle, objectives, rng):
        X = encoded_space(space)
        first = int(rng.integers(len(X)))
        chosen = [first]
        min_dist = np.abs(X - X[first]).sum(axis=1)
        min_dist[first] = -1.0
        gaps = []
        while len(chosen) < k:
            nxt = int(np.argmax(min_dist))
            gaps.append(float(min_dist[nxt]))
            chosen.append(nxt)
            np.minimum(min_dist, np.abs(X - X[nxt]).sum(axis=1), out=min_dist)
            min_dist[chosen] = -1.0
        return SamplerOutcome([space.configurations[i] for i in chosen], space, {"min_distances": gaps})


class _Variation:
    """Uniform crossover and per-option reset mutation on value-index rows."""

    def __init__(self, space, crossover_rate, mutation_rate, rng):
        self.space = space
        self.sizes = np.array([len(o.values) for o in space.options])
        self.lookup = row_lookup(space)
        self.rows = space.index_matrix
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.rng = rng

    def breed(self, parent_a: int, parent_b: int) -> int | None:
        """Child enumeration index, or None if the child violates a constraint."""
        a, b = self.rows[parent_a], self.rows[parent_b]
        if self.rng.random() < self.crossover_rate:
            child = np.where(self.rng.random(len(a)) < 0.5, a, b)
        else:
            child = a.copy()
        flip = self.rng.random(len(child)) < self.mutation_rate
        if flip.any():
            child[flip] = (self.rng.random(flip.sum()) * self.sizes[flip]).astype(np.int64)
        return self.lookup.get(tuple(child.tolist()))


def _default_mutation_rate(space, rate):
    if rate is not None:
        return float(rate)
    # 1/n_options, capped so single-option spaces keep selection pressure
    return min(1.0 / max(len(space.options), 1), 0.5)


def _random_unmeasured(ev: Evaluator, rng) -> int:
    pool = ev.unmeasured()
    return int(pool[rng.integers(len(pool))])


def _initial_population(ev: Evaluator, size: int, rng) -> list[int]:
    n = min(size, ev.budget, len(ev.space.configurations))
    pop = [int(i) for i in rng.choice(len(ev.space.configurations), size=n, replace=False)]
    for i in pop:
        ev.measure(i)
    return pop


class GeneticSampler(BaseSampler):
    """Single-objective generational GA with tournament selection and elitism.

    Every distinct configuration the GA evaluates is part of the outcome; the
    run stops as soon as ``k`` distinct evaluations have been spent.
    """

    name = "genetic"
    requires_oracle = True

    def __init__(self, population_size=10, tournament_size=2, crossover_rate=0.9, mutation_rate=None,
                 elitism=1, max_stall=50, random_state=None):
        self.population_size = population_size
        self.tournament_size = tournament_size
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.elitism = elitism
        self.max_stall = max_stall
        self.random_state = random_state

    def _min_budget(self, space):
        return min(4, space.cardinality)

    def _tournament(self, pop, fitness, rng):
        picks = rng.integers(len(pop), size=self.tournament_size)
        best = min(picks, key=lambda p: (fitness[pop[p]], p))
        return pop[best]

    def _sample(self, space, k, oracle, objectives, rng):
        ev = Evaluator(space, oracle, objectives, k)
        var = _Variation(space, self.crossover_rate, _default_mutation_rate(space, self.mutation_rate), rng)
        pop = _initial_population(ev, self.population_size, rng)
        fitness = {i: float(ev.values[i][0]) for i in pop}
        means, bests = [float(np.mean([fitness[i] for i in pop]))], [min(fitness[i] for i in pop)]
        stall = 0
        while not ev.done:
            elite = sorted(pop, key=lambda i: (fitness[i], i))[: self.elitism]
            offspring = []
            while len(offspring) < len(pop) - len(elite) and not ev.done:
                child = var.breed(self._tournament(pop, fitness, rng), self._tournament(pop, fitness, rng))
                if child is None:
                    stall += 1
                elif child in ev:
                    offspring.append(child)
                    stall += 1
                else:
                    ev.measure(child)
                    fitness[child] = float(ev.values[child][0])
                    offspring.append(child)
                    stall = 0
                if stall > self.max_stall * self.population_size:
                    child = _random_unmeasured(ev, rng)
                    ev.measure(child)
                    fitness[child] = float(ev.values[child][0])
                    offspring.append(child)
                    stall = 0
            if len(offspring) < len(pop) - len(elite):
                break
            pop = elite + offspring
            means.append(float(np.mean([fitness[i] for i in pop])))
            bests.append(min(fitness[i] for i in pop))
        meta = {"generation_means": means, "generation_best": bests}
        return ev.outcome(meta)


def _random_best(score: np.ndarray, rng) -> int:
    # tree surrogates predict whole leaves alike; a fixed argmin would walk the enumeration order
    best = np.flatnonzero(score >= score.max() - 1e-12 * max(1.0, abs(score.max())))
    return int(rng.choice(best))


class _ModelBasedSampler(BaseSampler):
    requires_oracle = True

    def _min_budget(self, space):
        return 1

    def _acquire(self, X_train, y_train, X_pool, rng) -> int:  # pragma: no cover
        raise NotImplementedError

    def _sample(self, space, k, oracle, objectives, rng):
        ev = Evaluator(space, oracle, objectives, k)
        X = encoded_space(space)
        n_init = min(self.n_init, k)
        for i in rng.choice(len(X), size=n_init, replace=False):
            ev.measure(int(i))
        steps = 0
        while not ev.done:
            idx, vals = ev.matrix()
            pool = ev.unmeasured()
            pick = pool[self._acquire(X[idx], vals[:, 0], X[pool], rng)]
            ev.measure(int(pick))
            steps += 1
        return ev.outcome({"model_steps": steps, "n_init": n_init})


class FlashSampler(_ModelBasedSampler):
    """Sequential model-based sampling: measure the configuration predicted best."""

    name = "flash"

    def __init__(self, n_init=5, surrogate=None, random_state=None):
        self.n_init = n_init
        self.surrogate = surrogate
        self.random_state = random_state

    def _acquire(self, X_train, y_train, X_pool, rng):
        model = clone(self.surrogate) if self.surrogate is not None else RegressionTree(max_depth=4)
        model.fit(X_train, y_train)
        return _random_best(-model.predict(X_pool), rng)


class CoMSASampler(_ModelBasedSampler):
    """Uncertainty sampling: measure where a bootstrap ensemble of trees disagrees most."""

    name = "comsa"

    def __init__(self, n_init=5, n_estimators=10, max_depth=4, random_state=None):
        self.n_init = n_init
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.random_state = random_state

    def uncertainty(self, X_train, y_train, X_pool, rng) -> np.ndarray:
        preds = np.empty((self.n_estimators, len(X_pool)))
        n = len(y_train)
        for b in range(self.n_estimators):
            rows = rng.integers(n, size=n)
            tree = RegressionTree(max_depth=self.max_depth).fit(X_train[rows], y_train[rows])
            preds[b] = tree.predict(X_pool)
        return preds.std(axis=0)

    def _acquire(self, X_train, y_train, X_pool, rng):
        return _random_best(self.uncertainty(X_train, y_train, X_pool, rng), rng)


def das_dennis(n_objectives: int, n_divisions: int) -> np.ndarray:
    """Uniform reference directions on the unit simplex (C(m+p-1, p) of them)."""
    m, p = n_objectives, n_divisions
    dirs = []
    for bars in combinations(range(p + m - 1), m - 1):
        parts, prev = [], -1
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(p + m - 2 - prev)
        dirs.append(parts)
    return np.array(dirs, dtype=float) / p


def default_divisions(n_objectives: int, population_size: int) -> int:
    p = 1
    while math.comb(n_objectives + p - 1, p) < population_size:
        p += 1
    return p


def _normalize(F: np.ndarray) -> np.ndarray:
    ideal = F.min(axis=0)
    Fp = F - ideal
    m = F.shape[1]
    extremes = []
    for j in range(m):
        w = np.full(m, 1e-6)
        w[j] = 1.0
        extremes.append(Fp[np.argmin(np.max(Fp / w, axis=1))])
    E = np.array(extremes)
    worst = Fp.max(axis=0)
    try:
        b = np.linalg.solve(E, np.ones(m))
        intercepts = 1.0 / b
        if not np.all(np.isfinite(intercepts)) or np.any(intercepts <= 1e-10):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        intercepts = worst
    intercepts = np.where(intercepts > 1e-10, intercepts, 1.0)
    return Fp / intercepts


def _associate(Fn, ref_dirs):
    unit = ref_dirs / np.linalg.norm(ref_dirs, axis=1, keepdims=True)
    proj = Fn @ unit.T
    dist = np.sqrt(np.maximum(np.sum(Fn**2, axis=1)[:, None] - proj**2, 0.0))
    nearest = np.argmin(dist, axis=1)
    return nearest, dist[np.arange(len(Fn)), nearest]


def nsga3_select(F: np.ndarray, n_select: int, ref_dirs: np.ndarray, rng) -> tuple[np.ndarray, bool]:
    """NSGA-III environmental selection on minimization values ``F``.

    Returns the selected row indices and whether reference-point niching was
    needed to split the last front.
    """
    fronts = non_dominated_sort(F)
    chosen: list[int] = []
    last = None
    for front in fronts:
        if len(chosen) + len(front) <= n_select:
            chosen.extend(front)
            if len(chosen) == n_select:
                return np.array(chosen), False
        else:
            last = front
            break
    if last is None:
        return np.array(chosen), False
    pool = np.array(chosen + list(last))
    Fn = _normalize(F[pool])
    niche, dist = _associate(Fn, ref_dirs)
    n_chosen = len(chosen)
    counts = np.bincount(niche[:n_chosen], minlength=len(ref_dirs))
    cand = list(range(n_chosen, len(pool)))
    active = np.ones(len(ref_dirs), dtype=bool)
    while len(chosen) < n_select:
        low = counts[active].min()
        js = np.flatnonzero(active & (counts == low))
        j = int(js[rng.integers(len(js))])
        members = [c for c in cand if niche[c] == j]
        if not members:
            active[j] = False
            continue
        if counts[j] == 0:
            pick = min(members, key=lambda c: (dist[c], c))
        else:
            pick = members[rng.integers(len(members))]
        chosen.append(int(pool[pick]))
        cand.remove(pick)
        counts[j] += 1
    return np.array(chosen), True


class NSGA3Sampler(BaseSampler):
    """NSGA-III over the configuration space; every distinct evaluation is kept."""

    name = "nsga3"
    requires_oracle = True
    multi_objective = True

    def __init__(self, population_size=10, crossover_rate=0.9, mutation_rate=None, n_divisions=None,
                 max_stall=50, random_state=None):
        self.population_size = population_size
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.n_divisions = n_divisions
        self.max_stall = max_stall
        self.random_state = random_state

    def _min_budget(self, space):
        return min(self.population_size, space.cardinality)

    def _sample(self, space, k, oracle, objectives, rng):
        ev = Evaluator(space, oracle, objectives, k)
        m = len(objectives)
        p = self.n_divisions or default_divisions(m, self.population_size)
        ref_dirs = das_dennis(m, p)
        var = _Variation(space, self.crossover_rate, _default_mutation_rate(space, self.mutation_rate), rng)
        pop = _initial_population(ev, self.population_size, rng)
        generations = niching_calls = 0
        while not ev.done:
            ranks = {}
            for r, front in enumerate(non_dominated_sort(np.array([ev.values[i] for i in pop]))):
                for f in front:
                    ranks[pop[f]] = r

            def tournament():
                a, b = rng.integers(len(pop), size=2)
                return pop[a] if (ranks[pop[a]], a) <= (ranks[pop[b]], b) else pop[b]

            members = set(pop)
            offspring, stall = [], 0
            while len(offspring) < len(pop) and not ev.done:
                child = var.breed(tournament(), tournament())
                if child is None or child in members:
                    stall += 1
                    if stall > self.max_stall * self.population_size:
                        child = _random_unmeasured(ev, rng)
                    else:
                        continue
                stall = 0
                ev.measure(child)
                offspring.append(child)
                members.add(child)
            union = pop + offspring
            selected, niched = nsga3_select(np.array([ev.values[i] for i in union]),
                                            min(self.population_size, len(union)), ref_dirs, rng)
            niching_calls += int(niched)
            pop = [union[i] for i in selected]
            generations += 1
        idx, vals = ev.matrix()
        ranks = np.empty(len(idx), dtype=int)
        for r, front in enumerate(non_dominated_sort(vals)):
            ranks[front] = r
        meta = {
            "generations": generations,
            "niching_calls": niching_calls,
            "reference_directions": len(ref_dirs),
            "front_ranks": ranks.tolist(),
        }
        return ev.outcome(meta)


def sample_random(space, k, seed=None) -> SamplerOutcome:
    return RandomSampler().sample(space, k, seed=seed)


def sample_nsbs(space, k, seed=None) -> SamplerOutcome:
    return NSBSSampler().sample(space, k, seed=seed)


def sample_genetic(space, k, seed, oracle, objective, **params) -> SamplerOutcome:
    return GeneticSampler(**params).sample(space, k, oracle, objective, seed=seed)


def sample_flash(space, k, seed, oracle, objective, **params) -> SamplerOutcome:
    return FlashSampler(**params).sample(space, k, oracle, objective, seed=seed)


def sample_comsa(space, k, seed, oracle, objective, **params) -> SamplerOutcome:
    return CoMSASampler(**params).sample(space, k, oracle, objective, seed=seed)


def sample_nsga3(space, k, seed, oracle, objectives, **params) -> SamplerOutcome:
    return NSGA3Sampler(**params).sample(space, k, oracle, objectives, seed=seed)
