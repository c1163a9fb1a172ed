"""Common sampler contract: objectives, outcomes, budget checks and oracle bookkeeping."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from sklearn.base import BaseEstimator

from .config_space import ConfigSpace, Configuration, validate_configuration
from .exceptions import BudgetError

Oracle = Callable[[Configuration], Mapping[str, float]]


@dataclass(frozen=True)
class ObjectiveSpec:
    """Ordered metric names with a minimize/maximize direction each."""

    names: tuple
    directions: tuple = ()

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise ValueError("at least one objective is required")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate objective names {names}")
        directions = tuple(self.directions) or ("min",) * len(names)
        if len(directions) != len(names):
            raise ValueError("one direction per objective is required")
        norm = []
        for d in directions:
            d = str(d).lower()
            if d.startswith("min"):
                norm.append("min")
            elif d.startswith("max"):
                norm.append("max")
            else:
                raise ValueError(f"unknown direction {d!r}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "directions", tuple(norm))

    @classmethod
    def coerce(cls, objectives) -> ObjectiveSpec:
        if isinstance(objectives, ObjectiveSpec):
            return objectives
        if isinstance(objectives, str):
            return cls((objectives,))
        if isinstance(objectives, Mapping):
            return cls(tuple(objectives), tuple(objectives.values()))
        return cls(tuple(objectives))

    @property
    def signs(self) -> np.ndarray:
        return np.array([1.0 if d == "min" else -1.0 for d in self.directions])

    def single(self, name: str) -> ObjectiveSpec:
        i = self.names.index(name)
        return ObjectiveSpec((name,), (self.directions[i],))

    def __len__(self):
        return len(self.names)


@dataclass
class SamplerOutcome:
    """Exactly ``k`` distinct configurations of ``space`` plus provenance."""

    sampled: list
    space: ConfigSpace
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sampled)

    def full_configurations(self) -> list[Configuration]:
        return [self.space.complete(c) for c in self.sampled]

    def check(self, k: int | None = None) -> None:
        """Raise AssertionError if the outcome breaks the sampler contract."""
        if k is not None and len(self.sampled) != k:
            raise AssertionError(f"expected {k} configurations, got {len(self.sampled)}")
        if len(set(self.sampled)) != len(self.sampled):
            raise AssertionError("sampled configurations are not pairwise distinct")
        for cfg in self.sampled:
            verdict = validate_configuration(self.space, cfg)
            if not verdict:
                raise AssertionError(f"invalid configuration {cfg!r}: {verdict.rule}")

    def to_json(self) -> dict:
        return {
            "sampler": self.meta.get("sampler"),
            "seed": self.meta.get("seed"),
            "configurations": [c.to_dict() for c in self.full_configurations()],
            "meta": {k: v for k, v in self.meta.items() if k not in ("sampler", "seed")},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Configuration):
        return obj.to_dict()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def check_budget(space: ConfigSpace, k: int, minimum: int = 1) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise BudgetError(f"budget must be a positive integer, got {k!r}")
    if k > space.cardinality:
        raise BudgetError(f"budget {k} exceeds the space cardinality {space.cardinality}")
    if k < minimum:
        raise BudgetError(f"budget {k} is below this sampler's minimum of {minimum}")


class Evaluator:
    """Spends the measurement budget on enumeration indices of ``space``.

    Values are stored in minimization form (maximized metrics negated). Every
    distinct configuration is measured at most once.
    """

    def __init__(self, space: ConfigSpace, oracle: Oracle, objectives: ObjectiveSpec, budget: int):
        self.space = space
        self.oracle = oracle
        self.objectives = objectives
        self.budget = budget
        self.order: list[int] = []
        self.values: dict[int, np.ndarray] = {}

    @property
    def remaining(self) -> int:
        return self.budget - len(self.order)

    @property
    def done(self) -> bool:
        return len(self.order) >= self.budget

    def __contains__(self, idx) -> bool:
        return int(idx) in self.values

    def measure(self, idx: int) -> np.ndarray:
        idx = int(idx)
        if idx in self.values:
            return self.values[idx]
        if self.done:
            raise BudgetError("measurement budget exhausted")
        cfg = self.space.complete(self.space.configurations[idx])
        row = self.oracle(cfg)
        y = np.array([float(row[n]) for n in self.objectives.names]) * self.objectives.signs
        self.values[idx] = y
        self.order.append(idx)
        return y

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """(indices, values) of everything measured so far, in measurement order."""
        idx = np.array(self.order, dtype=int)
        vals = np.array([self.values[i] for i in self.order]).reshape(len(idx), len(self.objectives))
        return idx, vals

    def unmeasured(self) -> np.ndarray:
        mask = np.ones(len(self.space.configurations), dtype=bool)
        mask[self.order] = False
        return np.flatnonzero(mask)

    def outcome(self, meta: dict) -> SamplerOutcome:
        return SamplerOutcome([self.space.configurations[i] for i in self.order], self.space, meta)


class BaseSampler(BaseEstimator):
    """Base class for samplers; hyperparameters live in ``__init__`` like sklearn estimators.

    Subclasses implement ``_sample``. ``requires_oracle`` marks samplers that
    measure while sampling and ``multi_objective`` those that handle every
    metric in one run.
    """

    name = "base"
    requires_oracle = False
    multi_objective = False
    min_objectives = 2
    min_budget = 1

    def sample(self, space: ConfigSpace, k: int, oracle: Oracle | None = None,
               objectives=None, seed: int | None = None) -> SamplerOutcome:
        seed = getattr(self, "random_state", None) if seed is None else seed
        check_budget(space, k, self._min_budget(space))
        if self.requires_oracle:
            if oracle is None or objectives is None:
                raise ValueError(f"{self.name} needs an oracle and objectives")
            objectives = ObjectiveSpec.coerce(objectives)
            if self.multi_objective and len(objectives) < self.min_objectives:
                raise ValueError(f"{self.name} needs at least {self.min_objectives} objectives")
            if not self.multi_objective and len(objectives) != 1:
                raise ValueError(f"{self.name} optimizes a single metric; got {objectives.names}")
        outcome = self._sample(space, int(k), oracle, objectives, np.random.default_rng(seed))
        outcome.meta.setdefault("sampler", self.name)
        outcome.meta.setdefault("seed", seed)
        return outcome

    def _min_budget(self, space) -> int:
        return self.min_budget

    def _sample(self, space, k, oracle, objectives, rng) -> SamplerOutcome:  # pragma: no cover
        raise NotImplementedError


def as_list(x) -> list[Any]:
    if isinstance(x, (str, bytes)) or not isinstance(x, Sequence):
        return [x]
    return list(x)
