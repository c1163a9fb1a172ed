"""Evaluation protocol: sample k configurations, train per metric, score RMSE on the rest.

Each (sampler, budget, repetition) unit draws with seed ``base + r``, so adding
repetitions never changes earlier ones. Models are trained on the encoded
full-space vectors of the k sampled configurations and tested on every other
configuration of the full dataset.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from ..baseline_samplers import (CoMSASampler, FlashSampler, GeneticSampler, NSBSSampler, NSGA3Sampler,
                                 RandomSampler)
from ..config_space import encoded_space, load_space
from ..exceptions import SpecError
from ..llm4perf import LLM4PerfSampler
from ..llm_gateway import LiveEndpoint, MockScript
from ..mobo import EHVISampler, TSEMOSampler
from ..perf_models import MODEL_FACTORIES, rmse
from .datasets import (SYSTEMS, MeasuredDataset, load_dataset, pruned_space_of, random_landscape,
                       system_dataset)
from .mock_expert import SyntheticExpert
from .stats import cliffs_delta, improvement_pct, markers, wilcoxon_signed_rank

log = logging.getLogger(__name__)

SAMPLERS = {
    "random": RandomSampler,
    "nsbs": NSBSSampler,
    "genetic": GeneticSampler,
    "flash": FlashSampler,
    "comsa": CoMSASampler,
    "nsga3": NSGA3Sampler,
    "ehvi": EHVISampler,
    "tsemo": TSEMOSampler,
    "llm4perf": LLM4PerfSampler,
}
# Samplers that never look at measurements: one draw serves every metric.
OBLIVIOUS = ("random", "nsbs")
DEFAULT_BUDGETS = (10, 20, 30, 40, 50, 60, 70)
MODELS = ("gbt", "fnn")


@dataclass(frozen=True)
class SamplerEntry:
    name: str
    params: dict = field(default_factory=dict)
    label: str = ""

    @property
    def key(self) -> str:
        return self.label or self.name


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a run needs; serializable to a single JSON object."""

    dataset: dict
    samplers: tuple
    budgets: tuple = DEFAULT_BUDGETS
    repetitions: int = 10
    seed: int = 0
    models: tuple = MODELS
    model_params: dict = field(default_factory=dict)
    space_mode: str = "full"
    reference: str = "nsga3"
    candidate: str | None = None
    llm: str | None = "auto"
    n_jobs: int = 1
    keep_predictions: bool = False
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if not isinstance(self.dataset, Mapping):
            raise SpecError("dataset must be an object")
        entries = []
        for s in self.samplers:
            if isinstance(s, str):
                s = SamplerEntry(s)
            elif isinstance(s, Mapping):
                unknown = set(s) - {"name", "params", "label"}
                if unknown or "name" not in s:
                    raise SpecError(f"bad sampler entry {dict(s)!r}")
                s = SamplerEntry(str(s["name"]), dict(s.get("params") or {}), str(s.get("label") or ""))
            if not isinstance(s, SamplerEntry) or s.name not in SAMPLERS:
                raise SpecError(f"unknown sampler {getattr(s, 'name', s)!r}; choose from {sorted(SAMPLERS)}")
            entries.append(s)
        if not entries:
            raise SpecError("at least one sampler is required")
        keys = [e.key for e in entries]
        if len(set(keys)) != len(keys):
            raise SpecError(f"duplicate sampler labels {keys}")
        object.__setattr__(self, "samplers", tuple(entries))
        budgets = tuple(self.budgets)
        if not budgets or any(not isinstance(b, int) or isinstance(b, bool) or b < 1 for b in budgets):
            raise SpecError(f"budgets must be positive integers, got {list(budgets)}")
        if list(budgets) != sorted(set(budgets)):
            raise SpecError(f"budgets must be strictly ascending, got {list(budgets)}")
        object.__setattr__(self, "budgets", budgets)
        if not isinstance(self.repetitions, int) or self.repetitions < 1:
            raise SpecError("repetitions must be a positive integer")
        models = tuple(self.models)
        if not models or any(m not in MODELS for m in models) or len(set(models)) != len(models):
            raise SpecError(f"models must be a non-empty subset of {list(MODELS)}")
        object.__setattr__(self, "models", models)
        if self.space_mode not in ("full", "pruned"):
            raise SpecError("space_mode must be 'full' or 'pruned'")
        if self.candidate is None:
            cand = next((e.key for e in entries if e.name == "llm4perf"), None)
            object.__setattr__(self, "candidate", cand)

    @classmethod
    def from_json(cls, obj: Mapping, base_dir=".") -> ExperimentSpec:
        fields = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(obj) - fields
        if unknown:
            raise SpecError(f"unknown spec fields {sorted(unknown)}")
        for required in ("dataset", "samplers"):
            if required not in obj:
                raise SpecError(f"spec lacks {required!r}")
        try:
            return cls(**dict(obj), base_dir=str(base_dir))
        except TypeError as exc:
            raise SpecError(str(exc)) from None

    @classmethod
    def load(cls, path) -> ExperimentSpec:
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise SpecError(f"spec file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(obj, Mapping):
            raise SpecError(f"{path}: spec must be a JSON object")
        return cls.from_json(obj, path.parent)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        out["budgets"] = list(self.budgets)
        out["models"] = list(self.models)
        out["samplers"] = [{"name": e.name, "params": e.params, **({"label": e.label} if e.label else {})}
                           for e in self.samplers]
        return out

    def digest(self) -> str:
        """Hex prefix of the hash of the canonical spec JSON."""
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


# -- dataset references ---------------------------------------------------

def resolve_dataset(spec: ExperimentSpec) -> tuple[MeasuredDataset, object]:
    """(full dataset, pruned space) for the spec's dataset reference."""
    ref = dict(spec.dataset)
    if "system" in ref:
        if ref["system"] not in SYSTEMS:
            raise SpecError(f"unknown system {ref['system']!r}; choose from {sorted(SYSTEMS)}")
        data = system_dataset(ref["system"], int(ref.get("seed", 0)), float(ref.get("noise", 0.0)))
    elif "synth" in ref:
        params = dict(ref["synth"] or {})
        try:
            data = random_landscape(**params)
        except TypeError as exc:
            raise SpecError(f"bad synth parameters: {exc}") from None
    elif "csv" in ref and "space" in ref:
        for key in ("csv", "space"):
            if not spec.resolve(ref[key]).exists():
                raise SpecError(f"dataset file not found: {spec.resolve(ref[key])}")
        data = load_dataset(spec.resolve(ref["csv"]), spec.resolve(ref["space"]), ref.get("directions"),
                            ref.get("name"))
    else:
        raise SpecError("dataset needs 'system', 'synth', or both 'csv' and 'space'")
    if "pruned_space" in ref:
        pruned = load_space(spec.resolve(ref["pruned_space"]))
    else:
        pruned = pruned_space_of(data)
    return data, pruned


def make_backend(spec: ExperimentSpec, entry: SamplerEntry, space, seed: int):
    """LLM backend for an llm4perf entry: a mock script, a live endpoint, or the synthetic expert."""
    llm = entry.params.get("llm", spec.llm)
    if llm in (None, "auto"):
        return SyntheticExpert(space, seed=seed)
    if isinstance(llm, Mapping):
        return LiveEndpoint(**llm)
    path = spec.resolve(llm)
    if not path.exists():
        raise SpecError(f"mock script not found: {path}")
    return MockScript.load(path)


def _build_sampler(spec, entry, space, seed):
    params = {k: v for k, v in entry.params.items() if k != "llm"}
    cls = SAMPLERS[entry.name]
    if entry.name == "llm4perf":
        params["llm"] = make_backend(spec, entry, space, seed)
    return cls(**params)


# -- report ----------------------------------------------------------------

@dataclass
class Cell:
    system: str
    metric: str
    model: str
    budget: int
    sampler: str
    rmses: list = field(default_factory=list)
    status: str = "ok"
    error: str = ""
    improvement: float | None = None
    p_value: float | None = None
    delta: float | None = None
    markers: str = ""
    predictions: list = field(default_factory=list)

    @property
    def key(self) -> tuple:
        return (self.system, self.metric, self.model, self.budget, self.sampler)

    @property
    def mean(self) -> float | None:
        if self.status != "ok" or not self.rmses:
            return None
        return float(np.mean(self.rmses))


@dataclass
class EvalReport:
    cells: dict
    spec: ExperimentSpec
    samplers: tuple
    metrics: tuple
    system: str
    elapsed: float = 0.0

    def rows(self):
        """Cell keys grouped by (system, metric, model, budget), in spec order."""
        for metric in self.metrics:
            for model in self.spec.models:
                for budget in self.spec.budgets:
                    yield (self.system, metric, model, budget)

    @property
    def failed(self) -> list:
        return [c for c in self.cells.values() if c.status == "failed"]

    def raw_records(self):
        """One JSON-ready record per (cell, repetition)."""
        for cell in self.cells.values():
            for r, value in enumerate(cell.rmses):
                rec = {"system": cell.system, "metric": cell.metric, "model": cell.model,
                       "budget": cell.budget, "sampler": cell.sampler, "repetition": r,
                       "seed": self.spec.seed + r, "rmse": value}
                if cell.predictions:
                    rec["test_index"], rec["predictions"] = cell.predictions[r]
                yield rec
            if cell.status != "ok":
                yield {"system": cell.system, "metric": cell.metric, "model": cell.model,
                       "budget": cell.budget, "sampler": cell.sampler, "status": cell.status,
                       "error": cell.error}


# -- execution ---------------------------------------------------------------

def _draw(spec, entry, space, k, seed, data):
    """Outcomes for one unit: {metric or None: outcome}."""
    objectives = data.metrics
    if entry.name in OBLIVIOUS or SAMPLERS[entry.name].multi_objective:
        sampler = _build_sampler(spec, entry, space, seed)
        return {None: sampler.sample(space, k, data.row, objectives, seed=seed)}
    out = {}
    for name in objectives.names:
        sampler = _build_sampler(spec, entry, space, seed)
        out[name] = sampler.sample(space, k, data.row, objectives.single(name), seed=seed)
    return out


def _run_unit(spec, entry, k, r, data, pruned, X):
    """Train and score every (metric, model) pair for one (sampler, budget, repetition)."""
    seed = spec.seed + r
    space = pruned if spec.space_mode == "pruned" else data.space
    results = {}
    try:
        outcomes = _draw(spec, entry, space, k, seed, data)
    except Exception as exc:  # recorded per cell, the run continues
        log.warning("%s k=%d rep=%d failed: %s", entry.key, k, r, exc)
        return {"error": f"{type(exc).__name__}: {exc}"}
    for metric in data.metrics.names:
        outcome = outcomes.get(metric, outcomes.get(None))
        train = np.array([data.space.index_of(c) for c in outcome.full_configurations()], dtype=int)
        test = np.setdiff1d(np.arange(len(data)), train)
        y = data.metric(metric)
        for model in spec.models:
            if len(test) == 0:
                results[(metric, model)] = None
                continue
            try:
                est = MODEL_FACTORIES[model](**spec.model_params.get(model, {}))
                pred = est.fit(X[train], y[train]).predict(X[test])
                results[(metric, model)] = (float(rmse(pred, y[test])), test.tolist(), pred.tolist())
            except Exception as exc:
                results[(metric, model)] = f"{type(exc).__name__}: {exc}"
    return {"results": results}


def _annotate(report: EvalReport) -> None:
    spec = report.spec
    for row in report.rows():
        ref = report.cells.get((*row, spec.reference))
        for label in report.samplers:
            cell = report.cells[(*row, label)]
            if label == spec.reference or ref is None or ref.mean is None or cell.mean is None:
                continue
            cell.improvement = improvement_pct(ref.mean, cell.mean)
            cell.delta = cliffs_delta(ref.rmses, cell.rmses)
            if len(cell.rmses) > 1:
                cell.p_value = wilcoxon_signed_rank(ref.rmses, cell.rmses)
                cell.markers = markers(cell.p_value, cell.delta)


def run_protocol(spec: ExperimentSpec, data: MeasuredDataset | None = None, pruned=None,
                 progress=None) -> EvalReport:
    """Run every (sampler, budget, repetition) unit and aggregate cells."""
    start = time.perf_counter()
    if data is None:
        data, pruned = resolve_dataset(spec)
    elif pruned is None:
        pruned = pruned_space_of(data)
    X = encoded_space(data.space)
    units = [(e, k, r) for e in spec.samplers for k in spec.budgets for r in range(spec.repetitions)]
    if spec.n_jobs == 1:
        outputs = []
        for i, (e, k, r) in enumerate(units):
            outputs.append(_run_unit(spec, e, k, r, data, pruned, X))
            if progress:
                progress(i + 1, len(units))
    else:
        outputs = Parallel(n_jobs=spec.n_jobs)(
            delayed(_run_unit)(spec, e, k, r, data, pruned, X) for e, k, r in units)

    system = data.name
    labels = tuple(e.key for e in spec.samplers)
    cells = {}
    for metric in data.metrics.names:
        for model in spec.models:
            for k in spec.budgets:
                for label in labels:
                    c = Cell(system, metric, model, k, label)
                    cells[c.key] = c
    for (e, k, r), out in zip(units, outputs):
        for metric in data.metrics.names:
            for model in spec.models:
                cell = cells[(system, metric, model, k, e.key)]
                if cell.status == "failed":
                    continue
                res = out["results"].get((metric, model)) if "results" in out else out["error"]
                if isinstance(res, str):
                    cell.status, cell.error = "failed", res
                    cell.rmses, cell.predictions = [], []
                elif res is None:
                    cell.status = "degenerate"
                else:
                    cell.rmses.append(res[0])
                    if spec.keep_predictions:
                        cell.predictions.append((res[1], res[2]))
    report = EvalReport(cells, spec, labels, data.metrics.names, system, time.perf_counter() - start)
    _annotate(report)
    return report


def report_from_records(spec: ExperimentSpec, records) -> EvalReport:
    """Rebuild a report from raw JSON-lines records without re-running anything."""
    records = list(records)
    if not records:
        raise SpecError("no raw records to report on")
    system = records[0]["system"]
    metrics = tuple(dict.fromkeys(r["metric"] for r in records))
    labels = tuple(e.key for e in spec.samplers)
    cells = {}
    for metric in metrics:
        for model in spec.models:
            for k in spec.budgets:
                for label in labels:
                    c = Cell(system, metric, model, k, label)
                    cells[c.key] = c
    for rec in sorted((r for r in records if "rmse" in r), key=lambda r: r["repetition"]):
        cell = cells.get((rec["system"], rec["metric"], rec["model"], rec["budget"], rec["sampler"]))
        if cell is not None:
            cell.rmses.append(float(rec["rmse"]))
    for rec in records:
        if "status" in rec:
            cell = cells.get((rec["system"], rec["metric"], rec["model"], rec["budget"], rec["sampler"]))
            if cell is not None:
                cell.status, cell.error = rec["status"], rec.get("error", "")
                if cell.status == "failed":
                    cell.rmses = []
    report = EvalReport(cells, spec, labels, metrics, system)
    _annotate(report)
    return report
