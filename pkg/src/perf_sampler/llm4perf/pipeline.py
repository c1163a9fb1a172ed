"""Option filtering, trend analysis, strategy design, parallel generation, voting and the loop."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..config_space import ConfigOption, ConfigSpace, Configuration, prune_space, value_text
from ..exceptions import (ExtractionError, GatewayError, GenerationExhausted, InadmissibleValue,
                          InvalidConfiguration)
from ..llm_gateway import ChatRequest, TranscriptLog, complete_chat, extract_structured
from ..sampling import ObjectiveSpec, SamplerOutcome, check_budget
from .prompts import PromptSet

log = logging.getLogger(__name__)

HISTORY_ROWS = 60
SENSITIVITIES = ("low", "high", "interacting")

FILTER_SCHEMA = {"keep": "string list"}
ANALYSIS_SCHEMA = {"anomalies": "array", "hypotheses": "array"}
STRATEGY_SCHEMA = {"focus_regions": "array", "deprioritized": "array"}
GENERATOR_SCHEMA = {"configurations": "array"}


# -- domain types ------------------------------------------------------

class MeasurementHistory:
    """Measured configurations with their metric values, in measurement order."""

    def __init__(self, metric_names: Sequence[str]):
        self.metric_names = tuple(metric_names)
        self.records: list[tuple[Configuration, dict, int]] = []
        self._seen: set = set()

    def add(self, cfg: Configuration, metrics: Mapping, iteration: int) -> None:
        if cfg in self._seen:
            raise ValueError(f"configuration already measured: {cfg!r}")
        if self.records and iteration < self.records[-1][2]:
            raise ValueError("iteration indices must be non-decreasing")
        missing = [m for m in self.metric_names if m not in metrics]
        if missing:
            raise ValueError(f"measurement lacks metrics {missing}")
        self.records.append((cfg, {m: float(metrics[m]) for m in self.metric_names}, int(iteration)))
        self._seen.add(cfg)

    def __len__(self):
        return len(self.records)

    def __contains__(self, cfg):
        return cfg in self._seen

    @property
    def configurations(self) -> frozenset:
        return frozenset(self._seen)

    def table(self, names: Sequence[str], max_rows: int = HISTORY_ROWS) -> str:
        """Aligned plain-text table of the most recent ``max_rows`` records."""
        if not self.records:
            return "(no measurements yet)"
        header = ["iter", *names, *self.metric_names]
        rows = [[str(it), *(value_text(cfg[n]) for n in names), *(f"{vals[m]:.6g}" for m in self.metric_names)]
                for cfg, vals, it in self.records[-max_rows:]]
        widths = [max(len(r[j]) for r in [header, *rows]) for j in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *rows]]
        skipped = len(self.records) - len(rows)
        if skipped:
            lines.insert(1, f"({skipped} earlier rows omitted)")
        return "\n".join(lines)


@dataclass(frozen=True)
class AnalysisDoc:
    narrative: str
    anomalies: tuple = ()
    hypotheses: tuple = ()

    def render(self) -> str:
        parts = [self.narrative.strip()]
        if self.anomalies:
            parts.append("Anomalies:\n" + "\n".join(f"- {t}: {n}" for t, n in self.anomalies))
        if self.hypotheses:
            parts.append("Hypotheses:\n" + "\n".join(f"- {o} ({s}): {n}" for o, s, n in self.hypotheses))
        return "\n\n".join(p for p in parts if p)

    def to_json(self) -> dict:
        return {
            "narrative": self.narrative,
            "anomalies": [{"target": t, "note": n} for t, n in self.anomalies],
            "hypotheses": [{"option": o, "sensitivity": s, "note": n} for o, s, n in self.hypotheses],
        }


@dataclass(frozen=True)
class StrategyDoc:
    narrative: str
    focus_regions: tuple = ()
    deprioritized: tuple = ()
    iteration: int = 1

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError("strategy iteration must be positive")
        overlap = {o for o, _ in self.focus_regions} & {o for o, _ in self.deprioritized}
        if overlap:
            raise ValueError(f"options both focused and deprioritized: {sorted(overlap)}")

    def render(self) -> str:
        parts = [self.narrative.strip()]
        for opt, values in self.focus_regions:
            parts.append(f"Focus: {opt} in {{{', '.join(value_text(v) for v in values)}}}")
        for opt, value in self.deprioritized:
            parts.append(f"Pinned: {opt} = {value_text(value)}")
        return "\n".join(p for p in parts if p)

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "narrative": self.narrative,
            "focus_regions": [{"option": o, "values": list(v)} for o, v in self.focus_regions],
            "deprioritized": [{"option": o, "value": v} for o, v in self.deprioritized],
        }


@dataclass(frozen=True)
class SamplingBudget:
    total: int
    batch_size: int = 7
    n_generators: int = 5

    def __post_init__(self):
        for name in ("total", "batch_size", "n_generators"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.batch_size > self.total:
            raise ValueError(f"batch size {self.batch_size} exceeds the total budget {self.total}")

    def batch_sizes(self) -> list[int]:
        full, rest = divmod(self.total, self.batch_size)
        return [self.batch_size] * full + ([rest] if rest else [])


@dataclass
class LLMBackends:
    """Backend per pipeline role; generators may differ from one another."""

    filter: object
    analyzer: object
    designer: object
    generators: tuple = field(default_factory=tuple)

    @classmethod
    def uniform(cls, backend, n_generators: int) -> LLMBackends:
        return cls(backend, backend, backend, (backend,) * n_generators)

    @classmethod
    def coerce(cls, llm, n_generators: int) -> LLMBackends:
        if isinstance(llm, LLMBackends):
            if not llm.generators:
                raise ValueError("at least one generator backend is required")
            return llm
        if isinstance(llm, Mapping):
            gens = llm.get("generators")
            if gens is None:
                gens = (llm["generator"],) * n_generators
            return cls(llm["filter"], llm["analyzer"], llm["designer"], tuple(gens))
        return cls.uniform(llm, n_generators)


@dataclass
class _Context:
    prompts: PromptSet
    transcript: TranscriptLog
    model_id: str = "mock"

    def ask(self, backend, role, iteration, system, user):
        req = ChatRequest(role, (("system", system), ("user", user)), model_id=self.model_id, iteration=iteration)
        resp = complete_chat(backend, req)
        return req, resp


def _context(prompts=None, transcript=None, model_id="mock") -> _Context:
    if not isinstance(prompts, PromptSet):
        prompts = PromptSet.load(prompts)
    return _Context(prompts, transcript if transcript is not None else TranscriptLog(), model_id)


def describe_space(space: ConfigSpace, docs: Sequence[ConfigOption] | None = None) -> str:
    """One line per option: name, kind, admissible values and description."""
    described = {d.name: d.description for d in docs or ()}
    lines = []
    for opt in space.options:
        desc = described.get(opt.name) or opt.description
        values = ", ".join(value_text(v) for v in opt.values)
        line = f"- {opt.name} ({opt.kind}; values: {values})"
        lines.append(f"{line}: {desc}" if desc else line)
    for opt, value in space.dropped:
        lines.append(f"- {opt.name} is fixed to {value_text(value)} (pruned as performance-insensitive)")
    return "\n".join(lines)


# -- operations --------------------------------------------------------

def filter_options(space: ConfigSpace, docs: Sequence[ConfigOption], llm, *, prompts=None,
                   transcript=None, model_id="mock"):
    """Ask the LLM which options matter and prune the rest; returns (pruned space, rationale).

    Options are dropped when the answer's ``keep`` list omits them; when the
    answer also carries a ``drop`` list only those are dropped. Unknown names
    are ignored and an answer that keeps nothing real leaves the space intact.
    """
    ctx = _context(prompts, transcript, model_id)
    docs = list(docs)
    documented = {d.name: d for d in docs}
    missing = [n for n in space.names if n not in documented]
    if missing:
        raise ValueError(f"options without documentation: {missing}")
    system, user = ctx.prompts.render("filter", space=describe_space(space, docs))
    req, resp = ctx.ask(llm, "filter", 0, system, user)
    ctx.transcript.append(req, resp)
    answer = extract_structured(resp.text, FILTER_SCHEMA)

    known = set(space.names)
    drop_list = answer.get("drop") if isinstance(answer.get("drop"), list) else None
    mentioned = list(answer["keep"]) + [str(n) for n in drop_list or ()]
    for name in mentioned:
        if name not in known:
            log.warning("filter answer names unknown option %r; ignored", name)
    keep = {n for n in answer["keep"] if n in known}
    if drop_list is not None:
        drop = {n for n in drop_list if n in known} - keep
    else:
        drop = (known - keep) if keep else set()
    if drop == known:
        log.warning("filter answer would drop every option; keeping the full space")
        drop = set()

    reasons = answer.get("rationale") if isinstance(answer.get("rationale"), Mapping) else {}
    rationale = {n: {"decision": "drop" if n in drop else "keep", "reason": str(reasons.get(n, ""))}
                 for n in space.names}
    defaults = {}
    for name in drop:
        opt = space.option(name)
        doc_default = documented[name].default
        if doc_default is not None and opt.is_admissible(doc_default):
            defaults[name] = doc_default
        elif opt.default is not None:
            defaults[name] = opt.default
        else:
            defaults[name] = opt.values[0]
    pruned = prune_space(space, [n for n in space.names if n not in drop], defaults)
    return pruned, rationale


def _target_names_known(target: str, space: ConfigSpace) -> bool:
    values = {value_text(v) for o in space.options for v in o.values}
    for part in target.replace("&", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if "=" in part:
            if part.split("=", 1)[0].strip() not in space:
                return False
        elif part not in space and part not in values:
            return False
    return True


def analyze_trends(history: MeasurementHistory, metrics, llm, space: ConfigSpace, *, iteration: int = 2,
                   prompts=None, transcript=None, model_id="mock") -> AnalysisDoc:
    """Ask the analyzer for anomalies and option-sensitivity hypotheses about ``history``."""
    if len(history) == 0:
        raise ValueError("trend analysis needs at least one measurement")
    metrics = ObjectiveSpec.coerce(metrics)
    ctx = _context(prompts, transcript, model_id)
    system, user = ctx.prompts.render("analyzer", space=describe_space(space),
                                      history=_history_block(history, space, metrics))
    req, resp = ctx.ask(llm, "analyzer", iteration, system, user)
    ctx.transcript.append(req, resp)
    answer = extract_structured(resp.text, ANALYSIS_SCHEMA)

    anomalies = []
    for a in answer["anomalies"]:
        if not isinstance(a, Mapping) or "target" not in a:
            continue
        target = str(a["target"])
        if not _target_names_known(target, space):
            log.warning("anomaly names an option outside the space: %r; dropped", target)
            continue
        anomalies.append((target, str(a.get("note", ""))))
    hypotheses = []
    for h in answer["hypotheses"]:
        if not isinstance(h, Mapping):
            continue
        opt, sens = str(h.get("option", "")), str(h.get("sensitivity", "")).lower()
        if opt not in space:
            log.warning("hypothesis about unknown option %r; dropped", opt)
            continue
        if sens not in SENSITIVITIES:
            log.warning("hypothesis for %r has unknown sensitivity %r; dropped", opt, sens)
            continue
        hypotheses.append((opt, sens, str(h.get("note", ""))))
    return AnalysisDoc(resp.text, tuple(anomalies), tuple(hypotheses))


def _history_block(history, space, metrics) -> str:
    dirs = ", ".join(f"{n} ({d}imize)" for n, d in zip(metrics.names, metrics.directions))
    return f"Metrics: {dirs}\n\n{history.table(space.names)}"


FIRST_ITERATION_NOTE = (
    "No measurements yet. This is the first iteration: design a coverage-first exploration "
    "strategy that spreads the batch over all values of every option, including the extreme "
    "values of numeric options."
)


def design_strategy(analysis: AnalysisDoc | None, space: ConfigSpace, remaining: int, llm, *,
                    iteration: int = 1, prompts=None, transcript=None, model_id="mock") -> StrategyDoc:
    """Ask the designer for the next batch's sampling plan."""
    if remaining < 1:
        raise ValueError("no budget left to plan for")
    ctx = _context(prompts, transcript, model_id)
    note = FIRST_ITERATION_NOTE if analysis is None else (
        analysis.render() + "\n\nRefine the strategy using this analysis.")
    system, user = ctx.prompts.render("designer", space=describe_space(space), analysis=note, n=str(remaining))
    req, resp = ctx.ask(llm, "designer", iteration, system, user)
    ctx.transcript.append(req, resp)
    answer = extract_structured(resp.text, STRATEGY_SCHEMA)

    pinned = []
    for d in answer["deprioritized"]:
        if not isinstance(d, Mapping) or str(d.get("option")) not in space:
            log.warning("deprioritized entry for unknown option %r; dropped", d)
            continue
        opt = space.option(str(d["option"]))
        try:
            pinned.append((opt.name, opt.parse_value(d.get("value"))))
        except InadmissibleValue:
            log.warning("deprioritized value %r not admissible for %s; dropped", d.get("value"), opt.name)
    pinned_names = {o for o, _ in pinned}
    focus = []
    for f in answer["focus_regions"]:
        if not isinstance(f, Mapping) or str(f.get("option")) not in space:
            log.warning("focus region on unknown option %r; dropped", f)
            continue
        opt = space.option(str(f["option"]))
        if opt.name in pinned_names:
            log.warning("option %s is both focused and deprioritized; keeping the pin", opt.name)
            continue
        raw = f.get("values", [])
        raw = raw if isinstance(raw, list) else [raw]
        vals = []
        for v in raw:
            try:
                parsed = opt.parse_value(v)
            except InadmissibleValue:
                log.warning("focus value %r not admissible for %s; dropped", v, opt.name)
                continue
            if parsed not in vals:
                vals.append(parsed)
        if vals:
            focus.append((opt.name, tuple(vals)))
    narrative = answer.get("narrative")
    narrative = narrative if isinstance(narrative, str) and narrative.strip() else resp.text
    return StrategyDoc(narrative, tuple(focus), tuple(pinned), iteration)


def generate_candidates(strategy: StrategyDoc, space: ConfigSpace, n: int, llms: Sequence, *,
                        history: MeasurementHistory | None = None, metrics=None, prompts=None,
                        transcript=None, model_id="mock", max_workers=None) -> list[list[Configuration]]:
    """Ask every generator (concurrently) for ``n`` configurations; keep the valid ones."""
    if n < 1:
        raise ValueError("generators must be asked for at least one configuration")
    if not llms:
        raise ValueError("at least one generator backend is required")
    ctx = _context(prompts, transcript, model_id)
    metrics = ObjectiveSpec.coerce(metrics or (history.metric_names if history else ("metric",)))
    hist = _history_block(history, space, metrics) if history is not None else "(no measurements yet)"
    system, user = ctx.prompts.render("generator", space=describe_space(space), history=hist,
                                      strategy=strategy.render(), n=str(n))

    def call(g):
        body = f"{user}\n\n[generator-id: {g}]"
        try:
            return ctx.ask(llms[g], "generator", strategy.iteration, system, body), None
        except GatewayError as exc:
            return None, exc

    workers = max_workers or len(llms)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(call, range(len(llms))))
    else:
        results = [call(g) for g in range(len(llms))]

    lists = []
    for g, (pair, exc) in enumerate(results):
        if pair is None:
            log.warning("generator %d failed: %s", g, exc)
            lists.append([])
            continue
        req, resp = pair
        ctx.transcript.append(req, resp)
        try:
            proposals = extract_structured(resp.text, GENERATOR_SCHEMA)["configurations"]
        except ExtractionError as exc:
            log.warning("generator %d returned no usable JSON: %s", g, exc)
            lists.append([])
            continue
        valid = []
        for p in proposals:
            try:
                valid.append(space.coerce(p))
            except InvalidConfiguration as exc:
                log.info("generator %d proposed an invalid configuration: %s", g, exc)
        lists.append(valid)
    if not any(lists):
        raise GenerationExhausted("no generator produced a valid configuration")
    return lists


def tally_votes(candidate_lists, already_measured=frozenset()) -> list[tuple[Configuration, int]]:
    """(configuration, count) pairs by descending count, ties by first appearance.

    A count is the number of generators proposing the configuration; repeats
    inside one generator's list are ignored.
    """
    counts: dict = {}
    first: dict = {}
    for g, cands in enumerate(candidate_lists):
        own = set()
        for pos, cfg in enumerate(cands):
            if cfg in already_measured or cfg in own:
                continue
            own.add(cfg)
            counts[cfg] = counts.get(cfg, 0) + 1
            first.setdefault(cfg, (g, pos))
    order = sorted(counts, key=lambda c: (-counts[c], first[c]))
    return [(c, counts[c]) for c in order]


def vote_candidates(candidate_lists, already_measured, k: int) -> list[Configuration]:
    """Top ``k`` configurations by frequency across generators, excluding measured ones."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return [c for c, _ in tally_votes(candidate_lists, already_measured)[:k]]


def run_sampling_loop(space: ConfigSpace, docs, budget: SamplingBudget, oracle, llm, objectives, *,
                      seed=None, prune=True, prompts=None, transcript=None, model_id="mock") -> SamplerOutcome:
    """Filter once, then analyze, design, generate and vote until the budget is spent.

    The outcome's space is the pruned space; ``full_configurations()`` completes
    each sample with the pinned defaults.
    """
    objectives = ObjectiveSpec.coerce(objectives)
    backends = LLMBackends.coerce(llm, budget.n_generators)
    ctx = _context(prompts, transcript, model_id)
    rng = np.random.default_rng(seed)
    docs = list(docs) if docs is not None else list(space.options)
    opts = dict(prompts=ctx.prompts, transcript=ctx.transcript, model_id=model_id)

    if prune:
        active, rationale = filter_options(space, docs, backends.filter, **opts)
    else:
        active, rationale = space, {n: {"decision": "keep", "reason": ""} for n in space.names}
    check_budget(active, budget.total)

    history = MeasurementHistory(objectives.names)
    iterations = []
    t = 0
    while len(history) < budget.total:
        t += 1
        remaining = budget.total - len(history)
        analysis = None
        if len(history):
            analysis = analyze_trends(history, objectives, backends.analyzer, active, iteration=t, **opts)
        strategy = design_strategy(analysis, active, remaining, backends.designer, iteration=t, **opts)
        k = min(budget.batch_size, remaining)
        try:
            lists = generate_candidates(strategy, active, k, backends.generators, history=history,
                                        metrics=objectives, **opts)
        except GenerationExhausted:
            log.warning("iteration %d: every generator failed; topping up at random", t)
            lists = []
        batch = vote_candidates(lists, history.configurations, k) if lists else []
        voted = len(batch)
        if voted < k:
            taken = history.configurations | set(batch)
            pool = [i for i, c in enumerate(active.configurations) if c not in taken]
            for i in rng.choice(len(pool), size=k - voted, replace=False):
                batch.append(active.configurations[pool[i]])
        for cfg in batch:
            history.add(cfg, oracle(active.complete(cfg)), t)
        iterations.append({
            "iteration": t,
            "analysis": analysis.to_json() if analysis else None,
            "strategy": strategy.to_json(),
            "batch": [c.to_dict() for c in batch],
            "voted": voted,
            "topped_up": k - voted,
        })

    meta = {
        "iterations": iterations,
        "batch_sizes": [len(it["batch"]) for it in iterations],
        "kept_options": list(active.names),
        "dropped_options": {o.name: v for o, v in active.dropped},
        "filter_rationale": rationale,
        "calls": {role: ctx.transcript.count(role) for role in ("filter", "analyzer", "designer", "generator")},
        "transcript": str(ctx.transcript.path) if ctx.transcript.path else None,
    }
    return SamplerOutcome([cfg for cfg, _, _ in history.records], active, meta)
