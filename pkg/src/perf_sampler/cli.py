"""Command-line entry point: prune, sample, evaluate, report, sweep and synth.

Outputs go to ``<out>/<hash>/`` where the hash is taken over the effective
spec (after ``--seed``/``--mock`` overrides), so different specs never
overwrite each other. Exit codes: 0 success, 1 runtime failure, 2 usage or
spec error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

from .config_space import load_space, parse_documentation, save_space
from .exceptions import (BudgetError, DatasetError, ExtractionError, GatewayError, PerfSamplerError, SpaceError,
                         SpecError)
from .harness.datasets import SYSTEMS, random_landscape, system_dataset
from .harness.protocol import (SAMPLERS, ExperimentSpec, SamplerEntry, make_backend, report_from_records,
                               resolve_dataset, run_protocol)
from .harness.report import build_report
from .llm4perf.pipeline import filter_options
from .llm_gateway import TranscriptLog, read_transcript

log = logging.getLogger("perf_sampler")

COMMANDS = ("prune", "sample", "evaluate", "report", "sweep", "synth")
SWEEP_AXES = {"n_candidates": "batch_size", "n_generators": "n_generators"}
USAGE_ERRORS = (SpecError, BudgetError, SpaceError, DatasetError, FileNotFoundError)


def _read_spec(args) -> tuple[dict, Path]:
    if args.spec is None:
        raise SpecError(f"{args.command} needs --spec")
    path = Path(args.spec)
    if not path.exists():
        raise SpecError(f"spec file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise SpecError(f"{path}: spec must be a JSON object")
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.mock is not None:
        obj["llm"] = str(Path(args.mock).resolve())
    return obj, path.parent


def _digest(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _outdir(args, obj) -> Path:
    out = Path(args.out) / _digest({"command": args.command, **obj})
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    print(path)


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _require_file(base, obj, key) -> Path:
    if key not in obj:
        raise SpecError(f"spec lacks {key!r}")
    path = _resolve(base, obj[key])
    if not path.exists():
        raise SpecError(f"{key} file not found: {path}")
    return path


# -- commands ----------------------------------------------------------------

def cmd_prune(args) -> int:
    obj, base = _read_spec(args)
    docs = parse_documentation(_require_file(base, obj, "docs").read_text(encoding="utf-8"))
    space = load_space(_require_file(base, obj, "space"))
    exp = ExperimentSpec({}, ["llm4perf"], llm=obj.get("llm", "auto"), base_dir=str(base))
    backend = make_backend(exp, exp.samplers[0], space, int(obj.get("seed", 0)))
    out = _outdir(args, obj)
    files = [out / "pruned_space.json", out / "rationale.json", out / "transcript.jsonl"]
    try:
        pruned, rationale = filter_options(space, docs, backend, transcript=TranscriptLog(files[2]))
    except (GatewayError, ExtractionError):
        for f in files:
            f.unlink(missing_ok=True)
        raise
    save_space(pruned, files[0])
    print(files[0])
    _write(files[1], json.dumps(rationale, indent=2, ensure_ascii=False) + "\n")
    print(f"kept: {', '.join(pruned.names)}; dropped: {', '.join(o.name for o, _ in pruned.dropped) or 'none'}")
    return 0


def cmd_sample(args) -> int:
    obj, base = _read_spec(args)
    for key in ("sampler", "dataset", "budget"):
        if key not in obj:
            raise SpecError(f"spec lacks {key!r}")
    if obj["sampler"] not in SAMPLERS:
        raise SpecError(f"unknown sampler {obj['sampler']!r}; choose from {sorted(SAMPLERS)}")
    seed = int(obj.get("seed", 0))
    print(f"seed: {seed}")
    exp = ExperimentSpec(obj["dataset"], [obj["sampler"]], seed=seed, llm=obj.get("llm", "auto"),
                         space_mode=obj.get("space_mode", "full"), base_dir=str(base))
    data, pruned = resolve_dataset(exp)
    space = pruned if exp.space_mode == "pruned" else data.space
    budget = obj["budget"]
    if not isinstance(budget, int) or isinstance(budget, bool):
        raise SpecError(f"budget must be an integer, got {budget!r}")
    if budget > space.cardinality:
        raise BudgetError(f"budget {budget} exceeds the space cardinality {space.cardinality}")
    out = _outdir(args, obj)
    params = dict(obj.get("params") or {})
    entry = SamplerEntry(obj["sampler"], params)
    if entry.name == "llm4perf":
        params = {**{k: v for k, v in params.items() if k != "llm"},
                  "llm": make_backend(exp, entry, space, seed),
                  "transcript_path": str(out / "transcript.jsonl")}
        if "docs" in obj:
            docs = parse_documentation(_require_file(base, obj, "docs").read_text(encoding="utf-8"))
            params["docs"] = [d for d in docs if d.name in space.names]
    sampler = SAMPLERS[entry.name](**params)
    metrics = data.metrics
    if not sampler.requires_oracle:
        outcome = sampler.sample(space, budget, seed=seed)
    elif sampler.multi_objective:
        outcome = sampler.sample(space, budget, data.row, metrics, seed=seed)
    else:
        metric = obj.get("metric", metrics.names[0])
        if metric not in metrics.names:
            raise SpecError(f"unknown metric {metric!r}")
        outcome = sampler.sample(space, budget, data.row, metrics.single(metric), seed=seed)
    outcome.check(budget)
    if entry.name == "llm4perf":
        outcome.meta["transcript"] = "transcript.jsonl"
        print(f"iterations: {outcome.meta['batch_sizes']}")
    _write(out / "outcome.json", outcome.dumps())
    return 0


def _load_experiment(args) -> tuple[ExperimentSpec, dict]:
    obj, base = _read_spec(args)
    extra = {k: obj.pop(k) for k in ("sweep",) if k in obj}
    spec = ExperimentSpec.from_json(obj, base)
    return spec, extra


def _progress(verbose):
    if not verbose:
        return None

    def report(done, total):
        log.info("unit %d/%d", done, total)
    return report


def _emit_report(out: Path, report) -> None:
    _write(out / "report.csv", build_report(report, "csv"))
    _write(out / "report.txt", build_report(report, "text"))


def cmd_evaluate(args) -> int:
    spec, _ = _load_experiment(args)
    print(f"seed: {spec.seed}")
    out = Path(args.out) / spec.digest()
    out.mkdir(parents=True, exist_ok=True)
    report = run_protocol(spec, progress=_progress(args.verbose))
    _emit_report(out, report)
    _write(out / "raw.jsonl", build_report(report, "jsonl"))
    (out / "spec.json").write_text(json.dumps(spec.to_json(), indent=2) + "\n", encoding="utf-8")
    n_failed = len(report.failed)
    if n_failed:
        print(f"{n_failed} of {len(report.cells)} cells failed", file=sys.stderr)
    return 1 if n_failed == len(report.cells) else 0


def cmd_report(args) -> int:
    spec, _ = _load_experiment(args)
    out = Path(args.out) / spec.digest()
    raw = out / "raw.jsonl"
    if not raw.exists():
        raise SpecError(f"no raw results at {raw}; run evaluate first")
    _emit_report(out, report_from_records(spec, read_transcript(raw)))
    return 0


def cmd_sweep(args) -> int:
    spec, extra = _load_experiment(args)
    sweep = dict(extra.get("sweep") or {})
    axis = args.axis or sweep.get("axis")
    values = args.values or sweep.get("values")
    if axis not in SWEEP_AXES:
        raise SpecError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
    if not values or any(not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in values):
        raise SpecError(f"sweep values must be positive integers, got {values!r}")
    targets = [e for e in spec.samplers if e.name == "llm4perf"]
    if not targets:
        raise SpecError("sweep needs an llm4perf sampler in the spec")
    print(f"seed: {spec.seed}")
    base = spec.to_json()
    out = Path(args.out) / _digest({"command": "sweep", "spec": base, "axis": axis, "values": values})
    out.mkdir(parents=True, exist_ok=True)
    grid = io.StringIO()
    w = csv.writer(grid, lineterminator="\n")
    w.writerow(["axis", "value", "sampler", "metric", "model", "budget", "mean_rmse", "status"])
    dist = []
    for v in values:
        obj = json.loads(json.dumps(base))
        for s in obj["samplers"]:
            if s["name"] == "llm4perf":
                s["params"] = {**s["params"], SWEEP_AXES[axis]: v}
        report = run_protocol(ExperimentSpec.from_json(obj, spec.base_dir), progress=_progress(args.verbose))
        for cell in report.cells.values():
            if cell.sampler not in {e.key for e in targets}:
                continue
            mean = "" if cell.mean is None else f"{cell.mean:.6f}"
            w.writerow([axis, v, cell.sampler, cell.metric, cell.model, cell.budget, mean, cell.status])
            dist.append({"axis": axis, "value": v, "sampler": cell.sampler, "metric": cell.metric,
                         "model": cell.model, "budget": cell.budget, "rmses": cell.rmses})
    _write(out / "sweep.csv", grid.getvalue())
    _write(out / "sweep_raw.jsonl", "".join(json.dumps(d, sort_keys=True) + "\n" for d in dist))
    return 0


def cmd_synth(args) -> int:
    obj = {}
    if args.spec is not None:
        obj, _ = _read_spec(args)
    elif args.seed is not None:
        obj["seed"] = args.seed
    system = obj.pop("system", None) or args.system
    if system is not None:
        if system not in SYSTEMS:
            raise SpecError(f"unknown system {system!r}; choose from {sorted(SYSTEMS)}")
        data = system_dataset(system, int(obj.get("seed", 0)), float(obj.get("noise", 0.0)))
        key = {"system": system, **obj}
    else:
        try:
            data = random_landscape(**obj)
        except TypeError as exc:
            raise SpecError(f"bad synth parameters: {exc}") from None
        key = obj
    print(f"seed: {data.provenance.get('seed')}")
    out = Path(args.out) / _digest({"command": "synth", **key})
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "dataset.csv", data.to_csv())
    save_space(data.space, out / "space.json")
    print(out / "space.json")
    docs = [{"name": o.name, "description": o.description, "default": o.default} for o in data.space.options]
    _write(out / "docs.json", json.dumps(docs, indent=2, ensure_ascii=False) + "\n")
    meta = {"system": data.name, "metrics": list(data.metrics.names), "directions": list(data.metrics.directions)}
    _write(out / "meta.json", json.dumps(meta, indent=2) + "\n")
    return 0


HANDLERS = {"prune": cmd_prune, "sample": cmd_sample, "evaluate": cmd_evaluate, "report": cmd_report,
            "sweep": cmd_sweep, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perf-sampler", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--spec", help="JSON spec file")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="override the spec's base seed")
    parser.add_argument("--mock", help="mock script JSON used as the LLM backend")
    parser.add_argument("--verbose", "-v", action="store_true")
    parser.add_argument("--axis", choices=sorted(SWEEP_AXES), help="sweep axis")
    parser.add_argument("--values", type=int, nargs="+", help="sweep axis values")
    parser.add_argument("--system", help="bundled system for synth")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PerfSamplerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
