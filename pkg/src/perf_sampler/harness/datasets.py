"""Measured datasets: CSV ingestion, synthetic landscapes and the bundled system fixtures."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config_space import (BOOLEAN, CATEGORICAL, NUMERIC, ConfigOption, ConfigSpace, Configuration,
                            _scalar_table, load_space, prune_space, value_text)
from ..exceptions import DuplicateRow, HeaderMismatch, IncompleteDataset, InadmissibleValue, NonFiniteMetric
from ..sampling import ObjectiveSpec

METRIC_PREFIX = "metric:"


@dataclass
class MeasuredDataset:
    """One metric row per configuration of ``space``, in enumeration order."""

    space: ConfigSpace
    values: np.ndarray
    metrics: ObjectiveSpec
    provenance: dict = field(default_factory=dict)
    parent: MeasuredDataset | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, len(self.metrics))
        if len(self.values) != self.space.cardinality:
            raise IncompleteDataset(f"{len(self.values)} rows for a space of {self.space.cardinality}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteMetric("metric values must be finite")

    def __len__(self):
        return len(self.values)

    @property
    def name(self) -> str:
        return str(self.provenance.get("system", "dataset"))

    def metric(self, name: str) -> np.ndarray:
        return self.values[:, self.metrics.names.index(name)]

    def row(self, cfg) -> dict:
        i = self.space.index_of(cfg)
        return {m: float(v) for m, v in zip(self.metrics.names, self.values[i])}

    def oracle(self, cfg) -> dict:
        """Measurement lookup for a configuration of this dataset's space."""
        return self.row(self.space.restrict(cfg) if self.space.dropped else cfg)

    def pruned_view(self, pruned: ConfigSpace) -> MeasuredDataset:
        """Rows of this dataset whose dropped options sit at the pinned defaults."""
        idx = [self.space.index_of(pruned.complete(c)) for c in pruned.configurations]
        prov = dict(self.provenance, mode="pruned")
        return MeasuredDataset(pruned, self.values[idx], self.metrics, prov, parent=self)

    # -- CSV -------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.space.names, *(METRIC_PREFIX + m for m in self.metrics.names)])
        for cfg, vals in zip(self.space.configurations, self.values):
            w.writerow([*(value_text(cfg[n]) for n in self.space.names), *(repr(float(v)) for v in vals)])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def load_dataset(csv_path, space_path, directions: Mapping | Sequence | None = None,
                 system: str | None = None) -> MeasuredDataset:
    """Read a dataset CSV (option columns then ``metric:``-prefixed columns) against a space file."""
    space = space_path if isinstance(space_path, ConfigSpace) else load_space(space_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise HeaderMismatch(f"{csv_path}: empty file") from None
        opt_cols = [h for h in header if not h.startswith(METRIC_PREFIX)]
        metric_cols = [h[len(METRIC_PREFIX):] for h in header if h.startswith(METRIC_PREFIX)]
        if header != opt_cols + [METRIC_PREFIX + m for m in metric_cols]:
            raise HeaderMismatch("option columns must precede all metric columns")
        if sorted(opt_cols) != sorted(space.names):
            raise HeaderMismatch(f"CSV options {opt_cols} do not match space options {list(space.names)}")
        if not metric_cols:
            raise HeaderMismatch("no metric columns")
        if isinstance(directions, Mapping):
            dirs = tuple(directions.get(m, "min") for m in metric_cols)
        else:
            dirs = tuple(directions) if directions else ()
        metrics = ObjectiveSpec(tuple(metric_cols), dirs)
        values = np.full((space.cardinality, len(metric_cols)), np.nan)
        seen = np.zeros(space.cardinality, dtype=bool)
        opts = [space.option(n) for n in opt_cols]
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise HeaderMismatch(f"line {line}: {len(rec)} fields, expected {len(header)}")
            try:
                cfg = Configuration({o.name: o.parse_value(t) for o, t in zip(opts, rec)})
            except InadmissibleValue as exc:
                raise IncompleteDataset(f"line {line}: {exc}") from None
            try:
                i = space.index_of(cfg)
            except Exception:
                raise IncompleteDataset(f"line {line}: configuration not in the space") from None
            if seen[i]:
                raise DuplicateRow(f"line {line}: duplicate configuration {cfg!r}")
            try:
                row = [float(t) for t in rec[len(opt_cols):]]
            except ValueError as exc:
                raise NonFiniteMetric(f"line {line}: {exc}") from None
            if not all(math.isfinite(v) for v in row):
                raise NonFiniteMetric(f"line {line}: non-finite metric value")
            values[i] = row
            seen[i] = True
    if not seen.all():
        raise IncompleteDataset(f"{int((~seen).sum())} of {space.cardinality} configurations have no row")
    prov = {"system": system or Path(csv_path).stem, "mode": "pruned" if space.dropped else "full"}
    return MeasuredDataset(space, values, metrics, prov)


# -- synthetic landscapes ----------------------------------------------

@dataclass(frozen=True)
class LandscapeSpec:
    """Seeded additive landscape with pairwise interactions and fixed per-row noise.

    Numeric and boolean options enter through their min-max scaled value;
    categorical options through a seeded score per level. Insensitive options
    contribute exactly zero. About half the sensitive options are shared
    between the two metrics with opposite signs so the metrics trade off.
    """

    options: tuple
    sensitive: tuple
    interactions: tuple = ()
    noise: float = 0.0
    seed: int = 0
    metrics: tuple = ("metric1", "metric2")
    directions: tuple = ("min", "min")
    offsets: tuple = (20.0, 10.0)
    system: str = "synthetic"


def _feature(opt: ConfigOption, rng) -> np.ndarray:
    if opt.kind == CATEGORICAL:
        return rng.uniform(-1.0, 1.0, size=len(opt.values))
    return _scalar_table(opt)


def synth_landscape(spec: LandscapeSpec) -> MeasuredDataset:
    space = spec.options if isinstance(spec.options, ConfigSpace) else ConfigSpace(tuple(spec.options))
    names = set(space.names)
    unknown = [s for s in spec.sensitive if s not in names]
    if unknown:
        raise ValueError(f"sensitive options not in the space: {unknown}")
    rng = np.random.default_rng(spec.seed)
    m = len(spec.metrics)
    idx = space.index_matrix
    pos = {n: j for j, n in enumerate(space.names)}
    feats = {}
    for opt in space.options:
        table = _feature(opt, rng)
        feats[opt.name] = table[idx[:, pos[opt.name]]]
    offsets = (list(spec.offsets) + [10.0] * m)[:m]
    y = np.tile(np.asarray(offsets, dtype=float), (len(idx), 1))
    for k, name in enumerate(spec.sensitive):
        w = rng.uniform(1.0, 5.0, size=m) * rng.choice([-1.0, 1.0], size=m)
        if m > 1 and k % 2 == 0:
            w[1] = -w[0]
        y += feats[name][:, None] * w[None, :]
    for a, b in spec.interactions:
        if a not in spec.sensitive or b not in spec.sensitive:
            raise ValueError(f"interaction ({a}, {b}) involves an insensitive option")
        w = rng.uniform(1.0, 3.0, size=m) * rng.choice([-1.0, 1.0], size=m)
        y += (feats[a] * feats[b])[:, None] * w[None, :]
    if spec.noise > 0:
        y += rng.normal(0.0, spec.noise, size=y.shape)
    metrics = ObjectiveSpec(tuple(spec.metrics), (tuple(spec.directions) + ("min",) * m)[:m])
    return MeasuredDataset(space, y, metrics, {"system": spec.system, "mode": "full", "seed": spec.seed})


# -- bundled systems (cardinalities of the four subject systems) --------------

INSENSITIVE_NOTE = "This parameter does not affect performance."


def _num(name, values, desc, default=None):
    return ConfigOption(name, NUMERIC, tuple(values), desc, default=default)


def _cat(name, values, desc, default=None):
    return ConfigOption(name, CATEGORICAL, tuple(values), desc, default=default)


def _flag(name, desc):
    return ConfigOption(name, BOOLEAN, (False, True), desc, default=False)


def _lrzip():
    return (
        _cat("algorithm", ("-b", "-g", "-l", "-n", "-z"),
             "Specifies the compression algorithm. Available options include: -g (Gzip, balanced speed), "
             "-l (LZO, ultra fast), -z (ZPAQ, highest ratio but extremely slow).", default="-b"),
        _num("-w", (1, 21, 41, 61, 81), "Compression window size in hundreds of MB; larger windows find "
             "more redundancy but need more memory.", default=21),
        _num("-p", (1, 2, 3, 4), "Number of processor threads used for compression.", default=2),
        _num("-L", (8, 9), "Compression level; higher levels compress harder and run slower.", default=9),
        _num("-N", (-20, -10, 0, 5, 10, 19), "Sets process priority (nice value from -20 to 19). "
             "This parameter does not affect compression speed or ratio.", default=0),
    ), ("Compression Time", "Max Memory"), ("min", "min")


def _javagc():
    return (
        _cat("GC", ("Serial", "Parallel", "ConcMarkSweep", "G1"), "Garbage collector implementation; "
             "collectors trade throughput against pause length.", default="G1"),
        _num("NewRatio", (1, 2, 3, 4, 5), "Ratio of old to young generation size.", default=2),
        _cat("Xlog:gc", ("off", "error", "info", "debug"), "Level of GC event logging written to the "
             "console. " + INSENSITIVE_NOTE, default="off"),
        _num("SurvivorRatio", (2, 4, 6, 8, 10, 12), "Ratio of eden to survivor space size.", default=8),
        _num("MaxTenuringThreshold", tuple(range(13)), "Number of young collections an object survives "
             "before promotion.", default=6),
    ), ("Collection Time", "Average Pause Time"), ("min", "min")


def _sqlite():
    flags = ("automatic_index", "cache_spill", "cell_size_check", "count_changes", "foreign_keys",
             "fullfsync", "query_only", "recursive_triggers", "secure_delete")
    return (
        _num("user_version", (0, 1, 2, 3, 4, 5), "Integer stored in the database header for use by the "
             "application. " + INSENSITIVE_NOTE, default=0),
        _cat("synchronous", ("OFF", "NORMAL", "FULL"), "How aggressively the database syncs to disk.",
             default="FULL"),
        *(_flag(f, f"Enables the {f.replace('_', ' ')} pragma.") for f in flags),
    ), ("Response Time", "Max Memory"), ("min", "min")


def _x264():
    flags = ("--no-cabac", "--no-mbtree", "--no-fast-pskip", "--no-weightb", "--8x8dct", "--mixed-refs",
             "--no-deblock")
    return (
        _cat("--me", ("dia", "hex", "umh"), "Motion estimation method.", default="hex"),
        _num("--subme", (1, 5, 9), "Subpixel motion estimation quality.", default=5),
        _num("--ref", (1, 3, 5), "Number of reference frames.", default=3),
        *(_flag(f, f"Toggles the {f.lstrip('-')} encoder feature.") for f in flags),
        _cat("--log-level", ("none", "error", "warning", "info"), "Verbosity of console messages. "
             + INSENSITIVE_NOTE, default="info"),
    ), ("Encoding Time", "PSNR"), ("min", "max")


SYSTEMS = {"lrzip": _lrzip, "javagc": _javagc, "sqlite": _sqlite, "x264": _x264}


def system_space(system: str) -> ConfigSpace:
    options, _, _ = SYSTEMS[system]()
    return ConfigSpace(options)


def system_docs(system: str) -> list[ConfigOption]:
    """Documentation entries (name, description, default) for a bundled system."""
    return [ConfigOption(o.name, o.kind, (), o.description, default=o.default) for o in system_space(system).options]


def insensitive_options(space_or_docs) -> list[str]:
    opts = space_or_docs.options if isinstance(space_or_docs, ConfigSpace) else space_or_docs
    return [o.name for o in opts if "does not affect" in o.description.lower()]


def system_pruned_space(system: str) -> ConfigSpace:
    space = system_space(system)
    drop = insensitive_options(space)
    return prune_space(space, [n for n in space.names if n not in drop],
                       {n: space.option(n).default for n in drop})


def system_dataset(system: str, seed: int = 0, noise: float = 0.0) -> MeasuredDataset:
    """Synthetic measurements for a bundled system; documented-insensitive options have no effect."""
    options, metrics, directions = SYSTEMS[system]()
    space = ConfigSpace(options)
    drop = set(insensitive_options(space))
    sensitive = tuple(n for n in space.names if n not in drop)
    pairs = tuple(zip(sensitive[:2], sensitive[1:3]))
    spec = LandscapeSpec(space, sensitive, pairs, noise, seed, metrics, directions, system=system)
    return synth_landscape(spec)


def random_landscape(n_options: int = 8, insensitive_fraction: float = 0.5, n_interactions: int = 2,
                     noise: float = 0.0, seed: int = 0, levels: int = 4,
                     metrics=("metric1", "metric2"), directions=("min", "min")) -> MeasuredDataset:
    """Synthetic system whose options cycle through numeric, categorical and boolean kinds.

    The last ``round(insensitive_fraction * n_options)`` options are documented
    as insensitive and contribute nothing; their default is their first value.
    """
    if n_options < 1:
        raise ValueError("need at least one option")
    n_insens = int(round(insensitive_fraction * n_options))
    if not 0 <= n_insens < n_options:
        raise ValueError("at least one option must be sensitive")
    options = []
    for j in range(n_options):
        name = f"o{j}"
        desc = f"Synthetic option {j}."
        if j >= n_options - n_insens:
            desc += " " + INSENSITIVE_NOTE
        kind = j % 3
        if kind == 0:
            options.append(_num(name, tuple(range(1, levels + 1)), desc, default=1))
        elif kind == 1:
            vals = tuple(f"v{i}" for i in range(max(2, levels - 1)))
            options.append(_cat(name, vals, desc, default=vals[0]))
        else:
            options.append(_flag(name, desc))
    sensitive = tuple(o.name for o in options[: n_options - n_insens])
    pairs = tuple(zip(sensitive, sensitive[1:]))[:n_interactions]
    spec = LandscapeSpec(tuple(options), sensitive, pairs, noise, seed, tuple(metrics), tuple(directions),
                         system="synthetic")
    return synth_landscape(spec)


def pruned_space_of(dataset: MeasuredDataset) -> ConfigSpace:
    """Space with the documented-insensitive options pinned to their defaults."""
    space = dataset.space
    drop = insensitive_options(space)
    return prune_space(space, [n for n in space.names if n not in drop],
                       {n: space.option(n).default for n in drop})
