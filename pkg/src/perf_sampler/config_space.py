"""Configuration options, finite configuration spaces and their numeric encoding.

A :class:`ConfigSpace` is an ordered tuple of :class:`ConfigOption` objects with
optional forbidden value combinations. Pruned spaces additionally remember the
options they dropped together with the value each one is pinned to, so a
configuration sampled in the pruned space can be completed back into the full
space for measurement lookup.
"""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    CardinalityLimitExceeded,
    DuplicateOrMissingName,
    InadmissibleValue,
    InvalidConfiguration,
    SpaceError,
    UnknownOption,
)

NUMERIC = "numeric-discrete"
CATEGORICAL = "categorical"
BOOLEAN = "boolean"
KINDS = (NUMERIC, CATEGORICAL, BOOLEAN)
_KIND_ALIASES = {
    "numeric": NUMERIC,
    "numeric-discrete": NUMERIC,
    "integer": NUMERIC,
    "int": NUMERIC,
    "float": NUMERIC,
    "categorical": CATEGORICAL,
    "enum": CATEGORICAL,
    "string": CATEGORICAL,
    "boolean": BOOLEAN,
    "bool": BOOLEAN,
}

DEFAULT_ENUMERATION_LIMIT = 10**6


def _is_number(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, (bool, np.bool_))


def value_text(value) -> str:
    """Canonical text form of an option value (used in CSV files and prompts)."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _plain(value):
    # numpy scalars are not JSON serializable
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def infer_kind(values) -> str:
    if values and all(isinstance(v, (bool, np.bool_)) for v in values):
        return BOOLEAN
    if values and all(_is_number(v) for v in values):
        return NUMERIC
    return CATEGORICAL


@dataclass(frozen=True)
class ConfigOption:
    """One configuration option with its finite list of admissible values.

    ``values`` may be empty only for options read from documentation that
    still have to be completed from a dataset header; such options cannot be
    placed in a :class:`ConfigSpace`.
    """

    name: str
    kind: str = CATEGORICAL
    values: tuple = ()
    description: str = ""
    performance_sensitive: bool | None = None
    default: Any = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise DuplicateOrMissingName("option name must be a non-empty string")
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise SpaceError(f"option {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        values = tuple(_plain(v) for v in self.values)
        object.__setattr__(self, "values", values)
        seen = set()
        for v in values:
            key = (type(v) is str, v)
            if key in seen:
                raise SpaceError(f"option {self.name!r}: duplicate value {v!r}")
            seen.add(key)
        if kind == NUMERIC:
            if not all(_is_number(v) for v in values):
                raise SpaceError(f"option {self.name!r}: numeric option with non-numeric values")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise SpaceError(f"option {self.name!r}: numeric values must be strictly increasing")
        elif kind == BOOLEAN:
            if not all(isinstance(v, bool) for v in values):
                raise SpaceError(f"option {self.name!r}: boolean option with non-boolean values")
        if self.default is not None and values and self.index_of(self.default) is None:
            raise InadmissibleValue(f"option {self.name!r}: default {self.default!r} not admissible")

    @property
    def is_complete(self) -> bool:
        return len(self.values) > 0

    def index_of(self, value) -> int | None:
        """Position of ``value`` in the value list, or None if inadmissible."""
        for i, v in enumerate(self.values):
            if self.kind == CATEGORICAL:
                if type(v) is type(value) and v == value:
                    return i
                if isinstance(v, str) or isinstance(value, str):
                    continue
            if self.kind == BOOLEAN and not isinstance(value, (bool, np.bool_)):
                continue
            if v == value:
                return i
        return None

    def is_admissible(self, value) -> bool:
        return self.index_of(value) is not None

    def parse_value(self, text):
        """Map textual input (CSV cell, LLM output) onto an admissible value."""
        idx = self.index_of(text)
        if idx is not None:
            return self.values[idx]
        raw = str(text).strip()
        for v in self.values:
            if value_text(v) == raw:
                return v
        if self.kind == BOOLEAN:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return self._bool_value(True)
            if low in ("0", "false", "no", "off"):
                return self._bool_value(False)
        elif self.kind == NUMERIC:
            try:
                num = float(raw)
            except ValueError:
                num = None
            if num is not None:
                for v in self.values:
                    if float(v) == num:
                        return v
        raise InadmissibleValue(f"option {self.name!r}: value {text!r} not admissible")

    def _bool_value(self, flag):
        for v in self.values:
            if v is flag:
                return v
        raise InadmissibleValue(f"option {self.name!r}: value {flag!r} not admissible")

    def with_values(self, values, kind=None) -> ConfigOption:
        return ConfigOption(
            self.name,
            kind or (self.kind if self.values else infer_kind(list(values))),
            tuple(values),
            self.description,
            self.performance_sensitive,
            self.default,
        )

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "values": list(self.values)}
        if self.description:
            out["description"] = self.description
        if self.performance_sensitive is not None:
            out["performance_sensitive"] = self.performance_sensitive
        if self.default is not None:
            out["default"] = self.default
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> ConfigOption:
        if not isinstance(obj, Mapping):
            raise SpaceError("option entry must be a JSON object")
        name = obj.get("name")
        if not isinstance(name, str) or not name:
            raise DuplicateOrMissingName("option entry is missing a string 'name'")
        values = list(obj.get("values") or [])
        kind = obj.get("kind") or infer_kind(values)
        sensitive = obj.get("performance_sensitive")
        return cls(
            name=name,
            kind=kind,
            values=tuple(values),
            description=str(obj.get("description", "") or ""),
            performance_sensitive=None if sensitive is None else bool(sensitive),
            default=obj.get("default"),
        )


class Configuration(Mapping):
    """Immutable, hashable assignment of option names to values."""

    __slots__ = ("_data", "_hash")

    def __init__(self, assignments=(), **kwargs):
        data = dict(assignments)
        data.update(kwargs)
        self._data = {k: _plain(v) for k, v in data.items()}
        self._hash = None

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset((k, _hashable(v)) for k, v in self._data.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Configuration):
            if len(self) != len(other):
                return False
            return all(k in other._data and _same(v, other._data[k]) for k, v in self._data.items())
        if isinstance(other, Mapping):
            return self == Configuration(other)
        return NotImplemented

    def __repr__(self):
        inner = ", ".join(f"{k}={value_text(v)}" for k, v in self._data.items())
        return f"Configuration({inner})"

    def to_dict(self) -> dict:
        return dict(self._data)

    def replace(self, **changes) -> Configuration:
        data = dict(self._data)
        data.update(changes)
        return Configuration(data)


def _hashable(v):
    # keep "1" and 1 apart, but 1 and 1.0 together
    return ("s", v) if isinstance(v, str) else ("v", v)


def _same(a, b) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return type(a) is type(b) and a == b
    return a == b


class Verdict(NamedTuple):
    """Result of :func:`validate_configuration`; truthy iff valid."""

    valid: bool
    rule: str | None = None
    detail: str = ""

    def __bool__(self):
        return self.valid


def _freeze_constraint(constraint) -> tuple:
    if not isinstance(constraint, Mapping) or not constraint:
        raise SpaceError("a constraint must be a non-empty mapping of option name to value")
    return tuple((str(k), _plain(v)) for k, v in constraint.items())


@dataclass(frozen=True)
class ConfigSpace:
    """Ordered options, forbidden combinations and pinned (dropped) options."""

    options: tuple
    constraints: tuple = ()
    dropped: tuple = ()
    enumeration_limit: int = field(default=DEFAULT_ENUMERATION_LIMIT, compare=False)

    def __post_init__(self):
        options = tuple(self.options)
        object.__setattr__(self, "options", options)
        names = [o.name for o in options]
        if len(set(names)) != len(names):
            raise DuplicateOrMissingName(f"duplicate option names in {names}")
        for o in options:
            if not o.is_complete:
                raise SpaceError(f"option {o.name!r} has no values; complete it from the dataset header")
        dropped = tuple((opt, _plain(val)) for opt, val in self.dropped)
        object.__setattr__(self, "dropped", dropped)
        for opt, val in dropped:
            if opt.name in names:
                raise DuplicateOrMissingName(f"option {opt.name!r} is both active and dropped")
            if not opt.is_admissible(val):
                raise InadmissibleValue(f"pinned value {val!r} not admissible for {opt.name!r}")
        frozen = tuple(
            c if isinstance(c, tuple) else _freeze_constraint(c) for c in self.constraints
        )
        object.__setattr__(self, "constraints", frozen)
        by_name = {o.name: o for o in options}
        for c in frozen:
            for k, v in c:
                if k not in by_name:
                    raise UnknownOption(f"constraint references unknown option {k!r}")
                if not by_name[k].is_admissible(v):
                    raise InadmissibleValue(f"constraint value {v!r} not admissible for {k!r}")

    # -- basic lookups -------------------------------------------------
    @cached_property
    def names(self) -> tuple:
        return tuple(o.name for o in self.options)

    @cached_property
    def _by_name(self) -> dict:
        return {o.name: o for o in self.options}

    def option(self, name: str) -> ConfigOption:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownOption(f"unknown option {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._by_name

    @property
    def dropped_defaults(self) -> dict:
        return {opt.name: val for opt, val in self.dropped}

    @cached_property
    def product_size(self) -> int:
        return math.prod(len(o.values) for o in self.options)

    @cached_property
    def cardinality(self) -> int:
        """Product of value counts minus constrained combinations (inclusion-exclusion)."""
        if not self.constraints:
            return self.product_size
        if len(self.constraints) > 16:
            return len(self.index_matrix)
        counts = {o.name: len(o.values) for o in self.options}
        excluded = 0
        for r in range(1, len(self.constraints) + 1):
            for subset in itertools.combinations(self.constraints, r):
                merged = {}
                ok = True
                for c in subset:
                    for k, v in c:
                        if k in merged and not _same(merged[k], v):
                            ok = False
                            break
                        merged[k] = v
                    if not ok:
                        break
                if not ok:
                    continue
                free = math.prod(n for name, n in counts.items() if name not in merged)
                excluded += free if r % 2 else -free
        return self.product_size - excluded

    # -- enumeration ---------------------------------------------------
    def _check_limit(self, limit):
        limit = self.enumeration_limit if limit is None else limit
        if self.product_size > limit:
            raise CardinalityLimitExceeded(
                f"space has {self.product_size} raw combinations, over the limit {limit}"
            )

    @cached_property
    def index_matrix(self) -> np.ndarray:
        """(N, n_options) value indices of every valid configuration, lexicographic."""
        self._check_limit(None)
        shape = [len(o.values) for o in self.options]
        if not shape:
            return np.zeros((1, 0), dtype=np.int64)
        idx = np.indices(shape, dtype=np.int64).reshape(len(shape), -1).T
        if self.constraints:
            keep = np.ones(len(idx), dtype=bool)
            pos = {n: i for i, n in enumerate(self.names)}
            for c in self.constraints:
                hit = np.ones(len(idx), dtype=bool)
                for k, v in c:
                    hit &= idx[:, pos[k]] == self.option(k).index_of(v)
                keep &= ~hit
            idx = idx[keep]
        idx.setflags(write=False)
        return idx

    @cached_property
    def configurations(self) -> tuple:
        opts = self.options
        return tuple(
            Configuration({o.name: o.values[j] for o, j in zip(opts, row)})
            for row in self.index_matrix.tolist()
        )

    @cached_property
    def _row_of(self) -> dict:
        return {cfg: i for i, cfg in enumerate(self.configurations)}

    def index_of(self, cfg: Mapping) -> int:
        """Enumeration index of a configuration of this space."""
        key = cfg if isinstance(cfg, Configuration) else Configuration(cfg)
        if len(key) != len(self.options):
            key = Configuration({n: key[n] for n in self.names if n in key})
        try:
            return self._row_of[key]
        except KeyError:
            raise InvalidConfiguration(f"{key!r} is not a configuration of this space") from None

    def violates(self, cfg: Mapping) -> tuple | None:
        for c in self.constraints:
            if all(k in cfg and _same(cfg[k], v) for k, v in c):
                return c
        return None

    # -- derived spaces ------------------------------------------------
    def complete(self, cfg: Mapping) -> Configuration:
        """Add the pinned values of dropped options (full-space form)."""
        data = dict(cfg)
        for opt, val in self.dropped:
            data.setdefault(opt.name, val)
        return Configuration(data)

    def restrict(self, cfg: Mapping) -> Configuration:
        """Project a full-space configuration onto the active options."""
        return Configuration({n: cfg[n] for n in self.names})

    def coerce(self, assignments: Mapping) -> Configuration:
        """Canonicalize loosely typed assignments (e.g. LLM output) onto admissible values.

        Raises InvalidConfiguration when the result would not be valid.
        """
        if not isinstance(assignments, Mapping):
            raise InvalidConfiguration(f"expected an object of option assignments, got {assignments!r}")
        data = {}
        for name, raw in assignments.items():
            if name in self._by_name:
                try:
                    data[name] = self._by_name[name].parse_value(raw)
                except InadmissibleValue as exc:
                    raise InvalidConfiguration(str(exc)) from None
            elif name in self.dropped_defaults:
                continue
            else:
                raise InvalidConfiguration(f"unknown option {name!r}")
        verdict = validate_configuration(self, data)
        if not verdict:
            raise InvalidConfiguration(f"{verdict.rule}: {verdict.detail}")
        return Configuration({n: data[n] for n in self.names})

    # -- serialization -------------------------------------------------
    def to_json(self) -> dict:
        return {
            "options": [o.to_json() for o in self.options],
            "constraints": [dict(c) for c in self.constraints],
            "dropped": {opt.name: {"option": opt.to_json(), "default": val} for opt, val in self.dropped},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> ConfigSpace:
        if not isinstance(obj, Mapping) or "options" not in obj:
            raise SpaceError("space definition must be an object with an 'options' list")
        options = [ConfigOption.from_json(o) for o in obj["options"]]
        dropped = []
        for name, entry in (obj.get("dropped") or {}).items():
            opt = ConfigOption.from_json(entry["option"])
            if opt.name != name:
                raise SpaceError(f"dropped entry {name!r} wraps option {opt.name!r}")
            dropped.append((opt, entry["default"]))
        return cls(tuple(options), tuple(obj.get("constraints") or ()), tuple(dropped))


def dumps_space(space: ConfigSpace) -> str:
    return json.dumps(space.to_json(), indent=2, ensure_ascii=False) + "\n"


def save_space(space: ConfigSpace, path) -> None:
    Path(path).write_text(dumps_space(space), encoding="utf-8")


def load_space(path) -> ConfigSpace:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpaceError(f"{path}: malformed JSON ({exc})") from None
    return ConfigSpace.from_json(obj)


def parse_documentation(doc_text: str) -> list[ConfigOption]:
    """Parse a documentation JSON array into options, preserving order.

    Each element needs string ``name`` and ``description`` fields; ``values``,
    ``kind`` and ``default`` are optional. Options without values come back
    with an empty value list.
    """
    try:
        data = json.loads(doc_text)
    except json.JSONDecodeError as exc:
        raise SpaceError(f"malformed documentation JSON: {exc}") from None
    if not isinstance(data, list):
        raise SpaceError("documentation must be a JSON array")
    out, seen = [], set()
    for i, entry in enumerate(data):
        if not isinstance(entry, Mapping) or not isinstance(entry.get("name"), str) or not entry["name"]:
            raise DuplicateOrMissingName(f"documentation entry {i} has no 'name'")
        if entry["name"] in seen:
            raise DuplicateOrMissingName(f"duplicate option name {entry['name']!r}")
        seen.add(entry["name"])
        out.append(ConfigOption.from_json(entry))
    return out


def complete_options(docs: Iterable[ConfigOption], space: ConfigSpace) -> list[ConfigOption]:
    """Fill empty value lists in documented options from the space definition."""
    out = []
    for doc in docs:
        if not doc.is_complete and doc.name in space:
            src = space.option(doc.name)
            doc = ConfigOption(doc.name, src.kind, src.values, doc.description, doc.performance_sensitive, doc.default)
        out.append(doc)
    return out


def enumerate_space(space: ConfigSpace, limit: int = DEFAULT_ENUMERATION_LIMIT) -> list[Configuration]:
    """All valid configurations in lexicographic (option order, value order) order."""
    space._check_limit(limit)
    return list(space.configurations)


def validate_configuration(space: ConfigSpace, cfg: Mapping) -> Verdict:
    for opt in space.options:
        if opt.name not in cfg:
            return Verdict(False, "MissingOption", opt.name)
        if not opt.is_admissible(cfg[opt.name]):
            return Verdict(False, "InadmissibleValue", f"{opt.name}={cfg[opt.name]!r}")
    for name in cfg:
        if name not in space:
            return Verdict(False, "UnknownOption", name)
    hit = space.violates(cfg)
    if hit is not None:
        return Verdict(False, "ConstraintViolation", repr(dict(hit)))
    return Verdict(True)


class _Layout(NamedTuple):
    option: ConfigOption
    start: int
    width: int


def encoding_layout(space: ConfigSpace) -> list[_Layout]:
    out, start = [], 0
    for o in space.options:
        width = len(o.values) if o.kind == CATEGORICAL else 1
        out.append(_Layout(o, start, width))
        start += width
    return out


def _scalar_table(opt: ConfigOption) -> np.ndarray:
    if opt.kind == BOOLEAN:
        return np.array([1.0 if v else 0.0 for v in opt.values])
    vals = np.asarray(opt.values, dtype=float)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return np.zeros_like(vals)
    return (vals - lo) / (hi - lo)


def encode_indices(space: ConfigSpace, index_rows: np.ndarray) -> np.ndarray:
    """Encode rows of value indices (as in ``space.index_matrix``)."""
    index_rows = np.atleast_2d(np.asarray(index_rows, dtype=np.int64))
    layout = encoding_layout(space)
    width = layout[-1].start + layout[-1].width if layout else 0
    out = np.zeros((len(index_rows), width))
    rows = np.arange(len(index_rows))
    for j, lay in enumerate(layout):
        col = index_rows[:, j]
        if lay.option.kind == CATEGORICAL:
            out[rows, lay.start + col] = 1.0
        else:
            out[:, lay.start] = _scalar_table(lay.option)[col]
    return out


def encode_configuration(space: ConfigSpace, cfg: Mapping) -> np.ndarray:
    """Numeric feature vector: one-hot for categoricals, min-max scalars otherwise."""
    verdict = validate_configuration(space, cfg)
    if not verdict:
        raise InvalidConfiguration(f"{verdict.rule}: {verdict.detail}")
    row = [o.index_of(cfg[o.name]) for o in space.options]
    return encode_indices(space, np.array([row]))[0]


def encoded_space(space: ConfigSpace) -> np.ndarray:
    """Encoding of every configuration, in enumeration order (cached per space)."""
    cache = space.__dict__.get("_encoded_cache")
    if cache is None:
        cache = encode_indices(space, space.index_matrix)
        cache.setflags(write=False)
        space.__dict__["_encoded_cache"] = cache
    return cache


def decode_vector(space: ConfigSpace, vector) -> Configuration:
    """Inverse of :func:`encode_configuration` via nearest exact match."""
    enc = encoded_space(space)
    vec = np.asarray(vector, dtype=float)
    hits = np.flatnonzero(np.all(enc == vec, axis=1))
    if len(hits) != 1:
        raise InvalidConfiguration("vector does not encode a configuration of this space")
    return space.configurations[hits[0]]


def prune_space(space: ConfigSpace, keep: Iterable[str], defaults: Mapping) -> ConfigSpace:
    """Keep only ``keep`` options; pin every other option to ``defaults[name]``."""
    keep = set(keep)
    unknown = sorted(keep - set(space.names))
    if unknown:
        raise UnknownOption(f"unknown option(s) {unknown}")
    pinned = {}
    for opt in space.options:
        if opt.name in keep:
            continue
        if opt.name not in defaults:
            raise InadmissibleValue(f"no default given for dropped option {opt.name!r}")
        idx = opt.index_of(defaults[opt.name])
        if idx is None:
            raise InadmissibleValue(f"default {defaults[opt.name]!r} not admissible for {opt.name!r}")
        pinned[opt.name] = opt.values[idx]
    if not pinned:
        return space
    constraints = []
    for c in space.constraints:
        residual, alive = [], True
        for k, v in c:
            if k in pinned:
                alive = alive and _same(pinned[k], v)
            else:
                residual.append((k, v))
        if alive and not residual:
            raise SpaceError("pinned defaults violate a constraint; choose other defaults")
        if alive:
            constraints.append(tuple(residual))
    dropped = list(space.dropped) + [(space.option(n), v) for n, v in pinned.items()]
    return ConfigSpace(
        tuple(o for o in space.options if o.name in keep),
        tuple(constraints),
        tuple(dropped),
        space.enumeration_limit,
    )


class ConfigEncoder(TransformerMixin, BaseEstimator):
    """Transformer turning configurations of ``space`` into feature rows.

    Works on any iterable of mappings; pruned-space configurations are
    completed first when ``full_space`` is given, so models can be trained on
    full-space encodings.
    """

    def __init__(self, space=None):
        self.space = space

    def fit(self, X=None, y=None):
        if self.space is None:
            raise ValueError("ConfigEncoder needs a space")
        self.layout_ = encoding_layout(self.space)
        self.n_features_out_ = sum(lay.width for lay in self.layout_)
        return self

    def transform(self, X):
        check_is_fitted(self, "layout_")
        rows = []
        for cfg in X:
            verdict = validate_configuration(self.space, cfg)
            if not verdict:
                raise InvalidConfiguration(f"{verdict.rule}: {verdict.detail}")
            rows.append([o.index_of(cfg[o.name]) for o in self.space.options])
        if not rows:
            return np.zeros((0, self.n_features_out_))
        return encode_indices(self.space, np.array(rows))

    def inverse_transform(self, X):
        check_is_fitted(self, "layout_")
        return [decode_vector(self.space, row) for row in np.atleast_2d(X)]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "layout_")
        names = []
        for lay in self.layout_:
            if lay.option.kind == CATEGORICAL:
                names.extend(f"{lay.option.name}={value_text(v)}" for v in lay.option.values)
            else:
                names.append(lay.option.name)
        return np.array(names, dtype=object)
