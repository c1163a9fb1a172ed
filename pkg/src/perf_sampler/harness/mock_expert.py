"""A scripted stand-in for a performance-expert LLM, for benchmarks without a live endpoint.

Every answer is a pure function of the request, so transcripts replay exactly.
The filter keeps options whose documentation does not say they leave
performance unaffected; generators propose a shared max-min diverse batch
(relative to the measured configurations listed in the prompt) that each
generator perturbs independently, so voting has real agreement to work with.
"""

from __future__ import annotations

import json
import re
import zlib

import numpy as np

from ..config_space import ConfigSpace, encoded_space, value_text
from ..llm_gateway import ChatRequest

_GEN_ID = re.compile(r"\[generator-id: (\d+)\]")
_N = re.compile(r"Propose (\d+) distinct configurations")
_INSENSITIVE = ("does not affect", "no effect on performance", "does not change performance")


def _fence(obj) -> str:
    return "```json\n" + json.dumps(obj) + "\n```"


class SyntheticExpert:
    """Callable chat backend: ``expert(request) -> text``."""

    def __init__(self, space: ConfigSpace, docs=None, seed: int = 0, agreement: float = 0.75,
                 pool_size: int = 256):
        self.space = space
        self.docs = list(docs) if docs is not None else list(space.options)
        self.seed = seed
        self.agreement = agreement
        self.pool_size = pool_size
        self._spaces: dict = {}

    def __call__(self, req: ChatRequest) -> str:
        return getattr(self, "_" + req.role_tag.replace("-", "_"))(req)

    def _filter(self, req):
        drop = [d.name for d in self.docs if any(p in d.description.lower() for p in _INSENSITIVE)]
        keep = [n for n in self.space.names if n not in drop]
        rationale = {n: ("documentation states it leaves performance unchanged" if n in drop
                         else "may change runtime behaviour") for n in self.space.names}
        return "Assessment of each option follows.\n" + _fence({"keep": keep, "drop": drop, "rationale": rationale})

    def _analyzer(self, req):
        return "No single option dominates the measurements so far.\n" + _fence({"anomalies": [], "hypotheses": []})

    def _designer(self, req):
        plan = "Spread the batch across all values of every option, away from measured configurations."
        return plan + "\n" + _fence({"narrative": plan, "focus_regions": [], "deprioritized": []})

    def _voter_aux(self, req):
        return _fence({})

    # -- generators -------------------------------------------------------
    def _active(self, text):
        """Active option names and measured rows, parsed from the history table."""
        lines = text.splitlines()
        header_at = next((i for i, ln in enumerate(lines) if ln.startswith("iter ")), None)
        if header_at is None:
            return None, []
        tokens = lines[header_at].split()[1:]
        names = []
        for t in tokens:
            if t not in self.space.names:
                break
            names.append(t)
        rows = []
        for ln in lines[header_at + 1:]:
            parts = ln.split()
            if not parts or not parts[0].isdigit():
                if parts and parts[0].startswith("("):
                    continue
                break
            rows.append(parts[1:1 + len(names)])
        return names, rows

    def _subspace(self, names):
        key = tuple(names)
        if key not in self._spaces:
            self._spaces[key] = ConfigSpace(tuple(self.space.option(n) for n in names))
        return self._spaces[key]

    def _generator(self, req):
        text = req.text
        gid = int(_GEN_ID.search(text).group(1)) if _GEN_ID.search(text) else 0
        n = int(_N.search(text).group(1)) if _N.search(text) else 1
        names, rows = self._active(text)
        if not names:
            names = [ln[2:].split(" (", 1)[0] for ln in text.splitlines()
                     if ln.startswith("- ") and " (" in ln and ln[2:].split(" (", 1)[0] in self.space.names]
        sub = self._subspace(names)
        X = encoded_space(sub)
        measured = []
        for r in rows:
            try:
                measured.append(sub.index_of({nm: sub.option(nm).parse_value(v) for nm, v in zip(names, r)}))
            except Exception:
                continue
        shared = np.random.default_rng([self.seed, req.iteration, zlib.crc32(" ".join(names).encode())])
        pool = shared.choice(len(X), size=min(self.pool_size, len(X)), replace=False)
        pool = np.array([p for p in pool if p not in set(measured)] or pool)
        if measured:
            dist = np.abs(X[pool][:, None, :] - X[measured][None, :, :]).sum(axis=2).min(axis=1)
        else:
            dist = np.full(len(pool), np.inf)
        picks = []
        for _ in range(min(n, len(pool))):
            j = int(np.argmax(dist))
            picks.append(int(pool[j]))
            dist = np.minimum(dist, np.abs(X[pool] - X[pool[j]]).sum(axis=1))
            dist[j] = -1.0
        own = np.random.default_rng([self.seed, req.iteration, gid, 7])
        out = []
        for p in picks:
            if own.random() >= self.agreement:
                p = int(pool[own.integers(len(pool))])
            cfg = sub.configurations[p]
            out.append({k: _plain(v) for k, v in cfg.items()})
        return "Configurations following the strategy:\n" + _fence({"configurations": out})


def _plain(v):
    if isinstance(v, (bool, int, float)):
        return v
    return value_text(v)
