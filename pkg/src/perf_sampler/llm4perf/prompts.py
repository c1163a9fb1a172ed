"""Prompt templates: one text file per role, system and user parts separated by a ``---`` line.

Leading ``#`` lines carry metadata (template name, version). Placeholders
``{space}``, ``{history}``, ``{analysis}``, ``{strategy}`` and ``{n}`` are
substituted literally, so JSON braces in the templates need no escaping.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

ROLES = ("filter", "analyzer", "designer", "generator")
PLACEHOLDERS = ("space", "history", "analysis", "strategy", "n")


@dataclass(frozen=True)
class Template:
    role: str
    system: str
    user: str
    meta: tuple = ()

    @classmethod
    def parse(cls, role: str, text: str) -> Template:
        lines = text.splitlines()
        meta = []
        while lines and lines[0].startswith("#"):
            key, _, value = lines.pop(0).lstrip("#").partition(":")
            meta.append((key.strip(), value.strip()))
        body = "\n".join(lines)
        if "\n---\n" not in f"\n{body}\n":
            raise ValueError(f"template {role!r} lacks the '---' separator")
        system, _, user = f"\n{body}\n".partition("\n---\n")
        return cls(role, system.strip(), user.strip(), tuple(meta))

    @property
    def version(self) -> str:
        return dict(self.meta).get("version", "")

    def render(self, **fields) -> tuple[str, str]:
        unknown = set(fields) - set(PLACEHOLDERS)
        if unknown:
            raise KeyError(f"unknown placeholders {sorted(unknown)}")

        def fill(s):
            for key, value in fields.items():
                s = s.replace("{" + key + "}", str(value))
            return s

        return fill(self.system), fill(self.user)


@dataclass(frozen=True)
class PromptSet:
    templates: tuple

    @classmethod
    def load(cls, directory=None) -> PromptSet:
        """Templates from ``directory`` (default: the packaged set)."""
        out = []
        for role in ROLES:
            if directory is None:
                text = resources.files(__package__).joinpath("prompts", f"{role}.txt").read_text(encoding="utf-8")
            else:
                text = (Path(directory) / f"{role}.txt").read_text(encoding="utf-8")
            out.append(Template.parse(role, text))
        return cls(tuple(out))

    def __getitem__(self, role) -> Template:
        for t in self.templates:
            if t.role == role:
                return t
        raise KeyError(role)

    def render(self, role, **fields) -> tuple[str, str]:
        return self[role].render(**fields)
