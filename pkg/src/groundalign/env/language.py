"""Templated instructions with their dependency parses."""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from ..core import ROOT, DependencyTree, LabelSet, validate_dependency_tree
from ..errors import ValidationError

_SLOT = re.compile(r"^\{(\w+)\}$")


@dataclass(frozen=True)
class Template:
    env: str
    intent: str
    tokens: tuple[str, ...]
    heads: tuple[int, ...]
    deps: tuple[str, ...]

    @classmethod
    def parse(cls, line: str) -> "Template":
        name, *toks = line.split()
        env, _, intent = name.partition(".")
        if not intent or not toks:
            raise ValidationError(f"bad template line: {line!r}")
        words, heads, deps = [], [], []
        for tok in toks:
            try:
                w, h, d = tok.rsplit("/", 2)
            except ValueError:
                raise ValidationError(f"bad token {tok!r} in template {name}") from None
            words.append(w)
            heads.append(ROOT if h == "-" else int(h))
            deps.append(d)
        t = cls(env, intent, tuple(words), tuple(heads), tuple(deps))
        validate_dependency_tree(t.fill({s: "x" for s in t.slots}))
        return t

    @property
    def slots(self) -> list[str]:
        return [m.group(1) for w in self.tokens if (m := _SLOT.match(w))]

    def fill(self, slots: dict[str, str]) -> DependencyTree:
        words = []
        for w in self.tokens:
            m = _SLOT.match(w)
            words.append(str(slots[m.group(1)]) if m else w)
        return DependencyTree(
            tuple(LabelSet.of(word=w.lower()) for w in words),
            self.heads,
            tuple(LabelSet() if h == ROOT else LabelSet.of(dep=d)
                  for h, d in zip(self.heads, self.deps)),
        )


class TemplateBank:
    def __init__(self, templates):
        self.templates = list(templates)
        if not self.templates:
            raise ValidationError("template bank is empty")
        self._by_intent: dict = {}
        for t in self.templates:
            self._by_intent.setdefault((t.env, t.intent), []).append(t)

    @classmethod
    def parse(cls, text: str) -> "TemplateBank":
        lines = (ln.split("#", 1)[0].strip() for ln in text.splitlines())
        return cls(Template.parse(ln) for ln in lines if ln)

    @classmethod
    def load(cls, path=None) -> "TemplateBank":
        if path is None:
            text = resources.files(__package__).joinpath("templates.txt").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls.parse(text)

    def for_intent(self, env: str, intent: str) -> list[Template]:
        hit = self._by_intent.get((env, intent))
        if not hit:
            raise ValidationError(f"no template for {env}.{intent}")
        return hit

    def has(self, env: str, intent: str) -> bool:
        return (env, intent) in self._by_intent
