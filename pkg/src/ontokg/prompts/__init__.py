"""Versioned prompt templates (``string.Template`` syntax, one file each)."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

PROMPT_VERSIONS = ("v1", "v2")


@lru_cache(maxsize=None)
def load(name: str) -> Template:
    try:
        text = resources.files(__name__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KeyError(f"no prompt template named {name!r}") from None
    return Template(text)


def render(name: str, **values: str) -> str:
    return load(name).substitute(values)
