"""Receptacle prior tables: object category -> receptacle categories it commonly sits on."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from types import MappingProxyType

from ..categories import canonical

EVAL = "eval"
BASELINE = "baseline"
_FILES = {EVAL: "eval_priors.json", BASELINE: "baseline_priors.json"}


@lru_cache(maxsize=None)
def load_table(kind: str = EVAL) -> MappingProxyType:
    """The table as shipped, strings verbatim, keyed by object category."""
    if kind not in _FILES:
        raise KeyError(f"unknown prior table {kind!r}")
    raw = json.loads(resources.files(__package__).joinpath("data", _FILES[kind]).read_text())
    return MappingProxyType({k: tuple(v) for k, v in raw.items()})


def load_table_file(path) -> MappingProxyType:
    with open(path) as fh:
        raw = json.load(fh)
    return MappingProxyType({k: tuple(v) for k, v in raw.items()})


def row(table, category: str) -> tuple[str, ...]:
    """Entries for ``category``; raises KeyError when the table has no such row."""
    key = canonical(category) or category
    for k, v in table.items():
        if k == key or canonical(k) == key:
            return tuple(v)
    raise KeyError(f"category {category!r} not in prior table")


def receptacles(table, category: str) -> frozenset[str]:
    """Simulator receptacle labels named by ``category``'s row; unknown names are dropped."""
    out = set()
    for name in row(table, category):
        c = canonical(name)
        if c is not None:
            out.add(c)
    return frozenset(out)


def unknown_entries(table, category: str) -> tuple[str, ...]:
    return tuple(n for n in row(table, category) if canonical(n) is None)
