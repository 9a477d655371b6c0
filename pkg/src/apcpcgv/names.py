"""Interned names, labels, and recursion variables shared by both calculi."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Name:
    """A channel endpoint. Equality and hashing use the id only; the display
    string is a human-readable hint that never affects semantics."""

    id: int
    display: str | None = field(default=None, compare=False)

    def __repr__(self) -> str:
        return self.display if self.display else f"n{self.id}"


@dataclass(frozen=True)
class Label:
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("empty label")

    def __repr__(self) -> str:
        return self.text


@dataclass(frozen=True)
class RecVar:
    id: int
    display: str | None = field(default=None, compare=False)

    def __repr__(self) -> str:
        return self.display if self.display else f"X{self.id}"


class NameSupply:
    """Deterministic fresh-name source. Seeding with a start id keeps
    generated terms reproducible across runs."""

    def __init__(self, start: int = 0):
        self._counter = itertools.count(start)

    def fresh(self, display: str | None = None) -> Name:
        return Name(next(self._counter), display)

    def fresh_rec(self, display: str | None = None) -> RecVar:
        return RecVar(next(self._counter), display)

    def derived(self, base: Name) -> Name:
        """Fresh name whose display hints at its origin (binder refreshing)."""
        hint = base.display + "'" if base.display else None
        return self.fresh(hint)

    def peek(self) -> int:
        c = next(self._counter)
        # itertools.count cannot be rewound; re-create one step ahead is fine
        self._counter = itertools.count(c)
        return c


GLOBAL_SUPPLY = NameSupply(1_000_000)
