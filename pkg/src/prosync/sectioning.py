"""Overlapping fixed-length turn sections over an alternating turn sequence."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Sequence

from .corpus import Speaker, Turn


class Direction(str, enum.Enum):
    CLIENT_FIRST = "c-first"
    THERAPIST_FIRST = "t-first"

    @property
    def leader(self) -> Speaker:
        return Speaker.CLIENT if self is Direction.CLIENT_FIRST else Speaker.THERAPIST


class TooShortError(ValueError):
    pass


@dataclass(frozen=True)
class SectionSpec:
    n_turns: int
    step: int = 10
    direction: Direction = Direction.CLIENT_FIRST

    def __post_init__(self) -> None:
        n, m = self.n_turns, self.step
        if n % 2 or m % 2:
            raise ValueError(f"section size and step must be even (got N={n}, M={m})")
        if n < 4:
            raise ValueError(f"section size must be at least 4 turns (got {n})")
        if not 0 < m <= n:
            raise ValueError(f"step must satisfy 0 < M <= N (got M={m}, N={n})")
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True)
class Section:
    index: int
    turn_indices: tuple[int, ...]
    midpoint_s: float

    @property
    def offset(self) -> int:
        return self.turn_indices[0]

    @property
    def pair_indices(self) -> range:
        """Indices of the turn pairs (0-based, in the chopped sequence) this section covers."""
        return range(self.turn_indices[0] // 2, self.turn_indices[-1] // 2 + 1)


def chop(turns: Sequence[Turn], direction: Direction | str) -> tuple[Turn, ...]:
    """Drop a leading turn by the wrong speaker and a trailing unpaired turn."""
    direction = Direction(direction)
    out = list(turns)
    for a, b in zip(out, out[1:]):
        if a.speaker is b.speaker:
            raise ValueError("chop expects an alternating turn sequence")
    if out and out[0].speaker is not direction.leader:
        out = out[1:]
    if len(out) % 2:
        out = out[:-1]
    if len(out) < 2:
        raise TooShortError(f"fewer than 2 turns remain after chopping for {direction.value}")
    return tuple(out)


def build_sections(turns: Sequence[Turn], spec: SectionSpec) -> list[Section]:
    """Sections of ``spec.n_turns`` consecutive turns every ``spec.step`` turns.

    ``turns`` is the chopped sequence; a sequence shorter than one section
    yields an empty list and a warning.
    """
    n, m = spec.n_turns, spec.step
    length = len(turns)
    if length < n:
        warnings.warn(
            f"{length} turns cannot hold a section of {n}; no sections built",
            RuntimeWarning,
            stacklevel=2,
        )
        return []
    if turns and turns[0].speaker is not spec.direction.leader:
        raise ValueError("turn sequence does not start with the direction's leading speaker")
    sections = []
    for k, offset in enumerate(range(0, length - n + 1, m)):
        members = range(offset, offset + n)
        midpoint = sum(turns[i].midpoint_s for i in members) / n
        sections.append(Section(k, tuple(members), midpoint))
    return sections


def section_count(length: int, n_turns: int, step: int) -> int:
    return 0 if length < n_turns else (length - n_turns) // step + 1
