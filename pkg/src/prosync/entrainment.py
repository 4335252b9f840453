"""Degree of entrainment: section-wise mean absolute pair difference and its trend."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sectioning import Section
from .stats import CorrResult, UndefinedCorrelationError, pearson
from .synchrony import UnanalyzableSection, section_pairs


class Trend(str, enum.Enum):
    CONVERGENT = "convergent"
    DIVERGENT = "divergent"
    NEITHER = "neither"


@dataclass(frozen=True)
class DifferenceSeries:
    d: np.ndarray
    t: np.ndarray
    sections: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        d = np.asarray(self.d, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if d.shape != t.shape:
            raise ValueError("d and t must have equal length")
        if np.any(d < 0):
            raise ValueError("section differences are nonnegative")
        if np.any(np.diff(t) <= 0):
            raise ValueError("section times must be strictly increasing")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "sections", tuple(self.sections))

    def __len__(self) -> int:
        return int(self.d.size)


@dataclass(frozen=True)
class TrendResult:
    label: Trend
    corr: CorrResult | None
    note: str = field(default="")


def section_difference(section: Section, values: np.ndarray) -> float:
    """Mean of |follower - leader| over the section's usable turn pairs."""
    lead, follow = section_pairs(section, values)
    if lead.size == 0:
        raise UnanalyzableSection(f"section {section.index}: no usable pairs")
    return float(np.mean(np.abs(follow - lead)))


def difference_series(sections: Sequence[Section], values: np.ndarray) -> DifferenceSeries:
    """Section differences for every analyzable section, time-stamped at midpoints."""
    d, t, idx = [], [], []
    for sec in sections:
        try:
            d.append(section_difference(sec, values))
        except UnanalyzableSection:
            continue
        t.append(sec.midpoint_s)
        idx.append(sec.index)
    return DifferenceSeries(np.array(d), np.array(t), tuple(idx))


def entrainment_stats(series: DifferenceSeries) -> tuple[float, float]:
    """Mean and population standard deviation of section differences."""
    if len(series) == 0:
        raise UnanalyzableSection("empty difference series")
    return float(np.mean(series.d)), float(np.std(series.d))


def trend(series: DifferenceSeries, *, alpha: float = 0.05, time_axis: str = "seconds") -> TrendResult:
    """Pearson correlation of section differences against section time.

    A significant decrease is Convergent, a significant increase Divergent.
    ``time_axis="index"`` uses section ordinals instead of midpoint seconds.
    """
    if time_axis == "seconds":
        t = series.t
    elif time_axis == "index":
        t = np.asarray(series.sections, dtype=float)
    else:
        raise ValueError(f"unknown time axis {time_axis!r}")
    if len(series) < 3:
        return TrendResult(Trend.NEITHER, None, f"only {len(series)} analyzable sections")
    try:
        corr = pearson(series.d, t)
    except UndefinedCorrelationError:
        return TrendResult(Trend.NEITHER, None, "undefined correlation: constant differences")
    if corr.p < alpha:
        return TrendResult(Trend.CONVERGENT if corr.r < 0 else Trend.DIVERGENT, corr)
    return TrendResult(Trend.NEITHER, corr)
