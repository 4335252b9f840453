"""Section-level synchrony states and their conversation-level coverage ratios."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .sectioning import Section
from .stats import CorrResult, UndefinedCorrelationError, spearman

log = logging.getLogger(__name__)

HISTOGRAM_BIN_WIDTH = 0.05


class SyncState(str, enum.Enum):
    SYNCHRONOUS = "synchronous"
    ANTI_SYNCHRONOUS = "anti-synchronous"
    NEUTRAL = "neutral"


class UnanalyzableSection(ValueError):
    """A section lacks enough usable turn pairs for a feature."""


@dataclass(frozen=True)
class SyncThresholds:
    rho_threshold: float = 0.5
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if not 0 < self.rho_threshold <= 1:
            raise ValueError("rho_threshold must lie in (0, 1]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class StateRatios:
    sync_ratio: float
    anti_ratio: float
    # Pairs covered by both a synchronous and an anti-synchronous section.
    conflict_pairs: int = 0


@dataclass(frozen=True)
class SectionResult:
    section: Section
    corr: CorrResult | None
    state: SyncState
    note: str = ""


def section_pairs(section: Section, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leader/follower values of each usable pair in a section.

    ``values`` is indexed by position in the chopped turn sequence. Pairs with
    a missing (NaN) value on either side are dropped.
    """
    idx = np.asarray(section.turn_indices)
    lead = values[idx[0::2]]
    follow = values[idx[1::2]]
    keep = np.isfinite(lead) & np.isfinite(follow)
    return lead[keep], follow[keep]


def section_correlation(section: Section, values: np.ndarray) -> CorrResult:
    lead, follow = section_pairs(section, values)
    if lead.size < 3:
        raise UnanalyzableSection(f"section {section.index}: {lead.size} usable pairs")
    try:
        return spearman(lead, follow)
    except UndefinedCorrelationError as exc:
        raise UnanalyzableSection(f"section {section.index}: {exc}") from None


def classify(corr: CorrResult, thresholds: SyncThresholds = SyncThresholds()) -> SyncState:
    if corr.p < thresholds.alpha:
        if corr.r >= thresholds.rho_threshold:
            return SyncState.SYNCHRONOUS
        if corr.r <= -thresholds.rho_threshold:
            return SyncState.ANTI_SYNCHRONOUS
    return SyncState.NEUTRAL


def analyze_sections(
    sections: Sequence[Section], values: np.ndarray, thresholds: SyncThresholds = SyncThresholds()
) -> list[SectionResult]:
    """Correlate and classify every section; unanalyzable sections are Neutral."""
    out = []
    for sec in sections:
        try:
            corr = section_correlation(sec, values)
        except UnanalyzableSection as exc:
            out.append(SectionResult(sec, None, SyncState.NEUTRAL, str(exc)))
            continue
        out.append(SectionResult(sec, corr, classify(corr, thresholds)))
    return out


def state_ratios(results: Iterable[SectionResult], n_turns: int) -> StateRatios:
    """Fraction of the conversation's turn pairs covered by each non-neutral state.

    Overlapping sections are merged by taking the union of the pairs they
    cover, so no pair is counted twice.
    """
    if n_turns <= 0 or n_turns % 2:
        raise ValueError(f"chopped turn count must be positive and even, got {n_turns}")
    total = n_turns // 2
    sync: set[int] = set()
    anti: set[int] = set()
    for res in results:
        if res.state is SyncState.SYNCHRONOUS:
            sync.update(res.section.pair_indices)
        elif res.state is SyncState.ANTI_SYNCHRONOUS:
            anti.update(res.section.pair_indices)
    conflict = len(sync & anti)
    if conflict:
        log.info("%d turn pairs covered by both synchronous and anti-synchronous sections", conflict)
    return StateRatios(len(sync) / total, len(anti) / total, conflict)


def ratio_histogram(ratios: Iterable[float], bin_width: float = HISTOGRAM_BIN_WIDTH) -> list[tuple[float, float, int]]:
    """Counts over [0, 1] in bins of ``bin_width``; the last bin includes 1.0."""
    n_bins = int(round(1.0 / bin_width))
    counts = [0] * n_bins
    for r in ratios:
        k = min(int(r / bin_width + 1e-9), n_bins - 1)
        counts[k] += 1
    return [(round(k * bin_width, 10), round((k + 1) * bin_width, 10), c) for k, c in enumerate(counts)]
