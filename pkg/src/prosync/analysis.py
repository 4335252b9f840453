"""Corpus-level analysis: per-conversation entrainment metrics and their
correlation with session ratings across a grid of section sizes."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import Conversation, CorpusFailure, RatingsTable
from .entrainment import DifferenceSeries, Trend, TrendResult, difference_series, entrainment_stats, trend
from .prosody import FEATURES, ConversationFeatures, extract_features
from .sectioning import Direction, SectionSpec, TooShortError, build_sections, chop
from .stats import CorrResult, UndefinedCorrelationError, pearson, stars
from .synchrony import (
    SectionResult,
    StateRatios,
    SyncThresholds,
    analyze_sections,
    ratio_histogram,
    state_ratios,
)

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
METRICS: tuple[str, ...] = ("sync_ratio", "anti_ratio", "diff_mean", "diff_std")
RATINGS: tuple[str, ...] = ("tes", "blri", "ses")
CELL_COLUMNS = ("feature", "metric", "N", "direction", "rating", "r", "p", "n", "star")


@dataclass(frozen=True)
class AnalysisConfig:
    grid: tuple[int, ...] = (20, 30, 40, 50)
    step: int = 10
    thresholds: SyncThresholds = SyncThresholds()
    directions: tuple[Direction, ...] = (Direction.CLIENT_FIRST,)
    trend_alpha: float = 0.05
    time_axis: str = "seconds"

    def __post_init__(self) -> None:
        if not self.grid:
            raise ValueError("grid must hold at least one section size")
        object.__setattr__(self, "grid", tuple(sorted(set(int(n) for n in self.grid))))
        object.__setattr__(self, "directions", tuple(Direction(d) for d in self.directions))
        for n in self.grid:
            SectionSpec(n, self.step)  # validates evenness and bounds
        if self.time_axis not in ("seconds", "index"):
            raise ValueError("time_axis must be 'seconds' or 'index'")

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid": list(self.grid),
            "step": self.step,
            "rho_threshold": self.thresholds.rho_threshold,
            "alpha": self.thresholds.alpha,
            "directions": [d.value for d in self.directions],
            "trend_alpha": self.trend_alpha,
            "time_axis": self.time_axis,
        }


@dataclass(frozen=True)
class MetricKey:
    feature: str
    metric: str
    n_turns: int
    direction: Direction

    def __post_init__(self) -> None:
        if self.feature not in FEATURES:
            raise ValueError(f"unknown feature {self.feature!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True)
class FeatureRun:
    """One feature at one section size and direction, for one conversation."""

    sections: tuple[SectionResult, ...]
    ratios: StateRatios | None
    series: DifferenceSeries
    diff_mean: float | None
    diff_std: float | None
    trend: TrendResult

    def metric(self, name: str) -> float | None:
        if name == "sync_ratio":
            return None if self.ratios is None else self.ratios.sync_ratio
        if name == "anti_ratio":
            return None if self.ratios is None else self.ratios.anti_ratio
        if name == "diff_mean":
            return self.diff_mean
        if name == "diff_std":
            return self.diff_std
        raise KeyError(name)


@dataclass
class ConversationMetrics:
    conversation_id: str
    n_turns: int
    chopped: dict[Direction, int] = field(default_factory=dict)
    runs: dict[tuple[str, int, Direction], FeatureRun] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def metric(self, key: MetricKey) -> float | None:
        run = self.runs.get((key.feature, key.n_turns, key.direction))
        return None if run is None else run.metric(key.metric)


def run_feature(
    sections, values: np.ndarray, n_chopped: int, config: AnalysisConfig
) -> FeatureRun:
    results = tuple(analyze_sections(sections, values, config.thresholds))
    analyzable = any(r.corr is not None for r in results)
    ratios = state_ratios(results, n_chopped) if analyzable else None
    series = difference_series(sections, values)
    if len(series):
        mean, std = entrainment_stats(series)
    else:
        mean = std = None
    tr = trend(series, alpha=config.trend_alpha, time_axis=config.time_axis)
    return FeatureRun(results, ratios, series, mean, std, tr)


def compute_conversation_metrics(
    features: ConversationFeatures, config: AnalysisConfig = AnalysisConfig()
) -> ConversationMetrics:
    """Synchrony ratios, difference statistics and trends for every feature,
    section size and direction of one conversation."""
    cm = ConversationMetrics(features.conversation_id, len(features.turns))
    columns = {f: features.values(f) for f in FEATURES}
    for direction in config.directions:
        try:
            chopped = chop(features.turns, direction)
        except TooShortError as exc:
            cm.notes.append(f"{direction.value}: {exc}")
            continue
        cm.chopped[direction] = len(chopped)
        positions = np.array([t.index for t in chopped])
        for n in config.grid:
            spec = SectionSpec(n, config.step, direction)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                sections = build_sections(chopped, spec)
            if not sections:
                cm.notes.append(f"{direction.value}: {len(chopped)} turns < N={n}; excluded at this N")
                continue
            for feature in FEATURES:
                values = columns[feature][positions]
                cm.runs[(feature, n, direction)] = run_feature(sections, values, len(chopped), config)
    return cm


@dataclass(frozen=True)
class CorrelationCell:
    key: MetricKey
    rating: str
    result: CorrResult | None
    star: str
    note: str = ""

    @property
    def n(self) -> int:
        return 0 if self.result is None else self.result.n

    def row(self) -> dict[str, Any]:
        r = self.result
        return {
            "feature": self.key.feature,
            "metric": self.key.metric,
            "N": self.key.n_turns,
            "direction": self.key.direction.value,
            "rating": self.rating,
            "r": None if r is None else _num(r.r),
            "p": None if r is None else _num(r.p),
            "n": self.n,
            "star": self.star,
            "note": self.note,
        }


def correlate_metric(
    metrics: Mapping[str, ConversationMetrics] | Iterable[ConversationMetrics],
    ratings: RatingsTable,
    key: MetricKey,
    rating: str,
) -> CorrelationCell:
    """Pearson correlation of one metric with one rating across conversations.

    Only conversations with the metric defined and a complete rating row take
    part.
    """
    rating = rating.lower()
    if rating not in RATINGS:
        raise ValueError(f"unknown rating {rating!r}")
    items = metrics.values() if isinstance(metrics, Mapping) else metrics
    xs, ys = [], []
    for cm in sorted(items, key=lambda c: c.conversation_id):
        if cm.conversation_id not in ratings:
            continue
        row = ratings[cm.conversation_id]
        value = cm.metric(key)
        if value is None or not row.complete:
            continue
        xs.append(value)
        ys.append(row.get(rating))
    if len(xs) < 3:
        return CorrelationCell(key, rating, None, "", f"insufficient data ({len(xs)} conversations)")
    try:
        res = pearson(xs, ys)
    except UndefinedCorrelationError as exc:
        return CorrelationCell(key, rating, None, "", f"undefined: {exc}")
    return CorrelationCell(key, rating, res, stars(res.p))


def grid_select(cells: Sequence[CorrelationCell]) -> CorrelationCell:
    """Most significant cell across section sizes; ties go to the smaller N."""
    if not cells:
        raise ValueError("grid_select needs at least one cell")
    scored = [c for c in cells if c.result is not None]
    if not scored:
        return min(cells, key=lambda c: c.key.n_turns)
    return min(scored, key=lambda c: (c.result.p, c.key.n_turns))


def rating_intercorrelations(ratings: RatingsTable) -> dict[tuple[str, str], CorrResult | None]:
    """Pearson r between every pair of rating scales over complete rows."""
    rows = [ratings[cid] for cid in ratings.ids() if ratings[cid].complete]
    cols = {s: [r.get(s) for r in rows] for s in RATINGS}
    out: dict[tuple[str, str], CorrResult | None] = {}
    for a in RATINGS:
        for b in RATINGS:
            if len(rows) < 3:
                out[(a, b)] = None
            elif a == b:
                out[(a, b)] = CorrResult(1.0, 0.0, len(rows))
            else:
                try:
                    out[(a, b)] = pearson(cols[a], cols[b])
                except UndefinedCorrelationError:
                    out[(a, b)] = None
    return out


def _num(x: float | None) -> float | None:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return float(x)


def _corr_doc(c: CorrResult | None) -> dict[str, Any] | None:
    return None if c is None else {"r": _num(c.r), "p": _num(c.p), "n": c.n}


def _run_doc(run: FeatureRun, n_chopped: int) -> dict[str, Any]:
    last = run.sections[-1].section.turn_indices[-1] if run.sections else -1
    return {
        "sections": [
            {
                "index": s.section.index,
                "first_turn": s.section.turn_indices[0],
                "last_turn": s.section.turn_indices[-1],
                "midpoint_s": s.section.midpoint_s,
                "corr": _corr_doc(s.corr),
                "state": s.state.value,
                "note": s.note,
            }
            for s in run.sections
        ],
        "unused_trailing_turns": n_chopped - 1 - last,
        "sync_ratio": None if run.ratios is None else run.ratios.sync_ratio,
        "anti_ratio": None if run.ratios is None else run.ratios.anti_ratio,
        "conflict_pairs": None if run.ratios is None else run.ratios.conflict_pairs,
        "differences": {
            "section": list(run.series.sections),
            "d": [float(v) for v in run.series.d],
            "t": [float(v) for v in run.series.t],
        },
        "diff_mean": _num(run.diff_mean),
        "diff_std": _num(run.diff_std),
        "trend": {"label": run.trend.label.value, "corr": _corr_doc(run.trend.corr), "note": run.trend.note},
    }


def conversation_doc(cm: ConversationMetrics, config: AnalysisConfig) -> dict[str, Any]:
    """Per-conversation synchrony and entrainment detail for every feature and N."""
    directions: dict[str, Any] = {}
    for direction in config.directions:
        if direction not in cm.chopped:
            continue
        n_chopped = cm.chopped[direction]
        feats: dict[str, Any] = {}
        for feature in FEATURES:
            per_n = {}
            for n in config.grid:
                run = cm.runs.get((feature, n, direction))
                if run is not None:
                    per_n[str(n)] = _run_doc(run, n_chopped)
            feats[feature] = per_n
        directions[direction.value] = {"chopped_turns": n_chopped, "features": feats}
    return {
        "conversation_id": cm.conversation_id,
        "turns": cm.n_turns,
        "notes": list(cm.notes),
        "directions": directions,
    }


@dataclass
class AnalysisReport:
    config: AnalysisConfig
    metrics: dict[str, ConversationMetrics]
    cells: list[CorrelationCell]
    selected: list[CorrelationCell]
    failures: list[CorpusFailure]
    excluded_from_correlation: list[str]
    intercorrelations: dict[tuple[str, str], CorrResult | None]

    def histogram_rows(self) -> list[dict[str, Any]]:
        rows = []
        for direction in self.config.directions:
            for n in self.config.grid:
                for feature in FEATURES:
                    for metric in ("sync_ratio", "anti_ratio"):
                        key = MetricKey(feature, metric, n, direction)
                        values = [
                            v for cid in sorted(self.metrics) if (v := self.metrics[cid].metric(key)) is not None
                        ]
                        for lo, hi, count in ratio_histogram(values):
                            rows.append(
                                {
                                    "feature": feature,
                                    "metric": metric,
                                    "N": n,
                                    "direction": direction.value,
                                    "bin_lo": lo,
                                    "bin_hi": hi,
                                    "count": count,
                                }
                            )
        return rows

    def trend_rows(self) -> list[dict[str, Any]]:
        """Fraction of conversations labelled convergent/divergent per feature and N."""
        rows = []
        for direction in self.config.directions:
            for n in self.config.grid:
                for feature in FEATURES:
                    labels = [
                        run.trend.label
                        for cid in sorted(self.metrics)
                        if (run := self.metrics[cid].runs.get((feature, n, direction))) is not None
                    ]
                    total = len(labels)
                    conv = sum(lbl is Trend.CONVERGENT for lbl in labels)
                    div = sum(lbl is Trend.DIVERGENT for lbl in labels)
                    rows.append(
                        {
                            "feature": feature,
                            "N": n,
                            "direction": direction.value,
                            "conversations": total,
                            "convergent": conv,
                            "divergent": div,
                            "convergent_frac": conv / total if total else None,
                            "divergent_frac": div / total if total else None,
                        }
                    )
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "conversations": sorted(self.metrics),
            "failures": [asdict(f) for f in self.failures],
            "excluded_from_correlation": list(self.excluded_from_correlation),
            "rating_intercorrelations": {
                f"{a}~{b}": _corr_doc(c) for (a, b), c in sorted(self.intercorrelations.items())
            },
            "selected": [c.row() for c in self.selected],
            "cells": [c.row() for c in self.cells],
            "trend_fractions": self.trend_rows(),
            "histograms": self.histogram_rows(),
            "per_conversation": {
                cid: conversation_doc(self.metrics[cid], self.config) for cid in sorted(self.metrics)
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n"


def rows_to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c]) for c in columns])
    return buf.getvalue()


def cells_csv(cells: Sequence[CorrelationCell]) -> str:
    return rows_to_csv([c.row() for c in cells], CELL_COLUMNS)


def _as_features(
    item: Conversation | ConversationFeatures,
    extractor: Callable[[Conversation], ConversationFeatures],
) -> ConversationFeatures:
    if isinstance(item, ConversationFeatures):
        return item
    return extractor(item)


def run_full_analysis(
    corpus: Sequence[Conversation | ConversationFeatures],
    ratings: RatingsTable,
    config: AnalysisConfig = AnalysisConfig(),
    *,
    failures: Iterable[CorpusFailure] = (),
    extractor: Callable[[Conversation], ConversationFeatures] = extract_features,
) -> AnalysisReport:
    """Run the whole pipeline over a corpus.

    Items may be loaded conversations (features are extracted on the fly) or
    precomputed features. A conversation that fails is listed under
    ``failures`` and left out; it never aborts the run.
    """
    failed = list(failures)
    if not corpus and not failed:
        raise ValueError("empty corpus")
    metrics: dict[str, ConversationMetrics] = {}
    for item in corpus:
        cid = item.conversation_id if isinstance(item, ConversationFeatures) else item.id
        try:
            feats = _as_features(item, extractor)
            metrics[cid] = compute_conversation_metrics(feats, config)
        except Exception as exc:  # noqa: BLE001 - per-conversation isolation
            log.warning("conversation %s failed: %s", cid, exc)
            failed.append(CorpusFailure(cid, f"{type(exc).__name__}: {exc}"))
    if not metrics:
        raise ValueError("no conversation could be analyzed")
    excluded = sorted(cid for cid in metrics if cid not in ratings or not ratings[cid].complete)

    cells: list[CorrelationCell] = []
    selected: list[CorrelationCell] = []
    for direction in config.directions:
        for feature in FEATURES:
            for metric in METRICS:
                for rating in RATINGS:
                    members = [
                        correlate_metric(metrics, ratings, MetricKey(feature, metric, n, direction), rating)
                        for n in config.grid
                    ]
                    cells.extend(members)
                    selected.append(grid_select(members))
    return AnalysisReport(
        config=config,
        metrics=metrics,
        cells=cells,
        selected=selected,
        failures=sorted(failed, key=lambda f: f.conversation_id),
        excluded_from_correlation=excluded,
        intercorrelations=rating_intercorrelations(ratings),
    )


_FEATURE_LABELS = {
    "pitch_median": "Pitch Median",
    "pitch_mean": "Pitch Mean",
    "pitch_std": "Pitch Std",
    "intensity_median": "Intensity Median",
    "intensity_mean": "Intensity Mean",
    "intensity_std": "Intensity Std",
    "speech_rate": "Speech Rate",
}


def _cell_text(cell: CorrelationCell) -> str:
    if cell.result is None:
        return "n/a"
    if not cell.star:
        return "N.S."
    return f"{cell.result.r:+.3f}{cell.star} N={cell.key.n_turns}"


def format_summary(report: AnalysisReport, direction: Direction) -> str:
    """Two text tables (ratios; difference mean/std) of grid-selected cells."""
    direction = Direction(direction)
    lookup = {
        (c.key.feature, c.key.metric, c.rating): c for c in report.selected if c.key.direction is direction
    }
    width = 18
    lines = [f"Direction: {direction.value}  (conversations: {len(report.metrics)}, "
             f"excluded from correlation: {len(report.excluded_from_correlation)})"]
    for title, (m1, m2) in (
        ("Synchrony ratio / Anti-synchrony ratio", ("sync_ratio", "anti_ratio")),
        ("Difference mean / Difference std", ("diff_mean", "diff_std")),
    ):
        lines.append("")
        lines.append(title)
        header = f"{'Feature':<17}" + "".join(f"{m}:{r.upper()}".ljust(width) for m in (m1, m2) for r in RATINGS)
        lines.append(header.rstrip())
        lines.append("-" * len(header))
        for feature in FEATURES:
            row = f"{_FEATURE_LABELS[feature]:<17}"
            for m in (m1, m2):
                for r in RATINGS:
                    row += f"{_cell_text(lookup[(feature, m, r)]):<{width}}"
            lines.append(row.rstrip())
    return "\n".join(lines)
