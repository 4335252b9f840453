from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from prosync.analysis import (
    CELL_COLUMNS,
    METRICS,
    RATINGS,
    AnalysisConfig,
    ConversationMetrics,
    CorrelationCell,
    MetricKey,
    cells_csv,
    compute_conversation_metrics,
    correlate_metric,
    format_summary,
    grid_select,
    rating_intercorrelations,
    run_full_analysis,
)
from prosync.corpus import Conversation, Rating, RatingsTable
from prosync.prosody import FEATURES
from prosync.sectioning import Direction
from prosync.stats import CorrResult, stars
from prosync.synth import CorpusSpec, CouplingSpec, generate_corpus

KEY = MetricKey("pitch_median", "sync_ratio", 20, Direction.CLIENT_FIRST)


@pytest.fixture(scope="module")
def small_corpus():
    spec = CorpusSpec(
        coupling=CouplingSpec(kappa=0.9, noise_sd=0.3, turns=120, seed=11, coupled_fraction=0.5),
        conversations=20,
        fraction_spread=0.5,
        rating_coupling=0.8,
    )
    return generate_corpus(spec)


@pytest.fixture(scope="module")
def small_report(small_corpus):
    feats = [d.features for d in small_corpus.dyads]
    config = AnalysisConfig(directions=(Direction.CLIENT_FIRST, Direction.THERAPIST_FIRST))
    return run_full_analysis(feats, small_corpus.ratings, config)


def fake_metrics(values):
    out = []
    for i, v in enumerate(values):
        cm = ConversationMetrics(f"c{i:02d}", 100)
        cm.runs[(KEY.feature, KEY.n_turns, KEY.direction)] = _Run(v)
        out.append(cm)
    return out


@dataclasses.dataclass
class _Run:
    value: float | None

    def metric(self, name):
        return self.value


def table(rows):
    return RatingsTable({cid: Rating(*r) for cid, r in rows.items()})


def test_correlate_metric_planted():
    tes = list(range(20, 40))
    metrics = fake_metrics([0.01 * t for t in tes])
    ratings = table({f"c{i:02d}": (t, 0, 10) for i, t in enumerate(tes)})
    cell = correlate_metric(metrics, ratings, KEY, "TES")
    assert cell.result.r > 0.9 and cell.star == "***" and cell.n == 20


def test_correlate_metric_insufficient_and_incomplete():
    metrics = fake_metrics([0.1, 0.2, 0.3, 0.4])
    ratings = table({"c00": (20, 0, 10), "c01": (30, 0, 10), "c02": (40, None, 10), "c03": (25, 1, 9)})
    cell = correlate_metric(metrics, ratings, KEY, "tes")
    assert cell.result.n == 3
    cell = correlate_metric(metrics[:2], ratings, KEY, "tes")
    assert cell.result is None and "insufficient" in cell.note and cell.star == ""


def test_correlate_metric_skips_undefined_metric():
    metrics = fake_metrics([0.1, None, 0.3, 0.5, 0.2])
    ratings = table({f"c{i:02d}": (20 + i, 0, 10) for i in range(5)})
    assert correlate_metric(metrics, ratings, KEY, "tes").n == 4


def test_shuffled_ratings_rarely_starred():
    rng = np.random.default_rng(0)
    values = rng.uniform(0, 1, 30)
    metrics = fake_metrics(values)
    starred = 0
    for _ in range(100):
        tes = rng.permutation(np.arange(20, 50))
        ratings = table({f"c{i:02d}": (int(t), 0, 10) for i, t in enumerate(tes)})
        starred += correlate_metric(metrics, ratings, KEY, "tes").star != ""
    assert starred <= 20


def cell(n, p):
    key = MetricKey("pitch_median", "sync_ratio", n, "c-first")
    return CorrelationCell(key, "tes", CorrResult(0.3, p, 40), stars(p))


def test_grid_select_examples():
    cells = [cell(20, 0.20), cell(30, 0.04), cell(40, 0.008), cell(50, 0.06)]
    best = grid_select(cells)
    assert best.key.n_turns == 40 and best.star == "***"
    assert grid_select([cells[1]]) is cells[1]
    assert grid_select([cell(40, 0.01), cell(30, 0.01)]).key.n_turns == 30
    with pytest.raises(ValueError):
        grid_select([])


def test_grid_select_never_worse_than_members(small_report):
    by_group = {}
    for c in small_report.cells:
        by_group.setdefault((c.key.feature, c.key.metric, c.key.direction, c.rating), []).append(c)
    for sel in small_report.selected:
        members = by_group[(sel.key.feature, sel.key.metric, sel.key.direction, sel.rating)]
        scored = [m.result.p for m in members if m.result is not None]
        if scored:
            assert sel.result.p == min(scored)


def test_rating_intercorrelations():
    rows = {f"c{i}": (10 + i, 2 * i - 10, 5 + i) for i in range(8)}
    rows["bad"] = (30, None, 10)
    out = rating_intercorrelations(table(rows))
    assert out[("blri", "ses")].r == pytest.approx(1.0)
    assert out[("tes", "tes")].r == 1.0
    assert out[("blri", "ses")].n == 8


def test_rating_intercorrelations_shuffled_columns_near_zero():
    rng = np.random.default_rng(3)
    n = 400
    rows = {
        f"c{i}": (int(a), int(b), int(c))
        for i, (a, b, c) in enumerate(
            zip(rng.integers(9, 64, n), rng.integers(-48, 49, n), rng.integers(5, 26, n))
        )
    }
    out = rating_intercorrelations(table(rows))
    for a in RATINGS:
        for b in RATINGS:
            if a != b:
                assert abs(out[(a, b)].r) < 0.15


def test_report_cell_counts(small_report):
    per_direction = len(FEATURES) * len(METRICS) * len(RATINGS)
    assert len(small_report.selected) == 2 * per_direction
    assert len(small_report.cells) == 2 * per_direction * 4
    assert sorted(small_report.metrics) == [f"synth{i:03d}" for i in range(20)]


def test_report_json_deterministic(small_corpus, small_report):
    feats = [d.features for d in small_corpus.dyads]
    again = run_full_analysis(feats, small_corpus.ratings, small_report.config)
    assert again.to_json() == small_report.to_json()
    assert cells_csv(again.cells) == cells_csv(small_report.cells)
    assert cells_csv(small_report.cells).splitlines()[0] == ",".join(CELL_COLUMNS)


def test_rating_sign_flip(small_corpus, small_report):
    flipped = RatingsTable(
        {cid: Rating(r.tes, -r.blri, r.ses) for cid, r in small_corpus.ratings.rows.items()}
    )
    feats = [d.features for d in small_corpus.dyads]
    other = run_full_analysis(feats, flipped, small_report.config)
    for a, b in zip(small_report.cells, other.cells):
        if a.rating != "blri" or a.result is None:
            continue
        assert b.result.r == -a.result.r
        assert b.result.p == a.result.p


def test_missing_rating_only_changes_n(small_corpus, small_report):
    rows = dict(small_corpus.ratings.rows)
    rows["synth000"] = Rating(rows["synth000"].tes, None, None)
    feats = [d.features for d in small_corpus.dyads]
    other = run_full_analysis(feats, RatingsTable(rows), small_report.config)
    assert other.excluded_from_correlation == ["synth000"]
    for cid, cm in small_report.metrics.items():
        for key, run in cm.runs.items():
            assert other.metrics[cid].runs[key].ratios == run.ratios
            assert other.metrics[cid].runs[key].diff_mean == run.diff_mean
    for a, b in zip(small_report.cells, other.cells):
        # Dropping a row can leave a constant metric column, making the cell undefined.
        if a.result is not None and b.result is not None:
            assert b.n == a.n - 1


def test_failing_conversation_is_listed(small_corpus):
    convs = [d.conversation for d in small_corpus.dyads[:4]]

    def extractor(conv: Conversation):
        if conv.id == "synth002":
            raise ValueError("unreadable audio")
        return small_corpus.dyads[int(conv.id[-3:])].features

    report = run_full_analysis(convs, small_corpus.ratings, extractor=extractor)
    assert [f.conversation_id for f in report.failures] == ["synth002"]
    assert "synth002" not in report.metrics and len(report.metrics) == 3


def test_empty_corpus_errors():
    with pytest.raises(ValueError):
        run_full_analysis([], RatingsTable({}))


def test_short_conversation_excluded_at_large_n(small_corpus):
    feats = small_corpus.dyads[0].features
    cm = compute_conversation_metrics(feats, AnalysisConfig(grid=(20, 130)))
    assert ("pitch_mean", 20, Direction.CLIENT_FIRST) in cm.runs
    assert ("pitch_mean", 130, Direction.CLIENT_FIRST) not in cm.runs
    assert any("N=130" in note for note in cm.notes)


def test_summary_shapes(small_report):
    text = format_summary(small_report, "c-first")
    assert "Pitch Median" in text and "Speech Rate" in text
    assert "sync_ratio:TES" in text
    assert text.count("\n") > 2 * len(FEATURES)
    planted = [c for c in small_report.selected if c.key.metric == "sync_ratio" and c.rating == "tes"]
    assert any(c.star for c in planted)


def test_config_validation():
    with pytest.raises(ValueError):
        AnalysisConfig(grid=(21,))
    with pytest.raises(ValueError):
        AnalysisConfig(grid=())
    assert AnalysisConfig(grid=(40, 20, 40)).grid == (20, 40)
    with pytest.raises(ValueError):
        MetricKey("loudness", "sync_ratio", 20, "c-first")
