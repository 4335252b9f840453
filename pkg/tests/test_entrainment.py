from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prosync.entrainment import (
    DifferenceSeries,
    Trend,
    difference_series,
    entrainment_stats,
    section_difference,
    trend,
)
from prosync.sectioning import Section
from prosync.synchrony import UnanalyzableSection


def interleave(lead, follow):
    out = np.empty(2 * len(lead))
    out[0::2] = lead
    out[1::2] = follow
    return out


def sec(n, idx=0, t=1.0):
    return Section(idx, tuple(range(n)), t)


def test_examples():
    assert section_difference(sec(4), interleave([1, 2], [3, 2])) == 1.0
    assert section_difference(sec(4), interleave([5, -2], [5, -2])) == 0.0
    assert section_difference(sec(4), interleave([-1, np.nan], [4, 1])) == 5.0
    with pytest.raises(UnanalyzableSection):
        section_difference(sec(2), np.array([np.nan, 1.0]))


pair_lists = st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30)


@settings(max_examples=100, deadline=None)
@given(pair_lists, st.floats(-100, 100), st.floats(0.01, 100))
def test_difference_properties(pairs, shift, scale):
    lead = np.array([a for a, _ in pairs])
    follow = np.array([b for _, b in pairs])
    s = sec(2 * len(pairs))
    d = section_difference(s, interleave(lead, follow))
    assert d >= 0
    assert section_difference(s, interleave(follow, lead)) == d
    assert section_difference(s, interleave(lead + shift, follow + shift)) == pytest.approx(d, abs=1e-9)
    one_sided = section_difference(s, interleave(lead + shift, follow))
    assert abs(one_sided - d) <= abs(shift) + 1e-9
    assert section_difference(s, interleave(scale * lead, scale * follow)) == pytest.approx(scale * d, rel=1e-12, abs=1e-12)


def test_stats_examples():
    assert entrainment_stats(DifferenceSeries(np.array([1.0, 1, 1]), np.array([1.0, 2, 3]))) == (1.0, 0.0)
    assert entrainment_stats(DifferenceSeries(np.array([0.0, 2]), np.array([1.0, 2]))) == (1.0, 1.0)
    assert entrainment_stats(DifferenceSeries(np.array([3.0]), np.array([1.0])))[1] == 0.0
    with pytest.raises(UnanalyzableSection):
        entrainment_stats(DifferenceSeries(np.array([]), np.array([])))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20), st.lists(st.floats(0, 100), min_size=1, max_size=20))
def test_concatenated_mean_is_weighted_mean(a, b):
    def series(d, t0):
        return DifferenceSeries(np.array(d), t0 + np.arange(len(d), dtype=float))

    ma, _ = entrainment_stats(series(a, 0))
    mb, _ = entrainment_stats(series(b, 1000))
    mc, _ = entrainment_stats(series(a + b, 0))
    assert mc == pytest.approx((len(a) * ma + len(b) * mb) / (len(a) + len(b)), rel=1e-12, abs=1e-12)


def test_series_invariants():
    with pytest.raises(ValueError):
        DifferenceSeries(np.array([1.0, -1.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        DifferenceSeries(np.array([1.0, 1.0]), np.array([2.0, 2.0]))


def test_trend_examples():
    t = np.arange(10) * 30.0 + 15
    conv = trend(DifferenceSeries(np.linspace(5, 1, 10), t))
    assert conv.label is Trend.CONVERGENT and conv.corr.r < 0 and conv.corr.p < 0.05
    div = trend(DifferenceSeries(np.linspace(1, 5, 10), t))
    assert div.label is Trend.DIVERGENT
    flat = trend(DifferenceSeries(np.full(10, 2.0), t))
    assert flat.label is Trend.NEITHER and "undefined" in flat.note
    short = trend(DifferenceSeries(np.array([3.0, 1.0]), np.array([1.0, 2.0])))
    assert short.label is Trend.NEITHER and short.corr is None


def test_noise_series_mostly_neither():
    neither = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        series = DifferenceSeries(np.abs(rng.standard_normal(28)), np.arange(28) * 60.0)
        neither += trend(series).label is Trend.NEITHER
    assert neither >= 90


def test_index_time_axis():
    d = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
    # Uneven times; index mode ignores them.
    series = DifferenceSeries(d, np.array([1.0, 2.0, 3.0, 4.0, 1000.0]), (0, 1, 2, 3, 4))
    assert trend(series, time_axis="index").corr.r == pytest.approx(-1.0)
    assert trend(series).corr.r > -0.9
    with pytest.raises(ValueError):
        trend(series, time_axis="turns")


def test_difference_series_skips_unanalyzable():
    values = interleave([1.0, np.nan, 3.0, 4.0], [2.0, 5.0, 3.0, 1.0])
    sections = [Section(0, (0, 1), 1.0), Section(1, (2, 3), 2.0), Section(2, (4, 5, 6, 7), 3.0)]
    series = difference_series(sections, values)
    assert series.sections == (0, 2)
    np.testing.assert_allclose(series.d, [1.0, 1.5])
