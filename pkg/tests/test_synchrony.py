from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_turns
from prosync.sectioning import Section, SectionSpec, build_sections
from prosync.stats import CorrResult
from prosync.synchrony import (
    SectionResult,
    SyncState,
    SyncThresholds,
    UnanalyzableSection,
    analyze_sections,
    classify,
    ratio_histogram,
    section_correlation,
    state_ratios,
)


def interleave(lead, follow):
    out = np.empty(2 * len(lead))
    out[0::2] = lead
    out[1::2] = follow
    return out


def one_section(n_turns):
    return Section(0, tuple(range(n_turns)), 1.0)


def test_monotone_sections():
    sec = one_section(10)
    assert section_correlation(sec, interleave([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])).r == 1.0
    assert section_correlation(sec, interleave([1, 2, 3, 4, 5], [5, 4, 3, 2, 1])).r == -1.0


def test_missing_pairs_are_dropped():
    rng = np.random.default_rng(0)
    values = interleave(rng.standard_normal(20), rng.standard_normal(20))
    values[[0, 13, 21]] = np.nan  # one leader and two follower values in 3 distinct pairs
    assert section_correlation(one_section(40), values).n == 17


def test_too_few_pairs_unanalyzable():
    values = interleave([1.0, 2.0, np.nan], [1.0, 3.0, 2.0])
    with pytest.raises(UnanalyzableSection):
        section_correlation(one_section(6), values)
    with pytest.raises(UnanalyzableSection):
        section_correlation(one_section(6), interleave([1, 1, 1], [1, 2, 3]))


@pytest.mark.parametrize(
    "r, p, state",
    [
        (0.8, 0.001, SyncState.SYNCHRONOUS),
        (0.6, 0.2, SyncState.NEUTRAL),
        (-0.55, 0.01, SyncState.ANTI_SYNCHRONOUS),
        (0.5, 0.049, SyncState.SYNCHRONOUS),
        (0.4999, 0.001, SyncState.NEUTRAL),
        (0.5, 0.05, SyncState.NEUTRAL),
        (-0.5, 0.049, SyncState.ANTI_SYNCHRONOUS),
        (-0.4999, 0.001, SyncState.NEUTRAL),
    ],
)
def test_classify(r, p, state):
    assert classify(CorrResult(r, p, 20)) is state


def test_threshold_validation():
    with pytest.raises(ValueError):
        SyncThresholds(0.0, 0.05)
    with pytest.raises(ValueError):
        SyncThresholds(0.5, 1.0)


def sections_for(length, n, m=10):
    return build_sections(make_turns("CT" * (length // 2)), SectionSpec(n, m))


def results(sections, states):
    return [SectionResult(s, None, st_) for s, st_ in zip(sections, states)]


def test_ratio_union_example():
    secs = sections_for(60, 20)
    assert len(secs) == 5
    states = [SyncState.SYNCHRONOUS] * 2 + [SyncState.NEUTRAL] * 3
    ratios = state_ratios(results(secs, states), 60)
    assert ratios.sync_ratio == 0.5 and ratios.anti_ratio == 0.0


def test_all_or_nothing():
    secs = sections_for(60, 20)
    assert state_ratios(results(secs, [SyncState.SYNCHRONOUS] * 5), 60).sync_ratio == 1.0
    none = state_ratios(results(secs, [SyncState.NEUTRAL] * 5), 60)
    assert (none.sync_ratio, none.anti_ratio) == (0.0, 0.0)


def test_conflicting_pairs_count_in_both_and_are_logged(caplog):
    secs = sections_for(60, 20)
    states = [SyncState.SYNCHRONOUS, SyncState.ANTI_SYNCHRONOUS] + [SyncState.NEUTRAL] * 3
    with caplog.at_level(logging.INFO, logger="prosync.synchrony"):
        ratios = state_ratios(results(secs, states), 60)
    assert ratios.sync_ratio == pytest.approx(10 / 30)
    assert ratios.anti_ratio == pytest.approx(10 / 30)
    assert ratios.conflict_pairs == 5
    assert any("both" in rec.message for rec in caplog.records)


@settings(max_examples=100, deadline=None)
@given(
    half_len=st.integers(10, 80),
    states=st.lists(st.sampled_from(list(SyncState)), min_size=1, max_size=20),
    extra=st.integers(0, 19),
)
def test_ratio_bounds_and_monotonicity(half_len, states, extra):
    secs = sections_for(2 * half_len, 20)
    states = (states * 20)[: len(secs)]
    base = state_ratios(results(secs, states), 2 * half_len)
    assert 0.0 <= base.sync_ratio <= 1.0 and 0.0 <= base.anti_ratio <= 1.0
    if base.conflict_pairs == 0:
        assert base.sync_ratio + base.anti_ratio <= 1.0 + 1e-12
    k = extra % len(secs)
    more = list(states)
    more[k] = SyncState.SYNCHRONOUS
    assert state_ratios(results(secs, more), 2 * half_len).sync_ratio >= base.sync_ratio


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.sampled_from(list(SyncState)))
def test_single_full_section_gives_zero_or_one(half_len, state):
    length = 2 * half_len
    secs = build_sections(make_turns("CT" * half_len), SectionSpec(length, 2))
    ratios = state_ratios(results(secs, [state]), length)
    assert ratios.sync_ratio in (0.0, 1.0) and ratios.anti_ratio in (0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_direction_swap_with_swapped_speakers(seed, coupling):
    from prosync.sectioning import chop

    rng = np.random.default_rng(seed)
    lead = rng.standard_normal(45)
    values = interleave(lead, coupling * lead + rng.standard_normal(45))
    roles = {}
    for labels, direction in (("CT", "c-first"), ("TC", "t-first")):
        turns = make_turns(labels * 45)
        chopped = chop(turns, direction)
        secs = build_sections(chopped, SectionSpec(20, 10, direction))
        roles[direction] = state_ratios(analyze_sections(secs, values), len(chopped))
    assert roles["c-first"] == roles["t-first"]


def test_analyze_marks_unanalyzable_neutral():
    values = np.full(20, np.nan)
    res = analyze_sections([one_section(20)], values)
    assert res[0].state is SyncState.NEUTRAL and res[0].corr is None and res[0].note


def test_histogram():
    rows = ratio_histogram([0.0, 0.04, 0.05, 0.5, 1.0, 0.999])
    assert len(rows) == 20
    assert rows[0] == (0.0, 0.05, 2)
    assert rows[1][2] == 1
    assert rows[10][2] == 1
    assert rows[-1] == (0.95, 1.0, 2)
    assert sum(r[2] for r in rows) == 6
