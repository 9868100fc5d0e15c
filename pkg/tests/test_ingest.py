"""CSV ingestion, gap filling, correction flags, per-million scaling."""

import datetime as dt
import io

import numpy as np
import pytest

from fdakit.ingest import (
    CONTINENTAL_STATES,
    as_functional_dataset,
    load_nyt,
    load_populations,
    national_series,
    standardize,
    standardize_deaths,
)

PANEL = """date,state,fips,cases,deaths
2020-03-01,Washington,53,1,0
2020-03-02,Washington,53,2,0
2020-03-04,Washington,53,5,1
2020-03-01,Oregon,41,3,0
2020-03-03,Oregon,41,2,0
2020-03-04,Oregon,41,7,0
2020-03-02,Guam,66,4,0
2020-03-04,Guam,66,9,0
"""

POPS = "state,population\nWashington,7000000\nOregon,4000000\nGuam,165718\n"

WINDOW = (dt.date(2020, 3, 1), dt.date(2020, 3, 4))


@pytest.fixture
def records():
    return load_nyt(io.StringIO(PANEL))


@pytest.fixture
def pops():
    return load_populations(io.StringIO(POPS))


def test_load_nyt_parses_records(records):
    assert len(records) == 8
    first = records[0]
    assert first.date == dt.date(2020, 3, 1)
    assert first.cumulative_confirmed in (1, 3)
    assert isinstance(first.cumulative_deaths, int)
    assert {r.region for r in records} == {"Washington", "Oregon", "Guam"}


def test_load_nyt_reports_bad_rows_by_line():
    bad = "date,state,fips,cases,deaths\n2020-03-01,Washington,53,one,0\n"
    with pytest.raises(ValueError, match="line 2"):
        load_nyt(io.StringIO(bad))
    with pytest.raises(ValueError, match="line 3"):
        load_nyt(io.StringIO("date,state,fips,cases,deaths\n"
                             "2020-03-01,Washington,53,1,0\n"
                             "03/02/2020,Washington,53,2,0\n"))


def test_load_populations(pops):
    assert pops == {"Washington": 7000000, "Oregon": 4000000, "Guam": 165718}
    with pytest.raises(ValueError):
        load_populations(io.StringIO("state,population\nOhio,none\n"))


def test_standardize_scales_and_gap_fills(records, pops):
    series = standardize(records, pops, WINDOW)
    # Guam is not one of the 50 analysis states
    assert [s.region for s in series] == ["Oregon", "Washington"]
    wa = series[1]
    np.testing.assert_allclose(wa.cumulative, np.array([1, 2, 2, 5]) / 7.0)
    np.testing.assert_allclose(wa.daily, np.array([0, 1, 0, 3]) / 7.0)
    assert list(wa.correction_flags) == [False, False, False, False]
    assert wa.population == 7000000
    assert wa.dates[0] == WINDOW[0] and wa.dates[-1] == WINDOW[1]


def test_downward_revision_flagged_and_floored(records, pops):
    orc = standardize(records, pops, WINDOW)[0]
    # cumulative drops from 3 to 2 on 03-03: flagged, daily floored at zero
    np.testing.assert_allclose(orc.cumulative, [0.75, 0.75, 0.5, 1.75])
    np.testing.assert_allclose(orc.daily, [0.0, 0.0, 0.0, 1.25])
    assert list(orc.correction_flags) == [False, False, True, False]


def test_standardize_deaths_uses_death_column(records, pops):
    wa = [s for s in standardize_deaths(records, pops, WINDOW) if s.region == "Washington"][0]
    np.testing.assert_allclose(wa.cumulative, np.array([0, 0, 0, 1]) / 7.0)


def test_per_million_scaling_is_linear(records, pops):
    unit = {k: 1_000_000 for k in pops}
    raw = standardize(records, unit, WINDOW)
    scaled = standardize(records, pops, WINDOW)
    for r, s in zip(raw, scaled):
        np.testing.assert_allclose(
            s.cumulative * pops[r.region] / 1e6, r.cumulative, atol=1e-12
        )


def test_missing_population_is_an_error(records):
    with pytest.raises(ValueError, match="Oregon"):
        standardize(records, {"Washington": 7000000}, WINDOW)


def test_window_before_first_report_fills_zero(records, pops):
    early = (dt.date(2020, 2, 28), dt.date(2020, 3, 4))
    wa = [s for s in standardize(records, pops, early) if s.region == "Washington"][0]
    assert wa.cumulative[0] == 0.0
    assert len(wa.dates) == 6


def test_national_series_sums_every_region(records):
    dates, counts = national_series(records, WINDOW)
    assert dates[0] == WINDOW[0]
    # carried-forward levels: WA 2 + OR 2 + Guam 4 on the gap day
    np.testing.assert_allclose(counts, [4.0, 9.0, 8.0, 21.0])
    full_dates, full_counts = national_series(records)
    np.testing.assert_allclose(full_counts, counts)
    with pytest.raises(ValueError):
        national_series([])


def test_as_functional_dataset_fields(records, pops):
    series = standardize(records, pops, WINDOW)
    daily = as_functional_dataset(series, field="daily")
    assert len(daily) == 2
    assert daily.domain == (0.0, 3.0)
    sid, t, y = daily.subjects[0]
    np.testing.assert_allclose(t, [0.0, 1.0, 2.0, 3.0])
    cum = as_functional_dataset(series, field="cumulative")
    _, _, ycum = cum.subjects[0]
    # reported levels pass through untouched, revisions included
    np.testing.assert_array_equal(ycum, series[0].cumulative)
    with pytest.raises(ValueError):
        as_functional_dataset(series, field="weekly")


def test_state_filter_is_the_fifty_states():
    assert len(CONTINENTAL_STATES) == 50
    assert "New York" in CONTINENTAL_STATES
    assert "Guam" not in CONTINENTAL_STATES
    assert "District of Columbia" not in CONTINENTAL_STATES
    assert "Puerto Rico" not in CONTINENTAL_STATES
    assert "Hawaii" in CONTINENTAL_STATES
    assert "Alaska" in CONTINENTAL_STATES
