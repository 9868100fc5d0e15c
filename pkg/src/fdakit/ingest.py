"""Loading and standardizing state-level cumulative case data.

Input is the familiar five-column CSV layout (date, state, fips, cases,
deaths) holding cumulative confirmed and death counts per state per day,
plus a two-column state population table. Standardization gap-fills each
state's calendar, converts to per-million, and derives clamped daily
increments, keeping an audit flag wherever a negative reporting correction
was clamped away.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass

import numpy as np

from .funcdata import IrregularFunctionalDataset

__all__ = [
    "CaseRecord",
    "RegionSeries",
    "CONTINENTAL_STATES",
    "load_nyt",
    "load_populations",
    "standardize",
    "standardize_deaths",
    "national_series",
    "as_functional_dataset",
]

NYT_HEADER = ["date", "state", "fips", "cases", "deaths"]
POPULATION_HEADER = ["state", "population"]

#: the 50 states; the federal district and territories are excluded
CONTINENTAL_STATES = frozenset(
    {
        "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado",
        "Connecticut", "Delaware", "Florida", "Georgia", "Hawaii", "Idaho",
        "Illinois", "Indiana", "Iowa", "Kansas", "Kentucky", "Louisiana",
        "Maine", "Maryland", "Massachusetts", "Michigan", "Minnesota",
        "Mississippi", "Missouri", "Montana", "Nebraska", "Nevada",
        "New Hampshire", "New Jersey", "New Mexico", "New York",
        "North Carolina", "North Dakota", "Ohio", "Oklahoma", "Oregon",
        "Pennsylvania", "Rhode Island", "South Carolina", "South Dakota",
        "Tennessee", "Texas", "Utah", "Vermont", "Virginia", "Washington",
        "West Virginia", "Wisconsin", "Wyoming",
    }
)


@dataclass(frozen=True)
class CaseRecord:
    date: dt.date
    region: str
    cumulative_confirmed: int
    cumulative_deaths: int


@dataclass(frozen=True)
class RegionSeries:
    """One state's gap-free per-million series over a window.

    cumulative and daily are per-million; correction_flags marks days where
    a negative raw increment was clamped to zero.
    """

    region: str
    population: int
    dates: tuple
    cumulative: np.ndarray
    daily: np.ndarray
    correction_flags: np.ndarray


def _open_text(source):
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            return io.StringIO(data.decode("utf-8"))
        return io.StringIO(data)
    with open(source, "rb") as f:
        return io.StringIO(f.read().decode("utf-8"))


def load_nyt(source) -> list:
    """Parse a cases CSV (path or stream) into CaseRecord rows.

    The header must be exactly ``date,state,fips,cases,deaths``. Row order
    is preserved; rows for non-state entities are kept (the 50-state filter
    happens later, in :func:`standardize`).

    Raises
    ------
    ValueError
        Missing or wrong header, or any malformed row (reported with its
        line number).
    """
    text = _open_text(source)
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("format error: empty input, missing header") from None
    if header != NYT_HEADER:
        raise ValueError(
            f"format error: expected header {','.join(NYT_HEADER)!r}, "
            f"got {','.join(header)!r}"
        )
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            date = dt.date.fromisoformat(row[0])
        except ValueError:
            raise ValueError(f"line {lineno}: bad date {row[0]!r}") from None
        region = row[1].strip()
        if not region:
            raise ValueError(f"line {lineno}: empty state name")
        try:
            cases = int(row[3])
            deaths = int(row[4])
        except ValueError:
            raise ValueError(
                f"line {lineno}: counts must be integers, got {row[3]!r}/{row[4]!r}"
            ) from None
        if cases < 0 or deaths < 0:
            raise ValueError(f"line {lineno}: negative count")
        records.append(CaseRecord(date, region, cases, deaths))
    return records


def load_populations(source) -> dict:
    """Parse a ``state,population`` CSV into a name -> persons dict."""
    text = _open_text(source)
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("format error: empty population file") from None
    if header != POPULATION_HEADER:
        raise ValueError(
            f"format error: expected header {','.join(POPULATION_HEADER)!r}, "
            f"got {','.join(header)!r}"
        )
    out = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ValueError(f"line {lineno}: expected 2 fields")
        try:
            pop = int(row[1])
        except ValueError:
            raise ValueError(f"line {lineno}: population must be an integer") from None
        if pop <= 0:
            raise ValueError(f"line {lineno}: population must be positive")
        out[row[0].strip()] = pop
    return out


def _carry_forward(by_date: dict, days: list, field: str) -> np.ndarray:
    """Gap-fill a cumulative series over a day list, zero before first report."""
    out = np.zeros(len(days))
    level = 0.0
    for j, day in enumerate(days):
        rec = by_date.get(day)
        if rec is not None:
            level = float(getattr(rec, field))
        out[j] = level
    return out


def _day_range(start: dt.date, end: dt.date) -> list:
    n = (end - start).days + 1
    return [start + dt.timedelta(days=j) for j in range(n)]


def standardize(records, populations: dict, window) -> list:
    """Per-million, gap-free series for the 50 states over a date window.

    Parameters
    ----------
    records : list of CaseRecord
    populations : dict
        Must cover every region appearing in records.
    window : (start_date, end_date)
        Dates, inclusive. The window must overlap the data.

    Returns
    -------
    list of RegionSeries, states sorted by name

    Notes
    -----
    Daily increments are max(0, today - yesterday) within the window, with
    the first day set to zero, so that the increments sum exactly to the
    cumulative change over the window whenever no clamp fires. Clamped days
    are flagged, not redistributed.
    """
    start, end = window
    if isinstance(start, str):
        start = dt.date.fromisoformat(start)
    if isinstance(end, str):
        end = dt.date.fromisoformat(end)
    if start > end:
        raise ValueError("window start is after window end")

    regions = {}
    for rec in records:
        regions.setdefault(rec.region, {})[rec.date] = rec
    missing = sorted(set(regions) - set(populations))
    if missing:
        raise ValueError(f"regions missing from the population map: {missing}")
    if not any(start <= d <= end for per in regions.values() for d in per):
        raise ValueError("window contains no data")

    days = _day_range(start, end)
    out = []
    for name in sorted(regions):
        if name not in CONTINENTAL_STATES:
            continue
        per = regions[name]
        scale = 1e6 / populations[name]
        cum = _carry_forward(per, days, "cumulative_confirmed") * scale
        raw_diff = np.diff(cum, prepend=cum[0] if cum.size else 0.0)
        flags = raw_diff < 0
        daily = np.clip(raw_diff, 0.0, None)
        out.append(
            RegionSeries(
                region=name,
                population=populations[name],
                dates=tuple(days),
                cumulative=cum,
                daily=daily,
                correction_flags=flags,
            )
        )
    return out


def standardize_deaths(records, populations: dict, window) -> list:
    """Same as :func:`standardize` but for the cumulative death counts."""
    recs = [
        CaseRecord(r.date, r.region, r.cumulative_deaths, r.cumulative_deaths)
        for r in records
    ]
    return standardize(recs, populations, window)


def national_series(records, window=None):
    """Nationwide cumulative counts: the sum over every region in the file.

    Each region is gap-filled by carrying its cumulative level forward (zero
    before its first report) so that late-reporting regions do not dent the
    total. No population scaling and no state filter are applied.

    Returns
    -------
    (dates, counts) : list of date, ndarray of float
    """
    if not records:
        raise ValueError("no records")
    regions = {}
    for rec in records:
        regions.setdefault(rec.region, {})[rec.date] = rec
    all_dates = [rec.date for rec in records]
    start, end = min(all_dates), max(all_dates)
    if window is not None:
        w0, w1 = window
        if isinstance(w0, str):
            w0 = dt.date.fromisoformat(w0)
        if isinstance(w1, str):
            w1 = dt.date.fromisoformat(w1)
    days = _day_range(start, end)
    total = np.zeros(len(days))
    for per in regions.values():
        total += _carry_forward(per, days, "cumulative_confirmed")
    if window is not None:
        keep = [j for j, d in enumerate(days) if w0 <= d <= w1]
        if not keep:
            raise ValueError("window contains no data")
        days = [days[j] for j in keep]
        total = total[keep]
    return days, total


def as_functional_dataset(series_list, field: str = "daily") -> IrregularFunctionalDataset:
    """RegionSeries list as a functional dataset on day-offset times.

    Times are 0-based day offsets from the window start; the domain spans
    the full window.
    """
    if not series_list:
        raise ValueError("no series")
    if field not in ("daily", "cumulative"):
        raise ValueError("field must be 'daily' or 'cumulative'")
    n_days = len(series_list[0].dates)
    times = np.arange(n_days, dtype=float)
    subjects = []
    for s in series_list:
        if len(s.dates) != n_days:
            raise ValueError("all series must share one window")
        subjects.append((s.region, times, getattr(s, field)))
    return IrregularFunctionalDataset(
        subjects=tuple(subjects), domain=(0.0, float(n_days - 1))
    )
