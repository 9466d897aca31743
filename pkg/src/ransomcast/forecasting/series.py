"""Daily count series and their CSV representation."""
from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass
from typing import Iterable, TextIO, Union

import numpy as np

from ..errors import SeriesTooShort


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Evenly spaced daily values starting at ``start_date``."""

    start_date: dt.date
    values: np.ndarray
    name: str = "series"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if np.any(values < 0):
            raise ValueError("count series must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.start_date == other.start_date
            and self.name == other.name
            and np.array_equal(self.values, other.values)
        )

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.values) - 1)

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self.values))]

    def index_of(self, day: dt.date) -> int:
        return (day - self.start_date).days

    def window(self, start: dt.date, end: dt.date) -> "TimeSeries":
        """Inclusive date slice; both ends must lie inside the series."""
        i, j = self.index_of(start), self.index_of(end)
        if i < 0 or j >= len(self) or i > j:
            raise SeriesTooShort(f"{self.name} does not cover {start}..{end}")
        return TimeSeries(start, self.values[i : j + 1], self.name)

    def head(self, n: int) -> "TimeSeries":
        return TimeSeries(self.start_date, self.values[:n], self.name)


SeriesLike = Union[TimeSeries, Iterable[float], np.ndarray]


def as_array(series: SeriesLike) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return np.asarray(series.values, dtype=float)
    return np.asarray(series, dtype=float)


def read_series_csv(stream: TextIO, name: str = "series") -> TimeSeries:
    """Read a ``date,value`` CSV with one row per consecutive day."""
    reader = csv.DictReader(row for row in stream if not row.startswith("#"))
    if reader.fieldnames is None or not {"date", "value"} <= set(reader.fieldnames):
        raise ValueError("series CSV needs a 'date,value' header")
    dates, values = [], []
    for row in reader:
        dates.append(dt.date.fromisoformat(row["date"].strip()))
        values.append(float(row["value"]))
    if not dates:
        raise SeriesTooShort("series CSV has no rows")
    for prev, cur in zip(dates, dates[1:]):
        if (cur - prev).days != 1:
            raise ValueError(f"series CSV is not daily-contiguous at {cur}")
    return TimeSeries(dates[0], np.array(values), name)


def write_series_csv(series: TimeSeries, stream: TextIO) -> None:
    stream.write("date,value\n")
    for day, value in zip(series.dates, series.values):
        stream.write(f"{day.isoformat()},{_fmt(value)}\n")


def series_to_csv_text(series: TimeSeries) -> str:
    buf = io.StringIO()
    write_series_csv(series, buf)
    return buf.getvalue()


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))
