"""Parsing and validation of monthly crash/VMT series.

Input files are UTF-8 CSVs with header ``year,month,crashes,vmt_thousands``.
Rows may arrive unsorted; after sorting they must form a gap-free run of
consecutive calendar months. Crash rates are stored as dimensionless
fractions (crashes divided by VMT in thousands), never as percentages.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

HEADER = ("year", "month", "crashes", "vmt_thousands")


class CrashvolError(Exception):
    """Base error; `code` is the machine-parsable prefix used by the CLI."""

    code = "E_ERROR"


class ParseError(CrashvolError):
    code = "E_PARSE"


class GapError(CrashvolError):
    code = "E_GAP"


class RangeError(CrashvolError):
    code = "E_RANGE"


class ValidationError(CrashvolError):
    code = "E_VALIDATION"


class AlignmentError(CrashvolError):
    code = "E_ALIGN"


class ConvergenceError(CrashvolError):
    code = "E_CONVERGENCE"

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InsufficientDataError(CrashvolError):
    code = "E_VALIDATION"


def add_months(year: int, month: int, k: int) -> tuple[int, int]:
    """Shift a (year, month) pair by k calendar months."""
    idx = year * 12 + (month - 1) + k
    return idx // 12, idx % 12 + 1


def month_span(start: tuple[int, int], end: tuple[int, int]) -> list[tuple[int, int]]:
    """Inclusive list of consecutive (year, month) pairs from start to end."""
    n = (end[0] - start[0]) * 12 + (end[1] - start[1]) + 1
    if n < 1:
        raise RangeError(f"window start {start} is after end {end}")
    return [add_months(start[0], start[1], k) for k in range(n)]


@dataclass(frozen=True)
class MonthlyObservation:
    year: int
    month: int
    crashes: int
    vmt_thousands: float

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValidationError(f"month {self.month} outside 1..12 ({self.year})")
        if self.crashes < 0:
            raise ValidationError(f"negative crash count at {self.year}-{self.month:02d}")
        if self.vmt_thousands <= 0:
            raise ValidationError(f"nonpositive VMT at {self.year}-{self.month:02d}")

    @property
    def rate(self) -> float:
        return self.crashes / self.vmt_thousands


@dataclass(frozen=True)
class MonthlySeries:
    """Gap-free run of monthly observations with derived crash rates."""

    observations: tuple[MonthlyObservation, ...]
    rates: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.observations:
            raise ValidationError("empty series")
        prev = None
        for ob in self.observations:
            if prev is not None:
                expect = add_months(prev.year, prev.month, 1)
                got = (ob.year, ob.month)
                if got != expect:
                    if got == (prev.year, prev.month):
                        raise GapError(f"duplicate month {got[0]}-{got[1]:02d}")
                    raise GapError(f"missing month {expect[0]}-{expect[1]:02d}")
            prev = ob
        rates = np.array([ob.rate for ob in self.observations])
        object.__setattr__(self, "rates", rates)
        rates.flags.writeable = False

    def __len__(self):
        return len(self.observations)

    @property
    def start(self) -> tuple[int, int]:
        return self.observations[0].year, self.observations[0].month

    @property
    def end(self) -> tuple[int, int]:
        return self.observations[-1].year, self.observations[-1].month

    @property
    def months(self) -> list[tuple[int, int]]:
        return [(ob.year, ob.month) for ob in self.observations]

    def index_of(self, year: int, month: int) -> int:
        i = (year - self.observations[0].year) * 12 + (month - self.observations[0].month)
        if not 0 <= i < len(self.observations):
            raise RangeError(
                f"{year}-{month:02d} outside series span "
                f"{self.start[0]}-{self.start[1]:02d}..{self.end[0]}-{self.end[1]:02d}"
            )
        return i


def parse_monthly_csv(path) -> MonthlySeries:
    """Read a crash/VMT CSV into a validated MonthlySeries."""
    # OSError (missing file, permissions) is left to the caller's I/O handling
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"{path}: expected header {','.join(HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                rows.append(
                    MonthlyObservation(
                        year=int(row[0]),
                        month=int(row[1]),
                        crashes=int(row[2]),
                        vmt_thousands=float(row[3]),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    rows.sort(key=lambda ob: (ob.year, ob.month))
    return MonthlySeries(tuple(rows))


def write_monthly_csv(series: MonthlySeries, path) -> None:
    """Serialize a MonthlySeries back to the canonical CSV layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for ob in series.observations:
            vmt = ob.vmt_thousands
            vmt_txt = f"{vmt:.10g}"
            writer.writerow([ob.year, ob.month, ob.crashes, vmt_txt])


def slice_window(series: MonthlySeries, start: tuple[int, int], end: tuple[int, int]) -> MonthlySeries:
    """Inclusive sub-series between two (year, month) bounds."""
    i = series.index_of(*start)
    j = series.index_of(*end)
    if j < i:
        raise RangeError(f"window start {start} is after end {end}")
    return MonthlySeries(series.observations[i : j + 1])


def merge_series(a: MonthlySeries, b: MonthlySeries) -> MonthlySeries:
    """Union of two overlapping or adjacent series.

    Overlapping months must agree exactly; the result must still be gap-free.
    """
    seen: dict[tuple[int, int], MonthlyObservation] = {}
    for ob in a.observations + b.observations:
        key = (ob.year, ob.month)
        if key in seen and seen[key] != ob:
            raise ValidationError(f"conflicting values for {key[0]}-{key[1]:02d}")
        seen[key] = ob
    return MonthlySeries(tuple(seen[k] for k in sorted(seen)))
