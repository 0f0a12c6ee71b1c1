"""Reading, cleaning and summarising smart-meter CSV data.

The ingestion CSV schema is ``customer_id,timestamp,load_kw`` with one row
per 15-minute reading.  Cleaning removes, in order of precedence:

1. *incomplete* profiles (wrong number of points, or any missing reading),
2. profiles with any *negative* reading,
3. profiles that are *all zero over the first week* (672 quarter-hours).

Each profile is counted under the first rule that applies.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .model import CustomerRecord, LoadProfile

logger = logging.getLogger(__name__)

#: Number of 15-minute readings in the leading week checked by the
#: all-zero-start rule.
FIRST_WEEK_POINTS = 672

CSV_HEADER = ("customer_id", "timestamp", "load_kw")
RECORDS_HEADER = ("customer_id", "energy_kw15min", "peak_kw", "weight_level")


@dataclass(frozen=True)
class CleaningReport:
    """Counts of profiles removed by each cleaning rule."""

    original: int
    incomplete: int
    negative: int
    zero_first_week: int
    retained: int

    def __post_init__(self) -> None:
        removed = self.incomplete + self.negative + self.zero_first_week
        if self.retained + removed != self.original:
            raise ValueError("cleaning report counts do not reconcile")

    def to_dict(self) -> dict:
        return {
            "original": self.original,
            "incomplete": self.incomplete,
            "negative": self.negative,
            "zero_first_week": self.zero_first_week,
            "retained": self.retained,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def parse_meter_csv(path, interval_duration: float = 1.0) -> list[LoadProfile]:
    """Parse a meter-reading CSV into one LoadProfile per customer.

    Readings are ordered by timestamp (ISO-8601 strings sort correctly);
    an empty ``load_kw`` field becomes NaN (missing).  Duplicate
    (customer, timestamp) pairs and unparseable rows raise ValueError with
    the offending line number.  Profiles are returned sorted by customer id.
    """
    series: dict[str, dict[str, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            logger.warning("meter file %s is empty", path)
            return []
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(CSV_HEADER)!r}, "
                f"got {','.join(header)!r}"
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
            cid, ts, raw = row[0].strip(), row[1].strip(), row[2].strip()
            if not cid or not ts:
                raise ValueError(f"{path}: line {line}: empty customer_id or timestamp")
            if raw == "":
                value = float("nan")
            else:
                try:
                    value = float(raw)
                except ValueError:
                    raise ValueError(
                        f"{path}: line {line}: unparseable load_kw value {raw!r}"
                    ) from None
            per_customer = series.setdefault(cid, {})
            if ts in per_customer:
                raise ValueError(
                    f"{path}: line {line}: duplicate reading for customer "
                    f"{cid!r} at {ts!r}"
                )
            per_customer[ts] = value

    profiles = []
    for cid in sorted(series):
        readings = series[cid]
        values = np.array([readings[ts] for ts in sorted(readings)], dtype=float)
        profiles.append(LoadProfile(cid, values, interval_duration=interval_duration))
    if not profiles:
        logger.warning("meter file %s contains a header but no data rows", path)
    return profiles


def clean_profiles(
    profiles: list[LoadProfile], expected_points: int
) -> tuple[list[LoadProfile], CleaningReport]:
    """Apply the removal rules and return (retained profiles, report).

    A profile shorter than FIRST_WEEK_POINTS is checked for the all-zero
    rule over all its points.  Cleaning is idempotent: re-cleaning the
    retained set removes nothing.
    """
    if expected_points < 1:
        raise ValueError("expected_points must be positive")
    retained = []
    n_incomplete = n_negative = n_zero = 0
    for profile in profiles:
        if profile.n_points != expected_points or profile.has_missing():
            n_incomplete += 1
            continue
        if np.any(profile.values < 0.0):
            n_negative += 1
            continue
        head = profile.values[: min(FIRST_WEEK_POINTS, profile.n_points)]
        if np.all(head == 0.0):
            n_zero += 1
            continue
        retained.append(profile)
    report = CleaningReport(
        original=len(profiles),
        incomplete=n_incomplete,
        negative=n_negative,
        zero_first_week=n_zero,
        retained=len(retained),
    )
    logger.info(
        "cleaning: %d profiles -> %d retained (%d incomplete, %d negative, "
        "%d zero-start)",
        report.original,
        report.retained,
        report.incomplete,
        report.negative,
        report.zero_first_week,
    )
    return retained, report


def is_leap_year(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def leap_year_adjust(
    records: list[CustomerRecord], year: int
) -> list[CustomerRecord]:
    """Rescale leap-year consumptions by 365/366; peaks are unchanged.

    Non-leap years pass records through untouched, so consumptions from
    different calendar years are comparable.
    """
    if not is_leap_year(year):
        return list(records)
    return [
        CustomerRecord(
            r.customer_id,
            energy=r.energy * 365.0 / 366.0,
            peak=r.peak,
            weight_level=r.weight_level,
        )
        for r in records
    ]


def ec_percentile(records, a: float) -> float:
    """The a-th percentile of record consumptions (linear interpolation)."""
    if not 0 <= a <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    if len(records) == 0:
        raise ValueError("cannot take a percentile of an empty record set")
    energies = np.array([r.energy for r in records])
    return float(np.percentile(energies, a))


def write_records_csv(records, path) -> None:
    """Write customer records as CSV; floats use repr so values round-trip."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORDS_HEADER)
        for r in records:
            writer.writerow([r.customer_id, repr(r.energy), repr(r.peak), r.weight_level])


def read_records_csv(path) -> list[CustomerRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RECORDS_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(RECORDS_HEADER)!r}"
            )
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(
                    f"{path}: line {reader.line_num}: expected 4 fields"
                )
            records.append(
                CustomerRecord(
                    row[0], energy=float(row[1]), peak=float(row[2]),
                    weight_level=int(row[3]),
                )
            )
    return records
