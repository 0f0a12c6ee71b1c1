"""CSV parsing, cleaning rules, leap-year adjustment and percentiles."""

import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from velander.ingest import (
    FIRST_WEEK_POINTS,
    CleaningReport,
    clean_profiles,
    ec_percentile,
    is_leap_year,
    leap_year_adjust,
    parse_meter_csv,
    read_records_csv,
    write_records_csv,
)
from velander.model import CustomerRecord, LoadProfile


def write_csv(path, rows, header="customer_id,timestamp,load_kw"):
    lines = [header] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- parsing ----------------------------------------------------------------


def test_parse_two_customers_one_day(tmp_path):
    rows = []
    for cid in ("b", "a"):
        for t in range(96):
            rows.append(f"{cid},2023-01-01T{t // 4:02d}:{15 * (t % 4):02d}:00,{t}.5")
    path = tmp_path / "m.csv"
    write_csv(path, rows)
    profiles = parse_meter_csv(path)
    assert [p.customer_id for p in profiles] == ["a", "b"]
    assert all(p.n_points == 96 for p in profiles)
    assert profiles[0].values[0] == 0.5
    assert profiles[0].values[-1] == 95.5


def test_parse_orders_by_timestamp_not_row_order(tmp_path):
    path = tmp_path / "m.csv"
    write_csv(
        path,
        [
            "a,2023-01-01T00:30:00,3.0",
            "a,2023-01-01T00:00:00,1.0",
            "a,2023-01-01T00:15:00,2.0",
        ],
    )
    (profile,) = parse_meter_csv(path)
    assert list(profile.values) == [1.0, 2.0, 3.0]


def test_parse_duplicate_timestamp_names_customer_and_timestamp(tmp_path):
    path = tmp_path / "m.csv"
    write_csv(
        path,
        ["a,2023-01-01T00:00:00,1.0", "a,2023-01-01T00:00:00,2.0"],
    )
    with pytest.raises(ValueError) as err:
        parse_meter_csv(path)
    assert "duplicate" in str(err.value)
    assert "'a'" in str(err.value)
    assert "2023-01-01T00:00:00" in str(err.value)


def test_parse_malformed_row_reports_line_number(tmp_path):
    path = tmp_path / "m.csv"
    write_csv(path, ["a,2023-01-01T00:00:00,1.0", "a,2023-01-01T00:15:00,oops"])
    with pytest.raises(ValueError, match="line 3"):
        parse_meter_csv(path)


def test_parse_wrong_field_count(tmp_path):
    path = tmp_path / "m.csv"
    write_csv(path, ["a,2023-01-01T00:00:00"])
    with pytest.raises(ValueError, match="line 2"):
        parse_meter_csv(path)


def test_parse_empty_value_becomes_missing(tmp_path):
    path = tmp_path / "m.csv"
    write_csv(path, ["a,2023-01-01T00:00:00,", "a,2023-01-01T00:15:00,2.0"])
    (profile,) = parse_meter_csv(path)
    assert profile.has_missing()


def test_parse_empty_file_warns(tmp_path, caplog):
    path = tmp_path / "m.csv"
    path.write_text("", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        assert parse_meter_csv(path) == []
    assert "empty" in caplog.text


def test_parse_rejects_wrong_header(tmp_path):
    path = tmp_path / "m.csv"
    write_csv(path, ["a,2023-01-01T00:00:00,1.0"], header="id,time,kw")
    with pytest.raises(ValueError, match="header"):
        parse_meter_csv(path)


# --- cleaning ----------------------------------------------------------------


def P(cid, values):
    return LoadProfile(cid, np.asarray(values, dtype=float))


def test_clean_removes_each_rule(tmp_path):
    expected = 8
    keep = P("keep", [1.0] * 8)
    short = P("short", [1.0] * 7)
    missing = P("missing", [1.0] * 7 + [np.nan])
    negative = P("neg", [1.0] * 7 + [-0.1])
    zeros = P("zeros", [0.0] * 8)
    kept, report = clean_profiles([keep, short, missing, negative, zeros], expected)
    assert [p.customer_id for p in kept] == ["keep"]
    assert report.to_dict() == {
        "original": 5,
        "incomplete": 2,
        "negative": 1,
        "zero_first_week": 1,
        "retained": 1,
    }


def test_clean_zero_rule_uses_first_672_points():
    expected = FIRST_WEEK_POINTS + 24
    values = np.zeros(expected)
    values[FIRST_WEEK_POINTS:] = 2.0  # nonzero only after the first week
    removed = P("z", values)
    live = np.zeros(expected)
    live[FIRST_WEEK_POINTS - 1] = 1.0  # nonzero inside the first week
    live[FIRST_WEEK_POINTS:] = 2.0
    kept, report = clean_profiles([removed, P("ok", live)], expected)
    assert [p.customer_id for p in kept] == ["ok"]
    assert report.zero_first_week == 1


def test_clean_precedence_incomplete_before_negative():
    bad = P("b", [-1.0] * 7)  # both short and negative
    _, report = clean_profiles([bad], 8)
    assert report.incomplete == 1
    assert report.negative == 0


def test_clean_precedence_negative_before_zero_week():
    values = np.zeros(8)
    values[3] = -0.5  # zero-start AND negative
    _, report = clean_profiles([P("b", values)], 8)
    assert report.negative == 1
    assert report.zero_first_week == 0


def test_clean_is_idempotent():
    rng = np.random.default_rng(0)
    profiles = [P(f"c{i}", rng.uniform(0, 2, 8)) for i in range(5)]
    profiles += [P("bad", [-1.0] * 8)]
    kept, _ = clean_profiles(profiles, 8)
    kept2, report2 = clean_profiles(kept, 8)
    assert [p.customer_id for p in kept2] == [p.customer_id for p in kept]
    assert report2.retained == report2.original


def test_cleaning_report_must_reconcile():
    with pytest.raises(ValueError):
        CleaningReport(original=5, incomplete=1, negative=1, zero_first_week=1,
                       retained=3)


def test_cleaning_report_json_schema(tmp_path):
    report = CleaningReport(5, 1, 1, 1, 2)
    path = tmp_path / "r.json"
    report.to_json(path)
    import json

    assert json.loads(path.read_text()) == {
        "original": 5,
        "incomplete": 1,
        "negative": 1,
        "zero_first_week": 1,
        "retained": 2,
    }


# --- leap year ----------------------------------------------------------------


def test_is_leap_year():
    assert is_leap_year(2024)
    assert is_leap_year(2000)
    assert not is_leap_year(2023)
    assert not is_leap_year(1900)


def test_leap_year_adjust_examples():
    rec = CustomerRecord("a", energy=366.0, peak=9.0)
    (adjusted,) = leap_year_adjust([rec], 2024)
    assert adjusted.energy == 365.0
    assert adjusted.peak == 9.0

    (same,) = leap_year_adjust([CustomerRecord("a", 100.0, 9.0)], 2023)
    assert same.energy == 100.0

    (zero,) = leap_year_adjust([CustomerRecord("a", 0.0, 0.0)], 2024)
    assert zero.energy == 0.0


# --- percentiles ---------------------------------------------------------------


def R(energies):
    return [CustomerRecord(f"c{i}", float(e), 0.0) for i, e in enumerate(energies)]


def test_ec_percentile_examples():
    assert ec_percentile(R([1, 2, 3, 4, 5]), 50) == 3.0
    assert ec_percentile(R([1, 3]), 50) == 2.0
    assert ec_percentile(R([7, 2, 9]), 0) == 2.0
    assert ec_percentile(R([7, 2, 9]), 100) == 9.0


def test_ec_percentile_errors():
    with pytest.raises(ValueError):
        ec_percentile([], 50)
    with pytest.raises(ValueError):
        ec_percentile(R([1.0]), 101)


@given(
    energies=st.lists(
        st.floats(min_value=0, max_value=1e6), min_size=1, max_size=30
    ),
    a=st.floats(min_value=0, max_value=100),
    b=st.floats(min_value=0, max_value=100),
)
def test_ec_percentile_monotone_and_bounded(energies, a, b):
    records = R(energies)
    lo, hi = sorted((a, b))
    assert ec_percentile(records, lo) <= ec_percentile(records, hi)
    assert min(energies) <= ec_percentile(records, a) <= max(energies)


# --- records CSV round-trip -----------------------------------------------------


@given(
    energies=st.lists(
        st.floats(min_value=1e-6, max_value=1e12), min_size=1, max_size=20
    )
)
def test_records_csv_roundtrip_is_exact(tmp_path_factory, energies):
    records = [
        CustomerRecord(f"c{i}", energy=e, peak=e / 7.0, weight_level=i % 3 + 1)
        for i, e in enumerate(energies)
    ]
    path = tmp_path_factory.mktemp("rec") / "records.csv"
    write_records_csv(records, path)
    reloaded = read_records_csv(path)
    assert reloaded == records


def test_read_records_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("nope\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        read_records_csv(path)
