"""End-to-end command-line behavior: exit codes, outputs, determinism."""

import datetime
import hashlib
import json

import pytest
from filelock import FileLock

from velander.cli import main as cli_main
from velander.config import GridSpec, RunConfig, SynthSpec
from velander.ingest import read_records_csv
from velander.model import QuantileParamSet, average_pinball_loss

N_POINTS = 8


def write_config(path, cfg):
    path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return str(path)


def write_meter_csv(path, profiles, year=2023):
    start = datetime.datetime(year, 1, 1)
    step = datetime.timedelta(minutes=15)
    rows = ["customer_id,timestamp,load_kw"]
    for cid, values in profiles:
        for t, value in enumerate(values):
            rows.append(f"{cid},{(start + t * step).isoformat()},{value}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return str(path)


def base_config(out, inputs=(), **extra):
    cfg = {
        "out_dir": str(out),
        "inputs": [
            {"segment": seg, "year": year, "path": str(p)} for seg, year, p in inputs
        ],
        "grid": {"lo": 0.3, "hi": 0.7, "step": 0.2},
        "expected_points": N_POINTS,
        "seed": 7,
    }
    cfg.update(extra)
    return cfg


@pytest.fixture
def meter_file(tmp_path):
    return write_meter_csv(
        tmp_path / "shop_2023.csv",
        [
            ("a", [1.0] * (N_POINTS - 1) + [3.0]),
            ("b", [2.0] * (N_POINTS - 1) + [5.0]),
            ("bad", [1.0] * (N_POINTS - 1) + [-1.0]),
        ],
    )


# --- ingest ---------------------------------------------------------------------


def test_ingest_writes_records_and_cleaning_report(tmp_path, meter_file, capsys):
    out = tmp_path / "run"
    cfg = write_config(
        tmp_path / "cfg.json", base_config(out, [("shop", 2023, meter_file)])
    )
    assert cli_main(["ingest", "--config", cfg]) == 0
    assert "retained 2/3" in capsys.readouterr().out
    records = read_records_csv(out / "ingest" / "shop_2023.records.csv")
    assert [r.customer_id for r in records] == ["a", "b"]
    report = json.loads((out / "ingest" / "shop_2023.cleaning.json").read_text())
    assert report == {
        "original": 3,
        "incomplete": 0,
        "negative": 1,
        "zero_first_week": 0,
        "retained": 2,
    }
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["out_dir"] == str(out)


def test_ingest_missing_meter_file_exits_2(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json",
        base_config(tmp_path / "run", [("shop", 2023, tmp_path / "nope.csv")]),
    )
    assert cli_main(["ingest", "--config", cfg]) == 2
    assert "missing file" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    assert cli_main(["ingest", "--config", str(tmp_path / "nope.json")]) == 2


def test_unknown_config_key_exits_1(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json", {"out_dir": str(tmp_path / "run"), "bogus": 1}
    )
    assert cli_main(["ingest", "--config", cfg]) == 1
    assert "unknown config keys: bogus" in capsys.readouterr().err


def test_ingest_without_inputs_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", base_config(tmp_path / "run"))
    assert cli_main(["ingest", "--config", cfg]) == 1
    assert "at least one input" in capsys.readouterr().err


# --- fit -------------------------------------------------------------------------


def test_fit_requires_ingest_outputs(tmp_path, meter_file, capsys):
    cfg = write_config(
        tmp_path / "cfg.json",
        base_config(tmp_path / "run", [("shop", 2023, meter_file)]),
    )
    assert cli_main(["fit", "--config", cfg]) == 2
    assert "run the ingest command first" in capsys.readouterr().err


def test_fit_writes_params_and_prints_exact_apl(tmp_path, meter_file, capsys):
    out = tmp_path / "run"
    cfg = write_config(
        tmp_path / "cfg.json", base_config(out, [("shop", 2023, meter_file)])
    )
    assert cli_main(["ingest", "--config", cfg]) == 0
    assert cli_main(["fit", "--config", cfg]) == 0
    stdout = capsys.readouterr().out
    line = next(l for l in stdout.splitlines() if "constraint=C4" in l)
    assert "parameters=4" in line  # 3 levels, shared alpha
    printed_apl = float(line.split("APL=")[1].split(" kW")[0])
    params = QuantileParamSet.from_json(out / "fit" / "shop_2023.params.json")
    records = read_records_csv(out / "ingest" / "shop_2023.records.csv")
    assert average_pinball_loss(records, params) == printed_apl


def test_fit_constraint_flag_accepts_lowercase(tmp_path, meter_file, capsys):
    out = tmp_path / "run"
    cfg = write_config(
        tmp_path / "cfg.json", base_config(out, [("shop", 2023, meter_file)])
    )
    assert cli_main(["ingest", "--config", cfg]) == 0
    assert cli_main(["fit", "--config", cfg, "--constraint", "c1"]) == 0
    stdout = capsys.readouterr().out
    assert "constraint=C1" in stdout
    assert "parameters=6" in stdout


def test_seed_and_out_overrides_land_in_resolved_config(tmp_path, meter_file):
    other = tmp_path / "elsewhere"
    cfg = write_config(
        tmp_path / "cfg.json",
        base_config(tmp_path / "run", [("shop", 2023, meter_file)]),
    )
    assert (
        cli_main(
            ["ingest", "--config", cfg, "--seed", "99", "--out", str(other)]
        )
        == 0
    )
    resolved = json.loads((other / "resolved_config.json").read_text())
    assert resolved["seed"] == 99
    assert resolved["out_dir"] == str(other)
    assert (other / "ingest" / "shop_2023.records.csv").exists()


# --- synth -----------------------------------------------------------------------


def test_synth_requires_seed(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json",
        {
            "out_dir": str(tmp_path / "run"),
            "synth": {"mode": "surface", "n_customers": 3, "n_points": 8},
        },
    )
    assert cli_main(["synth", "--config", cfg]) == 1
    assert "seed" in capsys.readouterr().err


def test_synth_from_inputs_writes_surrogate_meter_file(tmp_path, meter_file):
    out = tmp_path / "run"
    cfg = write_config(
        tmp_path / "cfg.json", base_config(out, [("shop", 2023, meter_file)])
    )
    assert cli_main(["synth", "--config", cfg]) == 0
    surrogate = out / "synth" / "shop_2023.synth.csv"
    lines = surrogate.read_text().splitlines()
    assert lines[0] == "customer_id,timestamp,load_kw"
    assert len(lines) == 1 + 2 * N_POINTS  # the two clean customers


def test_synth_without_spec_or_inputs_exits_1(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json", {"out_dir": str(tmp_path / "run"), "seed": 1}
    )
    assert cli_main(["synth", "--config", cfg]) == 1
    assert "source profiles or a generative spec" in capsys.readouterr().err


# --- evaluate: full chain -----------------------------------------------------------


def synth_year(tmp_path, out, year, seed):
    cfg = write_config(
        tmp_path / f"synth{year}.json",
        {
            "out_dir": str(out),
            "seed": seed,
            "synth": {
                "mode": "surface",
                "segment": "syn",
                "year": year,
                "n_customers": 20,
                "n_points": 12,
                "ec_lo": 500.0,
                "ec_hi": 5e4,
            },
        },
    )
    assert cli_main(["synth", "--config", cfg]) == 0
    return out / "synth" / f"syn_{year}.csv"


def evaluate_config(tmp_path, out, inputs):
    cfg = base_config(out, inputs)
    cfg["expected_points"] = 12
    cfg["analyses"] = {
        "cv": {"k": 3, "constraints": ["C1", "C4"], "synthetic_baseline": True},
        "tld": {},
        "sld": {},
        "aggregation": {"levels": [2, 3], "samples_per_level": 10, "k": 3},
        "curves": {"levels": [1, 2], "taus": [0.5], "x_count": 5},
    }
    return write_config(tmp_path / "eval.json", cfg)


def tree_digest(root):
    digest = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()
            ).hexdigest()
    return digest


def test_evaluate_full_chain_and_determinism(tmp_path, capsys):
    out = tmp_path / "run"
    meter1 = synth_year(tmp_path, out, 2021, seed=11)
    meter2 = synth_year(tmp_path, out, 2022, seed=12)
    inputs = [("syn", 2021, meter1), ("syn", 2022, meter2)]
    cfg = evaluate_config(tmp_path, out, inputs)
    assert cli_main(["evaluate", "--config", cfg]) == 0
    capsys.readouterr()

    index = json.loads((out / "evaluate" / "index.json").read_text())
    assert index["schema_version"] == 1
    assert set(index["analyses"]) == {"cv", "tld", "sld", "aggregation", "curves"}
    for entries in index["analyses"].values():
        assert entries == sorted(entries)
        for rel in entries:
            assert (out / rel).exists()
    # cv ran for both regimes, both years, real and synthetic baseline
    assert len(index["analyses"]["cv"]) == 2 * 2 * 2 * 2  # json+csv each
    tld_rows = json.loads((out / "evaluate" / "tld.json").read_text())["rows"]
    assert [
        (r["segment"], r["source_year"], r["target_year"]) for r in tld_rows
    ] == [("syn", 2021, 2022)]
    sld_rows = json.loads((out / "evaluate" / "sld.json").read_text())["rows"]
    assert len(sld_rows) == 4  # two datasets x two default splits

    first = tree_digest(out / "evaluate")
    assert cli_main(["evaluate", "--config", cfg]) == 0
    assert tree_digest(out / "evaluate") == first


def test_evaluate_without_analyses_exits_1(tmp_path, meter_file, capsys):
    cfg = write_config(
        tmp_path / "cfg.json",
        base_config(tmp_path / "run", [("shop", 2023, meter_file)]),
    )
    assert cli_main(["evaluate", "--config", cfg]) == 1
    assert "no analyses enabled" in capsys.readouterr().err


def test_evaluate_tld_single_year_exits_1(tmp_path, meter_file, capsys):
    cfg_dict = base_config(tmp_path / "run", [("shop", 2023, meter_file)])
    cfg_dict["analyses"] = {"tld": {}}
    cfg = write_config(tmp_path / "cfg.json", cfg_dict)
    assert cli_main(["evaluate", "--config", cfg]) == 1
    assert "tld requires two periods" in capsys.readouterr().err


def test_stochastic_analysis_without_seed_exits_1(tmp_path, meter_file, capsys):
    cfg_dict = base_config(tmp_path / "run", [("shop", 2023, meter_file)])
    del cfg_dict["seed"]
    cfg_dict["analyses"] = {"cv": {"k": 2}}
    cfg = write_config(tmp_path / "cfg.json", cfg_dict)
    assert cli_main(["evaluate", "--config", cfg]) == 1
    assert "seed is required" in capsys.readouterr().err


def test_locked_output_directory_exits_1(tmp_path, meter_file, capsys):
    out = tmp_path / "run"
    out.mkdir()
    cfg = write_config(
        tmp_path / "cfg.json", base_config(out, [("shop", 2023, meter_file)])
    )
    lock = FileLock(str(out / ".velander.lock"))
    with lock.acquire(timeout=0):
        assert cli_main(["ingest", "--config", cfg]) == 1
    assert "locked by another run" in capsys.readouterr().err
    assert cli_main(["ingest", "--config", cfg]) == 0  # lock released


# --- verify ------------------------------------------------------------------------


def test_verify_confirms_and_writes_report(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write_config(
        tmp_path / "cfg.json",
        {
            "out_dir": str(out),
            "seed": 3,
            "verify": {"instances": 1, "max_customers": 4, "max_levels": 2},
        },
    )
    assert cli_main(["verify", "--config", cfg]) == 0
    report = json.loads((out / "verify" / "report.json").read_text())
    assert len(report["rows"]) == 4  # one instance, all four regimes
    assert all(r["verdict"] == "confirmed" for r in report["rows"])
    assert "confirmed" in capsys.readouterr().out


def test_verify_requires_seed(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", {"out_dir": str(tmp_path / "run")})
    assert cli_main(["verify", "--config", cfg]) == 1
    assert "verify requires a seed" in capsys.readouterr().err


# --- config objects -----------------------------------------------------------------


def test_config_rejects_unknown_sections():
    with pytest.raises(ValueError, match="unknown config keys"):
        RunConfig.from_dict({"out_dir": "x", "bogus": 1})
    with pytest.raises(ValueError, match="unknown analyses keys"):
        RunConfig.from_dict({"out_dir": "x", "analyses": {"nope": {}}})
    with pytest.raises(ValueError, match="unknown cv keys"):
        RunConfig.from_dict({"out_dir": "x", "analyses": {"cv": {"folds": 3}}})


def test_config_validate_catches_duplicates_and_bad_grid():
    cfg = RunConfig.from_dict(
        {
            "out_dir": "x",
            "inputs": [
                {"segment": "a", "year": 2020, "path": "p1"},
                {"segment": "a", "year": 2020, "path": "p2"},
            ],
        }
    )
    with pytest.raises(ValueError, match="duplicate input dataset"):
        cfg.validate()
    with pytest.raises(ValueError, match="at least 2"):
        GridSpec(0.5, 0.5, 0.1).to_grid()


def test_synth_spec_rejects_unknown_mode():
    with pytest.raises(ValueError, match="unknown synth mode"):
        SynthSpec.from_dict({"mode": "fractal"})


def test_config_with_overrides_round_trips():
    cfg = RunConfig.from_dict({"out_dir": "x", "seed": 1, "constraint": "c2"})
    assert cfg.constraint == "C2"
    updated = cfg.with_overrides(seed=5, constraint="c3", out_dir="y")
    assert (updated.seed, updated.constraint, updated.out_dir) == (5, "C3", "y")
    echoed = updated.to_dict()
    assert echoed["seed"] == 5
    assert echoed["analyses"] == {
        "cv": None, "tld": None, "sld": None, "aggregation": None, "curves": None
    }
