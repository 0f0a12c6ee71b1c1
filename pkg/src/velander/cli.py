"""Config-driven command line: ingest, fit, evaluate, synth, verify.

Every command reads one JSON config (``--config``), applies any flag
overrides, echoes the resolved config into the output directory, and holds
a lockfile there so concurrent runs cannot interleave writes.  Outputs are
deterministic: rerunning a command with an identical config and seed
reproduces every file byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import sys
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import evaluation, ingest
from .config import RunConfig, VerifySettings
from .model import (
    CONSTRAINT_REGIMES,
    CustomerRecord,
    LoadProfile,
    QuantileParamSet,
    compute_features,
)
from .solver import FitProblem, SolverError, fit, verify_optimality

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _require_json_keys(path, keys) -> None:
    data = _read_json(path)
    missing = [k for k in keys if k not in data]
    if missing:
        raise ValueError(f"{path}: output failed validation, missing {missing}")


def _require_csv_header(path, header) -> None:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = next(csv.reader(fh), None)
    if first is None or tuple(first) != tuple(header):
        raise ValueError(f"{path}: output failed validation, bad header {first}")


def _expected_points(cfg: RunConfig, year: int) -> int:
    if cfg.expected_points is not None:
        return cfg.expected_points
    days = 366 if ingest.is_leap_year(year) else 365
    return days * 96


def _load_dataset(cfg: RunConfig, ds):
    """Parse, clean and summarise one input file."""
    path = Path(ds.path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    profiles = ingest.parse_meter_csv(path, cfg.interval_duration)
    cleaned, report = ingest.clean_profiles(profiles, _expected_points(cfg, ds.year))
    records = [compute_features(p) for p in cleaned]
    if cfg.leap_adjust:
        records = ingest.leap_year_adjust(records, ds.year)
    return cleaned, records, report


def _write_profiles_csv(profiles, year: int, path) -> None:
    """Write profiles in the ingestion schema with 15-minute timestamps."""
    start = datetime.datetime(year, 1, 1)
    step = datetime.timedelta(minutes=15)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ingest.CSV_HEADER)
        for profile in profiles:
            for t, value in enumerate(profile.values):
                writer.writerow(
                    [
                        profile.customer_id,
                        (start + t * step).isoformat(),
                        repr(float(value)),
                    ]
                )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: RunConfig, out: Path) -> int:
    if not cfg.inputs:
        raise ValueError("ingest requires at least one input dataset")
    ingest_dir = out / "ingest"
    ingest_dir.mkdir(parents=True, exist_ok=True)
    for ds in cfg.inputs:
        _, records, report = _load_dataset(cfg, ds)
        records_path = ingest_dir / f"{ds.stem}.records.csv"
        report_path = ingest_dir / f"{ds.stem}.cleaning.json"
        ingest.write_records_csv(records, records_path)
        report.to_json(report_path)
        # validate what we just wrote
        reloaded = ingest.read_records_csv(records_path)
        if len(reloaded) != report.retained:
            raise ValueError(f"{records_path}: output failed validation")
        _require_json_keys(
            report_path,
            ("original", "incomplete", "negative", "zero_first_week", "retained"),
        )
        print(
            f"{ds.stem}: retained {report.retained}/{report.original} profiles "
            f"-> {records_path}"
        )
    return 0


def cmd_fit(cfg: RunConfig, out: Path) -> int:
    if not cfg.inputs:
        raise ValueError("fit requires at least one input dataset")
    grid = cfg.grid.to_grid()
    fit_dir = out / "fit"
    fit_dir.mkdir(parents=True, exist_ok=True)
    for ds in cfg.inputs:
        records_path = out / "ingest" / f"{ds.stem}.records.csv"
        if not records_path.exists():
            raise FileNotFoundError(
                f"{records_path} (run the ingest command first)"
            )
        records = ingest.read_records_csv(records_path)
        result = fit(
            FitProblem(
                records=tuple(records),
                grid=grid,
                constraint=cfg.constraint,
                tolerance=cfg.tolerance,
            )
        )
        params_path = fit_dir / f"{ds.stem}.params.json"
        result.params.to_json(params_path)
        reloaded = QuantileParamSet.from_json(params_path)
        if reloaded != result.params:
            raise ValueError(f"{params_path}: output failed validation")
        print(
            f"{ds.stem}: constraint={cfg.constraint} "
            f"APL={result.achieved_apl!r} kW parameters={result.parameter_count}"
        )
    return 0


def _run_cv(cfg, grid, datasets, eval_dir, index_entries):
    settings = cfg.cv
    for di, (ds, profiles, records) in enumerate(datasets):
        jobs = [(regime, records, "") for regime in settings.constraints]
        synth_profiles = None
        if settings.synthetic_baseline:
            synth_profiles = evaluation.synth_gaussian_profiles(
                profiles, evaluation.derive_seed(cfg.seed, di, 1)
            )
            synth_records = [compute_features(p) for p in synth_profiles]
            if cfg.leap_adjust:
                synth_records = ingest.leap_year_adjust(synth_records, ds.year)
            jobs += [
                (regime, synth_records, "synthetic-")
                for regime in settings.constraints
            ]
        for regime, recs, prefix in jobs:
            report = evaluation.kfold_cv(
                recs,
                grid,
                regime,
                k=settings.k,
                seed=evaluation.derive_seed(cfg.seed, di, 0),
                tolerance=cfg.tolerance,
            )
            stem = f"{ds.stem}.{prefix}{regime}"
            json_path = eval_dir / f"{stem}.cv.json"
            csv_path = eval_dir / f"{stem}.cv.csv"
            _write_json(json_path, report.to_dict())
            report.to_csv(csv_path)
            _require_json_keys(json_path, ("constraint", "mean_test_apl"))
            _require_csv_header(csv_path, ("fold", "test_size", "train_apl", "test_apl"))
            index_entries.append(json_path)
            index_entries.append(csv_path)
            print(
                f"cv {stem}: train={report.mean_train_apl:.4f} kW "
                f"test={report.mean_test_apl:.4f} kW"
            )


def _tld_pairs(cfg, datasets):
    if cfg.tld.pairs is not None:
        return list(cfg.tld.pairs)
    by_segment: dict[str, list[int]] = {}
    for ds, _, _ in datasets:
        by_segment.setdefault(ds.segment, []).append(ds.year)
    pairs = []
    for segment in sorted(by_segment):
        years = sorted(by_segment[segment])
        if len(years) < 2:
            logger.warning("segment %s has a single year; skipped for tld", segment)
            continue
        pairs += [(segment, a, b) for a, b in zip(years, years[1:])]
    if not pairs:
        raise ValueError("tld requires two periods of the same segment")
    return pairs


def _run_tld(cfg, grid, datasets, eval_dir, index_entries):
    by_key = {(ds.segment, ds.year): records for ds, _, records in datasets}
    rows = []
    for segment, source_year, target_year in _tld_pairs(cfg, datasets):
        for key in ((segment, source_year), (segment, target_year)):
            if key not in by_key:
                raise FileNotFoundError(f"no input dataset for {key[0]} {key[1]}")
        source_fit = fit(
            FitProblem(
                records=tuple(by_key[(segment, source_year)]),
                grid=grid,
                constraint=cfg.constraint,
                tolerance=cfg.tolerance,
            )
        )
        value = evaluation.tld(
            by_key[(segment, target_year)],
            grid,
            cfg.constraint,
            source_fit.params,
            tolerance=cfg.tolerance,
        )
        rows.append(
            {
                "segment": segment,
                "source_year": source_year,
                "target_year": target_year,
                "constraint": cfg.constraint,
                "tld": value,
            }
        )
        print(f"tld {segment} {target_year}|{source_year}: {value:.6f}")
    json_path = eval_dir / "tld.json"
    csv_path = eval_dir / "tld.csv"
    _write_json(json_path, {"rows": rows})
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("segment", "source_year", "target_year", "constraint", "tld"))
        for r in rows:
            writer.writerow(
                (r["segment"], r["source_year"], r["target_year"], r["constraint"],
                 repr(r["tld"]))
            )
    _require_json_keys(json_path, ("rows",))
    _require_csv_header(
        csv_path, ("segment", "source_year", "target_year", "constraint", "tld")
    )
    index_entries.append(json_path)
    index_entries.append(csv_path)


def _run_sld(cfg, grid, datasets, eval_dir, index_entries):
    rows = []
    for ds, _, records in datasets:
        for split in cfg.sld.splits:
            value = evaluation.sld(
                records, grid, cfg.constraint, split=split, tolerance=cfg.tolerance
            )
            (a, b), (c, d) = split
            rows.append(
                {
                    "segment": ds.segment,
                    "year": ds.year,
                    "eval_band": [a, b],
                    "source_band": [c, d],
                    "constraint": cfg.constraint,
                    "sld": value,
                }
            )
            print(f"sld {ds.stem} [{a},{b})|[{c},{d}): {value:.6f}")
    json_path = eval_dir / "sld.json"
    csv_path = eval_dir / "sld.csv"
    _write_json(json_path, {"rows": rows})
    header = ("segment", "year", "eval_lo", "eval_hi", "source_lo", "source_hi",
              "constraint", "sld")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow(
                (r["segment"], r["year"], r["eval_band"][0], r["eval_band"][1],
                 r["source_band"][0], r["source_band"][1], r["constraint"],
                 repr(r["sld"]))
            )
    _require_json_keys(json_path, ("rows",))
    _require_csv_header(csv_path, header)
    index_entries.append(json_path)
    index_entries.append(csv_path)


def _run_aggregation(cfg, grid, datasets, eval_dir, index_entries):
    settings = cfg.aggregation
    for di, (ds, profiles, _) in enumerate(datasets):
        report = evaluation.aggregation_cv(
            profiles,
            grid,
            cfg.constraint,
            levels=settings.levels,
            samples_per_level=settings.samples_per_level,
            k=settings.k,
            seed=evaluation.derive_seed(cfg.seed, di, 3),
            tolerance=cfg.tolerance,
        )
        json_path = eval_dir / f"{ds.stem}.aggregation.json"
        csv_path = eval_dir / f"{ds.stem}.aggregation.csv"
        _write_json(json_path, report.to_dict())
        report.to_csv(csv_path)
        _require_json_keys(json_path, ("rows", "constraint"))
        _require_csv_header(csv_path, evaluation.AggregationCvReport.CSV_HEADER)
        index_entries.append(json_path)
        index_entries.append(csv_path)
        for row in report.rows:
            print(
                f"aggregation {ds.stem} l={row.level}: "
                f"normalized test APL={row.normalized_test_apl:.4f} kW"
            )


def _run_curves(cfg, grid, datasets, eval_dir, index_entries):
    settings = cfg.curves
    for di, (ds, profiles, _) in enumerate(datasets):
        individuals = [compute_features(p) for p in profiles]
        ec_points = [
            ingest.ec_percentile(individuals, q) for q in settings.ec_percentiles
        ]
        params_by_level = {}
        for level in settings.levels:
            band_fit = evaluation.band_restricted_fit(
                profiles,
                level,
                grid,
                cfg.constraint,
                seed=evaluation.derive_seed(cfg.seed, di, 4, level),
                tolerance=cfg.tolerance,
            )
            params_by_level[level] = band_fit.params
            params_path = eval_dir / f"{ds.stem}.curves.l{level}.params.json"
            band_fit.params.to_json(params_path)
            _require_json_keys(params_path, ("constraint", "levels", "alpha", "beta"))
            index_entries.append(params_path)
            print(
                f"curves {ds.stem} l={level}: band=[{band_fit.band[0]:.1f}, "
                f"{band_fit.band[1]:.1f}] kept {band_fit.n_retained}/"
                f"{band_fit.n_candidates}"
            )
        export = evaluation.export_curves(
            params_by_level, ec_points, settings.taus, settings.x_count
        )
        csv_path = eval_dir / f"{ds.stem}.curves.csv"
        export.to_csv(csv_path)
        _require_csv_header(csv_path, evaluation.CurveExport.CSV_HEADER)
        index_entries.append(csv_path)


def cmd_evaluate(cfg: RunConfig, out: Path) -> int:
    if not cfg.inputs:
        raise ValueError("evaluate requires at least one input dataset")
    runners = {
        "cv": _run_cv,
        "tld": _run_tld,
        "sld": _run_sld,
        "aggregation": _run_aggregation,
        "curves": _run_curves,
    }
    enabled = [name for name in runners if getattr(cfg, name) is not None]
    if not enabled:
        raise ValueError("no analyses enabled in config")
    grid = cfg.grid.to_grid()
    datasets = [(ds,) + _load_dataset(cfg, ds)[:2] for ds in cfg.inputs]
    eval_dir = out / "evaluate"
    eval_dir.mkdir(parents=True, exist_ok=True)
    index: dict = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "constraint": cfg.constraint,
        "analyses": {},
    }
    for name in enabled:
        entries: list[Path] = []
        try:
            runners[name](cfg, grid, datasets, eval_dir, entries)
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{name}: {exc}") from exc
        index["analyses"][name] = sorted(
            str(p.relative_to(out)) for p in entries
        )
    index_path = out / "evaluate" / "index.json"
    _write_json(index_path, index)
    _require_json_keys(index_path, ("schema_version", "analyses"))
    print(f"evaluate: wrote {sum(len(v) for v in index['analyses'].values())} "
          f"files, index -> {index_path}")
    return 0


def _surface_profiles(spec, seed: int) -> list[LoadProfile]:
    """Two-level profiles realizing P = alpha*E + B*sqrt(E), B ~ U[lo, hi]."""
    if spec.n_points < 2:
        raise ValueError("surface mode needs at least 2 points per profile")
    rng = np.random.default_rng(seed)
    n, T = spec.n_customers, spec.n_points
    log_e = rng.uniform(np.log(spec.ec_lo), np.log(spec.ec_hi), n)
    energies = np.exp(log_e)
    b = rng.uniform(spec.beta_lo, spec.beta_hi, n)
    peaks = spec.alpha * energies + b * np.sqrt(energies)
    base = (energies - peaks) / (T - 1)
    if np.any(base < 0) or np.any(base > peaks):
        raise ValueError(
            "surface spec infeasible: every customer needs P <= E <= P * n_points"
        )
    profiles = []
    for i in range(n):
        values = np.full(T, base[i])
        values[0] = peaks[i]
        profiles.append(LoadProfile(f"{spec.segment}-{i:05d}", values))
    return profiles


def _gaussian_profiles(spec, seed: int) -> list[LoadProfile]:
    profiles = []
    for i in range(spec.n_customers):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        )
        values = rng.normal(spec.mu, spec.sigma, size=spec.n_points)
        profiles.append(LoadProfile(f"{spec.segment}-{i:05d}", values))
    return profiles


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    if cfg.seed is None:
        raise ValueError("synth requires a seed")
    synth_dir = out / "synth"
    synth_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if cfg.synth is not None:
        spec = cfg.synth
        seed = evaluation.derive_seed(cfg.seed, 100)
        if spec.mode == "surface":
            profiles = _surface_profiles(spec, seed)
        else:
            profiles = _gaussian_profiles(spec, seed)
        path = synth_dir / f"{spec.segment}_{spec.year}.csv"
        _write_profiles_csv(profiles, spec.year, path)
        outputs.append((path, len(profiles)))
    elif cfg.inputs:
        for di, ds in enumerate(cfg.inputs):
            cleaned, _, _ = _load_dataset(cfg, ds)
            profiles = evaluation.synth_gaussian_profiles(
                cleaned, evaluation.derive_seed(cfg.seed, di, 10)
            )
            path = synth_dir / f"{ds.stem}.synth.csv"
            _write_profiles_csv(profiles, ds.year, path)
            outputs.append((path, len(profiles)))
    else:
        raise ValueError("synth requires source profiles or a generative spec")
    for path, count in outputs:
        _require_csv_header(path, ingest.CSV_HEADER)
        print(f"synth: wrote {count} profiles -> {path}")
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    if cfg.seed is None:
        raise ValueError("verify requires a seed")
    settings = cfg.verify or VerifySettings()
    rng = np.random.default_rng(evaluation.derive_seed(cfg.seed, 200))
    verify_dir = out / "verify"
    verify_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    all_confirmed = True
    for i in range(settings.instances):
        n = int(rng.integers(2, settings.max_customers + 1))
        m = int(rng.integers(2, settings.max_levels + 1))
        energies = rng.uniform(5.0, 500.0, n)
        peaks = np.maximum(
            rng.uniform(0.05, 0.3) * energies
            + rng.uniform(0.5, 3.0) * np.sqrt(energies)
            + rng.normal(0.0, 2.0, n),
            0.0,
        )
        taus = np.sort(rng.uniform(0.08, 0.92, m))
        while np.any(np.diff(taus) < 0.02):
            taus = np.sort(rng.uniform(0.08, 0.92, m))
        records = tuple(
            CustomerRecord(f"v{i}-{j}", energy=float(e), peak=float(p))
            for j, (e, p) in enumerate(zip(energies, peaks))
        )
        for regime in CONSTRAINT_REGIMES:
            problem = FitProblem(
                records=records,
                grid=tuple(float(t) for t in taus),
                constraint=regime,
                tolerance=cfg.tolerance,
            )
            result = fit(problem)
            check = verify_optimality(
                problem,
                result.params,
                budget=settings.budget,
                rel_tol=settings.rel_tol,
            )
            rows.append(
                {
                    "instance": i,
                    "constraint": regime,
                    "n_records": n,
                    "n_levels": m,
                    "verdict": check.verdict,
                    "candidate_apl": check.candidate_apl,
                    "best_apl": check.best_apl,
                    "gap": check.gap,
                    "evaluations": check.evaluations,
                }
            )
            print(
                f"verify instance {i} {regime}: {check.verdict} "
                f"(gap={check.gap:.3e}, {check.evaluations} evaluations)"
            )
            if check.verdict != "confirmed":
                all_confirmed = False
    report_path = verify_dir / "report.json"
    _write_json(report_path, {"rows": rows})
    _require_json_keys(report_path, ("rows",))
    if not all_confirmed:
        print("verify: some fits were not confirmed optimal", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "verify": cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="velander",
        description="Quantile Velander peak-load models: fit and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--constraint",
            type=lambda s: s.upper(),
            choices=CONSTRAINT_REGIMES,
            default=None,
            help="override constraint regime",
        )
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config_path = Path(args.config)
        if not config_path.exists():
            raise FileNotFoundError(str(config_path))
        cfg = RunConfig.from_json(config_path)
        for flag in ("seed", "constraint", "out"):
            if getattr(args, flag) is not None:
                logger.info("override from flag: %s=%s", flag, getattr(args, flag))
        cfg = cfg.with_overrides(
            seed=args.seed, constraint=args.constraint, out_dir=args.out
        )
        cfg.validate()
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(out / ".velander.lock"))
        try:
            with lock.acquire(timeout=0):
                _write_json(out / "resolved_config.json", cfg.to_dict())
                return _COMMANDS[args.command](cfg, out)
        except Timeout:
            print(
                f"error: output directory {out} is locked by another run",
                file=sys.stderr,
            )
            return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
