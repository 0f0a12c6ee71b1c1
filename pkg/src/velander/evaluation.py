"""Experiment protocols built on the fitting core.

Covers k-fold cross-validation, synthetic Gaussian baseline profiles,
temporal (TLD) and scaling (SLD) transfer losses, Monte-Carlo aggregation
studies, band-restricted fits and curve/CDF export.  Every stochastic
operation is a pure function of its inputs and an integer seed; parallel
units derive independent child streams from (seed, unit index), so reports
are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .ingest import ec_percentile
from .model import (
    CustomerRecord,
    LoadProfile,
    QuantileGrid,
    QuantileParamSet,
    average_pinball_loss,
    compute_features,
)
from .solver import FitProblem, FitResult, SolverError, fit

logger = logging.getLogger(__name__)


def derive_seed(root_seed: int, *key: int) -> int:
    """A child seed that depends only on (root_seed, key), not call order."""
    seq = np.random.SeedSequence(entropy=root_seed, spawn_key=tuple(key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                ["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row]
            )


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CvReport:
    """Per-fold and average train/test losses (kW) of a k-fold CV run."""

    constraint: str
    k: int
    seed: int
    fold_test_sizes: tuple[int, ...]
    train_apl: tuple[float, ...]
    test_apl: tuple[float, ...]

    @property
    def mean_train_apl(self) -> float:
        return float(np.mean(self.train_apl))

    @property
    def mean_test_apl(self) -> float:
        return float(np.mean(self.test_apl))

    def to_dict(self) -> dict:
        return {
            "constraint": self.constraint,
            "k": self.k,
            "seed": self.seed,
            "fold_test_sizes": list(self.fold_test_sizes),
            "train_apl": list(self.train_apl),
            "test_apl": list(self.test_apl),
            "mean_train_apl": self.mean_train_apl,
            "mean_test_apl": self.mean_test_apl,
        }

    def to_csv(self, path) -> None:
        rows = [
            (f, size, tr, te)
            for f, (size, tr, te) in enumerate(
                zip(self.fold_test_sizes, self.train_apl, self.test_apl)
            )
        ]
        _write_csv(path, ("fold", "test_size", "train_apl", "test_apl"), rows)


def kfold_cv(
    records,
    grid: QuantileGrid,
    constraint: str,
    k: int = 5,
    seed: int = 0,
    tolerance: float = 1e-7,
) -> CvReport:
    """Shuffled k-fold cross-validation of the quantile Velander fit.

    One global shuffle with the seeded generator, then a contiguous split
    into k folds whose sizes differ by at most one.
    """
    records = tuple(records)
    n = len(records)
    if k < 2:
        raise ValueError("k-fold CV needs k >= 2")
    if k > n:
        raise ValueError(f"k={k} folds exceed the {n} available records")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    train_apl = []
    test_apl = []
    sizes = []
    for f, test_idx in enumerate(folds):
        test_set = set(int(i) for i in test_idx)
        train = [records[i] for i in range(n) if i not in test_set]
        test = [records[int(i)] for i in test_idx]
        result = fit(
            FitProblem(
                records=tuple(train), grid=grid, constraint=constraint,
                tolerance=tolerance,
            )
        )
        train_apl.append(result.achieved_apl)
        test_apl.append(average_pinball_loss(test, result.params))
        sizes.append(len(test))
    return CvReport(
        constraint=constraint,
        k=k,
        seed=seed,
        fold_test_sizes=tuple(sizes),
        train_apl=tuple(train_apl),
        test_apl=tuple(test_apl),
    )


# ---------------------------------------------------------------------------
# Synthetic Gaussian baseline
# ---------------------------------------------------------------------------


def synth_gaussian_profiles(profiles, seed: int) -> list[LoadProfile]:
    """Per-customer i.i.d. Gaussian surrogates matching mean and variance.

    The mean is the per-interval average power and the variance is the
    population variance (divide by T, not T-1) of the source readings.
    Negative draws are kept: the surrogates serve as a loss-magnitude
    baseline, and truncating would bias the mean.
    """
    out = []
    for i, profile in enumerate(profiles):
        if profile.has_missing():
            raise ValueError(
                f"profile {profile.customer_id!r} has missing readings; clean first"
            )
        mu = float(profile.values.mean())
        sigma = float(profile.values.std())  # population std (ddof=0)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        )
        values = rng.normal(mu, sigma, size=profile.n_points)
        out.append(
            LoadProfile(
                profile.customer_id,
                values,
                interval_duration=profile.interval_duration,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Temporal and scaling transfer
# ---------------------------------------------------------------------------


def _transfer_ratio(records, grid, constraint, source_params, tolerance, label):
    numerator = average_pinball_loss(records, source_params)
    denom_fit = fit(
        FitProblem(
            records=tuple(records), grid=grid, constraint=constraint,
            tolerance=tolerance,
        )
    )
    denominator = denom_fit.achieved_apl
    peak_scale = max(float(np.mean([abs(r.peak) for r in records])), 1.0)
    if not denominator > 1e-14 * peak_scale:
        raise ValueError(f"zero optimal loss: {label} undefined")
    ratio = numerator / denominator - 1.0
    if ratio < -2.0 * tolerance:
        raise SolverError(
            f"{label} = {ratio:.3e} below -2*tolerance; the reference fit "
            f"cannot be optimal"
        )
    return ratio


def tld(
    records,
    grid: QuantileGrid,
    constraint: str,
    source_params: QuantileParamSet,
    tolerance: float = 1e-7,
) -> float:
    """Temporal loss difference: relative excess loss of last period's fit.

    ``source_params`` is evaluated on ``records`` and compared against a
    fresh fit of ``records`` under the same grid and regime (fitted
    internally, so the reference can never be mismatched).
    """
    if tuple(source_params.levels) != grid.levels:
        raise ValueError("source parameters were fitted on a different grid")
    if source_params.constraint != constraint:
        raise ValueError("source parameters were fitted under a different regime")
    return _transfer_ratio(records, grid, constraint, source_params, tolerance, "TLD")


def percentile_band(records, a: float, b: float) -> list[CustomerRecord]:
    """Customers with consumption in [E_a, E_b), percentiles of the set."""
    if not (0 <= a < b <= 100):
        raise ValueError("percentile band must satisfy 0 <= a < b <= 100")
    lo = ec_percentile(records, a)
    hi = ec_percentile(records, b)
    return [r for r in records if lo <= r.energy < hi]


def sld(
    records,
    grid: QuantileGrid,
    constraint: str,
    split: tuple = ((0, 50), (50, 100)),
    tolerance: float = 1e-7,
) -> float:
    """Scaling loss difference between two consumption-percentile bands.

    ``split`` is ((a, b), (c, d)): the fit from band [E_c, E_d) is evaluated
    on band [E_a, E_b) and compared to that band's own fit.
    """
    (a, b), (c, d) = split
    eval_band = percentile_band(records, a, b)
    source_band = percentile_band(records, c, d)
    if not eval_band:
        raise ValueError(f"empty consumption band [{a}, {b})")
    if not source_band:
        raise ValueError(f"empty consumption band [{c}, {d})")
    source = fit(
        FitProblem(
            records=tuple(source_band), grid=grid, constraint=constraint,
            tolerance=tolerance,
        )
    )
    return _transfer_ratio(
        eval_band, grid, constraint, source.params, tolerance, "SLD"
    )


# ---------------------------------------------------------------------------
# Aggregation studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AggregationSample:
    """One random group of customers summed into a virtual customer.

    The aggregated peak is the peak of the summed profile (coincidence
    effect), never the sum of the individual peaks; the aggregated
    consumption is exactly the sum of member consumptions.
    """

    level: int
    member_ids: tuple[str, ...]
    record: CustomerRecord

    def __post_init__(self) -> None:
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError("aggregation members must be distinct")
        if self.record.weight_level != self.level:
            raise ValueError("aggregated record must carry weight_level = level")


def sample_aggregations(
    profiles, level: int, count: int, seed: int
) -> list[AggregationSample]:
    """Draw ``count`` random groups of ``level`` distinct customers.

    Sampling is without replacement within a group and independent (with
    replacement) across groups.
    """
    profiles = list(profiles)
    n = len(profiles)
    if level < 1:
        raise ValueError("aggregation level must be >= 1")
    if level > n:
        raise ValueError(
            f"aggregation level {level} exceeds the population size {n}"
        )
    if count < 0:
        raise ValueError("sample count must be >= 0")
    lengths = {p.n_points for p in profiles}
    durations = {p.interval_duration for p in profiles}
    if len(lengths) > 1 or len(durations) > 1:
        raise ValueError("profiles must share length and interval to aggregate")
    for p in profiles:
        if p.has_missing():
            raise ValueError(
                f"profile {p.customer_id!r} has missing readings; clean first"
            )
    values = np.stack([p.values for p in profiles])
    energies = np.array([compute_features(p).energy for p in profiles])
    ids = [p.customer_id for p in profiles]
    rng = np.random.default_rng(seed)
    samples = []
    for j in range(count):
        idx = rng.choice(n, size=level, replace=False)
        peak = float(values[idx].sum(axis=0).max())
        energy = float(energies[idx].sum())
        record = CustomerRecord(
            f"agg-l{level}-{j:05d}", energy=energy, peak=peak, weight_level=level
        )
        samples.append(
            AggregationSample(
                level=level,
                member_ids=tuple(ids[int(i)] for i in idx),
                record=record,
            )
        )
    return samples


@dataclass(frozen=True)
class AggregationCvRow:
    level: int
    n_samples: int
    train_apl: float
    test_apl: float
    normalized_train_apl: float
    normalized_test_apl: float


@dataclass(frozen=True)
class AggregationCvReport:
    """Average (and per-customer normalized) CV losses per aggregation level."""

    constraint: str
    k: int
    seed: int
    samples_per_level: int
    rows: tuple[AggregationCvRow, ...]

    CSV_HEADER = (
        "level",
        "n_samples",
        "train_apl",
        "test_apl",
        "normalized_train_apl",
        "normalized_test_apl",
    )

    def to_dict(self) -> dict:
        return {
            "constraint": self.constraint,
            "k": self.k,
            "seed": self.seed,
            "samples_per_level": self.samples_per_level,
            "rows": [
                {
                    "level": r.level,
                    "n_samples": r.n_samples,
                    "train_apl": r.train_apl,
                    "test_apl": r.test_apl,
                    "normalized_train_apl": r.normalized_train_apl,
                    "normalized_test_apl": r.normalized_test_apl,
                }
                for r in self.rows
            ],
        }

    def to_csv(self, path) -> None:
        _write_csv(
            path,
            self.CSV_HEADER,
            [
                (
                    r.level,
                    r.n_samples,
                    r.train_apl,
                    r.test_apl,
                    r.normalized_train_apl,
                    r.normalized_test_apl,
                )
                for r in self.rows
            ],
        )


def aggregation_cv(
    profiles,
    grid: QuantileGrid,
    constraint: str,
    levels: tuple[int, ...] = (2, 5, 10, 25),
    samples_per_level: int = 1000,
    k: int = 5,
    seed: int = 0,
    tolerance: float = 1e-7,
) -> AggregationCvReport:
    """Monte-Carlo aggregation study: CV losses per aggregation level.

    For each level l, draws ``samples_per_level`` aggregated records, runs
    k-fold CV on them, and reports the average losses both raw and divided
    by l (per-member normalization, comparable across levels).
    """
    rows = []
    for level in levels:
        agg_seed = derive_seed(seed, level, 0)
        cv_seed = derive_seed(seed, level, 1)
        samples = sample_aggregations(profiles, level, samples_per_level, agg_seed)
        report = kfold_cv(
            [s.record for s in samples], grid, constraint, k=k, seed=cv_seed,
            tolerance=tolerance,
        )
        rows.append(
            AggregationCvRow(
                level=level,
                n_samples=len(samples),
                train_apl=report.mean_train_apl,
                test_apl=report.mean_test_apl,
                normalized_train_apl=report.mean_train_apl / level,
                normalized_test_apl=report.mean_test_apl / level,
            )
        )
    return AggregationCvReport(
        constraint=constraint,
        k=k,
        seed=seed,
        samples_per_level=samples_per_level,
        rows=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Band-restricted fits and curve export
# ---------------------------------------------------------------------------

#: Aggregation pools for band-restricted fits: level -> multiple of the
#: population size to sample before filtering to the band.
BAND_SAMPLE_FACTORS = {2: 4, 3: 16}


@dataclass(frozen=True)
class BandRestrictedFit:
    """A fit over the mid-consumption band [E40, E60] at one aggregation level."""

    level: int
    band: tuple[float, float]
    n_candidates: int
    n_retained: int
    result: FitResult

    @property
    def params(self) -> QuantileParamSet:
        return self.result.params


def band_restricted_fit(
    profiles,
    level: int,
    grid: QuantileGrid,
    constraint: str,
    seed: int = 0,
    tolerance: float = 1e-7,
) -> BandRestrictedFit:
    """Fit on records whose consumption lies in the individual [E40, E60] band.

    Level 1 uses the individual customers in the band.  Levels 2 and 3 draw
    4x (resp. 16x) the population size of random aggregations first, then
    keep those inside the band.  The thresholds always come from the
    individual consumption distribution, so all levels share one band.
    """
    profiles = list(profiles)
    individuals = [compute_features(p) for p in profiles]
    lo = ec_percentile(individuals, 40)
    hi = ec_percentile(individuals, 60)
    if level == 1:
        pool = individuals
    elif level in BAND_SAMPLE_FACTORS:
        count = BAND_SAMPLE_FACTORS[level] * len(profiles)
        pool = [
            s.record for s in sample_aggregations(profiles, level, count, seed)
        ]
    else:
        raise ValueError("band-restricted fits support levels 1, 2 and 3 only")
    retained = [r for r in pool if lo <= r.energy <= hi]
    if not retained:
        raise ValueError(
            f"consumption band [{lo}, {hi}] is empty after filtering "
            f"{len(pool)} candidate records"
        )
    result = fit(
        FitProblem(
            records=tuple(retained), grid=grid, constraint=constraint,
            tolerance=tolerance,
        )
    )
    return BandRestrictedFit(
        level=level,
        band=(lo, hi),
        n_candidates=len(pool),
        n_retained=len(retained),
        result=result,
    )


@dataclass(frozen=True)
class CurveExport:
    """Sampled quantile curves and truncated-CDF point sets, CSV-ready.

    Rows are (level, kind, tau, E, x, y).  For ``kind == "curve"`` the row
    samples the level-tau curve at consumption x (E is empty); for
    ``kind == "cdf"`` the row is the point (x = predicted load, y = tau) of
    the truncated CDF at consumption E.
    """

    rows: tuple[tuple, ...]

    CSV_HEADER = ("level", "kind", "tau", "E", "x", "y")

    def to_csv(self, path) -> None:
        _write_csv(path, self.CSV_HEADER, self.rows)


def export_curves(
    params_by_level,
    ec_points,
    curve_taus: tuple[float, ...] = (0.2, 0.5, 0.8),
    x_count: int = 101,
) -> CurveExport:
    """Sample quantile curves and CDF points for external plotting.

    Curves are sampled on a dense consumption grid spanning ``ec_points``;
    CDF point sets are emitted per (aggregation level, consumption).  A
    requested curve tau that is not on the fitted grid falls back to the
    nearest level with a warning.
    """
    if not params_by_level:
        raise ValueError("need at least one parameter set to export")
    ec_points = sorted(float(e) for e in ec_points)
    if not ec_points:
        raise ValueError("need at least one consumption point to export")
    grids = {p.levels for p in params_by_level.values()}
    if len(grids) > 1:
        raise ValueError("parameter sets must share one quantile grid")
    xs = np.linspace(ec_points[0], ec_points[-1], x_count)
    rows = []
    for level in sorted(params_by_level):
        params = params_by_level[level]
        taus = np.asarray(params.levels)
        for tau in curve_taus:
            idx = int(np.argmin(np.abs(taus - tau)))
            actual = float(taus[idx])
            if abs(actual - tau) > 1e-9:
                logger.warning(
                    "curve tau %.4f is not on the fitted grid; using nearest "
                    "level %.4f",
                    tau,
                    actual,
                )
            a, b = params.alpha[idx], params.beta[idx]
            for x in xs:
                rows.append(
                    (level, "curve", actual, None, float(x), a * x + b * math.sqrt(x))
                )
        for e in ec_points:
            loads = params.predict([e])[0]
            if params.constraint in ("C3", "C4") or (
                params.constraint == "C2"
                and params.fit_ec_range is not None
                and params.fit_ec_range[0] <= e <= params.fit_ec_range[1]
            ):
                if np.any(np.diff(loads) < -1e-9):
                    raise ValueError(
                        f"CDF points at E={e} decrease under regime "
                        f"{params.constraint}; parameters are invalid"
                    )
            for tau, load in zip(params.levels, loads):
                rows.append((level, "cdf", float(tau), float(e), float(load), float(tau)))
    return CurveExport(rows=tuple(rows))
