"""Run configuration for the command-line front end.

A JSON config file is the single source of truth for a run; a few CLI
flags may override individual fields, and the fully resolved config is
echoed into the output directory.  Disabled analyses are simply absent
from (or null in) the ``analyses`` object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

from .model import CONSTRAINT_REGIMES, QuantileGrid


def _check_keys(data: dict, allowed, where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValueError(f"unknown {where} keys: {', '.join(unknown)}")


@dataclass(frozen=True)
class DatasetSpec:
    """One input meter file, identified by customer segment and year."""

    segment: str
    year: int
    path: str

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetSpec":
        _check_keys(data, ("segment", "year", "path"), "input")
        return cls(str(data["segment"]), int(data["year"]), str(data["path"]))

    def to_dict(self) -> dict:
        return {"segment": self.segment, "year": self.year, "path": self.path}

    @property
    def stem(self) -> str:
        return f"{self.segment}_{self.year}"


@dataclass(frozen=True)
class GridSpec:
    """Arithmetic quantile-level grid (inclusive endpoints)."""

    lo: float = 0.10
    hi: float = 0.90
    step: float = 0.01

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        _check_keys(data, ("lo", "hi", "step"), "grid")
        return cls(
            float(data.get("lo", 0.10)),
            float(data.get("hi", 0.90)),
            float(data.get("step", 0.01)),
        )

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "step": self.step}

    def to_grid(self) -> QuantileGrid:
        grid = QuantileGrid.from_range(self.lo, self.hi, self.step)
        if len(grid) < 2:
            raise ValueError("grid spec must yield at least 2 quantile levels")
        return grid


@dataclass(frozen=True)
class CvSettings:
    k: int = 5
    constraints: tuple[str, ...] = CONSTRAINT_REGIMES
    synthetic_baseline: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "CvSettings":
        _check_keys(data, ("k", "constraints", "synthetic_baseline"), "cv")
        return cls(
            int(data.get("k", 5)),
            tuple(str(c).upper() for c in data.get("constraints", CONSTRAINT_REGIMES)),
            bool(data.get("synthetic_baseline", True)),
        )

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "constraints": list(self.constraints),
            "synthetic_baseline": self.synthetic_baseline,
        }


@dataclass(frozen=True)
class TldSettings:
    """Year pairs for temporal transfer; None means consecutive years."""

    pairs: tuple[tuple[str, int, int], ...] | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "TldSettings":
        _check_keys(data, ("pairs",), "tld")
        pairs = data.get("pairs")
        if pairs is None:
            return cls(None)
        return cls(
            tuple((str(p["segment"]), int(p["source_year"]), int(p["target_year"]))
                  for p in pairs)
        )

    def to_dict(self) -> dict:
        if self.pairs is None:
            return {"pairs": None}
        return {
            "pairs": [
                {"segment": s, "source_year": a, "target_year": b}
                for (s, a, b) in self.pairs
            ]
        }


DEFAULT_SLD_SPLITS = (((0, 50), (50, 100)), ((50, 100), (0, 50)))


@dataclass(frozen=True)
class SldSettings:
    splits: tuple = DEFAULT_SLD_SPLITS

    @classmethod
    def from_dict(cls, data: dict) -> "SldSettings":
        _check_keys(data, ("splits",), "sld")
        raw = data.get("splits", DEFAULT_SLD_SPLITS)
        splits = tuple(
            ((float(a), float(b)), (float(c), float(d)))
            for ((a, b), (c, d)) in raw
        )
        return cls(splits)

    def to_dict(self) -> dict:
        return {"splits": [[list(p), list(q)] for (p, q) in self.splits]}


@dataclass(frozen=True)
class AggregationSettings:
    levels: tuple[int, ...] = (2, 5, 10, 25)
    samples_per_level: int = 1000
    k: int = 5

    @classmethod
    def from_dict(cls, data: dict) -> "AggregationSettings":
        _check_keys(data, ("levels", "samples_per_level", "k"), "aggregation")
        return cls(
            tuple(int(v) for v in data.get("levels", (2, 5, 10, 25))),
            int(data.get("samples_per_level", 1000)),
            int(data.get("k", 5)),
        )

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "samples_per_level": self.samples_per_level,
            "k": self.k,
        }


@dataclass(frozen=True)
class CurveSettings:
    levels: tuple[int, ...] = (1, 2, 3)
    taus: tuple[float, ...] = (0.2, 0.5, 0.8)
    ec_percentiles: tuple[float, ...] = (40.0, 50.0, 60.0)
    x_count: int = 101

    @classmethod
    def from_dict(cls, data: dict) -> "CurveSettings":
        _check_keys(data, ("levels", "taus", "ec_percentiles", "x_count"), "curves")
        return cls(
            tuple(int(v) for v in data.get("levels", (1, 2, 3))),
            tuple(float(v) for v in data.get("taus", (0.2, 0.5, 0.8))),
            tuple(float(v) for v in data.get("ec_percentiles", (40, 50, 60))),
            int(data.get("x_count", 101)),
        )

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "taus": list(self.taus),
            "ec_percentiles": list(self.ec_percentiles),
            "x_count": self.x_count,
        }


@dataclass(frozen=True)
class SynthSpec:
    """Generative model for synthetic meter files.

    ``mode == "surface"``: customers with log-uniform consumption whose
    peaks follow alpha*E + B*sqrt(E), B uniform on [beta_lo, beta_hi] —
    a population with a known true quantile surface.
    ``mode == "gaussian"``: i.i.d. normal readings with the given moments
    (sigma = 0 gives constant profiles).
    """

    mode: str
    segment: str = "synthetic"
    year: int = 2001
    n_customers: int = 100
    n_points: int = 96
    alpha: float = 0.1
    beta_lo: float = 1.0
    beta_hi: float = 3.0
    ec_lo: float = 1e3
    ec_hi: float = 1e6
    mu: float = 1.0
    sigma: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        _check_keys(
            data,
            (
                "mode", "segment", "year", "n_customers", "n_points", "alpha",
                "beta_lo", "beta_hi", "ec_lo", "ec_hi", "mu", "sigma",
            ),
            "synth",
        )
        mode = str(data["mode"])
        if mode not in ("surface", "gaussian"):
            raise ValueError(f"unknown synth mode {mode!r}")
        kwargs: dict[str, Any] = {k: data[k] for k in data if k != "mode"}
        return cls(mode=mode, **kwargs)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "segment": self.segment,
            "year": self.year,
            "n_customers": self.n_customers,
            "n_points": self.n_points,
            "alpha": self.alpha,
            "beta_lo": self.beta_lo,
            "beta_hi": self.beta_hi,
            "ec_lo": self.ec_lo,
            "ec_hi": self.ec_hi,
            "mu": self.mu,
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class VerifySettings:
    instances: int = 3
    max_customers: int = 5
    max_levels: int = 3
    budget: int = 400_000
    rel_tol: float = 1e-4

    @classmethod
    def from_dict(cls, data: dict) -> "VerifySettings":
        _check_keys(
            data,
            ("instances", "max_customers", "max_levels", "budget", "rel_tol"),
            "verify",
        )
        return cls(
            int(data.get("instances", 3)),
            int(data.get("max_customers", 5)),
            int(data.get("max_levels", 3)),
            int(data.get("budget", 400_000)),
            float(data.get("rel_tol", 1e-4)),
        )

    def to_dict(self) -> dict:
        return {
            "instances": self.instances,
            "max_customers": self.max_customers,
            "max_levels": self.max_levels,
            "budget": self.budget,
            "rel_tol": self.rel_tol,
        }


_ANALYSIS_KEYS = ("cv", "tld", "sld", "aggregation", "curves")
_ANALYSIS_TYPES = {
    "cv": CvSettings,
    "tld": TldSettings,
    "sld": SldSettings,
    "aggregation": AggregationSettings,
    "curves": CurveSettings,
}


@dataclass(frozen=True)
class RunConfig:
    out_dir: str
    inputs: tuple[DatasetSpec, ...] = ()
    seed: int | None = None
    constraint: str = "C4"
    grid: GridSpec = field(default_factory=GridSpec)
    interval_duration: float = 1.0
    expected_points: int | None = None
    leap_adjust: bool = True
    tolerance: float = 1e-7
    cv: CvSettings | None = None
    tld: TldSettings | None = None
    sld: SldSettings | None = None
    aggregation: AggregationSettings | None = None
    curves: CurveSettings | None = None
    synth: SynthSpec | None = None
    verify: VerifySettings | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _check_keys(
            data,
            (
                "out_dir", "inputs", "seed", "constraint", "grid",
                "interval_duration", "expected_points", "leap_adjust",
                "tolerance", "analyses", "synth", "verify",
            ),
            "config",
        )
        if "out_dir" not in data:
            raise ValueError("config must set out_dir")
        analyses = data.get("analyses") or {}
        _check_keys(analyses, _ANALYSIS_KEYS, "analyses")
        toggles = {}
        for name in _ANALYSIS_KEYS:
            raw = analyses.get(name)
            toggles[name] = (
                _ANALYSIS_TYPES[name].from_dict(raw) if raw is not None else None
            )
        seed = data.get("seed")
        expected = data.get("expected_points")
        synth = data.get("synth")
        verify = data.get("verify")
        return cls(
            out_dir=str(data["out_dir"]),
            inputs=tuple(DatasetSpec.from_dict(d) for d in data.get("inputs", ())),
            seed=int(seed) if seed is not None else None,
            constraint=str(data.get("constraint", "C4")).upper(),
            grid=GridSpec.from_dict(data.get("grid") or {}),
            interval_duration=float(data.get("interval_duration", 1.0)),
            expected_points=int(expected) if expected is not None else None,
            leap_adjust=bool(data.get("leap_adjust", True)),
            tolerance=float(data.get("tolerance", 1e-7)),
            synth=SynthSpec.from_dict(synth) if synth is not None else None,
            verify=VerifySettings.from_dict(verify) if verify is not None else None,
            **toggles,
        )

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(
        self,
        seed: int | None = None,
        constraint: str | None = None,
        out_dir: str | None = None,
    ) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if constraint is not None:
            cfg = replace(cfg, constraint=constraint.upper())
        if out_dir is not None:
            cfg = replace(cfg, out_dir=out_dir)
        return cfg

    def validate(self) -> None:
        self.grid.to_grid()
        if self.constraint not in CONSTRAINT_REGIMES:
            raise ValueError(f"unknown constraint regime {self.constraint!r}")
        if not (self.interval_duration > 0):
            raise ValueError("interval_duration must be positive")
        if not (self.tolerance > 0):
            raise ValueError("tolerance must be positive")
        if self.expected_points is not None and self.expected_points < 1:
            raise ValueError("expected_points must be positive")
        stochastic = any(
            s is not None for s in (self.cv, self.aggregation, self.curves, self.synth)
        )
        if stochastic and self.seed is None:
            raise ValueError("a seed is required when stochastic analyses are enabled")
        seen = set()
        for ds in self.inputs:
            if not ds.segment or not ds.path:
                raise ValueError("every input needs a segment and a path")
            if (ds.segment, ds.year) in seen:
                raise ValueError(f"duplicate input dataset {ds.stem}")
            seen.add((ds.segment, ds.year))

    def to_dict(self) -> dict:
        return {
            "out_dir": self.out_dir,
            "inputs": [ds.to_dict() for ds in self.inputs],
            "seed": self.seed,
            "constraint": self.constraint,
            "grid": self.grid.to_dict(),
            "interval_duration": self.interval_duration,
            "expected_points": self.expected_points,
            "leap_adjust": self.leap_adjust,
            "tolerance": self.tolerance,
            "analyses": {
                name: getattr(self, name).to_dict()
                if getattr(self, name) is not None
                else None
                for name in _ANALYSIS_KEYS
            },
            "synth": self.synth.to_dict() if self.synth is not None else None,
            "verify": self.verify.to_dict() if self.verify is not None else None,
        }
