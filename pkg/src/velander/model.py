"""Core domain types and loss functions for quantile peak-load modelling.

A customer is summarised by its annual electricity consumption ``E`` (in
kW-15min units, i.e. the sum of 15-minute average-power readings) and its
annual peak load ``P`` (kW).  The model family is the quantile Velander
formula

    P_hat(tau) = alpha_tau * E + beta_tau * sqrt(E)

fitted jointly over a grid of quantile levels under one of four constraint
regimes:

* ``C1`` -- unconstrained (independent per-level fits),
* ``C2`` -- predicted loads non-crossing on the consumption domain,
* ``C3`` -- alpha and beta each non-decreasing in the level,
* ``C4`` -- alpha shared across levels, beta non-decreasing.

Fit quality is measured by the average pinball loss over customers and
levels, in kW.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ENERGY_UNIT = "kW-15min"
LOAD_UNIT = "kW"

CONSTRAINT_REGIMES = ("C1", "C2", "C3", "C4")

#: Feasibility slack (kW / kW-per-unit) allowed when validating a parameter
#: set against its declared constraint regime.
REGIME_TOL = 1e-9


@dataclass(frozen=True)
class LoadProfile:
    """A metered load time series for one customer.

    ``values`` are 15-minute average powers in kW; NaN marks a missing
    reading (infinities are rejected).  ``interval_duration`` is the reading
    length in 15-minute units (1.0 for plain quarter-hour data).
    """

    customer_id: str
    values: np.ndarray
    interval_duration: float = 1.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if arr.ndim != 1:
            raise ValueError("load profile values must be one-dimensional")
        if np.isinf(arr).any():
            raise ValueError(
                f"profile {self.customer_id!r} contains infinite readings"
            )
        if not (self.interval_duration > 0):
            raise ValueError("interval_duration must be positive")

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())


@dataclass(frozen=True)
class CustomerRecord:
    """Per-customer features: consumption ``energy`` and peak load ``peak``.

    ``weight_level`` counts how many individual customers the record
    aggregates (1 for a plain customer, ``l`` for a synthetic group of
    ``l`` members).
    """

    customer_id: str
    energy: float
    peak: float
    weight_level: int = 1

    def __post_init__(self) -> None:
        if not math.isfinite(self.energy) or self.energy < 0:
            raise ValueError(
                f"record {self.customer_id!r}: energy must be finite and >= 0"
            )
        if not math.isfinite(self.peak) or self.peak < 0:
            raise ValueError(
                f"record {self.customer_id!r}: peak must be finite and >= 0"
            )
        if self.weight_level < 1:
            raise ValueError("weight_level must be a positive integer")


def compute_features(profile: LoadProfile) -> CustomerRecord:
    """Reduce a complete load profile to its (energy, peak) record.

    Energy is the sum of readings times the interval duration, so a plain
    15-minute series yields kW-15min units; peak is the maximum reading.
    """
    if profile.n_points == 0:
        raise ValueError(f"profile {profile.customer_id!r} is empty")
    if profile.has_missing():
        raise ValueError(
            f"profile {profile.customer_id!r} has missing readings; clean first"
        )
    energy = float(np.sum(profile.values) * profile.interval_duration)
    peak = float(np.max(profile.values))
    mean = energy / (profile.n_points * profile.interval_duration)
    if peak < mean - 1e-9 * max(1.0, abs(mean)):
        raise ValueError(
            f"profile {profile.customer_id!r}: mean power exceeds peak"
        )
    return CustomerRecord(profile.customer_id, energy=energy, peak=peak)


@dataclass(frozen=True)
class QuantileGrid:
    """A strictly increasing grid of quantile levels in (0, 1)."""

    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        levels = tuple(float(t) for t in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) == 0:
            raise ValueError("quantile grid must contain at least one level")
        arr = np.asarray(levels)
        if not np.all((arr > 0.0) & (arr < 1.0)):
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        if not np.all(np.diff(arr) > 0.0):
            raise ValueError("quantile levels must be strictly increasing")

    @classmethod
    def from_range(cls, lo: float, hi: float, step: float) -> "QuantileGrid":
        """Inclusive arithmetic grid, e.g. (0.10, 0.90, 0.01) -> 81 levels."""
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(round((hi - lo) / step)) + 1
        levels = tuple(round(lo + i * step, 12) for i in range(count))
        if not levels or levels[-1] > hi + 1e-12:
            raise ValueError(f"invalid level range ({lo}, {hi}, {step})")
        return cls(levels)

    def __len__(self) -> int:
        return len(self.levels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)


#: The default fitting grid: levels 0.10, 0.11, ..., 0.90.
DEFAULT_GRID = QuantileGrid.from_range(0.10, 0.90, 0.01)


def parameter_count(n_levels: int, constraint: str) -> int:
    """Free parameters of a fit: 2 per level, except C4 shares one alpha."""
    if constraint not in CONSTRAINT_REGIMES:
        raise ValueError(f"unknown constraint regime {constraint!r}")
    if n_levels < 1:
        raise ValueError("need at least one quantile level")
    if constraint == "C4":
        return n_levels + 1
    return 2 * n_levels


@dataclass(frozen=True)
class QuantileParamSet:
    """Fitted (alpha, beta) pairs per quantile level under a constraint regime.

    ``fit_ec_range`` records the consumption interval the fit covered; it is
    the domain on which C2's non-crossing guarantee applies.  Construction
    validates the declared regime up to ``REGIME_TOL``.
    """

    constraint: str
    levels: tuple[float, ...]
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    fit_ec_range: tuple[float, float] | None = None
    units: dict = field(
        default_factory=lambda: {"energy": ENERGY_UNIT, "load": LOAD_UNIT}
    )

    def __post_init__(self) -> None:
        grid = QuantileGrid(self.levels)  # re-validates ordering / bounds
        object.__setattr__(self, "levels", grid.levels)
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.constraint not in CONSTRAINT_REGIMES:
            raise ValueError(f"unknown constraint regime {self.constraint!r}")
        m = len(self.levels)
        if len(self.alpha) != m or len(self.beta) != m:
            raise ValueError("alpha/beta must have one entry per level")
        if not all(math.isfinite(v) for v in self.alpha + self.beta):
            raise ValueError("parameters must be finite")
        if self.fit_ec_range is not None:
            lo, hi = (float(v) for v in self.fit_ec_range)
            if not (0 <= lo <= hi) or not math.isfinite(hi):
                raise ValueError("fit_ec_range must satisfy 0 <= lo <= hi")
            object.__setattr__(self, "fit_ec_range", (lo, hi))
        self._validate_regime()

    def _validate_regime(self) -> None:
        a = np.asarray(self.alpha)
        b = np.asarray(self.beta)
        if self.constraint == "C1" or a.size < 2:
            return
        if self.constraint == "C2":
            if self.fit_ec_range is None:
                raise ValueError("C2 parameter sets require fit_ec_range")
            lo, hi = self.fit_ec_range
            for s in (math.sqrt(lo), math.sqrt(hi)):
                gap = np.diff(a) * s + np.diff(b)
                if np.any(gap < -REGIME_TOL):
                    raise ValueError(
                        "C2 violated: predicted loads cross on fit_ec_range"
                    )
        elif self.constraint == "C3":
            if np.any(np.diff(a) < -REGIME_TOL) or np.any(np.diff(b) < -REGIME_TOL):
                raise ValueError("C3 violated: alpha/beta not non-decreasing")
        elif self.constraint == "C4":
            if np.any(np.abs(a - a[0]) > REGIME_TOL):
                raise ValueError("C4 violated: alpha differs across levels")
            if np.any(np.diff(b) < -REGIME_TOL):
                raise ValueError("C4 violated: beta not non-decreasing")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def parameter_count(self) -> int:
        return parameter_count(self.n_levels, self.constraint)

    def predict(self, energies) -> np.ndarray:
        """Predicted loads, shape (n_energies, n_levels)."""
        e = np.atleast_1d(np.asarray(energies, dtype=float))
        if np.any(e < 0):
            raise ValueError("energies must be non-negative")
        a = np.asarray(self.alpha)
        b = np.asarray(self.beta)
        return e[:, None] * a[None, :] + np.sqrt(e)[:, None] * b[None, :]

    def level_index(self, tau: float) -> int:
        """Index of ``tau`` in the grid; raises if absent."""
        arr = np.asarray(self.levels)
        idx = int(np.argmin(np.abs(arr - tau)))
        if abs(arr[idx] - tau) > 1e-9:
            raise KeyError(f"level {tau} not on the fitted grid")
        return idx

    def to_dict(self) -> dict:
        out = {
            "constraint": self.constraint,
            "levels": list(self.levels),
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "fit_ec_range": list(self.fit_ec_range)
            if self.fit_ec_range is not None
            else None,
            "units": dict(self.units),
        }
        return out

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: dict) -> "QuantileParamSet":
        rng = data.get("fit_ec_range")
        return cls(
            constraint=data["constraint"],
            levels=tuple(data["levels"]),
            alpha=tuple(data["alpha"]),
            beta=tuple(data["beta"]),
            fit_ec_range=tuple(rng) if rng is not None else None,
            units=dict(data.get("units", {"energy": ENERGY_UNIT, "load": LOAD_UNIT})),
        )

    @classmethod
    def from_json(cls, path) -> "QuantileParamSet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def velander_quantile(energy, alpha: float, beta: float):
    """Predicted load alpha*E + beta*sqrt(E) for one quantile level."""
    e = np.asarray(energy, dtype=float)
    if np.any(e < 0):
        raise ValueError("energy must be non-negative")
    out = alpha * e + beta * np.sqrt(e)
    return float(out) if np.isscalar(energy) else out


def pinball_loss(observed, predicted, tau: float):
    """Pinball (check) loss: tau*d if d >= 0 else (tau-1)*d, d = obs - pred."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    d = np.asarray(observed, dtype=float) - np.asarray(predicted, dtype=float)
    out = np.where(d >= 0.0, tau * d, (tau - 1.0) * d)
    if np.isscalar(observed) and np.isscalar(predicted):
        return float(out)
    return out


def apl_arrays(
    energies: np.ndarray,
    peaks: np.ndarray,
    levels: np.ndarray,
    alphas: np.ndarray,
    betas: np.ndarray,
) -> float:
    """Average pinball loss over customers x levels, from plain arrays (kW)."""
    e = np.asarray(energies, dtype=float)
    p = np.asarray(peaks, dtype=float)
    taus = np.asarray(levels, dtype=float)
    pred = e[:, None] * np.asarray(alphas)[None, :] + np.sqrt(e)[:, None] * np.asarray(
        betas
    )[None, :]
    d = p[:, None] - pred
    loss = np.where(d >= 0.0, taus[None, :] * d, (taus[None, :] - 1.0) * d)
    return float(loss.mean())


def average_pinball_loss(
    records: Sequence[CustomerRecord], params: QuantileParamSet
) -> float:
    """Average pinball loss of ``params`` on ``records``, in kW."""
    if len(records) == 0:
        raise ValueError("cannot average pinball loss over an empty record set")
    e = np.array([r.energy for r in records])
    p = np.array([r.peak for r in records])
    return apl_arrays(
        e, p, np.asarray(params.levels), np.asarray(params.alpha), np.asarray(params.beta)
    )
