"""Shared builders for synthetic populations used across the test suite."""

import numpy as np
import pytest

from velander import CustomerRecord, LoadProfile

TRUE_ALPHA = 0.1
TRUE_BETA_RANGE = (1.0, 3.0)


def surface_records(
    n: int,
    seed: int,
    alpha: float = TRUE_ALPHA,
    beta_lo: float = TRUE_BETA_RANGE[0],
    beta_hi: float = TRUE_BETA_RANGE[1],
    ec_lo: float = 1e3,
    ec_hi: float = 1e6,
) -> tuple[CustomerRecord, ...]:
    """Records with peaks alpha*E + B*sqrt(E), B ~ U[beta_lo, beta_hi]."""
    rng = np.random.default_rng(seed)
    energies = np.exp(rng.uniform(np.log(ec_lo), np.log(ec_hi), n))
    b = rng.uniform(beta_lo, beta_hi, n)
    peaks = alpha * energies + b * np.sqrt(energies)
    return tuple(
        CustomerRecord(f"s{i:05d}", energy=float(e), peak=float(p))
        for i, (e, p) in enumerate(zip(energies, peaks))
    )


def noisy_records(n: int, seed: int, ec_lo: float = 5.0, ec_hi: float = 500.0):
    """Generic records without an exact surface (noisy peaks, clipped >= 0)."""
    rng = np.random.default_rng(seed)
    energies = rng.uniform(ec_lo, ec_hi, n)
    peaks = np.maximum(
        0.1 * energies
        + rng.uniform(1.0, 3.0, n) * np.sqrt(energies)
        + rng.normal(0.0, 1.0, n),
        0.0,
    )
    return tuple(
        CustomerRecord(f"r{i:05d}", energy=float(e), peak=float(p))
        for i, (e, p) in enumerate(zip(energies, peaks))
    )


def spike_profiles(
    n: int,
    seed: int,
    n_points: int = 96,
    ec_lo: float = 1e3,
    ec_hi: float = 1e5,
    beta_sampler=None,
) -> list[LoadProfile]:
    """Two-level profiles realizing the exact surface 0.1*E + B*sqrt(E).

    The peak interval is always the first one, so aggregated groups peak
    coincidently (their peaks add exactly).
    """
    rng = np.random.default_rng(seed)
    energies = np.exp(rng.uniform(np.log(ec_lo), np.log(ec_hi), n))
    if beta_sampler is None:
        b = rng.uniform(*TRUE_BETA_RANGE, n)
    else:
        b = beta_sampler(rng, n)
    peaks = TRUE_ALPHA * energies + b * np.sqrt(energies)
    base = (energies - peaks) / (n_points - 1)
    assert np.all(base >= 0) and np.all(base <= peaks)
    profiles = []
    for i in range(n):
        values = np.full(n_points, base[i])
        values[0] = peaks[i]
        profiles.append(LoadProfile(f"p{i:05d}", values))
    return profiles


def iid_profiles(n: int, seed: int, n_points: int = 96) -> list[LoadProfile]:
    """An i.i.d. population: every customer draws readings from U(0, 2)."""
    rng = np.random.default_rng(seed)
    return [
        LoadProfile(f"u{i:05d}", rng.uniform(0.0, 2.0, n_points)) for i in range(n)
    ]


def peaky_profiles(n: int, seed: int, n_points: int = 96) -> list[LoadProfile]:
    """Flat-base customers with one spike at a uniformly random interval.

    Individual peaks are dispersed and almost never coincide across
    customers, so aggregating a group averages the spikes out: the
    per-member dispersion of the aggregated peak shrinks as the group
    grows, which is the coincidence effect the aggregation studies probe.
    """
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.5, 1.5, n)
    height = rng.uniform(2.0, 10.0, n)
    where = rng.integers(0, n_points, n)
    profiles = []
    for i in range(n):
        values = np.full(n_points, base[i])
        values[where[i]] = height[i]
        profiles.append(LoadProfile(f"k{i:05d}", values))
    return profiles


@pytest.fixture
def two_record_example():
    """Records where the tau=0.5 line is the exact interpolant alpha=beta=1."""
    return (
        CustomerRecord("a", energy=1.0, peak=2.0),
        CustomerRecord("b", energy=4.0, peak=6.0),
    )
