"""Directed-polymer Monte Carlo for Z_t, gamma(t) = E(-log Z_t) and the overlap estimate of gamma'(t).

Paths are simulated forward from x = 0; by time reversal of white noise this
has the law of the Feynman-Kac representation of the SHE started from phi = 1.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .errors import ConfigurationError, InsufficientRealizationsError
from .grid_noise import (
    PeriodicGrid,
    SampledMollifier,
    periodic_interp,
    sample_noise_path,
    smooth_increment,
    stream_generator,
)

logger = logging.getLogger(__name__)

MIN_PATHS = 100
MIN_OUTER_REALIZATIONS = 50


@dataclass(frozen=True)
class PolymerConfig:
    paths: int
    dt: float
    t_max: float
    resample_threshold: float = 0.5

    def __post_init__(self):
        if self.paths < MIN_PATHS:
            raise ConfigurationError(f"must be >= {MIN_PATHS}, got {self.paths}", field="polymer.paths")
        if not self.dt > 0:
            raise ConfigurationError(f"must be positive, got {self.dt}", field="polymer.dt")
        if not 0 < self.resample_threshold <= 1:
            raise ConfigurationError(
                f"must lie in (0, 1], got {self.resample_threshold}", field="polymer.resample_threshold"
            )
        ratio = self.t_max / self.dt
        if self.t_max <= 0 or abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigurationError(f"dt={self.dt} must divide t_max={self.t_max}", field="polymer.t_max")

    @property
    def steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass(frozen=True, eq=False)
class PolymerEnsemble:
    """Weighted paths for a batch of disorder realizations, arrays shaped (*batch, M).

    Positions are unwrapped Brownian displacements; ``log_norm`` accumulates the
    normalisations removed at each resampling.
    """

    positions: np.ndarray
    log_weights: np.ndarray
    log_norm: np.ndarray
    t: float

    @classmethod
    def start(cls, paths: int, batch: tuple = ()) -> "PolymerEnsemble":
        return cls(
            positions=np.zeros((*batch, paths)),
            log_weights=np.zeros((*batch, paths)),
            log_norm=np.zeros(batch),
            t=0.0,
        )

    @property
    def paths(self) -> int:
        return self.positions.shape[-1]

    def log_partition(self) -> np.ndarray:
        """log Z-hat: accumulated normalisation plus the log mean of the current weights."""
        return self.log_norm + logsumexp(self.log_weights, axis=-1) - np.log(self.paths)

    def normalized_weights(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights, axis=-1, keepdims=True))

    def ess(self) -> np.ndarray:
        """Effective sample size (sum w)^2 / sum w^2, always in [1, M]."""
        w = self.normalized_weights()
        return np.clip(1.0 / np.sum(w**2, axis=-1), 1.0, float(self.paths))


def systematic_resample(log_weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling, one stratified uniform per row."""
    shape = log_weights.shape
    m = shape[-1]
    rows = log_weights.reshape(-1, m)
    w = np.exp(rows - logsumexp(rows, axis=-1, keepdims=True))
    cdf = np.cumsum(w, axis=-1)
    cdf[:, -1] = 1.0
    u = (rng.random((rows.shape[0], 1)) + np.arange(m)) / m
    # rows are separated by offsets of 2 so one flat searchsorted covers the batch
    offsets = 2.0 * np.arange(rows.shape[0])[:, None]
    flat = np.searchsorted((cdf + offsets).ravel(), (u + offsets).ravel())
    idx = flat.reshape(rows.shape) - m * np.arange(rows.shape[0])[:, None]
    return np.minimum(idx, m - 1).reshape(shape)


def polymer_advance(
    ens: PolymerEnsemble,
    dV: np.ndarray,
    dt: float,
    mollifier: SampledMollifier,
    rng: np.random.Generator,
    resample_threshold: float = 0.5,
) -> PolymerEnsemble:
    """Move each path by sqrt(dt) N(0,1), weight by exp(-dV(X) - dt/2 rho*rho(0)), resample on low ESS."""
    grid = mollifier.grid
    positions = ens.positions + np.sqrt(dt) * rng.standard_normal(ens.positions.shape)
    sampled = periodic_interp(dV, positions, grid)
    log_weights = ens.log_weights - sampled - 0.5 * dt * mollifier.selfconv[0]
    log_norm = ens.log_norm
    advanced = PolymerEnsemble(positions=positions, log_weights=log_weights, log_norm=log_norm, t=ens.t + dt)

    low = advanced.ess() < resample_threshold * ens.paths
    if not np.any(low):
        return advanced
    idx = systematic_resample(log_weights, rng)
    resampled_positions = np.take_along_axis(positions, idx, axis=-1)
    removed = logsumexp(log_weights, axis=-1) - np.log(ens.paths)
    low_paths = low[..., None]
    return PolymerEnsemble(
        positions=np.where(low_paths, resampled_positions, positions),
        log_weights=np.where(low_paths, 0.0, log_weights),
        log_norm=np.where(low, log_norm + removed, log_norm),
        t=advanced.t,
    )


def cloud_in_cell(positions: np.ndarray, weights: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Deposit weighted points onto the grid with linear (CIC) shares, batch-aware."""
    s = np.mod(positions, grid.length) / grid.dx
    left = np.floor(s).astype(np.int64)
    frac = s - left
    left %= grid.n
    right = (left + 1) % grid.n
    rows = positions.reshape(-1, positions.shape[-1]).shape[0]
    base = (np.arange(rows) * grid.n)[:, None]
    flat_left = (left.reshape(rows, -1) + base).ravel()
    flat_right = (right.reshape(rows, -1) + base).ravel()
    w = weights.reshape(rows, -1)
    frac = frac.reshape(rows, -1)
    density = np.bincount(flat_left, ((1.0 - frac) * w).ravel(), minlength=rows * grid.n)
    density += np.bincount(flat_right, (frac * w).ravel(), minlength=rows * grid.n)
    return density.reshape(*positions.shape[:-1], grid.n)


def overlap(first: PolymerEnsemble, second: PolymerEnsemble, mollifier: SampledMollifier) -> np.ndarray:
    """Polymer-weighted pair average of rho*rho(X - X~) over two independent ensembles."""
    grid = mollifier.grid
    dens_a = cloud_in_cell(first.positions, first.normalized_weights(), grid)
    dens_b = cloud_in_cell(second.positions, second.normalized_weights(), grid)
    smoothed = np.fft.irfft(np.fft.rfft(dens_b, axis=-1) * np.fft.rfft(mollifier.selfconv), grid.n, axis=-1)
    return np.sum(dens_a * smoothed, axis=-1)


@dataclass(frozen=True, eq=False)
class GammaCurve:
    """gamma-hat and the overlap gamma'-hat over time with outer-realization samples.

    ``gamma_samples`` and ``prime_samples`` have shape (times, realizations).
    ``gamma_half`` is the same estimate with M/2 paths, for the inner-bias check.
    """

    times: np.ndarray
    gamma: np.ndarray
    se: np.ndarray
    gamma_prime_overlap: np.ndarray
    se_prime: np.ndarray
    ess_min: np.ndarray
    gamma_half: np.ndarray
    gamma_samples: np.ndarray
    prime_samples: np.ndarray
    collapsed: bool = False

    @property
    def extrapolated(self) -> np.ndarray:
        """Richardson estimate 2*gamma_M - gamma_{M/2} assuming an O(1/M) bias."""
        return 2.0 * self.gamma - self.gamma_half

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "gamma": self.gamma,
                "se": self.se,
                "gamma_prime": self.gamma_prime_overlap,
                "se_prime": self.se_prime,
                "ess_min": self.ess_min,
                "gamma_half_paths": self.gamma_half,
            }
        )


def _mean_se(samples: np.ndarray):
    return samples.mean(axis=-1), samples.std(axis=-1, ddof=1) / np.sqrt(samples.shape[-1])


def estimate_gamma(
    realizations: int,
    cfg: PolymerConfig,
    mollifier: SampledMollifier,
    seed: int,
    stream_id: int = 0,
    record_times: Optional[Sequence[float]] = None,
) -> GammaCurve:
    """Monte Carlo gamma(t) over ``realizations`` disorder samples, each with its own paths.

    Two independent path ensembles of size M share each disorder sample (for the
    overlap estimator) and a third of size M/2 provides the bias check.
    """
    if realizations < MIN_OUTER_REALIZATIONS:
        raise InsufficientRealizationsError(
            f"insufficient realizations: {realizations} < {MIN_OUTER_REALIZATIONS}", field="statistics.realizations"
        )
    grid = mollifier.grid
    steps = cfg.steps
    if record_times is None:
        record = set(range(steps + 1))
    else:
        record = {int(np.floor(t / cfg.dt + 1e-9)) for t in record_times}
    noise = sample_noise_path(
        seed, cfg.dt, steps, grid, rng_stream_id=stream_id, realizations=realizations, materialize=False
    )
    rngs = [stream_generator(seed, stream_id, k) for k in (1, 2, 3)]
    batch = (realizations,)
    ensembles = [
        PolymerEnsemble.start(cfg.paths, batch),
        PolymerEnsemble.start(cfg.paths, batch),
        PolymerEnsemble.start(cfg.paths // 2, batch),
    ]

    times, gamma_rows, prime_rows, half_rows, ess_rows = [], [], [], [], []
    running_ess_min = float(cfg.paths)

    def record_row(t: float):
        a, b, half = ensembles
        times.append(t)
        gamma_rows.append(-a.log_partition())
        half_rows.append(float(np.mean(-half.log_partition())))
        prime_rows.append(0.5 * overlap(a, b, mollifier))
        ess_rows.append(running_ess_min)

    if 0 in record:
        record_row(0.0)
    for k, dW in enumerate(noise.iter_increments(), start=1):
        dV = smooth_increment(dW, mollifier)
        ensembles = [
            polymer_advance(e, dV, cfg.dt, mollifier, rng, cfg.resample_threshold) for e, rng in zip(ensembles, rngs)
        ]
        running_ess_min = min(running_ess_min, float(np.min(ensembles[0].ess())))
        if k in record:
            record_row(k * cfg.dt)

    gamma_samples = np.stack(gamma_rows)
    prime_samples = np.stack(prime_rows)
    gamma, se = _mean_se(gamma_samples)
    prime, se_prime = _mean_se(prime_samples)
    collapsed = running_ess_min <= 1.0 + 1e-9
    if collapsed:
        logger.warning("Polymer ESS collapsed to a single path; gamma estimate is unreliable")
    logger.info(
        f"Polymer run: {realizations} realizations x {cfg.paths} paths, {steps} steps, min ESS {running_ess_min:.1f}"
    )
    return GammaCurve(
        times=np.asarray(times),
        gamma=gamma,
        se=se,
        gamma_prime_overlap=prime,
        se_prime=se_prime,
        ess_min=np.asarray(ess_rows),
        gamma_half=np.asarray(half_rows),
        gamma_samples=gamma_samples,
        prime_samples=prime_samples,
        collapsed=collapsed,
    )


def estimate_gamma_prime_overlap(
    realizations: int,
    cfg: PolymerConfig,
    mollifier: SampledMollifier,
    seed: int,
    stream_id: int = 0,
    record_times: Optional[Sequence[float]] = None,
) -> pd.DataFrame:
    """gamma'(t) = 1/2 E[ polymer-weighted pair average of rho*rho(X - X~) ]."""
    curve = estimate_gamma(realizations, cfg, mollifier, seed, stream_id, record_times)
    return pd.DataFrame({"t": curve.times, "gamma_prime": curve.gamma_prime_overlap, "se_prime": curve.se_prime})


def integrated_prime(curve: GammaCurve) -> np.ndarray:
    """Cumulative trapezoid of the overlap samples, shape (times, realizations)."""
    dt = np.diff(curve.times)[:, None]
    steps = 0.5 * (curve.prime_samples[1:] + curve.prime_samples[:-1]) * dt
    return np.concatenate([np.zeros_like(curve.prime_samples[:1]), np.cumsum(steps, axis=0)])
