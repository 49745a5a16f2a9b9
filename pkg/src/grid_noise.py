"""Periodic grid, mollifiers, white-noise sampling and the linearized field psi.

Everything random in the laboratory is drawn here, from Philox streams keyed by
``(master seed, stream id)``, so a realization is a pure function of those two
integers.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, GridMismatchError

logger = logging.getLogger(__name__)

# Streamed noise is generated in blocks of roughly this many bytes.
NOISE_BLOCK_BYTES = 8 * 2**20


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the torus [0, length) with ``n`` cells centred at ``k * dx``."""

    length: float
    n: int

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigurationError(f"must be positive, got {self.length}", field="grid.length")
        if self.n < 8 or self.n % 2:
            raise ConfigurationError(f"must be an even integer >= 8, got {self.n}", field="grid.n")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def lags(self) -> np.ndarray:
        """Signed periodic lag of each cell from cell 0, in [-length/2, length/2]."""
        k = np.arange(self.n)
        return np.where(k <= self.n // 2, k, k - self.n) * self.dx

    @property
    def midpoint(self) -> float:
        return 0.5 * self.length

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)

    @cached_property
    def derivative_multiplier(self) -> np.ndarray:
        """``ik`` with the Nyquist mode zeroed so derivatives of real fields stay real."""
        mult = 1j * self.wavenumbers
        mult[-1] = 0.0
        return mult

    def heat_multiplier(self, t: float) -> np.ndarray:
        return np.exp(-0.5 * self.wavenumbers**2 * t)

    def check(self, values: np.ndarray, name: str = "field") -> None:
        if np.shape(values)[-1] != self.n:
            raise GridMismatchError(
                f"{name} has {np.shape(values)[-1]} cells, grid has {self.n}"
            )


class MollifierKind(str, Enum):
    GAUSSIAN = "gaussian"
    BUMP = "bump"
    DELTA = "delta"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class SampledMollifier:
    """The mollifier rho on the grid together with the quantities derived from it."""

    kind: MollifierKind
    width: float
    grid: PeriodicGrid
    values: np.ndarray
    l2sq: float
    deriv_l2sq: float
    selfconv: np.ndarray

    @cached_property
    def spectrum(self) -> np.ndarray:
        return np.fft.rfft(self.values)

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.l2sq))

    @property
    def is_null(self) -> bool:
        return self.kind is MollifierKind.NONE

    def selfconv_at(self, r: np.ndarray) -> np.ndarray:
        """rho*rho at arbitrary (periodic) lags, by linear interpolation."""
        return periodic_interp(self.selfconv, np.asarray(r), self.grid)


def periodic_interp(values: np.ndarray, positions: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Linear interpolation of a periodic grid function at arbitrary real positions.

    ``values`` may carry leading batch axes; they must broadcast against the
    leading axes of ``positions``.
    """
    s = np.mod(positions, grid.length) / grid.dx
    left = np.floor(s).astype(np.int64)
    frac = s - left
    left %= grid.n
    right = (left + 1) % grid.n
    if values.ndim == 1:
        return (1.0 - frac) * values[left] + frac * values[right]
    v_left = np.take_along_axis(values, left, axis=-1)
    v_right = np.take_along_axis(values, right, axis=-1)
    return (1.0 - frac) * v_left + frac * v_right


def build_mollifier(kind, width: float, grid: PeriodicGrid) -> SampledMollifier:
    """Sample a symmetric, unit-mass mollifier on ``grid``.

    Args:
        kind: one of ``gaussian`` (width = standard deviation), ``bump`` (width =
            support radius), ``delta`` (identity mollifier) or ``none`` (no noise).
        width: spatial scale of the kernel.
        grid: the torus grid.

    Returns:
        SampledMollifier with trapezoid-rule norms and the periodic self-convolution.
    """
    kind = MollifierKind(kind)
    dx = grid.dx
    r = grid.lags

    if kind in (MollifierKind.GAUSSIAN, MollifierKind.BUMP):
        if not width > 0:
            raise ConfigurationError(f"must be positive, got {width}", field="mollifier.width")
        if width > grid.length / 8:
            raise ConfigurationError(
                f"width {width} exceeds length/8 = {grid.length / 8}; the 8x rule keeps "
                "the mollifier small relative to the torus",
                field="mollifier.width",
            )
        if kind is MollifierKind.GAUSSIAN:
            values = np.exp(-0.5 * (r / width) ** 2)
        else:
            z = r / width
            values = np.zeros(grid.n)
            inside = np.abs(z) < 1.0
            values[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
        values = values / (dx * values.sum())
    elif kind is MollifierKind.DELTA:
        width = dx
        values = np.zeros(grid.n)
        values[0] = 1.0 / dx
    else:
        width = 0.0
        values = np.zeros(grid.n)

    spectrum = np.fft.rfft(values)
    deriv = np.fft.irfft(grid.derivative_multiplier * spectrum, grid.n)
    selfconv = dx * np.fft.irfft(spectrum * spectrum, grid.n)

    mollifier = SampledMollifier(
        kind=kind,
        width=float(width),
        grid=grid,
        values=values,
        l2sq=float(dx * np.sum(values**2)),
        deriv_l2sq=float(dx * np.sum(deriv**2)),
        selfconv=selfconv,
    )
    logger.debug(f"Built {kind.value} mollifier: width={width}, l2sq={mollifier.l2sq:.6g}")
    return mollifier


def stream_generator(seed: int, stream_id: int, *subkeys: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream_id, *subkeys)``.

    Distinct keys give statistically independent Philox streams; the same key
    always gives the same stream.
    """
    if seed < 0 or stream_id < 0:
        raise ConfigurationError(f"seed and stream id must be nonnegative, got {seed}, {stream_id}")
    sequence = np.random.SeedSequence(seed, spawn_key=(stream_id, *subkeys))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Time increments of cell-averaged white noise, one row per step.

    With ``realizations`` set, each step carries an extra leading axis of
    independent realizations drawn from the same stream. Without ``stored``
    increments the path is regenerated lazily from its key, block by block.
    """

    seed: int
    dt: float
    steps: int
    grid: PeriodicGrid
    stream_id: int = 0
    realizations: Optional[int] = None
    stored: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def step_shape(self) -> Tuple[int, ...]:
        if self.realizations is None:
            return (self.grid.n,)
        return (self.realizations, self.grid.n)

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.dt / self.grid.dx))

    def iter_increments(self) -> Iterator[np.ndarray]:
        if self.stored is not None:
            yield from self.stored
            return
        rng = stream_generator(self.seed, self.stream_id)
        per_step = int(np.prod(self.step_shape))
        block = max(1, NOISE_BLOCK_BYTES // (8 * per_step))
        done = 0
        while done < self.steps:
            count = min(block, self.steps - done)
            chunk = rng.standard_normal((count, *self.step_shape)) * self.scale
            yield from chunk
            done += count

    @property
    def increments(self) -> np.ndarray:
        if self.stored is not None:
            return self.stored
        return np.stack(list(self.iter_increments()))

    def materialized(self) -> "NoisePath":
        return NoisePath(
            seed=self.seed,
            dt=self.dt,
            steps=self.steps,
            grid=self.grid,
            stream_id=self.stream_id,
            realizations=self.realizations,
            stored=self.increments,
        )


def sample_noise_path(
    seed: int,
    dt: float,
    steps: int,
    grid: PeriodicGrid,
    rng_stream_id: int = 0,
    realizations: Optional[int] = None,
    materialize: bool = True,
) -> NoisePath:
    """Draw i.i.d. Normal(0, dt/dx) increments for every cell and step."""
    if not dt > 0:
        raise ConfigurationError(f"must be positive, got {dt}", field="scheme.dt")
    if steps < 1:
        raise ConfigurationError(f"must be >= 1, got {steps}", field="steps")
    if realizations is not None and realizations < 1:
        raise ConfigurationError(f"must be >= 1, got {realizations}", field="statistics.realizations")

    path = NoisePath(
        seed=int(seed),
        dt=float(dt),
        steps=int(steps),
        grid=grid,
        stream_id=int(rng_stream_id),
        realizations=realizations,
    )
    return path.materialized() if materialize else path


def coarsen_noise_path(path: NoisePath) -> NoisePath:
    """The same white noise on the grid with 2*dx and step 2*dt.

    Consecutive steps are summed and cells (2m, 2m + 1) averaged, so the coarse
    increments keep variance dt/dx and a refinement pair sees one realization.
    """
    if path.steps % 2:
        raise ConfigurationError(f"needs an even step count, got {path.steps}", field="steps")
    fine = path.increments
    summed = fine[0::2] + fine[1::2]
    coarse = 0.5 * (summed[..., 0::2] + summed[..., 1::2])
    return NoisePath(
        seed=path.seed,
        dt=2.0 * path.dt,
        steps=path.steps // 2,
        grid=PeriodicGrid(path.grid.length, path.grid.n // 2),
        stream_id=path.stream_id,
        realizations=path.realizations,
        stored=coarse,
    )


def smooth_increment(w: np.ndarray, mollifier: SampledMollifier) -> np.ndarray:
    """Return dV = dx * (rho circularly convolved with dW) along the last axis."""
    grid = mollifier.grid
    grid.check(w, "noise increment")
    if mollifier.kind is MollifierKind.DELTA:
        return np.array(w, dtype=float, copy=True)
    if mollifier.kind is MollifierKind.NONE:
        return np.zeros(np.shape(w))
    return grid.dx * np.fft.irfft(np.fft.rfft(w, axis=-1) * mollifier.spectrum, grid.n, axis=-1)


@dataclass(frozen=True, eq=False)
class LinearizedField:
    """psi(t, .), the noise-forced heat equation solution started from zero."""

    psi: np.ndarray
    t: float
    grid: PeriodicGrid

    @classmethod
    def zero(cls, grid: PeriodicGrid, batch: Tuple[int, ...] = ()) -> "LinearizedField":
        return cls(psi=np.zeros((*batch, grid.n)), t=0.0, grid=grid)


def psi_step(field: LinearizedField, dV: np.ndarray, dt: float) -> LinearizedField:
    """Exponential step of d psi = 1/2 psi'' dt + d(dV/dx).

    Exponential Euler: the increment is injected at the start of the step and
    both it and the old state are carried through the full-step heat semigroup,
    psi_hat <- exp(-k^2 dt / 2) (psi_hat + ik dV_hat). Zero mode stays 0.
    """
    grid = field.grid
    grid.check(dV, "dV")
    decay = grid.heat_multiplier(dt)
    psi_hat = np.fft.rfft(field.psi, axis=-1)
    psi_hat = decay * (psi_hat + grid.derivative_multiplier * np.fft.rfft(dV, axis=-1))
    psi_hat[..., 0] = 0.0
    return LinearizedField(psi=np.fft.irfft(psi_hat, grid.n, axis=-1), t=field.t + dt, grid=grid)


def omega_step(omega: np.ndarray, dV: np.ndarray, dt: float, grid: PeriodicGrid) -> np.ndarray:
    """Exponential step of the stochastic convolution d omega = 1/2 omega'' dt + dV.

    Uses the same injection as psi_step, so ddx(omega) == psi mode by mode. The
    zero mode is not damped and accumulates the spatial mean of dV.
    """
    omega_hat = grid.heat_multiplier(dt) * (np.fft.rfft(omega, axis=-1) + np.fft.rfft(dV, axis=-1))
    return np.fft.irfft(omega_hat, grid.n, axis=-1)


def psi_stationary_covariance(mollifier: SampledMollifier, t: float, grid: PeriodicGrid) -> np.ndarray:
    """Covariance E psi(t,0) psi(t,r) = (rho*2 - G_2t * rho*2)(r) on the grid lags.

    psi has neither a zero mode nor a Nyquist mode, so both are removed here too.
    """
    if t < 0:
        raise ConfigurationError(f"must be nonnegative, got {t}", field="t")
    grid.check(mollifier.selfconv, "mollifier")
    spectrum = np.fft.rfft(mollifier.selfconv)
    factor = -np.expm1(-grid.wavenumbers**2 * t)
    factor[-1] = 0.0
    return np.fft.irfft(spectrum * factor, grid.n)

