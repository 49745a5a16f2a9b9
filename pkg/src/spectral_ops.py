"""Spectral operators and weighted norms on the periodic grid."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, GridMismatchError
from .grid_noise import PeriodicGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Field:
    """Values of a periodic function at the grid cells."""

    values: np.ndarray
    grid: PeriodicGrid

    def __post_init__(self):
        self.grid.check(self.values)
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("field has non-finite entries")

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(values=values, grid=self.grid)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


class WeightKind(str, Enum):
    POLY_ELL = "poly_ell"
    SQRT_LOG = "sqrt_log"
    Y_G = "y_g"


@dataclass(frozen=True)
class WeightSpec:
    """Spatial weight; ``center`` defaults to the torus midpoint."""

    kind: WeightKind = WeightKind.POLY_ELL
    ell: float = 0.0
    center: Optional[float] = None

    def evaluate(self, grid: PeriodicGrid) -> np.ndarray:
        kind = WeightKind(self.kind)
        center = grid.midpoint if self.center is None else self.center
        bracket = np.sqrt(4.0 + (grid.x - center) ** 2)
        if kind is WeightKind.POLY_ELL:
            return bracket**self.ell
        if kind is WeightKind.SQRT_LOG:
            return np.sqrt(bracket) * np.log(bracket)
        return 1.0 / y_g_inverse_weight(grid)


def y_g_inverse_weight(grid: PeriodicGrid) -> np.ndarray:
    """1/p_G for G = L.Z: 1/p_2 convolved with the uniform probability on one period.

    For an L-periodic field only the L-periodisation of 1/p_2 matters; it has the
    closed form (pi/2L) sinh(4pi/L) / (cosh(4pi/L) - cos(2pi z/L)). Convolving it
    with the uniform measure on the torus cells gives a constant weight.
    """
    L = grid.length
    a = 4.0 * np.pi / L
    periodised = (np.pi / (2.0 * L)) * np.sinh(a) / (np.cosh(a) - np.cos(2.0 * np.pi * grid.lags / L))
    aggregated = grid.dx * np.sum(periodised) / L
    return np.full(grid.n, aggregated)


def _spectral(values: np.ndarray, multiplier: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(values, axis=-1) * multiplier, grid.n, axis=-1)


def heat_array(values: np.ndarray, grid: PeriodicGrid, t: float) -> np.ndarray:
    if t < 0:
        raise ConfigurationError(f"heat time must be nonnegative, got {t}", field="t")
    if t == 0:
        return np.array(values, dtype=float, copy=True)
    return _spectral(values, grid.heat_multiplier(t), grid)


def heat_apply(f: Field, t: float) -> Field:
    """Apply the heat semigroup G_t (generator 1/2 d^2/dx^2)."""
    return f.with_values(heat_array(f.values, f.grid, t))


def ddx_array(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return _spectral(values, grid.derivative_multiplier, grid)


def ddx(f: Field) -> Field:
    """Spectral derivative; the zero and Nyquist modes of the result vanish."""
    return f.with_values(ddx_array(f.values, f.grid))


def shift_array(values: np.ndarray, grid: PeriodicGrid, a) -> np.ndarray:
    """Exact periodic translation f(. - a); ``a`` may be an array over leading axes."""
    a = np.asarray(a, dtype=float)[..., None]
    phase = np.exp(-1j * grid.wavenumbers * a)
    f_hat = np.fft.rfft(values, axis=-1)
    # the Nyquist mode of a real field cannot carry a phase; keep its real projection
    shifted = f_hat * phase
    shifted[..., -1] = f_hat[..., -1] * np.cos(grid.wavenumbers[-1] * a[..., 0])
    return np.fft.irfft(shifted, grid.n, axis=-1)


def shift(f: Field, a: float) -> Field:
    return f.with_values(shift_array(f.values, f.grid, a))


def antiderivative(values: np.ndarray, grid: PeriodicGrid, zeta: Optional[np.ndarray] = None) -> np.ndarray:
    """H with H' = values, normalised so that sum(zeta * H) dx = 0.

    The mean a of ``values`` contributes the non-periodic part a * x. Without
    ``zeta`` the result has zero spatial mean.
    """
    mean = np.mean(values, axis=-1, keepdims=True)
    mult = np.zeros(grid.wavenumbers.shape, dtype=complex)
    mult[1:-1] = 1.0 / (1j * grid.wavenumbers[1:-1])
    periodic_part = _spectral(values - mean, mult, grid)
    h = periodic_part + mean * grid.x
    if zeta is None:
        weights = np.full(grid.n, 1.0 / grid.length)
    else:
        weights = zeta
    return h - grid.dx * np.sum(weights * h, axis=-1, keepdims=True)


def weighted_sup_norm(f: Field, w: WeightSpec) -> float:
    return float(np.max(np.abs(f.values) / w.evaluate(f.grid)))


def weighted_l1_norm(f: Field, w: WeightSpec) -> float:
    return float(np.sum(np.abs(f.values) * f.grid.dx / w.evaluate(f.grid)))


def weighted_l1_array(values: np.ndarray, grid: PeriodicGrid, w: WeightSpec) -> np.ndarray:
    """Batched weighted L1 norm along the last axis."""
    return np.sum(np.abs(values) * (grid.dx / w.evaluate(grid)), axis=-1)


def weighted_h1_norm(f: Field, w: Optional[WeightSpec] = None) -> float:
    """sqrt( sum (f^2 + f'^2) dx / w^2 ), by default with w = <x>^(1/2) log<x>."""
    w = w or WeightSpec(kind=WeightKind.SQRT_LOG)
    weight = w.evaluate(f.grid)
    deriv = ddx_array(f.values, f.grid)
    return float(np.sqrt(np.sum((f.values**2 + deriv**2) / weight**2) * f.grid.dx))


def holder_seminorm(values: np.ndarray, grid: PeriodicGrid, beta: float, weight: np.ndarray) -> float:
    """Max weighted difference quotient over lags of 1 cell up to ceil(1/dx) cells."""
    max_lag = min(int(np.ceil(1.0 / grid.dx)), grid.n // 2)
    best = 0.0
    for lag in range(1, max_lag + 1):
        diff = np.abs(np.roll(values, -lag) - values) / weight
        best = max(best, float(diff.max()) / (lag * grid.dx) ** beta)
    return best


@dataclass(frozen=True, eq=False)
class HeatRateTable:
    table: pd.DataFrame
    exponent: float


def default_probe_family(grid: PeriodicGrid) -> Sequence[np.ndarray]:
    """Square waves of a few periods; rough enough to expose the smoothing rate."""
    return [np.sign(np.sin(2.0 * np.pi * m * (grid.x + 0.5 * grid.dx) / grid.length)) for m in (1, 2, 4)]


def heat_rate_probe(
    alpha: float,
    beta: float,
    w: WeightSpec,
    t_list: Iterable[float],
    grid: PeriodicGrid,
    probes: Optional[Sequence[np.ndarray]] = None,
) -> HeatRateTable:
    """Estimate the exponent of t in sup_f |G_t f|_{C^beta_w} / |f|_{L^inf_w}.

    For beta = 0 the sup norm is measured; for beta > 0 the weighted Hoelder
    seminorm, which carries the t^(-(beta - alpha)/2) rate.
    """
    if alpha != 0:
        raise ConfigurationError("only alpha = 0 is supported", field="alpha")
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError(f"must lie in [0, 1], got {beta}", field="beta")
    times = np.asarray(list(t_list), dtype=float)
    if np.any(times <= 0):
        raise ConfigurationError("probe times must be positive", field="t_list")
    probes = default_probe_family(grid) if probes is None else probes
    weight = w.evaluate(grid)

    ratios = []
    for t in times:
        best = 0.0
        for f in probes:
            grid.check(f, "probe")
            denominator = float(np.max(np.abs(f) / weight))
            if denominator == 0:
                continue
            smoothed = heat_array(f, grid, t)
            if beta == 0:
                numerator = float(np.max(np.abs(smoothed) / weight))
            else:
                numerator = holder_seminorm(smoothed, grid, beta, weight)
            best = max(best, numerator / denominator)
        ratios.append(best)
    ratios = np.asarray(ratios)

    if np.all(ratios > 0):
        exponent = float(np.polyfit(np.log(times), np.log(ratios), 1)[0])
    elif np.allclose(ratios, ratios[0]):
        exponent = 0.0
    else:
        exponent = float("nan")
    logger.debug(f"heat_rate_probe beta={beta}: fitted exponent {exponent:.3f}")
    return HeatRateTable(table=pd.DataFrame({"t": times, "ratio": ratios}), exponent=exponent)


def require_same_grid(*grids: PeriodicGrid) -> PeriodicGrid:
    first = grids[0]
    for other in grids[1:]:
        if other != first:
            raise GridMismatchError(f"grid {other} differs from {first}")
    return first
