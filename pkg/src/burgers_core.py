"""Ensemble evolution of the stochastic Burgers equation under shared noise.

Each component is written u_i = theta_i + psi. theta_i is advanced by a
conservative monotone finite-volume step (explicit flux, implicit diffusion) and
psi by the exponential-Euler step of grid_noise, so comparison, L1-contraction
and conservation of mass hold exactly at the discrete level.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .errors import CFLViolationError, ConfigurationError, GridMismatchError
from .grid_noise import (
    LinearizedField,
    NoisePath,
    PeriodicGrid,
    SampledMollifier,
    psi_step,
    sample_noise_path,
    smooth_increment,
)

logger = logging.getLogger(__name__)


class FluxKind(str, Enum):
    ENGQUIST_OSHER = "engquist_osher"
    LAX_FRIEDRICHS = "lax_friedrichs"


@dataclass(frozen=True)
class SchemeConfig:
    """Time step and discretization choices.

    ``advection`` and ``diffusion`` switch the two parts of the theta update
    off for diagnostic runs (pure heat flow, pure transport).
    """

    dt: float
    flux: FluxKind = FluxKind.ENGQUIST_OSHER
    cfl_safety: float = 0.9
    advection: bool = True
    diffusion: bool = True

    def __post_init__(self):
        object.__setattr__(self, "flux", FluxKind(self.flux))
        if not self.dt > 0:
            raise ConfigurationError(f"must be positive, got {self.dt}", field="scheme.dt")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigurationError(f"must lie in (0, 1], got {self.cfl_safety}", field="scheme.cfl_safety")


def engquist_osher_flux(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Engquist-Osher numerical flux for f(v) = v^2/2 (Godunov for convex f)."""
    return 0.5 * (np.maximum(left, 0.0) ** 2 + np.minimum(right, 0.0) ** 2)


def lax_friedrichs_flux(left: np.ndarray, right: np.ndarray, speed: float) -> np.ndarray:
    return 0.25 * (left**2 + right**2) - 0.5 * speed * (right - left)


def flux_difference(v: np.ndarray, cfg: SchemeConfig, dx: float) -> np.ndarray:
    """(F_{k+1/2} - F_{k-1/2}) / dx on the periodic grid."""
    right = np.roll(v, -1, axis=-1)
    if cfg.flux is FluxKind.ENGQUIST_OSHER:
        interface = engquist_osher_flux(v, right)
    else:
        interface = lax_friedrichs_flux(v, right, cfg.cfl_safety * dx / cfg.dt)
    return (interface - np.roll(interface, 1, axis=-1)) / dx


class PeriodicTridiagonalSolver:
    """Solves (I - r D2) x = b for the periodic 3-point Laplacian D2 (unit spacing).

    The cyclic corners are closed with a Sherman-Morrison correction on top of a
    banded solve.
    """

    def __init__(self, n: int, r: float):
        self.n = n
        diag = 1.0 + 2.0 * r
        off = -r
        gamma = -diag

        ab = np.zeros((3, n))
        ab[0, 1:] = off
        ab[1, :] = diag
        ab[2, :-1] = off
        ab[1, 0] -= gamma
        ab[1, -1] -= off * off / gamma
        self._ab = ab

        u = np.zeros(n)
        u[0] = gamma
        u[-1] = off
        self._v = np.zeros(n)
        self._v[0] = 1.0
        self._v[-1] = off / gamma
        self._z = solve_banded((1, 1), ab, u)
        self._denominator = 1.0 + self._v @ self._z

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        shape = rhs.shape
        columns = rhs.reshape(-1, self.n).T
        y = solve_banded((1, 1), self._ab, columns)
        correction = (self._v @ y) / self._denominator
        x = y - np.outer(self._z, correction)
        return x.T.reshape(shape)


@lru_cache(maxsize=32)
def _diffusion_solver(n: int, dt: float, dx: float) -> PeriodicTridiagonalSolver:
    return PeriodicTridiagonalSolver(n, 0.5 * dt / dx**2)


@dataclass(frozen=True, eq=False)
class BurgersEnsemble:
    """N coupled fields u_i = theta_i + psi, possibly for a batch of realizations.

    ``thetas`` has shape (*batch, N, n) and ``psi.psi`` has shape (*batch, n).
    """

    thetas: np.ndarray
    psi: LinearizedField
    mollifier: SampledMollifier

    @property
    def t(self) -> float:
        return self.psi.t

    @property
    def grid(self) -> PeriodicGrid:
        return self.psi.grid

    @property
    def u(self) -> np.ndarray:
        return self.thetas + self.psi.psi[..., None, :]

    @property
    def n_components(self) -> int:
        return self.thetas.shape[-2]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.thetas.shape[:-2]

    def component(self, i: int) -> np.ndarray:
        return self.thetas[..., i, :] + self.psi.psi


def initial_ensemble(
    initials: np.ndarray, mollifier: SampledMollifier, realizations: Optional[int] = None
) -> BurgersEnsemble:
    """Ensemble at t = 0 with psi = 0, so theta_i(0) = u_i(0)."""
    grid = mollifier.grid
    initials = np.atleast_2d(np.asarray(initials, dtype=float))
    grid.check(initials, "initial data")
    if not np.all(np.isfinite(initials)):
        raise ConfigurationError("initial data must be finite", field="ensemble.initials")
    batch = () if realizations is None else (realizations,)
    thetas = np.broadcast_to(initials, (*batch, *initials.shape[-2:])).copy()
    return BurgersEnsemble(thetas=thetas, psi=LinearizedField.zero(grid, batch), mollifier=mollifier)


def courant_number(ens: BurgersEnsemble, dt: float) -> float:
    return float(dt * np.max(np.abs(ens.u)) / ens.grid.dx)


def advance(ens: BurgersEnsemble, dV: np.ndarray, cfg: SchemeConfig) -> BurgersEnsemble:
    """One step given the already smoothed increment dV.

    Transport and diffusion act first, with the current psi, then psi receives
    the noise, so the difference of two components never sees dV.
    """
    grid = ens.grid
    dt = cfg.dt
    rhs = ens.thetas
    if cfg.advection:
        courant = courant_number(ens, dt)
        if courant > cfg.cfl_safety:
            raise CFLViolationError(t=ens.t, courant=courant, limit=cfg.cfl_safety)
        rhs = rhs - dt * flux_difference(ens.u, cfg, grid.dx)
    if cfg.diffusion:
        rhs = _diffusion_solver(grid.n, dt, grid.dx).solve(rhs)
    return BurgersEnsemble(thetas=rhs, psi=psi_step(ens.psi, dV, dt), mollifier=ens.mollifier)


def step(ens: BurgersEnsemble, dW: np.ndarray, cfg: SchemeConfig) -> BurgersEnsemble:
    """Advance every component by one step of the shared white-noise increment dW."""
    return advance(ens, smooth_increment(dW, ens.mollifier), cfg)


def _check_noise(noise: NoisePath, ens: BurgersEnsemble, cfg: SchemeConfig) -> None:
    if not np.isclose(noise.dt, cfg.dt, rtol=1e-12, atol=0.0):
        raise ConfigurationError(f"noise dt {noise.dt} differs from scheme dt {cfg.dt}", field="scheme.dt")
    if noise.grid != ens.grid:
        raise GridMismatchError(f"noise grid {noise.grid} differs from ensemble grid {ens.grid}")
    expected = ens.batch_shape
    got = () if noise.realizations is None else (noise.realizations,)
    if got != expected:
        raise GridMismatchError(f"noise realizations {got} do not match ensemble batch {expected}")


def iterate(
    ens: BurgersEnsemble,
    noise: Optional[NoisePath],
    cfg: SchemeConfig,
    steps: Optional[int] = None,
) -> Iterator[Tuple[int, BurgersEnsemble, np.ndarray]]:
    """Yield ``(k, ensemble after step k, dV of step k)`` for k = 1..steps.

    With ``noise`` None the run is noise-free (dV = 0).
    """
    if noise is None:
        if steps is None:
            raise ConfigurationError("steps is required for a noise-free run", field="steps")
        increments = iter(())
    else:
        _check_noise(noise, ens, cfg)
        steps = noise.steps if steps is None else steps
        if steps > noise.steps:
            raise ConfigurationError(f"noise path has {noise.steps} steps, {steps} requested", field="steps")
        increments = noise.iter_increments()

    zero = np.zeros(ens.psi.psi.shape)
    for k in range(1, steps + 1):
        dV = zero if noise is None else smooth_increment(next(increments), ens.mollifier)
        ens = advance(ens, dV, cfg)
        yield k, ens, dV


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of one run plus everything needed to replay it bit-exactly."""

    initials: np.ndarray
    noise: Optional[NoisePath]
    cfg: SchemeConfig
    mollifier: SampledMollifier
    realizations: Optional[int]
    steps: int
    snapshot_steps: Tuple[int, ...]
    snapshots: Tuple[BurgersEnsemble, ...]
    noise_on: bool = True

    @property
    def grid(self) -> PeriodicGrid:
        return self.mollifier.grid

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.snapshot_steps, dtype=float) * self.cfg.dt

    def component(self, i: int) -> np.ndarray:
        """u_i at every snapshot, shape (S, *batch, n)."""
        return np.stack([snap.component(i) for snap in self.snapshots])

    def replay(self) -> Iterator[Tuple[int, BurgersEnsemble, np.ndarray]]:
        ens = initial_ensemble(self.initials, self.mollifier, self.realizations)
        yield 0, ens, np.zeros(ens.psi.psi.shape)
        yield from iterate(ens, self.noise, self.cfg, self.steps)

    def detached(self) -> "Trajectory":
        """Copy without the noise path (as read back from disk)."""
        return Trajectory(
            initials=self.initials,
            noise=None,
            cfg=self.cfg,
            mollifier=self.mollifier,
            realizations=self.realizations,
            steps=self.steps,
            snapshot_steps=self.snapshot_steps,
            snapshots=self.snapshots,
            noise_on=self.noise_on,
        )


def snapshot_steps_for(times: Sequence[float], dt: float) -> Tuple[int, ...]:
    """Snapshot times rounded down to step multiples."""
    return tuple(sorted({int(np.floor(t / dt + 1e-9)) for t in times}))


def run(
    initials: np.ndarray,
    noise: Optional[NoisePath],
    cfg: SchemeConfig,
    mollifier: SampledMollifier,
    snapshot_times: Sequence[float],
    t_end: Optional[float] = None,
) -> Trajectory:
    """Evolve the ensemble and keep snapshots at the requested times.

    Deterministic given (initials, noise, cfg). The batch size is taken from
    ``noise.realizations``.
    """
    realizations = None if noise is None else noise.realizations
    ens = initial_ensemble(initials, mollifier, realizations)
    wanted = snapshot_steps_for(snapshot_times, cfg.dt)
    if t_end is None:
        steps = noise.steps if noise is not None else (max(wanted) if wanted else 0)
    else:
        steps = int(np.floor(t_end / cfg.dt + 1e-9))
    if wanted and max(wanted) > steps:
        raise ConfigurationError(f"snapshot step {max(wanted)} beyond run length {steps}", field="snapshot_times")

    wanted_set = set(wanted)
    snapshots = []
    if 0 in wanted_set:
        snapshots.append(ens)
    try:
        for k, ens, _ in iterate(ens, noise, cfg, steps):
            if k in wanted_set:
                snapshots.append(ens)
    except CFLViolationError as e:
        logger.error(f"Run aborted at t={e.t:.6g}: {e}")
        raise

    logger.debug(f"Run finished: {steps} steps, {len(snapshots)} snapshots")
    return Trajectory(
        initials=np.atleast_2d(np.asarray(initials, dtype=float)),
        noise=noise,
        cfg=cfg,
        mollifier=mollifier,
        realizations=realizations,
        steps=steps,
        snapshot_steps=wanted,
        snapshots=tuple(snapshots),
        noise_on=noise is not None,
    )


@dataclass(frozen=True)
class RunSpec:
    """Grid, noise law, scheme and seed shared by the batched experiments."""

    mollifier: SampledMollifier
    scheme: SchemeConfig
    seed: int
    stream_id: int = 0
    noise_on: bool = True

    @property
    def grid(self) -> PeriodicGrid:
        return self.mollifier.grid

    def steps_for(self, t: float) -> int:
        return int(np.floor(t / self.scheme.dt + 1e-9))

    def noise(self, steps: int, realizations: Optional[int], stream_offset: int = 0) -> Optional[NoisePath]:
        if not self.noise_on:
            return None
        return sample_noise_path(
            self.seed,
            self.scheme.dt,
            steps,
            self.grid,
            rng_stream_id=self.stream_id + stream_offset,
            realizations=realizations,
            materialize=False,
        )

    def run(
        self,
        initials: np.ndarray,
        t_end: float,
        snapshot_times: Sequence[float],
        realizations: Optional[int] = None,
        stream_offset: int = 0,
    ) -> Trajectory:
        steps = self.steps_for(t_end)
        if not self.noise_on:
            traj = run(initials, None, self.scheme, self.mollifier, snapshot_times, t_end=t_end)
            if realizations is None:
                return traj
            # noise-free realizations are identical; keep the batch axis for uniform downstream code
            snaps = tuple(
                BurgersEnsemble(
                    thetas=np.broadcast_to(s.thetas, (realizations, *s.thetas.shape)).copy(),
                    psi=LinearizedField.zero(self.grid, (realizations,)),
                    mollifier=self.mollifier,
                )
                for s in traj.snapshots
            )
            return Trajectory(
                initials=traj.initials,
                noise=None,
                cfg=self.scheme,
                mollifier=self.mollifier,
                realizations=realizations,
                steps=traj.steps,
                snapshot_steps=traj.snapshot_steps,
                snapshots=snaps,
                noise_on=False,
            )
        noise = self.noise(steps, realizations, stream_offset)
        return run(initials, noise, self.scheme, self.mollifier, snapshot_times, t_end=t_end)


@dataclass(frozen=True, eq=False)
class DifferenceDiagnostics:
    """eta = u_i - u_j and its norms; arrays carry the batch axes of the ensemble."""

    eta: np.ndarray
    xi: np.ndarray
    l1: np.ndarray
    pos_part_l1: np.ndarray
    crossing_sum: np.ndarray


def crossing_sum(eta: np.ndarray, dx: float) -> np.ndarray:
    """Sum of |eta'| over the zeros of eta, by secant slopes across sign changes."""
    right = np.roll(eta, -1, axis=-1)
    strict = (eta * right) < 0
    total = np.sum(np.where(strict, np.abs(right - eta) / dx, 0.0), axis=-1)
    left = np.roll(eta, 1, axis=-1)
    touching = (eta == 0) & (left * right < 0)
    total = total + np.sum(np.where(touching, np.abs(right - left) / (2 * dx), 0.0), axis=-1)
    return total


def compare(ens: BurgersEnsemble, i: int, j: int) -> DifferenceDiagnostics:
    """Difference diagnostics of components i and j on the current state."""
    if i == j:
        raise ConfigurationError("components must differ", field="compare")
    for idx in (i, j):
        if not 0 <= idx < ens.n_components:
            raise ConfigurationError(f"component {idx} out of range", field="compare")
    dx = ens.grid.dx
    eta = ens.thetas[..., i, :] - ens.thetas[..., j, :]
    xi = ens.component(i) + ens.component(j)
    return DifferenceDiagnostics(
        eta=eta,
        xi=xi,
        l1=np.sum(np.abs(eta), axis=-1) * dx,
        pos_part_l1=np.sum(np.maximum(eta, 0.0), axis=-1) * dx,
        crossing_sum=crossing_sum(eta, dx),
    )


@dataclass(frozen=True, eq=False)
class DissipationReport:
    F: str
    c1: float
    times: np.ndarray
    slack: np.ndarray
    min_slack: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tolerance


_F_FUNCTIONS = {
    "abs": (np.abs, 2.0),
    "pos_part": (lambda x: np.maximum(x, 0.0), 1.0),
}


def f_dissipation_audit(
    trajectory: Trajectory, i: int, j: int, F: str = "abs", rel_tolerance: float = 1e-3
) -> DissipationReport:
    """Check int F(eta(t)) + (c1/4) int_0^t crossing_sum ds <= int F(eta(0)).

    The crossing term is integrated in time by the trapezoid rule over the
    snapshots, which must be at most 10 steps apart and start at t = 0.
    """
    if F not in _F_FUNCTIONS:
        raise ConfigurationError(f"unknown F {F!r}; use 'abs' or 'pos_part'", field="F")
    func, c1 = _F_FUNCTIONS[F]
    steps = np.asarray(trajectory.snapshot_steps)
    if len(steps) < 2 or steps[0] != 0 or np.max(np.diff(steps)) > 10:
        raise ConfigurationError(
            "snapshots must start at t=0 and be at most 10 steps apart", field="snapshot_times"
        )
    dx = trajectory.grid.dx
    mass = []
    crossings = []
    for snap in trajectory.snapshots:
        diag = compare(snap, i, j)
        mass.append(np.sum(func(diag.eta), axis=-1) * dx)
        crossings.append(diag.crossing_sum)
    mass = np.stack(mass)
    crossings = np.stack(crossings)
    times = trajectory.times

    increments = 0.5 * (crossings[1:] + crossings[:-1]) * np.diff(times).reshape(-1, *([1] * (crossings.ndim - 1)))
    integrated = np.concatenate([np.zeros_like(crossings[:1]), np.cumsum(increments, axis=0)])
    slack = mass[0] - mass - 0.25 * c1 * integrated

    initial_l1 = np.sum(np.abs(compare(trajectory.snapshots[0], i, j).eta), axis=-1) * dx
    tolerance = float(rel_tolerance * np.max(initial_l1))
    report = DissipationReport(
        F=F, c1=c1, times=times, slack=slack, min_slack=float(np.min(slack)), tolerance=tolerance
    )
    if not report.passed:
        logger.warning(f"F-dissipation audit ({F}) violated: min slack {report.min_slack:.3g}")
    return report
