"""Stochastic heat equation, KPZ heights built from Burgers runs, and the Cole-Hopf ladder.

On the torus a field with spatial mean a cannot be written as the slope of a
periodic height, so heights are carried as h = a*x + h_per. The SHE field keeps
only exp(-h_per); a is tracked alongside it and reinstated in u = a - phi'/phi.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .burgers_core import BurgersEnsemble, SchemeConfig, Trajectory, iterate, run, snapshot_steps_for
from .errors import ConfigurationError, NonPositiveFieldError
from .grid_noise import (
    NoisePath,
    PeriodicGrid,
    SampledMollifier,
    build_mollifier,
    coarsen_noise_path,
    omega_step,
    sample_noise_path,
    smooth_increment,
)
from .spectral_ops import antiderivative, ddx_array, heat_array, shift_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SheState:
    """phi(t) = exp(log_scale) * phi, with ``mean`` the shear a of the matching Burgers field."""

    phi: np.ndarray
    t: float
    grid: PeriodicGrid
    mean: float = 0.0
    log_scale: np.ndarray = 0.0

    @property
    def height(self) -> np.ndarray:
        """Periodic part of h = -log phi (the a*x part excluded)."""
        return -np.log(self.phi) - np.asarray(self.log_scale)[..., None]

    @property
    def values(self) -> np.ndarray:
        return self.phi * np.exp(np.asarray(self.log_scale))[..., None]

    def slope(self) -> np.ndarray:
        """u recovered through the transform: a - phi'/phi."""
        return self.mean - ddx_array(self.phi, self.grid) / self.phi


def she_initial_state(u0: np.ndarray, grid: PeriodicGrid, zeta: Optional[np.ndarray] = None) -> SheState:
    """phi(0) = exp(-h(0)) for h(0) the zeta-normalised antiderivative of u(0), mean excluded."""
    grid.check(u0, "u0")
    a = float(np.mean(u0))
    h_per = antiderivative(np.asarray(u0, dtype=float) - a, grid, zeta)
    shift = float(np.min(h_per))
    phi = np.exp(-(h_per - shift))
    return SheState(phi=phi, t=0.0, grid=grid, mean=a, log_scale=np.asarray(-shift))


def she_step(s: SheState, dV: np.ndarray, dt: float, mollifier: SampledMollifier) -> SheState:
    """One Feynman-Kac splitting step of d phi = 1/2 phi'' dt - a phi' dt + 1/2 a^2 phi dt - phi dV.

    The multiplicative factor exp(-dV - dt/2 * rho*rho(0)) has unit mean for
    Gaussian dV, which is the Ito convention.
    """
    grid = s.grid
    grid.check(dV, "dV")
    if s.phi.shape[:-1] != dV.shape[:-1]:
        raise ConfigurationError(f"dV batch {dV.shape[:-1]} does not match phi batch {s.phi.shape[:-1]}", field="dV")

    phi = s.phi * np.exp(-dV - 0.5 * dt * mollifier.selfconv[0])
    phi = heat_array(phi, grid, dt)
    log_scale = np.asarray(s.log_scale, dtype=float)
    if s.mean != 0.0:
        phi = shift_array(phi, grid, s.mean * dt)
        log_scale = log_scale + 0.5 * s.mean**2 * dt

    scale = np.mean(phi, axis=-1)
    if not (np.all(np.isfinite(phi)) and np.all(phi > 0)):
        raise NonPositiveFieldError(f"phi lost positivity or finiteness at t={s.t + dt:.6g}")
    return SheState(
        phi=phi / scale[..., None],
        t=s.t + dt,
        grid=grid,
        mean=s.mean,
        log_scale=log_scale + np.log(scale),
    )


def evolve_she(
    initial: SheState,
    noise: Optional[NoisePath],
    dt: float,
    mollifier: SampledMollifier,
    snapshot_times: Sequence[float],
    steps: Optional[int] = None,
) -> List[SheState]:
    """Run the SHE and return the states at the requested times (rounded down to steps).

    The increments dV are regenerated from ``noise`` exactly as burgers_core does,
    so a Burgers run and this run see the same forcing.
    """
    wanted = set(snapshot_steps_for(snapshot_times, dt))
    if steps is None:
        if noise is None:
            steps = max(wanted) if wanted else 0
        else:
            steps = noise.steps
    increments = noise.iter_increments() if noise is not None else None
    state = initial
    out = [state] if 0 in wanted else []
    zero = np.zeros(initial.phi.shape)
    for k in range(1, steps + 1):
        dV = zero if increments is None else smooth_increment(next(increments), mollifier)
        state = she_step(state, dV, dt, mollifier)
        if k in wanted:
            out.append(state)
    return out


@dataclass(frozen=True, eq=False)
class KpzState:
    h: np.ndarray
    t: float
    zeta: np.ndarray


class HeightTracker:
    """Step-wise assembly of the KPZ height from a Burgers ensemble.

    h(t,x) = int zeta(y) int_y^x theta(t,z) dz dy
             - 1/2 int_0^t int [theta zeta' + (theta + psi)^2 zeta] dy ds
             + omega(t,x) + t/2 |rho|^2

    with omega the stochastic convolution of dV. The time integral uses the
    trapezoid rule over steps.
    """

    def __init__(self, ens: BurgersEnsemble, zeta: np.ndarray, ito_correction: bool = True):
        grid = ens.grid
        grid.check(zeta, "zeta")
        self.grid = grid
        self.zeta = np.asarray(zeta, dtype=float)
        self.zeta_prime = ddx_array(self.zeta, grid)
        self.ito_correction = ito_correction
        self.l2sq = ens.mollifier.l2sq
        self.omega = np.zeros(ens.psi.psi.shape)
        self.time_integral = np.zeros(ens.thetas.shape[:-1])
        self.t = ens.t
        self._last = self._integrand(ens)

    def _integrand(self, ens: BurgersEnsemble) -> np.ndarray:
        return self.grid.dx * np.sum(ens.thetas * self.zeta_prime + ens.u**2 * self.zeta, axis=-1)

    def update(self, ens: BurgersEnsemble, dV: np.ndarray, dt: float) -> None:
        current = self._integrand(ens)
        self.time_integral += 0.5 * dt * (self._last + current)
        self._last = current
        self.omega = omega_step(self.omega, dV, dt, self.grid)
        self.t = ens.t

    def heights(self, ens: BurgersEnsemble) -> np.ndarray:
        """h for every component, shape (*batch, N, n)."""
        h = antiderivative(ens.thetas, self.grid, self.zeta)
        h = h - 0.5 * self.time_integral[..., None] + self.omega[..., None, :]
        if self.ito_correction:
            h = h + 0.5 * self.t * self.l2sq
        return h


def default_zeta(grid: PeriodicGrid) -> np.ndarray:
    """Gaussian normalisation kernel of width 4*dx at x = 0, unit integral."""
    return build_mollifier("gaussian", 4.0 * grid.dx, grid).values


def kpz_height_from_burgers(
    trajectory: Trajectory,
    zeta: Optional[np.ndarray] = None,
    component: int = 0,
    ito_correction: bool = True,
) -> List[KpzState]:
    """Replay a trajectory and assemble h at each of its snapshot times."""
    if trajectory.noise_on and trajectory.noise is None:
        raise ConfigurationError("trajectory has no noise path; heights need dV", field="noise")
    zeta = default_zeta(trajectory.grid) if zeta is None else np.asarray(zeta, dtype=float)
    if np.any(zeta < 0):
        raise ConfigurationError("zeta must be nonnegative", field="zeta")

    wanted = set(trajectory.snapshot_steps)
    states = []
    tracker = None
    for k, ens, dV in trajectory.replay():
        if tracker is None:
            tracker = HeightTracker(ens, zeta, ito_correction)
        else:
            tracker.update(ens, dV, trajectory.cfg.dt)
        if k in wanted:
            h = tracker.heights(ens)[..., component, :]
            states.append(KpzState(h=h, t=ens.t, zeta=zeta))
    return states


@dataclass(frozen=True, eq=False)
class HeightSamples:
    """Per-realization spatial means of h and u^2 at each snapshot, shape (S, R)."""

    times: np.ndarray
    mean_h: np.ndarray
    mean_u2: np.ndarray
    var_u: np.ndarray


def height_samples(
    trajectory: Trajectory, zeta: Optional[np.ndarray] = None, component: int = 0
) -> HeightSamples:
    if trajectory.realizations is None or trajectory.realizations < 2:
        raise ConfigurationError("height statistics need a batched trajectory", field="statistics.realizations")
    states = kpz_height_from_burgers(trajectory, zeta, component)
    u = trajectory.component(component)
    centred = u - np.mean(u, axis=-1, keepdims=True)
    return HeightSamples(
        times=np.array([s.t for s in states]),
        mean_h=np.stack([np.mean(s.h, axis=-1) for s in states]),
        mean_u2=np.mean(u**2, axis=-1),
        var_u=np.mean(centred**2, axis=-1),
    )


def _mean_se(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    count = samples.shape[-1]
    return samples.mean(axis=-1), samples.std(axis=-1, ddof=1) / np.sqrt(count)


def height_curve(samples: HeightSamples) -> pd.DataFrame:
    """E h(t, x0) and E (u - a)^2 with standard errors; x0 averaged over the torus."""
    mean_h, se_h = _mean_se(samples.mean_h)
    var_u, se_var = _mean_se(samples.var_u)
    mean_u2, se_u2 = _mean_se(samples.mean_u2)
    return pd.DataFrame(
        {
            "t": samples.times,
            "mean_h": mean_h,
            "se_h": se_h,
            "var_u": var_u,
            "se": se_var,
            "mean_u2": mean_u2,
            "se_u2": se_u2,
        }
    )


def ekpz_balance(samples: HeightSamples, mollifier: SampledMollifier) -> pd.DataFrame:
    """Finite-difference drift of E h against |rho|^2/2 - E u^2/2 on each snapshot interval.

    Differences are taken per realization before averaging, so the SE reflects
    the correlation between neighbouring snapshots.
    """
    dt = np.diff(samples.times)[:, None]
    drift = np.diff(samples.mean_h, axis=0) / dt
    predicted = 0.5 * mollifier.l2sq - 0.25 * (samples.mean_u2[1:] + samples.mean_u2[:-1])
    gap, se = _mean_se(drift - predicted)
    return pd.DataFrame(
        {
            "t": 0.5 * (samples.times[1:] + samples.times[:-1]),
            "drift": drift.mean(axis=-1),
            "predicted": predicted.mean(axis=-1),
            "gap": gap,
            "se": se,
        }
    )


@dataclass(frozen=True, eq=False)
class LadderReport:
    times: np.ndarray
    mismatch: np.ndarray

    @property
    def sup_mismatch(self) -> float:
        return float(np.max(self.mismatch)) if len(self.mismatch) else 0.0


def ladder_consistency(u_snapshots: Sequence[np.ndarray], phi_states: Sequence[SheState]) -> LadderReport:
    """Relative L1 mismatch |u - (a - phi'/phi)| / |u| at each snapshot.

    Where |u| vanishes in L1 the absolute mismatch is reported.
    """
    if len(u_snapshots) != len(phi_states):
        raise ConfigurationError("u and phi snapshot counts differ", field="snapshots")
    mismatch = []
    for u, state in zip(u_snapshots, phi_states):
        if not (np.all(np.isfinite(state.phi)) and np.all(state.phi > 0)):
            raise NonPositiveFieldError(f"phi not strictly positive at t={state.t:.6g}")
        dx = state.grid.dx
        diff = np.sum(np.abs(u - state.slope()), axis=-1) * dx
        norm = np.sum(np.abs(u), axis=-1) * dx
        rel = np.where(norm > 0, diff / np.where(norm > 0, norm, 1.0), diff)
        mismatch.append(float(np.max(rel)))
    return LadderReport(times=np.array([s.t for s in phi_states]), mismatch=np.array(mismatch))


def run_ladder(
    u0: np.ndarray,
    noise: Optional[NoisePath],
    cfg: SchemeConfig,
    mollifier: SampledMollifier,
    snapshot_times: Sequence[float],
    t_end: float,
    zeta: Optional[np.ndarray] = None,
) -> LadderReport:
    """Solve Burgers and the SHE on the same noise and compare through the transform."""
    grid = mollifier.grid
    traj = run(u0[None, :], noise, cfg, mollifier, snapshot_times, t_end=t_end)
    realizations = None if noise is None else noise.realizations
    initial = she_initial_state(u0, grid, zeta)
    if realizations is not None:
        initial = SheState(
            phi=np.broadcast_to(initial.phi, (realizations, grid.n)).copy(),
            t=0.0,
            grid=grid,
            mean=initial.mean,
            log_scale=np.full(realizations, float(initial.log_scale)),
        )
    states = evolve_she(initial, noise, cfg.dt, mollifier, snapshot_times, steps=traj.steps)
    u = [snap.component(0) for snap in traj.snapshots]
    return ladder_consistency(u, states)


@dataclass(frozen=True, eq=False)
class RefinementStudy:
    coarse: float
    fine: float

    @property
    def ratio(self) -> float:
        return self.coarse / self.fine if self.fine > 0 else float("inf")


def ladder_refinement_study(
    u0_fn: Callable[[np.ndarray], np.ndarray],
    length: float,
    n: int,
    dt: float,
    t_end: float,
    mollifier_kind: str = "gaussian",
    mollifier_width: float = 0.5,
    seed: Optional[int] = None,
    realizations: Optional[int] = None,
    cfl_safety: float = 0.9,
    stream_id: int = 0,
) -> RefinementStudy:
    """Ladder mismatch at (n, dt) and (2n, dt/2); the ratio should be near 2.

    ``u0_fn`` maps grid positions to initial data. Without ``seed`` the runs are
    noise-free. With it, the fine path is sampled once and the coarse level sees
    the same realization through ``coarsen_noise_path``.
    """
    coarse_steps = int(np.floor(t_end / dt + 1e-9))
    fine_noise = None
    if seed is not None:
        fine_grid = PeriodicGrid(length, 2 * n)
        fine_noise = sample_noise_path(seed, dt / 2, 2 * coarse_steps, fine_grid, stream_id, realizations)
    paths = {1: None, 2: None} if fine_noise is None else {1: coarsen_noise_path(fine_noise), 2: fine_noise}

    mismatches = []
    for level in (1, 2):
        grid = PeriodicGrid(length, n * level)
        step_dt = dt / level
        mollifier = build_mollifier(mollifier_kind, mollifier_width, grid)
        cfg = SchemeConfig(dt=step_dt, cfl_safety=cfl_safety)
        noise = paths[level]
        report = run_ladder(u0_fn(grid.x), noise, cfg, mollifier, [t_end], t_end)
        mismatches.append(report.sup_mismatch)
        logger.info(f"Ladder mismatch at n={grid.n}, dt={step_dt:g}: {report.sup_mismatch:.3e}")
    study = RefinementStudy(coarse=mismatches[0], fine=mismatches[1])
    if study.ratio < 1.0:
        logger.warning(f"Ladder mismatch did not improve under refinement (ratio {study.ratio:.2f})")
    return study
