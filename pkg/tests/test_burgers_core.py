"""Tests for burgers_core module."""
import pytest
import numpy as np
import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.burgers_core import (
    FluxKind,
    PeriodicTridiagonalSolver,
    RunSpec,
    SchemeConfig,
    advance,
    compare,
    courant_number,
    crossing_sum,
    engquist_osher_flux,
    f_dissipation_audit,
    initial_ensemble,
    iterate,
    lax_friedrichs_flux,
    run,
    snapshot_steps_for,
    step,
)
from src.errors import CFLViolationError, ConfigurationError, GridMismatchError
from src.grid_noise import PeriodicGrid, sample_noise_path


@pytest.fixture
def scheme():
    return SchemeConfig(dt=0.005)


@pytest.fixture
def pair(grid, smooth_field):
    """An ordered pair and an arbitrary third component."""
    square = np.sign(np.sin(2.0 * np.pi * (grid.x + 0.5 * grid.dx) / grid.length))
    return np.stack([smooth_field, smooth_field + 0.5, square])


class TestSchemeConfig:
    """Test cases for SchemeConfig."""

    def test_flux_from_string(self):
        """Test the flux is coerced to FluxKind."""
        assert SchemeConfig(dt=0.01, flux="lax_friedrichs").flux is FluxKind.LAX_FRIEDRICHS

    @pytest.mark.parametrize("kwargs", [{"dt": 0.0}, {"dt": 0.01, "cfl_safety": 0.0}, {"dt": 0.01, "cfl_safety": 1.5}])
    def test_invalid(self, kwargs):
        """Test invalid step sizes and safety factors."""
        with pytest.raises(ConfigurationError):
            SchemeConfig(**kwargs)


class TestFluxes:
    """Test cases for the numerical fluxes."""

    @pytest.mark.parametrize("v", [-1.5, 0.0, 0.7])
    def test_consistency(self, v):
        """Test F(v, v) = v^2 / 2."""
        a = np.array([v])
        assert engquist_osher_flux(a, a)[0] == pytest.approx(0.5 * v * v)
        assert lax_friedrichs_flux(a, a, 3.0)[0] == pytest.approx(0.5 * v * v)

    def test_engquist_osher_monotone(self):
        """Test the flux is nondecreasing in its left and nonincreasing in its right argument."""
        grid_vals = np.linspace(-2, 2, 41)
        left, right = np.meshgrid(grid_vals, grid_vals, indexing="ij")
        flux = engquist_osher_flux(left, right)
        assert np.all(np.diff(flux, axis=0) >= 0)
        assert np.all(np.diff(flux, axis=1) <= 0)


class TestPeriodicTridiagonalSolver:
    """Test cases for the cyclic implicit solve."""

    def _apply(self, x, r):
        return x - r * (np.roll(x, 1, axis=-1) - 2 * x + np.roll(x, -1, axis=-1))

    def test_solves_system(self):
        """Test (I - r D2) x reproduces the right-hand side."""
        rhs = np.random.default_rng(0).standard_normal(16)
        x = PeriodicTridiagonalSolver(16, 0.8).solve(rhs)
        assert np.allclose(self._apply(x, 0.8), rhs, atol=1e-12)

    def test_batched_and_conservative(self):
        """Test batched solves and conservation of sums."""
        rhs = np.random.default_rng(1).standard_normal((3, 2, 16))
        x = PeriodicTridiagonalSolver(16, 2.0).solve(rhs)
        assert x.shape == rhs.shape
        assert np.allclose(self._apply(x, 2.0), rhs, atol=1e-12)
        assert np.allclose(x.sum(axis=-1), rhs.sum(axis=-1), atol=1e-12)


class TestAdvance:
    """Test cases for the ensemble step."""

    def test_constant_is_steady_without_noise(self, mollifier, scheme):
        """Test a constant state does not move without forcing."""
        ens = initial_ensemble(np.full((1, 64), 0.3), mollifier)
        for _, ens, _ in iterate(ens, None, scheme, 20):
            pass
        assert np.allclose(ens.u, 0.3, atol=1e-14)

    def test_conservation_comparison_and_contraction(self, grid, mollifier, scheme, pair):
        """Test the exact invariants along a noisy run."""
        noise = sample_noise_path(2, scheme.dt, 40, grid, realizations=3)
        ens = initial_ensemble(pair, mollifier, 3)
        means = ens.u.mean(axis=-1)
        l1_prev = compare(ens, 0, 2).l1
        for _, ens, _ in iterate(ens, noise, scheme):
            assert np.all(compare(ens, 0, 1).eta <= 0)
            l1 = compare(ens, 0, 2).l1
            assert np.all(l1 <= l1_prev * (1 + 1e-12) + 1e-14)
            l1_prev = l1
        assert np.allclose(ens.u.mean(axis=-1), means, atol=1e-12)

    def test_lax_friedrichs_conserves(self, grid, mollifier, pair):
        """Test the alternative flux is also conservative."""
        cfg = SchemeConfig(dt=0.005, flux="lax_friedrichs")
        noise = sample_noise_path(2, cfg.dt, 10, grid)
        ens = initial_ensemble(pair, mollifier)
        means = ens.u.mean(axis=-1)
        for _, ens, _ in iterate(ens, noise, cfg):
            pass
        assert np.allclose(ens.u.mean(axis=-1), means, atol=1e-12)

    def test_courant_number(self, grid, mollifier):
        """Test the Courant number is dt * max|u| / dx."""
        ens = initial_ensemble(np.full((1, grid.n), -0.4), mollifier)
        assert courant_number(ens, 0.005) == pytest.approx(0.005 * 0.4 / grid.dx)

    def test_cfl_violation(self, mollifier):
        """Test a too-large Courant number aborts the step."""
        ens = initial_ensemble(np.full((1, 64), 100.0), mollifier)
        with pytest.raises(CFLViolationError, match="halve dt"):
            advance(ens, np.zeros(64), SchemeConfig(dt=0.01))

    def test_step_with_white_noise(self, grid, mollifier, scheme, pair):
        """Test step smooths the raw increment itself."""
        dW = sample_noise_path(5, scheme.dt, 1, grid).increments[0]
        ens = step(initial_ensemble(pair, mollifier), dW, scheme)
        assert ens.t == pytest.approx(scheme.dt)
        assert ens.thetas.shape == pair.shape

    def test_noise_dt_mismatch(self, grid, mollifier, scheme, pair):
        """Test noise drawn for another dt is refused."""
        noise = sample_noise_path(1, 0.01, 5, grid)
        with pytest.raises(ConfigurationError):
            list(iterate(initial_ensemble(pair, mollifier), noise, scheme))

    def test_noise_grid_mismatch(self, mollifier, scheme, pair):
        """Test noise on another grid is refused."""
        noise = sample_noise_path(1, scheme.dt, 5, PeriodicGrid(4.0, 64))
        with pytest.raises(GridMismatchError):
            list(iterate(initial_ensemble(pair, mollifier), noise, scheme))

    def test_noise_batch_mismatch(self, grid, mollifier, scheme, pair):
        """Test the realization count must match the ensemble."""
        noise = sample_noise_path(1, scheme.dt, 5, grid, realizations=2)
        with pytest.raises(GridMismatchError):
            list(iterate(initial_ensemble(pair, mollifier, 3), noise, scheme))

    def test_noise_free_needs_steps(self, mollifier, scheme, pair):
        """Test a noise-free iteration needs an explicit length."""
        with pytest.raises(ConfigurationError):
            list(iterate(initial_ensemble(pair, mollifier), None, scheme))


class TestRun:
    """Test cases for run, Trajectory and RunSpec."""

    def test_snapshot_steps(self):
        """Test snapshot times are floored onto steps."""
        assert snapshot_steps_for([0.0, 0.1, 0.1049, 0.25], 0.05) == (0, 2, 5)

    def test_snapshots_and_replay(self, grid, mollifier, scheme, pair):
        """Test snapshots land on the requested steps and replay is bit-exact."""
        noise = sample_noise_path(3, scheme.dt, 20, grid)
        traj = run(pair, noise, scheme, mollifier, [0.0, 0.05, 0.1])
        assert np.allclose(traj.times, [0.0, 0.05, 0.1])
        assert traj.component(0).shape == (3, grid.n)
        replayed = [ens for k, ens, _ in traj.replay() if k in traj.snapshot_steps]
        for snap, again in zip(traj.snapshots, replayed):
            assert np.array_equal(snap.thetas, again.thetas)

    def test_snapshot_beyond_end(self, grid, mollifier, scheme, pair):
        """Test snapshots past t_end are rejected."""
        noise = sample_noise_path(3, scheme.dt, 20, grid)
        with pytest.raises(ConfigurationError):
            run(pair, noise, scheme, mollifier, [0.2], t_end=0.05)

    def test_runspec_is_deterministic(self, mollifier, scheme, pair):
        """Test the same seed and stream give identical runs."""
        spec = RunSpec(mollifier=mollifier, scheme=scheme, seed=4, stream_id=1)
        a = spec.run(pair, 0.05, [0.05], realizations=2)
        b = spec.run(pair, 0.05, [0.05], realizations=2)
        c = spec.run(pair, 0.05, [0.05], realizations=2, stream_offset=1)
        assert np.array_equal(a.snapshots[-1].thetas, b.snapshots[-1].thetas)
        assert not np.array_equal(a.snapshots[-1].psi.psi, c.snapshots[-1].psi.psi)

    def test_runspec_noise_off_keeps_batch(self, mollifier, scheme, pair):
        """Test noise-free batched runs keep a realization axis."""
        spec = RunSpec(mollifier=mollifier, scheme=scheme, seed=4, noise_on=False)
        traj = spec.run(pair, 0.05, [0.0, 0.05], realizations=3)
        assert traj.snapshots[-1].thetas.shape == (3, 3, 64)
        assert np.array_equal(traj.snapshots[-1].thetas[0], traj.snapshots[-1].thetas[2])
        assert not traj.noise_on


class TestDiagnostics:
    """Test cases for compare, crossing_sum and f_dissipation_audit."""

    def test_crossing_sum_of_sine(self, grid):
        """Test |eta'| summed over the two zeros of a sine."""
        k = 2.0 * np.pi / grid.length
        assert crossing_sum(np.sin(k * grid.x), grid.dx) == pytest.approx(2 * k, rel=1e-2)

    def test_crossing_sum_no_zero(self, grid):
        """Test a positive field has no crossings."""
        assert crossing_sum(np.ones(grid.n), grid.dx) == 0.0

    def test_compare_rejects_same_component(self, mollifier, pair):
        """Test components must differ."""
        with pytest.raises(ConfigurationError):
            compare(initial_ensemble(pair, mollifier), 1, 1)

    def test_compare_norms(self, mollifier, pair, grid):
        """Test the ordered pair has no positive part."""
        diag = compare(initial_ensemble(pair, mollifier), 0, 1)
        assert diag.l1 == pytest.approx(0.5 * grid.length)
        assert diag.pos_part_l1 == 0.0

    @pytest.mark.parametrize("F", ["abs", "pos_part"])
    def test_f_dissipation_noise_free(self, grid, mollifier, scheme, F):
        """Test the dissipation inequality on a single-crossing pair."""
        k = 2.0 * np.pi / grid.length
        initials = np.stack([np.sin(k * grid.x), np.zeros(grid.n)])
        steps = 40
        traj = run(initials, None, scheme, mollifier, [s * scheme.dt for s in range(steps + 1)], t_end=steps * scheme.dt)
        report = f_dissipation_audit(traj, 0, 1, F)
        assert report.passed
        assert report.c1 == (2.0 if F == "abs" else 1.0)

    def test_f_dissipation_needs_dense_snapshots(self, grid, mollifier, scheme, pair):
        """Test sparse snapshots are refused."""
        traj = run(pair, None, scheme, mollifier, [0.0, 0.2], t_end=0.2)
        with pytest.raises(ConfigurationError):
            f_dissipation_audit(traj, 0, 2)

    def test_f_dissipation_unknown_function(self, grid, mollifier, scheme, pair):
        """Test only abs and pos_part are accepted."""
        traj = run(pair, None, scheme, mollifier, [0.0, 0.005], t_end=0.005)
        with pytest.raises(ConfigurationError):
            f_dissipation_audit(traj, 0, 2, "square")
