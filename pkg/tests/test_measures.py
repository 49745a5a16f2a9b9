"""Tests for measures module."""
import pytest
import numpy as np
import pandas as pd
import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.burgers_core import RunSpec, SchemeConfig
from src.errors import ConfigurationError, DomainTooSmallError, InsufficientRealizationsError
from src.grid_noise import build_mollifier
from src.measures import (
    Assertion,
    BasinDecomposition,
    MeasureEstimate,
    constant_decomposition,
    coupled_wasserstein_bound,
    default_basin_decomposition,
    equilibration_check,
    kb_average,
    mean_se,
    ordering_audit,
    sandwich,
    shear_audit,
    stability_experiment,
    stationary_moment_audit,
    uniqueness_proxy,
    variance_minimality_audit,
)


@pytest.fixture
def spec(mollifier):
    return RunSpec(mollifier=mollifier, scheme=SchemeConfig(dt=0.005), seed=21)


def _estimate(grid, rows):
    rng = np.random.default_rng(0)
    return MeasureEstimate(
        snapshots=rng.standard_normal((rows, grid.n)),
        times=np.ones(rows),
        cells=np.zeros(rows, dtype=int),
        grid=grid,
        meta={"t0": 0.0, "T": 1.0},
    )


class TestAssertion:
    """Test cases for Assertion and mean_se."""

    def test_to_dict(self):
        """Test numpy scalars are converted to plain JSON types."""
        record = Assertion("x", np.float64(1.5), np.float64(0.1), 2, np.bool_(True), note="n").to_dict()
        assert record == {"name": "x", "value": 1.5, "se": 0.1, "threshold": 2.0, "passed": True, "note": "n"}
        assert type(record["passed"]) is bool

    def test_mean_se_single_sample(self):
        """Test one sample gives a zero standard error."""
        mean, se = mean_se(np.array([[3.0]]))
        assert mean[0] == 3.0
        assert se[0] == 0.0

    def test_mean_se(self):
        """Test the standard error of the mean."""
        mean, se = mean_se(np.array([1.0, 2.0, 3.0, 4.0]))
        assert mean == pytest.approx(2.5)
        assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)


class TestKbAverage:
    """Test cases for Krylov-Bogoliubov sampling."""

    def test_uniform_times(self, spec, grid):
        """Test one snapshot per realization at a time inside (t0, T]."""
        measure = kb_average(spec, np.zeros(grid.n), 0.0, 0.05, 6)
        assert measure.size == 6
        assert np.all((measure.times > 0) & (measure.times <= 0.05 + 1e-12))
        assert measure.at_points().shape == (6,)
        assert np.all((measure.cells >= 0) & (measure.cells < grid.n))

    def test_spaced_times_with_heights(self, spec, grid):
        """Test a snapshot grid and the matching height increments."""
        measure = kb_average(spec, np.zeros(grid.n), 0.0, 0.05, 6, spacing=0.01, track_heights=True)
        assert measure.size == 30
        assert measure.height_increments.shape == (30,)
        assert measure.gradients_at_points().shape == (30,)
        assert measure.meta["spacing"] == 0.01

    def test_deterministic(self, spec, grid):
        """Test the same stream reproduces the sample."""
        a = kb_average(spec, np.zeros(grid.n), 0.0, 0.05, 4)
        b = kb_average(spec, np.zeros(grid.n), 0.0, 0.05, 4)
        assert np.array_equal(a.snapshots, b.snapshots)
        assert np.array_equal(a.cells, b.cells)

    @pytest.mark.parametrize("t0,T", [(0.05, 0.05), (-0.1, 0.05)])
    def test_invalid_window(self, spec, grid, t0, T):
        """Test the averaging window must be nonempty."""
        with pytest.raises(ConfigurationError):
            kb_average(spec, np.zeros(grid.n), t0, T, 4)


class TestCouplingAudits:
    """Test cases for coupling distances, ordering, shear and uniqueness."""

    def test_wasserstein_bound_never_increases(self, spec, grid, smooth_field):
        """Test the shared-noise distance is nonincreasing per realization."""
        traj = spec.run(np.stack([smooth_field, np.zeros(grid.n)]), 0.05, [0.0, 0.025, 0.05], realizations=3)
        frame = coupled_wasserstein_bound(traj, 0, 1)
        assert list(frame.columns) == ["t", "distance", "se"]
        assert frame.attrs["max_increase"] <= 1e-10
        assert frame["distance"].iloc[-1] <= frame["distance"].iloc[0]

    def test_ordering_audit(self, spec, smooth_field):
        """Test an ordered pair stays ordered in every realization."""
        traj = spec.run(np.stack([smooth_field + 0.5, smooth_field]), 0.05, [0.05], realizations=3)
        report = ordering_audit(traj, 0, 1)
        assert report.fraction == 1.0
        assert report.realizations == 3
        assert report.min_gap > 0

    def test_uniqueness_proxy(self, spec, grid, smooth_field):
        """Test the distance ratio never exceeds one."""
        traj = spec.run(np.stack([np.zeros(grid.n), smooth_field]), 0.05, [0.0, 0.05], realizations=2)
        result = uniqueness_proxy(traj, 1.0)
        assert result.name == "uniqueness_proxy"
        assert result.passed
        assert result.value <= 1.0

    def test_shear_without_shift(self, spec, grid):
        """Test c = 0 compares a run with itself."""
        report = shear_audit(spec, np.zeros(grid.n), 0.0, 0.05, 3, [0.025, 0.05])
        assert report.passed
        assert len(report.table) == 2 * 5
        assert np.all(np.abs(report.table["difference"]) < 1e-10)

    def test_shear_with_shift(self, spec, grid):
        """Test u(t, x + t) - 1 started from v + 1 matches u started from v in law."""
        report = shear_audit(spec, np.zeros(grid.n), 1.0, 0.1, 50, [0.05, 0.1])
        assert report.passed
        means = report.table[report.table["statistic"] == "mean"]
        assert np.all(np.abs(means["difference"]) < 1e-12)

    def test_ordering_audit_crossing_pair(self, spec, grid):
        """Test a pair that crosses is never counted as ordered."""
        crossing = 1.0 + 2.0 * np.sin(2.0 * np.pi * grid.x / grid.length)
        traj = spec.run(np.stack([crossing, np.zeros(grid.n)]), 0.05, [0.05], realizations=3)
        report = ordering_audit(traj, 0, 1)
        assert report.fraction == 0.0

    def test_ordering_audit_identical_pair(self, spec, smooth_field):
        """Test identical data count as ordered with zero gap."""
        traj = spec.run(np.stack([smooth_field, smooth_field]), 0.05, [0.05], realizations=2)
        report = ordering_audit(traj, 0, 1)
        assert report.fraction == 1.0
        assert report.min_gap == 0.0


class TestMomentAudits:
    """Test cases for the stationary moment checks."""

    def test_noise_off_is_vacuous(self, grid):
        """Test a null mollifier gives one informational pass."""
        result = stationary_moment_audit(_estimate(grid, 5), build_mollifier("none", 0.0, grid))
        assert len(result) == 1
        assert result[0].passed
        assert result[0].note == "vacuous"

    def test_too_few_snapshots(self, grid, mollifier):
        """Test the snapshot minimum."""
        with pytest.raises(InsufficientRealizationsError):
            stationary_moment_audit(_estimate(grid, 10), mollifier)

    def test_assertion_names(self, spec, grid, mollifier):
        """Test the audit reports every check, including the height balance."""
        measure = kb_average(spec, np.zeros(grid.n), 0.0, 0.05, 6, spacing=0.01, track_heights=True)
        names = [a.name for a in stationary_moment_audit(measure, mollifier)]
        assert names == ["variance_bound", "gradient_identity", "height_balance", "weighted_h1_norm"]

    def test_variance_minimality(self, grid):
        """Test a constant sample is never more variable than a noisy one."""
        flat = _estimate(grid, 40)
        flat = MeasureEstimate(
            snapshots=np.zeros_like(flat.snapshots), times=flat.times, cells=flat.cells, grid=grid
        )
        assert variance_minimality_audit(flat, _estimate(grid, 40)).passed

    def test_variance_minimality_needs_snapshots(self, grid):
        """Test the snapshot minimum applies to both samples."""
        with pytest.raises(InsufficientRealizationsError):
            variance_minimality_audit(_estimate(grid, 40), _estimate(grid, 5))


class TestBasin:
    """Test cases for the basin decomposition and sandwich."""

    def test_default_parts(self, grid):
        """Test the localized parts have zero mean."""
        decomp = default_basin_decomposition(grid, a=0.2)
        assert np.mean(decomp.v_int) == pytest.approx(0.0, abs=1e-12)
        assert np.mean(decomp.v_z) == pytest.approx(0.0, abs=1e-12)
        assert np.mean(decomp.initial_field) == pytest.approx(0.2)
        assert decomp.period_length == pytest.approx(2.0)

    def test_constant_decomposition(self, grid):
        """Test the constant state has trivial parts."""
        decomp = constant_decomposition(0.4, grid)
        assert np.allclose(decomp.initial_field, 0.4)

    @pytest.mark.parametrize("case", ["periods", "not_periodic", "mean", "support"])
    def test_invalid(self, grid, case):
        """Test the decomposition checks."""
        zero = np.zeros(grid.n)
        kwargs = {"v_per": zero, "v_int": zero, "v_z": zero, "a": 0.0, "periods": 4, "grid": grid}
        if case == "periods":
            kwargs["periods"] = 3
        elif case == "not_periodic":
            kwargs["v_per"] = np.sin(2.0 * np.pi * grid.x / grid.length)
        elif case == "mean":
            kwargs["a"] = 1.0
        else:
            kwargs["v_int"] = np.ones(grid.n)
        with pytest.raises(ConfigurationError):
            BasinDecomposition(**kwargs)

    def test_sandwich_orders_and_bounds_means(self, grid):
        """Test v_- <= v <= v_+ with means within eps of a."""
        decomp = default_basin_decomposition(grid, a=0.1)
        bounds = sandwich(decomp, 1.0)
        assert np.all(bounds.v_minus <= bounds.v)
        assert np.all(bounds.v <= bounds.v_plus)
        assert abs(np.mean(bounds.v_plus) - 0.1) < 1.0
        assert abs(np.mean(bounds.v_minus) - 0.1) < 1.0
        assert decomp.periods % bounds.K == 0

    def test_sandwich_domain_too_small(self, grid):
        """Test a tiny eps cannot be met on a small torus."""
        with pytest.raises(DomainTooSmallError):
            sandwich(default_basin_decomposition(grid), 1e-6)

    def test_sandwich_invalid_eps(self, grid):
        """Test eps must be positive."""
        with pytest.raises(ConfigurationError):
            sandwich(default_basin_decomposition(grid), 0.0)

    def test_stability_experiment(self, spec, grid):
        """Test the sandwich holds and the ceiling is conserved along a short run."""
        reports = stability_experiment(default_basin_decomposition(grid), 1.0, spec, 0.05, 2, [0.025, 0.05])
        assert len(reports) == 1
        report = reports[0]
        assert report.eps == 1.0
        assert report.sandwich_violations == 0
        assert list(report.table["t"]) == pytest.approx([0.0, 0.025, 0.05])
        assert np.allclose(report.table["ceiling"], report.ceiling_expected, rtol=1e-9)
        assert report.ratio >= 0

    def test_stability_schedule(self, spec, grid):
        """Test one shared run serves every eps and the distance to u_a never grows."""
        reports = stability_experiment(default_basin_decomposition(grid), [1.0, 0.5], spec, 0.1, 3, [0.05, 0.1])
        assert [r.eps for r in reports] == [1.0, 0.5]
        assert np.array_equal(reports[0].table["distance"], reports[1].table["distance"])
        for report in reports:
            assert report.sandwich_violations == 0
            assert np.allclose(report.table["ceiling"], report.ceiling_expected, rtol=1e-9)
        distance = reports[0].table["distance"].to_numpy()
        assert np.all(np.diff(distance) <= 1e-10 * max(1.0, distance[0]))

    def test_stability_empty_schedule(self, spec, grid):
        """Test an empty eps schedule is refused."""
        with pytest.raises(ConfigurationError):
            stability_experiment(default_basin_decomposition(grid), [], spec, 0.05, 2, [0.05])


class TestEquilibrationCheck:
    """Test cases for equilibration_check."""

    def test_linear_growth(self):
        """Test a constant drift counts as equilibrated."""
        t = np.linspace(0.0, 1.0, 41)
        result = equilibration_check(pd.DataFrame({"t": t, "mean_h": 2.0 * t}))
        assert result.value == pytest.approx(0.0, abs=1e-12)
        assert result.passed

    def test_accelerating_growth(self):
        """Test a drift still changing fails."""
        t = np.linspace(0.0, 1.0, 41)
        result = equilibration_check(pd.DataFrame({"t": t, "mean_h": t**2}))
        assert not result.passed

    def test_flat_curve(self):
        """Test a flat curve has zero change."""
        t = np.linspace(0.0, 1.0, 5)
        assert equilibration_check(pd.DataFrame({"t": t, "mean_h": np.zeros(5)})).value == 0.0
