"""Experiment drivers behind the CLI subcommands.

Each suite writes a manifest into its output directory first, then its curves
and a JSON report, and finally marks the manifest complete. Realizations are
split into batches on independent noise streams; batches may run in threads
without changing any number.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .burgers_core import compare, f_dissipation_audit, initial_ensemble, iterate
from .colehopf import HeightSamples, ekpz_balance, height_curve, height_samples, ladder_refinement_study
from .experiment_config import MIN_COVARIANCE_REALIZATIONS, ExperimentConfig, InitialCondition
from .grid_noise import LinearizedField, psi_stationary_covariance, psi_step, sample_noise_path, smooth_increment, stream_generator
from .measures import (
    Y_G,
    Assertion,
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
from .persistence import read_manifest, run_manifest, save_trajectory, write_curve, write_manifest, write_noise_path, write_report
from .polymer import PolymerConfig, estimate_gamma, integrated_prime
from .spectral_ops import ddx_array, weighted_l1_array

logger = logging.getLogger(__name__)

# Disjoint stream ranges per suite; batch b of a suite uses base + b.
STREAM_BASES = {
    "simulate": 0,
    "covariance": 100_000,
    "structure": 200_000,
    "moments": 300_000,
    "gamma": 400_000,
    "stability": 500_000,
}

SUITE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "covariance": {"times": [0.25, 1.0, 4.0], "realizations": 10_000},
    "structure": {
        "paths": 100,
        "t_end": 1.0,
        "ordered_offset": 0.5,
        "dissipation_runs": 20,
        "dissipation_t_end": 0.5,
        "dissipation_every": 5,
        "sandwich_eps": 0.5,
        "sandwich_realizations": 10,
    },
    "moments": {
        "t_end": 10.0,
        "shear_c": [-1.0, 1.0],
        "shear_t_end": 5.0,
        "shear_realizations": 200,
    },
    "gamma": {
        "paths": 200,
        "dt": 0.01,
        "t_max": 2.0,
        "record_every": 10,
        "check_times": [0.5, 1.0, 2.0],
        "resample_threshold": 0.5,
        "ladder": {"n": 256, "dt": 2e-4, "t_end": 0.5, "realizations": 4},
    },
    "stability": {
        "eps_schedule": [1.0, 0.5],
        "t_end": 50.0,
        "periods": 4,
        "wasserstein_t_end": 50.0,
        "ordering_means": [1.0, 0.0],
        "ordering_amplitude": 1.0,
        "ordering_burn_in": 50.0,
        "ordering_realizations": 500,
        "uniqueness_t_end": 50.0,
    },
}


@dataclass
class SuiteResult:
    suite: str
    out_dir: Path
    assertions: List[Assertion] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    @property
    def failures(self) -> List[Assertion]:
        return [a for a in self.assertions if not a.passed]


def suite_params(cfg: ExperimentConfig, suite: str) -> Dict[str, Any]:
    params = dict(SUITE_DEFAULTS.get(suite, {}))
    params.update(cfg.params_for(suite))
    return params


def batches(total: int, size: int) -> List[tuple]:
    out = []
    start = 0
    index = 0
    while start < total:
        count = min(size, total - start)
        out.append((index, count))
        start += count
        index += 1
    return out


def map_batches(fn: Callable[[int, int], Any], total: int, size: int, threads: int = 1) -> List[Any]:
    """Apply ``fn(batch_index, count)`` to every batch, in order, optionally on a thread pool."""
    jobs = batches(total, size)
    if threads <= 1 or len(jobs) == 1:
        return [fn(index, count) for index, count in jobs]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda job: fn(*job), jobs))


def _begin(cfg: ExperimentConfig, out_dir: Path, suite: str) -> Path:
    out_dir = Path(out_dir)
    manifest = run_manifest(cfg.hash, cfg.seed, STREAM_BASES[suite], __version__, suite)
    write_manifest(out_dir, manifest)
    logger.info(f"Starting {suite} suite in {out_dir} (config {cfg.hash[:12]})")
    return out_dir


def _finish(cfg: ExperimentConfig, out_dir: Path, suite: str, assertions: List[Assertion]) -> SuiteResult:
    write_report(out_dir, suite, cfg.hash, assertions)
    manifest = read_manifest(out_dir)
    manifest["status"] = "complete"
    write_manifest(out_dir, manifest)
    result = SuiteResult(suite=suite, out_dir=out_dir, assertions=assertions)
    for failure in result.failures:
        logger.warning(f"{suite}: {failure.name} failed (value={failure.value:.4g}, threshold={failure.threshold:.4g})")
    logger.info(f"Finished {suite} suite: {'passed' if result.passed else 'FAILED'}")
    return result


def simulate(cfg: ExperimentConfig, out_dir: Path) -> Dict:
    """Run the configured ensemble once and persist snapshots, noise path and manifest."""
    out_dir = _begin(cfg, out_dir, "simulate")
    spec = cfg.run_spec(stream_id=STREAM_BASES["simulate"])
    spacing = cfg.statistics.snapshot_spacing
    times = list(np.arange(0.0, cfg.t_max + 0.5 * spacing, spacing))
    trajectory = spec.run(cfg.initials_array(), cfg.t_max, times)
    manifest = read_manifest(out_dir)
    if trajectory.noise is not None:
        write_noise_path(out_dir / "noise.bnp", trajectory.noise)
        manifest["noise_file"] = "noise.bnp"
    return save_trajectory(trajectory, out_dir, manifest)


def lag_covariance(psi: np.ndarray) -> np.ndarray:
    """Spatially averaged psi(x) psi(x + r) for every lag r, per row."""
    n = psi.shape[-1]
    power = np.abs(np.fft.rfft(psi, axis=-1)) ** 2
    return np.fft.irfft(power, n, axis=-1) / n


def covariance_check(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> SuiteResult:
    params = suite_params(cfg, "covariance")
    realizations = cfg.require_realizations(
        MIN_COVARIANCE_REALIZATIONS,
        "covariance check",
        count=params["realizations"],
        field="experiment.params.covariance.realizations",
    )
    out_dir = _begin(cfg, out_dir, "covariance")
    grid = cfg.grid()
    mollifier = cfg.mollifier()
    dt = cfg.dt
    wanted = {int(np.floor(t / dt + 1e-9)): float(t) for t in params["times"]}
    steps = max(wanted)
    k = cfg.statistics.se_multiplier

    def run_batch(index: int, count: int) -> Dict[int, np.ndarray]:
        noise = sample_noise_path(
            cfg.seed, dt, steps, grid, STREAM_BASES["covariance"] + index, realizations=count, materialize=False
        )
        psi = LinearizedField.zero(grid, (count,))
        found = {}
        for step, dW in enumerate(noise.iter_increments(), start=1):
            psi = psi_step(psi, smooth_increment(dW, mollifier), dt)
            if step in wanted:
                found[step] = lag_covariance(psi.psi)
        return found

    results = map_batches(run_batch, realizations, cfg.statistics.batch_size, threads)
    assertions = []
    for step, t in sorted(wanted.items()):
        samples = np.concatenate([r[step] for r in results])
        mean, se = mean_se(samples, axis=0)
        theory = psi_stationary_covariance(mollifier, step * dt, grid)
        diff = np.abs(mean - theory)
        slack = 1e-12 * max(1.0, float(np.max(np.abs(theory))))
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > slack, np.inf, 0.0))
        worst = int(np.argmax(z))
        write_curve(
            out_dir,
            f"covariance_t{t:g}",
            pd.DataFrame({"lag": grid.lags, "empirical": mean, "se": se, "theory": theory}),
        )
        assertions.append(
            Assertion(
                f"psi_covariance_t{t:g}",
                float(z[worst]),
                float(se[worst]),
                k,
                bool(np.all(diff <= k * se + slack)),
                note=f"max z-score over lags, {samples.shape[0]} realizations",
            )
        )
    return _finish(cfg, out_dir, "covariance", assertions)


def _random_pair(cfg: ExperimentConfig, modes: int = 3) -> np.ndarray:
    grid = cfg.grid()
    rng = stream_generator(cfg.seed, STREAM_BASES["structure"], 99)
    pair = []
    for _ in range(2):
        amps = rng.normal(0.0, 0.5, modes)
        phases = rng.uniform(0.0, 2.0 * np.pi, modes)
        m = np.arange(1, modes + 1)[:, None]
        pair.append(np.sum(amps[:, None] * np.sin(2.0 * np.pi * m * grid.x / grid.length + phases[:, None]), axis=0))
    return np.stack(pair)


def structure_suite(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> SuiteResult:
    """Exact discrete invariants: comparison, L1 and Y_G contraction, conservation, F-dissipation, sandwich."""
    params = suite_params(cfg, "structure")
    out_dir = _begin(cfg, out_dir, "structure")
    grid = cfg.grid()
    tol = cfg.thresholds["exact_rel_tol"]
    spec = cfg.run_spec(stream_id=STREAM_BASES["structure"])
    initials = cfg.initials_array()
    base = initials[0]
    other = initials[1] if len(initials) > 1 else InitialCondition("square", amplitude=1.0).evaluate(grid)
    components = np.stack([base, base + params["ordered_offset"], other])
    steps = spec.steps_for(params["t_end"])

    def run_batch(index: int, count: int) -> Dict[str, float]:
        ens = initial_ensemble(components, spec.mollifier, count)
        noise = spec.noise(steps, count, index)
        start = compare(ens, 0, 2)
        scale = np.maximum(start.l1, 1e-300)
        mass0 = np.sum(start.eta, axis=-1) * grid.dx
        means0 = ens.u.mean(axis=-1)
        yg_prev = yg0 = weighted_l1_array(start.eta, grid, Y_G)
        l1_prev = start.l1
        worst = {"order": 0.0, "l1": 0.0, "mass": 0.0, "mean": 0.0, "yg": 0.0}
        for _, ens, _ in iterate(ens, noise, spec.scheme, steps):
            worst["order"] += float(np.sum(compare(ens, 0, 1).eta > 0))
            diag = compare(ens, 0, 2)
            worst["l1"] = max(worst["l1"], float(np.max((diag.l1 - l1_prev) / scale)))
            mass = np.sum(diag.eta, axis=-1) * grid.dx
            worst["mass"] = max(worst["mass"], float(np.max(np.abs(mass - mass0) / scale)))
            drift = np.abs(ens.u.mean(axis=-1) - means0) / np.maximum(1.0, np.abs(means0))
            worst["mean"] = max(worst["mean"], float(np.max(drift)))
            yg = weighted_l1_array(diag.eta, grid, Y_G)
            worst["yg"] = max(worst["yg"], float(np.max((yg - yg_prev) / np.maximum(yg0, 1e-300))))
            l1_prev, yg_prev = diag.l1, yg
        return worst

    results = map_batches(run_batch, int(params["paths"]), cfg.statistics.batch_size, threads)
    worst = {key: (sum if key == "order" else max)(r[key] for r in results) for key in results[0]}
    assertions = [
        Assertion("comparison_preserved", worst["order"], 0.0, 0.0, worst["order"] == 0, note="ordering violations"),
        Assertion("l1_contraction", worst["l1"], 0.0, tol, worst["l1"] <= tol, note="max relative one-step increase"),
        Assertion("mass_conservation", worst["mass"], 0.0, tol, worst["mass"] <= tol),
        Assertion("mean_conservation", worst["mean"], 0.0, tol, worst["mean"] <= tol),
        Assertion("yg_contraction", worst["yg"], 0.0, tol, worst["yg"] <= tol, note="max relative one-step increase"),
    ]

    diss_steps = spec.steps_for(params["dissipation_t_end"])
    every = int(params["dissipation_every"])
    times = [s * spec.scheme.dt for s in range(0, diss_steps + 1, every)]
    trajectory = spec.run(
        _random_pair(cfg), params["dissipation_t_end"], times, realizations=int(params["dissipation_runs"]), stream_offset=10_000
    )
    for F in ("abs", "pos_part"):
        report = f_dissipation_audit(trajectory, 0, 1, F, rel_tolerance=cfg.thresholds["dissipation_rel_tol"])
        slack = report.slack.reshape(len(report.times), -1).min(axis=1)
        write_curve(out_dir, f"dissipation_{F}", pd.DataFrame({"t": report.times, "min_slack": slack}))
        assertions.append(Assertion(f"f_dissipation_{F}", report.min_slack, 0.0, -report.tolerance, report.passed))

    decomp = default_basin_decomposition(grid, a=float(np.mean(base)))
    bounds = sandwich(decomp, params["sandwich_eps"])
    sandwich_run = spec.run(
        np.stack([bounds.v_minus, bounds.v, bounds.v_plus]),
        params["t_end"],
        [s * spec.scheme.dt for s in range(0, steps + 1, every)],
        realizations=int(params["sandwich_realizations"]),
        stream_offset=20_000,
    )
    violations = 0
    for snap in sandwich_run.snapshots:
        lower, middle, upper = (snap.thetas[..., c, :] for c in range(3))
        violations += int(np.sum(lower > middle) + np.sum(middle > upper))
    assertions.append(Assertion("sandwich_exact", violations, 0.0, 0.0, violations == 0, note=f"K={bounds.K}"))
    return _finish(cfg, out_dir, "structure", assertions)


def moments_suite(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> SuiteResult:
    """Second-moment and gradient bounds, the height balance and shear invariance."""
    params = suite_params(cfg, "moments")
    out_dir = _begin(cfg, out_dir, "moments")
    grid = cfg.grid()
    mollifier = cfg.mollifier()
    k = cfg.statistics.se_multiplier
    spec = cfg.run_spec(stream_id=STREAM_BASES["moments"])
    a = cfg.initials[0].mean
    constant = np.full(grid.n, a)
    t_end = float(params["t_end"])
    spacing = cfg.statistics.snapshot_spacing
    times = list(np.arange(0.0, t_end + 0.5 * spacing, spacing))
    realizations = cfg.statistics.realizations

    def run_batch(index: int, count: int):
        trajectory = spec.run(constant[None, :], t_end, times, realizations=count, stream_offset=index)
        u = trajectory.component(0)
        grads = ddx_array(u, grid)
        return trajectory.times, u[..., 0], grads[..., 0] ** 2, height_samples(trajectory)

    results = map_batches(run_batch, realizations, cfg.statistics.batch_size, threads)
    snap_times = results[0][0]
    values = np.concatenate([r[1] for r in results], axis=1)
    grad2 = np.concatenate([r[2] for r in results], axis=1)

    deviations = (values - values.mean(axis=1, keepdims=True)) ** 2
    var, var_se = mean_se(deviations)
    grad, grad_se = mean_se(grad2)
    l2sq, deriv_l2sq = mollifier.l2sq, mollifier.deriv_l2sq
    worst_var = int(np.argmax(var - l2sq - k * var_se))
    worst_grad = int(np.argmax(grad - deriv_l2sq - k * grad_se))
    rel_grad = abs(grad[-1] - deriv_l2sq) / deriv_l2sq if deriv_l2sq > 0 else 0.0
    assertions = [
        Assertion("variance_bound", var[worst_var], var_se[worst_var], l2sq, bool(np.all(var <= l2sq + k * var_se))),
        Assertion("gradient_bound", grad[worst_grad], grad_se[worst_grad], deriv_l2sq, bool(np.all(grad <= deriv_l2sq + k * grad_se))),
        Assertion("gradient_equality", rel_grad, grad_se[-1], cfg.thresholds["gradient_rel_tol"], rel_grad <= cfg.thresholds["gradient_rel_tol"]),
    ]
    write_curve(out_dir, "moments", pd.DataFrame({"t": snap_times, "var_u": var, "se_var": var_se, "grad2": grad, "se_grad2": grad_se}))

    samples = [r[3] for r in results]
    merged = HeightSamples(
        times=samples[0].times,
        mean_h=np.concatenate([s.mean_h for s in samples], axis=1),
        mean_u2=np.concatenate([s.mean_u2 for s in samples], axis=1),
        var_u=np.concatenate([s.var_u for s in samples], axis=1),
    )
    curve = height_curve(merged)
    write_curve(out_dir, "height_curve", curve)
    balance = ekpz_balance(merged, mollifier)
    write_curve(out_dir, "ekpz_balance", balance)
    worst_gap = int(np.argmax(np.abs(balance["gap"]) - k * balance["se"]))
    assertions.append(
        Assertion(
            "ekpz_balance",
            balance["gap"].iloc[worst_gap],
            balance["se"].iloc[worst_gap],
            0.0,
            bool(np.all(np.abs(balance["gap"]) <= k * balance["se"])),
        )
    )
    assertions.append(equilibration_check(curve, cfg.thresholds["equilibration_drift"]))

    burn_in = cfg.statistics.burn_in
    kb = kb_average(spec, constant, burn_in, t_end, realizations, track_heights=True, stream_offset=50_000)
    for assertion in stationary_moment_audit(kb, mollifier, k):
        assertion.name = f"kb_{assertion.name}"
        assertions.append(assertion)

    other_ic = cfg.initials[1] if len(cfg.initials) > 1 else InitialCondition("sine", mean=a, amplitude=1.0)
    other = other_ic.evaluate(grid)
    other = other - other.mean() + a
    kb_other = kb_average(spec, other, burn_in, t_end, realizations, stream_offset=60_000)
    assertions.append(variance_minimality_audit(kb, kb_other, k))

    shear_times = [0.25 * params["shear_t_end"] * j for j in range(1, 5)]
    for c in params["shear_c"]:
        report = shear_audit(
            spec, np.zeros(grid.n), float(c), params["shear_t_end"], int(params["shear_realizations"]), shear_times, k
        )
        write_curve(out_dir, f"shear_c{c:g}", report.table)
        table = report.table
        worst = int(np.argmax(np.abs(table["difference"]) - k * table["se"]))
        assertions.append(
            Assertion(f"shear_c{c:g}", table["difference"].iloc[worst], table["se"].iloc[worst], k, report.passed)
        )
    return _finish(cfg, out_dir, "moments", assertions)


def _nearest_rows(times: np.ndarray, targets: Sequence[float]) -> List[int]:
    return [int(np.argmin(np.abs(times - t))) for t in targets]


def gamma_suite(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> SuiteResult:
    """gamma(t) from polymers and from PDE heights, its shape, and the Cole-Hopf ladder."""
    params = suite_params(cfg, "gamma")
    out_dir = _begin(cfg, out_dir, "gamma")
    grid = cfg.grid()
    mollifier = cfg.mollifier()
    k = cfg.statistics.se_multiplier
    realizations = cfg.statistics.realizations
    polymer_cfg = PolymerConfig(
        paths=int(params["paths"]),
        dt=float(params["dt"]),
        t_max=float(params["t_max"]),
        resample_threshold=float(params["resample_threshold"]),
    )
    every = int(params["record_every"])
    record = [s * polymer_cfg.dt for s in range(0, polymer_cfg.steps + 1, every)]
    curve = estimate_gamma(realizations, polymer_cfg, mollifier, cfg.seed, STREAM_BASES["gamma"], record)
    write_curve(out_dir, "gamma", curve.to_frame())

    assertions = []
    assertions.append(
        Assertion(
            "gamma_vanishes_at_start",
            curve.gamma[0],
            curve.se[0],
            cfg.thresholds["exact_rel_tol"],
            bool(curve.times[0] == 0.0 and abs(curve.gamma[0]) <= cfg.thresholds["exact_rel_tol"]),
        )
    )
    diffs = np.diff(curve.gamma_samples, axis=0)
    d_mean, d_se = mean_se(diffs)
    assertions.append(
        Assertion("gamma_nondecreasing", float(np.min(d_mean + k * d_se)), 0.0, 0.0, bool(np.all(d_mean >= -k * d_se)))
    )
    second = curve.gamma_samples[2:] - 2 * curve.gamma_samples[1:-1] + curve.gamma_samples[:-2]
    if len(second):
        s_mean, s_se = mean_se(second)
        assertions.append(
            Assertion("gamma_concave", float(np.max(s_mean - k * s_se)), 0.0, 0.0, bool(np.all(s_mean <= k * s_se)))
        )
    half = 0.5 * mollifier.l2sq
    start_gap = abs(curve.gamma_prime_overlap[0] - half)
    assertions.append(
        Assertion("overlap_at_zero", curve.gamma_prime_overlap[0], 0.0, half, bool(start_gap <= 1e-12 * max(1.0, half)))
    )
    p_diff = np.diff(curve.prime_samples, axis=0)
    p_mean, p_se = mean_se(p_diff)
    assertions.append(
        Assertion("overlap_nonincreasing", float(np.max(p_mean - k * p_se)), 0.0, 0.0, bool(np.all(p_mean <= k * p_se)))
    )
    integral = integrated_prime(curve)
    gap, gap_se = mean_se(integral - curve.gamma_samples)
    worst = int(np.argmax(np.abs(gap) - k * gap_se))
    assertions.append(
        Assertion("overlap_integrates_to_gamma", gap[worst], gap_se[worst], 0.0, bool(np.all(np.abs(gap) <= k * gap_se + 1e-12)))
    )
    assertions.append(
        Assertion("ess_in_range", float(curve.ess_min.min()), 0.0, 1.0, bool(np.all((curve.ess_min >= 1.0) & (curve.ess_min <= polymer_cfg.paths))))
    )

    spec = cfg.run_spec(stream_id=STREAM_BASES["gamma"] + 1)
    check_times = [float(t) for t in params["check_times"]]
    t_end = max(check_times)

    def run_batch(index: int, count: int):
        trajectory = spec.run(np.zeros((1, grid.n)), t_end, check_times, realizations=count, stream_offset=index)
        return height_samples(trajectory)

    samples = map_batches(run_batch, realizations, cfg.statistics.batch_size, threads)
    mean_h = np.concatenate([s.mean_h for s in samples], axis=1)
    pde_mean, pde_se = mean_se(mean_h)
    rows = _nearest_rows(curve.times, check_times)
    cross = pd.DataFrame(
        {
            "t": check_times,
            "gamma_polymer": curve.gamma[rows],
            "se_polymer": curve.se[rows],
            "mean_h_pde": pde_mean,
            "se_pde": pde_se,
        }
    )
    write_curve(out_dir, "gamma_cross_check", cross)
    combined = np.hypot(cross["se_polymer"], cross["se_pde"])
    difference = cross["gamma_polymer"] - cross["mean_h_pde"]
    worst = int(np.argmax(np.abs(difference) - k * combined))
    assertions.append(
        Assertion("polymer_matches_pde", difference.iloc[worst], combined.iloc[worst], k, bool(np.all(np.abs(difference) <= k * combined)))
    )

    ladder = params["ladder"]
    study = ladder_refinement_study(
        lambda x: np.zeros_like(x),
        cfg.length,
        int(ladder["n"]),
        float(ladder["dt"]),
        float(ladder["t_end"]),
        mollifier_kind=cfg.mollifier_kind,
        mollifier_width=cfg.mollifier_width,
        seed=cfg.seed,
        realizations=int(ladder["realizations"]),
        cfl_safety=cfg.cfl_safety,
        stream_id=STREAM_BASES["gamma"] + 90_000,
    )
    low, high = cfg.thresholds["ladder_ratio_min"], cfg.thresholds["ladder_ratio_max"]
    assertions.append(
        Assertion("ladder_refinement_ratio", study.ratio, 0.0, low, bool(low <= study.ratio <= high), note=f"coarse {study.coarse:.3e}, fine {study.fine:.3e}")
    )
    return _finish(cfg, out_dir, "gamma", assertions)


def stability_suite(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> SuiteResult:
    """Basin sandwich stability, coupled Wasserstein decay, ordering and uniqueness."""
    params = suite_params(cfg, "stability")
    out_dir = _begin(cfg, out_dir, "stability")
    grid = cfg.grid()
    k = cfg.statistics.se_multiplier
    spec = cfg.run_spec(stream_id=STREAM_BASES["stability"])
    realizations = cfg.statistics.realizations
    spacing = cfg.statistics.snapshot_spacing
    a = cfg.initials[0].mean
    assertions = []

    t_end = float(params["t_end"])
    decomp = default_basin_decomposition(grid, a=a, periods=int(params["periods"]))
    times = list(np.arange(0.0, t_end + 0.5 * spacing, spacing))
    reports = stability_experiment(decomp, params["eps_schedule"], spec, t_end, realizations, times)
    violations = sum(r.sandwich_violations for r in reports)
    ks = ", ".join(f"eps={r.eps:g}: K={r.K}" for r in reports)
    assertions.append(Assertion("sandwich_exact", violations, 0.0, 0.0, violations == 0, note=ks))

    table = reports[0].table
    threshold = cfg.thresholds["stability_ratio"]
    assertions.append(Assertion("stability_ratio", reports[0].ratio, 0.0, threshold, reports[0].ratio <= threshold))
    distance = table["distance"].to_numpy()
    se = table["se"].to_numpy()
    rises = np.diff(distance)
    slack = k * np.hypot(se[:-1], se[1:]) + 1e-12 * max(1.0, float(distance[0]))
    worst_rise = int(np.argmax(rises - slack)) if len(rises) else 0
    assertions.append(
        Assertion(
            "distance_nonincreasing",
            float(rises[worst_rise]) if len(rises) else 0.0,
            float(np.hypot(se[worst_rise], se[worst_rise + 1])) if len(rises) else 0.0,
            0.0,
            bool(np.all(rises <= slack)),
            note="largest rise between snapshots",
        )
    )

    for report in reports:
        tag = f"eps{report.eps:g}"
        write_curve(out_dir, f"stability_{tag}", report.table)
        final = report.table.iloc[-1]
        combined = float(np.hypot(final["se"], final["ceiling_se"]))
        assertions.append(
            Assertion(
                f"distance_below_ceiling_{tag}",
                final["distance"] - final["ceiling"],
                combined,
                0.0,
                bool(final["distance"] <= final["ceiling"] + k * combined),
            )
        )
        ceiling_gap = float(np.max(np.abs(report.table["ceiling"] - report.ceiling_expected)))
        ceiling_tol = 1e-9 * max(1.0, report.ceiling_expected)
        assertions.append(
            Assertion(f"ceiling_matches_gap_{tag}", ceiling_gap, 0.0, ceiling_tol, ceiling_gap <= ceiling_tol)
        )

    w_end = float(params["wasserstein_t_end"])
    periodic = InitialCondition("sine", amplitude=1.0).evaluate(grid)
    w_times = list(np.arange(0.0, w_end + 0.5 * spacing, spacing))
    coupled = spec.run(np.stack([np.zeros(grid.n), periodic]), w_end, w_times, realizations=realizations, stream_offset=1)
    frame = coupled_wasserstein_bound(coupled, 0, 1)
    write_curve(out_dir, "wasserstein", frame)
    tol = cfg.thresholds["exact_rel_tol"] * max(1.0, float(frame["distance"].iloc[0]))
    assertions.append(
        Assertion("wasserstein_monotone", frame.attrs["max_increase"], 0.0, tol, frame.attrs["max_increase"] <= tol)
    )
    ratio = float(frame["distance"].iloc[-1] / frame["distance"].iloc[0])
    assertions.append(Assertion("wasserstein_decay", ratio, 0.0, cfg.thresholds["wasserstein_ratio"], ratio <= cfg.thresholds["wasserstein_ratio"]))

    high, low = (float(m) for m in params["ordering_means"])
    amp = float(params["ordering_amplitude"])
    pair = np.stack(
        [
            InitialCondition("sine", mean=high, amplitude=amp).evaluate(grid),
            InitialCondition("sine", mean=low, amplitude=-amp).evaluate(grid),
        ]
    )
    burn_in = float(params["ordering_burn_in"])
    ordered = spec.run(pair, burn_in, [burn_in], realizations=int(params["ordering_realizations"]), stream_offset=2)
    ordering = ordering_audit(ordered, 0, 1)
    assertions.append(
        Assertion("ordering_fraction", ordering.fraction, 0.0, cfg.thresholds["ordering_fraction"], ordering.fraction >= cfg.thresholds["ordering_fraction"], note=f"min gap {ordering.min_gap:.3g}")
    )

    u_end = float(params["uniqueness_t_end"])
    other = InitialCondition("square", mean=a, amplitude=1.0, mode=2).evaluate(grid)
    u_times = [0.0, u_end]
    same_mean = spec.run(np.stack([np.full(grid.n, a), other - other.mean() + a]), u_end, u_times, realizations=realizations, stream_offset=3)
    assertions.append(uniqueness_proxy(same_mean, cfg.thresholds["uniqueness_ratio"]))
    return _finish(cfg, out_dir, "stability", assertions)


SUITES = {
    "covariance": covariance_check,
    "structure": structure_suite,
    "moments": moments_suite,
    "gamma": gamma_suite,
    "stability": stability_suite,
}


def run_suite(name: str, cfg: ExperimentConfig, out_dir: Optional[Path] = None, threads: int = 1) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}")
    out_dir = Path(out_dir) if out_dir is not None else Path(cfg.output_dir) / name
    return SUITES[name](cfg, out_dir, threads)
