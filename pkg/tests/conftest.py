"""Fixtures for testing."""
import copy
import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.grid_noise import PeriodicGrid, build_mollifier  # noqa: E402

BASE_CONFIG = {
    "grid": {"length": 8.0, "n": 64},
    "mollifier": {"kind": "gaussian", "width": 0.5},
    "scheme": {"dt": 0.005, "flux": "engquist_osher", "cfl_safety": 0.9},
    "ensemble": {
        "initials": [
            {"kind": "sine", "mean": 0.0, "amplitude": 1.0, "mode": 1},
            {"kind": "square", "mean": 0.0, "amplitude": 1.0, "mode": 2},
        ]
    },
    "noise": {"seed": 11, "t_max": 0.05},
    "statistics": {
        "realizations": 4,
        "burn_in": 0.05,
        "snapshot_spacing": 0.025,
        "batch_size": 2,
        "se_multiplier": 5.0,
    },
    "thresholds": {
        "exact_rel_tol": 1e-12,
        "dissipation_rel_tol": 1e-3,
        "wasserstein_ratio": 0.1,
        "ordering_fraction": 0.99,
        "gradient_rel_tol": 0.03,
        "stability_ratio": 0.15,
        "uniqueness_ratio": 0.1,
        "ladder_ratio_min": 1.5,
        "ladder_ratio_max": 2.5,
        "equilibration_drift": 0.02,
    },
    "experiment": {"kind": "structure", "params": {}},
    "output_dir": "runs",
}


@pytest.fixture
def config_dict():
    """A small, valid experiment config as a plain dict (safe to mutate)."""
    return copy.deepcopy(BASE_CONFIG)


@pytest.fixture
def config_file(tmp_path, config_dict):
    """Write the small config to disk and return its path."""
    config_dict["output_dir"] = str(tmp_path / "runs")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config_dict))
    return path


@pytest.fixture
def grid():
    """Torus of length 8 with 64 cells."""
    return PeriodicGrid(8.0, 64)


@pytest.fixture
def mollifier(grid):
    """Gaussian mollifier of width 0.5 on the small grid."""
    return build_mollifier("gaussian", 0.5, grid)


@pytest.fixture
def smooth_field(grid):
    """A smooth mean-zero field built from two Fourier modes."""
    k = 2.0 * np.pi / grid.length
    return np.sin(k * grid.x) + 0.3 * np.cos(2 * k * grid.x)


@pytest.fixture
def config():
    """Create test configuration."""
    from src.config import Config

    config = Config()
    config.REPORT_CACHE_TTL = 0.1  # Very short for testing
    return config


def _report(suite, assertions):
    return {"suite": suite, "config_hash": "abc123", "passed": all(a["passed"] for a in assertions), "assertions": assertions}


@pytest.fixture
def reports_root(tmp_path):
    """Two runs with a report and a curve each; run_b has one failed assertion."""
    root = tmp_path / "runs"
    run_a = root / "run_a" / "reports"
    run_b = root / "run_b" / "reports"
    run_a.mkdir(parents=True)
    run_b.mkdir(parents=True)
    ok = {"name": "mass_conservation", "value": 0.0, "se": 0.0, "threshold": 1e-12, "passed": True, "note": ""}
    bad = {"name": "wasserstein_decay", "value": 0.9, "se": 0.0, "threshold": 0.5, "passed": False, "note": ""}
    (run_a / "structure.json").write_text(json.dumps(_report("structure", [ok, dict(ok, name="l1_contraction")])))
    (run_b / "stability.json").write_text(json.dumps(_report("stability", [ok, bad])))
    (root / "run_a" / "curves").mkdir()
    (root / "run_a" / "curves" / "gamma.csv").write_text("t,gamma\n0.0,0.0\n0.5,0.1\n")
    return root
