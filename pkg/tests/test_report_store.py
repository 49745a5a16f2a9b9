"""Tests for report_store module."""
import pytest
import pandas as pd
import time
import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.errors import FileFormatError
from src.report_store import REPORT_COLUMNS, ReportStore


class TestReportStore:
    """Test cases for ReportStore class."""

    @pytest.fixture
    def store(self, reports_root, config):
        return ReportStore(reports_root, config)

    def test_init(self, reports_root, config):
        """Test store initialization."""
        store = ReportStore(reports_root, config)
        assert store.config == config
        assert store.root == reports_root
        assert store._cache is None
        assert store._last_fetch_time == 0

    def test_default_root(self, config):
        """Test the root falls back to OUTPUT_DIR."""
        assert str(ReportStore(config=config).root) == config.OUTPUT_DIR

    def test_should_refresh_cache_with_none_cache(self, store):
        """Test cache refresh check when cache is None."""
        assert store._should_refresh_cache() is True

    def test_should_refresh_cache_expired(self, store):
        """Test cache refresh check with expired TTL."""
        store._cache = pd.DataFrame()
        store._last_fetch_time = 0
        assert store._should_refresh_cache() is True

    def test_should_refresh_cache_valid(self, store):
        """Test cache refresh check with valid cache."""
        store._cache = pd.DataFrame()
        store._last_fetch_time = time.time()
        store.config.REPORT_CACHE_TTL = 100
        assert store._should_refresh_cache() is False

    def test_fetch_reports(self, store):
        """Test one row per assertion with its run and suite."""
        df = store.fetch_reports()
        assert list(df.columns) == REPORT_COLUMNS
        assert len(df) == 4
        assert set(df["run"]) == {"run_a", "run_b"}
        assert set(df["suite"]) == {"structure", "stability"}

    def test_fetch_uses_cache(self, store, reports_root):
        """Test cached data is returned within the TTL."""
        store.config.REPORT_CACHE_TTL = 100
        first = store.fetch_reports()
        (reports_root / "run_a" / "reports" / "structure.json").unlink()
        assert store.fetch_reports() is first
        assert len(store.fetch_reports(force_refresh=True)) == 2

    def test_empty_root(self, tmp_path, config):
        """Test a directory without reports gives an empty table."""
        store = ReportStore(tmp_path / "missing", config)
        assert store.fetch_reports().empty
        assert store.get_summary().empty
        assert store.get_failures().empty

    def test_invalid_json(self, store, reports_root):
        """Test a corrupt report is a format error."""
        (reports_root / "run_a" / "reports" / "broken.json").write_text("{")
        with pytest.raises(FileFormatError):
            store.fetch_reports(force_refresh=True)

    def test_get_summary(self, store):
        """Test pass/fail counts per run and suite."""
        summary = store.get_summary().set_index("run")
        assert summary.loc["run_a", "assertions"] == 2
        assert summary.loc["run_a", "failed"] == 0
        assert bool(summary.loc["run_a", "passed"])
        assert summary.loc["run_b", "failed"] == 1
        assert not bool(summary.loc["run_b", "passed"])

    def test_get_failures(self, store):
        """Test only failed assertions are returned."""
        failures = store.get_failures()
        assert list(failures["name"]) == ["wasserstein_decay"]

    def test_get_curve(self, store):
        """Test curves are found in any run or a named one."""
        curve = store.get_curve("gamma")
        assert list(curve.columns) == ["t", "gamma"]
        assert store.get_curve("gamma", run="run_a") is not None
        assert store.get_curve("gamma", run="run_b") is None
        assert store.get_curve("missing") is None

    def test_list_curves(self, store):
        """Test the curve index."""
        curves = store.list_curves()
        assert curves.to_dict("records") == [{"run": "run_a", "curve": "gamma"}]

    def test_clear_cache(self, store):
        """Test cache clearing."""
        store._cache = pd.DataFrame()
        store._last_fetch_time = time.time()

        store.clear_cache()

        assert store._cache is None
        assert store._last_fetch_time == 0
