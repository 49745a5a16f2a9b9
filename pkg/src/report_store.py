"""Reading suite reports and curves back from run directories."""
import json
import logging
import time
from pathlib import Path
from typing import Optional

import pandas as pd

from .config import Config
from .errors import FileFormatError

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["run", "suite", "config_hash", "name", "value", "se", "threshold", "passed", "note"]


class ReportStore:
    """Collects ``reports/*.json`` under a root directory into DataFrames, with a TTL cache."""

    def __init__(self, root: Optional[Path] = None, config: Config = None):
        """Initialize the store.

        Args:
            root: Directory searched recursively for run outputs. Uses
                ``Config.OUTPUT_DIR`` if None.
            config: Configuration object. Uses default Config if None.
        """
        self.config = config or Config()
        self.root = Path(root if root is not None else self.config.OUTPUT_DIR)
        self._cache: Optional[pd.DataFrame] = None
        self._last_fetch_time: float = 0

    def _should_refresh_cache(self) -> bool:
        """Check if cache should be refreshed based on TTL."""
        current_time = time.time()
        return self._cache is None or (current_time - self._last_fetch_time) > self.config.REPORT_CACHE_TTL

    def fetch_reports(self, force_refresh: bool = False) -> pd.DataFrame:
        """One row per assertion across every report under the root.

        Args:
            force_refresh: If True, bypass cache and re-read the files.

        Returns:
            DataFrame with REPORT_COLUMNS; empty when nothing has been written yet.
        """
        if not force_refresh and not self._should_refresh_cache():
            return self._cache

        rows = []
        for path in sorted(self.root.glob("**/reports/*.json")):
            try:
                payload = json.loads(path.read_text())
            except json.JSONDecodeError as e:
                logger.error(f"Unreadable report {path}: {e}")
                raise FileFormatError(f"{path}: invalid JSON ({e})")
            run = str(path.parent.parent.relative_to(self.root))
            for record in payload.get("assertions", []):
                rows.append(
                    {
                        "run": run,
                        "suite": payload.get("suite"),
                        "config_hash": payload.get("config_hash"),
                        **{key: record.get(key) for key in REPORT_COLUMNS[3:]},
                    }
                )

        df = pd.DataFrame(rows, columns=REPORT_COLUMNS)
        self._cache = df
        self._last_fetch_time = time.time()
        logger.info(f"Loaded {len(df)} assertions from {self.root}")
        return df

    def get_summary(self, df: Optional[pd.DataFrame] = None) -> pd.DataFrame:
        """Per (run, suite) counts of passed and failed assertions.

        Args:
            df: Assertion table. Uses cached reports if None.
        """
        if df is None:
            df = self.fetch_reports()
        if df.empty:
            return pd.DataFrame(columns=["run", "suite", "assertions", "failed", "passed"])

        summary = df.groupby(["run", "suite"], as_index=False).agg(
            assertions=("name", "count"),
            failed=("passed", lambda s: int((~s.astype(bool)).sum())),
        )
        summary["passed"] = summary["failed"] == 0
        return summary

    def get_failures(self, df: Optional[pd.DataFrame] = None) -> pd.DataFrame:
        if df is None:
            df = self.fetch_reports()
        if df.empty:
            return df
        return df[~df["passed"].astype(bool)].reset_index(drop=True)

    def get_curve(self, name: str, run: Optional[str] = None) -> Optional[pd.DataFrame]:
        """Read ``curves/<name>.csv`` from the given run, or the first run that has it.

        Returns:
            The curve, or None if no run wrote it.
        """
        base = self.root / run if run else self.root
        matches = sorted(base.glob(f"**/curves/{name}.csv"))
        if not matches:
            return None
        return pd.read_csv(matches[0])

    def list_curves(self) -> pd.DataFrame:
        rows = [
            {"run": str(path.parent.parent.relative_to(self.root)), "curve": path.stem}
            for path in sorted(self.root.glob("**/curves/*.csv"))
        ]
        return pd.DataFrame(rows, columns=["run", "curve"])

    def clear_cache(self):
        """Clear the cached reports."""
        self._cache = None
        self._last_fetch_time = 0
        logger.info("Cache cleared")
