"""Tests for the Flask JSON API."""
import pytest
import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import app_flask
from src.report_store import ReportStore


@pytest.fixture
def client(reports_root, config, monkeypatch):
    """Test client backed by the sample run directory."""
    monkeypatch.setattr(app_flask, "report_store", ReportStore(reports_root, config))
    app_flask.app.config["TESTING"] = True
    with app_flask.app.test_client() as client:
        yield client


class TestApi:
    """Test cases for the report endpoints."""

    def test_reports(self, client):
        """Test every assertion is listed."""
        response = client.get("/api/reports")
        assert response.status_code == 200
        assert len(response.get_json()) == 4

    def test_reports_filtered(self, client):
        """Test the suite and failed filters."""
        by_suite = client.get("/api/reports?suite=structure").get_json()
        assert {row["suite"] for row in by_suite} == {"structure"}
        failed = client.get("/api/reports?failed=1").get_json()
        assert [row["name"] for row in failed] == ["wasserstein_decay"]

    def test_summary(self, client):
        """Test the per-run summary."""
        rows = client.get("/api/summary").get_json()
        assert {row["run"]: row["failed"] for row in rows} == {"run_a": 0, "run_b": 1}

    def test_curves(self, client):
        """Test the curve index and a single curve."""
        assert client.get("/api/curves").get_json() == [{"run": "run_a", "curve": "gamma"}]
        body = client.get("/api/curves/gamma").get_json()
        assert body["name"] == "gamma"
        assert body["columns"]["gamma"] == [0.0, 0.1]

    def test_missing_curve(self, client):
        """Test an unknown curve is a 404 with a JSON error."""
        response = client.get("/api/curves/nothing")
        assert response.status_code == 404
        assert "error" in response.get_json()

    def test_refresh(self, client):
        """Test a forced reload reports the row count."""
        body = client.get("/api/refresh").get_json()
        assert body["status"] == "success"
        assert "4 assertions" in body["message"]

    def test_error_is_reported(self, client, mocker):
        """Test exceptions become a 500 with a JSON error."""
        mocker.patch.object(app_flask.report_store, "fetch_reports", side_effect=RuntimeError("disk gone"))
        response = client.get("/api/reports")
        assert response.status_code == 500
        assert response.get_json() == {"error": "disk gone"}
