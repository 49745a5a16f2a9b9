"""
Flask backend serving suite reports and curves as JSON
"""
from flask import Flask, jsonify, request
from src.report_store import ReportStore
from src.config import get_config
import logging

config = get_config()
logging.basicConfig(level=config.LOG_LEVEL, format=config.LOG_FORMAT)
logger = logging.getLogger(__name__)

app = Flask(__name__)
report_store = ReportStore(config=config)


def _records(df):
    # NaN is not valid JSON
    return df.astype(object).where(df.notna(), None).to_dict('records')


@app.route('/api/reports')
def get_reports():
    """All assertions, optionally filtered by ?suite= and ?failed=1"""
    try:
        df = report_store.fetch_reports()
        suite = request.args.get('suite')
        if suite:
            df = df[df['suite'] == suite]
        if request.args.get('failed') == '1':
            df = report_store.get_failures(df)
        return jsonify(_records(df))
    except Exception as e:
        logger.error(f"Error fetching reports: {e}")
        return jsonify({"error": str(e)}), 500


@app.route('/api/summary')
def get_summary():
    """Pass/fail counts per run and suite"""
    try:
        summary = report_store.get_summary()
        return jsonify(_records(summary))
    except Exception as e:
        logger.error(f"Error building summary: {e}")
        return jsonify({"error": str(e)}), 500


@app.route('/api/curves')
def list_curves():
    try:
        return jsonify(_records(report_store.list_curves()))
    except Exception as e:
        logger.error(f"Error listing curves: {e}")
        return jsonify({"error": str(e)}), 500


@app.route('/api/curves/<name>')
def get_curve(name):
    """Columns of curves/<name>.csv, from ?run= or the first run that has it"""
    try:
        curve = report_store.get_curve(name, run=request.args.get('run'))
        if curve is None:
            return jsonify({"error": f"Curve not found: {name}"}), 404
        return jsonify({"name": name, "columns": {col: curve[col].tolist() for col in curve.columns}})
    except Exception as e:
        logger.error(f"Error fetching curve {name}: {e}")
        return jsonify({"error": str(e)}), 500


@app.route('/api/refresh')
def refresh_data():
    """Force re-reading the report files"""
    try:
        df = report_store.fetch_reports(force_refresh=True)
        return jsonify({"status": "success", "message": f"Loaded {len(df)} assertions"})
    except Exception as e:
        logger.error(f"Error refreshing reports: {e}")
        return jsonify({"error": str(e)}), 500


if __name__ == '__main__':
    app.run(debug=config.DEBUG, host=config.HOST, port=config.PORT)
