"""Command-line entry point: ``python -m src.cli <command>``.

Exit codes: 0 when every assertion passed, 1 when an assertion failed,
2 on a configuration or input error.
"""
import functools
import logging
import sys
from pathlib import Path

import click

from .config import get_config
from .errors import BurgersLabError
from .experiment_config import ExperimentConfig
from .harness import run_suite, simulate
from .report_store import ReportStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION_FAILED = 1
EXIT_CONFIG_ERROR = 2


def common_options(func):
    """--config/--out/--threads/--seed shared by every experiment command."""
    config = get_config()
    options = [
        click.option(
            "--config", "config_path", type=click.Path(dir_okay=False), default=config.DEFAULT_EXPERIMENT_CONFIG, show_default=True
        ),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory."),
        click.option("--threads", type=int, default=config.THREADS, show_default=True, help="Parallel realization batches."),
        click.option("--seed", type=int, default=None, help="Override noise.seed from the config."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load(config_path: str, seed):
    cfg = ExperimentConfig.load(config_path)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg


def _exit_on_error(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            code = func(*args, **kwargs)
        except BurgersLabError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        sys.exit(code or EXIT_OK)

    return wrapper


def _suite_command(suite: str, config_path: str, out_dir, threads: int, seed) -> int:
    cfg = _load(config_path, seed)
    result = run_suite(suite, cfg, Path(out_dir) if out_dir else None, max(1, threads))
    for assertion in result.assertions:
        status = "ok  " if assertion.passed else "FAIL"
        click.echo(f"{status} {assertion.name}: value={assertion.value:.6g} se={assertion.se:.3g} threshold={assertion.threshold:.6g}")
    click.echo(f"{suite}: {'passed' if result.passed else 'FAILED'} ({result.out_dir})")
    return EXIT_OK if result.passed else EXIT_ASSERTION_FAILED


@click.group()
@click.option("--log-level", default=None, help="Overrides LOG_LEVEL.")
def cli(log_level):
    """Numerical laboratory for the stochastic Burgers equation on a torus."""
    config = get_config()
    logging.basicConfig(level=(log_level or config.LOG_LEVEL).upper(), format=config.LOG_FORMAT)


@cli.command("simulate")
@common_options
@_exit_on_error
def simulate_command(config_path, out_dir, threads, seed):
    """Run the configured ensemble and store snapshots and the noise path."""
    cfg = _load(config_path, seed)
    target = Path(out_dir) if out_dir else Path(cfg.output_dir) / "simulate"
    manifest = simulate(cfg, target)
    click.echo(f"simulate: {len(manifest['files'])} fields written to {target}")
    return EXIT_OK


@cli.command("covariance-check")
@common_options
@_exit_on_error
def covariance_command(config_path, out_dir, threads, seed):
    """Compare the linearized-field covariance with its closed form."""
    return _suite_command("covariance", config_path, out_dir, threads, seed)


@cli.command("structure-suite")
@common_options
@_exit_on_error
def structure_command(config_path, out_dir, threads, seed):
    """Exact discrete invariants of the scheme."""
    return _suite_command("structure", config_path, out_dir, threads, seed)


@cli.command("moments-suite")
@common_options
@_exit_on_error
def moments_command(config_path, out_dir, threads, seed):
    """Moment, gradient and height-balance checks."""
    return _suite_command("moments", config_path, out_dir, threads, seed)


@cli.command("gamma")
@common_options
@_exit_on_error
def gamma_command(config_path, out_dir, threads, seed):
    """Polymer and PDE estimates of the growth function."""
    return _suite_command("gamma", config_path, out_dir, threads, seed)


@cli.command("stability")
@common_options
@_exit_on_error
def stability_command(config_path, out_dir, threads, seed):
    """Basin sandwich stability, coupled decay, ordering and uniqueness."""
    return _suite_command("stability", config_path, out_dir, threads, seed)


@cli.command("report")
@click.argument("root", type=click.Path(file_okay=False), required=False)
@_exit_on_error
def report_command(root):
    """Summarise every suite report under ROOT into summary.csv."""
    store = ReportStore(root)
    summary = store.get_summary(store.fetch_reports(force_refresh=True))
    if summary.empty:
        click.echo(f"no reports under {store.root}")
        return EXIT_OK
    store.root.mkdir(parents=True, exist_ok=True)
    summary.to_csv(store.root / "summary.csv", index=False)
    click.echo(summary.to_string(index=False))
    return EXIT_OK


def main():
    cli()


if __name__ == "__main__":
    main()
