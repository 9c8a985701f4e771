import json
import os
import sys
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import typer
from loguru import logger
from pydantic import ValidationError
from rich.console import Console

from agent.acceptance_agent import AcceptanceAgent
from agent.experiment import PRESETS, ExperimentConfig, RunManifest, load_config_file, preset_config
from agent.orchestrator_agent import OrchestratorAgent
from agent.reporting_agent import ReportingAgent
from agent.simulation_agent import SimulationAgent
from nse.config import configure_logging, get_settings
from nse.distributions import DistributionSpec
from nse.errors import AcceptanceFailure, ConfigurationError, DataError, InvariantViolation, NSEError
from nse.estimator import EstimationProblem, OptimizerConfig, confidence_set, fit, ks_fit
from nse.exact_combinatorics import exact_full_mrq_cdf, finite_left_cdf, limit_left_cdf
from nse.extreme_value import BlockSpec, ThresholdSpec, block_maxima, excesses, gev_mle, gev_nse, gpd_mle, gpd_nse
from nse.gof_tests import (NSETestConfig, TestMethod, jarque_bera, ks_statistic, lilliefors, lilliefors_table,
                           nse_normality_test)
from nse.ranked_quotients import IndexSet, mrq, order_stats, simulate_quotients
from nse.regression import load_regression_csv, nse_regression_fit, ols_fit
from nse.rng import RngSeed


# --- 1. Blackboard Implementation (Central Shared Repository) ---
class Blackboard:
    def __init__(self):
        self._data = {}
        self._status = "idle"
        self._observers = defaultdict(list)
        self._lock = threading.RLock()

    def set_data(self, key: str, value):
        """Posts data to the blackboard under a specific key."""
        with self._lock:
            self._data[key] = value
            logger.trace(f"Blackboard: Data '{key}' posted.")
        self._notify_observers(key)

    def get_data(self, key: str):
        with self._lock:
            return self._data.get(key)

    def set_status(self, new_status: str):
        """Updates the overall run status on the blackboard."""
        with self._lock:
            self._status = new_status
            logger.debug(f"Blackboard: Status updated to '{new_status}'.")
        self._notify_observers("status")

    def get_status(self):
        with self._lock:
            return self._status

    def register_observer(self, key: str, agent_callback):
        """
        Allows an agent to register a callback function to be notified
        when data under 'key' changes.
        """
        with self._lock:
            self._observers[key].append(agent_callback)

    def _notify_observers(self, key: str):
        """Callbacks run outside the lock; a failing observer is logged and the others still run."""
        with self._lock:
            callbacks_to_run = list(self._observers.get(key, ()))
        for callback in callbacks_to_run:
            try:
                callback_value = self.get_data(key) if key != "status" else self.get_status()
                callback(key, callback_value)
            except Exception as e:
                logger.exception(f"Blackboard: Error notifying observer for '{key}': {e}")


# --- 2. Harness entry points ---

def run(config: ExperimentConfig, workers: int | None = None) -> RunManifest:
    """
    Runs one experiment through the agent chain and returns its manifest.
    Any failure re-raises the stored error after partial outputs are removed.
    Failed acceptance checks are recorded in the manifest, not raised.
    """
    blackboard = Blackboard()
    blackboard.set_data("started_at", datetime.now(timezone.utc).isoformat(timespec="seconds"))
    blackboard.set_data("start_clock", time.perf_counter())

    orchestrator = OrchestratorAgent("Orchestrator", blackboard)
    SimulationAgent("SimulationAgent", blackboard, workers=workers)
    AcceptanceAgent("AcceptanceAgent", blackboard)
    ReportingAgent("ReportingAgent", blackboard)

    orchestrator.run(config)

    status = blackboard.get_status()
    if status != "complete":
        error = blackboard.get_data("exception")
        if isinstance(error, NSEError):
            raise error
        raise InvariantViolation(f"run ended in status '{status}': {blackboard.get_data('error_message')}") \
            from error
    return blackboard.get_data("run_manifest")


def reproduce(name: str, scale: float = 0.2, seed: int | None = None, output_dir: str | Path | None = None,
              workers: int | None = None) -> RunManifest:
    kwargs = {"scale": scale, "output_dir": output_dir}
    if seed is not None:
        kwargs["seed"] = seed
    return run(preset_config(name, **kwargs), workers=workers)


# --- 3. Command line ---

app = typer.Typer(add_completion=False, help="Necessary-and-sufficient estimation toolkit.")
err_console = Console(stderr=True)


@contextmanager
def exit_codes():
    """Maps NSEError to its exit code: 2 validation, 3 numeric failure, 4 acceptance failure."""
    try:
        yield
    except NSEError as e:
        err_console.print(f"[bold red]error:[/bold red] {e}")
        raise typer.Exit(code=e.exit_code)
    except ValidationError as e:
        err_console.print(f"[bold red]error:[/bold red] {e}")
        raise typer.Exit(code=2)


def _emit_json(payload: dict) -> None:
    typer.echo(json.dumps(payload, indent=2, default=float))


def _emit_csv(frame: pd.DataFrame, out: Optional[Path]) -> None:
    if out is None:
        frame.to_csv(sys.stdout, index=False, lineterminator="\n")
    else:
        frame.to_csv(out, index=False, lineterminator="\n")
        logger.info(f"wrote {len(frame)} row(s) to {out}")


def _read_column(path: Path, column: Optional[str]) -> np.ndarray:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"data file {path} not found") from None
    numeric = frame.select_dtypes(include="number")
    if column is None:
        if numeric.empty:
            raise DataError(f"{path} has no numeric column")
        column = numeric.columns[0]
    if column not in frame.columns:
        raise DataError(f"column '{column}' not found in {path}; columns: {list(frame.columns)}")
    values = frame[column]
    missing = np.flatnonzero(values.isna().to_numpy())
    if missing.size:
        raise DataError(f"missing value in row {missing[0]} of column '{column}'", index=int(missing[0]))
    return values.to_numpy(dtype=float)


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected a comma-separated list of numbers, got '{text}'") from None


def _parse_ci(text: str) -> tuple[int, float]:
    """'m=200,alpha=0.05' -> (200, 0.05); alpha defaults to 0.05."""
    fields = {}
    for part in (p.strip() for p in text.split(",") if p.strip()):
        key, sep, value = part.partition("=")
        if not sep or key.strip() not in ("m", "alpha") or key.strip() in fields:
            raise ConfigurationError(f"--ci expects 'm=<count>,alpha=<level>', got '{text}'")
        fields[key.strip()] = value.strip()
    if "m" not in fields:
        raise ConfigurationError(f"--ci needs m=<count>, got '{text}'")
    try:
        return int(fields["m"]), float(fields.get("alpha", 0.05))
    except ValueError:
        raise ConfigurationError(f"--ci expects 'm=<count>,alpha=<level>', got '{text}'") from None


@app.callback()
def main(log_level: Optional[str] = typer.Option(None, help="Log level (default from NSE_LOG_LEVEL or INFO)."),
         workers: Optional[int] = typer.Option(None, min=1, help="Worker threads for replications.")):
    if workers is not None:
        os.environ["NSE_WORKERS"] = str(workers)
        get_settings.cache_clear()
    configure_logging(log_level)


@app.command("fit")
def fit_command(
    data: Path = typer.Option(..., help="CSV file with a header row."),
    family: str = typer.Option("normal", help="Family, optionally with start values, e.g. 'gev(xi=0.1)'."),
    column: Optional[str] = typer.Option(None, help="Data column (default: first numeric column)."),
    response: Optional[str] = typer.Option(None, help="Fit a linear regression of this column on the others."),
    lam: str = typer.Option("full", "--lambda",
                            help="Index set: full, left:L, right:K, mid:A:B, mid:auto, explicit:i,j."),
    method: str = typer.Option("nse", help="nse or ks."),
    n_reference: int = typer.Option(10, min=1),
    repeats: int = typer.Option(10, min=1, help="Averaged runs for regression fits."),
    restarts: int = typer.Option(5, min=1),
    max_iterations: int = typer.Option(2000, min=1),
    fix_sigma: bool = typer.Option(False, help="Hold the error scale at the OLS value (regression)."),
    no_intercept: bool = typer.Option(False, help="Fit the regression through the origin."),
    ci: Optional[str] = typer.Option(None, help="Monte Carlo confidence set, e.g. 'm=200,alpha=0.05'."),
    seed: int = typer.Option(0, min=0),
):
    """Fits a distribution (or a regression with --response) and prints JSON."""
    with exit_codes():
        optimizer = OptimizerConfig(restarts=restarts, max_iterations=max_iterations)
        spec = DistributionSpec.parse(family)
        ci_args = _parse_ci(ci) if ci is not None else None
        if response is not None:
            if not data.exists():
                raise DataError(f"data file {data} not found")
            reg = load_regression_csv(data, response, intercept=not no_intercept)
            ols = ols_fit(reg)
            nse = nse_regression_fit(reg, spec, optimizer, RngSeed(seed), n_reference, repeats, fix_sigma)
            _emit_json({"names": list(reg.names), "ols": ols.to_json(), "nse": nse.to_json()})
            return
        values = _read_column(data, column)
        options = {"lam": IndexSet.parse(lam), "optimizer": optimizer, "n_reference": n_reference}
        if "(" in family:
            problem = EstimationProblem(spec, values, **options)
        else:
            problem = EstimationProblem.for_family(spec, values, **options)
        if method == "ks":
            result = ks_fit(problem)
        elif method == "nse":
            result = fit(problem, RngSeed(seed))
        else:
            raise ConfigurationError(f"unknown method '{method}'; use nse or ks")
        payload = {"family": str(problem.family.with_params(result.theta_hat)), **result.to_json()}
        if ci_args is not None:
            payload["ci"] = confidence_set(problem, *ci_args, RngSeed(seed).spawn(1)).to_json()
        _emit_json(payload)


@app.command("test")
def test_command(
    data: Path = typer.Option(..., help="CSV file with a header row."),
    method: TestMethod = typer.Option(TestMethod.LILLIEFORS),
    column: Optional[str] = typer.Option(None),
    family: str = typer.Option("normal", help="Fully specified distribution for --method ks."),
    two_sided: bool = typer.Option(True, help="Two-sided Monte Carlo interval for --method nse."),
    n_reference: int = typer.Option(10, min=1),
    seed: int = typer.Option(0, min=0),
):
    """Runs a normality or goodness-of-fit test on one column and prints JSON."""
    with exit_codes():
        values = _read_column(data, column)
        settings = get_settings()
        if method is TestMethod.JARQUE_BERA:
            payload = jarque_bera(values).to_json()
        elif method is TestMethod.LILLIEFORS:
            table = lilliefors_table(values.size, settings.null_reps, cache_dir=settings.cache_dir)
            payload = lilliefors(values, table).to_json()
        elif method is TestMethod.NSE:
            config = NSETestConfig(n_reference=n_reference, two_sided=two_sided, null_reps=settings.null_reps)
            payload = nse_normality_test(values, config, RngSeed(seed), cache_dir=settings.cache_dir).to_json()
        else:
            spec = DistributionSpec.parse(family)
            payload = {"method": "ks", "family": str(spec), "statistic": ks_statistic(values, spec)}
        _emit_json(payload)


@app.command("mrq")
def mrq_command(
    x: Optional[Path] = typer.Option(None, help="CSV holding the first sample."),
    y: Optional[Path] = typer.Option(None, help="CSV holding the second sample."),
    column: Optional[str] = typer.Option(None),
    lam: str = typer.Option("full", "--lambda"),
    simulate: int = typer.Option(0, min=0, help="Instead of data, simulate pairs of samples of this size."),
    reps: int = typer.Option(1000, min=1),
    x_family: str = typer.Option("unit_exponential"),
    y_family: str = typer.Option("unit_exponential"),
    seed: int = typer.Option(0, min=0),
    out: Optional[Path] = typer.Option(None),
):
    """Maximum ranked quotients of two samples (JSON), or their simulated law (CSV)."""
    with exit_codes():
        index_set = IndexSet.parse(lam)
        if simulate:
            q1, q2 = simulate_quotients(simulate, index_set, reps, RngSeed(seed),
                                        DistributionSpec.parse(x_family), DistributionSpec.parse(y_family))
            _emit_csv(pd.DataFrame({"q1": q1, "q2": q2}), out)
            return
        if x is None or y is None:
            raise ConfigurationError("mrq needs --x and --y, or --simulate N")
        pair = mrq(order_stats(_read_column(x, column)), order_stats(_read_column(y, column)), index_set)
        _emit_json({"lam": str(index_set), "q1": pair.q1, "q2": pair.q2, "loss": pair.loss})


@app.command("limit-dist")
def limit_dist_command(
    ell: str = typer.Option("1,2,3,4", help="Comma-separated left-end sizes."),
    t: str = typer.Option("0.5,1,2", help="Comma-separated t values."),
    n: int = typer.Option(0, min=0, help="Also evaluate the finite-n recursion at this sample size."),
    out: Optional[Path] = typer.Option(None),
):
    """Left-end limit law R_ell(t), with the finite-n recursion alongside when --n is given."""
    with exit_codes():
        rows = []
        for size in (int(v) for v in _parse_floats(ell)):
            for value in _parse_floats(t):
                row = {"ell": size, "t": value, "limit": float(limit_left_cdf(size, value))}
                if n:
                    row["finite"] = float(finite_left_cdf(n, size, value))
                rows.append(row)
        _emit_csv(pd.DataFrame(rows), out)


@app.command("exact-cdf")
def exact_cdf_command(
    n: int = typer.Option(..., min=1, help="Sample size (<= 9)."),
    t: str = typer.Option("1", help="Threshold; a fraction such as 1/2 is evaluated exactly."),
):
    """Exact P(q <= t) over all ranks for two unit exponential samples of size n."""
    with exit_codes():
        try:
            value = Fraction(t)
        except ValueError:
            raise ConfigurationError(f"t must be a number or fraction, got '{t}'") from None
        exact = exact_full_mrq_cdf(n, value)
        _emit_json({"n": n, "t": str(value), "value": float(exact), "fraction": str(exact)})


@app.command("evt")
def evt_command(
    kind: str = typer.Argument(..., help="gev (block maxima) or gpd (threshold excesses)."),
    data: Path = typer.Option(...),
    method: str = typer.Option("nse", help="mle or nse."),
    column: Optional[str] = typer.Option(None),
    block_size: int = typer.Option(1, min=1, help="gev: observations per block; 1 fits the data as given."),
    threshold: Optional[float] = typer.Option(None, help="gpd: fixed threshold."),
    quantile: Optional[float] = typer.Option(None, help="gpd: threshold as a sample quantile."),
    min_exceedances: int = typer.Option(30, min=1),
    n_reference: int = typer.Option(10, min=1),
    seed: int = typer.Option(0, min=0),
):
    """Fits a GEV to block maxima or a GPD to threshold excesses and prints JSON."""
    with exit_codes():
        if kind not in ("gev", "gpd"):
            raise ConfigurationError(f"unknown model '{kind}'; use gev or gpd")
        if method not in ("mle", "nse"):
            raise ConfigurationError(f"unknown method '{method}'; use mle or nse")
        values = _read_column(data, column)
        if kind == "gev":
            sample_ = block_maxima(values, BlockSpec(block_size, values.size // block_size))
        else:
            sample_ = excesses(values, ThresholdSpec(threshold, quantile, min_exceedances))
        estimators = {
            ("gev", "mle"): lambda: gev_mle(sample_),
            ("gev", "nse"): lambda: gev_nse(sample_, RngSeed(seed), n_reference=n_reference),
            ("gpd", "mle"): lambda: gpd_mle(sample_),
            ("gpd", "nse"): lambda: gpd_nse(sample_, RngSeed(seed), n_reference=n_reference),
        }
        result = estimators[kind, method]()
        _emit_json({"model": kind, "size": int(sample_.size), **result.to_json()})


def _finish(manifest: RunManifest, config: ExperimentConfig) -> None:
    typer.echo(str(Path(config.output_dir) / "manifest.json"))
    if manifest.failed_checks:
        raise AcceptanceFailure(f"acceptance checks failed: {', '.join(manifest.failed_checks)}",
                                manifest.failed_checks)


@app.command("run")
def run_command(config_file: Path = typer.Argument(..., help="TOML experiment config.")):
    """Runs an experiment from a TOML config; exit code 4 when acceptance checks fail."""
    with exit_codes():
        config = load_config_file(config_file)
        _finish(run(config), config)


@app.command("reproduce")
def reproduce_command(
    name: str = typer.Argument("", help="Preset name; omit with --list."),
    scale: float = typer.Option(0.2, help="Replication multiplier (floor, minimum 10)."),
    seed: Optional[int] = typer.Option(None, min=0),
    out: Optional[Path] = typer.Option(None),
    list_presets: bool = typer.Option(False, "--list", help="List presets and exit."),
):
    """Runs a named preset at desk scale."""
    with exit_codes():
        if list_presets or not name:
            for key, preset in PRESETS.items():
                typer.echo(f"{key:16s} {preset.scenario.value:22s} {preset.description}")
            return
        kwargs = {"scale": scale, "output_dir": out}
        if seed is not None:
            kwargs["seed"] = seed
        config = preset_config(name, **kwargs)
        _finish(run(config), config)


if __name__ == "__main__":
    app()
