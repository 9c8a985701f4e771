import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pydantic
import scipy
from loguru import logger

from agent.experiment import CSV_SCHEMA_VERSION, RunManifest
from agent.scenarios import RUNNERS

OUTPUT_FILES = ("replications.csv", "summary.csv", "manifest.json")
FAILED_STATUSES = ("orchestration_failed", "simulation_failed", "acceptance_failed", "reporting_failed")


def sha256_of(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def package_versions() -> dict[str, str]:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "pandas": pd.__version__, "pydantic": pydantic.VERSION}


def _seed_record(config, rep: int) -> dict:
    stream = RUNNERS[config.scenario].replication_seed(config, rep)
    return {"rep": rep, "seed": stream.seed, "stream_id": stream.stream_id}


class ReportingAgent:
    """
    The Reporting Agent writes replications.csv, summary.csv and the run
    manifest once the data is validated. When any earlier step failed it
    removes the files this run wrote and posts a failure report instead;
    outputs left in the directory by earlier runs are not touched.
    """
    def __init__(self, name: str, blackboard):
        self.name = name
        self.blackboard = blackboard
        logger.info(f"{self.name}: Initialized.")
        self.blackboard.register_observer("status", self.on_blackboard_change)

    def on_blackboard_change(self, key, value):
        if key == "status" and value == "data_validated":
            self.execute_task()
        elif key == "status" and value in FAILED_STATUSES:
            self.execute_failure_report()

    def execute_task(self):
        config = self.blackboard.get_data("experiment_config")
        out = Path(config.output_dir)
        written: list[Path] = []
        self.blackboard.set_data("written_files", written)
        try:
            out.mkdir(parents=True, exist_ok=True)
            outputs = {}
            for name, frame in (("replications.csv", self.blackboard.get_data("replication_rows")),
                                ("summary.csv", self.blackboard.get_data("summary"))):
                path = out / name
                frame.to_csv(path, index=False, lineterminator="\n")
                written.append(path)
                outputs[name] = sha256_of(path)

            reps = sorted(set(int(r) for r in self.blackboard.get_data("replication_rows")["rep"]))
            manifest = RunManifest(
                config=config.echo(),
                csv_schema_version=CSV_SCHEMA_VERSION,
                versions=package_versions(),
                started_at=self.blackboard.get_data("started_at") or "",
                wall_time_s=round(time.perf_counter() - (self.blackboard.get_data("start_clock") or time.perf_counter()), 3),
                seeds=[_seed_record(config, r) for r in reps],
                outputs=outputs,
                acceptance=self.blackboard.get_data("acceptance_checks") or [],
            )
            path = out / "manifest.json"
            path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n")
            written.append(path)
        except OSError as e:
            logger.error(f"{self.name}: writing outputs failed: {e}")
            self.blackboard.set_data("exception", e)
            self.blackboard.set_data("error_message", f"reporting: {e}")
            self.blackboard.set_status("reporting_failed")
            return

        self.blackboard.set_data("run_manifest", manifest)
        self.blackboard.set_data("final_report", f"{config.scenario.value}: outputs written to {out}")
        logger.info(f"{self.name}: Outputs and manifest written to {out}.")
        self.blackboard.set_status("complete")

    def execute_failure_report(self):
        """Removes the outputs written by this run and posts a failure report."""
        removed = []
        for path in self.blackboard.get_data("written_files") or []:
            if path.exists():
                path.unlink()
                removed.append(path.name)

        report = f"Run failed ({self.blackboard.get_status()})."
        error_details = self.blackboard.get_data("error_message")
        if error_details:
            report += f" {error_details}"
        if removed:
            report += f" Removed partial outputs: {', '.join(sorted(set(removed)))}."
        self.blackboard.set_data("final_report", report)
        logger.error(f"{self.name}: {report}")
