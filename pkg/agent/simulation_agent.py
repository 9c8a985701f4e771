import concurrent.futures

import pandas as pd
from loguru import logger

from agent.scenarios import RUNNERS
from nse.config import get_settings
from nse.errors import NSEError


class SimulationAgent:
    """
    The Simulation Agent runs the replications of the delegated scenario on a
    thread pool and posts the rows, ordered by replication index, to the
    blackboard. Every replication draws from its own random streams, so the
    rows do not depend on the worker count.
    """
    def __init__(self, name: str, blackboard, workers: int | None = None):
        self.name = name
        self.blackboard = blackboard
        self.workers = workers or get_settings().workers
        logger.info(f"{self.name}: Initialized with workers={self.workers}.")
        self.blackboard.register_observer("status", self.on_blackboard_change)

    def on_blackboard_change(self, key, value):
        if key == "status" and value == "task_delegated_to_simulation":
            self.execute_task()

    def execute_task(self):
        config = self.blackboard.get_data("experiment_config")
        params = self.blackboard.get_data("scenario_params")
        runner = RUNNERS[config.scenario]
        replications = 1 if runner.single_pass else config.replications
        logger.info(f"{self.name}: Starting {replications} replication(s) of '{config.scenario.value}'.")

        try:
            context = runner.prepare(config, params)
        except Exception as e:
            self._fail(e, None)
            return

        rows: list[dict] = []
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = [executor.submit(runner.replicate, config, params, context, rep) for rep in range(replications)]
            for rep, future in enumerate(futures):
                try:
                    rows.extend(future.result())
                except Exception as e:
                    for pending in futures[rep + 1:]:
                        pending.cancel()
                    self._fail(e, rep)
                    return

        self.blackboard.set_data("replication_rows", pd.DataFrame(rows))
        logger.info(f"{self.name}: {replications} replication(s) complete, {len(rows)} row(s).")
        self.blackboard.set_status("replications_complete")

    def _fail(self, error: Exception, rep: int | None):
        where = "preparation" if rep is None else f"replication {rep}"
        message = f"{where}: {type(error).__name__}: {error}"
        logger.error(f"{self.name}: {message}")
        if not isinstance(error, NSEError):
            logger.exception(error)
        self.blackboard.set_data("exception", error)
        self.blackboard.set_data("failed_replication", rep)
        self.blackboard.set_data("error_message", message)
        self.blackboard.set_status("simulation_failed")
