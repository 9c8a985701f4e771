from loguru import logger

from agent.scenarios import RUNNERS


class AcceptanceAgent:
    """
    The Acceptance Agent reduces the replication rows into the scenario's
    summary table and evaluates its directional and tolerance checks.
    A failed check is a result, not an error; it is reported, not raised.
    """
    def __init__(self, name: str, blackboard):
        self.name = name
        self.blackboard = blackboard
        logger.info(f"{self.name}: Initialized.")
        self.blackboard.register_observer("status", self.on_blackboard_change)

    def on_blackboard_change(self, key, value):
        if key == "status" and value == "replications_complete":
            self.execute_task()

    def execute_task(self):
        config = self.blackboard.get_data("experiment_config")
        params = self.blackboard.get_data("scenario_params")
        frame = self.blackboard.get_data("replication_rows")
        runner = RUNNERS[config.scenario]
        try:
            summary = runner.summarize(frame, config, params)
            checks = runner.acceptance(frame, summary, config, params)
        except Exception as e:
            logger.error(f"{self.name}: summarising failed: {e}")
            self.blackboard.set_data("exception", e)
            self.blackboard.set_data("error_message", f"acceptance: {e}")
            self.blackboard.set_status("acceptance_failed")
            return

        for check in checks:
            log = logger.info if check.passed else logger.warning
            log(f"{self.name}: {check.name}: {'pass' if check.passed else 'FAIL'} ({check.detail})")
        self.blackboard.set_data("summary", summary)
        self.blackboard.set_data("acceptance_checks", checks)
        self.blackboard.set_status("data_validated")
