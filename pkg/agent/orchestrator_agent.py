from loguru import logger

from agent.experiment import ExperimentConfig
from nse.errors import ConfigurationError, NSEError


class OrchestratorAgent:
    """
    The Orchestrator Agent receives an experiment config, checks that the
    scenario parameters and output directory are usable, and delegates the
    scenario to the Simulation Agent through the blackboard.
    """
    def __init__(self, name: str, blackboard):
        self.name = name
        self.blackboard = blackboard
        logger.info(f"{self.name}: Initialized.")

    def run(self, config: ExperimentConfig):
        logger.info(f"{self.name}: Received experiment '{config.scenario.value}' "
                    f"(n={config.n}, replications={config.replications}, seed={config.seed}).")
        self.blackboard.set_data("experiment_config", config)
        try:
            params = config.scenario_params()
            config.output_dir.mkdir(parents=True, exist_ok=True)
        except (NSEError, ValueError) as e:
            self._fail(e if isinstance(e, NSEError) else ConfigurationError(str(e)))
            return
        except OSError as e:
            self._fail(ConfigurationError(f"output directory {config.output_dir} is not writable: {e}"))
            return
        self.blackboard.set_data("scenario_params", params)
        logger.info(f"{self.name}: Delegating '{config.scenario.value}' to simulation.")
        self.blackboard.set_status("task_delegated_to_simulation")

    def _fail(self, error: NSEError):
        logger.error(f"{self.name}: {error}")
        self.blackboard.set_data("exception", error)
        self.blackboard.set_data("error_message", str(error))
        self.blackboard.set_status("orchestration_failed")
