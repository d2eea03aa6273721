"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model, barrier or experiment parameters."""


class NumericalError(RuntimeError):
    """A solver produced non-finite values."""


class StageError(RuntimeError):
    """Failure inside one stage of an experiment pipeline.

    The ``stage`` attribute names the pipeline step (``simulate``, ``solve``,
    ``compare``, ``emit``) and drives the CLI exit code.
    """

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
