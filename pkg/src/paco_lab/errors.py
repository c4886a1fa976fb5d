"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An input violated a documented precondition."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but numerically degenerate (zero vector, all-zero norms, ...)."""


class ConfigError(Exception):
    """Run configuration could not be parsed or contains invalid/unknown keys."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss; carries the offending step index."""

    def __init__(self, step: int, epoch: int, message: str = ""):
        self.step = step
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at step {step} (epoch {epoch})")
