"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration file or value violates the config contract."""


class CheckpointError(ValueError):
    """A checkpoint file is unreadable, corrupt, or of an unsupported version."""


class InvariantError(RuntimeError):
    """A runtime invariant (allocation validity, message constraints, ...) was violated."""
