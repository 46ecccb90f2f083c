"""Exception hierarchy shared across the package."""


class ModelError(Exception):
    """Base class for all model-level errors."""


class IntegrabilityError(ModelError):
    """An integrand grows too fast for the mark measure's finite second moment."""


class ErgodicityError(ModelError):
    """Mean-reversion condition violated: the impact norm is not below beta."""


class ClusterExplosionError(ModelError):
    """A simulated path exceeded the event cap (runaway cluster guard)."""


class HypothesisViolationError(ModelError):
    """A solver was invoked outside the hypotheses that guarantee its answer."""


class NoBracketError(ModelError):
    """Root finding could not bracket a sign change in the search region."""


class ConfigError(Exception):
    """Scenario configuration is missing, malformed, or violates an invariant."""
