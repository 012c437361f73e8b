"""Exception types shared across the navigation stack."""


class HyperNavError(Exception):
    """Base class for all package errors."""


class ConfigError(HyperNavError):
    """Invalid configuration value, unknown key, or incompatible grids."""


class SceneGenerationError(HyperNavError):
    """Procedural generation could not satisfy the requested parameters."""


class NoPathError(HyperNavError):
    """No obstacle-respecting path exists on the ground-truth grid."""


class PlanningError(HyperNavError):
    """Planner precondition violated, e.g. a costmap with no traversable cell."""


class AggregationError(HyperNavError):
    """SR/SPL aggregation was asked to summarize zero valid episodes."""


class AdvisorError(HyperNavError):
    """Base for advisor failures; callers degrade to the frontier heuristic."""


class AdvisorUnavailable(AdvisorError):
    """Advisor endpoint could not be reached within the retry budget."""


class AdvisorProtocolError(AdvisorError):
    """Advisor endpoint answered with a malformed payload."""
