"""
Error hierarchy shared by every dapstore module.

Each error carries a machine-readable ``code`` (used as a failure tag when
candidates are skipped) and the process ``exit_code`` a management command
reports when the error escapes it.
"""


class DapError(Exception):
    """Base class for all dapstore errors"""
    default_detail = "An error occurred."
    default_code = "error"
    exit_code = 2

    def __init__(self, detail=None, code=None):
        self.detail = detail if detail is not None else self.default_detail
        self.code = code if code is not None else self.default_code
        super().__init__(self.detail)

    def __str__(self):
        return str(self.detail)


class SizeError(DapError):
    default_detail = "Not enough points for the requested operation."
    default_code = "size"


class ShapeError(DapError):
    default_detail = "Incompatible shapes."
    default_code = "shape"


class ConfigError(DapError):
    default_detail = "Invalid configuration."
    default_code = "config"


class UsageError(DapError):
    default_detail = "Invalid command-line usage."
    default_code = "usage"
    exit_code = 1


class FormatError(DapError):
    default_detail = "Malformed file."
    default_code = "format"


class StateError(DapError):
    default_detail = "Object is not in a valid state for this operation."
    default_code = "state"


class DegenerateDemoError(DapError):
    default_detail = "Demonstration crop does not contain enough container points."
    default_code = "degenerate_demo"


class EmptyCropError(DapError):
    default_detail = "No container point has a non-negative affordance score."
    default_code = "empty_crop"


class InsufficientMatchesError(DapError):
    default_detail = "Fewer than 3 correspondence pairs."
    default_code = "insufficient_matches"


class DegenerateGeometryError(DapError):
    default_detail = "Matched points are collinear or coincident."
    default_code = "degenerate_geometry"


class NumericError(DapError):
    default_detail = "Non-finite value encountered."
    default_code = "numeric"
    exit_code = 3


class ConvergenceError(NumericError):
    default_detail = "Training did not converge."
    default_code = "convergence"


class NoCandidatesError(DapError):
    default_detail = "No placement candidate survived."
    default_code = "no_candidates"
    exit_code = 3

    def __init__(self, detail=None, code=None, failures=None):
        # failures: list of (candidate index, failure code)
        self.failures = list(failures or [])
        if detail is None and self.failures:
            tags = ", ".join(f"{index}:{tag}" for index, tag in self.failures)
            detail = f"{self.default_detail} Failures: {tags}"
        super().__init__(detail, code)

    def failure_counts(self):
        counts = {}
        for _, tag in self.failures:
            counts[tag] = counts.get(tag, 0) + 1
        return counts
