"""Exception hierarchy.

Every error raised by the package derives from :class:`EmulaError`. The CLI maps
the three families below onto exit codes 2, 3 and 4.
"""


class EmulaError(Exception):
    """Base class."""


class ConfigError(EmulaError):
    """Invalid configuration or input (CLI exit code 2)."""


class CohortError(EmulaError):
    """Cohort construction failed (CLI exit code 3)."""


class EstimationError(EmulaError):
    """Nuisance fitting or effect estimation failed (CLI exit code 4)."""


# events
class MalformedRow(ConfigError):
    def __init__(self, line, reason=""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {reason}" if reason else ""))


class NegativeTime(ConfigError):
    def __init__(self, line):
        self.line = line
        super().__init__(f"negative or non-finite time at line {line}")


class DuplicateDeath(ConfigError):
    def __init__(self, patient):
        self.patient = patient
        super().__init__(f"patient {patient!r} has more than one death event")


class UnknownPatient(EmulaError, KeyError):
    def __init__(self, patient):
        self.patient = patient
        super().__init__(f"unknown patient {patient!r}")

    def __str__(self):
        return self.args[0]


# synthgen
class BadSpec(ConfigError):
    pass


# dag
class CyclicGraph(ConfigError):
    pass


class UnknownNode(ConfigError):
    pass


class AdjustmentViolation(ConfigError):
    """Proposed adjustment set contains mediators, colliders or instruments."""

    def __init__(self, violations):
        self.violations = list(violations)
        desc = ", ".join(f"{node} ({role})" for node, role in self.violations)
        super().__init__(f"invalid adjustment set: {desc}")


# cohort
class EmptyCohort(CohortError):
    pass


# features
class UnknownCode(ConfigError):
    pass


class ColumnMismatch(EstimationError):
    pass


# nuisance
class SingularSystem(EstimationError):
    pass


class SingleClass(EstimationError):
    pass


class FoldTooSmall(EstimationError):
    pass


# estimators
class ZeroControlMean(EstimationError):
    pass


class DegenerateTreatmentResiduals(EstimationError):
    pass


class NoMatches(EstimationError):
    pass


class ResampleFailure(EstimationError):
    pass


# diagnostics
class SingleArm(EstimationError):
    pass


# hte
class DimensionMismatch(EstimationError):
    pass


class EmptyStratum(EstimationError):
    pass
