"""Exception types shared across the package."""


class TeamDPError(Exception):
    """Base class for all package errors."""


class ModelParseError(TeamDPError):
    """A model document could not be parsed.

    ``locus`` names the offending field (dotted path) when known.
    """

    def __init__(self, message, locus=None):
        self.locus = locus
        if locus:
            message = f"{locus}: {message}"
        super().__init__(message)


class ModelValidationError(TeamDPError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(v.message for v in self.violations)
        super().__init__(f"model is invalid: {lines}")


class ZeroProbabilityOutput(TeamDPError):
    """A channel output has zero probability under the current belief."""


class MissingControllerEntry(TeamDPError):
    def __init__(self, stage, belief, prefix=None):
        self.stage = stage
        self.belief = belief
        self.prefix = prefix
        msg = f"controller at stage {stage} has no entry for belief {belief}"
        if prefix is not None:
            msg += f" (trace prefix: {prefix})"
        super().__init__(msg)


class BudgetExceeded(TeamDPError):
    """A combinatorial enumeration would exceed the configured budget."""

    def __init__(self, count, budget, stage=None, what="candidates"):
        self.count = count
        self.budget = budget
        self.stage = stage
        where = f" at stage {stage}" if stage is not None else ""
        super().__init__(f"{count} {what}{where} exceeds budget {budget}")


class InvariantViolation(TeamDPError):
    """An internal numerical invariant failed; indicates a bug."""
