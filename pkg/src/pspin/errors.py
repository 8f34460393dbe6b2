"""Exception types shared across the package.

Plain argument/domain violations raise ValueError; the classes here cover
failure modes that callers need to tell apart (exit codes, partial results).
"""

from __future__ import annotations


class PspinError(Exception):
    """Base class for package-specific failures."""


class CapacityError(PspinError):
    """Disorder tensors would exceed the configured memory budget."""

    def __init__(self, required_bytes: int, budget_bytes: int):
        self.required_bytes = required_bytes
        self.budget_bytes = budget_bytes
        super().__init__(
            f"disorder storage needs {required_bytes} bytes, "
            f"budget is {budget_bytes} bytes"
        )


class SingularityError(PspinError):
    """A closed-form expression hit a zero denominator on the evaluation grid."""


class InconsistencyError(PspinError):
    """An equation the theory guarantees solvable had no root in range."""


class SpectralFailureError(PspinError):
    """No direction met the Rayleigh condition, even after the dense fallback.

    Carries the best Rayleigh quotient achieved and, when raised from a path
    run, the partial trace up to the failing step.
    """

    def __init__(self, achieved_rayleigh: float, target: float, step: int | None = None):
        self.achieved_rayleigh = achieved_rayleigh
        self.target = target
        self.step = step
        self.partial_trace = None
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"Rayleigh condition unreachable{where}: best {achieved_rayleigh:.6g} "
            f"> target {target:.6g} (epsilon too tight for this dimension?)"
        )


class SpectrumConsistencyError(PspinError):
    """The projected Hessian spectrum lacked the expected zero mode along sigma."""


class TraceMismatchError(PspinError):
    """A trace file does not belong to the disorder it is being verified against."""


class ConfigError(PspinError):
    """Invalid experiment configuration; lists every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
