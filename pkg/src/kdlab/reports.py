"""Shared result container for inequality and identity checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

__all__ = ["InequalityReport"]


@dataclass
class InequalityReport:
    """Outcome of one two-sided estimate evaluation.

    lhs and rhs are the two sides as computed by quadrature,
    empirical_constant is the measured ratio in whichever direction the
    estimate is stated, verdict is one of "pass", "fail", "inapplicable"
    or "precondition-failed", probe describes the density the check ran
    on, and notes carries truncation flags and named slack values.
    """

    name: str
    lhs: float
    rhs: float
    empirical_constant: Optional[float]
    verdict: str
    probe: str = ""
    notes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        allowed = {"pass", "fail", "inapplicable", "precondition-failed"}
        if self.verdict not in allowed:
            raise ValueError(f"verdict must be one of {sorted(allowed)}")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"
