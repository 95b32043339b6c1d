"""Result containers shared by the bound solvers and the command line.

A BoundReport is a plain-data record: everything in it serializes to JSON
(lists, strings, numbers, dicts) so reports round-trip through files
bit-for-bit.  Gap convention: |(upper - lower) / lower|.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

BOUND_TYPES = ("lower", "upper", "classic")
INVERSION_TOL = 1e-6


@dataclass
class BoundReport:
    bound_type: str
    value: float
    solution: list
    status: str = "optimal"
    iterations: int = 0
    trace: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.bound_type not in BOUND_TYPES:
            raise ValueError(f"bound_type must be one of {BOUND_TYPES}")
        self.value = float(self.value)
        self.solution = [float(v) for v in self.solution]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "BoundReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        return cls.from_dict(json.loads(text))


def relative_gap(lower: float, upper: float) -> float:
    if lower == 0.0:
        return float("inf") if upper != lower else 0.0
    return abs((upper - lower) / lower)


@dataclass
class PairedReport:
    """Lower and upper bound on the same instance, with the gap between."""

    lower: BoundReport
    upper: BoundReport
    gap: Optional[float] = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.gap is None:
            self.gap = relative_gap(self.lower.value, self.upper.value)
        if self.lower.value > self.upper.value + INVERSION_TOL:
            if "bound inversion" not in self.flags:
                self.flags.append("bound inversion")

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.to_dict(),
            "upper": self.upper.to_dict(),
            "gap": self.gap,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PairedReport":
        return cls(
            lower=BoundReport.from_dict(d["lower"]),
            upper=BoundReport.from_dict(d["upper"]),
            gap=d.get("gap"),
            flags=list(d.get("flags", [])),
        )
