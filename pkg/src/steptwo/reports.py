"""Result containers shared by the scan modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import to_jsonable


@dataclass
class RatioReport:
    """Outcome of a ratio scan over (covector, scale) samples.

    `inf_ratio` / `sup_ratio` are the extreme observed ratios; `argmin` /
    `argmax` record where they occurred (as plain dicts so the report is
    serializable).  `violations` counts ratios below `threshold` (when a
    threshold applies).
    """

    group: str
    n_samples: int
    seed: int
    N: float | None = None
    s_grid: list = field(default_factory=list)
    inf_ratio: float | None = None
    sup_ratio: float | None = None
    argmin: dict | None = None
    argmax: dict | None = None
    violations: int = 0
    threshold: float | None = None
    extra: dict = field(default_factory=dict)

    def to_jsonable(self):
        return {
            "group": self.group, "n_samples": self.n_samples, "seed": self.seed,
            "N": self.N, "s_grid": to_jsonable(self.s_grid),
            "inf_ratio": self.inf_ratio, "sup_ratio": self.sup_ratio,
            "argmin": to_jsonable(self.argmin), "argmax": to_jsonable(self.argmax),
            "violations": self.violations, "threshold": self.threshold,
            "extra": to_jsonable(self.extra),
        }


@dataclass(frozen=True)
class SetLevelResult:
    """Monte Carlo weighted masses of an intermediate-point set versus its base set."""

    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    n_samples: int
    s: float
    extra: dict = field(default_factory=dict)

    def to_jsonable(self):
        return to_jsonable({
            "lhs": self.lhs, "lhs_stderr": self.lhs_stderr,
            "rhs": self.rhs, "rhs_stderr": self.rhs_stderr,
            "n_samples": self.n_samples, "s": self.s, "extra": self.extra,
        })


@dataclass(frozen=True)
class SmallTimeFit:
    """Extracted small-time constant C * Jac^{-1/2} and fit diagnostics."""

    value: float
    log_value: float
    exponent: float
    h_values: np.ndarray
    targets: np.ndarray
    shift_last: float

    def to_jsonable(self):
        return to_jsonable({
            "value": self.value, "log_value": self.log_value,
            "exponent": self.exponent, "h_values": self.h_values,
            "targets": self.targets, "shift_last": self.shift_last,
        })


@dataclass(frozen=True)
class QbeEstimate:
    """Gradient-commutation ratio with a delta-method confidence interval."""

    ratio: float
    ci_low: float
    ci_high: float
    numerator: float
    denominator: float
    n_paths: int

    def to_jsonable(self):
        return to_jsonable({
            "ratio": self.ratio, "ci_low": self.ci_low, "ci_high": self.ci_high,
            "numerator": self.numerator, "denominator": self.denominator,
            "n_paths": self.n_paths,
        })
