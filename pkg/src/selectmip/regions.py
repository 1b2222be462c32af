"""Decision-region geometry and the pure inference rules built on it.

A selective classifier here is a partition of the (predictive mean, model
uncertainty) plane into five areas, controlled by four learned thresholds:

    A1:  mu < 0.5 - mu_L  and  sigma <  sigma_L    automatic positive decision
    A2:  mu < 0.5 - mu_L  and  sigma >= sigma_L    reject (too uncertain)
    A3:  0.5 - mu_L <= mu <= 0.5 + mu_R            reject (mean too ambiguous)
    A4:  mu > 0.5 + mu_R  and  sigma <  sigma_R    automatic negative decision
    A5:  mu > 0.5 + mu_R  and  sigma >= sigma_R    reject (too uncertain)

Polarity convention used throughout the package: a Positive decision is
counted correct when the true label is 0, and a Negative decision is correct
when the true label is 1.  Low predictive mean therefore maps to the positive
side.  Datasets encoded the other way round can set ``label_flip`` at load
time (see :mod:`selectmip.data`).

The cost-sensitive variant keeps the same five areas but adds one monetary
threshold per area: an instance whose value is below its area's threshold is
decided automatically (with the area's polarity; the middle area decides by
which side of 0.5 the mean falls), everything else is rejected for review.

All functions here are pure and operate on immutable values, so they are safe
for unrestricted parallel use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Hashable

__all__ = [
    "Region",
    "DecisionKind",
    "Decision",
    "POSITIVE",
    "NEGATIVE",
    "REJECT",
    "UncertaintyEstimate",
    "LabeledInstance",
    "ThresholdSolution",
    "ValueThresholds",
    "RegionIndicators",
    "SurfaceIndicators",
    "region_indicators",
    "surface_indicators",
    "assign_region",
    "decide_mipsc",
    "decide_mipcsc",
]

# Maximum possible standard deviation of values confined to [0, 1].
MAX_SIGMA = 0.5
_SIGMA_TOL = 1e-9


class Region(enum.Enum):
    """One of the five decision areas."""

    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    A5 = "A5"


class DecisionKind(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    REJECT = "reject"


@dataclass(frozen=True)
class Decision:
    """Outcome for one instance.

    ``rule_index`` is set only for cost-sensitive decisions and names which of
    the three positive (or negative) rules fired: 1 for the low-uncertainty
    area, 2 for the high-uncertainty area, 3 for the middle area.
    """

    kind: DecisionKind
    rule_index: int | None = None

    @property
    def is_reject(self) -> bool:
        return self.kind is DecisionKind.REJECT

    @property
    def is_positive(self) -> bool:
        return self.kind is DecisionKind.POSITIVE

    @property
    def is_negative(self) -> bool:
        return self.kind is DecisionKind.NEGATIVE

    def correct_for(self, y: int) -> bool:
        """Whether this decision is correct for true label ``y``.

        Rejects are never "correct" in this sense; use the counterfactual
        machinery in :mod:`selectmip.metrics` to score them.
        """
        if self.kind is DecisionKind.POSITIVE:
            return y == 0
        if self.kind is DecisionKind.NEGATIVE:
            return y == 1
        return False


POSITIVE = Decision(DecisionKind.POSITIVE)
NEGATIVE = Decision(DecisionKind.NEGATIVE)
REJECT = Decision(DecisionKind.REJECT)


@dataclass(frozen=True)
class UncertaintyEstimate:
    """Predictive mean and model uncertainty of one instance.

    ``mu`` is the empirical mean of the stochastic forward passes and lives in
    [0, 1]; ``sigma`` is their population standard deviation, which for values
    in [0, 1] cannot exceed 0.5.
    """

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.mu <= 1.0):
            raise ValueError(f"mu must be in [0, 1], got {self.mu}")
        if not (0.0 <= self.sigma <= MAX_SIGMA + _SIGMA_TOL):
            raise ValueError(f"sigma must be in [0, 0.5], got {self.sigma}")


@dataclass(frozen=True)
class LabeledInstance:
    """Instance as consumed by solvers, baselines and metrics."""

    id: Hashable
    estimate: UncertaintyEstimate
    y: int
    value: float | None = None

    def __post_init__(self) -> None:
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y}")
        if self.value is not None and not (self.value >= 0.0):
            raise ValueError(f"value must be nonnegative, got {self.value}")

    @property
    def mu(self) -> float:
        return self.estimate.mu

    @property
    def sigma(self) -> float:
        return self.estimate.sigma


@dataclass(frozen=True)
class ThresholdSolution:
    """The four learned decision boundaries.

    ``mu_L`` and ``mu_R`` are offsets from 0.5: the left area ends at
    ``0.5 - mu_L`` and the right area starts at ``0.5 + mu_R``.  Offsets may
    be negative, but the two vertical boundaries must not cross
    (``mu_L + mu_R >= 0``), which keeps the left and right areas disjoint and
    inference unambiguous.
    """

    mu_L: float
    mu_R: float
    sigma_L: float
    sigma_R: float

    def __post_init__(self) -> None:
        for name in ("mu_L", "mu_R", "sigma_L", "sigma_R"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mu_L + self.mu_R < 0.0:
            raise ValueError(
                "thresholds overlap: need mu_L + mu_R >= 0, got "
                f"mu_L={self.mu_L}, mu_R={self.mu_R}"
            )

    @property
    def left_boundary(self) -> float:
        return 0.5 - self.mu_L

    @property
    def right_boundary(self) -> float:
        return 0.5 + self.mu_R


@dataclass(frozen=True)
class ValueThresholds:
    """Per-area monetary rejection cutoffs for cost-sensitive decisions.

    Sentinel values below the smallest / above the largest observed value are
    legitimate and encode "reject everything / nothing in this area".
    """

    t_DL: float
    t_UL: float
    t_M: float
    t_DR: float
    t_UR: float

    def __post_init__(self) -> None:
        for name in ("t_DL", "t_UL", "t_M", "t_DR", "t_UR"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class RegionIndicators:
    """Boolean area indicators for one estimate under given thresholds."""

    L: bool
    R: bool
    D_L: bool
    D_R: bool
    Q: bool


@dataclass(frozen=True)
class SurfaceIndicators:
    """Boolean value-below-threshold indicators, one per area."""

    S_DL: bool
    S_UL: bool
    S_M: bool
    S_DR: bool
    S_UR: bool


def region_indicators(est: UncertaintyEstimate, th: ThresholdSolution) -> RegionIndicators:
    """Evaluate the five membership indicators with strict boundary semantics."""
    return RegionIndicators(
        L=est.mu < th.left_boundary,
        R=est.mu > th.right_boundary,
        D_L=est.sigma < th.sigma_L,
        D_R=est.sigma < th.sigma_R,
        Q=est.mu > 0.5,
    )


def surface_indicators(value: float, vt: ValueThresholds) -> SurfaceIndicators:
    return SurfaceIndicators(
        S_DL=value < vt.t_DL,
        S_UL=value < vt.t_UL,
        S_M=value < vt.t_M,
        S_DR=value < vt.t_DR,
        S_UR=value < vt.t_UR,
    )


def assign_region(est: UncertaintyEstimate, th: ThresholdSolution) -> Region:
    """Map an estimate to exactly one of the five areas.

    Membership tests are strict exactly as the boundary definitions state:
    an instance sitting precisely on a boundary belongs to the middle /
    high-uncertainty side.
    """
    ind = region_indicators(est, th)
    if ind.L:
        return Region.A1 if ind.D_L else Region.A2
    if ind.R:
        return Region.A4 if ind.D_R else Region.A5
    return Region.A3


def decide_mipsc(est: UncertaintyEstimate, th: ThresholdSolution) -> Decision:
    """Accuracy-oriented rule: decide only in the confident outer areas."""
    region = assign_region(est, th)
    if region is Region.A1:
        return POSITIVE
    if region is Region.A4:
        return NEGATIVE
    return REJECT


def decide_mipcsc(
    inst: LabeledInstance, th: ThresholdSolution, vt: ValueThresholds
) -> Decision:
    """Cost-sensitive rule: every area decides instances cheaper than its cutoff.

    The middle area decides by the side of 0.5 the mean falls on (exactly 0.5
    counts as the positive side); all other areas decide with their polarity.
    Instances at or above their area's cutoff are rejected for review.
    """
    if inst.value is None:
        raise ValueError(f"instance {inst.id!r} has no value; cost-sensitive decisions need one")
    region = assign_region(inst.estimate, th)
    value = inst.value
    if region is Region.A1:
        return Decision(DecisionKind.POSITIVE, 1) if value < vt.t_DL else REJECT
    if region is Region.A2:
        return Decision(DecisionKind.POSITIVE, 2) if value < vt.t_UL else REJECT
    if region is Region.A4:
        return Decision(DecisionKind.NEGATIVE, 1) if value < vt.t_DR else REJECT
    if region is Region.A5:
        return Decision(DecisionKind.NEGATIVE, 2) if value < vt.t_UR else REJECT
    if value < vt.t_M:
        if inst.mu > 0.5:
            return Decision(DecisionKind.NEGATIVE, 3)
        return Decision(DecisionKind.POSITIVE, 3)
    return REJECT
