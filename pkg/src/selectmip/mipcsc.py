"""Exact solver for the cost-sensitive threshold-learning problem.

Decisions here carry money.  Deciding an instance earns or loses a multiple
of its value depending on whether the decision matches the true class;
rejecting it hands it to a human reviewer who resolves it correctly, so a
reject earns the true-class benefit minus a flat review cost.  The training
problem maximizes total earnings over the four region thresholds plus one
value cutoff per region, with at most ``r_cap`` rejections.

The search mirrors :mod:`selectmip.mipsc`: the objective is piecewise
constant with breakpoints at data values, so enumerating candidate cuts is
exact.  For every vertical cut each side is split by a sigma cut into its
low/high-uncertainty regions, each region contributes a frontier
"rejection count -> best contribution" over its candidate value cutoffs, and
the five frontiers merge by max-plus convolution truncated at the budget.

Worst-case work is O(m^4); ``coarsen_to`` (default 64 cuts per threshold
dimension) keeps realistic training splits tractable and only activates when
a dimension has more distinct values than the cap, so small instances stay
exact — which is what the brute-force oracle certifies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._lp import LpWriter
from .mipsc import LpExportConfig, SolverConfig, candidate_cuts, _validate_lp_config
from .regions import (
    Decision,
    LabeledInstance,
    ThresholdSolution,
    ValueThresholds,
    decide_mipcsc,
)

__all__ = [
    "CostModel",
    "DEFAULT_COST_MODEL",
    "DEFAULT_COARSEN",
    "MipcscSolution",
    "RegionFrontier",
    "objective_mipcsc",
    "region_value_frontier",
    "solve_mipcsc",
    "export_mipcsc_lp",
]

# Cut-count cap per threshold dimension used when the config leaves it unset.
DEFAULT_COARSEN = 64

# Reported threshold for regions the optimum leaves empty; any value works.
SENTINEL_VALUE_CUT = 0.0


@dataclass(frozen=True)
class CostModel:
    """Benefit/cost multipliers per decision outcome plus the review cost.

    ``w_tp`` scales the benefit of accepting a legitimate (label 0) instance,
    ``w_tn`` the benefit of stopping a fraudulent (label 1) one, ``w_fn`` the
    cost of stopping a legitimate one, ``w_fp`` the cost of accepting a
    fraudulent one, and ``c`` is the flat cost of sending an instance to
    review.
    """

    w_tp: float = 0.2
    w_tn: float = 0.0
    w_fn: float = 3.0
    w_fp: float = 2.4
    c: float = 3.0

    def __post_init__(self) -> None:
        for name in ("w_tp", "w_tn", "w_fn", "w_fp", "c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def decided_gain(self, positive: bool, y: int, value: float) -> float:
        if positive:
            return self.w_tp * value if y == 0 else -self.w_fp * value
        return self.w_tn * value if y == 1 else -self.w_fn * value

    def reject_gain(self, y: int, value: float) -> float:
        base = self.w_tp * value if y == 0 else self.w_tn * value
        return base - self.c


DEFAULT_COST_MODEL = CostModel()


@dataclass(frozen=True)
class MipcscSolution:
    thresholds: ThresholdSolution
    value_thresholds: ValueThresholds
    decisions: list[Decision]
    objective: float
    rejections: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "thresholds": {
                    "mu_L": self.thresholds.mu_L,
                    "mu_R": self.thresholds.mu_R,
                    "sigma_L": self.thresholds.sigma_L,
                    "sigma_R": self.thresholds.sigma_R,
                },
                "value_thresholds": {
                    "t_DL": self.value_thresholds.t_DL,
                    "t_UL": self.value_thresholds.t_UL,
                    "t_M": self.value_thresholds.t_M,
                    "t_DR": self.value_thresholds.t_DR,
                    "t_UR": self.value_thresholds.t_UR,
                },
                "objective": self.objective,
                "rejections": self.rejections,
            },
            indent=2,
        )


def objective_mipcsc(
    decisions: Sequence[Decision], instances: Sequence[LabeledInstance], cm: CostModel
) -> float:
    """Total earnings of a decision vector under the cost model.

    Rejected instances earn their true-class benefit minus the review cost:
    human review is assumed to resolve them correctly.  Summation uses
    ``math.fsum`` so the result does not depend on instance order beyond the
    exact value.
    """
    if len(decisions) != len(instances):
        raise ValueError(f"{len(decisions)} decisions vs {len(instances)} instances")
    contributions = []
    for d, inst in zip(decisions, instances):
        if inst.value is None:
            raise ValueError(f"instance {inst.id!r} has no value")
        if d.is_reject:
            contributions.append(cm.reject_gain(inst.y, inst.value))
        else:
            contributions.append(cm.decided_gain(d.is_positive, inst.y, inst.value))
    return math.fsum(contributions)


@dataclass(frozen=True)
class RegionFrontier:
    """Best contribution per exact rejection count within one region.

    Arrays are aligned and sorted by ascending rejection count; each entry
    records the value cutoff achieving it.  Entries are exact per count;
    merging frontiers by max-plus convolution under a shared budget preserves
    correctness because contributions add and counts add.
    """

    rejections: np.ndarray
    contributions: np.ndarray
    value_cuts: np.ndarray


def _value_frontier_arrays(
    values: np.ndarray,
    decided_gain: np.ndarray,
    reject_gain: np.ndarray,
    coarsen_to: int | None,
) -> RegionFrontier:
    n = values.size
    if n == 0:
        return RegionFrontier(
            np.array([0]), np.array([0.0]), np.array([SENTINEL_VALUE_CUT])
        )
    order = np.argsort(values, kind="stable")
    ts = values[order]
    decided_prefix = np.concatenate([[0.0], np.cumsum(decided_gain[order])])
    reject_suffix = np.concatenate([np.cumsum(reject_gain[order][::-1])[::-1], [0.0]])
    cuts = candidate_cuts(ts, coarsen_to)
    ks = np.empty(cuts.size, dtype=int)
    vs = np.empty(cuts.size)
    for pos, cut in enumerate(cuts):
        a = int(np.searchsorted(ts, cut, side="left"))
        ks[pos] = n - a
        vs[pos] = decided_prefix[a] + reject_suffix[a]
    flip = np.argsort(ks, kind="stable")
    return RegionFrontier(ks[flip], vs[flip], cuts[flip])


def region_value_frontier(
    region_instances: Sequence[LabeledInstance],
    rule: str,
    cm: CostModel,
    coarsen_to: int | None = None,
) -> RegionFrontier:
    """Frontier of one region whose membership is already fixed.

    ``rule`` names the region's polarity: ``"positive"``, ``"negative"``, or
    ``"middle"`` (per-instance polarity by which side of 0.5 the mean falls).
    Instances below a candidate value cutoff are decided, the rest rejected.
    """
    if rule not in ("positive", "negative", "middle"):
        raise ValueError(f"unknown rule {rule!r}")
    for inst in region_instances:
        if inst.value is None:
            raise ValueError(f"instance {inst.id!r} has no value")
    values = np.array([inst.value for inst in region_instances], dtype=float)
    y = np.array([inst.y for inst in region_instances], dtype=int)
    if rule == "middle":
        positive = np.array([inst.mu <= 0.5 for inst in region_instances])
    else:
        positive = np.full(values.shape, rule == "positive")
    decided = np.array(
        [cm.decided_gain(bool(p), int(label), float(v)) for p, label, v in zip(positive, y, values)]
    )
    rejected = np.array([cm.reject_gain(int(label), float(v)) for label, v in zip(y, values)])
    return _value_frontier_arrays(values, decided, rejected, coarsen_to)


def _merge_sparse(
    k1: np.ndarray, v1: np.ndarray, k2: np.ndarray, v2: np.ndarray, cap: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Max-plus convolution truncated at ``cap``.

    Returns (k, v, i1, i2) with k ascending and one best entry per k; ties
    resolve to the smallest (i1, i2) pair, which keeps merges deterministic.
    """
    kt = (k1[:, None] + k2[None, :]).ravel()
    vt = (v1[:, None] + v2[None, :]).ravel()
    flat = np.flatnonzero((kt <= cap) & np.isfinite(vt))
    kt, vt = kt[flat], vt[flat]
    order = np.lexsort((flat, -vt, kt))
    ks_sorted = kt[order]
    uniq, first = np.unique(ks_sorted, return_index=True)
    sel = order[first]
    n2 = k2.size
    return uniq, vt[sel], flat[sel] // n2, flat[sel] % n2


@dataclass
class _SideBest:
    """Best left (or right) contribution per rejection count for one mu cut."""

    val: np.ndarray  # dense over k, -inf where unachievable
    sigma_idx: np.ndarray
    low_idx: np.ndarray  # entry into the low-uncertainty region frontier
    high_idx: np.ndarray
    sigma_cuts: np.ndarray  # candidate sigma cuts of this side region
    empty: bool


def _build_side_best(
    region_idx: np.ndarray,
    sigma: np.ndarray,
    values: np.ndarray,
    decided: np.ndarray,
    rejected: np.ndarray,
    cap: int,
    coarsen_to: int | None,
) -> _SideBest:
    val = np.full(cap + 1, -np.inf)
    sigma_idx = np.full(cap + 1, -1, dtype=int)
    low_idx = np.full(cap + 1, -1, dtype=int)
    high_idx = np.full(cap + 1, -1, dtype=int)
    if region_idx.size == 0:
        val[0] = 0.0
        return _SideBest(val, sigma_idx, low_idx, high_idx, np.empty(0), empty=True)
    s = sigma[region_idx]
    t = values[region_idx]
    d = decided[region_idx]
    r = rejected[region_idx]
    sigma_cuts = candidate_cuts(s, coarsen_to)
    for si, s_cut in enumerate(sigma_cuts):
        low = s < s_cut
        f_low = _value_frontier_arrays(t[low], d[low], r[low], coarsen_to)
        f_high = _value_frontier_arrays(t[~low], d[~low], r[~low], coarsen_to)
        ks, vs, i_low, i_high = _merge_sparse(
            f_low.rejections, f_low.contributions, f_high.rejections, f_high.contributions, cap
        )
        better = vs > val[ks]
        upd = ks[better]
        val[upd] = vs[better]
        sigma_idx[upd] = si
        low_idx[upd] = i_low[better]
        high_idx[upd] = i_high[better]
    return _SideBest(val, sigma_idx, low_idx, high_idx, sigma_cuts, empty=False)


def solve_mipcsc(
    instances: Sequence[LabeledInstance], cfg: SolverConfig, cm: CostModel = DEFAULT_COST_MODEL
) -> MipcscSolution:
    """Globally optimal thresholds and value cutoffs under the budget.

    Always feasible (rejecting nobody is allowed at any ``r_cap >= 0``).
    Ties between optima break by fewer rejections, then towards the
    lexicographically smaller (mu_L, mu_R) boundary pair; deeper ties follow
    the deterministic ascending-cut merge order.
    """
    m = len(instances)
    if m < 1:
        raise ValueError("need at least one instance")
    if cfg.r_cap > m:
        raise ValueError(f"r_cap={cfg.r_cap} exceeds the number of instances {m}")
    coarsen = cfg.coarsen_to if cfg.coarsen_to is not None else DEFAULT_COARSEN
    cap = min(cfg.r_cap, m)

    mu = np.array([inst.mu for inst in instances])
    sigma = np.array([inst.sigma for inst in instances])
    y = np.array([inst.y for inst in instances], dtype=int)
    values = np.array(
        [inst.value if inst.value is not None else np.nan for inst in instances], dtype=float
    )
    if np.isnan(values).any():
        missing = [inst.id for inst in instances if inst.value is None]
        raise ValueError(f"instances without values: {missing[:5]}")

    pos_gain = np.where(y == 0, cm.w_tp * values, -cm.w_fp * values)
    neg_gain = np.where(y == 1, cm.w_tn * values, -cm.w_fn * values)
    rej_gain = np.where(y == 0, cm.w_tp * values, cm.w_tn * values) - cm.c
    mid_gain = np.where(mu > 0.5, neg_gain, pos_gain)

    cuts = candidate_cuts(mu, coarsen)
    left_best = [
        _build_side_best(np.flatnonzero(mu < c), sigma, values, pos_gain, rej_gain, cap, coarsen)
        for c in cuts
    ]
    right_best = [
        _build_side_best(np.flatnonzero(mu > c), sigma, values, neg_gain, rej_gain, cap, coarsen)
        for c in cuts
    ]

    best_obj = -np.inf
    best_pick: tuple[int, int, int] | None = None  # (i, j, total rejections)
    best_tie: tuple[float, float] | None = None  # (mu_L, mu_R)
    for i in range(len(cuts)):
        lk = np.flatnonzero(np.isfinite(left_best[i].val))
        lv = left_best[i].val[lk]
        for j in range(i, len(cuts)):
            mid = np.flatnonzero((mu >= cuts[i]) & (mu <= cuts[j]))
            f_mid = _value_frontier_arrays(
                values[mid], mid_gain[mid], rej_gain[mid], coarsen
            )
            ab_k, ab_v, _, _ = _merge_sparse(lk, lv, f_mid.rejections, f_mid.contributions, cap)
            rk = np.flatnonzero(np.isfinite(right_best[j].val))
            rv = right_best[j].val[rk]
            k_fin, v_fin, _, _ = _merge_sparse(ab_k, ab_v, rk, rv, cap)
            if k_fin.size == 0:
                continue
            pos = int(np.argmax(v_fin))  # first max = fewest rejections on ties
            obj, ktot = float(v_fin[pos]), int(k_fin[pos])
            tie = (0.5 - float(cuts[i]), float(cuts[j]) - 0.5)
            if (
                obj > best_obj
                or (
                    obj == best_obj
                    and best_pick is not None
                    and (ktot, tie) < (best_pick[2], best_tie)
                )
            ):
                best_obj, best_pick, best_tie = obj, (i, j, ktot), tie

    assert best_pick is not None
    i, j, ktot = best_pick
    thresholds, value_thresholds = _reconstruct(
        i,
        j,
        ktot,
        cuts,
        left_best,
        right_best,
        mu,
        sigma,
        values,
        pos_gain,
        neg_gain,
        mid_gain,
        rej_gain,
        cap,
        coarsen,
    )
    decisions = [decide_mipcsc(inst, thresholds, value_thresholds) for inst in instances]
    rejections = sum(1 for d in decisions if d.is_reject)
    objective = objective_mipcsc(decisions, instances, cm)
    return MipcscSolution(thresholds, value_thresholds, decisions, objective, rejections)


def _side_cuts(
    side: _SideBest,
    k: int,
    region_idx: np.ndarray,
    sigma: np.ndarray,
    values: np.ndarray,
    decided: np.ndarray,
    rejected: np.ndarray,
    coarsen_to: int | None,
) -> tuple[float, float, float]:
    """Recover (sigma cut, low value cut, high value cut) behind entry ``k``."""
    from .mipsc import EMPTY_REGION_SIGMA

    if side.empty:
        return EMPTY_REGION_SIGMA, SENTINEL_VALUE_CUT, SENTINEL_VALUE_CUT
    si = int(side.sigma_idx[k])
    s_cut = float(side.sigma_cuts[si])
    s = sigma[region_idx]
    t = values[region_idx]
    d = decided[region_idx]
    r = rejected[region_idx]
    low = s < s_cut
    f_low = _value_frontier_arrays(t[low], d[low], r[low], coarsen_to)
    f_high = _value_frontier_arrays(t[~low], d[~low], r[~low], coarsen_to)
    return (
        s_cut,
        float(f_low.value_cuts[int(side.low_idx[k])]),
        float(f_high.value_cuts[int(side.high_idx[k])]),
    )


def _reconstruct(
    i: int,
    j: int,
    ktot: int,
    cuts: np.ndarray,
    left_best: list[_SideBest],
    right_best: list[_SideBest],
    mu: np.ndarray,
    sigma: np.ndarray,
    values: np.ndarray,
    pos_gain: np.ndarray,
    neg_gain: np.ndarray,
    mid_gain: np.ndarray,
    rej_gain: np.ndarray,
    cap: int,
    coarsen: int | None,
) -> tuple[ThresholdSolution, ValueThresholds]:
    """Re-run the winning pair's merges and walk the payloads back to cuts."""
    left = left_best[i]
    right = right_best[j]
    lk = np.flatnonzero(np.isfinite(left.val))
    lv = left.val[lk]
    mid = np.flatnonzero((mu >= cuts[i]) & (mu <= cuts[j]))
    f_mid = _value_frontier_arrays(values[mid], mid_gain[mid], rej_gain[mid], coarsen)
    ab_k, ab_v, ab_i1, ab_i2 = _merge_sparse(lk, lv, f_mid.rejections, f_mid.contributions, cap)
    rk = np.flatnonzero(np.isfinite(right.val))
    rv = right.val[rk]
    k_fin, _, fin_i1, fin_i2 = _merge_sparse(ab_k, ab_v, rk, rv, cap)
    pos = int(np.flatnonzero(k_fin == ktot)[0])
    ab_entry = int(fin_i1[pos])
    k_right = int(rk[int(fin_i2[pos])])
    k_left = int(lk[int(ab_i1[ab_entry])])
    t_M = float(f_mid.value_cuts[int(ab_i2[ab_entry])])

    left_idx = np.flatnonzero(mu < cuts[i])
    right_idx = np.flatnonzero(mu > cuts[j])
    sig_l, t_DL, t_UL = _side_cuts(
        left, k_left, left_idx, sigma, values, pos_gain, rej_gain, coarsen
    )
    sig_r, t_DR, t_UR = _side_cuts(
        right, k_right, right_idx, sigma, values, neg_gain, rej_gain, coarsen
    )
    thresholds = ThresholdSolution(
        mu_L=0.5 - float(cuts[i]), mu_R=float(cuts[j]) - 0.5, sigma_L=sig_l, sigma_R=sig_r
    )
    return thresholds, ValueThresholds(t_DL=t_DL, t_UL=t_UL, t_M=t_M, t_DR=t_DR, t_UR=t_UR)
