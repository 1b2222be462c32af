"""Brute-force reference solvers for certifying the enumeration solvers.

These evaluate every candidate threshold tuple outright — no frontiers, no
incremental tricks — so they are a genuinely independent ground truth for
small instances.  Guards keep the tuple counts sane; override them only with
patience.  Tuple enumeration is pure and could run in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .mipcsc import CostModel, objective_mipcsc
from .mipsc import SolverConfig, candidate_cuts, objective_mipsc
from .regions import (
    LabeledInstance,
    ThresholdSolution,
    ValueThresholds,
    decide_mipcsc,
    decide_mipsc,
)

__all__ = ["OracleResult", "brute_force_mipsc", "brute_force_mipcsc"]

MIPSC_GUARD = 20
MIPCSC_GUARD = 6


@dataclass(frozen=True)
class OracleResult:
    objective: float
    thresholds: ThresholdSolution
    exhaustive_count: int
    value_thresholds: ValueThresholds | None = None


def _arrays(instances: Sequence[LabeledInstance]):
    mu = np.array([inst.mu for inst in instances])
    sigma = np.array([inst.sigma for inst in instances])
    y = np.array([inst.y for inst in instances], dtype=int)
    return mu, sigma, y


def brute_force_mipsc(
    instances: Sequence[LabeledInstance], cfg: SolverConfig, allow_large: bool = False
) -> OracleResult:
    """Exhaustive search over all candidate 4-tuples.

    Non-disjoint boundary pairs and capacity-violating assignments are
    skipped; ``exhaustive_count`` still reports the full product of
    candidate-set sizes.  Objective comparisons use exact integer arithmetic
    and tie-break like the solver (fewer rejections, then smaller thresholds).
    """
    m = len(instances)
    if m > MIPSC_GUARD and not allow_large:
        raise ValueError(f"m={m} exceeds the oracle guard {MIPSC_GUARD}; pass allow_large=True")
    mu, sigma, y = _arrays(instances)
    mu_cuts = candidate_cuts(mu)
    sig_cuts = candidate_cuts(sigma)

    reg = Fraction(1.0 - cfg.rho)
    scale = reg.denominator * m
    if (m * scale + reg.numerator * m) >= 2**62:
        raise ValueError("instance too large for exact int64 oracle arithmetic")

    # Per sigma cut: how many of a side are accepted and how many are wrong.
    below = sigma[None, :] < sig_cuts[:, None]  # (n_sig, m)
    infeasible = np.iinfo(np.int64).max

    best: tuple | None = None  # (key, rejections, mu_L, mu_R, sigma_L, sigma_R)
    for i, cut_left in enumerate(mu_cuts):
        left = mu < cut_left
        accept_l = (below & left[None, :]).sum(axis=1)
        wrong_l = (below & left[None, :] & (y == 1)[None, :]).sum(axis=1)
        for j in range(i, len(mu_cuts)):
            right = mu > mu_cuts[j]
            accept_r = (below & right[None, :]).sum(axis=1)
            wrong_r = (below & right[None, :] & (y == 0)[None, :]).sum(axis=1)
            mist = wrong_l[:, None] + wrong_r[None, :]
            rej = m - accept_l[:, None] - accept_r[None, :]
            key = mist.astype(np.int64) * scale + reg.numerator * rej.astype(np.int64)
            key = np.where(rej <= cfg.r_cap, key, infeasible)
            kmin = key.min()
            if kmin == infeasible:
                continue
            tie = np.argwhere(key == kmin)
            rej_at = rej[tie[:, 0], tie[:, 1]]
            si, sj = tie[int(np.argmin(rej_at))]  # argmin takes the first: smaller sigma cuts
            cand = (
                int(kmin),
                int(rej[si, sj]),
                0.5 - float(cut_left),
                float(mu_cuts[j]) - 0.5,
                float(sig_cuts[si]),
                float(sig_cuts[sj]),
            )
            if best is None or cand < best:
                best = cand

    assert best is not None
    thresholds = ThresholdSolution(mu_L=best[2], mu_R=best[3], sigma_L=best[4], sigma_R=best[5])
    decisions = [decide_mipsc(inst.estimate, thresholds) for inst in instances]
    objective = objective_mipsc(decisions, [inst.y for inst in instances], cfg.rho)
    return OracleResult(
        objective=objective,
        thresholds=thresholds,
        exhaustive_count=len(mu_cuts) ** 2 * len(sig_cuts) ** 2,
    )


def brute_force_mipcsc(
    instances: Sequence[LabeledInstance],
    cfg: SolverConfig,
    cm: CostModel,
    allow_large: bool = False,
) -> OracleResult:
    """Exhaustive search over all candidate 9-tuples (about (m+2)^9 of them)."""
    m = len(instances)
    if m > MIPCSC_GUARD and not allow_large:
        raise ValueError(f"m={m} exceeds the oracle guard {MIPCSC_GUARD}; pass allow_large=True")
    mu, sigma, y = _arrays(instances)
    values = np.array([inst.value for inst in instances], dtype=float)
    if np.isnan(values).any():
        raise ValueError("all instances need values")

    mu_cuts = candidate_cuts(mu)
    sig_cuts = candidate_cuts(sigma)
    val_cuts = candidate_cuts(values)
    nv = len(val_cuts)

    pos_gain = np.where(y == 0, cm.w_tp * values, -cm.w_fp * values)
    neg_gain = np.where(y == 1, cm.w_tn * values, -cm.w_fn * values)
    rej_gain = np.where(y == 0, cm.w_tp * values, cm.w_tn * values) - cm.c
    mid_gain = np.where(mu > 0.5, neg_gain, pos_gain)
    value_below = values[None, :] < val_cuts[:, None]  # (nv, m)
    shapes = [
        (nv, 1, 1, 1, 1),
        (1, nv, 1, 1, 1),
        (1, 1, nv, 1, 1),
        (1, 1, 1, nv, 1),
        (1, 1, 1, 1, nv),
    ]

    def region_tables(mask: np.ndarray, gain: np.ndarray, axis: int):
        decided = value_below & mask[None, :]
        contrib = decided @ gain + (~decided & mask[None, :]) @ rej_gain
        rejected = (~decided & mask[None, :]).sum(axis=1)
        return contrib.reshape(shapes[axis]), rejected.reshape(shapes[axis])

    best_obj = -np.inf
    best_rej = -1
    best_tuple: tuple | None = None
    for i, cut_left in enumerate(mu_cuts):
        left = mu < cut_left
        for j in range(i, len(mu_cuts)):
            right = mu > mu_cuts[j]
            middle = ~left & ~right
            for si, s_l in enumerate(sig_cuts):
                low_l = sigma < s_l
                for sj, s_r in enumerate(sig_cuts):
                    low_r = sigma < s_r
                    c1, k1 = region_tables(left & low_l, pos_gain, 0)
                    c2, k2 = region_tables(left & ~low_l, pos_gain, 1)
                    c3, k3 = region_tables(middle, mid_gain, 2)
                    c4, k4 = region_tables(right & low_r, neg_gain, 3)
                    c5, k5 = region_tables(right & ~low_r, neg_gain, 4)
                    total = c1 + c2 + c3 + c4 + c5
                    rej = k1 + k2 + k3 + k4 + k5
                    feasible = rej <= cfg.r_cap
                    if not feasible.any():
                        continue
                    masked = np.where(feasible, total, -np.inf)
                    obj = float(masked.max())
                    if obj < best_obj:
                        continue
                    tie = np.argwhere(masked == obj)
                    rej_at = rej[tuple(tie.T)]
                    pick = tie[int(np.argmin(rej_at))]
                    rej_pick = int(rej_at.min())
                    cand = (
                        0.5 - float(cut_left),
                        float(mu_cuts[j]) - 0.5,
                        float(s_l),
                        float(s_r),
                        *(float(val_cuts[p]) for p in pick),
                    )
                    if (
                        obj > best_obj
                        or rej_pick < best_rej
                        or (rej_pick == best_rej and cand < best_tuple)
                    ):
                        best_obj, best_rej, best_tuple = obj, rej_pick, cand

    assert best_tuple is not None
    thresholds = ThresholdSolution(*best_tuple[:4])
    vt = ValueThresholds(
        t_DL=best_tuple[4], t_UL=best_tuple[5], t_M=best_tuple[6], t_DR=best_tuple[7], t_UR=best_tuple[8]
    )
    decisions = [decide_mipcsc(inst, thresholds, vt) for inst in instances]
    objective = objective_mipcsc(decisions, instances, cm)
    return OracleResult(
        objective=objective,
        thresholds=thresholds,
        exhaustive_count=len(mu_cuts) ** 2 * len(sig_cuts) ** 2 * nv**5,
        value_thresholds=vt,
    )
