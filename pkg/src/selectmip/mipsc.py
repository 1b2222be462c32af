"""Exact solver for the accuracy-oriented threshold-learning problem.

The training problem: choose the four region thresholds so that the number of
wrong automatic decisions plus ``(1 - rho) / m`` per rejection is minimal,
with at most ``r_cap`` rejections.  ``rho`` is the accuracy of the underlying
network without any rejection; the regularizer makes a rejection worth it
only if it prevents an expected mistake.

Because every constraint is a threshold test on one coordinate, the objective
is piecewise constant in the thresholds, with breakpoints only at observed
data values.  The solver therefore enumerates candidate cuts (midpoints
between neighbouring distinct values plus two sentinels), builds for each
vertical cut a per-side frontier "accepted count -> fewest mistakes", and
combines both sides under the shared rejection budget.  Without coarsening
the result is exactly optimal over all real-valued thresholds; the brute
force in :mod:`selectmip.oracles` certifies this on small instances.

Objective comparisons are done in exact integer arithmetic (the regularizer
weight is a dyadic rational once ``rho`` is a float), so reported optima are
reproducible to the last bit and ties break deterministically by fewer
rejections, then by the lexicographically smallest threshold tuple.

The solve itself is a pure function; the cut-pair loop could run in parallel
as long as results merge in the same deterministic order.  A literal big-M
integer-programming formulation can be exported for external verification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._lp import LpWriter
from .regions import Decision, DecisionKind, LabeledInstance, ThresholdSolution, decide_mipsc

__all__ = [
    "SolverConfig",
    "MipscSolution",
    "LpExportConfig",
    "SideFrontier",
    "candidate_cuts",
    "objective_mipsc",
    "side_frontier",
    "solve_mipsc",
    "export_mipsc_lp",
]


@dataclass(frozen=True)
class SolverConfig:
    """Shared configuration for both threshold solvers.

    ``r_cap`` is an integer rejection budget (count, not fraction).
    ``coarsen_to`` caps the number of candidate cuts per threshold dimension;
    ``None`` keeps every cut, which is exact.  ``rho`` is only used by the
    accuracy-oriented objective.
    """

    r_cap: int
    rho: float = 0.0
    coarsen_to: int | None = None

    def __post_init__(self) -> None:
        if self.r_cap < 0:
            raise ValueError(f"r_cap must be nonnegative, got {self.r_cap}")
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if self.coarsen_to is not None and self.coarsen_to < 2:
            raise ValueError("coarsen_to must keep at least the two sentinels")


@dataclass(frozen=True)
class MipscSolution:
    thresholds: ThresholdSolution
    decisions: list[Decision]
    objective: float
    mistakes: int
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
                "objective": self.objective,
                "mistakes": self.mistakes,
                "rejections": self.rejections,
            },
            indent=2,
        )


@dataclass(frozen=True)
class LpExportConfig:
    big_M: float = 1e4
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.big_M <= 0 or self.epsilon <= 0:
            raise ValueError("big_M and epsilon must be positive")


def candidate_cuts(values: Sequence[float], coarsen_to: int | None = None) -> np.ndarray:
    """Threshold positions that realize every distinct strict-cut subset.

    Sorted distinct values v1 < ... < vk yield ``v1 - 1``, all midpoints
    between neighbours, and ``vk + 1``.  With ``coarsen_to`` given and more
    cuts than that, an evenly spaced subset is kept, always retaining both
    sentinels.
    """
    arr = np.unique(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise ValueError("candidate_cuts needs at least one value")
    cuts = np.concatenate([[arr[0] - 1.0], (arr[:-1] + arr[1:]) / 2.0, [arr[-1] + 1.0]])
    if coarsen_to is not None and cuts.size > coarsen_to:
        idx = np.floor(np.linspace(0, cuts.size - 1, coarsen_to) + 0.5).astype(int)
        cuts = cuts[idx]
    return cuts


def objective_mipsc(decisions: Sequence[Decision], labels: Sequence[int], rho: float) -> float:
    """Mistakes plus ``(1 - rho) / m`` per rejection.

    A Positive decision with label 1 or a Negative decision with label 0
    counts as a mistake.
    """
    if len(decisions) != len(labels):
        raise ValueError(f"{len(decisions)} decisions vs {len(labels)} labels")
    m = len(labels)
    mistakes = 0
    rejections = 0
    for d, y in zip(decisions, labels):
        if d.is_reject:
            rejections += 1
        elif not d.correct_for(y):
            mistakes += 1
    return mistakes + (1.0 - rho) / m * rejections


@dataclass(frozen=True)
class SideFrontier:
    """Per accepted-count ``a``: fewest mistakes and the sigma cut achieving it.

    Arrays run over a = 0..|region|; counts no strict sigma cut can realize
    (duplicated sigma values, or cuts dropped by coarsening) are infeasible
    and carry ``inf`` mistakes / ``nan`` sigma.
    """

    mistakes: np.ndarray
    sigma_cut: np.ndarray

    @property
    def size(self) -> int:
        return int(self.mistakes.size - 1)

    def achievable(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.mistakes))


# Sigma threshold reported for an empty side region, where any value works.
EMPTY_REGION_SIGMA = 0.0


def _frontier_from_arrays(
    sigma: np.ndarray, wrong: np.ndarray, coarsen_to: int | None
) -> SideFrontier:
    n = sigma.size
    mistakes = np.full(n + 1, np.inf)
    sigma_cut = np.full(n + 1, np.nan)
    if n == 0:
        mistakes[0] = 0.0
        sigma_cut[0] = EMPTY_REGION_SIGMA
        return SideFrontier(mistakes, sigma_cut)
    order = np.argsort(sigma, kind="stable")
    s_sorted = sigma[order]
    wrong_prefix = np.concatenate([[0], np.cumsum(wrong[order])])
    for cut in candidate_cuts(s_sorted, coarsen_to):
        a = int(np.searchsorted(s_sorted, cut, side="left"))
        mistakes[a] = wrong_prefix[a]
        sigma_cut[a] = cut
    return SideFrontier(mistakes, sigma_cut)


def side_frontier(
    instances: Sequence[LabeledInstance],
    side: str,
    mu_cut: float,
    coarsen_to: int | None = None,
) -> SideFrontier:
    """Frontier of one side region under a vertical cut.

    The left region is ``mu < mu_cut`` and accepts instances below a sigma
    cut as automatic positives, so accepted label-1 instances are mistakes;
    the right region is ``mu > mu_cut`` with the opposite polarity.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    mu = np.array([inst.mu for inst in instances])
    sigma = np.array([inst.sigma for inst in instances])
    y = np.array([inst.y for inst in instances])
    mask = mu < mu_cut if side == "left" else mu > mu_cut
    bad_label = 1 if side == "left" else 0
    return _frontier_from_arrays(sigma[mask], (y[mask] == bad_label).astype(int), coarsen_to)


@dataclass
class _SideTables:
    """Frontier of one cut plus exact-integer keys for fast combination."""

    achievable: list[int]
    key: list[int]  # mistakes * scale - reg_num * accepted
    sigma_cut: np.ndarray
    suffix_key: list[int | None]
    suffix_arg: list[int]


def _side_tables(frontier: SideFrontier, scale: int, reg_num: int) -> _SideTables:
    n = frontier.size
    achievable = [int(a) for a in frontier.achievable()]
    key: list[int] = [0] * (n + 1)
    for a in achievable:
        key[a] = int(frontier.mistakes[a]) * scale - reg_num * a
    suffix_key: list[int | None] = [None] * (n + 2)
    suffix_arg: list[int] = [0] * (n + 2)
    best: int | None = None
    best_a = 0
    for a in range(n, -1, -1):
        if np.isfinite(frontier.mistakes[a]):
            k = key[a]
            if best is None or k < best:  # ties keep the larger count (fewer rejections)
                best, best_a = k, a
        suffix_key[a] = best
        suffix_arg[a] = best_a
    return _SideTables(achievable, key, frontier.sigma_cut, suffix_key, suffix_arg)


def solve_mipsc(instances: Sequence[LabeledInstance], cfg: SolverConfig) -> MipscSolution:
    """Globally optimal thresholds by cut enumeration plus frontier merging.

    Exact over all real thresholds when ``cfg.coarsen_to`` is None.  Never
    infeasible for ``r_cap >= 0``: placing both vertical cuts past the data
    and accepting everything rejects nobody.
    """
    m = len(instances)
    if m < 1:
        raise ValueError("need at least one instance")
    if cfg.r_cap > m:
        raise ValueError(f"r_cap={cfg.r_cap} exceeds the number of instances {m}")
    mu = np.array([inst.mu for inst in instances])
    sigma = np.array([inst.sigma for inst in instances])
    y = np.array([inst.y for inst in instances])

    reg = Fraction(1.0 - cfg.rho)  # exact value of the float
    reg_num = reg.numerator
    scale = reg.denominator * m  # objective * scale is the integer key

    cuts = candidate_cuts(mu, cfg.coarsen_to)
    lefts: list[_SideTables] = []
    rights: list[_SideTables] = []
    for cut in cuts:
        lmask = mu < cut
        rmask = mu > cut
        fl = _frontier_from_arrays(sigma[lmask], (y[lmask] == 1).astype(int), cfg.coarsen_to)
        fr = _frontier_from_arrays(sigma[rmask], (y[rmask] == 0).astype(int), cfg.coarsen_to)
        lefts.append(_side_tables(fl, scale, reg_num))
        rights.append(_side_tables(fr, scale, reg_num))

    const = reg_num * m  # contribution of rejecting all m, added back once
    best: tuple | None = None  # (key, rejections, mu_L, mu_R, sigma_L, sigma_R)
    best_cfg: tuple[int, int, float, float] | None = None
    for i, cut_left in enumerate(cuts):
        left = lefts[i]
        for j in range(i, len(cuts)):
            right = rights[j]
            n_right = len(right.suffix_arg) - 2
            for a_left in left.achievable:
                need = m - cfg.r_cap - a_left
                s = need if need > 0 else 0
                if s > n_right or right.suffix_key[s] is None:
                    continue
                a_right = right.suffix_arg[s]
                key = left.key[a_left] + right.suffix_key[s] + const
                cand = (
                    key,
                    m - a_left - a_right,
                    0.5 - cut_left,
                    cuts[j] - 0.5,
                    float(left.sigma_cut[a_left]),
                    float(right.sigma_cut[a_right]),
                )
                if best is None or cand < best:
                    best = cand
                    best_cfg = (i, j, cand[4], cand[5])

    assert best is not None and best_cfg is not None  # reject-nothing always feasible
    i, j, sig_l, sig_r = best_cfg
    thresholds = ThresholdSolution(
        mu_L=0.5 - float(cuts[i]), mu_R=float(cuts[j]) - 0.5, sigma_L=sig_l, sigma_R=sig_r
    )
    decisions = [decide_mipsc(inst.estimate, thresholds) for inst in instances]
    mistakes = sum(
        1 for d, label in zip(decisions, y) if not d.is_reject and not d.correct_for(int(label))
    )
    rejections = sum(1 for d in decisions if d.is_reject)
    objective = objective_mipsc(decisions, [int(v) for v in y], cfg.rho)
    return MipscSolution(thresholds, decisions, objective, mistakes, rejections)


def _validate_lp_config(lp: LpExportConfig, *value_groups: np.ndarray) -> None:
    spread = max(1.0, *(float(np.max(np.abs(g))) for g in value_groups if g.size))
    if lp.big_M <= spread:
        raise ValueError(f"big_M={lp.big_M} must dominate the data range {spread}")
    for g in value_groups:
        distinct = np.unique(g)
        if distinct.size > 1:
            min_gap = float(np.min(np.diff(distinct)))
            if lp.epsilon >= min_gap:
                raise ValueError(
                    f"epsilon={lp.epsilon} must be below the smallest value gap {min_gap}"
                )


def _indicator_rows(
    w: LpWriter, tag: str, i: int, cont: str, binary: str, value: float, sign: int, M: float, eps: float
) -> None:
    """Two big-M rows encoding ``value <cmp> threshold  iff  binary = 1``.

    ``sign=+1`` encodes "value > threshold" (right-side test), ``sign=-1``
    encodes "value < threshold" (left/below test), both strict via epsilon.
    """
    if sign > 0:
        # threshold + M b >= value  and  threshold + M b <= value + M - eps
        w.add_row(f"{tag}_hi_{i}", [(1.0, cont), (M, binary)], ">=", value)
        w.add_row(f"{tag}_lo_{i}", [(1.0, cont), (M, binary)], "<=", value + M - eps)
    else:
        # threshold - M b >= value - M + eps  and  threshold - M b <= value
        w.add_row(f"{tag}_hi_{i}", [(1.0, cont), (-M, binary)], ">=", value - M + eps)
        w.add_row(f"{tag}_lo_{i}", [(1.0, cont), (-M, binary)], "<=", value)


def export_mipsc_lp(
    instances: Sequence[LabeledInstance], cfg: SolverConfig, lp: LpExportConfig = LpExportConfig()
) -> str:
    """Literal big-M formulation of the training problem in LP file format."""
    m = len(instances)
    if m < 1:
        raise ValueError("need at least one instance")
    mu = np.array([inst.mu for inst in instances])
    sigma = np.array([inst.sigma for inst in instances])
    y = np.array([inst.y for inst in instances])
    _validate_lp_config(lp, np.abs(mu - 0.5), sigma)
    M, eps = lp.big_M, lp.epsilon

    w = LpWriter("selective-threshold training problem, big-M form", "Minimize")
    reg = (1.0 - cfg.rho) / m
    for i in range(1, m + 1):
        if y[i - 1] == 1:
            w.add_objective_term(1.0, f"p_{i}")
        else:
            w.add_objective_term(1.0, f"n_{i}")
        w.add_objective_term(reg, f"r_{i}")

    for i in range(1, m + 1):
        mui, sigi = float(mu[i - 1]), float(sigma[i - 1])
        # mu_i > 0.5 + muR  iff  R_i = 1:
        #   muR + M R_i >= mu_i - 0.5 >= muR - M (1 - R_i) + eps
        w.add_row(f"R_hi_{i}", [(1.0, "muR"), (M, f"R_{i}")], ">=", mui - 0.5)
        w.add_row(f"R_lo_{i}", [(1.0, "muR"), (M, f"R_{i}")], "<=", mui - 0.5 + M - eps)
        # mu_i < 0.5 - muL  iff  L_i = 1:
        #   M (1 - L_i) - muL - eps >= mu_i - 0.5 >= -muL - M L_i
        w.add_row(f"L_hi_{i}", [(1.0, "muL"), (M, f"L_{i}")], "<=", 0.5 - mui + M - eps)
        w.add_row(f"L_lo_{i}", [(1.0, "muL"), (M, f"L_{i}")], ">=", 0.5 - mui)
        # sigma_i < sigL  iff  DL_i = 1:
        #   sigL + M (1 - DL_i) - eps >= sigma_i >= sigL - M DL_i
        _indicator_rows(w, "DL", i, "sigL", f"DL_{i}", sigi, -1, M, eps)
        # sigma_i < sigR  iff  DR_i = 1.
        _indicator_rows(w, "DR", i, "sigR", f"DR_{i}", sigi, -1, M, eps)
        # DL_i + L_i >= 2 p_i >= DL_i + L_i - 1
        w.add_row(f"p_hi_{i}", [(1.0, f"DL_{i}"), (1.0, f"L_{i}"), (-2.0, f"p_{i}")], ">=", 0.0)
        w.add_row(f"p_lo_{i}", [(1.0, f"DL_{i}"), (1.0, f"L_{i}"), (-2.0, f"p_{i}")], "<=", 1.0)
        # DR_i + R_i >= 2 n_i >= DR_i + R_i - 1
        w.add_row(f"n_hi_{i}", [(1.0, f"DR_{i}"), (1.0, f"R_{i}"), (-2.0, f"n_{i}")], ">=", 0.0)
        w.add_row(f"n_lo_{i}", [(1.0, f"DR_{i}"), (1.0, f"R_{i}"), (-2.0, f"n_{i}")], "<=", 1.0)
        w.add_row(f"assign_{i}", [(1.0, f"p_{i}"), (1.0, f"n_{i}"), (1.0, f"r_{i}")], "=", 1.0)
    w.add_row("capacity", [(1.0, f"r_{i}") for i in range(1, m + 1)], "<=", float(cfg.r_cap))

    w.add_free("muL", "muR", "sigL", "sigR")
    names = []
    for i in range(1, m + 1):
        names.extend([f"p_{i}", f"n_{i}", f"r_{i}", f"R_{i}", f"L_{i}", f"DL_{i}", f"DR_{i}"])
    w.add_binary(names)
    return w.render()


def decisions_to_csv(
    instances: Sequence[LabeledInstance],
    decisions: Sequence[Decision],
    thresholds: ThresholdSolution,
) -> str:
    """Shared decisions CSV: instance_id, region, decision, firing_rule_j."""
    from .regions import assign_region

    lines = ["instance_id,region,decision,firing_rule_j"]
    for inst, d in zip(instances, decisions):
        region = assign_region(inst.estimate, thresholds)
        j = "" if d.rule_index is None else str(d.rule_index)
        lines.append(f"{inst.id},{region.value},{d.kind.value},{j}")
    return "\n".join(lines) + "\n"
