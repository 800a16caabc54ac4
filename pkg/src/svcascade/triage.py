"""Confidence-band triage between the cheap TD score and TD+TI fusion,
with trigger-rate, latency and flop analytics.

A trial escalates to fusion only when its TD score falls strictly inside
the (lower, upper) band; boundary scores count as confident.  Triaged EER
is computed on the mixed axis of raw TD scores (confident trials) and
fused scores (triggered trials), with no per-branch recalibration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError
from .fusion import FusionWeight
from .metrics import compute_eer
from .scoring import ScoredTrial


class Decision(Enum):
    CONFIDENT_ACCEPT = "confident-accept"
    CONFIDENT_REJECT = "confident-reject"
    TRIGGER = "trigger"


@dataclass(frozen=True)
class TriagePolicy:
    lower: float
    upper: float
    alpha: FusionWeight

    def validate(self) -> None:
        if not (-1.0 <= self.lower <= self.upper <= 1.0):
            raise ValidationError(
                f"triage band must satisfy -1 <= lower <= upper <= 1, "
                f"got ({self.lower}, {self.upper})")
        self.alpha.validate()


@dataclass(frozen=True)
class TriagedTrial:
    trial: object
    final_score: float
    triggered: bool
    td_score: float
    ti_score: float | None


@dataclass(frozen=True)
class CostModel:
    keyword_seconds: float
    query_seconds: float
    td_flops: int
    ti_flops: int

    def validate(self) -> None:
        if not (self.keyword_seconds > 0 and self.query_seconds > 0):
            raise ValidationError("cost model durations must be positive")
        if self.td_flops < 0 or self.ti_flops < 0:
            raise ValidationError("cost model flop counts must be nonnegative")


def triage_decide(td_score: float, policy: TriagePolicy) -> Decision:
    policy.validate()
    if not np.isfinite(td_score):
        raise ValidationError(f"TD score must be finite, got {td_score}")
    if td_score >= policy.upper:
        return Decision.CONFIDENT_ACCEPT
    if td_score <= policy.lower:
        return Decision.CONFIDENT_REJECT
    return Decision.TRIGGER


def apply_triage(scored: list[ScoredTrial], policy: TriagePolicy) -> list[TriagedTrial]:
    policy.validate()
    out = []
    for s in scored:
        triggered = policy.lower < s.td_score < policy.upper
        if triggered:
            if s.ti_score is None:
                raise ValidationError(
                    f"trial {s.trial.test_utterance_id} triggers but has no TI score")
            final = policy.alpha.alpha * s.td_score + (1.0 - policy.alpha.alpha) * s.ti_score
        else:
            final = s.td_score
        out.append(TriagedTrial(trial=s.trial, final_score=final, triggered=triggered,
                                td_score=s.td_score,
                                ti_score=s.ti_score if triggered else None))
    return out


def trigger_rate(triaged: list[TriagedTrial], prior: float) -> float:
    """Prior-weighted trigger probability: p * (target trigger fraction)
    + (1-p) * (nontarget trigger fraction)."""
    if not (0.0 <= prior <= 1.0):
        raise ValidationError(f"prior must be in [0, 1], got {prior}")
    tgt = [t for t in triaged if t.trial.is_target]
    non = [t for t in triaged if not t.trial.is_target]
    rate = 0.0
    if prior > 0.0:
        if not tgt:
            raise ValidationError("prior > 0 needs target trials in the set")
        rate += prior * sum(t.triggered for t in tgt) / len(tgt)
    if prior < 1.0:
        if not non:
            raise ValidationError("prior < 1 needs nontarget trials in the set")
        rate += (1.0 - prior) * sum(t.triggered for t in non) / len(non)
    return rate


def expected_latency(rate: float, cost: CostModel) -> float:
    """Seconds until a verification decision, assuming an immediate system
    response: the keyword is always consumed, the query only on trigger."""
    cost.validate()
    if not (0.0 <= rate <= 1.0):
        raise ValidationError(f"trigger rate must be in [0, 1], got {rate}")
    return cost.keyword_seconds + rate * cost.query_seconds


def expected_flops(rate: float, cost: CostModel) -> float:
    cost.validate()
    if not (0.0 <= rate <= 1.0):
        raise ValidationError(f"trigger rate must be in [0, 1], got {rate}")
    return cost.td_flops + rate * cost.ti_flops


@dataclass(frozen=True)
class BandCell:
    lower: float
    upper: float
    eer: float
    trigger_rate: float  # at prior 0.5


def _score_arrays(scored: list[ScoredTrial], alpha: FusionWeight):
    td = np.array([s.td_score for s in scored])
    if any(s.ti_score is None for s in scored):
        raise ValidationError("band sweep needs a TI score on every trial")
    ti = np.array([s.ti_score for s in scored])
    labels = np.array([s.trial.is_target for s in scored])
    if not labels.any() or labels.all():
        raise ValidationError("band sweep needs both target and nontarget trials")
    fused = alpha.alpha * td + (1.0 - alpha.alpha) * ti
    return td, fused, labels


def band_grid(grid_min: float, grid_max: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValidationError(f"band grid step must be positive, got {step}")
    if grid_min >= grid_max:
        raise ValidationError(f"band grid needs min < max, got [{grid_min}, {grid_max}]")
    count = int(np.floor((grid_max - grid_min) / step + 1e-9)) + 1
    values = grid_min + step * np.arange(count)
    if values[-1] < grid_max - 1e-12:
        values = np.append(values, grid_max)
    return values


def _cell(td, fused, labels, lower, upper, prior=0.5):
    triggered = (td > lower) & (td < upper)
    final = np.where(triggered, fused, td)
    eer = compute_eer(final[labels], final[~labels]).eer
    rate = prior * triggered[labels].mean() + (1.0 - prior) * triggered[~labels].mean()
    return eer, float(rate), triggered


def sweep_bands(scored: list[ScoredTrial], grid_min: float, grid_max: float,
                step: float, alpha: FusionWeight) -> list[BandCell]:
    """One cell per (lower, upper) grid pair with lower <= upper; EER on the
    triaged final-score axis, trigger rate at prior 0.5."""
    alpha.validate()
    values = band_grid(grid_min, grid_max, step)
    td, fused, labels = _score_arrays(scored, alpha)
    cells = []
    for i, lower in enumerate(values):
        for upper in values[i:]:
            eer, rate, _ = _cell(td, fused, labels, lower, upper)
            cells.append(BandCell(lower=float(lower), upper=float(upper),
                                  eer=eer, trigger_rate=rate))
    return cells


@dataclass(frozen=True)
class PriorPoint:
    prior: float
    lower: float
    upper: float
    trigger_rate: float
    eer: float


def prior_sensitivity_curve(scored: list[ScoredTrial], grid_min: float, grid_max: float,
                            step: float, alpha: FusionWeight,
                            priors: list[float]) -> list[PriorPoint]:
    """For each band on the grid and each prior: (trigger rate under that
    prior, triaged EER).  The EER is prior-independent; only the rate moves."""
    alpha.validate()
    for p in priors:
        if not (0.0 <= p <= 1.0):
            raise ValidationError(f"prior must be in [0, 1], got {p}")
    values = band_grid(grid_min, grid_max, step)
    td, fused, labels = _score_arrays(scored, alpha)
    points = []
    for i, lower in enumerate(values):
        for upper in values[i:]:
            eer, _, triggered = _cell(td, fused, labels, lower, upper)
            tgt_rate = float(triggered[labels].mean())
            non_rate = float(triggered[~labels].mean())
            for p in priors:
                rate = p * tgt_rate + (1.0 - p) * non_rate
                points.append(PriorPoint(prior=p, lower=float(lower), upper=float(upper),
                                         trigger_rate=rate, eer=eer))
    return points


def eer_envelope(points: list[PriorPoint], bin_width: float = 0.01):
    """Pointwise min/max EER over trigger-rate bins, the best/worst-case
    envelope of the prior-sensitivity plot.  Returns
    {bin_center: (min_eer, max_eer)} over all supplied points."""
    if bin_width <= 0:
        raise ValidationError("bin width must be positive")
    bins: dict[int, tuple[float, float]] = {}
    for pt in points:
        idx = int(np.floor(pt.trigger_rate / bin_width))
        lo, hi = bins.get(idx, (np.inf, -np.inf))
        bins[idx] = (min(lo, pt.eer), max(hi, pt.eer))
    return {(idx + 0.5) * bin_width: span for idx, span in sorted(bins.items())}


def save_heatmap_csv(path: str, cells: list[BandCell]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["lower", "upper", "eer", "trigger_rate"])
        for cell in cells:
            writer.writerow(["%.6f" % cell.lower, "%.6f" % cell.upper,
                             "%.9f" % cell.eer, "%.9f" % cell.trigger_rate])


def save_prior_curve_csv(path: str, points: list[PriorPoint]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["prior", "trigger_rate", "eer"])
        for pt in points:
            writer.writerow(["%.6f" % pt.prior, "%.9f" % pt.trigger_rate, "%.9f" % pt.eer])
