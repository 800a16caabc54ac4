"""Linear TD/TI score combination and the optimal-weight linear sweep."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .metrics import compute_eer


@dataclass(frozen=True)
class FusionWeight:
    alpha: float  # weight on the TD score

    def validate(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError(f"fusion weight must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class FusionSweepResult:
    alpha_star: float
    eer_at_alpha_star: float
    table: list[tuple[float, float]]  # (alpha, eer)


def fuse(td_score: float, ti_score: float, weight: FusionWeight) -> float:
    weight.validate()
    if not (np.isfinite(td_score) and np.isfinite(ti_score)):
        raise ValidationError("fused scores must be finite")
    return weight.alpha * td_score + (1.0 - weight.alpha) * ti_score


def _split_scores(scored):
    td = np.array([s.td_score for s in scored])
    if any(s.ti_score is None for s in scored):
        raise ValidationError("fusion sweep needs a TI score on every trial")
    ti = np.array([s.ti_score for s in scored])
    labels = np.array([s.trial.is_target for s in scored])
    if not labels.any() or labels.all():
        raise ValidationError("fusion sweep needs both target and nontarget trials")
    return td, ti, labels


def alpha_grid(grid_step: float) -> list[float]:
    if not (0.0 < grid_step <= 0.5):
        raise ValidationError(f"grid step must be in (0, 0.5], got {grid_step}")
    alphas = [i * grid_step for i in range(int(np.floor(1.0 / grid_step + 1e-9)) + 1)]
    if alphas[-1] < 1.0:
        alphas.append(1.0)
    else:
        alphas[-1] = 1.0
    return alphas


def sweep_fusion_weight(scored, grid_step: float = 0.01) -> FusionSweepResult:
    """EER at each alpha on the grid (endpoints always included); the
    minimizing alpha wins, smallest alpha on ties."""
    td, ti, labels = _split_scores(scored)
    table = []
    best_alpha, best_eer = None, None
    for alpha in alpha_grid(grid_step):
        fused = alpha * td + (1.0 - alpha) * ti
        eer = compute_eer(fused[labels], fused[~labels]).eer
        table.append((alpha, eer))
        if best_eer is None or eer < best_eer:
            best_alpha, best_eer = alpha, eer
    return FusionSweepResult(alpha_star=best_alpha, eer_at_alpha_star=best_eer, table=table)


def save_sweep_csv(path: str, result: FusionSweepResult) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["alpha", "eer"])
        for alpha, eer in result.table:
            writer.writerow(["%.6f" % alpha, "%.9f" % eer])


def load_sweep_csv(path: str) -> FusionSweepResult:
    table = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["alpha", "eer"]:
            raise ValidationError(f"{path}: not a fusion sweep file")
        for row in reader:
            table.append((float(row[0]), float(row[1])))
    if not table:
        raise ValidationError(f"{path}: empty fusion sweep")
    best_alpha, best_eer = min(table, key=lambda ae: (ae[1], ae[0]))
    return FusionSweepResult(alpha_star=best_alpha, eer_at_alpha_star=best_eer, table=table)
