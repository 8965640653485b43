"""ROC construction and detection metrics.

pAUC follows the McClish standardization: the trapezoidal area over
fpr in [0, max_fpr] (with linear interpolation at the right boundary) is
rescaled so 0.5 is chance and 1.0 is perfect.  Chance sits at 0.5 because
the raw diagonal area equals the standardization minimum max_fpr^2 / 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .rng import SplitMix64, derive_seed
from .scoring import ScoreRecord


@dataclass(frozen=True)
class RocCurve:
    """Piecewise-linear ROC; both coordinate arrays are non-decreasing."""

    fpr: np.ndarray
    tpr: np.ndarray

    def __post_init__(self):
        fpr = np.asarray(self.fpr, dtype=np.float64)
        tpr = np.asarray(self.tpr, dtype=np.float64)
        if fpr.shape != tpr.shape or fpr.ndim != 1 or len(fpr) < 2:
            raise MetricError("bad-curve", "fpr/tpr must be equal-length 1-D arrays")
        if fpr[0] != 0.0 or tpr[0] != 0.0 or fpr[-1] != 1.0 or tpr[-1] != 1.0:
            raise MetricError("bad-curve", "curve must run from (0,0) to (1,1)")
        if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
            raise MetricError("bad-curve", "fpr and tpr must be non-decreasing")
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)


def _scores_labels(records: list[ScoreRecord]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([r.score for r in records], dtype=np.float64)
    labels = np.array([r.label for r in records], dtype=np.int64)
    return scores, labels


def roc_curve(records: list[ScoreRecord]) -> RocCurve:
    """ROC at every distinct threshold, higher score predicting machine.

    Tied scores collapse to one curve point; the curve starts at (0,0) with
    an implicit threshold above the maximum score.
    """
    scores, labels = _scores_labels(records)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("single-class", "ROC needs both labels present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    fp = np.cumsum(1 - sorted_labels)
    # keep the last index of each tie group
    keep = np.append(sorted_scores[1:] != sorted_scores[:-1], True)
    tpr = np.concatenate([[0.0], tp[keep] / n_pos])
    fpr = np.concatenate([[0.0], fp[keep] / n_neg])
    return RocCurve(fpr, tpr)


def pauc(curve: RocCurve, max_fpr: float) -> float:
    """Standardized partial AUC over fpr in [0, max_fpr]."""
    if not 0.0 < max_fpr <= 1.0:
        raise MetricError("bad-max-fpr", f"max_fpr must be in (0, 1], got {max_fpr}")
    fpr, tpr = curve.fpr, curve.tpr
    if max_fpr == 1.0:
        return float(np.trapezoid(tpr, fpr))
    stop = int(np.searchsorted(fpr, max_fpr, side="right"))
    f = fpr[:stop]
    t = tpr[:stop]
    if f[-1] < max_fpr:
        # interpolate the curve at the boundary; mandatory so small score
        # sets do not yield a zero-width partial region
        frac = (max_fpr - fpr[stop - 1]) / (fpr[stop] - fpr[stop - 1])
        t_at = tpr[stop - 1] + frac * (tpr[stop] - tpr[stop - 1])
        f = np.append(f, max_fpr)
        t = np.append(t, t_at)
    raw = float(np.trapezoid(t, f))
    min_area = 0.5 * max_fpr**2
    max_area = max_fpr
    return 0.5 * (1.0 + (raw - min_area) / (max_area - min_area))


def auc(curve: RocCurve) -> float:
    """Full trapezoidal area; identical to pauc(curve, 1.0)."""
    return pauc(curve, 1.0)


def fpr_at_tpr(curve: RocCurve, target_tpr: float = 0.95) -> float:
    """Smallest fpr on the interpolated curve whose tpr reaches the target."""
    if target_tpr <= 0.0:
        return 0.0
    fpr, tpr = curve.fpr, curve.tpr
    idx = int(np.argmax(tpr >= target_tpr))
    if idx == 0:
        return float(fpr[0])
    frac = (target_tpr - tpr[idx - 1]) / (tpr[idx] - tpr[idx - 1])
    return float(fpr[idx - 1] + frac * (fpr[idx] - fpr[idx - 1]))


_MAX_REDRAWS = 100


def bootstrap_se(records: list[ScoreRecord], metric, b: int, seed: int) -> tuple[float, float]:
    """Bootstrap mean and standard error of a metric over score records.

    Resampling is stratified by label (with replacement within each class,
    preserving class counts) so every resample keeps both classes.  Returns
    the mean and the sample standard deviation of the metric over the B
    resamples.  Per-resample seeds derive from (seed, resample index), so
    resamples are independent of execution order.
    """
    if b < 2:
        raise MetricError("bad-bootstrap", "bootstrap needs B >= 2 resamples")
    pos = [r for r in records if r.label == 1]
    neg = [r for r in records if r.label == 0]
    if not pos or not neg:
        raise MetricError("single-class", "bootstrap needs both labels present")
    values = np.empty(b, dtype=np.float64)
    for rb in range(b):
        rng = SplitMix64(derive_seed(seed, "bootstrap", rb))
        for attempt in range(_MAX_REDRAWS):
            resample = [pos[rng.randbelow(len(pos))] for _ in range(len(pos))]
            resample += [neg[rng.randbelow(len(neg))] for _ in range(len(neg))]
            try:
                values[rb] = metric(resample)
                break
            except MetricError:
                continue
        else:
            raise MetricError("degenerate-bootstrap", "metric undefined on every redraw")
    return float(values.mean()), float(values.std(ddof=1))
