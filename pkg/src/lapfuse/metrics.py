"""Validation metrics: calibration, proper scores, entropy, detection curves.

Binned calibration uses J equal-width bins over the maximum predicted
probability, lower-closed with the top bin closed at 1. Two calibration
errors are reported: ``ece`` weights the per-bin |accuracy - confidence|
gap by bin occupancy |B_j|/N (the standard definition), while
``ece_uniform_bins`` applies a plain 1/|B_j| normalization per nonempty
bin and is kept for auditability. Reported "ece percent" values are
ece * 100.

ECE, NLL and Brier are accumulated sequentially in item order so results
are bit-reproducible and directly comparable against straightforward
reference loops.

Out-of-distribution detection treats in-distribution as the positive
hypothesis and detects it when the score (by default predicted entropy)
falls at or below a threshold; all distinct scores are visited once, so
tied scores form a single threshold step. AUROC integrates the ROC curve
with trapezoids; AUPR uses the step (average-precision) rule with the
precision at recall zero taken as the leftmost computed precision.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True)
class BinStat:
    count: int
    accuracy: float
    confidence: float


@dataclass(frozen=True)
class CalibrationResult:
    ece: float
    ece_uniform_bins: float
    accuracy: float
    bins: tuple[BinStat, ...]


@dataclass(frozen=True)
class Scores:
    mean_nll: float
    brier: float
    nll_clamped: bool


@dataclass(frozen=True)
class EvalReport:
    """All in-distribution metrics for one method on one dataset."""

    method: str
    dataset: str
    num_items: int
    accuracy: float
    mean_nll: float
    total_log_likelihood: float
    brier: float
    ece: float
    ece_uniform_bins: float
    mean_entropy: float
    bins: tuple[BinStat, ...]
    nll_clamped: bool = False

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.ece <= 1.0):
            raise StructuralError("accuracy and ece must lie in [0, 1]")
        if not (0.0 <= self.brier <= 2.0):
            raise StructuralError("brier must lie in [0, 2]")
        if sum(b.count for b in self.bins) != self.num_items:
            raise StructuralError("bin counts must sum to the item count")

    def as_dict(self) -> dict:
        out = {
            "method": self.method,
            "dataset": self.dataset,
            "num_items": self.num_items,
            "accuracy": self.accuracy,
            "mean_nll": self.mean_nll,
            "total_log_likelihood": self.total_log_likelihood,
            "brier": self.brier,
            "ece": self.ece,
            "ece_percent": self.ece * 100.0,
            "ece_uniform_bins": self.ece_uniform_bins,
            "mean_entropy": self.mean_entropy,
            "nll_clamped": self.nll_clamped,
        }
        return out


@dataclass(frozen=True)
class DetectionReport:
    """Separability of in- vs out-of-distribution score samples."""

    auroc: float
    aupr: float
    score_gap_total: float  # sum(in scores) - sum(out scores)
    score_gap_mean: float
    roc_points: np.ndarray = field(repr=False)  # (k, 2): P_FA, P_D
    pr_points: np.ndarray = field(repr=False)  # (k, 2): recall, precision

    def __post_init__(self):
        if not (0.0 <= self.auroc <= 1.0 and 0.0 <= self.aupr <= 1.0):
            raise StructuralError("auroc and aupr must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "aupr": self.aupr,
            "score_gap_total": self.score_gap_total,
            "score_gap_mean": self.score_gap_mean,
        }


def _max_and_argmax(row) -> tuple[float, int]:
    best = 0
    for m in range(1, len(row)):
        if row[m] > row[best]:
            best = m
    return float(row[best]), best


def calibration(preds, labels, num_bins: int = 10) -> CalibrationResult:
    """Binned accuracy/confidence comparison of max-probability predictions."""
    if num_bins < 1:
        raise StructuralError("need at least one bin")
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels)
    if preds.ndim != 2 or preds.shape[0] != labels.shape[0]:
        raise StructuralError("predictions and labels must align")
    n = preds.shape[0]

    counts = [0] * num_bins
    hits = [0] * num_bins
    conf_sums = [0.0] * num_bins
    total_hits = 0
    for i in range(n):
        top, best = _max_and_argmax(preds[i])
        j = num_bins - 1
        for k in range(num_bins - 1):
            if top < (k + 1) / num_bins:
                j = k
                break
        counts[j] += 1
        conf_sums[j] += top
        if best == labels[i]:
            hits[j] += 1
            total_hits += 1

    bins = []
    ece = 0.0
    ece_uniform = 0.0
    for j in range(num_bins):
        if counts[j] == 0:
            bins.append(BinStat(0, 0.0, 0.0))
            continue
        acc = hits[j] / counts[j]
        conf = conf_sums[j] / counts[j]
        bins.append(BinStat(counts[j], acc, conf))
        ece += (counts[j] / n) * abs(acc - conf)
        ece_uniform += abs(acc - conf) / counts[j]
    return CalibrationResult(ece, ece_uniform, total_hits / n, tuple(bins))


def scores(preds, labels) -> Scores:
    """Mean negative log-likelihood and Brier score of predicted PMFs."""
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels)
    n, m = preds.shape
    log_sum = 0.0
    brier_sum = 0.0
    clamped = False
    for i in range(n):
        p_true = float(preds[i, labels[i]])
        if p_true <= 0.0:
            p_true = 1e-300
            clamped = True
        log_sum += math.log(p_true)
        acc = 0.0
        for k in range(m):
            diff = (1.0 if k == labels[i] else 0.0) - float(preds[i, k])
            acc += diff * diff
        brier_sum += acc
    return Scores(-(log_sum / n), brier_sum / n, clamped)


def entropy(pmf) -> float:
    """Shannon entropy in nats, with 0 * ln 0 = 0."""
    total = 0.0
    for p in np.asarray(pmf, dtype=float):
        if p > 0.0:
            total -= float(p) * math.log(float(p))
    return total


def entropy_rows(pmfs) -> np.ndarray:
    """Vectorized per-row entropy for scoring large prediction sets."""
    arr = np.asarray(pmfs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(arr > 0.0, arr * np.log(arr), 0.0)
    return -terms.sum(axis=1)


def evaluate_predictions(
    preds, labels, method: str, dataset: str, num_bins: int = 10
) -> EvalReport:
    """Assemble the full in-distribution report for one prediction set."""
    preds = np.asarray(preds, dtype=float)
    cal = calibration(preds, labels, num_bins)
    sc = scores(preds, labels)
    n = preds.shape[0]
    return EvalReport(
        method=method,
        dataset=dataset,
        num_items=n,
        accuracy=cal.accuracy,
        mean_nll=sc.mean_nll,
        total_log_likelihood=-sc.mean_nll * n,
        brier=sc.brier,
        ece=cal.ece,
        ece_uniform_bins=cal.ece_uniform_bins,
        mean_entropy=float(np.mean(entropy_rows(preds))),
        bins=cal.bins,
        nll_clamped=sc.nll_clamped,
    )


def detection(in_scores, out_scores) -> DetectionReport:
    """ROC and precision-recall sweep for in- vs out-of-distribution scores.

    Lower scores indicate in-distribution; an item is detected as
    in-distribution when its score is <= the threshold.
    """
    in_scores = np.asarray(in_scores, dtype=float)
    out_scores = np.asarray(out_scores, dtype=float)
    if in_scores.size == 0 or out_scores.size == 0:
        raise StructuralError("both score lists must be nonempty")

    thresholds = np.unique(np.concatenate([in_scores, out_scores]))
    in_sorted = np.sort(in_scores)
    out_sorted = np.sort(out_scores)
    tp = np.searchsorted(in_sorted, thresholds, side="right")
    fp = np.searchsorted(out_sorted, thresholds, side="right")
    p_d = tp / in_scores.size
    p_fa = fp / out_scores.size

    roc = np.column_stack([np.concatenate([[0.0], p_fa]), np.concatenate([[0.0], p_d])])
    auroc = float(np.sum(np.diff(roc[:, 0]) * (roc[1:, 1] + roc[:-1, 1]) * 0.5))

    precision = tp / (tp + fp)
    recall = p_d
    pr = np.column_stack(
        [np.concatenate([[0.0], recall]), np.concatenate([[precision[0]], precision])]
    )
    aupr = float(np.sum(np.diff(pr[:, 0]) * pr[1:, 1]))

    gap_total = float(np.sum(in_scores) - np.sum(out_scores))
    gap_mean = float(np.mean(in_scores) - np.mean(out_scores))
    return DetectionReport(auroc, aupr, gap_total, gap_mean, roc, pr)


def fit_temperature(logits, labels, grid=None) -> float:
    """Scalar temperature minimizing validation NLL of softmax(logits / T).

    The default grid is 100 log-spaced values on [0.05, 20]; ties resolve
    to the smallest T.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] == 0 or logits.shape[0] != labels.shape[0]:
        raise StructuralError("need a nonempty aligned validation set")
    if grid is None:
        grid = np.geomspace(0.05, 20.0, 100)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0):
        raise StructuralError("temperatures must be positive")

    idx = np.arange(logits.shape[0])
    nlls = np.empty(grid.size)
    for gi, temp in enumerate(grid):
        scaled = logits / temp
        scaled = scaled - scaled.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(scaled).sum(axis=1))
        nlls[gi] = float(np.mean(log_norm - scaled[idx, labels]))
    return float(grid[int(np.argmin(nlls))])


def apply_temperature(logits, temperature: float) -> np.ndarray:
    """Softmax of temperature-scaled logits."""
    scaled = np.asarray(logits, dtype=float) / temperature
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Text serialization (documented key = value format)
# ---------------------------------------------------------------------------


def report_kv_text(report) -> str:
    """Render a report as sorted ``key = value`` lines (floats via repr)."""
    lines = []
    for key, value in sorted(report.as_dict().items()):
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_kv_text(text: str) -> dict:
    """Parse the key = value format back into a dict (inverse of the writer)."""
    out = {}
    for line in text.strip().splitlines():
        key, _, raw = line.partition(" = ")
        raw = raw.strip()
        if raw in ("True", "False"):
            out[key] = raw == "True"
        else:
            try:
                out[key] = int(raw)
            except ValueError:
                try:
                    out[key] = float(raw)
                except ValueError:
                    out[key] = raw
    return out
