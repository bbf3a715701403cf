"""Confusion-matrix evaluation (TPR/FPR/IoU per class) and object point density.

FPR uses one-vs-rest true negatives. Published tables in this domain sometimes
print the miss rate (100 - TPR) in the FPR column instead, so the report also
exposes ``miss_pct``; the exported tables carry the one-vs-rest value.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .frames import Frame, WeatherLabel


def confusion_matrix(predictions, truths, class_count: int) -> np.ndarray:
    """Counts matrix with cell (i, j) = samples of true class i+1 predicted j+1.

    Labels are the 1-based class numbers (1 clear, 2 rain, 3 fog).
    """
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(truths, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} predictions vs {true.shape[0]} truths")
    for name, arr in (("prediction", pred), ("truth", true)):
        if arr.size and (arr.min() < 1 or arr.max() > class_count):
            raise ValueError(f"{name} labels must lie in 1..{class_count}")
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (true - 1, pred - 1), 1)
    return counts


@dataclass(frozen=True)
class ClassMetrics:
    """Per-class confusion counts and rates (percent, unrounded)."""

    label: int
    n_samples: int
    tp: int
    fp: int
    fn: int
    tn: int
    tpr_pct: float
    fpr_pct: float
    miss_pct: float
    iou_pct: float
    masked: bool = False


@dataclass(frozen=True)
class EvalReport:
    """Per-class metrics plus the unweighted mean IoU over non-empty classes."""

    classes: tuple[ClassMetrics, ...]
    mean_iou_pct: float
    total: int


def class_metrics(confusion) -> EvalReport:
    """Derive TPR/FPR/IoU per class and the unweighted mean IoU.

    Classes without samples are masked, excluded from the mean, and reported
    with a warning.
    """
    counts = np.asarray(confusion, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {counts.shape}")
    total = int(counts.sum())
    per_class = []
    ious = []
    for c in range(counts.shape[0]):
        tp = int(counts[c, c])
        fn = int(counts[c].sum() - tp)
        fp = int(counts[:, c].sum() - tp)
        tn = total - tp - fn - fp
        n_c = tp + fn
        if n_c == 0:
            warnings.warn(f"class {c + 1} has no samples; excluded from mean IoU")
            per_class.append(ClassMetrics(c + 1, 0, tp, fp, fn, tn,
                                          0.0, 0.0, 0.0, 0.0, masked=True))
            continue
        tpr = 100.0 * tp / n_c
        fpr = 100.0 * fp / (fp + tn) if (fp + tn) > 0 else 0.0
        iou = 100.0 * tp / (tp + fp + fn) if (tp + fp + fn) > 0 else 0.0
        per_class.append(ClassMetrics(c + 1, n_c, tp, fp, fn, tn,
                                      tpr, fpr, 100.0 - tpr, iou))
        ious.append(iou)
    mean_iou = float(np.mean(ious)) if ious else 0.0
    return EvalReport(tuple(per_class), mean_iou, total)


_HEADER = ("class", "# samples", "TPR [%]", "FPR [%]", "IoU [%]")


def _report_rows(report: EvalReport, class_names=None):
    rows = []
    for cm in report.classes:
        name = str(cm.label) if class_names is None else class_names.get(cm.label, str(cm.label))
        if cm.masked:
            rows.append((name, f"{cm.n_samples:,}", "--", "--", "--"))
        else:
            rows.append((name, f"{cm.n_samples:,}",
                         f"{cm.tpr_pct:.2f}", f"{cm.fpr_pct:.2f}", f"{cm.iou_pct:.2f}"))
    return rows


def format_report(report: EvalReport, class_names=None) -> str:
    """Aligned text table: one row per class, mean IoU as the footer."""
    rows = [_HEADER] + _report_rows(report, class_names)
    widths = [max(len(row[i]) for row in rows) for i in range(len(_HEADER))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    lines.append(f"mean IoU [%]: {report.mean_iou_pct:.2f}")
    return "\n".join(lines)


def write_report_csv(report: EvalReport, path, class_names=None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "samples", "tpr_pct", "fpr_pct", "iou_pct"])
        for cm in report.classes:
            name = str(cm.label) if class_names is None else class_names.get(cm.label, str(cm.label))
            if cm.masked:
                writer.writerow([name, cm.n_samples, "", "", ""])
            else:
                writer.writerow([name, cm.n_samples,
                                 f"{cm.tpr_pct:.2f}", f"{cm.fpr_pct:.2f}", f"{cm.iou_pct:.2f}"])
        writer.writerow(["mean_iou", report.total, "", "", f"{report.mean_iou_pct:.2f}"])


WEATHER_CLASS_NAMES = {int(lbl): lbl.display_name for lbl in WeatherLabel}


# ---------------------------------------------------------------------------
# object point density
# ---------------------------------------------------------------------------

def count_object_points(frame: Frame, object_id: int) -> int:
    """Points tagged with the given object id (0 when the frame is untagged)."""
    if frame.object_ids is None:
        return 0
    return int(np.count_nonzero(frame.object_ids == object_id))


def object_point_density(frames, object_id: int, clear_reference: float) -> np.ndarray:
    """Per-frame point count on the object scaled by the clear-condition mean."""
    if not clear_reference > 0:
        raise ValueError(f"clear reference mean count must be > 0, got {clear_reference}")
    return np.array([count_object_points(f, object_id) / clear_reference for f in frames])


@dataclass(frozen=True, eq=False)
class ObjectDensitySeries:
    """Density ratios per weather condition for one object."""

    object_id: int
    object_name: str
    reference_mean: float
    densities: dict[str, np.ndarray]


def density_series(samples, object_id: int, object_name: str = "",
                   clear_condition: str = "clear") -> ObjectDensitySeries:
    """Group samples by condition key and normalize counts by the clear mean.

    The clear-condition densities average exactly 1 by construction.
    """
    by_condition: dict[str, list[int]] = {}
    for s in samples:
        key = s.truth.condition_key() if s.truth is not None else "unknown"
        by_condition.setdefault(key, []).append(count_object_points(s.frame, object_id))
    if clear_condition not in by_condition:
        raise ValueError(f"no {clear_condition!r} frames to normalize against")
    reference = float(np.mean(by_condition[clear_condition]))
    if not reference > 0:
        raise ValueError(f"object {object_id} has no points in {clear_condition!r} frames")
    densities = {key: np.asarray(counts, dtype=np.float64) / reference
                 for key, counts in by_condition.items()}
    return ObjectDensitySeries(object_id, object_name, reference, densities)


def boxplot_stats(values) -> dict:
    """Median, quartiles, Tukey 1.5*IQR whiskers and outliers for one condition."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    lo = float(inside.min()) if inside.size else float(med)
    hi = float(inside.max()) if inside.size else float(med)
    outliers = arr[(arr < lo_fence) | (arr > hi_fence)]
    return {"median": float(med), "q1": float(q1), "q3": float(q3),
            "whisker_lo": lo, "whisker_hi": hi, "outliers": outliers.tolist()}


def write_density_csv(series: ObjectDensitySeries, path) -> None:
    """Boxplot-ready CSV: one row per condition."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "n_frames", "median", "q1", "q3",
                         "whisker_lo", "whisker_hi", "outliers"])
        for key in sorted(series.densities):
            stats = boxplot_stats(series.densities[key])
            writer.writerow([
                key, series.densities[key].size,
                f"{stats['median']:.6f}", f"{stats['q1']:.6f}", f"{stats['q3']:.6f}",
                f"{stats['whisker_lo']:.6f}", f"{stats['whisker_hi']:.6f}",
                "|".join(f"{v:.6f}" for v in stats["outliers"]),
            ])
