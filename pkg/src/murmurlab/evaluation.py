"""Grouped stratified splitting and the clinical metric suite.

Splitting happens at the recording level so that heart cycles from one
recording never straddle the train/test boundary (that would leak
near-duplicate samples and inflate every metric).  Metrics cover per-class
one-vs-rest sensitivity/specificity/accuracy/MCC plus balanced and
prevalence-weighted aggregates and the multiclass correlation coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import INTENSITY_ORDER, MurmurIntensity

CLASS_NAMES = tuple(c.value for c in INTENSITY_ORDER)


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class RecordingLabel:
    """Per-recording label summary used for split planning."""

    recording_id: str
    sc_label: Optional[MurmurIntensity]
    mv_label: Optional[MurmurIntensity] = None  # None = removed by selection
    n_cycles: int = 0


@dataclass(frozen=True)
class SplitPlan:
    """Recording-level partition: a shared test set and two training pools."""

    test_recordings: tuple[str, ...]
    train_sc: dict  # recording_id -> sc_label, every non-test recording with an SC label
    train_hq: dict  # recording_id -> mv_label, every non-test selected recording
    fraction: float

    def __post_init__(self):
        test = set(self.test_recordings)
        if test & set(self.train_sc) or test & set(self.train_hq):
            raise EvaluationError("test recordings leaked into a training pool")


def grouped_split(labels: Sequence[RecordingLabel], fraction: float, seed: int) -> SplitPlan:
    """Stratified recording-level split.

    Per intensity class the plan reserves ceil(fraction * n_class) of the
    selected recordings for the test set, drawing only from recordings whose
    site label matches the majority vote (their cycles have unambiguous
    labels).  Everything else feeds the two training pools.
    """
    if not (0.0 < fraction < 1.0):
        raise EvaluationError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    test: list[str] = []
    for cls in INTENSITY_ORDER:
        members = [r for r in labels if r.mv_label == cls]
        eligible = sorted(r.recording_id for r in members if r.sc_label == r.mv_label)
        n_test = math.ceil(fraction * len(members))
        if n_test == 0 or not eligible:
            raise EvaluationError(
                f"class {cls.value!r} has no eligible recordings (site label = majority vote)")
        if len(eligible) < n_test:
            raise EvaluationError(
                f"class {cls.value!r}: need {n_test} eligible recordings, have {len(eligible)}")
        pick = rng.choice(len(eligible), size=n_test, replace=False)
        test.extend(eligible[i] for i in sorted(pick))
    test_set = set(test)
    train_sc = {r.recording_id: r.sc_label for r in labels
                if r.sc_label is not None and r.recording_id not in test_set}
    train_hq = {r.recording_id: r.mv_label for r in labels
                if r.mv_label is not None and r.recording_id not in test_set}
    return SplitPlan(test_recordings=tuple(test), train_sc=train_sc, train_hq=train_hq,
                     fraction=fraction)


# ---------------------------------------------------------------------------
# Confusion matrix and metrics
# ---------------------------------------------------------------------------

def _class_index(label) -> int:
    name = label.value if isinstance(label, MurmurIntensity) else str(label)
    try:
        return CLASS_NAMES.index(name)
    except ValueError:
        raise EvaluationError(f"unknown class {name!r}")


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[true][predicted] over the three intensities, fixed class order."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (3, 3) or np.any(counts < 0):
            raise EvaluationError("confusion matrix must be 3x3 with non-negative counts")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(y_true: Sequence, y_pred: Sequence) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise EvaluationError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    counts = np.zeros((3, 3), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[_class_index(t), _class_index(p)] += 1
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class Metrics:
    sensitivity: Optional[float]  # None when the class never occurs (undefined)
    specificity: Optional[float]
    accuracy: float
    mcc: float
    degenerate_mcc: bool = False  # a zero factor forced mcc to 0


def _binary_mcc(tp: float, tn: float, fp: float, fn: float) -> tuple[float, bool]:
    factors = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if factors == 0:
        return 0.0, True
    return float((tp * tn - fp * fn) / math.sqrt(factors)), False


def per_class_metrics(cm: ConfusionMatrix, cls) -> Metrics:
    """One-vs-rest metrics for a single intensity class."""
    if cm.total == 0:
        raise EvaluationError("confusion matrix is empty")
    c = cls if isinstance(cls, int) else _class_index(cls)
    m = cm.counts
    tp = float(m[c, c])
    fn = float(m[c].sum() - tp)
    fp = float(m[:, c].sum() - tp)
    tn = float(cm.total - tp - fn - fp)
    sens = tp / (tp + fn) if tp + fn > 0 else None
    spec = tn / (tn + fp) if tn + fp > 0 else None
    mcc, degenerate = _binary_mcc(tp, tn, fp, fn)
    return Metrics(sensitivity=sens, specificity=spec, accuracy=(tp + tn) / cm.total,
                   mcc=mcc, degenerate_mcc=degenerate)


def multiclass_mcc(cm: ConfusionMatrix) -> tuple[float, bool]:
    """Matthews correlation generalized to K classes (the R_K statistic)."""
    m = cm.counts.astype(np.float64)
    s = m.sum()
    c = np.trace(m)
    t = m.sum(axis=1)  # true-class totals
    p = m.sum(axis=0)  # predicted-class totals
    cov = c * s - float(p @ t)
    denom_sq = (s * s - float(p @ p)) * (s * s - float(t @ t))
    if denom_sq <= 0:
        return 0.0, True
    return float(cov / math.sqrt(denom_sq)), False


def aggregate_metrics(cm: ConfusionMatrix, weights: str = "balanced") -> Metrics:
    """Aggregate over the three classes.

    ``balanced`` averages per-class values uniformly (macro); ``support``
    weights them by true-class prevalence.  Accuracy is the overall fraction
    correct (trace/total); MCC is the multiclass form.
    """
    if weights not in ("balanced", "support"):
        raise EvaluationError(f"weights must be 'balanced' or 'support', got {weights!r}")
    per_class = [per_class_metrics(cm, c) for c in range(3)]
    support = cm.counts.sum(axis=1).astype(np.float64)

    def combine(attr: str) -> Optional[float]:
        pairs = [(getattr(pc, attr), support[i]) for i, pc in enumerate(per_class)
                 if getattr(pc, attr) is not None]
        if not pairs:
            return None
        if weights == "balanced":
            return float(np.mean([v for v, _ in pairs]))
        total = sum(s for _, s in pairs)
        if total == 0:
            return 0.0
        return float(sum(v * s for v, s in pairs) / total)

    mcc, degenerate = multiclass_mcc(cm)
    return Metrics(
        sensitivity=combine("sensitivity"),
        specificity=combine("specificity"),
        accuracy=float(np.trace(cm.counts) / cm.total),
        mcc=mcc,
        degenerate_mcc=degenerate,
    )


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Macro-averaged sensitivity, the standard balanced accuracy."""
    value = aggregate_metrics(cm, "balanced").sensitivity
    return 0.0 if value is None else value


# ---------------------------------------------------------------------------
# Run evaluation / report rows
# ---------------------------------------------------------------------------

def evaluate_model(model, X: np.ndarray, y_true: Sequence) -> ConfusionMatrix:
    """Confusion matrix of a trained model on held-out cycles."""
    y_pred = model.predict(np.asarray(X, dtype=np.float64))
    return confusion(list(y_true), list(y_pred))


def majority_by_recording(recording_ids: Sequence[str], y_pred: Sequence) -> dict:
    """Fold per-cycle predictions into one label per recording (plain
    majority, ties to the earlier class in the fixed order).

    Plumbing only: reports stay at heart-cycle granularity.
    """
    votes: dict[str, np.ndarray] = {}
    for rid, pred in zip(recording_ids, y_pred):
        votes.setdefault(rid, np.zeros(3, dtype=np.int64))[_class_index(pred)] += 1
    return {rid: MurmurIntensity(CLASS_NAMES[int(np.argmax(v))]) for rid, v in votes.items()}


def metric_rows(dataset: str, classifier: str, cm: ConfusionMatrix) -> list[dict]:
    """Report rows: one aggregate ('all', balanced) + one per class."""
    rows = []
    agg = aggregate_metrics(cm, "balanced")
    rows.append({"dataset": dataset, "classifier": classifier, "class": "all",
                 "sensitivity": agg.sensitivity, "specificity": agg.specificity,
                 "accuracy": agg.accuracy, "mcc": agg.mcc})
    for i, name in enumerate(CLASS_NAMES):
        pc = per_class_metrics(cm, i)
        rows.append({"dataset": dataset, "classifier": classifier, "class": name,
                     "sensitivity": pc.sensitivity, "specificity": pc.specificity,
                     "accuracy": pc.accuracy, "mcc": pc.mcc})
    return rows


def format_report(rows: Iterable[dict]) -> str:
    """Fixed-width console rendering of report rows."""
    header = f"{'dataset':<8}{'classifier':<16}{'class':<16}" \
             f"{'sens':>8}{'spec':>8}{'acc':>8}{'mcc':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        def fmt(v):
            return f"{'--':>8}" if v is None else f"{v:8.4f}"
        lines.append(f"{row['dataset']:<8}{row['classifier']:<16}{row['class']:<16}"
                     f"{fmt(row['sensitivity'])}{fmt(row['specificity'])}"
                     f"{fmt(row['accuracy'])}{fmt(row['mcc'])}")
    return "\n".join(lines)
