"""Multiclass evaluation: confusion matrices, precision/recall/F1, one-vs-rest
AUROC/AUPRC, accuracy, and logit-to-probability conversion.

Conventions (all tested):
  - confusion rows are true classes, columns predicted.
  - zero denominators yield 0.
  - macro metrics are unweighted means over evaluated classes.
  - AUROC is rank-based with ties counted 0.5; AUPRC uses step-wise area over
    distinct-score thresholds. Classes without both a positive and a negative
    sample are skipped and excluded from the macro mean (recorded).
  - per-class ranking scores are elementwise sigmoid probabilities of the
    logits; they need not sum to 1 across classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ContractError, FormatError, NumericError
from .tensor import stable_sigmoid


@dataclass
class ConfusionMatrix:
    """k x k counts; rows index the true class, columns the prediction."""

    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_normalized(self) -> np.ndarray:
        """Rows scaled to sum to 1; rows with no samples stay all-zero."""
        counts = self.counts.astype(np.float64)
        sums = counts.sum(axis=1, keepdims=True)
        out = np.zeros_like(counts)
        np.divide(counts, sums, out=out, where=sums > 0)
        return out


def confusion(preds: Sequence[int], labels: Sequence[int], k: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ContractError(f"preds shape {preds.shape} does not match labels "
                            f"shape {labels.shape}")
    for name, arr in (("preds", preds), ("labels", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise IndexError(f"{name} contain entries outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts=counts)


def prf(cm: ConfusionMatrix):
    """Per-class precision/recall/F1 plus their unweighted macro means."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return precision, recall, f1, (float(precision.mean()), float(recall.mean()),
                                   float(f1.mean()))


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def accuracy(cm: ConfusionMatrix) -> float:
    """trace / total."""
    total = cm.total
    if total == 0:
        raise ContractError("cannot compute accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0  # mean of 1-based positions i+1 .. j+1
        ranks[order[i:j + 1]] = avg
        i = j + 1
    return ranks


def binary_auroc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Rank-based area (Mann-Whitney form), ties counted as one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUROC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def binary_auprc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Step-wise area under the precision-recall curve, walking thresholds at
    the boundaries of descending-score tie groups."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0 or n_pos == positives.size:
        raise ContractError("AUPRC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    area = 0.0
    tp = 0
    seen = 0
    recall_prev = 0.0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_pos[i:j + 1].sum())
        seen += j - i + 1
        recall = tp / n_pos
        precision = tp / seen
        area += (recall - recall_prev) * precision
        recall_prev = recall
        i = j + 1
    return area


def ovr_ranking_metric(scores: np.ndarray, labels: np.ndarray, metric) -> tuple:
    """Apply a binary ranking metric one-vs-rest per class.

    Returns (per-class values with None for skipped classes, macro mean over
    evaluated classes, list of skipped class indices).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ContractError(f"scores shape {scores.shape} does not match "
                            f"{labels.shape[0]} labels")
    k = scores.shape[1]
    values: List[Optional[float]] = []
    skipped = []
    for c in range(k):
        pos = labels == c
        if not pos.any() or pos.all():
            values.append(None)
            skipped.append(c)
            continue
        values.append(float(metric(scores[:, c], pos)))
    evaluated = [v for v in values if v is not None]
    macro = float(np.mean(evaluated)) if evaluated else 0.0
    return values, macro, skipped


def auroc_ovr(scores: np.ndarray, labels: np.ndarray) -> tuple:
    return ovr_ranking_metric(scores, labels, binary_auroc)


def auprc_ovr(scores: np.ndarray, labels: np.ndarray) -> tuple:
    return ovr_ranking_metric(scores, labels, binary_auprc)


def logits_to_probs(logits: np.ndarray) -> np.ndarray:
    """Elementwise sigmoid per-class probabilities (deliberately not softmax)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise NumericError("logits contain non-finite entries")
    return stable_sigmoid(logits)


@dataclass
class EvalReport:
    """Everything the evaluation emits, with flat key-value serialization."""

    class_names: List[str]
    n_samples: int
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    auroc: List[Optional[float]]
    auprc: List[Optional[float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_auroc: float
    macro_auprc: float
    auroc_skipped: List[int] = field(default_factory=list)
    auprc_skipped: List[int] = field(default_factory=list)


def build_report(scores: np.ndarray, labels: np.ndarray,
                 class_names: Optional[Sequence[str]] = None) -> EvalReport:
    """Full report from per-class probability scores and integer labels.
    Predictions are the per-row argmax of the scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise ContractError(f"scores must be a non-empty n x k table, "
                            f"got shape {scores.shape}")
    k = scores.shape[1]
    names = list(class_names) if class_names else [f"class{i}" for i in range(k)]
    if len(names) != k:
        raise ContractError(f"{len(names)} class names for {k} classes")
    preds = np.argmax(scores, axis=1)
    cm = confusion(preds, labels, k)
    precision, recall, f1, (mp, mr, mf) = prf(cm)
    auroc, macro_auroc, auroc_skip = auroc_ovr(scores, labels)
    auprc, macro_auprc, auprc_skip = auprc_ovr(scores, labels)
    return EvalReport(class_names=names, n_samples=int(labels.size),
                      accuracy=accuracy(cm), precision=precision, recall=recall,
                      f1=f1, auroc=auroc, auprc=auprc, macro_precision=mp,
                      macro_recall=mr, macro_f1=mf, macro_auroc=macro_auroc,
                      macro_auprc=macro_auprc, auroc_skipped=auroc_skip,
                      auprc_skipped=auprc_skip)


def report_to_text(report: EvalReport) -> str:
    """Flat key=value lines. Keys: n_samples, accuracy, then per class
    {precision,recall,f1,auroc,auprc}_<class_name> (skipped ranking classes
    serialize as the string `skipped`), then macro_{precision,recall,f1,
    auroc,auprc}, then {auroc,auprc}_skipped as comma-joined class names."""
    lines = [f"n_samples={report.n_samples}", f"accuracy={report.accuracy:.17g}"]
    for i, name in enumerate(report.class_names):
        lines.append(f"precision_{name}={report.precision[i]:.17g}")
        lines.append(f"recall_{name}={report.recall[i]:.17g}")
        lines.append(f"f1_{name}={report.f1[i]:.17g}")
        for metric, values in (("auroc", report.auroc), ("auprc", report.auprc)):
            v = values[i]
            lines.append(f"{metric}_{name}=" + ("skipped" if v is None else f"{v:.17g}"))
    lines.append(f"macro_precision={report.macro_precision:.17g}")
    lines.append(f"macro_recall={report.macro_recall:.17g}")
    lines.append(f"macro_f1={report.macro_f1:.17g}")
    lines.append(f"macro_auroc={report.macro_auroc:.17g}")
    lines.append(f"macro_auprc={report.macro_auprc:.17g}")
    for metric, skipped in (("auroc", report.auroc_skipped),
                            ("auprc", report.auprc_skipped)):
        names = ",".join(report.class_names[i] for i in skipped)
        lines.append(f"{metric}_skipped={names}")
    return "\n".join(lines) + "\n"


def report_from_text(text: str, class_names: Sequence[str]) -> EvalReport:
    kv = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"report line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    names = list(class_names)

    def grab(key):
        if key not in kv:
            raise FormatError(f"report missing key {key!r}")
        return kv[key]

    def ranking(metric):
        vals = []
        for name in names:
            raw = grab(f"{metric}_{name}")
            vals.append(None if raw == "skipped" else float(raw))
        skipped_names = [s for s in grab(f"{metric}_skipped").split(",") if s]
        return vals, [names.index(s) for s in skipped_names]

    auroc, auroc_skip = ranking("auroc")
    auprc, auprc_skip = ranking("auprc")
    return EvalReport(
        class_names=names,
        n_samples=int(grab("n_samples")),
        accuracy=float(grab("accuracy")),
        precision=np.array([float(grab(f"precision_{n}")) for n in names]),
        recall=np.array([float(grab(f"recall_{n}")) for n in names]),
        f1=np.array([float(grab(f"f1_{n}")) for n in names]),
        auroc=auroc, auprc=auprc,
        macro_precision=float(grab("macro_precision")),
        macro_recall=float(grab("macro_recall")),
        macro_f1=float(grab("macro_f1")),
        macro_auroc=float(grab("macro_auroc")),
        macro_auprc=float(grab("macro_auprc")),
        auroc_skipped=auroc_skip, auprc_skipped=auprc_skip)


def confusion_to_csv(cm: ConfusionMatrix, class_names: Sequence[str]) -> str:
    """Counts as CSV: header `true\\predicted` then one row per true class."""
    names = list(class_names)
    if len(names) != cm.k:
        raise ContractError(f"{len(names)} class names for {cm.k} classes")
    lines = ["true\\predicted," + ",".join(names)]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(str(int(v)) for v in cm.counts[i]))
    return "\n".join(lines) + "\n"
