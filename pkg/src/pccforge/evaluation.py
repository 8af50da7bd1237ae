"""Confusion-matrix based segmentation metrics.

Per-class accuracy is recall, TP / (TP + FN). Classes with an undefined
metric (zero denominator) are excluded from the means.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .dataset import sequence_dir
from .errors import (ClassOutOfRange, LengthMismatch, MissingPrediction,
                     MissingSequence, NoDefinedClasses, SizeMismatch)
from .formats import read_label_words, unpack_labels
from .model import CLASS_NAMES, NUM_CLASSES, UNASSIGNED, as_sequence
from .parallel import pmap

ACCURACY_DEFINITION = "recall: TP / (TP + FN)"
UNDEFINED_POLICY = "classes with a zero denominator are excluded from means"


class ConfusionMatrix:
    """``counts[g, p]`` = points with ground truth ``g`` predicted as ``p``."""

    def __init__(self, counts=None, num_classes=NUM_CLASSES):
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        counts = np.array(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (counts < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")
        counts.flags.writeable = False
        self.counts = counts

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    __hash__ = None


def accumulate(gt, pred, matrix: ConfusionMatrix | None = None) -> ConfusionMatrix:
    """Return ``matrix`` plus the tally of ``(gt[i], pred[i])`` pairs."""
    if matrix is None:
        matrix = ConfusionMatrix()
    gt = np.asarray(gt).ravel()
    pred = np.asarray(pred).ravel()
    if gt.shape != pred.shape:
        raise LengthMismatch(f"gt has {gt.size} labels, pred has {pred.size}")
    k = matrix.num_classes
    for name, a in (("gt", gt), ("pred", pred)):
        if a.size and (a.min() < 0 or a.max() >= k):
            raise ClassOutOfRange(f"{name} contains labels outside 0..{k - 1}")
    tally = np.bincount(gt.astype(np.int64) * k + pred.astype(np.int64), minlength=k * k)
    return ConfusionMatrix(matrix.counts + tally.reshape(k, k))


@dataclass
class ClassMetrics:
    """Per-class counts and ratios; ``nan`` marks an undefined ratio."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    iou: np.ndarray
    accuracy: np.ndarray

    def __len__(self):
        return len(self.tp)


def class_metrics(matrix: ConfusionMatrix) -> ClassMetrics:
    c = matrix.counts
    tp = np.diag(c).copy()
    fn = c.sum(axis=1) - tp
    fp = c.sum(axis=0) - tp
    union = tp + fp + fn
    row = tp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / np.where(union > 0, union, 1), np.nan)
        acc = np.where(row > 0, tp / np.where(row > 0, row, 1), np.nan)
    return ClassMetrics(tp, fp, fn, iou, acc)


def _mean_defined(values):
    v = values[~np.isnan(values)]
    return float(np.mean(v)) if v.size else None


class SummaryMetrics:
    """Mean accuracy, mIoU over all classes and mIoU without class 0.

    Reading a mean that has no defined class raises ``NoDefinedClasses``;
    ``to_dict`` reports it as ``None`` instead.
    """

    def __init__(self, mean_accuracy, miou_all, miou_excl_unassigned):
        self._values = {"mean_accuracy": mean_accuracy, "miou_all": miou_all,
                        "miou_excl_unassigned": miou_excl_unassigned}

    def _get(self, name):
        v = self._values[name]
        if v is None:
            raise NoDefinedClasses(f"{name}: no class has a defined value")
        return v

    mean_accuracy = property(lambda self: self._get("mean_accuracy"))
    miou_all = property(lambda self: self._get("miou_all"))
    miou_excl_unassigned = property(lambda self: self._get("miou_excl_unassigned"))

    def to_dict(self):
        return dict(self._values)

    def __repr__(self):
        return "SummaryMetrics(" + ", ".join(f"{k}={v}" for k, v in self._values.items()) + ")"


def summary_metrics(cm: ClassMetrics) -> SummaryMetrics:
    mean_acc = _mean_defined(cm.accuracy)
    miou_all = _mean_defined(cm.iou)
    keep = np.arange(len(cm)) != UNASSIGNED
    miou_excl = _mean_defined(cm.iou[keep])
    if mean_acc is None and miou_all is None:
        raise NoDefinedClasses("no class has a defined IoU or accuracy")
    return SummaryMetrics(mean_acc, miou_all, miou_excl)


@dataclass
class EvalResult:
    matrix: ConfusionMatrix
    classes: ClassMetrics
    summary: SummaryMetrics
    sequences: list[str]

    @property
    def total_points(self):
        return self.matrix.total

    def summary_dict(self):
        d = self.summary.to_dict()
        d.update(total_points=self.total_points, sequences=self.sequences,
                 accuracy_definition=ACCURACY_DEFINITION,
                 undefined_policy=UNDEFINED_POLICY)
        return d


def _label_dir(root, seq):
    return os.path.join(sequence_dir(root, seq), "labels")


def sequence_matrix(gt_root, pred_root, seq) -> ConfusionMatrix:
    gdir, pdir = _label_dir(gt_root, seq), _label_dir(pred_root, seq)
    if not os.path.isdir(gdir):
        raise MissingSequence(f"sequence {seq} has no labels under {gt_root}")
    frames = sorted(f for f in os.listdir(gdir) if f.endswith(".label"))
    matrix = ConfusionMatrix()
    for name in frames:
        ppath = os.path.join(pdir, name)
        if not os.path.isfile(ppath):
            raise MissingPrediction(f"no prediction {ppath} for sequence {seq}")
        gt, _ = unpack_labels(read_label_words(os.path.join(gdir, name)))
        pred, _ = unpack_labels(read_label_words(ppath))
        if len(gt) != len(pred):
            raise SizeMismatch(
                f"sequence {seq} frame {name}: {len(gt)} ground-truth vs {len(pred)} predicted labels")
        matrix = accumulate(gt, pred, matrix)
    return matrix


def evaluate_run(gt_root, pred_root, seqs, out_dir=None, threads=1) -> EvalResult:
    """Evaluate predictions over ``seqs``; only the semantic half of each
    label word is used. With ``out_dir``, writes ``per_class.csv`` and
    ``summary.json``."""
    seqs = sorted({as_sequence(s) for s in seqs})
    parts = pmap(lambda s: sequence_matrix(gt_root, pred_root, s), seqs, threads)
    matrix = ConfusionMatrix()
    for m in parts:
        matrix = matrix + m
    cm = class_metrics(matrix)
    result = EvalResult(matrix, cm, summary_metrics(cm), [s.render() for s in seqs])
    if out_dir is not None:
        write_eval_reports(result, out_dir)
    return result


def _fmt(v):
    return "NA" if math.isnan(v) else repr(float(v))


def write_eval_reports(result: EvalResult, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cm = result.classes
    csv_path = os.path.join(out_dir, "per_class.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label", "class_name", "tp", "fp", "fn", "iou", "accuracy"])
        for c in range(len(cm)):
            name = CLASS_NAMES[c] if c < len(CLASS_NAMES) else str(c)
            w.writerow([c, name, int(cm.tp[c]), int(cm.fp[c]), int(cm.fn[c]),
                        _fmt(cm.iou[c]), _fmt(cm.accuracy[c])])
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(result.summary_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return [csv_path, json_path]
