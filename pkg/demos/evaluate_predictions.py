"""Scoring predicted labels against ground truth."""
import tempfile

import numpy as np

from pccforge import (ConfusionMatrix, LabeledCloud, accumulate, build_sequence,
                      class_metrics, evaluate_run, summary_metrics)

gt = np.array([1, 1, 2])
pred = np.array([1, 2, 2])
cm = class_metrics(accumulate(gt, pred))
print("class 1 IoU/acc", cm.iou[1], cm.accuracy[1])   # 0.5 0.5
print("class 2 IoU/acc", cm.iou[2], cm.accuracy[2])   # 0.5 1.0

# 475 correct door points, 275 false alarms, 250 misses.
counts = np.zeros((20, 20), dtype=np.int64)
counts[2, 2], counts[0, 2], counts[2, 0] = 475, 275, 250
print("door IoU", class_metrics(ConfusionMatrix(counts)).iou[2])
print(summary_metrics(class_metrics(ConfusionMatrix(counts))))

# Whole runs are read from two SemanticKITTI trees.
rng = np.random.default_rng(3)
work = tempfile.mkdtemp()
for seq in range(3):
    pts = rng.random((1000, 3))
    truth = rng.integers(0, 6, 1000)
    guess = np.where(rng.random(1000) < 0.8, truth, 0)
    build_sequence(LabeledCloud(pts, truth), f"{work}/gt", seq)
    build_sequence(LabeledCloud(pts, guess), f"{work}/pred", seq)
result = evaluate_run(f"{work}/gt", f"{work}/pred", range(3), out_dir=f"{work}/report")
print(result.summary_dict())
print(open(f"{work}/report/per_class.csv").read())
