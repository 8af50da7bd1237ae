"""Per-class point counts over a small synthetic corpus."""
import tempfile

import numpy as np

from pccforge import LabeledCloud, build_sequence, compute_distribution, unified_schema

rng = np.random.default_rng(1)
root = tempfile.mkdtemp(prefix="pccforge-stats-")

# Mostly unassigned points plus doors, windows and roof access.
p = np.zeros(20)
p[[0, 2, 3, 5, 6]] = [0.7, 0.03, 0.08, 0.1, 0.09]
for seq in range(4):
    n = 5000
    labels = rng.choice(20, size=n, p=p)
    build_sequence(LabeledCloud(rng.random((n, 3)), labels), root, seq)

table = compute_distribution(root, range(4), unified_schema())
print("total points", table.total)
for row in table.rows:
    if row.count:
        print(f"{row.label:2d} {row.class_name:<20} {row.count:6d} {row.percent:7.3f}%")
