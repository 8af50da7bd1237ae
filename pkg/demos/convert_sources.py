"""Converting annotated scans into SemanticKITTI sequences.

Two small source files, one PLY and one XYZ+label text, are written to a
scratch directory, mapped onto the unified class ids and stored as
sequences 00 and 01.
"""
import os
import tempfile

import numpy as np

from pccforge import parse_source, apply_remap, build_sequence, read_skitti_scan
from pccforge import LabeledCloud, unified_schema, load_remap_csv
from pccforge.dataset import frame_paths, merge_manifest

work = tempfile.mkdtemp(prefix="pccforge-demo-")
rng = np.random.default_rng(0)

# A PLY export with an integer label code per vertex.
codes = [7, 2, 3, 7, 9]
with open(os.path.join(work, "room.ply"), "w") as f:
    f.write("ply\nformat ascii 1.0\nelement vertex 5\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property float intensity\nproperty int label\nend_header\n")
    for c, (x, y, z) in zip(codes, rng.random((5, 3))):
        f.write(f"{x:.4f} {y:.4f} {z:.4f} 0.5 {c}\n")

# The XYZ text format: x y z label [remission]; '#' starts a comment.
with open(os.path.join(work, "hall.txt"), "w") as f:
    f.write("# hallway scan\n0 0 0 2\n1 0 0 2\nnan 0 0 1\n0 1 0 0 0.25\n")

# Mapping rows: source_dataset, source_key, target_id.
with open(os.path.join(work, "map.csv"), "w") as f:
    f.write("source_dataset,source_key,target_id\n")
    for key, target in [("2", 2), ("3", 3), ("7", 0), ("9", 0), ("1", 1)]:
        f.write(f"demo,{key},{target}\n")

schema = unified_schema()
table = load_remap_csv(os.path.join(work, "map.csv"), schema)
root = os.path.join(work, "dataset")

entries = []
for seq, (fname, fmt) in enumerate([("room.ply", "ply"), ("hall.txt", "xyzl")]):
    cloud, raw, qc = parse_source(os.path.join(work, fname), fmt)
    labels, unmapped = apply_remap(raw, table)
    print(fname, "->", dict(zip(raw, labels.tolist())), "unmapped:", unmapped)
    print("  qc:", qc.to_dict())
    cloud = LabeledCloud(cloud.points, labels, remission=cloud.remission)
    entries.append(build_sequence(cloud, root, seq, table.source_name))

manifest = merge_manifest(root, entries)
print("manifest points:", manifest.total_points)

# Reading back is bit exact.
back = read_skitti_scan(*frame_paths(root, 1, 0))
print("sequence 01 labels:", back.labels.tolist(),
      "classes:", [schema.name(int(c)) for c in back.labels])
print("files under", root)
