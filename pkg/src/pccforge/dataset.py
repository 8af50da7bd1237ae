"""SemanticKITTI folder layout, the three sequence split configurations,
label distributions and the training-config manifest."""

from __future__ import annotations

import csv
import enum
import logging
import os
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateSequence, IoFailure, MalformedRecord, MissingSequence
from .formats import read_skitti_scan, write_skitti_scan
from .model import LabeledCloud, LabelSchema, SequenceId, as_sequence, frame_name
from .parallel import pmap

log = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.csv"


# -- layout -----------------------------------------------------------------

def sequence_dir(root, seq) -> str:
    return os.path.join(root, "sequences", as_sequence(seq).render())


def frame_paths(root, seq, frame: int):
    d = sequence_dir(root, seq)
    name = frame_name(frame)
    return (os.path.join(d, "velodyne", name + ".bin"),
            os.path.join(d, "labels", name + ".label"))


def list_frames(root, seq) -> list[int]:
    """Frame numbers present under ``velodyne/``, ascending."""
    vdir = os.path.join(sequence_dir(root, seq), "velodyne")
    if not os.path.isdir(vdir):
        raise MissingSequence(f"sequence {as_sequence(seq)} not found under {root}")
    frames = []
    for name in os.listdir(vdir):
        stem, ext = os.path.splitext(name)
        if ext == ".bin" and stem.isdigit():
            frames.append(int(stem))
    return sorted(frames)


def list_sequences(root) -> list[SequenceId]:
    sdir = os.path.join(root, "sequences")
    if not os.path.isdir(sdir):
        return []
    out = []
    for name in os.listdir(sdir):
        try:
            out.append(SequenceId.parse(name))
        except ValueError:
            continue
    return sorted(out)


def read_frames(root, seq, strict=True) -> list[LabeledCloud]:
    return [read_skitti_scan(*frame_paths(root, seq, f), strict=strict)
            for f in list_frames(root, seq)]


def read_sequence(root, seq, strict=True) -> LabeledCloud:
    """All frames of a sequence concatenated into one cloud."""
    frames = read_frames(root, seq, strict=strict)
    if len(frames) == 1:
        return frames[0]
    if not frames:
        return LabeledCloud(np.empty((0, 3)), np.empty(0, dtype=np.uint16))
    return LabeledCloud(
        np.concatenate([c.points for c in frames]),
        np.concatenate([c.labels for c in frames]),
        remission=np.concatenate([c.remission for c in frames]),
        instance_ids=np.concatenate([c.instance_ids for c in frames]),
    )


@dataclass(frozen=True)
class ManifestEntry:
    sequence: SequenceId
    source_dataset: str
    frame_count: int
    point_count: int


@dataclass
class DatasetManifest:
    root: str
    entries: list[ManifestEntry]

    @property
    def total_points(self) -> int:
        return sum(e.point_count for e in self.entries)

    def write(self, path=None):
        path = path or os.path.join(self.root, MANIFEST_FILE)
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["sequence", "source_dataset", "frame_count", "point_count"])
            for e in sorted(self.entries, key=lambda e: e.sequence):
                w.writerow([e.sequence.render(), e.source_dataset, e.frame_count, e.point_count])
        return path


def read_manifest(root) -> DatasetManifest:
    path = os.path.join(root, MANIFEST_FILE)
    entries = []
    if os.path.exists(path):
        with open(path, encoding="utf-8", newline="") as f:
            for row in csv.DictReader(f):
                entries.append(ManifestEntry(SequenceId.parse(row["sequence"]),
                                             row["source_dataset"],
                                             int(row["frame_count"]),
                                             int(row["point_count"])))
    return DatasetManifest(str(root), entries)


def merge_manifest(root, new_entries) -> DatasetManifest:
    """Add entries to ``<root>/manifest.csv``, replacing same-sequence rows."""
    current = {e.sequence: e for e in read_manifest(root).entries}
    for e in new_entries:
        current[e.sequence] = e
    manifest = DatasetManifest(str(root), sorted(current.values(), key=lambda e: e.sequence))
    manifest.write()
    return manifest


def build_sequence(cloud: LabeledCloud, root, seq, source_dataset: str = "") -> ManifestEntry:
    """Write ``cloud`` as frame 000000 of a new sequence."""
    seq = as_sequence(seq)
    d = sequence_dir(root, seq)
    for sub in ("velodyne", "labels"):
        p = os.path.join(d, sub)
        if os.path.isdir(p) and os.listdir(p):
            raise DuplicateSequence(f"sequence {seq} already populated at {d}")
    try:
        for sub in ("velodyne", "labels"):
            os.makedirs(os.path.join(d, sub), exist_ok=True)
    except OSError as e:
        raise IoFailure(d, e) from e
    write_skitti_scan(cloud, *frame_paths(root, seq, 0))
    return ManifestEntry(seq, source_dataset, 1, len(cloud))


def scan_dataset(root, strict=True) -> DatasetManifest:
    """Manifest reconstructed from the files on disk. Source names come
    from ``manifest.csv`` when present."""
    sources = {e.sequence: e.source_dataset for e in read_manifest(root).entries}
    entries = []
    for seq in list_sequences(root):
        frames = read_frames(root, seq, strict=strict)
        entries.append(ManifestEntry(seq, sources.get(seq, ""), len(frames),
                                     sum(len(c) for c in frames)))
    return DatasetManifest(str(root), entries)


# -- splits -----------------------------------------------------------------

class SplitConfig(enum.Enum):
    COMBINED = "combined"
    ENFIELD_ONLY = "enfield-only"
    MEMPHIS_ONLY = "memphis-only"


# Inclusive sequence ranges per configuration and partition.
SPLIT_RANGES = {
    SplitConfig.COMBINED: {
        "train": [(0, 58), (118, 133)], "val": [(59, 59)], "test": [(60, 117), (134, 149)]},
    SplitConfig.ENFIELD_ONLY: {
        "train": [(0, 58)], "val": [(59, 59)], "test": [(60, 118)]},
    SplitConfig.MEMPHIS_ONLY: {
        "train": [(119, 133)], "val": [(134, 134)], "test": [(135, 149)]},
}

# Partition sizes as published alongside the ranges; several disagree with
# the ranges themselves and are only used for the discrepancy warnings.
STATED_COUNTS = {
    SplitConfig.COMBINED: {"train": 87, "val": 1, "test": 76},
    SplitConfig.ENFIELD_ONLY: {"train": 59, "val": 1, "test": 60},
    SplitConfig.MEMPHIS_ONLY: {"train": 15, "val": 1, "test": 15},
}

PARTITIONS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitSpec:
    name: SplitConfig
    train: frozenset
    val: frozenset
    test: frozenset

    def __post_init__(self):
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            both = getattr(self, a) & getattr(self, b)
            if both:
                raise ValueError(f"{a} and {b} overlap: {sorted(both)}")

    def partition(self, name) -> list[SequenceId]:
        return sorted(getattr(self, name))


def _expand(ranges):
    return frozenset(SequenceId(i) for lo, hi in ranges for i in range(lo, hi + 1))


def paper_splits(config) -> SplitSpec:
    """Train/val/test sequence sets for one configuration.

    Cardinalities come from the ranges; mismatches with the published
    counts are logged as warnings.
    """
    config = SplitConfig(config)
    sets = {p: _expand(SPLIT_RANGES[config][p]) for p in PARTITIONS}
    for p in PARTITIONS:
        stated = STATED_COUNTS[config][p]
        if len(sets[p]) != stated:
            log.warning("%s %s: ranges give %d sequences, published count is %d",
                        config.value, p, len(sets[p]), stated)
    return SplitSpec(config, **sets)


def write_split_files(spec: SplitSpec, root) -> list[str]:
    d = os.path.join(root, "splits", spec.name.value)
    os.makedirs(d, exist_ok=True)
    paths = []
    for p in PARTITIONS:
        path = os.path.join(d, f"{p}.txt")
        with open(path, "w", encoding="utf-8") as f:
            for s in spec.partition(p):
                f.write(s.render() + "\n")
        paths.append(path)
    return paths


def read_split_files(root, config) -> SplitSpec:
    config = SplitConfig(config)
    sets = {}
    for p in PARTITIONS:
        path = os.path.join(root, "splits", config.value, f"{p}.txt")
        with open(path, encoding="utf-8") as f:
            sets[p] = frozenset(SequenceId.parse(line) for line in f if line.strip())
    return SplitSpec(config, **sets)


# -- label distribution -----------------------------------------------------

@dataclass
class DistributionRow:
    label: int
    class_name: str
    count: int
    percent: float


@dataclass
class DistributionTable:
    rows: list[DistributionRow]
    total: int
    unknown: int = 0  # labels outside the schema, permissive reads only

    @property
    def zero_total(self) -> bool:
        return self.total == 0

    def percentages(self):
        return [r.percent for r in self.rows]


def sequence_label_counts(root, seq, strict=True) -> np.ndarray:
    counts = np.zeros(1 << 16, dtype=np.int64)
    for cloud in read_frames(root, seq, strict=strict):
        counts += np.bincount(cloud.labels, minlength=1 << 16)
    return counts


def compute_distribution(root, seqs, schema: LabelSchema, threads=1, strict=True) -> DistributionTable:
    """Per-class point counts and percentages over ``seqs``."""
    seqs = sorted({as_sequence(s) for s in seqs})
    parts = pmap(lambda s: sequence_label_counts(root, s, strict), seqs, threads)
    counts = np.zeros(1 << 16, dtype=np.int64)
    for c in parts:
        counts += c
    k = len(schema)
    known = counts[:k]
    total = int(known.sum())
    rows = [DistributionRow(cid, name, int(known[cid]),
                            100.0 * int(known[cid]) / total if total else 0.0)
            for cid, name in schema.classes]
    return DistributionTable(rows, total, int(counts[k:].sum()))


def write_distribution_csv(table: DistributionTable, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label", "class_name", "count", "percent"])
        for r in table.rows:
            w.writerow([r.label, r.class_name, r.count, f"{r.percent:.4f}"])


# -- training-config manifest -----------------------------------------------

HYPERPARAMETERS = {
    "learning_rate": 0.01,
    "momentum": 0.98,
    "weight_decay": 0.001,
    "lr_decay": 0.98477,
    "batch_size": 1,
}


def _fmt_list(seqs):
    return "[" + ", ".join(s.render() for s in seqs) + "]"


def emit_training_config(config, out):
    spec = paper_splits(config)
    lines = [f"config: {spec.name.value}"]
    lines += [f"{k}: {v}" for k, v in HYPERPARAMETERS.items()]
    lines += [f"{p}: {_fmt_list(spec.partition(p))}" for p in PARTITIONS]
    try:
        with open(out, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoFailure(out, e) from e


def read_training_config(path):
    """Parse an emitted manifest into ``(values, SplitSpec)``."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise MalformedRecord(path, lineno, "expected 'key: value'")
            values[key.strip()] = value.strip()
    sets = {}
    for p in PARTITIONS:
        body = values.pop(p).strip("[]")
        sets[p] = frozenset(SequenceId.parse(t) for t in body.split(",") if t.strip())
    parsed = {k: (int(v) if k == "batch_size" else float(v))
              for k, v in values.items() if k in HYPERPARAMETERS}
    parsed["config"] = values["config"]
    return parsed, SplitSpec(SplitConfig(values["config"]), **sets)

