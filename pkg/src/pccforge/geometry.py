"""Per-scan geometric metrics: footprint density, nearest-neighbour spacing,
scene height and surface-variation curvature, plus pooled histograms."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import read_sequence
from .errors import DegenerateFootprint, EmptyCloud, TooFewPoints
from .kdtree import SpatialIndex
from .model import LabeledCloud, as_sequence
from .parallel import pmap

DEFAULT_K = 16
DEFAULT_BINS = 50
AREA_DEFINITION = "xy_bounding_box"
METRICS = ("density", "mean_nn_distance", "scene_height", "mean_curvature")


def _coords(obj) -> np.ndarray:
    if isinstance(obj, SpatialIndex):
        return obj.points
    if isinstance(obj, LabeledCloud):
        return obj.points.astype(np.float64)
    return np.asarray(obj, dtype=np.float64).reshape(-1, 3)


def build_index(cloud) -> SpatialIndex:
    pts = _coords(cloud)
    if len(pts) == 0:
        raise EmptyCloud("cannot index an empty cloud")
    return SpatialIndex(pts)


def point_density(cloud) -> float:
    """Points per square metre of the XY bounding box."""
    pts = _coords(cloud)
    if len(pts) == 0:
        raise EmptyCloud("empty cloud has no density")
    span = pts[:, :2].max(axis=0) - pts[:, :2].min(axis=0)
    area = float(span[0]) * float(span[1])
    if area == 0.0:
        raise DegenerateFootprint(f"XY footprint has zero area (extent {span.tolist()})")
    return len(pts) / area


def scene_height(cloud) -> float:
    pts = _coords(cloud)
    if len(pts) == 0:
        raise EmptyCloud("empty cloud has no height")
    return float(pts[:, 2].max() - pts[:, 2].min())


def mean_nn_distance(index: SpatialIndex) -> float:
    """Mean distance from each point to its nearest other point."""
    if len(index) < 2:
        raise TooFewPoints("nearest-neighbour distance needs at least 2 points")
    dist, _ = index.knn_self(1)
    return float(np.mean(dist[:, 0]))


def sym3_eigvalsh(a: np.ndarray) -> np.ndarray:
    """Eigenvalues of a stack of symmetric 3x3 matrices, descending.

    Closed-form trigonometric solution of the characteristic cubic.
    """
    a = np.asarray(a, dtype=np.float64)
    a00, a11, a22 = a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]
    a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]
    q = (a00 + a11 + a22) / 3.0
    b00, b11, b22 = a00 - q, a11 - q, a22 - q
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    c00, c11, c22 = b00 / safe, b11 / safe, b22 / safe
    c01, c02, c12 = a01 / safe, a02 / safe, a12 / safe
    det = (c00 * (c11 * c22 - c12 * c12)
           - c01 * (c01 * c22 - c12 * c02)
           + c02 * (c01 * c12 - c11 * c02))
    r = np.clip(det / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * math.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    out = np.stack([e1, e2, e3], axis=-1)
    out = np.where((p > 0)[..., None], out, q[..., None])
    # Diagonal input: the diagonal is exact.
    diag = -np.sort(-np.stack([a00, a11, a22], axis=-1), axis=-1)
    return np.where((p1 == 0)[..., None], diag, out)


def point_curvatures(index: SpatialIndex, k: int = DEFAULT_K, chunk: int = 8192) -> np.ndarray:
    """Surface variation smallest/sum of covariance eigenvalues over each
    point and its k nearest other points."""
    n = len(index)
    if n < 4:
        raise TooFewPoints("curvature needs at least 4 points")
    pts = index.points
    out = np.empty(n)
    for s in range(0, n, chunk):
        ids = np.arange(s, min(s + chunk, n))
        _, nb = index.query(pts[ids], k, exclude=ids)
        nb = nb[:, nb.min(axis=0) >= 0]  # drop padding when k >= n
        hood = np.concatenate([pts[ids][:, None, :], pts[nb]], axis=1)
        centered = hood - hood.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", centered, centered) / hood.shape[1]
        ev = np.maximum(sym3_eigvalsh(cov), 0.0)
        total = ev.sum(axis=1)
        out[ids] = np.where(total > 0, ev[:, 2] / np.where(total > 0, total, 1.0), 0.0)
    return out


def mean_curvature(index: SpatialIndex, k: int = DEFAULT_K) -> float:
    return float(np.mean(point_curvatures(index, k)))


def histogram(values, bins: int = DEFAULT_BINS):
    """Equal-width bins over [min, max]; half-open except the last bin."""
    values = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if len(values) == 0:
        return []
    counts, edges = np.histogram(values, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


@dataclass
class SequenceGeometry:
    sequence: str
    density: float | None
    mean_nn_distance: float | None
    scene_height: float
    mean_curvature: float | None
    k: int = DEFAULT_K
    area_definition: str = AREA_DEFINITION

    def to_dict(self):
        return asdict(self)


@dataclass
class GeometricSummary:
    sequences: list[SequenceGeometry]
    histograms: dict[str, list] = field(default_factory=dict)


def _maybe(fn, *args):
    try:
        return fn(*args)
    except (DegenerateFootprint, TooFewPoints):
        return None


def cloud_geometry(cloud, sequence="", k: int = DEFAULT_K) -> SequenceGeometry:
    pts = _coords(cloud)
    if len(pts) == 0:
        raise EmptyCloud(f"sequence {sequence} has no points")
    index = SpatialIndex(pts)
    return SequenceGeometry(
        sequence=str(sequence),
        density=_maybe(point_density, pts),
        mean_nn_distance=_maybe(mean_nn_distance, index),
        scene_height=scene_height(pts),
        mean_curvature=_maybe(mean_curvature, index, k),
        k=k,
    )


def summarize_geometry(root, seqs, bins: int = DEFAULT_BINS, k: int = DEFAULT_K,
                       threads: int = 1, strict: bool = True) -> GeometricSummary:
    """Per-sequence metrics (all frames of a sequence pooled) and histograms
    of each metric across sequences. Undefined metrics (zero-area footprint,
    too few points) are reported as ``None`` and left out of histograms."""
    seqs = sorted(as_sequence(s) for s in seqs)

    def one(seq):
        return cloud_geometry(read_sequence(root, seq, strict=strict), seq.render(), k)

    rows = pmap(one, seqs, threads)
    hists = {m: histogram([getattr(r, m) for r in rows], bins) for m in METRICS}
    return GeometricSummary(rows, hists)


def write_geometry_report(summary: GeometricSummary, out_dir) -> list[str]:
    """Write ``geometry.jsonl`` and ``hist_<metric>.csv``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "geometry.jsonl")]
    with open(paths[0], "w", encoding="utf-8") as f:
        for row in summary.sequences:
            f.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")
    for metric, bins in summary.histograms.items():
        path = os.path.join(out_dir, f"hist_{metric}.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["bin_start", "bin_end", "count"])
            for start, end, count in bins:
                w.writerow([repr(start), repr(end), count])
        paths.append(path)
    return paths
