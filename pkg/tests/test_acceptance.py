"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import collections
import contextlib
import functools
import io
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from _synth import (ENFIELD_PROFILE, finite_float32, random_cloud, room_cloud,  # noqa: E402
                    write_identity_mapping, write_room_sources)
from oracles import scalar_metrics  # noqa: E402
from pccforge import cli  # noqa: E402
from pccforge.dataset import (HYPERPARAMETERS, SplitConfig, build_sequence,  # noqa: E402
                              compute_distribution, emit_training_config, paper_splits,
                              read_training_config)
from pccforge.evaluation import (ConfusionMatrix, accumulate, class_metrics,  # noqa: E402
                                 summary_metrics)
from pccforge.formats import (pack_labels, read_skitti_scan, unpack_labels,  # noqa: E402
                              write_skitti_scan)
from pccforge.geometry import (build_index, mean_curvature, mean_nn_distance,  # noqa: E402
                               point_density, scene_height)
from pccforge.kdtree import SpatialIndex  # noqa: E402
from pccforge.model import LabeledCloud, SequenceId, unified_schema  # noqa: E402
from pccforge.remap import RemapTable, apply_remap, normalize_key  # noqa: E402

RESULTS = []
SEED = 20240611


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as e:
                line = f"FAIL criterion {number}: {title} ({type(e).__name__}: {e})"
                RESULTS.append(line)
                print(line)
                raise
            line = f"PASS criterion {number}: {title} [{time.perf_counter() - t0:.1f}s]"
            if detail:
                line += f" {detail}"
            RESULTS.append(line)
            print(line)
        return run
    return wrap


def _tmp():
    return tempfile.TemporaryDirectory(prefix="pccforge-acc-")


# -- 1 ----------------------------------------------------------------------

@criterion(1, "bit-exact scan round-trip of 1000 clouds under 60 s")
def test_c1_roundtrip():
    rng = np.random.default_rng(SEED)
    sizes = rng.integers(0, 100_001, size=1000)
    sizes[:4] = [0, 1, 2, 100_000]
    with _tmp() as d:
        scan, label = os.path.join(d, "s.bin"), os.path.join(d, "s.label")
        t0 = time.perf_counter()
        for n in sizes:
            n = int(n)
            cloud = LabeledCloud(finite_float32(rng, 3 * n).reshape(n, 3),
                                 rng.integers(0, 20, n), finite_float32(rng, n),
                                 rng.integers(0, 1 << 16, n))
            write_skitti_scan(cloud, scan, label)
            back = read_skitti_scan(scan, label)
            assert np.array_equal(back.points.view(np.uint32), cloud.points.view(np.uint32))
            assert np.array_equal(back.remission.view(np.uint32),
                                  cloud.remission.view(np.uint32))
            assert np.array_equal(back.labels, cloud.labels)
            assert np.array_equal(back.instance_ids, cloud.instance_ids)
        elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    return f"({int(sizes.sum())} points, {elapsed:.1f}s)"


# -- 2 ----------------------------------------------------------------------

@criterion(2, "file sizes 16N/4N and label-word involution over 1e6 pairs")
def test_c2_format_law():
    rng = np.random.default_rng(SEED + 2)
    with _tmp() as d:
        scan, label = os.path.join(d, "s.bin"), os.path.join(d, "s.label")
        for n in [0, 1, 2, 3, 17, 1000, *rng.integers(0, 50_000, 30).tolist()]:
            write_skitti_scan(random_cloud(rng, n), scan, label)
            assert os.path.getsize(scan) == 16 * n
            assert os.path.getsize(label) == 4 * n
    sem = rng.integers(0, 1 << 16, 1_000_000)
    inst = rng.integers(0, 1 << 16, 1_000_000)
    s2, i2 = unpack_labels(pack_labels(sem, inst))
    assert np.array_equal(s2, sem) and np.array_equal(i2, inst)
    words = rng.integers(0, 1 << 32, 1_000_000, dtype=np.uint64).astype(np.uint32)
    assert np.array_equal(pack_labels(*unpack_labels(words)), words)


# -- 3 ----------------------------------------------------------------------

class _Capture(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages = []

    def emit(self, record):
        self.messages.append(record.getMessage())


def _ids(*ranges):
    return {SequenceId(i) for lo, hi in ranges for i in range(lo, hi + 1)}


@criterion(3, "split ranges verbatim with cardinality warnings")
def test_c3_splits():
    expected = {
        "enfield-only": (_ids((0, 58)), _ids((59, 59)), _ids((60, 118))),
        "memphis-only": (_ids((119, 133)), _ids((134, 134)), _ids((135, 149))),
        "combined": (_ids((0, 58), (118, 133)), _ids((59, 59)),
                     _ids((60, 117), (134, 149))),
    }
    handler = _Capture()
    logger = logging.getLogger("pccforge")
    logger.addHandler(handler)
    level = logger.level
    logger.setLevel(logging.WARNING)
    try:
        for config, (train, val, test) in expected.items():
            spec = paper_splits(config)
            assert set(spec.train) == train
            assert set(spec.val) == val
            assert set(spec.test) == test
    finally:
        logger.removeHandler(handler)
        logger.setLevel(level)
    text = "\n".join(handler.messages)
    for got, stated in ((75, 87), (74, 76), (59, 60)):
        assert f"ranges give {got} sequences, published count is {stated}" in text, text
    assert len(handler.messages) == 3


# -- 4 ----------------------------------------------------------------------

@criterion(4, "label distribution matches generator tallies")
def test_c4_distribution():
    rng = np.random.default_rng(SEED + 4)
    tally = collections.Counter()
    with _tmp() as root:
        for s in range(12):
            cloud = room_cloud(rng, int(rng.integers(2000, 20_000)), ENFIELD_PROFILE)
            tally.update(int(v) for v in cloud.labels)
            build_sequence(cloud, root, s)
        table = compute_distribution(root, range(12), unified_schema(), threads=4)
    total = sum(tally.values())
    assert table.total == total
    for row in table.rows:
        assert row.count == tally.get(row.label, 0)
        assert abs(row.percent - 100.0 * tally.get(row.label, 0) / total) <= 1e-9
    assert abs(table.rows[0].percent - 67.92) < 1.0  # profile sanity
    return f"({total} points)"


# -- 5 ----------------------------------------------------------------------

def _close(got, want):
    if want is None:
        return math.isnan(got) if isinstance(got, float) else got is None
    return abs(got - want) <= 1e-12


@criterion(5, "metrics equal the scalar oracle; door IoU 0.475")
def test_c5_metrics():
    rng = np.random.default_rng(SEED + 5)
    for _ in range(500):
        n = int(rng.integers(1, 10_001))
        gt = rng.integers(0, int(rng.integers(1, 21)), n)
        noise = rng.random(n) < rng.random()
        pred = np.where(noise, rng.integers(0, 20, n), gt)
        cm = class_metrics(accumulate(gt, pred))
        ref = scalar_metrics(gt.tolist(), pred.tolist())
        for c in range(20):
            assert _close(float(cm.iou[c]), ref["iou"][c])
            assert _close(float(cm.accuracy[c]), ref["acc"][c])
        summary = summary_metrics(cm).to_dict()
        for key in ("mean_accuracy", "miou_all", "miou_excl_unassigned"):
            assert _close(summary[key], ref[key]), key
    counts = np.zeros((20, 20), dtype=np.int64)
    counts[2, 2], counts[0, 2], counts[2, 0] = 475, 275, 250
    door = class_metrics(ConfusionMatrix(counts))
    assert (door.tp[2], door.fp[2], door.fn[2]) == (475, 275, 250)
    assert door.iou[2] == 0.475


# -- 6 ----------------------------------------------------------------------

def _sq(q, p):
    d = q - p
    return (d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1]) + d[..., 2] * d[..., 2]


def _brute_knn(pts, k, exclude_self):
    d2 = _sq(pts[:, None, :], pts[None, :, :])
    if exclude_self:
        np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]  # stable: lower index first
    return np.sqrt(np.take_along_axis(d2, order, axis=1)), order


def _rel(a, b):
    return abs(a - b) / abs(b)


@criterion(6, "geometry oracles: grid, plane, brute-force kNN, scale law")
def test_c6_geometry():
    rng = np.random.default_rng(SEED + 6)
    # (a) unit grid
    gx, gy = np.meshgrid(np.arange(10.0), np.arange(10.0))
    grid = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(100)])
    assert mean_nn_distance(build_index(grid)) == 1.0

    # (b) coplanar clouds in arbitrary orientations
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(20, 2000))
        uv = rng.uniform(-10, 10, (n, 2))
        basis = np.linalg.qr(rng.normal(size=(3, 3)))[0][:, :2]
        pts = uv @ basis.T + rng.uniform(-100, 100, 3)
        worst = max(worst, mean_curvature(build_index(pts)))
    assert worst <= 1e-7, worst

    # (c) k-d tree against brute force, including tie-heavy lattices
    for i in range(200):
        n = int(rng.integers(2, 2001))
        k = int(rng.integers(1, 33))
        if i % 4 == 0:
            pts = rng.integers(0, 6, (n, 3)).astype(np.float64)
        else:
            pts = rng.uniform(-20, 20, (n, 3))
        tree = SpatialIndex(pts)
        exclude_self = i % 2 == 0
        if exclude_self:
            d, ix = tree.knn_self(k)
        else:
            d, ix = tree.query(pts, k)
        bd, bi = _brute_knn(pts, k, exclude_self)
        kk = bd.shape[1] if not exclude_self else min(k, n - 1)
        assert np.array_equal(ix[:, :kk], bi[:, :kk]), f"cloud {i}"
        assert np.array_equal(d[:, :kk], bd[:, :kk]), f"cloud {i}"
        assert (ix[:, kk:] == -1).all()

    # (d) scale law
    s = 2.5
    for _ in range(10):
        pts = rng.uniform([0, 0, 0], rng.uniform(2, 30, 3), (int(rng.integers(50, 3000)), 3))
        a, b = build_index(pts), build_index(pts * s)
        assert _rel(mean_nn_distance(b), s * mean_nn_distance(a)) <= 1e-9
        assert _rel(scene_height(pts * s), s * scene_height(pts)) <= 1e-9
        assert _rel(point_density(pts * s), point_density(pts) / s**2) <= 1e-9
        assert _rel(mean_curvature(b), mean_curvature(a)) <= 1e-6
    return f"(max planar curvature {worst:.1e})"


# -- 7 ----------------------------------------------------------------------

_keys = st.text(alphabet="abcXYZ 019_-", min_size=0, max_size=4)


@settings(max_examples=300, deadline=None)
@given(st.dictionaries(_keys, st.integers(0, 19), max_size=12),
       st.lists(_keys, max_size=200))
def _remap_property(rules, stream):
    table = RemapTable("prop", {normalize_key(k): v for k, v in rules.items()})
    ids, unmapped = apply_remap(stream, table)
    oracle = {normalize_key(k): v for k, v in rules.items()}
    assert len(ids) == len(stream)
    assert ((ids >= 0) & (ids <= 19)).all()
    assert unmapped == sum(normalize_key(k) not in oracle for k in stream)
    assert ids.tolist() == [oracle.get(normalize_key(k), 0) for k in stream]


@criterion(7, "remap totality property and 1e6 keys under 5 s")
def test_c7_remap():
    _remap_property()
    rng = np.random.default_rng(SEED + 7)
    table = RemapTable("big", {f"class_{i}": i % 20 for i in range(50)})
    keys = [f"class_{i}" for i in rng.integers(0, 60, 1_000_000)]
    t0 = time.perf_counter()
    ids, unmapped = apply_remap(keys, table)
    elapsed = time.perf_counter() - t0
    assert len(ids) == 1_000_000 and unmapped == sum(1 for k in keys if int(k[6:]) >= 50)
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    return f"(1e6 keys in {elapsed:.2f}s)"


# -- 8 ----------------------------------------------------------------------

def _pipeline(work, sources, mapping, threads):
    root = os.path.join(work, "ds")
    pred = os.path.join(work, "pred")
    common = ["--threads", str(threads)]
    seqs = [str(i) for i in range(20)]
    outputs = []

    def call(argv):
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = cli.run(argv + common)
        assert code == 0, (argv, code)
        outputs.append(buf.getvalue())

    call(["convert", "--root", root, "--format", "xyzl", "--mapping", mapping,
          "--input", *sources, "--sequence", *seqs])
    call(["split", "--root", root, "--config", "combined"])
    call(["stats", "--root", root, "--seqs", "0-19", "--out", os.path.join(root, "dist.csv")])
    call(["geom", "--root", root])
    # A deterministic "model": a label rotation of the ground truth.
    for s in range(20):
        cloud = read_skitti_scan(*[os.path.join(root, "sequences", f"{s:02d}", sub, name)
                                   for sub, name in (("velodyne", "000000.bin"),
                                                     ("labels", "000000.label"))])
        labels = np.where(np.arange(len(cloud)) % 3 == 0, (cloud.labels + 1) % 20,
                          cloud.labels)
        build_sequence(LabeledCloud(cloud.points, labels), pred, s)
    call(["eval", "--gt", root, "--pred", pred, "--out-dir", os.path.join(root, "eval")])
    files = {str(p.relative_to(work)): p.read_bytes()
             for p in sorted(Path(work).rglob("*")) if p.is_file()}
    return outputs, files


@criterion(8, "20-sequence pipeline byte-identical at 1 vs 8 threads")
def test_c8_determinism():
    rng = np.random.default_rng(SEED + 8)
    with _tmp() as d:
        src = os.path.join(d, "src")
        os.mkdir(src)
        sources = write_room_sources(src, rng, 20, n=1500)
        mapping = str(write_identity_mapping(os.path.join(d, "map.csv")))
        runs = []
        for threads in (1, 8):
            work = os.path.join(d, f"t{threads}")
            os.mkdir(work)
            runs.append(_pipeline(work, sources, mapping, threads))
    (out1, files1), (out8, files8) = runs
    assert out1 == out8
    assert files1.keys() == files8.keys()
    for name in files1:
        assert files1[name] == files8[name], name
    reports = [n for n in files1 if n.startswith(("ds/reports", "ds/eval", "ds/dist"))]
    assert len(reports) >= 7
    return f"({len(files1)} files compared)"


# -- 9 ----------------------------------------------------------------------

@criterion(9, "training config hyperparameters and split round-trip")
def test_c9_training_config():
    expected = {"learning_rate": 0.01, "momentum": 0.98, "weight_decay": 0.001,
                "lr_decay": 0.98477, "batch_size": 1}
    assert HYPERPARAMETERS == expected
    with _tmp() as d:
        for config in SplitConfig:
            path = os.path.join(d, f"{config.value}.yaml")
            emit_training_config(config, path)
            lines = Path(path).read_text().splitlines()
            keys = [line.split(":")[0] for line in lines]
            assert keys == ["config", *expected, "train", "val", "test"]
            values, spec = read_training_config(path)
            assert values == {**expected, "config": config.value}
            assert isinstance(values["batch_size"], int)
            assert spec == paper_splits(config)


if __name__ == "__main__":
    logging.basicConfig(level=logging.ERROR)
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except BaseException:
                failed += 1
    sys.exit(1 if failed else 0)
