"""Source-file parsers and the SemanticKITTI scan/label binary pair."""

from __future__ import annotations

import enum
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (EmptyCloud, IoFailure, MalformedHeader, MalformedRecord,
                     SizeMismatch, TruncatedFile, UnknownClassId)
from .model import NUM_CLASSES, LabeledCloud

log = logging.getLogger(__name__)

SCAN_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
SCAN_RECORD_BYTES = 16
LABEL_RECORD_BYTES = 4

REMISSION_FIELDS = ("remission", "intensity", "scalar_intensity")


class SourceFormat(enum.Enum):
    ASCII_PLY = "ply"
    XYZ_LABEL_TEXT = "xyzl"


@dataclass
class QcReport:
    total_points: int = 0
    dropped_nonfinite: int = 0
    remission_out_of_range: int = 0
    label_count_mismatch: bool = False

    @property
    def points_kept(self) -> int:
        return self.total_points - self.dropped_nonfinite

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points_kept"] = self.points_kept
        return d


def _open_text(path):
    try:
        return open(path, "r", encoding="utf-8")
    except OSError as e:
        raise IoFailure(path, e) from e


def _to_float(path, lineno, token):
    try:
        return float(token)
    except ValueError:
        raise MalformedRecord(path, lineno, f"cannot parse number {token!r}") from None


def _parse_xyzl(path):
    xyz, rem, raw = [], [], []
    with _open_text(path) as f:
        for lineno, line in enumerate(f, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            cols = s.split()
            if len(cols) not in (4, 5):
                raise MalformedRecord(
                    path, lineno, f"expected 4 or 5 columns, got {len(cols)}")
            xyz.append([_to_float(path, lineno, c) for c in cols[:3]])
            raw.append(cols[3])
            rem.append(_to_float(path, lineno, cols[4]) if len(cols) == 5 else 0.0)
    return xyz, rem, raw, False


def _read_ply_header(path, f, label_field):
    line = f.readline()
    if line.strip() != "ply":
        raise MalformedHeader(f"{path}: missing 'ply' magic line")
    lineno = 1
    fmt = None
    elements = []  # [name, count, [property names]]
    while True:
        line = f.readline()
        lineno += 1
        if not line:
            raise MalformedHeader(f"{path}: header has no end_header")
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        key = parts[0]
        if key == "end_header":
            break
        if key == "format":
            if len(parts) != 3:
                raise MalformedHeader(f"{path}:{lineno}: bad format line")
            fmt = parts[1]
        elif key == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise MalformedHeader(f"{path}:{lineno}: bad element line")
            elements.append([parts[1], int(parts[2]), []])
        elif key == "property":
            if not elements:
                raise MalformedHeader(f"{path}:{lineno}: property before element")
            if len(parts) >= 2 and parts[1] == "list":
                if len(parts) != 5:
                    raise MalformedHeader(f"{path}:{lineno}: bad list property")
                elements[-1][2].append((parts[4], True))
            elif len(parts) == 3:
                elements[-1][2].append((parts[2], False))
            else:
                raise MalformedHeader(f"{path}:{lineno}: bad property line")
        else:
            raise MalformedHeader(f"{path}:{lineno}: unexpected header keyword {key!r}")
    if fmt != "ascii":
        raise MalformedHeader(f"{path}: only ascii PLY is supported (format {fmt!r})")
    vertex = [e for e in elements if e[0] == "vertex"]
    if len(vertex) != 1:
        raise MalformedHeader(f"{path}: expected exactly one vertex element")
    names = [p for p, _ in vertex[0][2]]
    if any(is_list for _, is_list in vertex[0][2]):
        raise MalformedHeader(f"{path}: list properties on vertex are unsupported")
    for axis in "xyz":
        if axis not in names:
            raise MalformedHeader(f"{path}: vertex element lacks property {axis!r}")
    if len(set(names)) != len(names):
        raise MalformedHeader(f"{path}: duplicate vertex property names")
    return elements, lineno


def _parse_ply(path, label_field):
    xyz, rem, raw = [], [], []
    with _open_text(path) as f:
        elements, lineno = _read_ply_header(path, f, label_field)
        for name, count, props in elements:
            if name != "vertex":
                for _ in range(count):
                    if not f.readline():
                        raise MalformedRecord(path, lineno + 1, f"missing {name} records")
                    lineno += 1
                continue
            names = [p for p, _ in props]
            ix, iy, iz = (names.index(a) for a in "xyz")
            il = names.index(label_field) if label_field in names else None
            ir = next((names.index(r) for r in REMISSION_FIELDS if r in names), None)
            for _ in range(count):
                line = f.readline()
                lineno += 1
                if not line:
                    raise MalformedRecord(path, lineno, "fewer vertices than declared")
                cols = line.split()
                if len(cols) != len(names):
                    raise MalformedRecord(
                        path, lineno, f"expected {len(names)} columns, got {len(cols)}")
                xyz.append([_to_float(path, lineno, cols[i]) for i in (ix, iy, iz)])
                rem.append(_to_float(path, lineno, cols[ir]) if ir is not None else 0.0)
                raw.append(cols[il] if il is not None else "")
            # Records after the vertex block are other elements; not needed.
            break
    return xyz, rem, raw, il is None


def parse_source(path, format, label_field="label"):
    """Parse a source point-cloud file.

    Returns ``(cloud, raw_labels, qc)``. Records with a non-finite coordinate
    or remission are dropped and counted; kept points stay in file order.
    ``cloud.labels`` are all 0 here -- map ``raw_labels`` with
    :func:`pccforge.remap.apply_remap` to obtain unified ids.
    """
    format = SourceFormat(format)
    if format is SourceFormat.XYZ_LABEL_TEXT:
        xyz, rem, raw, no_label = _parse_xyzl(path)
    else:
        xyz, rem, raw, no_label = _parse_ply(path, label_field)

    pts = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    with np.errstate(over="ignore"):
        pts32 = pts.astype(np.float32)
        rem32 = np.asarray(rem, dtype=np.float64).astype(np.float32)
    keep = np.isfinite(pts32).all(axis=1) & np.isfinite(rem32)

    qc = QcReport(total_points=len(pts32),
                  dropped_nonfinite=int(np.count_nonzero(~keep)),
                  label_count_mismatch=no_label)
    if not keep.any():
        raise EmptyCloud(f"{path}: no points left after quality control")
    rem32 = rem32[keep]
    qc.remission_out_of_range = int(np.count_nonzero((rem32 < 0) | (rem32 > 1)))
    raw_kept = [r for r, k in zip(raw, keep.tolist()) if k]
    cloud = LabeledCloud(pts32[keep], np.zeros(len(raw_kept), dtype=np.uint16),
                         remission=rem32)
    return cloud, raw_kept, qc


def pack_labels(semantic, instance):
    """Pack semantic (low 16 bits) and instance (high 16 bits) into u32 words."""
    semantic = np.asarray(semantic, dtype=np.uint32)
    instance = np.asarray(instance, dtype=np.uint32)
    return (instance << np.uint32(16)) | (semantic & np.uint32(0xFFFF))


def unpack_labels(words):
    words = np.asarray(words, dtype=np.uint32)
    return ((words & np.uint32(0xFFFF)).astype(np.uint16),
            (words >> np.uint32(16)).astype(np.uint16))


def _write_bytes(path, data: bytes):
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise IoFailure(path, e) from e


def write_skitti_scan(cloud: LabeledCloud, scan_path, label_path):
    """Write ``cloud`` as a ``.bin`` scan (N x 4 LE f32) and ``.label`` file
    (N LE u32)."""
    rec = np.empty((len(cloud), 4), dtype=SCAN_DTYPE)
    rec[:, :3] = cloud.points
    rec[:, 3] = cloud.remission
    _write_bytes(scan_path, rec.tobytes())
    words = pack_labels(cloud.labels, cloud.instance_ids).astype(LABEL_DTYPE)
    _write_bytes(label_path, words.tobytes())


def _size(path):
    try:
        return os.path.getsize(path)
    except OSError as e:
        raise IoFailure(path, e) from e


def _read_array(path, dtype):
    try:
        return np.fromfile(path, dtype=dtype)
    except OSError as e:
        raise IoFailure(path, e) from e


def read_label_words(label_path):
    size = _size(label_path)
    if size % LABEL_RECORD_BYTES:
        raise TruncatedFile(f"{label_path}: size {size} is not a multiple of 4")
    return _read_array(label_path, LABEL_DTYPE)


def read_skitti_scan(scan_path, label_path, strict=True) -> LabeledCloud:
    """Read a scan/label pair written in SemanticKITTI layout.

    With ``strict=False`` semantic ids >= 20 are kept as-is; the resulting
    cloud reports them through ``unknown_label_count``.
    """
    size = _size(scan_path)
    if size % SCAN_RECORD_BYTES:
        raise TruncatedFile(f"{scan_path}: size {size} is not a multiple of 16")
    words = read_label_words(label_path)
    n = size // SCAN_RECORD_BYTES
    if len(words) != n:
        raise SizeMismatch(
            f"{scan_path} has {n} points but {label_path} has {len(words)} labels")
    rec = _read_array(scan_path, SCAN_DTYPE).reshape(n, 4)
    semantic, instance = unpack_labels(words)
    bad = int(np.count_nonzero(semantic >= NUM_CLASSES))
    if bad:
        if strict:
            first = int(semantic[semantic >= NUM_CLASSES][0])
            raise UnknownClassId(
                f"{label_path}: {bad} labels outside 0..{NUM_CLASSES - 1} (e.g. {first})")
        log.warning("%s: kept %d labels outside the unified schema", label_path, bad)
    return LabeledCloud(rec[:, :3], semantic, remission=rec[:, 3], instance_ids=instance)
