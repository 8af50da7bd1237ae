"""Shared domain types and the unified 20-class label table."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import LengthMismatch

NUM_CLASSES = 20

# Label id -> canonical name, in table order.
CLASS_NAMES = (
    "unassigned",
    "stairway",
    "door",
    "non exit door",
    "fire door",
    "window",
    "roof access",
    "exit sign",
    "emergency lighting",
    "smoke detector",
    "extinguisher",
    "fire alarm",
    "person",
    "AED",
    "sprinkler",
    "standpipe",
    "utility shutoffs - electric",
    "elevator",
    "hydrant",
    "gas shutoff",
)

UNASSIGNED = 0


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    remission: float = 0.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class LabeledCloud:
    """N points with per-point semantic labels and instance ids.

    Arrays are stored read-only: ``points`` is ``(N, 3) float32``,
    ``remission`` ``(N,) float32``, ``labels`` and ``instance_ids``
    ``(N,) uint16``. Point ``i`` always keeps label ``i``.
    """

    __slots__ = ("points", "remission", "labels", "instance_ids")

    def __init__(self, points, labels, remission=None, instance_ids=None):
        pts = np.asarray(points, dtype=np.float32)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        n = len(pts)
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
            raise ValueError("labels must fit in 16 bits")
        labels = labels.astype(np.uint16)
        if remission is None:
            remission = np.zeros(n, dtype=np.float32)
        remission = np.asarray(remission, dtype=np.float32)
        if instance_ids is None:
            instance_ids = np.zeros(n, dtype=np.uint16)
        instance_ids = np.asarray(instance_ids)
        if instance_ids.size and (instance_ids.min() < 0 or instance_ids.max() > 0xFFFF):
            raise ValueError("instance ids must fit in 16 bits")
        instance_ids = instance_ids.astype(np.uint16)
        for name, arr in (("labels", labels), ("remission", remission),
                          ("instance_ids", instance_ids)):
            if arr.shape != (n,):
                raise LengthMismatch(
                    f"{name} has shape {arr.shape}, expected ({n},)")
        self.points = _frozen(pts)
        self.remission = _frozen(remission)
        self.labels = _frozen(labels)
        self.instance_ids = _frozen(instance_ids)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"LabeledCloud(n={len(self)})"

    def __eq__(self, other):
        # Bit-pattern comparison: -0.0 != 0.0 and identical NaNs compare equal.
        if not isinstance(other, LabeledCloud):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points.view(np.uint32), other.points.view(np.uint32))
            and np.array_equal(self.remission.view(np.uint32),
                               other.remission.view(np.uint32))
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.instance_ids, other.instance_ids)
        )

    __hash__ = None

    @property
    def unknown_label_count(self) -> int:
        """Number of labels outside the unified schema (only possible when
        read permissively)."""
        return int(np.count_nonzero(self.labels >= NUM_CLASSES))

    def point(self, i: int) -> Point3:
        x, y, z = (float(v) for v in self.points[i])
        return Point3(x, y, z, float(self.remission[i]))


@dataclass(frozen=True)
class LabelSchema:
    classes: tuple[tuple[int, str], ...]
    remap_rules: Mapping[str, Mapping[str, int]] = field(
        default_factory=lambda: MappingProxyType({}))

    def name(self, class_id: int) -> str:
        return self.classes[class_id][1]

    def id_of(self, name: str) -> int:
        for cid, cname in self.classes:
            if cname == name:
                return cid
        raise KeyError(name)

    def __len__(self):
        return len(self.classes)

    def __contains__(self, class_id):
        return isinstance(class_id, (int, np.integer)) and 0 <= class_id < len(self.classes)


def unified_schema() -> LabelSchema:
    return LabelSchema(tuple(enumerate(CLASS_NAMES)))


_SEQ_RE = re.compile(r"^\d{1,3}$")


@dataclass(frozen=True, order=True)
class SequenceId:
    """Sequence folder id. Rendered with 2 digits up to 99, 3 beyond."""

    index: int

    def __post_init__(self):
        if not isinstance(self.index, (int, np.integer)) or not 0 <= self.index <= 999:
            raise ValueError(f"sequence index out of range: {self.index!r}")
        object.__setattr__(self, "index", int(self.index))

    def render(self) -> str:
        return f"{self.index:02d}" if self.index <= 99 else f"{self.index:03d}"

    __str__ = render

    @classmethod
    def parse(cls, text: str) -> "SequenceId":
        text = text.strip()
        if not _SEQ_RE.match(text):
            raise ValueError(f"not a sequence id: {text!r}")
        return cls(int(text))


def as_sequence(seq) -> SequenceId:
    if isinstance(seq, SequenceId):
        return seq
    if isinstance(seq, str):
        return SequenceId.parse(seq)
    return SequenceId(seq)


def frame_name(frame: int) -> str:
    return f"{frame:06d}"
