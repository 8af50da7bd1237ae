"""Per-source label remapping onto the unified class ids."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import ConflictingRule, InvalidTargetId, IoFailure, MalformedCsv
from .model import UNASSIGNED, LabelSchema

CSV_HEADER = ["source_dataset", "source_key", "target_id"]


def normalize_key(key: str) -> str:
    return key.strip().casefold()


@dataclass(frozen=True)
class RemapTable:
    source_name: str
    rules: Mapping[str, int]
    default_target: int = UNASSIGNED

    def __post_init__(self):
        if self.default_target != UNASSIGNED:
            raise ValueError("default_target is fixed at 0")
        object.__setattr__(self, "rules", MappingProxyType(dict(self.rules)))

    def lookup(self, key: str) -> int:
        return self.rules.get(normalize_key(key), self.default_target)


def table_from_rules(source_name, rules, schema: LabelSchema) -> RemapTable:
    """Build a table from ``{key: target}``, normalizing keys."""
    out = {}
    for key, target in rules.items():
        if target not in schema:
            raise InvalidTargetId(f"target {target!r} for key {key!r} is not a class id")
        k = normalize_key(key)
        if k in out and out[k] != target:
            raise ConflictingRule(k, None, out[k], None, target)
        out[k] = int(target)
    return RemapTable(source_name, out)


def _data_lines(f) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(f, 1):
        if line.lstrip().startswith("#") or not line.strip():
            continue
        yield lineno, line


def load_remap_csv(path, schema: LabelSchema) -> RemapTable:
    """Load a ``source_dataset,source_key,target_id`` CSV.

    Keys are trimmed and case-folded. Repeated identical rules are accepted,
    a key mapped to two different targets is not. All rows must name the
    same source dataset.
    """
    try:
        f = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise IoFailure(path, e) from e
    with f:
        try:
            lines = list(_data_lines(f))
        except UnicodeDecodeError as e:
            raise MalformedCsv(f"{path}: not valid UTF-8 ({e})") from None
    if not lines:
        raise MalformedCsv(f"{path}: missing header")
    linenos = [n for n, _ in lines]
    rows = list(csv.reader(line for _, line in lines))
    header = [c.strip() for c in rows[0]]
    if header != CSV_HEADER:
        raise MalformedCsv(f"{path}:{linenos[0]}: header must be {','.join(CSV_HEADER)}")

    source = None
    rules: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for lineno, row in zip(linenos[1:], rows[1:]):
        if len(row) != 3:
            raise MalformedCsv(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        dataset, key, target = (c.strip() for c in row)
        if source is None:
            source = dataset
        elif dataset != source:
            raise MalformedCsv(
                f"{path}:{lineno}: mixed source datasets {source!r} and {dataset!r}")
        try:
            tid = int(target)
        except ValueError:
            raise MalformedCsv(f"{path}:{lineno}: target_id {target!r} is not an integer") from None
        if tid not in schema:
            raise InvalidTargetId(f"{path}:{lineno}: target_id {tid} is not in 0..{len(schema) - 1}")
        k = normalize_key(key)
        if k in rules:
            if rules[k] != tid:
                raise ConflictingRule(k, first_seen[k], rules[k], lineno, tid)
            continue
        rules[k] = tid
        first_seen[k] = lineno
    return RemapTable(source or "", rules)


def apply_remap(raw_labels, table: RemapTable):
    """Map raw source keys to class ids.

    Unknown keys become 0 and are counted. Returns ``(labels, unmapped_count)``
    with ``labels`` a ``uint16`` array aligned with the input.
    """
    rules = table.rules
    cache: dict[str, int] = {}

    def resolve(key):
        t = cache.get(key)
        if t is None:
            t = cache[key] = rules.get(normalize_key(key), -1)
        return t

    ids = np.fromiter((resolve(k) for k in raw_labels), dtype=np.int32,
                      count=len(raw_labels))
    missing = ids < 0
    ids[missing] = table.default_target
    return ids.astype(np.uint16), int(np.count_nonzero(missing))
