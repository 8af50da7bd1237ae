"""Mapping source label vocabularies onto the 20 unified classes."""
import os
import tempfile

from pccforge import load_remap_csv, apply_remap, unified_schema
from pccforge.errors import ConflictingRule
from pccforge.remap import RemapTable, normalize_key

schema = unified_schema()
print("unified classes:")
for cid, name in schema.classes:
    print(f"  {cid:2d} {name}")

# Keys are matched after stripping and case folding.
table = RemapTable("memphis", {normalize_key(k): v for k, v in
                               {"Door": 2, "Window": 5, "Exit Sign": 11}.items()})
ids, unmapped = apply_remap(["door", " WINDOW ", "exit sign", "plant"], table)
print(ids.tolist(), "unmapped:", unmapped)   # unknown keys fall back to 0

# Two rows sending one key to different ids are rejected with both lines.
path = os.path.join(tempfile.mkdtemp(), "bad.csv")
with open(path, "w") as f:
    f.write("source_dataset,source_key,target_id\nlab,door,2\nlab,Door,4\n")
try:
    load_remap_csv(path, schema)
except ConflictingRule as e:
    print("rejected:", e, "lines", e.lines)
