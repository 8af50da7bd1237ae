"""Train/val/test splits for the three configurations and the training
manifest that goes with them."""
import logging
import os
import tempfile

from pccforge import SplitConfig, paper_splits, emit_training_config, read_training_config

logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

for config in SplitConfig:
    spec = paper_splits(config)   # warns where the ranges and stated counts disagree
    sizes = {p: len(spec.partition(p)) for p in ("train", "val", "test")}
    print(config.value, sizes)
    print("  test starts", [s.render() for s in spec.partition("test")[:3]], "...")

out = os.path.join(tempfile.mkdtemp(), "memphis.yaml")
emit_training_config("memphis-only", out)
print(open(out).read())
values, spec = read_training_config(out)
print("round trip equal:", spec == paper_splits("memphis-only"), values["lr_decay"])
