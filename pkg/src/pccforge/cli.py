"""``pccforge`` command-line entry point.

Data goes to files or stdout (JSON), diagnostics to stderr. Exit codes:
0 success, 2 usage error, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys

from . import __version__
from .dataset import (PARTITIONS, SplitConfig, build_sequence, compute_distribution,
                      emit_training_config, list_sequences, merge_manifest, paper_splits,
                      write_distribution_csv, write_split_files)
from .errors import PccError
from .evaluation import evaluate_run
from .formats import SourceFormat, parse_source
from .geometry import DEFAULT_BINS, DEFAULT_K, summarize_geometry, write_geometry_report
from .model import LabeledCloud, SequenceId, unified_schema
from .parallel import default_threads, pmap
from .remap import apply_remap, load_remap_csv

log = logging.getLogger("pccforge")

EXIT_USAGE = 2
EXIT_IO = 4


def parse_seq_list(text: str) -> list[SequenceId]:
    """``"0-3,7,118-120"`` -> sequence ids."""
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        a = SequenceId.parse(lo)
        b = SequenceId.parse(hi) if sep else a
        if b.index < a.index:
            raise ValueError(f"empty range {part!r}")
        out.update(SequenceId(i) for i in range(a.index, b.index + 1))
    return sorted(out)


def _emit(args, payload):
    if args.stamp:
        payload["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _select_seqs(args, root):
    if args.seqs is not None:
        return parse_seq_list(args.seqs)
    if args.config is not None:
        spec = paper_splits(args.config)
        parts = PARTITIONS if args.partition == "all" else (args.partition,)
        return sorted(s for p in parts for s in getattr(spec, p))
    return list_sequences(root)


# -- subcommands ------------------------------------------------------------

def cmd_convert(args):
    if len(args.sequence) != len(args.input):
        raise _Usage("--sequence must be given once per --input")
    seqs = [SequenceId.parse(s) for s in args.sequence]
    if len(set(seqs)) != len(seqs):
        raise _Usage("duplicate --sequence ids")
    table = load_remap_csv(args.mapping, unified_schema())
    source = args.source_dataset or table.source_name

    def one(job):
        path, seq = job
        cloud, raw, qc = parse_source(path, args.format, args.label_field)
        labels, unmapped = apply_remap(raw, table)
        cloud = LabeledCloud(cloud.points, labels, remission=cloud.remission)
        entry = build_sequence(cloud, args.root, seq, source)
        return entry, {"sequence": seq.render(), "input": os.path.basename(path),
                       "source_dataset": source, "points": len(cloud),
                       "unmapped_count": unmapped, "qc": qc.to_dict()}

    results = pmap(one, list(zip(args.input, seqs)), args.threads)
    merge_manifest(args.root, [e for e, _ in results])
    _emit(args, {"sequences": [r for _, r in results]})


def cmd_remap(args):
    table = load_remap_csv(args.mapping, unified_schema())
    _, raw, _ = parse_source(args.input, args.format, args.label_field)
    labels, unmapped = apply_remap(raw, table)
    with open(args.output, "w", encoding="utf-8") as f:
        f.writelines(f"{int(v)}\n" for v in labels)
    _emit(args, {"points": len(labels), "unmapped_count": unmapped,
                 "source_dataset": table.source_name})


def cmd_split(args):
    spec = paper_splits(args.config)
    write_split_files(spec, args.root)
    _emit(args, {"config": spec.name.value,
                 **{p: [s.render() for s in spec.partition(p)] for p in PARTITIONS}})


def cmd_stats(args):
    seqs = _select_seqs(args, args.root)
    table = compute_distribution(args.root, seqs, unified_schema(), args.threads,
                                 strict=args.strict)
    if args.out:
        write_distribution_csv(table, args.out)
    _emit(args, {"sequences": [s.render() for s in seqs],
                 "total_points": table.total, "zero_total": table.zero_total,
                 "unknown_labels": table.unknown,
                 "rows": [{"label": r.label, "class_name": r.class_name,
                           "count": r.count, "percent": round(r.percent, 4)}
                          for r in table.rows]})


def cmd_geom(args):
    seqs = _select_seqs(args, args.root)
    summary = summarize_geometry(args.root, seqs, bins=args.bins, k=args.k,
                                 threads=args.threads, strict=args.strict)
    out_dir = args.out_dir or os.path.join(args.root, "reports", "geometry")
    write_geometry_report(summary, out_dir)
    _emit(args, {"sequences": [r.to_dict() for r in summary.sequences],
                 "histogram_bins": args.bins})


def cmd_eval(args):
    seqs = parse_seq_list(args.seqs) if args.seqs else list_sequences(args.gt)
    result = evaluate_run(args.gt, args.pred, seqs, out_dir=args.out_dir,
                          threads=args.threads)
    _emit(args, result.summary_dict())


def cmd_emit_train_config(args):
    emit_training_config(args.config, args.out)
    _emit(args, {"config": SplitConfig(args.config).value, "path": args.out})


# -- parser -----------------------------------------------------------------

class _Usage(Exception):
    pass


def _common(defaults=True):
    """Global flags. Subcommands get a copy whose defaults are suppressed,
    so a flag may appear before or after the subcommand name."""
    def d(value):
        return value if defaults else argparse.SUPPRESS

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--root", default=d("."), help="dataset root (contains sequences/)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=d(True),
                      help="reject labels outside the unified schema (default)")
    mode.add_argument("--permissive", dest="strict", action="store_false", default=d(True),
                      help="keep unknown labels and report them")
    p.add_argument("--threads", type=int, default=d(default_threads()))
    p.add_argument("--stamp", action="store_true", default=d(False),
                   help="add a timestamp to JSON output")
    return p


def _selection(p):
    p.add_argument("--seqs", help="sequence list, e.g. 0-58,118-133")
    p.add_argument("--config", choices=[c.value for c in SplitConfig])
    p.add_argument("--partition", choices=("all",) + PARTITIONS, default="all")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pccforge",
        description="Harmonize labeled indoor point clouds into SemanticKITTI "
                    "sequences and compute dataset, geometry and evaluation reports.",
        parents=[_common()])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_common(defaults=False)]
    fmt_choices = [f.value for f in SourceFormat]

    p = sub.add_parser("convert", parents=common, help="source files -> sequences")
    p.add_argument("--format", required=True, choices=fmt_choices)
    p.add_argument("--input", required=True, nargs="+")
    p.add_argument("--sequence", required=True, nargs="+")
    p.add_argument("--mapping", required=True)
    p.add_argument("--label-field", default="label")
    p.add_argument("--source-dataset")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("remap", parents=common, help="map one file's labels to unified ids")
    p.add_argument("--format", required=True, choices=fmt_choices)
    p.add_argument("--input", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--label-field", default="label")
    p.set_defaults(func=cmd_remap)

    p = sub.add_parser("split", parents=common, help="write train/val/test lists")
    p.add_argument("--config", required=True, choices=[c.value for c in SplitConfig])
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("stats", parents=common, help="label distribution")
    _selection(p)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("geom", parents=common, help="geometric metrics and histograms")
    _selection(p)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_geom)

    p = sub.add_parser("eval", parents=common, help="evaluate predictions")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--seqs")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("emit-train-config", parents=common, help="training manifest")
    p.add_argument("--config", required=True, choices=[c.value for c in SplitConfig])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit_train_config)
    return parser


def _setup_logging():
    level = os.environ.get("PCCFORGE_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def run(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads < 1:
        parser.print_usage(sys.stderr)
        print("pccforge: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except (_Usage, ValueError) as e:
        print(f"pccforge: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PccError as e:
        print(f"pccforge: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"pccforge: IoFailure: {e}", file=sys.stderr)
        return EXIT_IO
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
