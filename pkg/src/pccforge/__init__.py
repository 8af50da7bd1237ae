"""Harmonize heterogeneously labeled indoor point clouds into SemanticKITTI
sequences and compute label, geometry and segmentation statistics."""

__version__ = "0.1.0"

from .dataset import (DatasetManifest, SplitConfig, SplitSpec, build_sequence,
                      compute_distribution, emit_training_config, paper_splits,
                      read_training_config)
from .evaluation import (ConfusionMatrix, accumulate, class_metrics, evaluate_run,
                         summary_metrics)
from .formats import QcReport, SourceFormat, parse_source, read_skitti_scan, write_skitti_scan
from .geometry import (build_index, mean_curvature, mean_nn_distance, point_density,
                       scene_height, summarize_geometry)
from .kdtree import SpatialIndex
from .model import CLASS_NAMES, LabeledCloud, LabelSchema, Point3, SequenceId, unified_schema
from .remap import RemapTable, apply_remap, load_remap_csv
