"""Geometric descriptors of a scan: density, spacing, height, curvature."""
import numpy as np

from pccforge import (build_index, mean_curvature, mean_nn_distance, point_density,
                      scene_height)
from pccforge.geometry import cloud_geometry

# A flat 10 x 10 grid with unit spacing.
gx, gy = np.meshgrid(np.arange(10.0), np.arange(10.0))
grid = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(100)])
index = build_index(grid)
print("grid spacing", mean_nn_distance(index))        # 1.0
print("grid curvature", mean_curvature(index))        # about 0 on a plane
print("grid density", point_density(grid))            # 100 points over 81 m^2

# Points on a sphere: curved everywhere.
rng = np.random.default_rng(2)
v = rng.normal(size=(3000, 3))
sphere = 2.0 * v / np.linalg.norm(v, axis=1, keepdims=True)
print("sphere height", scene_height(sphere))
print("sphere curvature", mean_curvature(build_index(sphere)))

# Undefined metrics come back as None in a per-scan summary.
line = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
print(cloud_geometry(line, "line").to_dict())
