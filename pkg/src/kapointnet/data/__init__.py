"""Point-cloud flow data: samples, analytic generator, scaling, transforms and files."""

from .flow import flow_at, generate_dataset, generate_potential_flow_cloud, random_geometry, velocity_at
from .io import export_csv, import_csv, load_dataset, read_sample, save_dataset, write_sample
from .sample import GeometryMeta, PointCloudSample
from .scaling import (
    ScalingParams,
    apply_scaling,
    dimensionalize,
    fields_from_network,
    fit_flow_scaling,
    fit_scaling,
    invert_scaling,
    network_arrays,
    nondimensionalize,
    output_range_for,
    stack_scaled,
)
from .transforms import add_gaussian_noise, drop_points, select_nearest_vertices, split_dataset

__all__ = [
    "GeometryMeta",
    "PointCloudSample",
    "ScalingParams",
    "add_gaussian_noise",
    "apply_scaling",
    "dimensionalize",
    "drop_points",
    "export_csv",
    "fields_from_network",
    "fit_flow_scaling",
    "fit_scaling",
    "flow_at",
    "generate_dataset",
    "generate_potential_flow_cloud",
    "import_csv",
    "invert_scaling",
    "load_dataset",
    "network_arrays",
    "nondimensionalize",
    "output_range_for",
    "random_geometry",
    "read_sample",
    "save_dataset",
    "select_nearest_vertices",
    "split_dataset",
    "stack_scaled",
    "velocity_at",
    "write_sample",
]
