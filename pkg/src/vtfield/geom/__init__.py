"""Mesh geometry: procedural tools, SDF oracle, sampling, marching cubes, Chamfer."""
from .mesh import (
    TOOL_DIMENSIONS,
    TOOL_KINDS,
    GeometryError,
    NormalizationInfo,
    TriangleMesh,
    build_tool_mesh,
    normalize_to_unit_sphere,
    read_obj,
    read_ply,
    write_obj,
    write_ply,
)
from .sdf import closest_points_on_triangles, contains, first_hits, signed_distance, unsigned_distance
from .sampling import DEFAULT_COUNTS, NEAR_SIGMA, QuerySet, sample_query_set, sample_surface
from .mc import evaluate_grid, largest_component, marching_cubes
from .chamfer import chamfer_distance
