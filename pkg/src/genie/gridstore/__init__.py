"""Grid storage: geometry, rasters, spatial index, stored tables, store."""

from .field import EXTENSIVE, INTENSIVE, GridField
from .geometry import (BBox, Domain, GridSpec, TimeInterval, buffer_extent,
                       format_timestamp, hours_to_seconds, parse_timestamp,
                       point_buffer, point_distance_m, point_to_bbox_distance_m,
                       rectangle_union)
from .regions import mask_to_regions
from .rtree import RTree
from .store import GridStore, MergeReport, StoredField
from .tables import StoredTable, ingest_table

__all__ = [
    "BBox", "Domain", "GridSpec", "TimeInterval", "GridField", "GridStore",
    "MergeReport", "StoredField", "StoredTable", "RTree", "INTENSIVE",
    "EXTENSIVE", "buffer_extent", "point_buffer", "rectangle_union",
    "mask_to_regions", "ingest_table", "parse_timestamp", "format_timestamp",
    "hours_to_seconds", "point_distance_m", "point_to_bbox_distance_m",
]
