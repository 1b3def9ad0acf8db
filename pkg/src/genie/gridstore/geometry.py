"""Geometry primitives: bounding boxes, time intervals, grid alignment.

All grid-aligned geometry is handled exactly by converting degrees to
integer micro-degrees and timestamps to integer seconds, so coverage and
replacement logic never depend on floating-point epsilons.  Resolution
ladders are required to nest (every step an integer multiple of the
finest), which keeps cell arithmetic closed under the ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

from ..errors import DomainExceeded, GenieError

M_PER_DEG = 111320.0      # metres per degree of latitude
KM_PER_DEG = 111.32
UDEG = 1_000_000          # micro-degrees per degree


def to_udeg(deg: float) -> int:
    return round(deg * UDEG)


def from_udeg(u: int) -> float:
    return u / UDEG


def hours_to_seconds(hours: float) -> int:
    return round(hours * 3600.0)


def parse_timestamp(text: str) -> int:
    """Parse ``YYYY-MM-DD[ HH:MM[:SS]]`` as UTC unix seconds."""
    text = text.strip()
    for fmt in ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d"):
        try:
            dt = datetime.strptime(text, fmt).replace(tzinfo=timezone.utc)
            return int(dt.timestamp())
        except ValueError:
            continue
    raise GenieError(f"unrecognized timestamp: {text!r}")


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d %H:%M")


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned lat/lon rectangle in degrees (closed bounds)."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        for name in ("lat_min", "lat_max", "lon_min", "lon_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise GenieError(f"inverted bbox: {self}")
        if not (-90.0 <= self.lat_min and self.lat_max <= 90.0):
            raise GenieError(f"latitude out of range: {self}")
        if not (-180.0 <= self.lon_min and self.lon_max <= 180.0):
            raise GenieError(f"longitude out of range: {self}")

    @property
    def height_deg(self) -> float:
        return self.lat_max - self.lat_min

    @property
    def width_deg(self) -> float:
        return self.lon_max - self.lon_min

    @property
    def area_deg2(self) -> float:
        return self.height_deg * self.width_deg

    def intersects(self, other: "BBox") -> bool:
        return (self.lat_min < other.lat_max and other.lat_min < self.lat_max
                and self.lon_min < other.lon_max and other.lon_min < self.lon_max)

    def contains(self, other: "BBox") -> bool:
        return (self.lat_min <= other.lat_min and other.lat_max <= self.lat_max
                and self.lon_min <= other.lon_min and other.lon_max <= self.lon_max)

    def contains_point(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max

    def intersection(self, other: "BBox") -> "BBox | None":
        lat0, lat1 = max(self.lat_min, other.lat_min), min(self.lat_max, other.lat_max)
        lon0, lon1 = max(self.lon_min, other.lon_min), min(self.lon_max, other.lon_max)
        if lat0 >= lat1 or lon0 >= lon1:
            return None
        return BBox(lat0, lat1, lon0, lon1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.lat_min, self.lat_max, self.lon_min, self.lon_max)

    def to_json(self) -> dict:
        return {"lat_min": self.lat_min, "lat_max": self.lat_max,
                "lon_min": self.lon_min, "lon_max": self.lon_max}

    @staticmethod
    def from_json(d: dict) -> "BBox":
        return BBox(d["lat_min"], d["lat_max"], d["lon_min"], d["lon_max"])


@dataclass(frozen=True, order=True)
class TimeInterval:
    """Closed interval of UTC timestamps at second precision."""

    start: int
    end: int

    def __post_init__(self):
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "end", int(self.end))
        if self.start > self.end:
            raise GenieError(f"inverted interval: {self}")

    @staticmethod
    def from_strings(start: str, end: str) -> "TimeInterval":
        return TimeInterval(parse_timestamp(start), parse_timestamp(end))

    @property
    def duration_s(self) -> int:
        return self.end - self.start

    @property
    def duration_h(self) -> float:
        return self.duration_s / 3600.0

    def intersects(self, other: "TimeInterval") -> bool:
        return self.start < other.end and other.start < self.end

    def contains(self, other: "TimeInterval") -> bool:
        return self.start <= other.start and other.end <= self.end

    def intersection(self, other: "TimeInterval") -> "TimeInterval | None":
        a, b = max(self.start, other.start), min(self.end, other.end)
        if a >= b:
            return None
        return TimeInterval(a, b)

    def to_json(self) -> dict:
        return {"start": format_timestamp(self.start), "end": format_timestamp(self.end)}

    def __str__(self) -> str:
        return f"{format_timestamp(self.start)}..{format_timestamp(self.end)}"


@dataclass(frozen=True)
class Domain:
    """The registered simulation domain plus its resolution ladders.

    The domain's south-west corner and interval start are the global grid
    origin; every materialized grid aligns to it.  Ladders are ordered
    coarse to fine, strictly decreasing, and every step must be an integer
    multiple of the finest step so grids at different rungs share lattice
    lines.
    """

    bbox: BBox
    interval: TimeInterval
    spatial_ladder: tuple[float, ...] = (0.5, 0.2, 0.1, 0.05, 0.02, 0.01)
    temporal_ladder: tuple[float, ...] = (6.0, 3.0, 1.0, 0.5, 0.25)

    def __post_init__(self):
        for ladder, unit in ((self.spatial_ladder, UDEG), (self.temporal_ladder, 3600)):
            steps = [round(v * unit) for v in ladder]
            if any(a <= b for a, b in zip(steps, steps[1:])):
                raise GenieError("resolution ladder must be strictly decreasing")
            finest = steps[-1]
            if any(s % finest != 0 for s in steps):
                raise GenieError("ladder steps must be integer multiples of the finest")
        fin_s = to_udeg(self.spatial_ladder[-1])
        if (to_udeg(self.bbox.height_deg) % fin_s
                or to_udeg(self.bbox.width_deg) % fin_s):
            raise GenieError("domain extent must be a multiple of the finest step")
        if self.interval.duration_s % hours_to_seconds(self.temporal_ladder[-1]):
            raise GenieError("domain interval must be a multiple of the finest step")

    @property
    def origin(self) -> tuple[int, int, int]:
        """(lat, lon, t) origin in (udeg, udeg, seconds)."""
        return (to_udeg(self.bbox.lat_min), to_udeg(self.bbox.lon_min), self.interval.start)

    @property
    def storage_bbox(self) -> BBox:
        """Query domain padded north/east so every ladder rung tiles it exactly."""
        lcm_u = math.lcm(*(to_udeg(v) for v in self.spatial_ladder))
        h = -((-to_udeg(self.bbox.height_deg)) // lcm_u) * lcm_u
        w = -((-to_udeg(self.bbox.width_deg)) // lcm_u) * lcm_u
        return BBox(self.bbox.lat_min, from_udeg(to_udeg(self.bbox.lat_min) + h),
                    self.bbox.lon_min, from_udeg(to_udeg(self.bbox.lon_min) + w))

    @property
    def storage_interval(self) -> TimeInterval:
        lcm_s = math.lcm(*(hours_to_seconds(v) for v in self.temporal_ladder))
        d = -((-self.interval.duration_s) // lcm_s) * lcm_s
        return TimeInterval(self.interval.start, self.interval.start + d)

    def on_spatial_ladder(self, res_deg: float) -> bool:
        return any(to_udeg(v) == to_udeg(res_deg) for v in self.spatial_ladder)

    def on_temporal_ladder(self, res_h: float) -> bool:
        return any(hours_to_seconds(v) == hours_to_seconds(res_h) for v in self.temporal_ladder)

    def snap_spatial(self, res_deg: float) -> float:
        """Coarsest ladder step that is finer-or-equal to the requested value."""
        for v in self.spatial_ladder:
            if to_udeg(v) <= to_udeg(res_deg):
                return v
        return self.spatial_ladder[-1]

    def snap_temporal(self, res_h: float) -> float:
        for v in self.temporal_ladder:
            if hours_to_seconds(v) <= hours_to_seconds(res_h):
                return v
        return self.temporal_ladder[-1]

    def check_contains(self, bbox: BBox, interval: TimeInterval) -> None:
        if (not self.storage_bbox.contains(bbox)
                or not self.storage_interval.contains(interval)):
            raise DomainExceeded(f"{bbox} x {interval} outside registered domain")

    def grid(self, spatial_res: float, temporal_res: float) -> "GridSpec":
        return GridSpec(self, to_udeg(spatial_res), hours_to_seconds(temporal_res))

    def clamp(self, bbox: BBox) -> BBox | None:
        return self.bbox.intersection(bbox)

    def to_json(self) -> dict:
        return {"bbox": self.bbox.to_json(), "interval": self.interval.to_json(),
                "spatial_ladder": list(self.spatial_ladder),
                "temporal_ladder": list(self.temporal_ladder)}


@dataclass(frozen=True)
class GridSpec:
    """Index arithmetic for one (spatial, temporal) resolution over a domain.

    Cell (i, j, t) spans lat [o_lat + i*res, o_lat + (i+1)*res), analogous
    in lon and time.  All arithmetic is integer-exact in udeg / seconds.
    """

    domain: Domain
    sres_u: int
    tres_s: int

    @property
    def sres_deg(self) -> float:
        return from_udeg(self.sres_u)

    @property
    def tres_h(self) -> float:
        return self.tres_s / 3600.0

    def is_aligned(self, bbox: BBox, interval: TimeInterval) -> bool:
        o_lat, o_lon, o_t = self.domain.origin
        return all((
            (to_udeg(bbox.lat_min) - o_lat) % self.sres_u == 0,
            (to_udeg(bbox.lat_max) - o_lat) % self.sres_u == 0,
            (to_udeg(bbox.lon_min) - o_lon) % self.sres_u == 0,
            (to_udeg(bbox.lon_max) - o_lon) % self.sres_u == 0,
            (interval.start - o_t) % self.tres_s == 0,
            (interval.end - o_t) % self.tres_s == 0,
        ))

    # -- index ranges ---------------------------------------------------

    def cells_intersecting(self, bbox: BBox, interval: TimeInterval):
        """Half-open index ranges of cells that intersect the region."""
        o_lat, o_lon, o_t = self.domain.origin
        i0 = (to_udeg(bbox.lat_min) - o_lat) // self.sres_u
        i1 = -((-(to_udeg(bbox.lat_max) - o_lat)) // self.sres_u)
        j0 = (to_udeg(bbox.lon_min) - o_lon) // self.sres_u
        j1 = -((-(to_udeg(bbox.lon_max) - o_lon)) // self.sres_u)
        t0 = (interval.start - o_t) // self.tres_s
        t1 = -((-(interval.end - o_t)) // self.tres_s)
        return (i0, max(i0, i1)), (j0, max(j0, j1)), (t0, max(t0, t1))

    def cells_contained(self, bbox: BBox, interval: TimeInterval):
        """Half-open index ranges of cells fully inside the region."""
        o_lat, o_lon, o_t = self.domain.origin
        i0 = -((-(to_udeg(bbox.lat_min) - o_lat)) // self.sres_u)
        i1 = (to_udeg(bbox.lat_max) - o_lat) // self.sres_u
        j0 = -((-(to_udeg(bbox.lon_min) - o_lon)) // self.sres_u)
        j1 = (to_udeg(bbox.lon_max) - o_lon) // self.sres_u
        t0 = -((-(interval.start - o_t)) // self.tres_s)
        t1 = (interval.end - o_t) // self.tres_s
        return (i0, max(i0, i1)), (j0, max(j0, j1)), (t0, max(t0, t1))

    def snap_outward(self, bbox: BBox, interval: TimeInterval) -> tuple[BBox, TimeInterval]:
        """Smallest cell-aligned region covering the input."""
        (i0, i1), (j0, j1), (t0, t1) = self.cells_intersecting(bbox, interval)
        return self.region(i0, i1, j0, j1, t0, t1)

    def region(self, i0: int, i1: int, j0: int, j1: int, t0: int, t1: int):
        o_lat, o_lon, o_t = self.domain.origin
        box = BBox(from_udeg(o_lat + i0 * self.sres_u), from_udeg(o_lat + i1 * self.sres_u),
                   from_udeg(o_lon + j0 * self.sres_u), from_udeg(o_lon + j1 * self.sres_u))
        iv = TimeInterval(o_t + t0 * self.tres_s, o_t + t1 * self.tres_s)
        return box, iv

    def cell_bbox(self, i: int, j: int) -> BBox:
        o_lat, o_lon, _ = self.domain.origin
        return BBox(from_udeg(o_lat + i * self.sres_u), from_udeg(o_lat + (i + 1) * self.sres_u),
                    from_udeg(o_lon + j * self.sres_u), from_udeg(o_lon + (j + 1) * self.sres_u))

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        o_lat, o_lon, _ = self.domain.origin
        return (from_udeg(o_lat) + (i + 0.5) * self.sres_deg,
                from_udeg(o_lon) + (j + 0.5) * self.sres_deg)

    def timestep_start(self, t: int) -> int:
        return self.domain.origin[2] + t * self.tres_s


# --- metric buffers ---------------------------------------------------------

def point_buffer(lat: float, lon: float, radius_m: float,
                 domain_bbox: BBox | None = None) -> BBox:
    """Conservative axis-aligned box around a metric disk."""
    dlat = radius_m / M_PER_DEG
    if abs(lat) >= 89.0:
        lon_lo, lon_hi = -180.0, 180.0
    else:
        dlon = radius_m / (M_PER_DEG * math.cos(math.radians(lat)))
        lon_lo, lon_hi = lon - dlon, lon + dlon
    box = BBox(max(lat - dlat, -90.0), min(lat + dlat, 90.0),
               max(lon_lo, -180.0), min(lon_hi, 180.0))
    if domain_bbox is not None:
        clipped = domain_bbox.intersection(box)
        if clipped is None:
            raise DomainExceeded(f"buffer around ({lat}, {lon}) outside domain")
        return clipped
    return box


def buffer_extent(points: list[tuple[float, float]], radius_m: float,
                  domain_bbox: BBox | None = None) -> list[BBox]:
    """Buffer each point and return the exact union as disjoint rectangles.

    Overlapping boxes are decomposed with a longitude sweep: each slab
    between consecutive lon edges carries merged latitude intervals, and
    vertically identical neighbouring slabs are fused back together.
    """
    if radius_m <= 0:
        raise GenieError("radius_m must be positive")
    boxes = [point_buffer(lat, lon, radius_m, domain_bbox) for lat, lon in points]
    return rectangle_union(boxes)


def rectangle_union(boxes: list[BBox]) -> list[BBox]:
    """Decompose the union of rectangles into disjoint rectangles."""
    if not boxes:
        return []
    edges = sorted({b.lon_min for b in boxes} | {b.lon_max for b in boxes})
    slabs: list[tuple[float, float, tuple[tuple[float, float], ...]]] = []
    for lo, hi in zip(edges, edges[1:]):
        mid = (lo + hi) / 2.0
        spans = sorted((b.lat_min, b.lat_max) for b in boxes
                       if b.lon_min <= mid <= b.lon_max and b.lon_min < hi and b.lon_max > lo)
        merged: list[list[float]] = []
        for a, b in spans:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        if merged:
            slabs.append((lo, hi, tuple((a, b) for a, b in merged)))
    # fuse adjacent slabs with identical latitude structure
    out: list[BBox] = []
    i = 0
    while i < len(slabs):
        lo, hi, spans = slabs[i]
        k = i + 1
        while k < len(slabs) and slabs[k][0] == slabs[k - 1][1] and slabs[k][2] == spans:
            hi = slabs[k][1]
            k += 1
        out.extend(BBox(a, b, lo, hi) for a, b in spans)
        i = k
    return out


def point_to_bbox_distance_m(lat: float, lon: float, box: BBox) -> float:
    """Metric distance from a point to a lat/lon rectangle (equirectangular)."""
    dlat = max(box.lat_min - lat, 0.0, lat - box.lat_max)
    dlon = max(box.lon_min - lon, 0.0, lon - box.lon_max)
    dy = dlat * M_PER_DEG
    dx = dlon * M_PER_DEG * math.cos(math.radians(lat))
    return math.hypot(dx, dy)


def point_distance_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    dy = (lat2 - lat1) * M_PER_DEG
    dx = (lon2 - lon1) * M_PER_DEG * math.cos(math.radians(0.5 * (lat1 + lat2)))
    return math.hypot(dx, dy)
