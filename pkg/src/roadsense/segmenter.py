"""Chunk road polylines into fixed-length segments, the sampling units.

Tail rule: after cutting a way at whole multiples of the target length,
a remainder of at least half the target becomes its own shorter segment;
a smaller remainder is merged into the previous segment (which then runs
over the target). A way shorter than the target is a single segment. The
rule covers every meter of road exactly once without near-zero units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import DegenerateWayError
from .geometry import GeoPoint, Polyline, interpolate
from .osm_ingest import RoadNetwork, Way

DEFAULT_TARGET_M = 500.0

SEGMENTS_CSV_HEADER = ("segment_id,way_id,index,start_lat,start_lon,"
                       "end_lat,end_lon,length_m,highway_class,city")


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str            # "<way_id>#<index>"
    way_id: int
    index: int
    geometry: Polyline | None  # full shape; None when re-read from CSV
    start: GeoPoint
    end: GeoPoint
    length_m: float
    highway_class: str
    city: str


@dataclass
class ChunkResult:
    segments: list[RoadSegment]
    skipped_way_ids: list[int]


def _cut_distances(length_m: float, target_m: float) -> list[float]:
    """Interior cut positions implementing the tail rule."""
    k = int(length_m // target_m)
    if k == 0:
        return []
    remainder = length_m - k * target_m
    if remainder < 1e-9:
        n_cuts = k - 1
    elif remainder >= target_m / 2.0:
        n_cuts = k
    else:
        n_cuts = k - 1
    return [target_m * (i + 1) for i in range(n_cuts)]


def chunk_way(way: Way, network: RoadNetwork, target_m: float = DEFAULT_TARGET_M) -> list[RoadSegment]:
    """Split one way into consecutive segments tiling it with no gaps.

    Segment geometry keeps every intermediate way vertex plus the
    interpolated cut points; a cut point is shared bit-exactly as the end
    of one segment and the start of the next.
    """
    if target_m <= 0:
        raise ValueError(f"target_m must be positive, got {target_m}")
    points = network.way_points(way)
    try:
        line = Polyline(points)
    except ValueError as e:
        raise DegenerateWayError(f"way {way.id}: {e}") from e
    edges = line.edge_lengths_m()
    total = sum(edges)
    if total < 1.0:
        raise DegenerateWayError(f"way {way.id} is only {total:.3f} m long")

    cuts = _cut_distances(total, target_m)
    pieces: list[list[GeoPoint]] = []
    current = [line.points[0]]
    walked = 0.0
    cut_iter = iter(cuts)
    next_cut = next(cut_iter, None)
    for i, edge in enumerate(edges):
        a, b = line.points[i], line.points[i + 1]
        start_walked = walked
        while next_cut is not None and next_cut <= start_walked + edge:
            t = (next_cut - start_walked) / edge
            if t >= 1.0 - 1e-12:
                cut_point = b
            elif t <= 1e-12:
                cut_point = a
            else:
                cut_point = interpolate(a, b, t)
            if cut_point != current[-1]:
                current.append(cut_point)
            pieces.append(current)
            current = [cut_point]
            next_cut = next(cut_iter, None)
        walked += edge
        if b != current[-1]:
            current.append(b)
    # cuts are strictly interior, so the leftover always reaches the last vertex
    pieces.append(current)

    segments = []
    for idx, piece in enumerate(pieces):
        geom = Polyline(piece)
        segments.append(RoadSegment(
            segment_id=f"{way.id}#{idx}",
            way_id=way.id,
            index=idx,
            geometry=geom,
            start=geom.points[0],
            end=geom.points[-1],
            length_m=geom.length_m(),
            highway_class=way.highway_class,
            city=network.source_name,
        ))
    return segments


def chunk_network(ways: list[Way], network: RoadNetwork,
                  target_m: float = DEFAULT_TARGET_M,
                  skip_degenerate: bool = False) -> ChunkResult:
    """chunk_way over a list of ways, concatenated in input order.

    With skip_degenerate, degenerate ways are counted and skipped instead
    of raising.
    """
    segments: list[RoadSegment] = []
    skipped: list[int] = []
    for way in ways:
        try:
            segments.extend(chunk_way(way, network, target_m))
        except DegenerateWayError:
            if not skip_degenerate:
                raise
            skipped.append(way.id)
    return ChunkResult(segments=segments, skipped_way_ids=skipped)


def rebuild_segment_geometry(segments: list[RoadSegment], network: RoadNetwork,
                             target_m: float = DEFAULT_TARGET_M) -> list[RoadSegment]:
    """Re-attach full geometry to segments that lost it in CSV transit.

    Chunking is deterministic, so re-chunking the parent ways with the
    same target reproduces each segment's shape; segments are matched by
    segment_id.
    """
    by_way = {w.id: w for w in network.ways}
    rebuilt: dict[str, RoadSegment] = {}
    for way_id in sorted({s.way_id for s in segments}):
        way = by_way.get(way_id)
        if way is None:
            raise DegenerateWayError(f"way {way_id} not present in the network file")
        for seg in chunk_way(way, network, target_m):
            rebuilt[seg.segment_id] = seg
    out = []
    for s in segments:
        if s.segment_id not in rebuilt:
            raise DegenerateWayError(
                f"segment {s.segment_id} not reproducible from the network "
                f"at target {target_m} m")
        out.append(rebuilt[s.segment_id])
    return out


def write_segments_csv(segments: list[RoadSegment], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SEGMENTS_CSV_HEADER.split(","))
        for s in segments:
            writer.writerow(_segment_row(s))


def _segment_row(s: RoadSegment) -> list[str]:
    return [
        s.segment_id,
        str(s.way_id),
        str(s.index),
        f"{s.start.lat:.7f}",
        f"{s.start.lon:.7f}",
        f"{s.end.lat:.7f}",
        f"{s.end.lon:.7f}",
        f"{s.length_m:.3f}",
        s.highway_class,
        s.city,
    ]


def read_segments_csv(path: str | Path) -> list[RoadSegment]:
    """Read segments back from CSV.

    Interior vertices are not stored in CSV, so geometry comes back None;
    exports that need the true shape re-chunk from the network file.
    """
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            start = GeoPoint(float(row["start_lat"]), float(row["start_lon"]))
            end = GeoPoint(float(row["end_lat"]), float(row["end_lon"]))
            out.append(RoadSegment(
                segment_id=row["segment_id"],
                way_id=int(row["way_id"]),
                index=int(row["index"]),
                geometry=None,
                start=start,
                end=end,
                length_m=float(row["length_m"]),
                highway_class=row["highway_class"],
                city=row["city"],
            ))
    return out
