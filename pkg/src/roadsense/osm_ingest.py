"""Parse OpenStreetMap XML extracts into an in-memory road network.

Only the XML subset matters here: <node id lat lon>, <way id>, <nd ref>
and <tag k v>. Ways carrying a highway tag (any value) become road
polylines; everything else (relations, untagged ways, changesets) is
ignored. The binary PBF format is out of scope.
"""

from __future__ import annotations

import io
import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import quoteattr

from .errors import CoordinateRangeError, InputDataError, MissingNodeError, OsmParseError
from .geometry import GeoPoint

log = logging.getLogger(__name__)

# The road classes the sampling frame focuses on. Any other highway tag
# value is kept in the network but treated as an "other" class.
SAMPLED_ROAD_CLASSES = frozenset({"trunk", "primary", "secondary", "tertiary"})


@dataclass(frozen=True)
class Way:
    id: int
    node_ids: tuple[int, ...]
    highway_class: str  # raw highway tag value; the four named classes are special
    name: str | None = None

    def __post_init__(self):
        if len(self.node_ids) < 2:
            raise InputDataError(f"way {self.id} has fewer than 2 node references")

    @property
    def is_named_class(self) -> bool:
        return self.highway_class in SAMPLED_ROAD_CLASSES


@dataclass
class ParseStats:
    duplicate_node_ids: int = 0
    ways_without_highway: int = 0


@dataclass
class RoadNetwork:
    nodes: dict[int, GeoPoint]
    ways: list[Way]
    source_name: str = ""
    stats: ParseStats = field(default_factory=ParseStats)

    def __eq__(self, other):
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return (self.nodes == other.nodes and self.ways == other.ways
                and self.source_name == other.source_name)

    def way_points(self, way: Way) -> list[GeoPoint]:
        return [self.nodes[nid] for nid in way.node_ids]


def _node_point(elem) -> tuple[int, GeoPoint]:
    try:
        nid = int(elem.attrib["id"])
        lat = float(elem.attrib["lat"])
        lon = float(elem.attrib["lon"])
    except (KeyError, ValueError) as e:
        raise OsmParseError(f"node element missing/invalid id/lat/lon: {e}") from e
    try:
        return nid, GeoPoint(lat, lon)
    except ValueError as e:
        raise CoordinateRangeError(f"node {nid}: {e}") from e


def parse_osm(xml_bytes: bytes | str, source_name: str = "") -> RoadNetwork:
    """Parse an OSM XML document into a RoadNetwork.

    Keeps every node and every way tagged with highway=* (node order
    preserved). Duplicate node ids follow last-definition-wins with a
    counter in the parse stats. A way referencing a node id absent from
    the document raises MissingNodeError.
    """
    if isinstance(xml_bytes, str):
        xml_bytes = xml_bytes.encode("utf-8")
    nodes: dict[int, GeoPoint] = {}
    ways: list[Way] = []
    stats = ParseStats()
    try:
        for _, elem in ET.iterparse(io.BytesIO(xml_bytes), events=("end",)):
            if elem.tag == "node":
                nid, point = _node_point(elem)
                if nid in nodes:
                    stats.duplicate_node_ids += 1
                nodes[nid] = point
                elem.clear()
            elif elem.tag == "way":
                tags = {t.attrib.get("k"): t.attrib.get("v", "") for t in elem.findall("tag")}
                highway = tags.get("highway")
                if highway is None:
                    stats.ways_without_highway += 1
                    elem.clear()
                    continue
                try:
                    wid = int(elem.attrib["id"])
                    refs = tuple(int(nd.attrib["ref"]) for nd in elem.findall("nd"))
                except (KeyError, ValueError) as e:
                    raise OsmParseError(f"way element missing/invalid id or nd ref: {e}") from e
                ways.append(Way(id=wid, node_ids=refs,
                                highway_class=highway, name=tags.get("name")))
                elem.clear()
    except ET.ParseError as e:
        # e.position is (line, column)
        raise OsmParseError(f"malformed OSM XML at line {e.position[0]}, "
                            f"column {e.position[1]}: {e}") from e

    for way in ways:
        for nid in way.node_ids:
            if nid not in nodes:
                raise MissingNodeError(
                    f"way {way.id} references node {nid} absent from the document")

    if stats.duplicate_node_ids:
        log.warning("parse_osm: %d duplicate node ids (last definition wins)",
                    stats.duplicate_node_ids)
    return RoadNetwork(nodes=nodes, ways=ways, source_name=source_name, stats=stats)


def filter_roads(network: RoadNetwork, classes: set[str]) -> list[Way]:
    """Ways whose highway class is in ``classes``, in input order."""
    return [w for w in network.ways if w.highway_class in classes]


def to_osm_xml(network: RoadNetwork) -> str:
    """Serialize back to the OSM XML subset this module reads.

    Coordinates are written with repr(), the shortest decimal string that
    round-trips the float, so parse(to_osm_xml(n)) == n.
    """
    out = ["<?xml version='1.0' encoding='UTF-8'?>", "<osm version=\"0.6\">"]
    for nid in network.nodes:
        p = network.nodes[nid]
        out.append(f'  <node id="{nid}" lat="{p.lat!r}" lon="{p.lon!r}"/>')
    for way in network.ways:
        out.append(f'  <way id="{way.id}">')
        for ref in way.node_ids:
            out.append(f'    <nd ref="{ref}"/>')
        out.append(f'    <tag k="highway" v={quoteattr(way.highway_class)}/>')
        if way.name is not None:
            out.append(f'    <tag k="name" v={quoteattr(way.name)}/>')
        out.append("  </way>")
    out.append("</osm>")
    return "\n".join(out) + "\n"


# --- newline-delimited intermediate format -------------------------------
#
# One JSON record per line:
#   {"type": "meta", "city": <source_name>}
#   {"type": "node", "id": <int>, "lat": <float>, "lon": <float>}
#   {"type": "way", "id": <int>, "nodes": [<int>...], "highway": <str>,
#    "name": <str or null>}

def write_network(network: RoadNetwork, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({"type": "meta", "city": network.source_name}) + "\n")
        for nid in sorted(network.nodes):
            p = network.nodes[nid]
            f.write(json.dumps({"type": "node", "id": nid, "lat": p.lat, "lon": p.lon}) + "\n")
        for w in network.ways:
            f.write(json.dumps({"type": "way", "id": w.id, "nodes": list(w.node_ids),
                                "highway": w.highway_class, "name": w.name}) + "\n")


def read_network(path: str | Path) -> RoadNetwork:
    nodes: dict[int, GeoPoint] = {}
    ways: list[Way] = []
    source_name = ""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputDataError(f"{path}: bad JSON on line {lineno}: {e}") from e
            kind = rec.get("type")
            if kind == "meta":
                source_name = rec.get("city", "")
            elif kind == "node":
                nodes[rec["id"]] = GeoPoint(rec["lat"], rec["lon"])
            elif kind == "way":
                ways.append(Way(id=rec["id"], node_ids=tuple(rec["nodes"]),
                                highway_class=rec["highway"], name=rec.get("name")))
            else:
                raise InputDataError(f"{path}: unknown record type {kind!r} on line {lineno}")
    network = RoadNetwork(nodes=nodes, ways=ways, source_name=source_name)
    for way in ways:
        for nid in way.node_ids:
            if nid not in nodes:
                raise MissingNodeError(
                    f"way {way.id} references node {nid} absent from {path}")
    return network
