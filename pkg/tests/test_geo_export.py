import csv
import io
import json
import random
import string

import pytest

from roadsense.geo_export import export_csv, export_geojson
from roadsense.geometry import GeoPoint, Polyline
from roadsense.sampler import SamplePlan
from roadsense.segmenter import RoadSegment


def make_plan(n, with_geometry=True):
    segs = []
    for i in range(n):
        start = GeoPoint(13.0 + i * 0.001, 100.5)
        mid = GeoPoint(13.0 + i * 0.001, 100.5005)
        end = GeoPoint(13.0005 + i * 0.001, 100.501)
        segs.append(RoadSegment(
            segment_id=f"{i}#0", way_id=i, index=0,
            geometry=Polyline([start, mid, end]) if with_geometry else None,
            start=start, end=end, length_m=77.0,
            highway_class="primary", city="bangkok"))
    return SamplePlan(seed=1, requested_n=n, population_n=n, segments=segs)


class TestGeojson:
    def test_empty_plan(self):
        doc = json.loads(export_geojson(make_plan(0)))
        assert doc == {"type": "FeatureCollection", "features": []}

    def test_points_mode_single(self):
        doc = json.loads(export_geojson(make_plan(1), mode="points"))
        assert len(doc["features"]) == 1
        feat = doc["features"][0]
        assert feat["geometry"]["type"] == "Point"
        # [lon, lat] order
        assert feat["geometry"]["coordinates"] == [100.5, 13.0]
        assert feat["properties"]["segment_id"] == "0#0"
        assert feat["properties"]["city"] == "bangkok"

    def test_lines_mode_full_shape(self):
        doc = json.loads(export_geojson(make_plan(1), mode="lines"))
        geom = doc["features"][0]["geometry"]
        assert geom["type"] == "LineString"
        assert len(geom["coordinates"]) == 3

    def test_lines_mode_without_geometry_uses_chord(self):
        doc = json.loads(export_geojson(make_plan(1, with_geometry=False), mode="lines"))
        assert len(doc["features"][0]["geometry"]["coordinates"]) == 2

    def test_bulk_plan_feature_count(self):
        doc = json.loads(export_geojson(make_plan(1000)))
        assert len(doc["features"]) == 1000
        ranks = [f["properties"]["sample_rank"] for f in doc["features"]]
        assert ranks == list(range(1000))

    def test_seven_decimal_places(self):
        text = export_geojson(make_plan(1))
        assert "[100.5000000,13.0000000]" in text

    def test_every_feature_has_required_properties(self):
        doc = json.loads(export_geojson(make_plan(20)))
        for f in doc["features"]:
            assert "segment_id" in f["properties"]
            assert "city" in f["properties"]

    def test_deterministic_bytes(self):
        plan = make_plan(50)
        assert export_geojson(plan) == export_geojson(plan)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            export_geojson(make_plan(1), mode="polygons")


class TestCsv:
    def test_empty_table_header_only(self):
        data = export_csv([], fieldnames=["a", "b"])
        assert data == b"a,b\n"

    def test_comma_field_quoted(self):
        data = export_csv([{"name": "a,b", "x": "1"}])
        assert b'"a,b"' in data
        assert data.endswith(b"\n")

    def test_round_trip_random_tables(self):
        rng = random.Random(77)
        alphabet = string.ascii_letters + ',"\n '
        for _ in range(25):
            fields = [f"col{i}" for i in range(rng.randint(1, 5))]
            rows = [{f: "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
                     for f in fields}
                    for _ in range(rng.randint(0, 10))]
            data = export_csv(rows, fieldnames=fields)
            parsed = list(csv.DictReader(io.StringIO(data.decode("utf-8"))))
            assert [dict(r) for r in parsed] == rows

    def test_missing_fieldnames_for_empty(self):
        with pytest.raises(ValueError):
            export_csv([])
