"""Condition statistics: per-city proportions, linear probability models
with dummy-coded factors, census-tract income joins, and quintile bins.

The regressions are plain OLS on 0/1 outcomes so coefficients read as
differences in proportions. Classical standard errors by default; HC1
robust errors on request.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from .errors import AnalysisError, CollinearityError, InsufficientDataError, InputDataError
from .geometry import GeoPoint, PolygonRing, point_in_polygon
from .labeling import ATTRIBUTES, ConsensusLabel

log = logging.getLogger(__name__)

# display order and names follow the condition summary table
SUMMARY_COLUMNS = (
    ("potholes", "potholes"),
    ("cracks", "cracks"),
    ("markings_clear", "clear road markings"),
    ("markings_present", "roads w/ markings"),
    ("litter", "litter"),
    ("sidewalk_paved", "paved sidewalk"),
)

ROAD_CLASS_LEVELS = ("primary", "secondary", "tertiary", "trunk")
ROAD_CLASS_BASELINE = "tertiary"

PIVOT_TOLERANCE = 1e-10


@dataclass
class CitySummary:
    city: str
    n_images: int
    proportions: dict            # attribute -> ratio; absent when unresolvable
    unresolved_counts: dict      # attribute -> count


@dataclass
class RegressionResult:
    coefficient_names: list[str]
    estimates: np.ndarray
    standard_errors: np.ndarray
    n: int
    r_squared: float

    def coefficient(self, name: str) -> float:
        return float(self.estimates[self.coefficient_names.index(name)])


@dataclass(frozen=True)
class TractPolygon:
    tract_id: str
    shapes: tuple[PolygonRing, ...]   # one entry per polygon of a multipolygon
    per_capita_income: float

    def __post_init__(self):
        if not (self.per_capita_income >= 0 and np.isfinite(self.per_capita_income)):
            raise ValueError(f"tract {self.tract_id}: income must be finite and >= 0")

    def bounds(self):
        bs = [s.bounds() for s in self.shapes]
        return (min(b[0] for b in bs), min(b[1] for b in bs),
                max(b[2] for b in bs), max(b[3] for b in bs))


@dataclass(frozen=True)
class QuintileBinning:
    cut_points: tuple[float, float, float, float]
    bin_labels: tuple[str, str, str, str, str] = ("Q1", "Q2", "Q3", "Q4", "Q5")

    def __post_init__(self):
        cp = self.cut_points
        if not all(cp[i] < cp[i + 1] for i in range(3)):
            raise ValueError(f"cut points must be strictly ascending, got {cp}")

    def bin_of(self, income: float) -> str:
        # values equal to a cut point fall in the lower bin
        idx = sum(1 for c in self.cut_points if c < income)
        return self.bin_labels[idx]


def summarize_city(consensus: list[ConsensusLabel], city: str) -> CitySummary:
    """Per-attribute yes-proportions, excluding unresolved verdicts.

    markings_clear is the proportion among images whose consensus says
    markings are present (na verdicts drop out), reported alongside the
    unconditional markings_present proportion.
    """
    if not consensus:
        raise InsufficientDataError(f"no consensus labels for {city}")
    proportions = {}
    unresolved = {}
    for attr in ATTRIBUTES:
        yes = no = 0
        unresolved[attr] = 0
        for c in consensus:
            v = c.verdicts[attr]
            if v == "yes":
                yes += 1
            elif v == "no":
                no += 1
            elif v == "unresolved":
                unresolved[attr] += 1
            # na falls through: question not applicable
        if yes + no > 0:
            proportions[attr] = yes / (yes + no)
        else:
            log.warning("summarize_city(%s): no resolvable labels for %s", city, attr)
    return CitySummary(city=city, n_images=len(consensus),
                       proportions=proportions, unresolved_counts=unresolved)


def ols_fit(design: np.ndarray, response: np.ndarray,
            names: list[str] | None = None, robust: bool = False) -> RegressionResult:
    """Least squares via column-pivoted QR, with classical (or HC1) errors.

    Rank deficiency (any pivot below PIVOT_TOLERANCE times the largest) is
    reported as a collinearity error naming the offending column.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).reshape(-1)
    n, k = x.shape
    if names is None:
        names = [f"x{i}" for i in range(k)]
    if len(names) != k:
        raise ValueError("names length does not match design columns")
    if n <= k:
        raise AnalysisError(f"need more observations ({n}) than coefficients ({k})")

    q, r, pivot = sla.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    largest = diag.max() if diag.size else 0.0
    if largest == 0.0:
        raise CollinearityError(f"design is all zeros (column {names[0]})")
    bad = np.nonzero(diag < PIVOT_TOLERANCE * largest)[0]
    if bad.size:
        offender = names[pivot[bad[0]]]
        raise CollinearityError(
            f"design is rank deficient: column {offender} is collinear "
            "with the others")

    qty = q.T @ y
    beta_pivoted = sla.solve_triangular(r, qty)
    beta = np.empty(k)
    beta[pivot] = beta_pivoted

    residuals = y - x @ beta
    rss = float(residuals @ residuals)
    rinv = sla.solve_triangular(r, np.eye(k))
    xtx_inv_pivoted = rinv @ rinv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(pivot, pivot)] = xtx_inv_pivoted

    if robust:
        # HC1: (X'X)^-1 X' diag(e^2) X (X'X)^-1 scaled by n/(n-k)
        meat = (x * (residuals ** 2)[:, None]).T @ x
        cov = xtx_inv @ meat @ xtx_inv * (n / (n - k))
    else:
        sigma2 = rss / (n - k)
        cov = xtx_inv * sigma2
    ses = np.sqrt(np.diag(cov))

    mean = y.mean()
    tss = float(((y - mean) ** 2).sum())
    # a constant response has no variance to explain: R^2 is 0 by convention
    if tss <= 1e-12 * (float(y @ y) + 1.0):
        r2 = 0.0
    else:
        r2 = 1.0 - rss / tss
    return RegressionResult(coefficient_names=list(names), estimates=beta,
                            standard_errors=ses, n=n, r_squared=r2)


@dataclass
class Design:
    """Dummy-coded design matrix with the factor levels it was built from."""

    matrix: np.ndarray
    names: list[str]
    factor_levels: dict = field(default_factory=dict)   # factor -> ordered levels
    baselines: dict = field(default_factory=dict)

    def encode(self, rows: list[dict]) -> np.ndarray:
        """Encode new rows against the fitted levels; unseen levels error."""
        out = np.zeros((len(rows), len(self.names)))
        out[:, 0] = 1.0
        col_index = {name: j for j, name in enumerate(self.names)}
        for i, row in enumerate(rows):
            for factor, levels in self.factor_levels.items():
                value = row[factor]
                if value not in levels:
                    raise AnalysisError(
                        f"unseen level {value!r} for factor {factor}; "
                        f"known levels: {sorted(levels)}")
                if value != self.baselines[factor]:
                    out[i, col_index[f"{factor}={value}"]] = 1.0
        return out


def build_design(rows: list[dict], factors: list[str],
                 baselines: dict | None = None) -> Design:
    """Intercept plus one dummy column per non-baseline factor level.

    road_class uses the four named classes as its declared level set
    (baseline tertiary), so a class absent from the data shows up as a
    zero column and is rejected by ols_fit rather than silently dropped.
    Other factors take their levels from the data, sorted; income_quintile
    defaults its baseline to the lowest bin.
    """
    baselines = dict(baselines or {})
    factor_levels: dict[str, tuple] = {}
    for factor in factors:
        if factor == "road_class":
            levels = ROAD_CLASS_LEVELS
            baselines.setdefault(factor, ROAD_CLASS_BASELINE)
            for row in rows:
                if row[factor] not in levels:
                    raise AnalysisError(
                        f"unseen level {row[factor]!r} for factor road_class; "
                        f"expected one of {levels}")
        else:
            levels = tuple(sorted({row[factor] for row in rows}))
            baselines.setdefault(factor, levels[0])
        if baselines[factor] not in levels:
            raise AnalysisError(
                f"baseline {baselines[factor]!r} not a level of {factor}")
        factor_levels[factor] = levels

    names = ["intercept"]
    for factor in factors:
        for level in factor_levels[factor]:
            if level != baselines[factor]:
                names.append(f"{factor}={level}")
    design = Design(matrix=np.empty(0), names=names,
                    factor_levels=factor_levels, baselines=baselines)
    design.matrix = design.encode(rows)
    return design


def load_tracts_geojson(path: str | Path) -> list[TractPolygon]:
    """Read a FeatureCollection of Polygon/MultiPolygon tract features.

    Each feature needs properties tract_id (string) and per_capita_income
    (number). GeoJSON rings come in [lon, lat] order.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise InputDataError(f"{path}: expected a GeoJSON FeatureCollection")
    tracts = []
    for i, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        if "tract_id" not in props or "per_capita_income" not in props:
            raise InputDataError(
                f"{path}: feature {i} missing tract_id/per_capita_income")
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            polygons = [coords]
        elif gtype == "MultiPolygon":
            polygons = coords
        else:
            raise InputDataError(
                f"{path}: feature {i} has unsupported geometry {gtype!r}")
        shapes = []
        for rings in polygons:
            exterior = [GeoPoint(lat, lon) for lon, lat in rings[0]]
            holes = [[GeoPoint(lat, lon) for lon, lat in ring] for ring in rings[1:]]
            shapes.append(PolygonRing(exterior, holes))
        tracts.append(TractPolygon(tract_id=str(props["tract_id"]),
                                   shapes=tuple(shapes),
                                   per_capita_income=float(props["per_capita_income"])))
    return tracts


def join_income(points: list[tuple[str, GeoPoint]],
                tracts: list[TractPolygon]):
    """Assign each point to its containing tract.

    Returns (matches, unmatched): matches as (segment_id, tract_id,
    income) in input point order, first tract wins when several contain a
    point (with a warning), bounding boxes pre-filter the scan.
    """
    boxes = [t.bounds() for t in tracts]
    matches = []
    unmatched = []
    multi = 0
    for segment_id, p in points:
        containing = []
        for t, box in zip(tracts, boxes):
            if not (box[0] <= p.lat <= box[2] and box[1] <= p.lon <= box[3]):
                continue
            if any(point_in_polygon(p, shape) for shape in t.shapes):
                containing.append(t)
        if not containing:
            unmatched.append(segment_id)
            continue
        if len(containing) > 1:
            multi += 1
        chosen = containing[0]
        matches.append((segment_id, chosen.tract_id, chosen.per_capita_income))
    if multi:
        log.warning("join_income: %d points fell in multiple tracts; "
                    "first match kept", multi)
    return matches, unmatched


def quintile_bins(incomes: list[float]) -> QuintileBinning:
    """Cut points at the 20/40/60/80 empirical percentiles.

    Linear interpolation between order statistics; at least 5 distinct
    values required.
    """
    values = np.asarray(incomes, dtype=float)
    if len(set(values.tolist())) < 5:
        raise AnalysisError(
            f"need at least 5 distinct income values, got {len(set(values.tolist()))}")
    cuts = np.percentile(values, [20, 40, 60, 80], method="linear")
    return QuintileBinning(cut_points=tuple(float(c) for c in cuts))


def expected_incidents(rate: float, journey_km: float, capture_km: float) -> float:
    """Expected incident count over a journey: rate * journey / capture.

    The capture length matters: a 0.23 segment rate over 10 km gives 2.3
    expected incidents when each photo covers 1 km, 4.6 when it covers
    0.5 km.
    """
    if capture_km <= 0:
        raise ValueError(f"capture_km must be positive, got {capture_km}")
    return rate * journey_km / capture_km


def summary_table(summaries: list[CitySummary]) -> str:
    """Aligned-text condition table, one row per city."""
    headers = ["city", "n"] + [display for _, display in SUMMARY_COLUMNS]
    rows = []
    for s in summaries:
        row = [s.city, str(s.n_images)]
        for attr, _ in SUMMARY_COLUMNS:
            row.append(f"{s.proportions[attr]:.2f}" if attr in s.proportions else "-")
        rows.append(row)
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
              for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)


def summary_csv_rows(summaries: list[CitySummary]) -> list[dict]:
    rows = []
    for s in summaries:
        row = {"city": s.city, "n_images": str(s.n_images)}
        for attr, _ in SUMMARY_COLUMNS:
            row[attr] = (f"{s.proportions[attr]:.6f}"
                         if attr in s.proportions else "")
        rows.append(row)
    return rows


def regression_table(result: RegressionResult) -> str:
    width = max(len(n) for n in result.coefficient_names)
    lines = [f"{'coefficient'.ljust(width)}  estimate      std. error"]
    for name, est, se in zip(result.coefficient_names, result.estimates,
                             result.standard_errors):
        lines.append(f"{name.ljust(width)}  {est:+.6f}    {se:.6f}")
    lines.append(f"n = {result.n}, R^2 = {result.r_squared:.4f}")
    return "\n".join(lines)
