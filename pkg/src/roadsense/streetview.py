"""Imagery availability client: build requests, fetch outcomes for sampled
points, and estimate coverage as the success proportion.

The metadata endpoint is always consulted first; it is the authoritative,
unbilled signal for "imagery exists here". The image itself is downloaded
only when metadata says OK. Transport failures are retried with
exponential backoff and, when they persist, recorded as
TRANSPORT_ERROR(code) and excluded from the coverage denominator: a
network hiccup says nothing about imagery coverage.
"""

from __future__ import annotations

import csv
import logging
import math
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import ConfigError, InsufficientDataError, KeyQuotaError
from .geometry import GeoPoint
from .sampler import SamplePlan

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://maps.googleapis.com"
WILSON_Z = 1.959964

STATUS_OK = "OK"
STATUS_ZERO_RESULTS = "ZERO_RESULTS"
STATUS_REQUEST_DENIED = "REQUEST_DENIED"

_TRANSPORT_RE = re.compile(r"^TRANSPORT_ERROR\((.*)\)$")

QUERIES_CSV_HEADER = "segment_id,lat,lon,status,pano_id,capture_date,image_path,queried_at"


def transport_error(code) -> str:
    return f"TRANSPORT_ERROR({code})"


def is_transport_error(status: str) -> bool:
    return _TRANSPORT_RE.match(status) is not None


def format_location(p: GeoPoint) -> str:
    return f"{p.lat:.7f},{p.lon:.7f}"


@dataclass(frozen=True)
class QueryRecord:
    segment_id: str
    location: GeoPoint
    status: str                      # OK | ZERO_RESULTS | REQUEST_DENIED | TRANSPORT_ERROR(code)
    pano_id: str | None = None
    capture_date: str | None = None  # "YYYY-MM"
    image_path: str | None = None    # relative to the run directory
    queried_at: str = ""             # ISO-8601 UTC

    def __post_init__(self):
        if self.image_path is not None and self.status != STATUS_OK:
            raise ValueError("image_path only allowed on OK records")
        if self.pano_id is not None and self.status != STATUS_OK:
            raise ValueError("pano_id implies an OK record")


@dataclass(frozen=True)
class CoverageEstimate:
    successes: int
    total: int
    proportion: float
    ci_low: float
    ci_high: float
    excluded: int = 0  # TRANSPORT_ERROR / REQUEST_DENIED records left out


@dataclass(frozen=True)
class ClientConfig:
    api_key: str
    out_dir: Path
    base_url: str = DEFAULT_BASE_URL
    image_size: tuple[int, int] = (640, 640)
    max_concurrency: int = 4
    rate_per_s: float = 10.0
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 10.0
    fixed_time: str | None = None  # pin queried_at for reproducible artifacts


def build_metadata_request(p: GeoPoint, api_key: str,
                           base_url: str = DEFAULT_BASE_URL) -> str:
    """Metadata (availability) URL for a point, coordinates at 7 decimals."""
    if not api_key:
        raise ConfigError("imagery API key is empty; set STREETVIEW_API_KEY "
                          "or pass --api-key")
    return (f"{base_url.rstrip('/')}/maps/api/streetview/metadata"
            f"?location={format_location(p)}&key={api_key}")


def build_image_request(p: GeoPoint, api_key: str,
                        size: tuple[int, int] = (640, 640),
                        base_url: str = DEFAULT_BASE_URL) -> str:
    if not api_key:
        raise ConfigError("imagery API key is empty; set STREETVIEW_API_KEY "
                          "or pass --api-key")
    w, h = size
    if not (1 <= w <= 640 and 1 <= h <= 640):
        raise ValueError(f"image size {w}x{h} outside the API limit [1,640]x[1,640]")
    return (f"{base_url.rstrip('/')}/maps/api/streetview"
            f"?size={w}x{h}&location={format_location(p)}&key={api_key}")


class TokenBucket:
    """Blocking token bucket shared by the fetch workers."""

    def __init__(self, rate_per_s: float, capacity: float | None = None):
        self.rate = float(rate_per_s)
        self.capacity = capacity if capacity is not None else max(1.0, self.rate)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity,
                                   self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


_thread_local = threading.local()


def _session() -> requests.Session:
    if not hasattr(_thread_local, "session"):
        _thread_local.session = requests.Session()
    return _thread_local.session


def _now_utc() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _get_with_retries(url: str, config: ClientConfig, bucket: TokenBucket):
    """GET with exponential backoff; returns response or error-code string."""
    last_code = "unreachable"
    for attempt in range(config.retries + 1):
        if attempt:
            time.sleep(config.backoff_s * (2 ** (attempt - 1)))
        bucket.acquire()
        try:
            resp = _session().get(url, timeout=config.timeout_s)
        except requests.RequestException as e:
            last_code = type(e).__name__
            continue
        if resp.status_code >= 500:
            last_code = str(resp.status_code)
            continue
        return resp
    return transport_error(last_code)


def _fetch_one(segment_id: str, point: GeoPoint, config: ClientConfig,
               bucket: TokenBucket) -> QueryRecord:
    queried_at = config.fixed_time or _now_utc()
    meta_url = build_metadata_request(point, config.api_key, config.base_url)
    resp = _get_with_retries(meta_url, config, bucket)
    if isinstance(resp, str):
        return QueryRecord(segment_id, point, resp, queried_at=queried_at)
    if resp.status_code != 200:
        return QueryRecord(segment_id, point, transport_error(resp.status_code),
                           queried_at=queried_at)
    try:
        body = resp.json()
    except ValueError:
        return QueryRecord(segment_id, point, transport_error("bad-json"),
                           queried_at=queried_at)
    status = body.get("status", "UNKNOWN_ERROR")
    if status in (STATUS_ZERO_RESULTS, "NOT_FOUND"):
        return QueryRecord(segment_id, point, STATUS_ZERO_RESULTS, queried_at=queried_at)
    if status == STATUS_REQUEST_DENIED:
        return QueryRecord(segment_id, point, STATUS_REQUEST_DENIED, queried_at=queried_at)
    if status != STATUS_OK:
        return QueryRecord(segment_id, point, transport_error(status), queried_at=queried_at)

    image_path = None
    img_url = build_image_request(point, config.api_key, config.image_size, config.base_url)
    img = _get_with_retries(img_url, config, bucket)
    if not isinstance(img, str) and img.status_code == 200:
        rel = f"images/{segment_id}.jpg"
        target = config.out_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(img.content)
        image_path = rel
    else:
        log.warning("metadata OK but image fetch failed for %s", segment_id)
    return QueryRecord(segment_id, point, STATUS_OK,
                       pano_id=body.get("pano_id"),
                       capture_date=body.get("date"),
                       image_path=image_path,
                       queried_at=queried_at)


def fetch_all(plan: SamplePlan, config: ClientConfig) -> list[QueryRecord]:
    """One record per sampled point, in plan order.

    Resumable: records already present in <out_dir>/queries.csv are reused,
    not re-fetched. Completed records are flushed to disk as the plan-order
    prefix grows, so an interrupted run keeps its progress. Aborts early
    with a key/quota diagnosis when more than half of the first 20 issued
    queries come back REQUEST_DENIED.
    """
    config.out_dir.mkdir(parents=True, exist_ok=True)
    queries_path = config.out_dir / "queries.csv"
    existing: dict[str, QueryRecord] = {}
    if queries_path.exists():
        for rec in read_queries_csv(queries_path):
            existing[rec.segment_id] = rec

    points = [(s.segment_id, s.start) for s in plan.segments]
    records: dict[int, QueryRecord] = {}
    to_fetch: list[tuple[int, str, GeoPoint]] = []
    for i, (seg_id, p) in enumerate(points):
        if seg_id in existing:
            records[i] = existing[seg_id]
        else:
            to_fetch.append((i, seg_id, p))

    bucket = TokenBucket(config.rate_per_s)
    flusher = _PrefixFlusher(queries_path, len(points))

    def run_wave(wave):
        with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
            futures = {pool.submit(_fetch_one, seg_id, p, config, bucket): idx
                       for idx, seg_id, p in wave}
            for fut, idx in futures.items():
                records[idx] = fut.result()

    try:
        probe, rest = to_fetch[:20], to_fetch[20:]
        run_wave(probe)
        if len(probe) == 20:
            denied = sum(1 for idx, _, _ in probe
                         if records[idx].status == STATUS_REQUEST_DENIED)
            if denied > 10:
                flusher.flush(records)
                raise KeyQuotaError(
                    f"{denied} of the first 20 queries were REQUEST_DENIED; "
                    "check the API key and quota before continuing")
        flusher.flush(records)
        for batch_start in range(0, len(rest), 200):
            run_wave(rest[batch_start:batch_start + 200])
            flusher.flush(records)
    finally:
        flusher.close()

    ordered = [records[i] for i in range(len(points))]
    write_queries_csv(ordered, queries_path)
    return ordered


class _PrefixFlusher:
    """Persist the contiguous plan-order prefix of completed records."""

    def __init__(self, path: Path, total: int):
        self.path = path
        self.total = total
        self.flushed = 0
        self._file = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(QUERIES_CSV_HEADER.split(","))

    def flush(self, records: dict[int, QueryRecord]) -> None:
        if self._file.closed:
            return
        while self.flushed < self.total and self.flushed in records:
            self._writer.writerow(_query_row(records[self.flushed]))
            self.flushed += 1
        self._file.flush()

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()


def _query_row(r: QueryRecord) -> list[str]:
    return [
        r.segment_id,
        f"{r.location.lat:.7f}",
        f"{r.location.lon:.7f}",
        r.status,
        r.pano_id or "",
        r.capture_date or "",
        r.image_path or "",
        r.queried_at,
    ]


def write_queries_csv(records: list[QueryRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(QUERIES_CSV_HEADER.split(","))
        for r in records:
            writer.writerow(_query_row(r))


def read_queries_csv(path: str | Path) -> list[QueryRecord]:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            out.append(QueryRecord(
                segment_id=row["segment_id"],
                location=GeoPoint(float(row["lat"]), float(row["lon"])),
                status=row["status"],
                pano_id=row["pano_id"] or None,
                capture_date=row["capture_date"] or None,
                image_path=row["image_path"] or None,
                queried_at=row["queried_at"],
            ))
    return out


def wilson_interval(successes: int, total: int, z: float = WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2.0 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def estimate_coverage(records: list[QueryRecord]) -> CoverageEstimate:
    """Proportion of OK among {OK, ZERO_RESULTS}, with a Wilson interval.

    TRANSPORT_ERROR and REQUEST_DENIED records carry no information about
    imagery coverage and are excluded from both numerator and denominator.
    """
    usable = [r for r in records if r.status in (STATUS_OK, STATUS_ZERO_RESULTS)]
    excluded = len(records) - len(usable)
    if not usable:
        raise InsufficientDataError(
            f"no usable records: {len(records)} total, all excluded")
    successes = sum(1 for r in usable if r.status == STATUS_OK)
    total = len(usable)
    low, high = wilson_interval(successes, total)
    return CoverageEstimate(successes=successes, total=total,
                            proportion=successes / total,
                            ci_low=low, ci_high=high, excluded=excluded)
