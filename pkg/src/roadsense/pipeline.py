"""End-to-end run orchestration: ingest -> filter -> segment -> sample ->
fetch -> coverage, with a manifest that makes a completed run directory
self-describing and reruns idempotent.

Stage outputs are plain CSV/JSON files so a run can be inspected, resumed,
or reproduced (the manifest records the resolved configuration, package
version and input digest; the API key is always redacted).
"""

from __future__ import annotations

import configparser
import difflib
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .errors import ConfigError, InputDataError, RoadsenseError
from .osm_ingest import SAMPLED_ROAD_CLASSES, filter_roads, parse_osm, write_network
from .sampler import sample_segments, write_plan_csv
from .segmenter import chunk_network, write_segments_csv
from .streetview import (
    DEFAULT_BASE_URL,
    ClientConfig,
    estimate_coverage,
    fetch_all,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"
RUN_ARTIFACTS = ("network.ndjson", "segments.csv", "plan.csv",
                 "queries.csv", "coverage.json")

_INT_KEYS = ("sample_n", "seed", "max_concurrency", "retries")
_FLOAT_KEYS = ("target_m", "rate_per_s")
_STR_KEYS = ("city", "osm_path", "out_dir", "base_url", "api_key", "fixed_time")
_VALID_KEYS = ("classes",) + _INT_KEYS + _FLOAT_KEYS + _STR_KEYS


@dataclass
class RunConfig:
    city: str = ""
    osm_path: str = ""
    out_dir: str = ""
    classes: tuple = tuple(sorted(SAMPLED_ROAD_CLASSES))
    target_m: float = 500.0
    sample_n: int = 1000
    seed: int = 0
    base_url: str = DEFAULT_BASE_URL
    max_concurrency: int = 4
    rate_per_s: float = 10.0
    retries: int = 3
    api_key: str = ""              # secret: never written to any artifact
    fixed_time: str = ""           # pin queried_at timestamps when set

    def validate(self) -> "RunConfig":
        if self.sample_n < 0:
            raise ConfigError(f"sample_n must be >= 0, got {self.sample_n}")
        if self.target_m <= 0:
            raise ConfigError(f"target_m must be positive, got {self.target_m}")
        if self.max_concurrency < 1:
            raise ConfigError(f"max_concurrency must be >= 1, got {self.max_concurrency}")
        if self.retries < 0:
            raise ConfigError(f"retries must be >= 0, got {self.retries}")
        if self.rate_per_s <= 0:
            raise ConfigError(f"rate_per_s must be positive, got {self.rate_per_s}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if not self.city:
            raise ConfigError("city is required")
        if not self.osm_path:
            raise ConfigError("osm_path is required")
        if not self.out_dir:
            raise ConfigError("out_dir is required")
        return self

    def redacted_dict(self) -> dict:
        data = asdict(self)
        data["classes"] = sorted(self.classes)
        data["api_key"] = "<redacted>" if self.api_key else ""
        return data


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {key} expects an integer, got {raw!r}")
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {key} expects a number, got {raw!r}")
    if key == "classes":
        return tuple(sorted(c.strip() for c in raw.split(",") if c.strip()))
    return raw


def _reject_unknown(key: str) -> None:
    if key in _VALID_KEYS:
        return
    hint = difflib.get_close_matches(key, _VALID_KEYS, n=1)
    suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
    raise ConfigError(f"unknown config key {key!r}{suggestion} "
                      f"(valid keys: {', '.join(_VALID_KEYS)})")


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Resolve a RunConfig: file values, then flag overrides on top.

    The environment is consulted last and only for the secret:
    STREETVIEW_API_KEY fills api_key when nothing else set it.
    """
    values: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.MissingSectionHeaderError:
            parser.read_string("[run]\n" + text)  # sectionless files are fine
        for section in parser.sections() + ["DEFAULT"]:
            for key, raw in parser.items(section):
                _reject_unknown(key)
                values[key] = _convert(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        _reject_unknown(key)
        values[key] = _convert(key, value) if isinstance(value, str) else value
    if not values.get("api_key"):
        values["api_key"] = os.environ.get("STREETVIEW_API_KEY", "")
    return RunConfig(**values).validate()


def config_from_manifest(manifest_path: str | Path, api_key: str = "",
                         out_dir: str | None = None) -> RunConfig:
    """Rebuild the run configuration recorded in a manifest."""
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    data = dict(manifest["config"])
    data["classes"] = tuple(data["classes"])
    data["api_key"] = api_key or os.environ.get("STREETVIEW_API_KEY", "")
    if out_dir is not None:
        data["out_dir"] = out_dir
    return RunConfig(**data).validate()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(config: RunConfig, out_dir: Path, osm_digest: str) -> None:
    manifest = {
        "tool": "roadsense",
        "version": __version__,
        "config": config.redacted_dict(),
        "osm_sha256": osm_digest,
        "artifacts": list(RUN_ARTIFACTS),
    }
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _is_up_to_date(config: RunConfig, out_dir: Path, osm_digest: str) -> bool:
    manifest_path = out_dir / MANIFEST_NAME
    if not manifest_path.exists():
        return False
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    expected = dict(config.redacted_dict())
    recorded = dict(manifest.get("config", {}))
    # out_dir naming and the key slot do not affect artifact content
    for transient in ("out_dir", "api_key"):
        expected.pop(transient, None)
        recorded.pop(transient, None)
    if recorded != expected or manifest.get("osm_sha256") != osm_digest:
        return False
    return all((out_dir / name).exists() for name in RUN_ARTIFACTS)


def run_pipeline(config: RunConfig) -> Path:
    """Execute the full measurement pipeline into config.out_dir.

    Writes network.ndjson, segments.csv, plan.csv, queries.csv,
    coverage.json and the run manifest. Re-running over a completed
    directory is a no-op (no network calls); over a partial directory the
    fetch stage resumes from the records already on disk.
    """
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    osm_path = Path(config.osm_path)
    if not osm_path.exists():
        raise InputDataError(f"stage ingest: OSM file not found: {osm_path}")
    osm_digest = _sha256(osm_path)

    if _is_up_to_date(config, out_dir, osm_digest):
        log.info("run directory %s is up to date; nothing to do", out_dir)
        print(f"{out_dir}: up to date")
        return out_dir

    stage = "ingest"
    try:
        network = parse_osm(osm_path.read_bytes(), source_name=config.city)
        write_network(network, out_dir / "network.ndjson")

        stage = "segment"
        ways = filter_roads(network, set(config.classes))
        result = chunk_network(ways, network, config.target_m, skip_degenerate=True)
        if result.skipped_way_ids:
            log.warning("segment: skipped %d degenerate ways", len(result.skipped_way_ids))
        write_segments_csv(result.segments, out_dir / "segments.csv")

        stage = "sample"
        plan = sample_segments(result.segments, config.sample_n, config.seed)
        write_plan_csv(plan, out_dir / "plan.csv")

        stage = "fetch"
        client = ClientConfig(
            api_key=config.api_key,
            out_dir=out_dir,
            base_url=config.base_url,
            max_concurrency=config.max_concurrency,
            rate_per_s=config.rate_per_s,
            retries=config.retries,
            fixed_time=config.fixed_time or None,
        )
        records = fetch_all(plan, client)

        stage = "coverage"
        estimate = estimate_coverage(records)
        coverage = {
            "successes": estimate.successes,
            "total": estimate.total,
            "proportion": estimate.proportion,
            "ci_low": estimate.ci_low,
            "ci_high": estimate.ci_high,
            "excluded": estimate.excluded,
        }
        (out_dir / "coverage.json").write_text(
            json.dumps(coverage, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except RoadsenseError as e:
        raise type(e)(f"stage {stage}: {e}") from e
    except Exception as e:
        raise RoadsenseError(f"stage {stage}: {e}") from e

    _write_manifest(config, out_dir, osm_digest)
    return out_dir
