"""roadsense command line: subcommands for each pipeline stage plus an
end-to-end `run`.

Exit codes: 0 success, 2 configuration error, 3 input-data error,
4 network error, 5 analysis error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, analysis, geo_export, labeling
from .errors import InputDataError, RoadsenseError
from .osm_ingest import filter_roads, parse_osm, read_network, write_network
from .pipeline import load_config, run_pipeline
from .sampler import (
    read_plan_csv,
    sample_segments,
    sample_stratified,
    write_plan_csv,
)
from .segmenter import (
    chunk_network,
    read_segments_csv,
    rebuild_segment_geometry,
    write_segments_csv,
)
from .streetview import (
    ClientConfig,
    estimate_coverage,
    fetch_all,
    read_queries_csv,
)

log = logging.getLogger(__name__)


def _parse_classes(raw: str) -> set[str]:
    return {c.strip() for c in raw.split(",") if c.strip()}


def cmd_ingest(args) -> int:
    data = Path(args.osm).read_bytes()
    network = parse_osm(data, source_name=args.city)
    write_network(network, args.out)
    print(f"{args.out}: {len(network.nodes)} nodes, {len(network.ways)} road ways")
    if network.stats.duplicate_node_ids:
        print(f"warning: {network.stats.duplicate_node_ids} duplicate node ids "
              "(last definition kept)")
    return 0


def cmd_segment(args) -> int:
    network = read_network(args.network)
    ways = filter_roads(network, _parse_classes(args.classes))
    result = chunk_network(ways, network, args.target_m,
                           skip_degenerate=args.skip_degenerate)
    write_segments_csv(result.segments, args.out)
    msg = f"{args.out}: {len(result.segments)} segments from {len(ways)} ways"
    if result.skipped_way_ids:
        msg += f" ({len(result.skipped_way_ids)} degenerate ways skipped)"
    print(msg)
    return 0


def cmd_sample(args) -> int:
    population = read_segments_csv(args.segments)
    if args.stratify_by_class:
        plan = sample_stratified(population, args.n, args.seed)
    else:
        plan = sample_segments(population, args.n, args.seed)
    write_plan_csv(plan, args.out)
    print(f"{args.out}: {len(plan.segments)} of {plan.population_n} segments "
          f"(seed {plan.seed})")
    if plan.warning:
        print(f"warning: {plan.warning}")
    return 0


def cmd_fetch(args) -> int:
    plan = read_plan_csv(args.plan)
    config = ClientConfig(
        api_key=args.api_key or os.environ.get("STREETVIEW_API_KEY", ""),
        out_dir=Path(args.out_dir),
        base_url=args.base_url,
        max_concurrency=args.max_concurrency,
        rate_per_s=args.rate_per_s,
        retries=args.retries,
        fixed_time=args.fixed_time,
    )
    records = fetch_all(plan, config)
    n_ok = sum(1 for r in records if r.status == "OK")
    print(f"{args.out_dir}/queries.csv: {len(records)} records, {n_ok} OK")
    return 0


def cmd_coverage(args) -> int:
    records = read_queries_csv(args.queries)
    est = estimate_coverage(records)
    payload = {
        "successes": est.successes,
        "total": est.total,
        "proportion": est.proportion,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "excluded": est.excluded,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(f"coverage: {est.proportion:.4f} "
          f"[{est.ci_low:.4f}, {est.ci_high:.4f}] "
          f"({est.successes}/{est.total} queries successful, "
          f"{est.excluded} excluded)")
    return 0


def cmd_labels(args) -> int:
    records = labeling.parse_labels(Path(args.infile).read_bytes())
    if args.action == "parse":
        rows = [{
            "AssignmentId": r.assignment_id,
            "WorkerId": r.worker_id,
            "Input.segment_id": r.segment_id,
            "Answer.potholes": r.potholes,
            "Answer.cracks": r.cracks,
            "Answer.markings_present": r.markings_present,
            "Answer.markings_clear": r.markings_clear,
            "Answer.litter": r.litter,
            "Answer.sidewalk": r.sidewalk_paved,
        } for r in records]
        data = geo_export.export_csv(rows, fieldnames=list(labeling.REQUIRED_COLUMNS))
        Path(args.out).write_bytes(data)
        print(f"{args.out}: {len(records)} normalized label rows")
        return 0

    scores = labeling.score_workers(records, threshold=args.threshold)
    if args.action == "score":
        rows = [{"worker_id": s.worker_id, "n_labels": str(s.n_labels),
                 "agreement": f"{s.agreement:.4f}", "flagged": str(s.flagged).lower()}
                for s in scores]
        data = geo_export.export_csv(rows, fieldnames=["worker_id", "n_labels",
                                                       "agreement", "flagged"])
        Path(args.out).write_bytes(data)
        n_flagged = sum(1 for s in scores if s.flagged)
        print(f"{args.out}: {len(scores)} workers scored, {n_flagged} flagged")
        return 0

    # aggregate
    excluded = labeling.flagged_workers(scores) if args.exclude_flagged else set()
    consensus = labeling.aggregate(records, excluding=excluded)
    labeling.write_consensus_csv(consensus, args.out)
    print(f"{args.out}: consensus for {len(consensus)} segments"
          + (f" ({len(excluded)} workers excluded)" if excluded else ""))
    return 0


def cmd_summarize(args) -> int:
    consensus = labeling.read_consensus_csv(args.consensus)
    summary = analysis.summarize_city(consensus, args.city)
    print(analysis.summary_table([summary]))
    if args.csv:
        rows = analysis.summary_csv_rows([summary])
        fieldnames = ["city", "n_images"] + [a for a, _ in analysis.SUMMARY_COLUMNS]
        Path(args.csv).write_bytes(geo_export.export_csv(rows, fieldnames=fieldnames))
    if args.journey_km is not None:
        rate = summary.proportions.get("potholes")
        if rate is None:
            print("expected potholes: unavailable (no resolvable pothole labels)")
        else:
            count = analysis.expected_incidents(rate, args.journey_km, args.capture_km)
            print(f"expected potholes over {args.journey_km:g} km at "
                  f"{args.capture_km:g} km per photo: {count:.1f}")
            print("note: the expected count scales with 1/capture-km; the same "
                  "rate gives 2x the count at 0.5 km per photo vs 1 km per photo")
    return 0


def _regression_rows(args):
    consensus = {c.segment_id: c for c in labeling.read_consensus_csv(args.consensus)}
    segments = read_segments_csv(args.segments)
    factors = [f.strip() for f in args.factors.split(",") if f.strip()]
    rows = []
    outcomes = []
    skipped_unresolved = 0
    matched_income: dict[str, tuple[str, float]] = {}
    if "income_quintile" in factors:
        if not args.tracts:
            raise InputDataError("--tracts is required for the income_quintile factor")
        tracts = analysis.load_tracts_geojson(args.tracts)
        points = [(s.segment_id, s.start) for s in segments]
        matches, unmatched = analysis.join_income(points, tracts)
        matched_income = {sid: (tid, income) for sid, tid, income in matches}
        if unmatched:
            log.warning("regress: %d sampled points fell outside every tract",
                        len(unmatched))
        if args.by_tract:
            incomes = sorted({income for _, income in matched_income.values()})
        else:
            incomes = [matched_income[s.segment_id][1] for s in segments
                       if s.segment_id in matched_income and s.segment_id in consensus]
        bins = analysis.quintile_bins(incomes)
    for s in segments:
        label = consensus.get(s.segment_id)
        if label is None:
            continue
        verdict = label.verdicts[args.outcome]
        if verdict not in ("yes", "no"):
            skipped_unresolved += 1
            continue
        row = {"road_class": s.highway_class, "city": s.city}
        if "income_quintile" in factors:
            if s.segment_id not in matched_income:
                continue
            row["income_quintile"] = bins.bin_of(matched_income[s.segment_id][1])
        rows.append(row)
        outcomes.append(1.0 if verdict == "yes" else 0.0)
    if skipped_unresolved:
        log.info("regress: %d segments skipped (unresolved %s)",
                 skipped_unresolved, args.outcome)
    return rows, outcomes, factors


def cmd_regress(args) -> int:
    rows, outcomes, factors = _regression_rows(args)
    baselines = {}
    if args.baseline_city:
        baselines["city"] = args.baseline_city
    design = analysis.build_design(rows, factors, baselines=baselines)
    result = analysis.ols_fit(design.matrix, outcomes, names=design.names,
                              robust=args.robust)
    print(analysis.regression_table(result))
    if args.csv:
        out_rows = [{"coefficient": n, "estimate": f"{e:.8f}", "std_error": f"{s:.8f}"}
                    for n, e, s in zip(result.coefficient_names, result.estimates,
                                       result.standard_errors)]
        Path(args.csv).write_bytes(geo_export.export_csv(
            out_rows, fieldnames=["coefficient", "estimate", "std_error"]))
    return 0


def cmd_export(args) -> int:
    plan = read_plan_csv(args.plan)
    if args.mode == "lines":
        if not args.network:
            raise InputDataError("--network is required for lines mode "
                                 "(full segment shapes live in the network file)")
        network = read_network(args.network)
        plan.segments = rebuild_segment_geometry(plan.segments, network, args.target_m)
    doc = geo_export.export_geojson(plan, mode=args.mode)
    Path(args.out).write_text(doc, encoding="utf-8")
    print(f"{args.out}: {len(plan.segments)} features ({args.mode})")
    return 0


def cmd_run(args) -> int:
    overrides = {
        "city": args.city,
        "osm_path": args.osm,
        "out_dir": args.out_dir,
        "classes": args.classes,
        "target_m": args.target_m,
        "sample_n": args.n,
        "seed": args.seed,
        "base_url": args.base_url,
        "max_concurrency": args.max_concurrency,
        "rate_per_s": args.rate_per_s,
        "retries": args.retries,
        "api_key": args.api_key,
        "fixed_time": args.fixed_time,
    }
    config = load_config(args.config, overrides)
    out_dir = run_pipeline(config)
    print(f"run complete: {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadsense",
        description="Measure road quality from sampled street-level imagery")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an OSM XML extract into a network file")
    p.add_argument("--osm", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="chunk filtered roads into segments")
    p.add_argument("--network", required=True)
    p.add_argument("--classes", default="trunk,primary,secondary,tertiary")
    p.add_argument("--target-m", type=float, default=500.0)
    p.add_argument("--skip-degenerate", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("sample", help="draw a seeded random sample of segments")
    p.add_argument("--segments", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratify-by-class", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fetch", help="query imagery availability for a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--api-key", default="")
    p.add_argument("--base-url", default="https://maps.googleapis.com")
    p.add_argument("--max-concurrency", type=int, default=4)
    p.add_argument("--rate-per-s", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--fixed-time", default=None,
                   help="pin queried_at timestamps (ISO-8601) for reproducible runs")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("coverage", help="estimate imagery coverage from queries.csv")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("labels", help="parse, score, or aggregate label batches")
    p.add_argument("action", choices=["parse", "score", "aggregate"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=labeling.DEFAULT_AGREEMENT_THRESHOLD)
    p.add_argument("--exclude-flagged", action="store_true")
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("summarize", help="per-city condition proportions")
    p.add_argument("--consensus", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--journey-km", type=float, default=None,
                   help="also report expected potholes over this journey")
    p.add_argument("--capture-km", type=float, default=0.5)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("regress", help="linear probability model on condition labels")
    p.add_argument("--outcome", required=True, choices=list(labeling.ATTRIBUTES))
    p.add_argument("--consensus", required=True)
    p.add_argument("--segments", required=True,
                   help="segments.csv or plan.csv carrying road_class and city")
    p.add_argument("--factors", default="road_class,city")
    p.add_argument("--baseline-city", default=None)
    p.add_argument("--tracts", default=None,
                   help="GeoJSON tract polygons (required for income_quintile)")
    p.add_argument("--by-tract", action="store_true",
                   help="compute quintiles over unique tract incomes")
    p.add_argument("--robust", action="store_true", help="HC1 standard errors")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("export", help="emit sampled locations as GeoJSON")
    p.add_argument("--plan", required=True)
    p.add_argument("--mode", choices=["points", "lines"], default="points")
    p.add_argument("--network", default=None)
    p.add_argument("--target-m", type=float, default=500.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("run", help="full pipeline: ingest through coverage")
    p.add_argument("--config", default=None)
    p.add_argument("--city", default=None)
    p.add_argument("--osm", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--classes", default=None)
    p.add_argument("--target-m", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--base-url", default=None)
    p.add_argument("--api-key", default=None)
    p.add_argument("--max-concurrency", type=int, default=None)
    p.add_argument("--rate-per-s", type=float, default=None)
    p.add_argument("--retries", type=int, default=None)
    p.add_argument("--fixed-time", default=None)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RoadsenseError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
