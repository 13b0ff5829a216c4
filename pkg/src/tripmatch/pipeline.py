"""Stage orchestration: each stage loads what it needs, writes an
intermediate CSV the next stage can load back, and is deterministic given the
config. A worker pool (jobs > 1) may reorder completion; results are always
collected in segment-id order."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import evaluation, ingest, segmentation
from .config import RunConfig, STATIC
from .evaluation import MethodStats, Recognition, TripVerdict
from .gtfs import load_gtfs
from .ingest import format_timestamp
from .live import (
    LiveMatchResult,
    NEW_LIVE,
    OLD_LIVE,
    PositionIndex,
    match_live,
    match_live_old,
)
from .planner import JourneyPlanner, TimetablePlanner
from .static import StaticMatchResult, match_static, write_assessments_csv
from .types import ActivitySegment, FilteredPoint, LineType, ManualTrip

log = logging.getLogger(__name__)

SEGMENTS_FILE = "segments.csv"
MATCH_FILES = {NEW_LIVE: "matches_new_live.csv",
               OLD_LIVE: "matches_old_live.csv",
               STATIC: "matches_static.csv"}
ASSESSMENTS_FILE = "static_assessments.csv"
REPORT_TEXT_FILE = "report.txt"
REPORT_CSV_FILE = "report_stats.csv"
INVENTORY_FILE = "trip_inventory.csv"

MATCH_CSV_COLUMNS = ["segment_id", "device_id", "segm_start", "segm_end",
                     "activity", "recd_type", "recd_name", "reference",
                     "score", "matched_fraction"]


@dataclass
class IngestSummary:
    counts: dict[str, int] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"{name}: {count} rows" for name, count in self.counts.items()]
        out += [f"note: {d}" for d in self.diagnostics]
        return out


def run_ingest(cfg: RunConfig) -> IngestSummary:
    """Load and validate every configured input, reporting row counts."""
    summary = IngestSummary()
    diag = summary.diagnostics
    kw = dict(permissive=cfg.permissive, diagnostics=diag, default_date=cfg.date)

    summary.counts["device_data"] = len(ingest.load_device_data(
        cfg.require_path("device_data"), **kw))
    summary.counts["filtered_data"] = len(ingest.load_filtered_data(
        cfg.require_path("filtered_data"), **kw))
    summary.counts["transit_live"] = len(ingest.load_transit_live(
        cfg.require_path("transit_live"), **kw))
    trips = ingest.load_manual_log(cfg.require_path("manual_log"), **kw)
    summary.counts["manual_log"] = len(trips)
    summary.counts["manual_log_public_transport"] = sum(
        1 for t in trips if t.line_type is not LineType.CAR)
    if cfg.path("device_models") and cfg.path("device_models").exists():
        summary.counts["device_models"] = len(ingest.load_device_models(
            cfg.require_path("device_models"), permissive=cfg.permissive,
            diagnostics=diag))
    if cfg.path("trains_json") and cfg.path("trains_json").exists():
        summary.counts["train_records"] = ingest.load_train_stops(
            cfg.require_path("trains_json")).train_count
    if cfg.gtfs is not None and cfg.gtfs.exists():
        summary.counts.update(
            {f"gtfs_{k}": v for k, v in load_gtfs(cfg.gtfs).counts().items()})
    return summary


def load_filtered(cfg: RunConfig) -> list[FilteredPoint]:
    return ingest.load_filtered_data(cfg.require_path("filtered_data"),
                                     permissive=cfg.permissive,
                                     default_date=cfg.date)


def load_trips(cfg: RunConfig) -> list[ManualTrip]:
    return ingest.load_manual_log(cfg.require_path("manual_log"),
                                  permissive=cfg.permissive,
                                  default_date=cfg.date)


def build_segments(cfg: RunConfig,
                   filtered: Sequence[FilteredPoint] | None = None,
                   ) -> list[ActivitySegment]:
    filtered = filtered if filtered is not None else load_filtered(cfg)
    return segmentation.build_segments(filtered, max_gap_s=cfg.max_gap_s)


def build_position_index(cfg: RunConfig) -> PositionIndex:
    positions = ingest.load_transit_live(cfg.require_path("transit_live"),
                                         permissive=cfg.permissive,
                                         default_date=cfg.date)
    return PositionIndex(positions)


def build_planner(cfg: RunConfig) -> JourneyPlanner:
    if cfg.planner_kind != "embedded":
        raise ValueError(
            f"planner kind {cfg.planner_kind!r} is not built in; pass a "
            "JourneyPlanner implementing the adapter contract instead")
    return TimetablePlanner(load_gtfs(cfg.require_gtfs()), cfg.date,
                            search_window_s=cfg.planner_search_window_s)


def _map_segments(candidates: Sequence[ActivitySegment], jobs: int,
                  fn: Callable[[ActivitySegment], Optional[object]],
                  ) -> dict[int, object]:
    """Apply fn over segments, in parallel when jobs > 1, collecting non-None
    results keyed and ordered by segment id."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fn, candidates))
    else:
        results = [fn(s) for s in candidates]
    paired = [(s.segment_id, r) for s, r in zip(candidates, results)
              if r is not None]
    return dict(sorted(paired))


def run_live_stage(cfg: RunConfig, segments: Sequence[ActivitySegment],
                   index: PositionIndex, method: str,
                   ) -> dict[int, LiveMatchResult]:
    candidates = segmentation.vehicular_candidates(segments)
    matcher = match_live if method == NEW_LIVE else match_live_old
    return _map_segments(candidates, cfg.jobs,
                         lambda s: matcher(s, cfg.live, index))


def run_static_stage(cfg: RunConfig, segments: Sequence[ActivitySegment],
                     planner: JourneyPlanner,
                     ) -> tuple[dict[int, StaticMatchResult], list]:
    candidates = segmentation.vehicular_candidates(segments)
    assessments: list = []

    def run_one(s: ActivitySegment):
        sink: list = []
        try:
            result = match_static(s, planner, cfg.constants,
                                  assessments_sink=sink)
        except Exception as exc:
            raise RuntimeError(f"static matching failed for segment "
                               f"{s.segment_id}") from exc
        return result, sink

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(run_one, candidates))
    else:
        outcomes = [run_one(s) for s in candidates]
    results: dict[int, StaticMatchResult] = {}
    for segment, (result, sink) in zip(candidates, outcomes):
        assessments.extend(sink)
        if result is not None:
            results[segment.segment_id] = result
    return dict(sorted(results.items())), assessments


def write_match_csv(results: dict[int, object],
                    segments: Sequence[ActivitySegment], path) -> None:
    by_id = {s.segment_id: s for s in segments}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MATCH_CSV_COLUMNS)
        for segment_id, r in results.items():
            s = by_id[segment_id]
            reference = getattr(r, "vehicle_ref", None) or getattr(r, "trip_id", "")
            score = getattr(r, "score", "")
            fraction = getattr(r, "matched_fraction", "")
            writer.writerow([
                segment_id, s.device_id, format_timestamp(s.start_time),
                format_timestamp(s.end_time), s.activity.value,
                r.line_type.value, r.line_name, reference,
                f"{score:.1f}" if score != "" else "",
                f"{fraction:.3f}" if fraction != "" else "",
            ])


def load_match_csv(path) -> dict[int, Recognition]:
    out: dict[int, Recognition] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[int(row["segment_id"])] = Recognition(
                LineType(row["recd_type"]), row["recd_name"])
    return dict(sorted(out.items()))


def to_recognitions(results: dict[int, object]) -> dict[int, Recognition]:
    return {segment_id: Recognition(r.line_type, r.line_name)
            for segment_id, r in results.items()}


@dataclass
class EvaluationOutput:
    verdicts: list[TripVerdict]
    stats: dict[str, MethodStats]
    report_text: str
    report_csv: str
    gate_failures: list[str] = field(default_factory=list)


def run_evaluation(cfg: RunConfig, trips: Sequence[ManualTrip],
                   segments: Sequence[ActivitySegment],
                   recognitions: dict[str, dict[int, Recognition]],
                   ) -> EvaluationOutput:
    verdicts = evaluation.join_trips(trips, segments, recognitions)
    stats = evaluation.compute_stats(verdicts, list(recognitions))
    output = EvaluationOutput(
        verdicts=verdicts,
        stats=stats,
        report_text=evaluation.render_report(stats, verdicts, "text"),
        report_csv=evaluation.render_report(stats, verdicts, "csv"),
    )
    for gate in cfg.gates:
        value = _gate_value(stats, gate.method, gate.metric)
        if value is None:
            output.gate_failures.append(
                f"gate {gate.method}/{gate.metric}: unknown metric")
        elif not gate.check(value):
            output.gate_failures.append(
                f"gate {gate.method}/{gate.metric}: value {value} outside "
                f"[{gate.min}, {gate.max}]")
    return output


def _gate_value(stats: dict[str, MethodStats], method: str,
                metric: str) -> Optional[float]:
    ms = stats.get(method)
    if ms is None:
        return None
    metric = metric.lower()
    simple = {
        "public_transport": ms.public_transport,
        "public_transport_line_type": ms.public_transport_line_type,
        "car_recognized": ms.car_recognized,
    }
    if metric in simple:
        return simple[metric]
    name_level = metric.endswith("_name")
    type_name = metric[:-5] if name_level else metric
    for lt, ts in ms.per_type.items():
        if lt.value.lower() == type_name:
            if name_level:
                return ts.name_correct if ts.name_correct is not None else None
            return ts.recognized
    return None


@dataclass
class RunOutputs:
    out_dir: Path
    segments: list[ActivitySegment]
    evaluation: EvaluationOutput


def run_all(cfg: RunConfig) -> RunOutputs:
    """Full pipeline: segment, match with the configured methods, evaluate,
    and write every intermediate plus the final report."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    filtered = load_filtered(cfg)
    trips = load_trips(cfg)
    segments = build_segments(cfg, filtered)
    segmentation.write_segments_csv(segments, out_dir / SEGMENTS_FILE)
    log.info("%d segments (%d vehicular candidates)", len(segments),
             len(segmentation.vehicular_candidates(segments)))

    recognitions: dict[str, dict[int, Recognition]] = {}
    live_methods = [m for m in cfg.methods if m in (NEW_LIVE, OLD_LIVE)]
    if live_methods:
        index = build_position_index(cfg)
        for method in live_methods:
            results = run_live_stage(cfg, segments, index, method)
            write_match_csv(results, segments, out_dir / MATCH_FILES[method])
            recognitions[method] = to_recognitions(results)
    if STATIC in cfg.methods:
        planner = build_planner(cfg)
        static_results, assessments = run_static_stage(cfg, segments, planner)
        write_match_csv(static_results, segments, out_dir / MATCH_FILES[STATIC])
        write_assessments_csv(assessments, out_dir / ASSESSMENTS_FILE)
        recognitions[STATIC] = to_recognitions(static_results)

    evaluated = run_evaluation(cfg, trips, segments, recognitions)
    (out_dir / REPORT_TEXT_FILE).write_text(evaluated.report_text,
                                            encoding="utf-8")
    (out_dir / REPORT_CSV_FILE).write_text(evaluated.report_csv,
                                           encoding="utf-8")
    evaluation.write_inventory_csv(evaluated.verdicts, list(recognitions),
                                   out_dir / INVENTORY_FILE)
    return RunOutputs(out_dir=out_dir, segments=segments, evaluation=evaluated)
