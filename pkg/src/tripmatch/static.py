"""Validate planner itineraries against a vehicular segment.

A plan survives four duration criteria (not too short, not too long, transit
leg duration close to the segment, boarding time close to the segment start)
and a route-geometry quorum; among survivors the one boarding closest to the
segment start wins.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Optional, Sequence

from .geodesy import distance_m, point_to_linestring_m, resample_min_spacing
from .ingest import format_timestamp
from .planner import Itinerary, JourneyPlanner, PlanQuery, adjusted_query
from .types import ActivitySegment, LineType, TracePoint


@dataclass(frozen=True)
class MatchConstants:
    """Thresholds for plan validation.

    The minute-denominated limits are stored in seconds (6.2 min -> 372 s and
    so on); the derived sums then close exactly: 336 + 744 = 1080 s = 18 min.
    """

    dEmax_m: float = 500.0
    walk_speed_mps: float = 1.34          # vW
    transit_speed_mps: float = 3.0        # vPT, minimum assumed
    schedule_deviation_s: float = 180.0   # tEPT
    walk_before_max_s: float = 372.0      # tWb = dEmax / vW, minute-rounded
    walk_after_max_s: float = 372.0       # tWe
    transit_extra_begin_max_s: float = 168.0  # tPTb = dEmax / vPT, minute-rounded
    transit_extra_end_max_s: float = 168.0    # tPTe
    transit_delta_max_s: float = 336.0    # |tPT - tV| <= tPTb + tPTe
    walk_delta_max_s: float = 744.0       # tWb + tWe
    total_delta_max_s: float = 1080.0     # 18 min ceiling
    start_diff_max_s: float = 348.0       # tPTb + tEPT
    route_quorum: float = 0.70
    route_limit_m: float = 100.0
    max_adjacent_outside: int = 4
    resample_spacing_m: float = 100.0

    def __post_init__(self) -> None:
        def rounded_minutes(seconds: float) -> float:
            return round(seconds / 60.0, 1) * 60.0

        checks = [
            self.walk_before_max_s == rounded_minutes(self.dEmax_m / self.walk_speed_mps),
            self.walk_after_max_s == self.walk_before_max_s,
            self.transit_extra_begin_max_s
            == rounded_minutes(self.dEmax_m / self.transit_speed_mps),
            self.transit_extra_end_max_s == self.transit_extra_begin_max_s,
            self.transit_delta_max_s
            == self.transit_extra_begin_max_s + self.transit_extra_end_max_s,
            self.walk_delta_max_s == self.walk_before_max_s + self.walk_after_max_s,
            self.total_delta_max_s == self.transit_delta_max_s + self.walk_delta_max_s,
            self.start_diff_max_s
            == self.transit_extra_begin_max_s + self.schedule_deviation_s,
        ]
        if not all(checks):
            raise ValueError(f"inconsistent match constants: {checks}")
        if not 0.0 < self.route_quorum <= 1.0:
            raise ValueError("route_quorum must be in (0, 1]")


class Verdict(str, enum.Enum):
    ACCEPT = "ACCEPT"
    TOTAL_TOO_SHORT = "TOTAL_TOO_SHORT"
    TOTAL_TOO_LONG = "TOTAL_TOO_LONG"
    TRANSIT_DURATION_MISMATCH = "TRANSIT_DURATION_MISMATCH"
    START_TIME_MISMATCH = "START_TIME_MISMATCH"
    ROUTE_QUORUM = "ROUTE_QUORUM"
    ROUTE_GAP_RUN = "ROUTE_GAP_RUN"


@dataclass
class PlanAssessment:
    itinerary: Itinerary
    segment_duration_s: float          # tV
    delta_total_s: float               # t - tV, signed
    delta_transit_s: float             # |tPT - tV|
    start_diff_s: float                # |board - segment start|
    route_match_fraction: Optional[float]
    max_adjacent_run_outside: Optional[int]
    verdict: Verdict

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


def route_geometry_check(segment: ActivitySegment, itinerary: Itinerary,
                         constants: MatchConstants,
                         ) -> tuple[float, int, bool]:
    """Compare the segment trace against the plan geometry.

    The trace is thinned to >= 100 m spacing; resampled points within dEmax
    along-trace of either end are ignored (transition points are inaccurate).
    Returns (matched fraction, longest unmatched adjacent run, passed).
    """
    samples: list[TracePoint] = resample_min_spacing(
        segment.trace, constants.resample_spacing_m)
    # cumulative along-trace distance of each resampled point
    cumulative = [0.0]
    for a, b in zip(samples, samples[1:]):
        cumulative.append(cumulative[-1] + distance_m(a.geo, b.geo))
    total = cumulative[-1]
    interior = [p for p, c in zip(samples, cumulative)
                if c >= constants.dEmax_m and total - c >= constants.dEmax_m]
    if not interior:
        interior = samples

    line = itinerary.transit.geometry
    flags = [point_to_linestring_m(p.geo, line) <= constants.route_limit_m
             for p in interior]
    matched = sum(flags)
    fraction = matched / len(flags)
    longest_gap = 0
    run = 0
    for ok in flags:
        run = 0 if ok else run + 1
        longest_gap = max(longest_gap, run)
    passed = (fraction >= constants.route_quorum
              and longest_gap <= constants.max_adjacent_outside)
    return fraction, longest_gap, passed


def filter_plan(itinerary: Itinerary, segment: ActivitySegment,
                constants: MatchConstants) -> PlanAssessment:
    """Assess one itinerary: the four duration criteria in order, then the
    route-geometry quorum."""
    tV = segment.duration_s
    t = itinerary.total_duration_s
    tPT = itinerary.transit.duration_s
    delta_total = t - tV
    delta_transit = abs(tPT - tV)
    start_diff = abs((itinerary.transit.board_time
                      - segment.start_time).total_seconds())

    fraction: Optional[float] = None
    longest_gap: Optional[int] = None
    if delta_total < -constants.schedule_deviation_s:
        verdict = Verdict.TOTAL_TOO_SHORT
    elif delta_total > constants.total_delta_max_s:
        verdict = Verdict.TOTAL_TOO_LONG
    elif delta_transit > constants.transit_delta_max_s:
        verdict = Verdict.TRANSIT_DURATION_MISMATCH
    elif start_diff > constants.start_diff_max_s:
        verdict = Verdict.START_TIME_MISMATCH
    else:
        fraction, longest_gap, geometry_ok = route_geometry_check(
            segment, itinerary, constants)
        if not geometry_ok:
            verdict = (Verdict.ROUTE_QUORUM if fraction < constants.route_quorum
                       else Verdict.ROUTE_GAP_RUN)
        else:
            verdict = Verdict.ACCEPT
    return PlanAssessment(
        itinerary=itinerary,
        segment_duration_s=tV,
        delta_total_s=delta_total,
        delta_transit_s=delta_transit,
        start_diff_s=start_diff,
        route_match_fraction=fraction,
        max_adjacent_run_outside=longest_gap,
        verdict=verdict,
    )


@dataclass(frozen=True)
class StaticMatchResult:
    segment_id: int
    line_type: LineType
    line_name: str
    trip_id: str
    assessment: PlanAssessment


def match_static(segment: ActivitySegment, planner: JourneyPlanner,
                 constants: MatchConstants | None = None,
                 assessments_sink: list | None = None,
                 ) -> Optional[StaticMatchResult]:
    """Query the planner for the segment and return the winning accepted plan
    (closest boarding time; ties to smaller total-duration delta, then
    trip_id). assessments_sink, when given, collects every PlanAssessment for
    the diagnostics log."""
    constants = constants or MatchConstants()
    query: PlanQuery = adjusted_query(
        segment,
        walk_back_s=constants.walk_before_max_s,
        max_walk_m=2 * constants.dEmax_m,
    )
    result = planner.plan(query)
    assessed = [filter_plan(it, segment, constants) for it in result.itineraries]
    if assessments_sink is not None:
        assessments_sink.extend((segment.segment_id, a) for a in assessed)
    accepted = [a for a in assessed if a.accepted]
    if not accepted:
        return None
    winner = min(accepted, key=lambda a: (a.start_diff_s, abs(a.delta_total_s),
                                          a.itinerary.transit.trip_id))
    leg = winner.itinerary.transit
    return StaticMatchResult(
        segment_id=segment.segment_id,
        line_type=leg.line_type,
        line_name=leg.line_name,
        trip_id=leg.trip_id,
        assessment=winner,
    )


ASSESSMENT_CSV_COLUMNS = [
    "segment_id", "trip_id", "line_type", "line_name", "verdict",
    "segment_duration_s", "total_duration_s", "transit_duration_s",
    "delta_total_s", "delta_transit_s", "start_diff_s",
    "route_match_fraction", "max_adjacent_run_outside",
    "board_time", "alight_time",
]


def write_assessments_csv(entries: Sequence[tuple[int, PlanAssessment]],
                          path) -> None:
    """One row per (segment, itinerary) for threshold calibration."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ASSESSMENT_CSV_COLUMNS)
        for segment_id, a in entries:
            leg = a.itinerary.transit
            writer.writerow([
                segment_id, leg.trip_id, leg.line_type.value, leg.line_name,
                a.verdict.value, f"{a.segment_duration_s:.1f}",
                f"{a.itinerary.total_duration_s:.1f}",
                f"{leg.duration_s:.1f}", f"{a.delta_total_s:.1f}",
                f"{a.delta_transit_s:.1f}", f"{a.start_diff_s:.1f}",
                "" if a.route_match_fraction is None
                else f"{a.route_match_fraction:.3f}",
                "" if a.max_adjacent_run_outside is None
                else a.max_adjacent_run_outside,
                format_timestamp(leg.board_time),
                format_timestamp(leg.alight_time),
            ])
