import random
from datetime import timedelta

import pytest

from tripmatch.geodesy import offset_point
from tripmatch.planner import Itinerary, PlanResult, TransitLeg
from tripmatch.static import (
    MatchConstants,
    Verdict,
    filter_plan,
    match_static,
    route_geometry_check,
)
from tripmatch.types import Activity, GeoPoint, LineType

from conftest import at, fp, segment_of

CONSTANTS = MatchConstants()
BASE = GeoPoint(60.17, 24.94)


def straight_segment(length_m=3000.0, duration_s=600.0, n=31, east_m=0.0,
                     start_s=0.0):
    """IN_VEHICLE segment going due north from BASE."""
    pts = []
    for i in range(n):
        f = i / (n - 1)
        p = offset_point(BASE, east_m, f * length_m)
        pts.append(fp(start_s + f * duration_s, Activity.IN_VEHICLE,
                      lat=p.lat, lng=p.lng))
    return segment_of(pts)


def plan_for(segment, *, board_offset_s=0.0, total_s=None, transit_s=None,
             geometry=None, walk_split=0.5, trip_id="t1",
             line=(LineType.BUS, "16")):
    """Itinerary built around a segment with controllable deltas."""
    tV = segment.duration_s
    transit_s = tV if transit_s is None else transit_s
    total_s = transit_s if total_s is None else total_s
    walk_total = total_s - transit_s
    assert walk_total >= -1e-9, "total must cover the transit leg"
    walk_before = max(0.0, walk_total * walk_split)
    walk_after = max(0.0, walk_total - walk_before)
    board = segment.start_time + timedelta(seconds=board_offset_s)
    alight = board + timedelta(seconds=transit_s)
    if geometry is None:
        geometry = (segment.trace[0].geo, segment.trace[-1].geo)
    leg = TransitLeg(line[0], line[1], trip_id, "S1", board, "S2", alight,
                     tuple(geometry))
    return Itinerary(start_time=board - timedelta(seconds=walk_before),
                     end_time=alight + timedelta(seconds=walk_after),
                     walk_before_s=walk_before,
                     transit=leg,
                     walk_after_s=walk_after,
                     total_duration_s=walk_before + transit_s + walk_after)


def test_constants_defaults_are_consistent():
    c = MatchConstants()
    assert c.walk_before_max_s == 372.0          # 6.2 min
    assert c.transit_extra_begin_max_s == 168.0  # 2.8 min
    assert c.transit_delta_max_s == 336.0        # 5.6 min
    assert c.walk_delta_max_s == 744.0           # 12.4 min
    assert c.total_delta_max_s == 1080.0         # 18 min exactly closes
    assert c.start_diff_max_s == 348.0           # 5.8 min
    assert c.transit_delta_max_s + c.walk_delta_max_s == c.total_delta_max_s


def test_inconsistent_constants_rejected():
    with pytest.raises(ValueError, match="inconsistent"):
        MatchConstants(start_diff_max_s=350.0)


def test_clean_plan_accepted():
    segment = straight_segment()
    assessment = filter_plan(plan_for(segment), segment, CONSTANTS)
    assert assessment.verdict is Verdict.ACCEPT
    assert assessment.accepted


# threshold closure: one second inside passes, one second outside rejects,
# for every discard criterion
@pytest.mark.parametrize("kwargs,verdict", [
    (dict(total_s=600.0 - 179.0, transit_s=600.0 - 179.0), Verdict.ACCEPT),
    (dict(total_s=600.0 - 180.0, transit_s=600.0 - 180.0),
     Verdict.ACCEPT),  # boundary: not "more than"
    (dict(total_s=600.0 - 181.0, transit_s=600.0 - 181.0),
     Verdict.TOTAL_TOO_SHORT),
    (dict(total_s=600.0 + 1079.0), Verdict.ACCEPT),
    (dict(total_s=600.0 + 1080.0), Verdict.ACCEPT),
    (dict(total_s=600.0 + 1081.0), Verdict.TOTAL_TOO_LONG),
    (dict(transit_s=600.0 + 335.0, total_s=600.0 + 335.0), Verdict.ACCEPT),
    (dict(transit_s=600.0 + 337.0, total_s=600.0 + 337.0),
     Verdict.TRANSIT_DURATION_MISMATCH),
    (dict(transit_s=600.0 - 335.0, total_s=600.0 - 335.0 + 300.0),
     Verdict.ACCEPT),
    (dict(transit_s=600.0 - 337.0, total_s=600.0 - 337.0 + 300.0),
     Verdict.TRANSIT_DURATION_MISMATCH),
    (dict(board_offset_s=347.0), Verdict.ACCEPT),
    (dict(board_offset_s=349.0), Verdict.START_TIME_MISMATCH),
    (dict(board_offset_s=-347.0), Verdict.ACCEPT),
    (dict(board_offset_s=-349.0), Verdict.START_TIME_MISMATCH),
])
def test_duration_threshold_closure(kwargs, verdict):
    segment = straight_segment(duration_s=600.0)
    assessment = filter_plan(plan_for(segment, **kwargs), segment, CONSTANTS)
    assert assessment.verdict is verdict


def test_transit_duration_example_from_formula():
    # tV = 600, tPT = 950 -> |950-600| = 350 > 336 -> reject
    segment = straight_segment(duration_s=600.0)
    it = plan_for(segment, transit_s=950.0, total_s=950.0)
    assessment = filter_plan(it, segment, CONSTANTS)
    assert assessment.verdict is Verdict.TRANSIT_DURATION_MISMATCH
    assert assessment.delta_transit_s == pytest.approx(350.0)


def test_short_plan_example():
    # tV = 600, t = 400 -> 400 < 600 - 180 -> reject (a)
    segment = straight_segment(duration_s=600.0)
    it = plan_for(segment, transit_s=400.0, total_s=400.0)
    assert filter_plan(it, segment, CONSTANTS).verdict is Verdict.TOTAL_TOO_SHORT


# --- route geometry ---

def test_identical_geometry_passes_fully():
    segment = straight_segment()
    fraction, run, ok = route_geometry_check(
        segment, plan_for(segment), CONSTANTS)
    assert fraction == 1.0
    assert run == 0
    assert ok


def test_quorum_boundary_7_of_10():
    # seven interior samples on the line, three isolated 150 m misses
    fraction, run, ok = _run_with_miss_pattern(miss_idx={2, 5, 8}, n_samples=10)
    assert fraction == pytest.approx(0.70)
    assert run == 1
    assert ok


def test_gap_run_of_five_fails_even_at_good_fraction():
    fraction, run, ok = _run_with_miss_pattern(miss_idx={3, 4, 5, 6, 7},
                                               n_samples=20)
    assert fraction >= 0.70
    assert run == 5
    assert not ok


def test_gap_run_of_four_passes():
    fraction, run, ok = _run_with_miss_pattern(miss_idx={3, 4, 5, 6},
                                               n_samples=20)
    assert run == 4
    assert ok


def _run_with_miss_pattern(miss_idx, n_samples):
    """The plan is a straight meridian line; the trace runs along it with its
    three lead and three trail points on the line (they fall inside the
    500 m ignore margins) and each missed interior sample pushed 150 m east,
    i.e. cleanly outside the 100 m limit."""
    step = 200.0
    span = step * (n_samples - 1)
    trace_offsets = [(-600.0, 0.0), (-400.0, 0.0), (-200.0, 0.0)]
    trace_offsets += [(step * i, 150.0 if i in miss_idx else 0.0)
                      for i in range(n_samples)]
    trace_offsets += [(span + 200.0, 0.0), (span + 400.0, 0.0),
                      (span + 600.0, 0.0)]
    pts = [fp(10.0 * i, Activity.IN_VEHICLE,
              lat=offset_point(BASE, east, north).lat,
              lng=offset_point(BASE, east, north).lng)
           for i, (north, east) in enumerate(trace_offsets)]
    segment = segment_of(pts)
    geometry = [offset_point(BASE, 0.0, -700.0),
                offset_point(BASE, 0.0, span + 700.0)]
    return route_geometry_check(segment, plan_for(segment, geometry=geometry),
                                CONSTANTS)


def test_geometry_check_invariant_under_reversal():
    segment = straight_segment(length_m=2500.0, n=26)
    geometry = [offset_point(p.geo, 30.0, 0.0) for p in segment.trace[::3]]
    fwd = route_geometry_check(segment, plan_for(segment, geometry=geometry),
                               CONSTANTS)
    rev = route_geometry_check(segment,
                               plan_for(segment, geometry=geometry[::-1]),
                               CONSTANTS)
    assert fwd == rev


def test_short_trace_falls_back_to_all_samples():
    segment = straight_segment(length_m=600.0, duration_s=200.0, n=7)
    fraction, run, ok = route_geometry_check(
        segment, plan_for(segment), CONSTANTS)
    assert ok
    assert fraction == 1.0


# --- match_static ---

class FixedPlanner:
    def __init__(self, itineraries):
        self.itineraries = itineraries
        self.queries = []

    def plan(self, query):
        self.queries.append(query)
        return PlanResult(list(self.itineraries))


def test_match_static_picks_closest_start_among_accepts():
    segment = straight_segment(duration_s=600.0)
    near = plan_for(segment, board_offset_s=30.0, trip_id="near",
                    line=(LineType.TRAM, "7"))
    nearer = plan_for(segment, board_offset_s=-10.0, trip_id="nearer",
                      line=(LineType.BUS, "16"))
    rejected = plan_for(segment, total_s=600.0 + 2000.0, trip_id="late")
    result = match_static(segment, FixedPlanner([near, rejected, nearer]),
                          CONSTANTS)
    assert result is not None
    assert result.trip_id == "nearer"
    assert result.line_type is LineType.BUS
    assert result.assessment.start_diff_s == pytest.approx(10.0)


def test_match_static_none_when_all_rejected():
    segment = straight_segment(duration_s=600.0)
    bad = plan_for(segment, total_s=600.0 + 2000.0)
    assert match_static(segment, FixedPlanner([bad]), CONSTANTS) is None


def test_match_static_winner_stable_under_permutation():
    segment = straight_segment(duration_s=600.0)
    plans = [plan_for(segment, board_offset_s=o, trip_id=f"t{o}")
             for o in (40.0, -40.0, 90.0)]
    rng = random.Random(1)
    winners = set()
    for _ in range(6):
        rng.shuffle(plans)
        winners.add(match_static(segment, FixedPlanner(plans),
                                 CONSTANTS).trip_id)
    assert len(winners) == 1


def test_match_static_uses_adjusted_query():
    segment = straight_segment(duration_s=600.0)
    planner = FixedPlanner([plan_for(segment)])
    match_static(segment, planner, CONSTANTS)
    [query] = planner.queries
    assert query.earliest_start == segment.start_time - timedelta(seconds=372)
    assert query.max_walk_m == 1000.0
    assert query.n_plans == 3


def test_assessments_sink_collects_every_plan():
    segment = straight_segment(duration_s=600.0)
    plans = [plan_for(segment, trip_id="a"),
             plan_for(segment, total_s=600.0 + 2000.0, trip_id="b")]
    sink = []
    match_static(segment, FixedPlanner(plans), CONSTANTS,
                 assessments_sink=sink)
    assert [(sid, a.itinerary.transit.trip_id) for sid, a in sink] == [
        (1, "a"), (1, "b")]
