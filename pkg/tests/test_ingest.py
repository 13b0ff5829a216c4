from datetime import date, datetime

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripmatch import ingest
from tripmatch.ingest import IngestError
from tripmatch.types import Activity, DevicePoint, FilteredPoint, LineType

DEVICE_HEADER = ("time,device_id,lat,lng,accuracy,activity_1,activity_1_conf,"
                 "activity_2,activity_2_conf,activity_3,activity_3_conf")
FILTERED_HEADER = "time,device_id,lat,lng,activity"
LIVE_HEADER = "time,lat,lng,line_type,line_name,vehicle_ref"
MANUAL_HEADER = ("device_id,st_entrance,st_entry_time,line_type,line_name,"
                 "vehicle_dep_time,vehicle_dep_stop,vehicle_arr_time,"
                 "vehicle_arr_stop,st_exit_location,st_exit_time,comments")


def write(tmp_path, name, *lines):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# --- device data ---

def test_device_data_parses_and_sorts(tmp_path):
    path = write(tmp_path, "d.csv", DEVICE_HEADER,
                 "2016-08-26 09:00:10,2,60.17,24.94,20,STILL,90,UNKNOWN,10,,",
                 "2016-08-26 09:00:00,1,60.17,24.94,12.5,IN_VEHICLE,75,WALKING,20,STILL,5",
                 "2016-08-26 09:00:10,1,60.18,24.95,8,WALKING,100,,,,")
    points = ingest.load_device_data(path)
    assert [(p.time.second, p.device_id) for p in points] == [(0, 1), (10, 1), (10, 2)]
    assert points[0].activities == ((Activity.IN_VEHICLE, 75),
                                    (Activity.WALKING, 20), (Activity.STILL, 5))
    assert points[0].top_activity is Activity.IN_VEHICLE
    assert points[2].accuracy == 20.0


def test_device_data_header_only(tmp_path):
    assert ingest.load_device_data(write(tmp_path, "d.csv", DEVICE_HEADER)) == []


def test_device_data_missing_lng_names_line_and_column(tmp_path):
    path = write(tmp_path, "d.csv", DEVICE_HEADER,
                 "2016-08-26 09:00:00,1,60.17,24.94,20,STILL,90,,,,",
                 "2016-08-26 09:00:10,1,60.17,,20,STILL,90,,,,",
                 "2016-08-26 09:00:20,1,60.17,24.94,20,STILL,90,,,,")
    with pytest.raises(IngestError) as err:
        ingest.load_device_data(path)
    assert err.value.line == 3
    assert err.value.column == "lng"


def test_device_data_unknown_activity_rejected(tmp_path):
    path = write(tmp_path, "d.csv", DEVICE_HEADER,
                 "2016-08-26 09:00:00,1,60.17,24.94,20,FLYING,90,,,,")
    with pytest.raises(IngestError, match="FLYING"):
        ingest.load_device_data(path)


def test_device_data_out_of_range_coordinate(tmp_path):
    path = write(tmp_path, "d.csv", DEVICE_HEADER,
                 "2016-08-26 09:00:00,1,95.0,24.94,20,STILL,90,,,,")
    with pytest.raises(IngestError, match="latitude"):
        ingest.load_device_data(path)


def test_device_data_increasing_confidence_rejected(tmp_path):
    path = write(tmp_path, "d.csv", DEVICE_HEADER,
                 "2016-08-26 09:00:00,1,60.17,24.94,20,STILL,30,WALKING,80,,")
    with pytest.raises(IngestError, match="increase"):
        ingest.load_device_data(path)


def test_device_data_permissive_skips_and_reports(tmp_path):
    path = write(tmp_path, "d.csv", DEVICE_HEADER,
                 "2016-08-26 09:00:00,1,60.17,24.94,20,STILL,90,,,,",
                 "2016-08-26 09:00:10,1,60.17,,20,STILL,90,,,,")
    diagnostics = []
    points = ingest.load_device_data(path, permissive=True,
                                     diagnostics=diagnostics)
    assert len(points) == 1
    assert any("line 3" in d for d in diagnostics)


def test_device_data_missing_file(tmp_path):
    with pytest.raises(IngestError, match="not found"):
        ingest.load_device_data(tmp_path / "nope.csv")


def test_device_data_header_mismatch(tmp_path):
    path = write(tmp_path, "d.csv", "time,device_id,lat", "x,y,z")
    with pytest.raises(IngestError, match="missing required column"):
        ingest.load_device_data(path)


# --- filtered data ---

def test_filtered_parses(tmp_path):
    path = write(tmp_path, "f.csv", FILTERED_HEADER,
                 "2016-08-26 09:00:00,1,60.17,24.94,IN_VEHICLE")
    points = ingest.load_filtered_data(path)
    assert points == [FilteredPoint(datetime(2016, 8, 26, 9, 0, 0), 1,
                                    60.17, 24.94, Activity.IN_VEHICLE)]


def test_filtered_header_only(tmp_path):
    assert ingest.load_filtered_data(write(tmp_path, "f.csv", FILTERED_HEADER)) == []


def test_filtered_unknown_activity_names_value(tmp_path):
    path = write(tmp_path, "f.csv", FILTERED_HEADER,
                 "2016-08-26 09:00:00,1,60.17,24.94,FLYING")
    with pytest.raises(IngestError, match="'FLYING'"):
        ingest.load_filtered_data(path)


def test_filtered_output_time_ordered(tmp_path):
    rows = [f"2016-08-26 09:00:{s:02d},{d},60.17,24.94,WALKING"
            for s, d in [(30, 1), (10, 2), (10, 1), (0, 3)]]
    points = ingest.load_filtered_data(write(tmp_path, "f.csv",
                                             FILTERED_HEADER, *rows))
    keys = [(p.time, p.device_id) for p in points]
    assert keys == sorted(keys)


# --- transit live ---

def test_transit_live_parses_ferry(tmp_path):
    path = write(tmp_path, "t.csv", LIVE_HEADER,
                 "2016-08-26 09:00:00,60.15,24.96,FERRY,19,veh1")
    rows = ingest.load_transit_live(path)
    assert rows[0].line_type is LineType.FERRY
    assert rows[0].vehicle_ref == "veh1"


def test_transit_live_unknown_line_type(tmp_path):
    path = write(tmp_path, "t.csv", LIVE_HEADER,
                 "2016-08-26 09:00:00,60.15,24.96,ZEPPELIN,19,veh1")
    with pytest.raises(IngestError, match="ZEPPELIN"):
        ingest.load_transit_live(path)


def test_transit_live_duplicates_kept_and_flagged(tmp_path):
    row = "2016-08-26 09:00:00,60.15,24.96,BUS,16,veh1"
    path = write(tmp_path, "t.csv", LIVE_HEADER, row, row)
    diagnostics = []
    rows = ingest.load_transit_live(path, diagnostics=diagnostics)
    assert len(rows) == 2
    assert any("duplicate" in d for d in diagnostics)


def test_transit_live_empty_vehicle_ref_rejected(tmp_path):
    path = write(tmp_path, "t.csv", LIVE_HEADER,
                 "2016-08-26 09:00:00,60.15,24.96,BUS,16,")
    with pytest.raises(IngestError):
        ingest.load_transit_live(path)


def test_transit_live_bounding_box_flagged_not_rejected(tmp_path):
    path = write(tmp_path, "t.csv", LIVE_HEADER,
                 "2016-08-26 09:00:00,61.5,24.96,BUS,16,veh1")
    diagnostics = []
    rows = ingest.load_transit_live(path, diagnostics=diagnostics,
                                    bounding_box=(60.0, 24.0, 60.5, 25.5))
    assert len(rows) == 1
    assert any("bounding box" in d for d in diagnostics)


# --- manual log ---

def test_manual_log_parses_and_counts_car(tmp_path):
    path = write(tmp_path, "m.csv", MANUAL_HEADER,
                 "1,A,2016-08-26 09:00:00,SUBWAY,,2016-08-26 09:05:00,plat 1,"
                 "2016-08-26 09:15:00,plat 2,B,2016-08-26 09:17:00,ok",
                 "7,,,CAR,,2016-08-26 10:00:00,,2016-08-26 10:20:00,,,,")
    trips = ingest.load_manual_log(path)
    assert len(trips) == 2
    assert trips[0].line_type is LineType.SUBWAY
    assert trips[0].line_name == ""
    assert trips[0].start == datetime(2016, 8, 26, 9, 5)
    assert trips[1].line_type is LineType.CAR


def test_manual_log_dep_after_arr_rejected(tmp_path):
    path = write(tmp_path, "m.csv", MANUAL_HEADER,
                 "1,,,BUS,16,2016-08-26 10:30:00,,2016-08-26 10:00:00,,,,")
    with pytest.raises(IngestError, match="after"):
        ingest.load_manual_log(path)


def test_manual_log_bad_timestamp_rejected(tmp_path):
    path = write(tmp_path, "m.csv", MANUAL_HEADER,
                 "1,,,BUS,16,yesterday,,2016-08-26 10:00:00,,,,")
    with pytest.raises(IngestError, match="timestamp"):
        ingest.load_manual_log(path)


def test_manual_log_clock_times_resolve_against_date(tmp_path):
    path = write(tmp_path, "m.csv", MANUAL_HEADER,
                 "1,,,BUS,16,09:07:00,,09:20:00,,,,")
    trips = ingest.load_manual_log(path, default_date=date(2016, 8, 26))
    assert trips[0].vehicle_dep_time == datetime(2016, 8, 26, 9, 7)


# --- device models / trains ---

def test_device_models_unique(tmp_path):
    path = write(tmp_path, "dm.csv", "device_id,model", "1,Pixel", "1,Pixel")
    with pytest.raises(IngestError, match="duplicate"):
        ingest.load_device_models(path)


def test_train_stops_counts_records(tmp_path):
    path = tmp_path / "trains.json"
    path.write_text('[{"trainNumber": 1}, {"trainNumber": 2}]', encoding="utf-8")
    assert ingest.load_train_stops(path).train_count == 2


def test_train_stops_empty_object(tmp_path):
    path = tmp_path / "trains.json"
    path.write_text("{}", encoding="utf-8")
    assert ingest.load_train_stops(path).train_count == 0


def test_train_stops_truncated_reports_offset(tmp_path):
    path = tmp_path / "trains.json"
    path.write_text('[{"trainNumber": 1}', encoding="utf-8")
    with pytest.raises(IngestError, match="byte offset"):
        ingest.load_train_stops(path)


# --- round-trip property ---

_activity = st.sampled_from(list(Activity))
_times = st.integers(0, 86_399).map(
    lambda s: datetime(2016, 8, 26) .replace(hour=s // 3600,
                                             minute=s % 3600 // 60,
                                             second=s % 60))
_lat = st.decimals(min_value="59.0", max_value="61.0", places=6).map(float)
_lng = st.decimals(min_value="24.0", max_value="26.0", places=6).map(float)


def _device_point(draw_time, device_id, lat, lng, accuracy, ranked):
    ranked = tuple(sorted(ranked, key=lambda kv: -kv[1]))[:3]
    return DevicePoint(draw_time, device_id, lat, lng, accuracy, ranked)


_device_points = st.builds(
    _device_point, _times, st.integers(1, 9), _lat, _lng,
    st.decimals(min_value="0", max_value="2000", places=1).map(float),
    st.lists(st.tuples(_activity, st.integers(0, 100)), min_size=1, max_size=3,
             unique_by=lambda kv: kv[0]),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(_device_points, max_size=12))
def test_device_data_round_trip(tmp_path_factory, points):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    ingest.write_device_data(points, path)
    reloaded = ingest.load_device_data(path)
    assert reloaded == sorted(points, key=lambda p: (p.time, p.device_id))


_filtered_points = st.builds(FilteredPoint, _times, st.integers(1, 9),
                             _lat, _lng, _activity)


@settings(max_examples=100, deadline=None)
@given(st.lists(_filtered_points, max_size=12))
def test_filtered_round_trip(tmp_path_factory, points):
    path = tmp_path_factory.mktemp("rt") / "f.csv"
    ingest.write_filtered_data(points, path)
    assert ingest.load_filtered_data(path) == sorted(
        points, key=lambda p: (p.time, p.device_id))


from tripmatch.types import ManualTrip, VehiclePosition  # noqa: E402

_live_rows = st.builds(
    VehiclePosition, _times, _lat, _lng,
    st.sampled_from([LineType.SUBWAY, LineType.BUS, LineType.TRAM,
                     LineType.TRAIN, LineType.FERRY]),
    st.text(alphabet="0123456789ABKMTV", max_size=4),
    st.text(alphabet="abcdef0123456789", min_size=1, max_size=8),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(_live_rows, max_size=12))
def test_transit_live_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    ingest.write_transit_live(rows, path)
    assert ingest.load_transit_live(path) == rows  # file order preserved


def _manual_trip(device_id, line_type, name, times, texts):
    dep, arr = sorted(times[:2])
    return ManualTrip(device_id=device_id, line_type=line_type, line_name=name,
                      vehicle_dep_time=dep, vehicle_arr_time=arr,
                      st_entrance=texts[0], st_entry_time=times[2],
                      vehicle_dep_stop=texts[1], vehicle_arr_stop=texts[2],
                      st_exit_location=texts[3], st_exit_time=None,
                      comments=texts[4])


_manual_trips = st.builds(
    _manual_trip, st.integers(1, 9),
    st.sampled_from([LineType.SUBWAY, LineType.BUS, LineType.TRAM,
                     LineType.TRAIN, LineType.CAR]),
    st.text(alphabet="0123456789ABKMTVtowes ", max_size=8).map(str.strip),
    st.tuples(_times, _times, _times),
    st.tuples(*[st.text(alphabet="abc xyz19", max_size=10).map(str.strip)] * 5),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(_manual_trips, max_size=10))
def test_manual_log_round_trip(tmp_path_factory, trips):
    path = tmp_path_factory.mktemp("rt") / "m.csv"
    ingest.write_manual_log(trips, path)
    assert ingest.load_manual_log(path) == trips
