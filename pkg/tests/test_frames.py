"""Frame-model parsing, validation and manifest handling."""

import json
import math

import pytest
from hypothesis import given, strategies as st

from threatwatch.frames import (
    BoundingBox,
    ClassScores,
    DuplicateSampleId,
    EmptyManifest,
    FrameRecord,
    InstanceDetection,
    KeypointKind,
    Label,
    MalformedJson,
    ManifestEntry,
    ManifestLabel,
    PoseKeypoint,
    SchemaViolation,
    parse_frame_record,
    parse_manifest_entry,
    read_manifest,
    serialize_frame_record,
    validate_manifest,
)


def test_minimal_record_parses():
    rec = parse_frame_record('{"stream_id":"c1","frame_id":1,"ts_ms":0,"detections":[],"keypoints":[]}')
    assert rec.stream_id == "c1"
    assert rec.frame_id == 1
    assert rec.ts_ms == 0
    assert rec.scores is None
    assert rec.detections == ()
    assert rec.keypoints == ()


def test_knife_detection_parses():
    line = '{"stream_id":"c1","frame_id":2,"ts_ms":33,"detections":[{"label":"knife","box":[0.4,0.5,0.1,0.2],"conf":0.93}]}'
    rec = parse_frame_record(line)
    assert len(rec.detections) == 1
    det = rec.detections[0]
    assert det.label is Label.KNIFE
    assert det.conf == 0.93
    assert det.box == BoundingBox(0.4, 0.5, 0.1, 0.2)
    assert det.mask_area is None


def test_unnormalized_scores_rejected():
    line = '{"stream_id":"c1","frame_id":3,"ts_ms":66,"scores":{"threat":0.5,"no_threat":0.6,"hand":0.2}}'
    with pytest.raises(SchemaViolation) as exc_info:
        parse_frame_record(line, line_no=3)
    assert exc_info.value.line_no == 3
    assert "$.scores" in str(exc_info.value)


def test_malformed_json_reports_line():
    with pytest.raises(MalformedJson) as exc_info:
        parse_frame_record("{not json", line_no=7)
    assert exc_info.value.line_no == 7
    assert "line 7" in str(exc_info.value)


def test_unknown_fields_ignored_unknown_labels_rejected():
    line = '{"stream_id":"c1","frame_id":1,"ts_ms":0,"camera_pose":"fixed","detections":[]}'
    assert parse_frame_record(line).frame_id == 1

    bad = '{"stream_id":"c1","frame_id":1,"ts_ms":0,"detections":[{"label":"sword","box":[0.1,0.1,0.1,0.1],"conf":0.9}]}'
    with pytest.raises(SchemaViolation) as exc_info:
        parse_frame_record(bad)
    assert "$.detections[0].label" in str(exc_info.value)


def test_missing_required_field_names_path():
    with pytest.raises(SchemaViolation) as exc_info:
        parse_frame_record('{"frame_id":1,"ts_ms":0}')
    assert "$.stream_id" in str(exc_info.value)


def test_bool_is_not_a_number():
    line = '{"stream_id":"c1","frame_id":1,"ts_ms":0,"detections":[{"label":"hand","box":[0.1,0.1,0.1,0.1],"conf":true}]}'
    with pytest.raises(SchemaViolation):
        parse_frame_record(line)


def test_box_extent_bounds():
    BoundingBox(0.9, 0.9, 0.1, 0.1)
    BoundingBox(0.9, 0.9, 0.1 + 5e-10, 0.1)
    with pytest.raises(ValueError):
        BoundingBox(0.9, 0.9, 0.2, 0.1)
    with pytest.raises(ValueError):
        BoundingBox(-0.1, 0.1, 0.1, 0.1)
    with pytest.raises(ValueError):
        BoundingBox(0.1, 0.1, 0.0, 0.1)


def test_box_center():
    assert BoundingBox(0.4, 0.5, 0.1, 0.2).center() == (0.45, 0.6)


def test_mask_area_bounds():
    box = BoundingBox(0.1, 0.1, 0.2, 0.2)
    InstanceDetection(Label.HAND, box, 0.9, mask_area=0.03)
    InstanceDetection(Label.HAND, box, 0.9, mask_area=box.w * box.h)
    with pytest.raises(ValueError):
        InstanceDetection(Label.HAND, box, 0.9, mask_area=0.08)
    with pytest.raises(ValueError):
        InstanceDetection(Label.HAND, box, 0.9, mask_area=0.0)
    with pytest.raises(ValueError):
        InstanceDetection(Label.HAND, box, 1.2)


def test_scores_tolerance():
    ClassScores(0.333333, 0.333333, 0.333334)
    with pytest.raises(ValueError):
        ClassScores(0.4, 0.4, 0.1)


def test_keypoint_kind_mapping():
    assert PoseKeypoint("wrist", 0.5, 0.5, 0.9).kind() is KeypointKind.WRIST
    assert PoseKeypoint("left_wrist", 0.5, 0.5, 0.9).kind() is KeypointKind.WRIST
    assert PoseKeypoint("rightWrist", 0.5, 0.5, 0.9).kind() is KeypointKind.WRIST
    assert PoseKeypoint("Right_Elbow", 0.5, 0.5, 0.9).kind() is KeypointKind.ELBOW
    assert PoseKeypoint("left_shoulder", 0.5, 0.5, 0.9).kind() is KeypointKind.SHOULDER
    assert PoseKeypoint("nose", 0.5, 0.5, 0.9).kind() is KeypointKind.OTHER


def test_full_record_round_trip():
    line = json.dumps({
        "stream_id": "cam-7",
        "frame_id": 41,
        "ts_ms": 1353,
        "scores": {"threat": 0.7, "no_threat": 0.2, "hand": 0.1},
        "detections": [
            {"label": "hand", "box": [0.40, 0.30, 0.10, 0.10], "conf": 0.95},
            {"label": "knife", "box": [0.42, 0.45, 0.08, 0.20], "conf": 0.93, "mask_area": 0.01},
        ],
        "keypoints": [{"name": "right_wrist", "x": 0.45, "y": 0.4, "conf": 0.8}],
    })
    rec = parse_frame_record(line)
    assert parse_frame_record(serialize_frame_record(rec)) == rec


def test_serialization_omits_absent_optionals():
    rec = FrameRecord("c1", 1, 0)
    data = json.loads(serialize_frame_record(rec))
    assert "scores" not in data
    assert "detections" not in data
    assert "keypoints" not in data
    assert parse_frame_record(serialize_frame_record(rec)) == rec


@given(
    x=st.floats(0.0, 0.8), y=st.floats(0.0, 0.8),
    w=st.floats(0.01, 0.2), h=st.floats(0.01, 0.2),
    conf=st.floats(0.0, 1.0),
)
def test_detection_round_trip_property(x, y, w, h, conf):
    rec = FrameRecord(
        "s", 1, 0,
        detections=(InstanceDetection(Label.KNIFE, BoundingBox(x, y, w, h), conf),),
    )
    back = parse_frame_record(serialize_frame_record(rec))
    det = back.detections[0]
    assert det.box == rec.detections[0].box
    assert det.conf == conf


def test_manifest_entry_parse():
    entry = parse_manifest_entry('{"sample_id":"img-1","label":"threat"}')
    assert entry == ManifestEntry("img-1", ManifestLabel.THREAT)
    with pytest.raises(SchemaViolation):
        parse_manifest_entry('{"sample_id":"img-1","label":"weapon"}')


def test_read_manifest_line_numbers_and_blanks():
    lines = ['{"sample_id":"a","label":"hand"}', "", '{"sample_id":"b","label":"no_threat"}']
    entries = read_manifest(lines)
    assert [e.sample_id for e in entries] == ["a", "b"]

    bad = ['{"sample_id":"a","label":"hand"}', '{"oops":1}']
    with pytest.raises(SchemaViolation) as exc_info:
        read_manifest(bad)
    assert exc_info.value.line_no == 2


def test_validate_manifest_stats():
    entries = [ManifestEntry(f"s{i}", ManifestLabel.THREAT if i < 4 else ManifestLabel.HAND)
               for i in range(10)]
    stats = validate_manifest(entries)
    assert stats.total == 10
    assert stats.per_label[ManifestLabel.THREAT] == 4
    assert stats.per_label[ManifestLabel.HAND] == 6
    assert math.isclose(stats.positive_fraction, 0.4)


def test_validate_manifest_all_negative():
    entries = [ManifestEntry(f"s{i}", ManifestLabel.NO_THREAT) for i in range(10)]
    assert validate_manifest(entries).positive_fraction == 0.0


def test_validate_manifest_errors():
    with pytest.raises(EmptyManifest):
        validate_manifest([])
    dupes = [ManifestEntry("same", ManifestLabel.HAND), ManifestEntry("same", ManifestLabel.THREAT)]
    with pytest.raises(DuplicateSampleId) as exc_info:
        validate_manifest(dupes)
    assert "same" in str(exc_info.value)


def test_frame_record_field_validation():
    with pytest.raises(ValueError):
        FrameRecord("", 1, 0)
    with pytest.raises(ValueError):
        FrameRecord("s", -1, 0)
    with pytest.raises(ValueError):
        FrameRecord("s", 2**64, 0)
