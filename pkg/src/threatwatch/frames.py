"""Frame evidence model: domain types, the JSONL wire format, manifest validation.

A FrameRecord carries one frame's worth of model evidence: optional
three-class scores, zero or more hand/knife instance detections, and zero or
more pose keypoints. All coordinates are normalized to [0, 1] with the origin
at the top-left corner and y increasing downward, so "above" means a smaller
y value.

Wire format (JSONL, one JSON object per line, UTF-8, LF terminated):

    {"stream_id": "cam1", "frame_id": 7, "ts_ms": 231,
     "scores": {"threat": 0.9, "no_threat": 0.07, "hand": 0.03},
     "detections": [{"label": "knife", "box": [0.4, 0.5, 0.1, 0.2],
                     "conf": 0.93, "mask_area": 0.012}],
     "keypoints": [{"name": "wrist", "x": 0.5, "y": 0.4, "conf": 0.8}]}

stream_id, frame_id and ts_ms are required; everything else is optional.
Boxes are encoded [x, y, w, h] (top-left corner plus size). Unknown JSON
fields are ignored for forward compatibility; unknown enum values (labels,
for instance) are rejected, since silently misreading a label is worse than
failing loudly.

Manifest wire format (JSONL): {"sample_id": "img_0001", "label": "threat"},
with label one of "threat" | "no_threat" | "hand".

All types here are immutable value objects; construction validates every
invariant, so a value that exists is a valid one. Parsing is stateless and
reentrant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import ThreatwatchError

# Float slack when checking box extents against the unit square. Decimal
# inputs like x=0.45, w=0.55 do not sum to exactly 1.0 in binary.
EDGE_TOL = 1e-9

# Softmax outputs are near-normalized, not exactly normalized.
SCORE_TOL = 1e-6

_UINT64_MAX = 2**64 - 1


class MalformedJson(ThreatwatchError):
    """A line that is not parseable as a JSON object."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: malformed JSON: {reason}")
        self.line_no = line_no
        self.reason = reason


class SchemaViolation(ThreatwatchError):
    """A parseable line that violates the record schema or an invariant."""

    def __init__(self, line_no: int, path: str, reason: str):
        super().__init__(f"line {line_no}: {path}: {reason}")
        self.line_no = line_no
        self.path = path
        self.reason = reason


class EmptyManifest(ThreatwatchError):
    def __init__(self) -> None:
        super().__init__("manifest contains no entries")


class DuplicateSampleId(ThreatwatchError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample_id: {sample_id!r}")
        self.sample_id = sample_id


class Label(Enum):
    """Instance detection label."""

    HAND = "hand"
    KNIFE = "knife"


class KeypointKind(Enum):
    """Canonical keypoint names; anything unrecognized is OTHER."""

    WRIST = "wrist"
    ELBOW = "elbow"
    SHOULDER = "shoulder"
    OTHER = "other"


class ManifestLabel(Enum):
    """Dataset ground-truth label for one sample."""

    THREAT = "threat"
    NO_THREAT = "no_threat"
    HAND = "hand"


_LABELS = {m.value: m for m in Label}
_MANIFEST_LABELS = {m.value: m for m in ManifestLabel}


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box in normalized image coordinates, y down.

    x, y locate the top-left corner; w, h are the (positive) extents. The box
    must fit inside the unit square up to EDGE_TOL.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x <= 1.0):
            raise ValueError(f"x must be within [0, 1], got {self.x}")
        if not (0.0 <= self.y <= 1.0):
            raise ValueError(f"y must be within [0, 1], got {self.y}")
        if not (0.0 < self.w <= 1.0):
            raise ValueError(f"w must be within (0, 1], got {self.w}")
        if not (0.0 < self.h <= 1.0):
            raise ValueError(f"h must be within (0, 1], got {self.h}")
        if self.x + self.w > 1.0 + EDGE_TOL:
            raise ValueError(f"box exceeds right edge: x + w = {self.x + self.w}")
        if self.y + self.h > 1.0 + EDGE_TOL:
            raise ValueError(f"box exceeds bottom edge: y + h = {self.y + self.h}")

    def center(self) -> tuple[float, float]:
        """Center point (cx, cy) of the box."""
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True, slots=True)
class InstanceDetection:
    """One labeled box with detection confidence and an optional mask area.

    mask_area, when present, is the fraction of the frame covered by the
    instance mask; a mask cannot meaningfully exceed its own box area.
    """

    label: Label
    box: BoundingBox
    conf: float
    mask_area: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.conf <= 1.0):
            raise ValueError(f"conf must be within [0, 1], got {self.conf}")
        if self.mask_area is not None:
            if not (0.0 < self.mask_area <= 1.0):
                raise ValueError(f"mask_area must be within (0, 1], got {self.mask_area}")
            if self.mask_area > self.box.w * self.box.h + 1e-6:
                raise ValueError(
                    f"mask_area {self.mask_area} exceeds box area {self.box.w * self.box.h}"
                )


@dataclass(frozen=True, slots=True)
class ClassScores:
    """Per-frame class probabilities: threat / no threat / hand-only.

    The three scores must be near-normalized (sum within SCORE_TOL of 1).
    """

    threat: float
    no_threat: float
    hand: float

    def __post_init__(self) -> None:
        for name, v in (("threat", self.threat), ("no_threat", self.no_threat), ("hand", self.hand)):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be within [0, 1], got {v}")
        total = self.threat + self.no_threat + self.hand
        if not (1.0 - SCORE_TOL <= total <= 1.0 + SCORE_TOL):
            raise ValueError(f"scores must sum to 1 within {SCORE_TOL}, got {total}")


@dataclass(frozen=True, slots=True)
class PoseKeypoint:
    """One skeletal landmark in normalized coordinates, y down.

    The raw name is preserved; kind() maps it onto the canonical vocabulary
    (wrist, elbow, shoulder) by case-insensitive substring, so model-specific
    names like "left_wrist" or "rightWrist" classify correctly; everything
    else is OTHER.
    """

    name: str
    x: float
    y: float
    conf: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("name must be non-empty")
        if not (0.0 <= self.x <= 1.0):
            raise ValueError(f"x must be within [0, 1], got {self.x}")
        if not (0.0 <= self.y <= 1.0):
            raise ValueError(f"y must be within [0, 1], got {self.y}")
        if not (0.0 <= self.conf <= 1.0):
            raise ValueError(f"conf must be within [0, 1], got {self.conf}")

    def kind(self) -> KeypointKind:
        lowered = self.name.lower()
        for kind in (KeypointKind.WRIST, KeypointKind.ELBOW, KeypointKind.SHOULDER):
            if kind.value in lowered:
                return kind
        return KeypointKind.OTHER


@dataclass(frozen=True, slots=True)
class FrameRecord:
    """All model evidence for one frame of one stream.

    A record with no scores, no detections and no keypoints is valid; it
    simply asserts that nothing was observed. frame_id ordering is a stream
    property enforced at ingest, not here.
    """

    stream_id: str
    frame_id: int
    ts_ms: int
    scores: ClassScores | None = None
    detections: tuple[InstanceDetection, ...] = ()
    keypoints: tuple[PoseKeypoint, ...] = ()

    def __post_init__(self) -> None:
        if not self.stream_id:
            raise ValueError("stream_id must be non-empty")
        if not (0 <= self.frame_id <= _UINT64_MAX):
            raise ValueError(f"frame_id must be a uint64, got {self.frame_id}")
        if not (0 <= self.ts_ms <= _UINT64_MAX):
            raise ValueError(f"ts_ms must be a uint64, got {self.ts_ms}")


@dataclass(frozen=True, slots=True)
class ManifestEntry:
    sample_id: str
    label: ManifestLabel


@dataclass(frozen=True)
class ManifestStats:
    """Counts over a manifest; positive_fraction is threat count / total."""

    total: int
    per_label: Mapping[ManifestLabel, int]
    positive_fraction: float

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_label": {label.value: self.per_label.get(label, 0) for label in ManifestLabel},
            "positive_fraction": self.positive_fraction,
        }


def _num(obj: dict, key: str, line_no: int, path: str) -> float:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaViolation(line_no, f"{path}.{key}", f"expected a number, got {v!r}")
    return float(v)


def _uint(obj: dict, key: str, line_no: int, path: str) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaViolation(line_no, f"{path}.{key}", f"expected an integer, got {v!r}")
    return v


def _text(obj: dict, key: str, line_no: int, path: str) -> str:
    v = obj.get(key)
    if not isinstance(v, str):
        raise SchemaViolation(line_no, f"{path}.{key}", f"expected a string, got {v!r}")
    return v


def _parse_detection(obj: object, line_no: int, path: str) -> InstanceDetection:
    if not isinstance(obj, dict):
        raise SchemaViolation(line_no, path, f"expected an object, got {obj!r}")
    label_text = _text(obj, "label", line_no, path)
    label = _LABELS.get(label_text)
    if label is None:
        raise SchemaViolation(line_no, f"{path}.label", f"unknown label {label_text!r}")
    box_raw = obj.get("box")
    if (
        not isinstance(box_raw, list)
        or len(box_raw) != 4
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in box_raw)
    ):
        raise SchemaViolation(line_no, f"{path}.box", f"expected [x, y, w, h] numbers, got {box_raw!r}")
    conf = _num(obj, "conf", line_no, path)
    mask_raw = obj.get("mask_area")
    mask_area: float | None = None
    if mask_raw is not None:
        mask_area = _num(obj, "mask_area", line_no, path)
    try:
        box = BoundingBox(float(box_raw[0]), float(box_raw[1]), float(box_raw[2]), float(box_raw[3]))
    except ValueError as e:
        raise SchemaViolation(line_no, f"{path}.box", str(e)) from None
    try:
        return InstanceDetection(label, box, conf, mask_area)
    except ValueError as e:
        raise SchemaViolation(line_no, path, str(e)) from None


def _parse_keypoint(obj: object, line_no: int, path: str) -> PoseKeypoint:
    if not isinstance(obj, dict):
        raise SchemaViolation(line_no, path, f"expected an object, got {obj!r}")
    name = _text(obj, "name", line_no, path)
    x = _num(obj, "x", line_no, path)
    y = _num(obj, "y", line_no, path)
    conf = _num(obj, "conf", line_no, path)
    try:
        return PoseKeypoint(name, x, y, conf)
    except ValueError as e:
        raise SchemaViolation(line_no, path, str(e)) from None


def parse_frame_record(line: str, line_no: int = 0) -> FrameRecord:
    """Parse one JSONL line into a validated FrameRecord.

    line_no is carried into any error for diagnostics; pass the 1-based line
    number when reading a file. Raises MalformedJson when the line is not a
    JSON object, SchemaViolation when a required field is missing, a value is
    out of range, or an enum value is unknown.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedJson(line_no, str(e)) from None
    if not isinstance(obj, dict):
        raise MalformedJson(line_no, f"expected a JSON object, got {type(obj).__name__}")

    stream_id = _text(obj, "stream_id", line_no, "$")
    frame_id = _uint(obj, "frame_id", line_no, "$")
    ts_ms = _uint(obj, "ts_ms", line_no, "$")

    scores: ClassScores | None = None
    scores_raw = obj.get("scores")
    if scores_raw is not None:
        if not isinstance(scores_raw, dict):
            raise SchemaViolation(line_no, "$.scores", f"expected an object, got {scores_raw!r}")
        try:
            scores = ClassScores(
                _num(scores_raw, "threat", line_no, "$.scores"),
                _num(scores_raw, "no_threat", line_no, "$.scores"),
                _num(scores_raw, "hand", line_no, "$.scores"),
            )
        except ValueError as e:
            raise SchemaViolation(line_no, "$.scores", str(e)) from None

    detections_raw = obj.get("detections")
    detections: tuple[InstanceDetection, ...] = ()
    if detections_raw is not None:
        if not isinstance(detections_raw, list):
            raise SchemaViolation(line_no, "$.detections", f"expected an array, got {detections_raw!r}")
        detections = tuple(
            _parse_detection(d, line_no, f"$.detections[{i}]") for i, d in enumerate(detections_raw)
        )

    keypoints_raw = obj.get("keypoints")
    keypoints: tuple[PoseKeypoint, ...] = ()
    if keypoints_raw is not None:
        if not isinstance(keypoints_raw, list):
            raise SchemaViolation(line_no, "$.keypoints", f"expected an array, got {keypoints_raw!r}")
        keypoints = tuple(
            _parse_keypoint(k, line_no, f"$.keypoints[{i}]") for i, k in enumerate(keypoints_raw)
        )

    try:
        return FrameRecord(stream_id, frame_id, ts_ms, scores, detections, keypoints)
    except ValueError as e:
        raise SchemaViolation(line_no, "$", str(e)) from None


def frame_record_to_dict(record: FrameRecord) -> dict:
    """Wire-shaped dict for a record; optional fields omitted when absent/empty."""
    out: dict = {
        "stream_id": record.stream_id,
        "frame_id": record.frame_id,
        "ts_ms": record.ts_ms,
    }
    if record.scores is not None:
        s = record.scores
        out["scores"] = {"threat": s.threat, "no_threat": s.no_threat, "hand": s.hand}
    if record.detections:
        dets = []
        for d in record.detections:
            dd: dict = {
                "label": d.label.value,
                "box": [d.box.x, d.box.y, d.box.w, d.box.h],
                "conf": d.conf,
            }
            if d.mask_area is not None:
                dd["mask_area"] = d.mask_area
            dets.append(dd)
        out["detections"] = dets
    if record.keypoints:
        out["keypoints"] = [
            {"name": k.name, "x": k.x, "y": k.y, "conf": k.conf} for k in record.keypoints
        ]
    return out


def serialize_frame_record(record: FrameRecord) -> str:
    """One compact JSON line (no trailing newline). Round-trips through parse."""
    return json.dumps(frame_record_to_dict(record), separators=(",", ":"))


def parse_manifest_entry(line: str, line_no: int = 0) -> ManifestEntry:
    """Parse one manifest JSONL line."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedJson(line_no, str(e)) from None
    if not isinstance(obj, dict):
        raise MalformedJson(line_no, f"expected a JSON object, got {type(obj).__name__}")
    sample_id = _text(obj, "sample_id", line_no, "$")
    if not sample_id:
        raise SchemaViolation(line_no, "$.sample_id", "must be non-empty")
    label_text = _text(obj, "label", line_no, "$")
    label = _MANIFEST_LABELS.get(label_text)
    if label is None:
        raise SchemaViolation(line_no, "$.label", f"unknown label {label_text!r}")
    return ManifestEntry(sample_id, label)


def read_manifest(lines: Iterable[str]) -> list[ManifestEntry]:
    """Read manifest entries from an iterable of lines; blank lines are skipped."""
    entries = []
    for i, line in enumerate(lines, start=1):
        if line.strip():
            entries.append(parse_manifest_entry(line, i))
    return entries


def validate_manifest(entries: Iterable[ManifestEntry]) -> ManifestStats:
    """Check uniqueness and compute label counts.

    Raises EmptyManifest for an empty input and DuplicateSampleId on the
    first repeated id. positive_fraction is the exact ratio of THREAT
    entries; display rounding is left to callers.
    """
    seen: set[str] = set()
    counts = {label: 0 for label in ManifestLabel}
    total = 0
    for entry in entries:
        if entry.sample_id in seen:
            raise DuplicateSampleId(entry.sample_id)
        seen.add(entry.sample_id)
        counts[entry.label] += 1
        total += 1
    if total == 0:
        raise EmptyManifest()
    return ManifestStats(
        total=total,
        per_label=counts,
        positive_fraction=counts[ManifestLabel.THREAT] / total,
    )
