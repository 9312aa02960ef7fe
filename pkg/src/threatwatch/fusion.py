"""Per-frame evidence fusion.

Combines the three evidence channels of a FrameRecord into one graded
ThreatAssessment:

  * classifier scores -> three-class verdict (with an explicit Indeterminate
    outcome for low-margin outputs, since an alerting system should not act
    on coin-flip scores),
  * hand/knife detections -> proximity-paired grasp hypotheses plus the
    overhand geometry check (hand box center above the knife box center by a
    vertical margin, y-down coordinates),
  * pose keypoints -> a wrist gate that separates a knife-holding hand from
    an empty fist.

Detection evidence outranks classifier evidence: detections carry
localization, the classifier does not. Everything here is pure and
stateless; frames can be assessed in parallel in any order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum, IntEnum

from .frames import BoundingBox, ClassScores, FrameRecord, InstanceDetection, KeypointKind, Label, PoseKeypoint

# Absolute slack for comparisons against configured thresholds (distance,
# vertical separation, classifier margin), so that decimal-specified
# boundary cases (centers exactly delta_assoc apart, top-two scores exactly
# margin apart) behave as they would in real arithmetic instead of falling
# to float rounding. Same order as the box-extent slack in frames.
GEOM_TOL = 1e-9


class FrameClass(Enum):
    """Classifier verdict for one frame."""

    THREAT = "threat"
    NO_THREAT_NO_HAND = "no_threat_no_hand"
    NO_THREAT_HAND = "no_threat_hand"
    INDETERMINATE = "indeterminate"


class ThreatLevel(IntEnum):
    """Graded assessment levels, ordered by severity."""

    NONE = 0
    OBJECT_PRESENT = 1
    GRASPED = 2
    OVERHAND_THREAT = 3

    @property
    def wire(self) -> str:
        return self.name.lower()


_LEVELS_BY_WIRE = {level.wire: level for level in ThreatLevel}

# Disjoint, ordered score bands per level: (low, high).
SCORE_BANDS = {
    ThreatLevel.NONE: (0.0, 0.0),
    ThreatLevel.OBJECT_PRESENT: (0.40, 0.50),
    ThreatLevel.GRASPED: (0.70, 0.80),
    ThreatLevel.OVERHAND_THREAT: (0.90, 1.00),
}


class PoseEvidence(Enum):
    """Outcome of the wrist gate."""

    WRIST_NEAR_KNIFE = "wrist_near_knife"
    WRIST_NO_KNIFE = "wrist_no_knife"
    NO_WRIST = "no_wrist"


@dataclass(frozen=True, slots=True)
class FusionConfig:
    """Fusion thresholds. All values live in [0, 1].

    tau_det is the detection confidence floor (defaults to the 0.90
    certainty bar the detector is expected to clear); the rest are
    engineering knobs with conservative defaults.
    """

    tau_det: float = 0.90
    delta_assoc: float = 0.25
    epsilon_vert: float = 0.05
    tau_pose: float = 0.50
    delta_wrist: float = 0.20
    margin: float = 0.10

    def __post_init__(self) -> None:
        for name in ("tau_det", "delta_assoc", "epsilon_vert", "tau_pose", "delta_wrist", "margin"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be within [0, 1], got {v}")


@dataclass(frozen=True, slots=True)
class GraspPair:
    """An associated (hand, knife) detection pair: a held-knife hypothesis.

    Indices refer to positions in the source detection list; overhand is
    precomputed under the config the pair was formed with.
    """

    hand: InstanceDetection
    knife: InstanceDetection
    hand_index: int
    knife_index: int
    center_distance: float
    overhand: bool


@dataclass(frozen=True, slots=True)
class ThreatAssessment:
    """Graded verdict for one frame with its evidence trail.

    The score always lies inside the band of its level; evidence is a list
    of compact tags naming what contributed (pairs, the triggering knife,
    the classifier verdict, the pose gate outcome) and is non-empty whenever
    level is above NONE.
    """

    stream_id: str
    frame_id: int
    level: ThreatLevel
    score: float
    evidence: tuple[str, ...]


def classify_scores(scores: ClassScores, cfg: FusionConfig) -> FrameClass:
    """Three-class decision with a margin guard.

    Returns the argmax class when the top score clears the runner-up by at
    least cfg.margin. An exact tie at the top is resolved toward the
    lower-threat class (no-threat-no-hand, then no-threat-hand, then threat);
    anything else inside the margin is INDETERMINATE.
    """
    ranked = sorted(
        (
            (scores.no_threat, 0, FrameClass.NO_THREAT_NO_HAND),
            (scores.hand, 1, FrameClass.NO_THREAT_HAND),
            (scores.threat, 2, FrameClass.THREAT),
        ),
        key=lambda t: (-t[0], t[1]),
    )
    top_value, _, top_class = ranked[0]
    second_value = ranked[1][0]
    if second_value == top_value:
        return top_class
    if top_value - second_value < cfg.margin - GEOM_TOL:
        return FrameClass.INDETERMINATE
    return top_class


def is_overhand(hand_box: BoundingBox, knife_box: BoundingBox, cfg: FusionConfig) -> bool:
    """True iff the hand center sits above the knife center by at least
    cfg.epsilon_vert (y grows downward). Horizontal offset is not checked;
    association already bounds proximity. Equal centers are non-threatening.
    """
    hand_cy = hand_box.y + hand_box.h / 2.0
    knife_cy = knife_box.y + knife_box.h / 2.0
    return knife_cy - hand_cy >= cfg.epsilon_vert - GEOM_TOL


def _candidate_edges(
    detections: tuple[InstanceDetection, ...] | list[InstanceDetection], cfg: FusionConfig
) -> list[tuple[float, int, int, InstanceDetection, InstanceDetection]]:
    """All (distance, hand_idx, knife_idx, hand, knife) pairs of qualifying
    detections whose centers lie within cfg.delta_assoc of each other."""
    hands = []
    knives = []
    tau = cfg.tau_det
    for i, det in enumerate(detections):
        if det.conf >= tau:
            if det.label is Label.HAND:
                hands.append((i, det))
            else:
                knives.append((i, det))
    if not hands or not knives:
        return []
    limit = cfg.delta_assoc + GEOM_TOL
    edges = []
    for hi, hand in hands:
        hcx = hand.box.x + hand.box.w / 2.0
        hcy = hand.box.y + hand.box.h / 2.0
        for ki, knife in knives:
            kcx = knife.box.x + knife.box.w / 2.0
            kcy = knife.box.y + knife.box.h / 2.0
            dist = math.hypot(kcx - hcx, kcy - hcy)
            if dist <= limit:
                edges.append((dist, hi, ki, hand, knife))
    return edges


def associate_hand_knife(
    detections: tuple[InstanceDetection, ...] | list[InstanceDetection], cfg: FusionConfig
) -> list[GraspPair]:
    """Pair hands with knives by greedy nearest-center matching.

    Only detections with conf >= cfg.tau_det participate. Candidate pairs
    are those with center distance <= cfg.delta_assoc; matching proceeds in
    ascending distance order (ties broken by lower hand index, then lower
    knife index, in input order) with each detection used at most once.
    """
    edges = _candidate_edges(detections, cfg)
    if not edges:
        return []
    edges.sort(key=lambda e: (e[0], e[1], e[2]))
    used_hands: set[int] = set()
    used_knives: set[int] = set()
    pairs = []
    for dist, hi, ki, hand, knife in edges:
        if hi in used_hands or ki in used_knives:
            continue
        used_hands.add(hi)
        used_knives.add(ki)
        pairs.append(GraspPair(hand, knife, hi, ki, dist, is_overhand(hand.box, knife.box, cfg)))
    return pairs


def pose_gate(
    keypoints: tuple[PoseKeypoint, ...] | list[PoseKeypoint],
    detections: tuple[InstanceDetection, ...] | list[InstanceDetection],
    cfg: FusionConfig,
) -> PoseEvidence:
    """Wrist proximity gate.

    NO_WRIST when no wrist keypoint clears cfg.tau_pose; WRIST_NEAR_KNIFE
    when any qualifying wrist lies within cfg.delta_wrist of a qualifying
    knife box center; WRIST_NO_KNIFE otherwise (a bare fist, the benign
    case a knife detector alone would confuse).
    """
    wrists = [
        kp for kp in keypoints if kp.conf >= cfg.tau_pose and kp.kind() is KeypointKind.WRIST
    ]
    if not wrists:
        return PoseEvidence.NO_WRIST
    limit = cfg.delta_wrist + GEOM_TOL
    for det in detections:
        if det.label is Label.KNIFE and det.conf >= cfg.tau_det:
            kcx = det.box.x + det.box.w / 2.0
            kcy = det.box.y + det.box.h / 2.0
            for kp in wrists:
                if math.hypot(kp.x - kcx, kp.y - kcy) <= limit:
                    return PoseEvidence.WRIST_NEAR_KNIFE
    return PoseEvidence.WRIST_NO_KNIFE


def _clamp(value: float, band: tuple[float, float]) -> float:
    lo, hi = band
    return lo if value < lo else hi if value > hi else value


def assess_frame(record: FrameRecord, cfg: FusionConfig) -> ThreatAssessment:
    """Fuse one frame's evidence into a graded assessment.

    Level resolution, detection evidence dominating classifier evidence:

      1. any qualifying (hand, knife) candidate within delta_assoc that is
         overhand            -> OVERHAND_THREAT
      2. else any grasp pair -> GRASPED
      3. else any qualifying knife detection -> OBJECT_PRESENT
      4. else classifier says THREAT         -> OBJECT_PRESENT
      5. else NONE

    Step 1 intentionally checks every qualifying candidate, not only the
    greedily matched pairs: a closer non-overhand hand must not be able to
    mask an overhand one, which keeps the level monotone in detection
    confidence (raising any conf never lowers the level, removing a
    detection never raises it).

    Scores sit inside the level's band: OBJECT_PRESENT at 0.40 + 0.10 * c
    (c = best qualifying knife conf, or the threat probability on the
    classifier-only path), GRASPED at 0.70 + 0.10 * min pair conf over the
    best pair, OVERHAND_THREAT at 0.90 + 0.10 * min pair conf over the best
    overhand candidate, all clamped.
    """
    detections = record.detections
    edges = _candidate_edges(detections, cfg)

    pairs: list[GraspPair] = []
    if edges:
        edges.sort(key=lambda e: (e[0], e[1], e[2]))
        used_hands: set[int] = set()
        used_knives: set[int] = set()
        for dist, hi, ki, hand, knife in edges:
            if hi in used_hands or ki in used_knives:
                continue
            used_hands.add(hi)
            used_knives.add(ki)
            pairs.append(GraspPair(hand, knife, hi, ki, dist, is_overhand(hand.box, knife.box, cfg)))

    gate = pose_gate(record.keypoints, detections, cfg)

    best_knife_conf = -1.0
    best_knife_index = -1
    tau = cfg.tau_det
    for i, det in enumerate(detections):
        if det.label is Label.KNIFE and det.conf >= tau and det.conf > best_knife_conf:
            best_knife_conf = det.conf
            best_knife_index = i

    # Best overhand candidate across all qualifying edges, matched or not.
    best_overhand: tuple[float, int, int] | None = None
    for dist, hi, ki, hand, knife in edges:
        if is_overhand(hand.box, knife.box, cfg):
            strength = min(hand.conf, knife.conf)
            key = (-strength, hi, ki)
            if best_overhand is None or key < (-best_overhand[0], best_overhand[1], best_overhand[2]):
                best_overhand = (strength, hi, ki)

    evidence: list[str] = []
    for p in pairs:
        tag = f"pair:h{p.hand_index}-k{p.knife_index}"
        if p.overhand:
            tag += ":overhand"
        evidence.append(tag)

    if best_overhand is not None:
        level = ThreatLevel.OVERHAND_THREAT
        strength, hi, ki = best_overhand
        score = _clamp(0.90 + 0.10 * strength, SCORE_BANDS[level])
        winning_tag = f"pair:h{hi}-k{ki}:overhand"
        if winning_tag not in evidence:
            evidence.append(winning_tag)
    elif pairs:
        level = ThreatLevel.GRASPED
        strength = max(min(p.hand.conf, p.knife.conf) for p in pairs)
        score = _clamp(0.70 + 0.10 * strength, SCORE_BANDS[level])
    elif best_knife_index >= 0:
        level = ThreatLevel.OBJECT_PRESENT
        score = _clamp(0.40 + 0.10 * best_knife_conf, SCORE_BANDS[level])
        evidence.append(f"knife:k{best_knife_index}")
    elif record.scores is not None and classify_scores(record.scores, cfg) is FrameClass.THREAT:
        level = ThreatLevel.OBJECT_PRESENT
        score = _clamp(0.40 + 0.10 * record.scores.threat, SCORE_BANDS[level])
        evidence.append("classifier:threat")
    else:
        level = ThreatLevel.NONE
        score = 0.0

    # Fist false-positive suppression. Unreachable while GRASPED requires a
    # qualifying knife, kept as a guard for classifier-only level sources.
    if (
        level is ThreatLevel.GRASPED
        and gate is PoseEvidence.WRIST_NO_KNIFE
        and best_knife_index < 0
    ):
        level = ThreatLevel.NONE
        score = 0.0

    if level is ThreatLevel.NONE:
        evidence = []
    elif record.keypoints:
        evidence.append(f"pose:{gate.value}")

    return ThreatAssessment(record.stream_id, record.frame_id, level, score, tuple(evidence))


def assessment_to_dict(assessment: ThreatAssessment) -> dict:
    return {
        "stream_id": assessment.stream_id,
        "frame_id": assessment.frame_id,
        "level": assessment.level.wire,
        "score": assessment.score,
        "evidence": list(assessment.evidence),
    }


def serialize_assessment(assessment: ThreatAssessment) -> str:
    """One compact JSON line (no trailing newline)."""
    return json.dumps(assessment_to_dict(assessment), separators=(",", ":"))


def level_from_wire(name: str) -> ThreatLevel:
    try:
        return _LEVELS_BY_WIRE[name]
    except KeyError:
        raise ValueError(f"unknown threat level {name!r}") from None
