"""Per-stream temporal alert state machine.

Turns the per-frame assessment stream into debounced alert lifecycle
events. A frame is hot when its level is at least GRASPED (a knife merely
present in the scene is cold: countertop knives must not hold alerts
open). n_raise consecutive hot frames open an alert, n_clear consecutive
cold frames close it; the asymmetric defaults make a missed clear cheaper
than a flapping alert during brief occlusions.

The machine is purely functional: step() and flush() return a new state,
never mutate, so states can be checkpointed or moved between threads
between calls. One state per stream_id; streams are independent.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from enum import Enum

from .errors import ThreatwatchError
from .fusion import ThreatAssessment, ThreatLevel

logger = logging.getLogger(__name__)


class OutOfOrderFrame(ThreatwatchError):
    """A frame_id at or below the last one seen for the stream."""

    def __init__(self, stream_id: str, frame_id: int, last_frame_id: int) -> None:
        super().__init__(
            f"stream {stream_id!r}: frame_id {frame_id} not after {last_frame_id}"
        )
        self.stream_id = stream_id
        self.frame_id = frame_id
        self.last_frame_id = last_frame_id


class AlertPhase(Enum):
    IDLE = "idle"
    SUSPECTED = "suspected"
    ACTIVE = "active"


class AlertKind(Enum):
    RAISED = "raised"
    ESCALATED = "escalated"
    CLEARED = "cleared"


@dataclass(frozen=True, slots=True)
class TemporalConfig:
    """Hysteresis widths, in frames."""

    n_raise: int = 3
    n_clear: int = 10

    def __post_init__(self) -> None:
        if self.n_raise < 1:
            raise ValueError(f"n_raise must be >= 1, got {self.n_raise}")
        if self.n_clear < 1:
            raise ValueError(f"n_clear must be >= 1, got {self.n_clear}")


@dataclass(frozen=True, slots=True)
class AlertState:
    """Snapshot of one stream's alert machine.

    consecutive_hot and consecutive_cold are never both positive. While an
    alert is open, peak_level/peak_score track the worst assessment seen
    since it was raised; the Cleared event reports those peaks rather than
    the (by then cold) closing frame.
    """

    stream_id: str
    consecutive_hot: int = 0
    consecutive_cold: int = 0
    active_alert_id: str | None = None
    escalated: bool = False
    peak_level: ThreatLevel = ThreatLevel.NONE
    peak_score: float = 0.0
    last_frame_id: int | None = None
    last_ts_ms: int = 0

    @property
    def phase(self) -> AlertPhase:
        if self.active_alert_id is not None:
            return AlertPhase.ACTIVE
        if self.consecutive_hot > 0:
            return AlertPhase.SUSPECTED
        return AlertPhase.IDLE


@dataclass(frozen=True, slots=True)
class AlertEvent:
    stream_id: str
    alert_id: str
    kind: AlertKind
    frame_id: int
    ts_ms: int
    level: ThreatLevel
    score: float


def alert_event_to_dict(event: AlertEvent) -> dict:
    return {
        "stream_id": event.stream_id,
        "alert_id": event.alert_id,
        "kind": event.kind.value,
        "frame_id": event.frame_id,
        "ts_ms": event.ts_ms,
        "level": event.level.wire,
        "score": event.score,
    }


def serialize_alert_event(event: AlertEvent) -> str:
    """One compact JSON line (no trailing newline)."""
    return json.dumps(alert_event_to_dict(event), separators=(",", ":"))


def new_state(stream_id: str) -> AlertState:
    return AlertState(stream_id=stream_id)


def step(
    state: AlertState,
    assessment: ThreatAssessment,
    cfg: TemporalConfig,
    *,
    ts_ms: int = 0,
) -> tuple[AlertState, AlertEvent | None]:
    """Advance one frame; returns (next state, emitted event or None).

    Hot frames (level >= GRASPED) grow the hot streak and zero the cold
    one, cold frames the reverse. An alert is raised when the hot streak
    reaches cfg.n_raise, escalated at most once on the first
    OVERHAND_THREAT frame after the raise, and cleared when the cold
    streak reaches cfg.n_clear. ts_ms is the frame's timestamp, stamped
    onto any event emitted for it.

    Raises OutOfOrderFrame (state unchanged) when assessment.frame_id does
    not advance past the last frame seen.
    """
    if assessment.stream_id != state.stream_id:
        raise ValueError(
            f"assessment for stream {assessment.stream_id!r} fed to state "
            f"for {state.stream_id!r}"
        )
    if state.last_frame_id is not None and assessment.frame_id <= state.last_frame_id:
        raise OutOfOrderFrame(state.stream_id, assessment.frame_id, state.last_frame_id)

    hot = assessment.level >= ThreatLevel.GRASPED
    if hot:
        consecutive_hot = state.consecutive_hot + 1
        consecutive_cold = 0
    else:
        consecutive_hot = 0
        consecutive_cold = state.consecutive_cold + 1

    active_alert_id = state.active_alert_id
    escalated = state.escalated
    peak_level = state.peak_level
    peak_score = state.peak_score
    event: AlertEvent | None = None

    if active_alert_id is None:
        if consecutive_hot >= cfg.n_raise:
            active_alert_id = f"{state.stream_id}:{assessment.frame_id}"
            escalated = False
            peak_level = assessment.level
            peak_score = assessment.score
            event = AlertEvent(
                state.stream_id,
                active_alert_id,
                AlertKind.RAISED,
                assessment.frame_id,
                ts_ms,
                assessment.level,
                assessment.score,
            )
    else:
        if assessment.level > peak_level:
            peak_level = assessment.level
        if assessment.score > peak_score:
            peak_score = assessment.score
        if (
            not escalated
            and assessment.level is ThreatLevel.OVERHAND_THREAT
        ):
            escalated = True
            event = AlertEvent(
                state.stream_id,
                active_alert_id,
                AlertKind.ESCALATED,
                assessment.frame_id,
                ts_ms,
                assessment.level,
                assessment.score,
            )
        elif consecutive_cold >= cfg.n_clear:
            event = AlertEvent(
                state.stream_id,
                active_alert_id,
                AlertKind.CLEARED,
                assessment.frame_id,
                ts_ms,
                peak_level,
                peak_score,
            )
            active_alert_id = None
            escalated = False
            peak_level = ThreatLevel.NONE
            peak_score = 0.0
            consecutive_hot = 0
            consecutive_cold = 0

    next_state = dataclasses.replace(
        state,
        consecutive_hot=consecutive_hot,
        consecutive_cold=consecutive_cold,
        active_alert_id=active_alert_id,
        escalated=escalated,
        peak_level=peak_level,
        peak_score=peak_score,
        last_frame_id=assessment.frame_id,
        last_ts_ms=ts_ms,
    )
    return next_state, event


def flush(state: AlertState, ts_ms: int) -> tuple[AlertState, AlertEvent | None]:
    """Close out a stream: if an alert is open, emit its Cleared event at
    the given timestamp (frame_id is the last frame seen, level/score are
    the alert's peaks). Returns a reset state either way.
    """
    event: AlertEvent | None = None
    if state.active_alert_id is not None:
        event = AlertEvent(
            state.stream_id,
            state.active_alert_id,
            AlertKind.CLEARED,
            state.last_frame_id if state.last_frame_id is not None else 0,
            ts_ms,
            state.peak_level,
            state.peak_score,
        )
    next_state = dataclasses.replace(
        state,
        consecutive_hot=0,
        consecutive_cold=0,
        active_alert_id=None,
        escalated=False,
        peak_level=ThreatLevel.NONE,
        peak_score=0.0,
        last_ts_ms=ts_ms,
    )
    return next_state, event


class AlertTracker:
    """Multiplexes the functional state machine over many streams.

    Routes each assessment to its stream's state, collects emitted events,
    and counts (rather than propagates) out-of-order frames so one
    misbehaving source cannot stall a multi-stream watch loop.
    """

    def __init__(self, cfg: TemporalConfig) -> None:
        self.cfg = cfg
        self.states: dict[str, AlertState] = {}
        self.dropped = 0

    def feed(self, assessment: ThreatAssessment, ts_ms: int) -> AlertEvent | None:
        state = self.states.get(assessment.stream_id)
        if state is None:
            state = new_state(assessment.stream_id)
        try:
            state, event = step(state, assessment, self.cfg, ts_ms=ts_ms)
        except OutOfOrderFrame as exc:
            self.dropped += 1
            logger.warning("dropping frame: %s", exc)
            return None
        self.states[assessment.stream_id] = state
        return event

    def flush_all(self) -> list[AlertEvent]:
        """Flush every stream in sorted stream_id order, each at its own
        last seen timestamp."""
        events = []
        for stream_id in sorted(self.states):
            state = self.states[stream_id]
            state, event = flush(state, state.last_ts_ms)
            self.states[stream_id] = state
            if event is not None:
                events.append(event)
        return events
