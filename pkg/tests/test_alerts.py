"""Temporal alert state machine: hysteresis, lifecycle events, flush."""

import random

import pytest

from threatwatch.alerts import (
    AlertKind,
    AlertPhase,
    AlertTracker,
    OutOfOrderFrame,
    TemporalConfig,
    alert_event_to_dict,
    flush,
    new_state,
    serialize_alert_event,
    step,
)
from threatwatch.fusion import ThreatAssessment, ThreatLevel

LEVEL_SCORES = {
    ThreatLevel.NONE: 0.0,
    ThreatLevel.OBJECT_PRESENT: 0.45,
    ThreatLevel.GRASPED: 0.75,
    ThreatLevel.OVERHAND_THREAT: 0.95,
}


def assessments(levels, stream="s", scores=None):
    out = []
    for i, level in enumerate(levels):
        score = scores[i] if scores is not None else LEVEL_SCORES[level]
        out.append(ThreatAssessment(stream, i + 1, level, score, ()))
    return out


def run_machine(seq, cfg, stream="s"):
    """Drive step over a sequence, then flush; events as comparable tuples."""
    state = new_state(stream)
    events = []
    for a in seq:
        state, event = step(state, a, cfg, ts_ms=33 * (a.frame_id - 1))
        if event is not None:
            events.append(event)
    state, event = flush(state, state.last_ts_ms)
    if event is not None:
        events.append(event)
    return [
        (e.kind.value, e.frame_id, e.ts_ms, e.level, e.score, e.alert_id)
        for e in events
    ]


def expected_events(seq, cfg):
    """Reference trace computed by direct scan over the sequence, written
    against the contract: an alert opens on the n_raise-th consecutive
    frame at GRASPED or above, escalates at most once on the first
    OVERHAND_THREAT frame after opening, and closes on the n_clear-th
    consecutive frame below GRASPED (reporting peak level and score) or at
    end of input."""
    events = []
    n = len(seq)
    i = 0
    while i < n:
        streak = 0
        opened_at = None
        while i < n:
            if seq[i].level >= ThreatLevel.GRASPED:
                streak += 1
            else:
                streak = 0
            if streak == cfg.n_raise:
                opened_at = i
                break
            i += 1
        if opened_at is None:
            return events
        a = seq[opened_at]
        alert_id = f"{a.stream_id}:{a.frame_id}"
        events.append(("raised", a.frame_id, 33 * (a.frame_id - 1), a.level, a.score, alert_id))
        peak_level, peak_score = a.level, a.score
        escalated = False
        cold = 0
        closed = False
        i = opened_at + 1
        while i < n:
            a = seq[i]
            peak_level = max(peak_level, a.level)
            peak_score = max(peak_score, a.score)
            cold = 0 if a.level >= ThreatLevel.GRASPED else cold + 1
            if not escalated and a.level is ThreatLevel.OVERHAND_THREAT:
                escalated = True
                events.append(("escalated", a.frame_id, 33 * (a.frame_id - 1), a.level, a.score, alert_id))
            elif cold == cfg.n_clear:
                events.append(("cleared", a.frame_id, 33 * (a.frame_id - 1), peak_level, peak_score, alert_id))
                closed = True
                i += 1
                break
            i += 1
        if not closed:
            last = seq[-1]
            events.append(("cleared", last.frame_id, 33 * (last.frame_id - 1), peak_level, peak_score, alert_id))
            return events
    return events


def test_raise_on_nth_consecutive_hot():
    cfg = TemporalConfig(n_raise=3, n_clear=10)
    seq = assessments([ThreatLevel.GRASPED] * 3)
    state = new_state("s")
    events = []
    for a in seq:
        state, e = step(state, a, cfg)
        events.append(e)
    assert events[0] is None and events[1] is None
    assert events[2] is not None
    assert events[2].kind is AlertKind.RAISED
    assert events[2].frame_id == 3
    assert events[2].alert_id == "s:3"


def test_streak_reset_by_cold_frame():
    cfg = TemporalConfig(n_raise=3, n_clear=10)
    levels = [ThreatLevel.GRASPED, ThreatLevel.GRASPED, ThreatLevel.NONE,
              ThreatLevel.GRASPED, ThreatLevel.GRASPED, ThreatLevel.GRASPED]
    events = run_machine(assessments(levels), cfg)
    raised = [e for e in events if e[0] == "raised"]
    assert len(raised) == 1
    assert raised[0][1] == 6


def test_alternating_never_clears():
    cfg = TemporalConfig(n_raise=3, n_clear=10)
    levels = [ThreatLevel.GRASPED] * 3 + [ThreatLevel.GRASPED, ThreatLevel.NONE] * 50
    state = new_state("s")
    kinds = []
    for a in assessments(levels):
        state, e = step(state, a, cfg)
        if e is not None:
            kinds.append(e.kind)
    assert kinds == [AlertKind.RAISED]
    assert state.active_alert_id is not None


def test_object_present_counts_cold():
    cfg = TemporalConfig(n_raise=2, n_clear=3)
    levels = [ThreatLevel.GRASPED, ThreatLevel.GRASPED,
              ThreatLevel.OBJECT_PRESENT, ThreatLevel.OBJECT_PRESENT, ThreatLevel.OBJECT_PRESENT]
    events = run_machine(assessments(levels), cfg)
    assert [e[0] for e in events] == ["raised", "cleared"]
    assert events[1][1] == 5


def test_escalated_once_after_raise():
    cfg = TemporalConfig(n_raise=3, n_clear=10)
    levels = [ThreatLevel.OVERHAND_THREAT] * 5
    events = run_machine(assessments(levels), cfg)
    assert [e[0] for e in events] == ["raised", "escalated", "cleared"]
    raised, escalated, cleared = events
    assert raised[1] == 3
    assert escalated[1] == 4
    assert cleared[1] == 5
    assert {e[5] for e in events} == {"s:3"}


def test_no_escalation_without_overhand():
    cfg = TemporalConfig(n_raise=2, n_clear=2)
    levels = [ThreatLevel.GRASPED] * 4 + [ThreatLevel.NONE] * 2
    events = run_machine(assessments(levels), cfg)
    assert [e[0] for e in events] == ["raised", "cleared"]


def test_cleared_reports_peaks():
    cfg = TemporalConfig(n_raise=2, n_clear=2)
    levels = [ThreatLevel.GRASPED, ThreatLevel.GRASPED, ThreatLevel.OVERHAND_THREAT,
              ThreatLevel.NONE, ThreatLevel.NONE]
    events = run_machine(assessments(levels), cfg)
    cleared = events[-1]
    assert cleared[0] == "cleared"
    assert cleared[3] is ThreatLevel.OVERHAND_THREAT
    assert cleared[4] == LEVEL_SCORES[ThreatLevel.OVERHAND_THREAT]


def test_flush_closes_open_alert():
    cfg = TemporalConfig(n_raise=2, n_clear=10)
    state = new_state("s")
    for a in assessments([ThreatLevel.GRASPED, ThreatLevel.GRASPED]):
        state, _ = step(state, a, cfg, ts_ms=100 * a.frame_id)
    state, event = flush(state, ts_ms=999)
    assert event is not None
    assert event.kind is AlertKind.CLEARED
    assert event.ts_ms == 999
    assert event.frame_id == 2
    assert state.active_alert_id is None
    assert state.phase is AlertPhase.IDLE


def test_flush_idle_and_suspected_no_event():
    cfg = TemporalConfig(n_raise=3, n_clear=10)
    state = new_state("s")
    _, event = flush(state, ts_ms=0)
    assert event is None

    for a in assessments([ThreatLevel.GRASPED, ThreatLevel.GRASPED]):
        state, _ = step(state, a, cfg)
    assert state.phase is AlertPhase.SUSPECTED
    state, event = flush(state, ts_ms=0)
    assert event is None
    assert state.phase is AlertPhase.IDLE


def test_phase_progression():
    cfg = TemporalConfig(n_raise=2, n_clear=2)
    state = new_state("s")
    assert state.phase is AlertPhase.IDLE
    seq = assessments([ThreatLevel.GRASPED, ThreatLevel.GRASPED,
                       ThreatLevel.NONE, ThreatLevel.NONE])
    state, _ = step(state, seq[0], cfg)
    assert state.phase is AlertPhase.SUSPECTED
    state, _ = step(state, seq[1], cfg)
    assert state.phase is AlertPhase.ACTIVE
    state, _ = step(state, seq[2], cfg)
    assert state.phase is AlertPhase.ACTIVE
    state, event = step(state, seq[3], cfg)
    assert event.kind is AlertKind.CLEARED
    assert state.phase is AlertPhase.IDLE


def test_counters_never_both_positive():
    cfg = TemporalConfig(n_raise=3, n_clear=4)
    rng = random.Random(5)
    state = new_state("s")
    for i in range(500):
        level = rng.choice(list(ThreatLevel))
        a = ThreatAssessment("s", i + 1, level, LEVEL_SCORES[level], ())
        state, _ = step(state, a, cfg)
        assert not (state.consecutive_hot > 0 and state.consecutive_cold > 0)


def test_out_of_order_rejected_state_unchanged():
    cfg = TemporalConfig()
    state = new_state("s")
    seq = assessments([ThreatLevel.GRASPED, ThreatLevel.GRASPED])
    state, _ = step(state, seq[0], cfg)
    before = state
    with pytest.raises(OutOfOrderFrame):
        step(state, seq[0], cfg)
    assert state == before
    stale = ThreatAssessment("s", 0, ThreatLevel.NONE, 0.0, ())
    with pytest.raises(OutOfOrderFrame):
        step(state, stale, cfg)


def test_stream_mismatch_rejected():
    cfg = TemporalConfig()
    state = new_state("s")
    other = ThreatAssessment("t", 1, ThreatLevel.NONE, 0.0, ())
    with pytest.raises(ValueError):
        step(state, other, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        TemporalConfig(n_raise=0)
    with pytest.raises(ValueError):
        TemporalConfig(n_clear=0)
    TemporalConfig(n_raise=1, n_clear=1)


def test_event_serialization():
    cfg = TemporalConfig(n_raise=1, n_clear=1)
    state = new_state("cam")
    a = ThreatAssessment("cam", 4, ThreatLevel.GRASPED, 0.77, ())
    _, event = step(state, a, cfg, ts_ms=132)
    data = alert_event_to_dict(event)
    assert data == {
        "stream_id": "cam",
        "alert_id": "cam:4",
        "kind": "raised",
        "frame_id": 4,
        "ts_ms": 132,
        "level": "grasped",
        "score": 0.77,
    }
    assert serialize_alert_event(event).endswith("}")


def test_tracker_routes_streams_and_counts_drops():
    cfg = TemporalConfig(n_raise=1, n_clear=10)
    tracker = AlertTracker(cfg)
    a1 = ThreatAssessment("a", 1, ThreatLevel.GRASPED, 0.75, ())
    b1 = ThreatAssessment("b", 1, ThreatLevel.GRASPED, 0.75, ())
    e1 = tracker.feed(a1, 0)
    e2 = tracker.feed(b1, 0)
    assert e1.alert_id == "a:1" and e2.alert_id == "b:1"
    assert tracker.feed(a1, 0) is None
    assert tracker.dropped == 1
    cleared = tracker.flush_all()
    assert [e.stream_id for e in cleared] == ["a", "b"]
    assert all(e.kind is AlertKind.CLEARED for e in cleared)


def test_reference_simulator_agreement_random():
    rng = random.Random(77)
    levels_pool = list(ThreatLevel)
    for _ in range(200):
        cfg = TemporalConfig(n_raise=rng.randint(1, 5), n_clear=rng.randint(1, 8))
        length = rng.randint(0, 60)
        levels = [rng.choice(levels_pool) for _ in range(length)]
        scores = [rng.uniform(*((0.0, 0.0) if lv is ThreatLevel.NONE else (0.4, 1.0)))
                  for lv in levels]
        seq = assessments(levels, scores=scores)
        assert run_machine(seq, cfg) == expected_events(seq, cfg)


def test_event_order_and_frame_monotonicity():
    rng = random.Random(99)
    for _ in range(100):
        cfg = TemporalConfig(n_raise=rng.randint(1, 4), n_clear=rng.randint(1, 6))
        levels = [rng.choice(list(ThreatLevel)) for _ in range(80)]
        events = run_machine(assessments(levels), cfg)
        by_alert = {}
        for kind, frame_id, _, _, _, alert_id in events:
            by_alert.setdefault(alert_id, []).append((kind, frame_id))
        for trail in by_alert.values():
            kinds = [k for k, _ in trail]
            assert kinds in (["raised"], ["raised", "cleared"],
                             ["raised", "escalated"], ["raised", "escalated", "cleared"])
            frames = [f for _, f in trail]
            assert frames == sorted(frames)
            # end-of-input flush stamps Cleared with the last frame seen,
            # which may coincide with the event before it; all other
            # successive events come from strictly later frames
            for (k1, f1), (k2, f2) in zip(trail, trail[1:]):
                assert f2 > f1 or (k2 == "cleared" and f2 == f1)


def test_debounce_no_short_raise():
    rng = random.Random(123)
    for _ in range(100):
        n_raise = rng.randint(2, 5)
        cfg = TemporalConfig(n_raise=n_raise, n_clear=3)
        levels = [rng.choice(list(ThreatLevel)) for _ in range(60)]
        seq = assessments(levels)
        events = run_machine(seq, cfg)
        hot = [lv >= ThreatLevel.GRASPED for lv in levels]
        for kind, frame_id, *_ in events:
            if kind != "raised":
                continue
            idx = frame_id - 1
            assert all(hot[idx - k] for k in range(n_raise)), \
                f"raise at frame {frame_id} without {n_raise} consecutive hot frames"
