"""Discrete-event simulation of 5G initial access with a transparent RIS.

The BS broadcasts periodic SSBs; the RIS first synchronizes and fixes its
BS-side beam, then sweeps UE-side candidate beams, holding each for a
configurable number of SSB cycles with switches aligned to cycle starts.
A UE decodes an SSB when the receive SNR under the current composite
reflection clears a threshold, then runs the Msg1..Msg4 random-access
exchange with the BS.  The RIS never emits protocol messages: it only
senses band activity, freezes the winning beam on a detected Msg4, and
returns to prediction when a stop event ends the tracked session.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .beams import BeamSet, PhaseCodebook, ReferenceVector, decoupled_bs_beam
from .channel import FreqChannel, LinkBudget

MSG_KINDS = ("msg1", "msg2", "msg3", "msg4")


# ---------------------------------------------------------------------------
# States and their legal transitions
# ---------------------------------------------------------------------------

class BsState(Enum):
    BROADCASTING = "broadcasting"
    RAR_PENDING = "rar_pending"
    CONTENTION_RESOLVING = "contention_resolving"
    CONNECTED = "connected"


class UeState(Enum):
    SEARCHING = "searching"
    SSB_DECODED = "ssb_decoded"
    PREAMBLE_SENT = "preamble_sent"
    RAR_RECEIVED = "rar_received"
    MSG3_SENT = "msg3_sent"
    CONNECTED = "connected"


class RisState(Enum):
    SYNC_TO_BS = "sync_to_bs"
    PREDICTING = "predicting"
    SWEEPING = "sweeping"
    TRACKING = "tracking"


_BS_TRANSITIONS = {
    BsState.BROADCASTING: {BsState.RAR_PENDING},
    BsState.RAR_PENDING: {BsState.CONTENTION_RESOLVING},
    BsState.CONTENTION_RESOLVING: {BsState.CONNECTED},
    BsState.CONNECTED: {BsState.BROADCASTING},
}

_UE_TRANSITIONS = {
    UeState.SEARCHING: {UeState.SSB_DECODED},
    UeState.SSB_DECODED: {UeState.PREAMBLE_SENT},
    UeState.PREAMBLE_SENT: {UeState.RAR_RECEIVED},
    UeState.RAR_RECEIVED: {UeState.MSG3_SENT},
    UeState.MSG3_SENT: {UeState.CONNECTED},
    UeState.CONNECTED: {UeState.SEARCHING},
}

_RIS_TRANSITIONS = {
    RisState.SYNC_TO_BS: {RisState.PREDICTING},
    RisState.PREDICTING: {RisState.SWEEPING},
    RisState.SWEEPING: {RisState.TRACKING, RisState.PREDICTING},
    RisState.TRACKING: {RisState.PREDICTING},
}


# ---------------------------------------------------------------------------
# Events, traces, policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    time_ms: float
    actor: str            # "bs", "ue" or "ris"
    kind: str
    payload: dict = field(default_factory=dict)


@dataclass
class ProtocolTrace:
    events: list = field(default_factory=list)

    def append(self, time_ms, actor, kind, **payload):
        if self.events and time_ms < self.events[-1].time_ms - 1e-9:
            raise ValueError("events must be appended in nondecreasing time order")
        self.events.append(Event(float(time_ms), actor, kind, payload))

    def of_kind(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]


@dataclass(frozen=True)
class ClockConfig:
    ssb_period_ms: float = 20.0
    prach_offset_ms: float = 5.0
    msg_latency_ms: float = 2.0
    sync_cycles: int = 1

    def __post_init__(self):
        if self.ssb_period_ms <= 0:
            raise ValueError("SSB period must be positive")
        if not 0 <= self.prach_offset_ms < self.ssb_period_ms:
            raise ValueError("PRACH occasion must fall inside the SSB cycle")
        if self.msg_latency_ms <= 0 or self.sync_cycles < 0:
            raise ValueError("invalid message latency or sync cycle count")


@dataclass(frozen=True)
class SweepPolicy:
    """UE-side sweep order plus the per-beam dwell in SSB cycles."""

    kind: str                      # "exhaustive", "predicted" or "oracle"
    beams: tuple
    dwell_cycles: int = 2

    def __post_init__(self):
        if self.kind not in ("exhaustive", "predicted", "oracle"):
            raise ValueError(f"unknown sweep policy kind {self.kind!r}")
        if len(self.beams) == 0:
            raise ValueError("sweep policy needs at least one beam")
        if self.dwell_cycles < 1:
            raise ValueError("the dwell must span at least one SSB cycle")

    @classmethod
    def exhaustive(cls, codebook: PhaseCodebook, dwell_cycles: int = 2):
        return cls("exhaustive", tuple(range(len(codebook))), dwell_cycles)

    @classmethod
    def predicted(cls, beam_set: BeamSet, dwell_cycles: int = 2):
        return cls("predicted", tuple(beam_set), dwell_cycles)

    @classmethod
    def oracle(cls, beam_index: int, dwell_cycles: int = 2):
        return cls("oracle", (int(beam_index),), dwell_cycles)


@dataclass(frozen=True)
class AccessOutcome:
    success: bool
    beam_index: int | None
    t_access_ms: float | None
    beams_tried: int
    beam_training_ms: float
    codebook_size: int
    policy_kind: str


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

class AccessSimulation:
    """Single-BS, single-UE initial access aided by one transparent RIS.

    The event loop is single-threaded and fully deterministic; the seed is
    kept for API stability (the decode model itself has no randomness).
    Sessions can be chained: after a stop event returns the RIS to the
    prediction state, run_session() starts a fresh access on the same trace.
    """

    def __init__(self, bs_channel: FreqChannel, ue_channel: FreqChannel,
                 bs_codebook: PhaseCodebook, ue_codebook: PhaseCodebook,
                 budget: LinkBudget, detect_threshold_db: float = -6.0,
                 clock: ClockConfig = ClockConfig(), seed: int = 0,
                 ref: ReferenceVector | None = None):
        if bs_channel.matrix.shape != ue_channel.matrix.shape:
            raise ValueError("BS-side and UE-side channels must share (K, M)")
        self.bs_channel = bs_channel
        self.ue_channel = ue_channel
        self.bs_codebook = bs_codebook
        self.ue_codebook = ue_codebook
        self.budget = budget
        self.detect_threshold_db = detect_threshold_db
        self.clock = clock
        self.seed = seed
        self.ref = ref if ref is not None else ReferenceVector.ones(bs_channel.elements)
        self.trace = ProtocolTrace()
        self.now_ms = 0.0
        self.bs_state = BsState.BROADCASTING
        self.ue_state = UeState.SEARCHING
        self.ris_state = RisState.SYNC_TO_BS
        self.bs_beam_index: int | None = None
        self.outcomes: list = []
        self._effective = ue_channel.matrix * bs_channel.matrix

    # -- state bookkeeping -------------------------------------------------

    def _set_bs(self, state, t):
        if state not in _BS_TRANSITIONS[self.bs_state]:
            raise ValueError(f"illegal BS transition {self.bs_state} -> {state}")
        self.bs_state = state
        self.trace.append(t, "bs", "state", state=state.value)

    def _set_ue(self, state, t):
        if state not in _UE_TRANSITIONS[self.ue_state]:
            raise ValueError(f"illegal UE transition {self.ue_state} -> {state}")
        self.ue_state = state
        self.trace.append(t, "ue", "state", state=state.value)

    def _set_ris(self, state, t, **payload):
        if state not in _RIS_TRANSITIONS[self.ris_state]:
            raise ValueError(f"illegal RIS transition {self.ris_state} -> {state}")
        self.ris_state = state
        self.trace.append(t, "ris", "state", state=state.value, **payload)

    # -- physics -----------------------------------------------------------

    def receive_snr_db(self, ue_beam_index: int) -> float:
        """Mean per-subcarrier receive SNR under the composite reflection."""
        psi = self.bs_codebook.vectors[self.bs_beam_index] \
            * self.ue_codebook.vectors[ue_beam_index]
        gains = np.abs(self._effective @ psi) ** 2
        snr = self.budget.snr(self._effective.shape[0]) * float(np.mean(gains))
        return 10.0 * np.log10(max(snr, 1e-300))

    # -- protocol ----------------------------------------------------------

    def _next_cycle_start(self) -> float:
        period = self.clock.ssb_period_ms
        return float(np.ceil(self.now_ms / period - 1e-12) * period)

    def run_session(self, policy: SweepPolicy) -> AccessOutcome:
        """Execute one access attempt: sync (first call), predict, sweep."""
        if self.ris_state not in (RisState.SYNC_TO_BS, RisState.PREDICTING):
            raise ValueError(f"cannot start a session in RIS state {self.ris_state}")
        if max(policy.beams) >= len(self.ue_codebook):
            raise ValueError("policy beams fall outside the UE-side codebook")

        clock = self.clock
        period = clock.ssb_period_ms
        t = self._next_cycle_start()

        if self.ris_state is RisState.SYNC_TO_BS:
            for c in range(clock.sync_cycles):
                self.trace.append(t + c * period, "bs", "ssb", cycle=c)
                self.trace.append(t + c * period, "ris", "ssb_sync", cycle=c)
            t += clock.sync_cycles * period
            self.bs_beam_index = decoupled_bs_beam(self.bs_channel,
                                                   self.bs_codebook, self.ref)
            self.trace.append(t, "ris", "bs_beam_fixed", beam=self.bs_beam_index)
            self._set_ris(RisState.PREDICTING, t)

        self.trace.append(t, "ris", "beam_set_selected",
                          policy=policy.kind, size=len(policy.beams))
        self._set_ris(RisState.SWEEPING, t, cursor=0)

        sweep_start = t
        outcome = None
        for cursor, beam in enumerate(policy.beams):
            dwell_start = sweep_start + cursor * policy.dwell_cycles * period
            self.trace.append(dwell_start, "ris", "ue_beam_applied",
                              beam=int(beam), cursor=cursor)
            snr_db = self.receive_snr_db(int(beam))
            decoded = snr_db >= self.detect_threshold_db
            for cycle in range(policy.dwell_cycles):
                cycle_t = dwell_start + cycle * period
                self.trace.append(cycle_t, "bs", "ssb",
                                  cycle=int(round(cycle_t / period)))
                if decoded:
                    self.trace.append(cycle_t, "ue", "ssb_decoded",
                                      beam=int(beam), rsrp_db=round(snr_db, 6))
                    self._set_ue(UeState.SSB_DECODED, cycle_t)
                    outcome = self._message_exchange(cycle_t, int(beam),
                                                     cursor, policy)
                    break
            if outcome is not None:
                break

        if outcome is None:
            t_end = sweep_start + len(policy.beams) * policy.dwell_cycles * period
            self.trace.append(t_end, "ris", "sweep_exhausted",
                              beams_tried=len(policy.beams))
            self._set_ris(RisState.PREDICTING, t_end)
            self.now_ms = t_end
            outcome = AccessOutcome(False, None, None, len(policy.beams),
                                    len(policy.beams) * policy.dwell_cycles * period,
                                    len(self.ue_codebook), policy.kind)
        self.outcomes.append(outcome)
        return outcome

    def _message_exchange(self, decode_t: float, beam: int, cursor: int,
                          policy: SweepPolicy) -> AccessOutcome:
        clock = self.clock
        cycle_start = np.floor(decode_t / clock.ssb_period_ms + 1e-12) \
            * clock.ssb_period_ms
        t1 = cycle_start + clock.prach_offset_ms
        t2 = t1 + clock.msg_latency_ms
        t3 = t2 + clock.msg_latency_ms
        t4 = t3 + clock.msg_latency_ms

        self.trace.append(t1, "ue", "msg1", beam=beam)
        self._set_ue(UeState.PREAMBLE_SENT, t1)
        self.trace.append(t1, "ris", "band_power_sensed", msg="msg1")
        self._set_bs(BsState.RAR_PENDING, t1)

        self.trace.append(t2, "bs", "msg2")
        self.trace.append(t2, "ris", "band_power_sensed", msg="msg2")
        self._set_ue(UeState.RAR_RECEIVED, t2)
        self._set_bs(BsState.CONTENTION_RESOLVING, t2)

        self.trace.append(t3, "ue", "msg3")
        self.trace.append(t3, "ris", "band_power_sensed", msg="msg3")
        self._set_ue(UeState.MSG3_SENT, t3)

        self.trace.append(t4, "bs", "msg4")
        self.trace.append(t4, "ris", "band_power_sensed", msg="msg4")
        self._set_bs(BsState.CONNECTED, t4)
        self._set_ue(UeState.CONNECTED, t4)
        self.trace.append(t4, "ris", "access_success_detected", beam=beam)
        self._set_ris(RisState.TRACKING, t4, beam=beam)
        self.now_ms = t4

        return AccessOutcome(True, beam, t4, cursor + 1,
                             (cursor + 1) * policy.dwell_cycles
                             * clock.ssb_period_ms,
                             len(self.ue_codebook), policy.kind)


def run_initial_access(bs_channel: FreqChannel, ue_channel: FreqChannel,
                       bs_codebook: PhaseCodebook, ue_codebook: PhaseCodebook,
                       policy: SweepPolicy, budget: LinkBudget,
                       detect_threshold_db: float = -6.0,
                       clock: ClockConfig = ClockConfig(),
                       seed: int = 0) -> AccessSimulation:
    """Run one access attempt; the returned simulation holds trace + outcome."""
    sim = AccessSimulation(bs_channel, ue_channel, bs_codebook, ue_codebook,
                           budget, detect_threshold_db, clock, seed)
    sim.run_session(policy)
    return sim


def inject_stop_event(sim: AccessSimulation, kind: str, at_ms: float) -> None:
    """End the tracked session: blockage, BS switch or session end.

    Only legal while the RIS is tracking; moves it back to prediction so a
    new session can run on the same trace.
    """
    if kind not in ("blockage", "bs_switch", "session_end"):
        raise ValueError(f"unknown stop kind {kind!r}")
    if sim.ris_state is not RisState.TRACKING:
        raise ValueError("stop events require the RIS to be tracking")
    if at_ms < sim.now_ms - 1e-9:
        raise ValueError("stop event lies in the simulated past")
    sim.trace.append(at_ms, "ris", "stop", cause=kind)
    sim._set_ris(RisState.PREDICTING, at_ms)
    # endpoints fall back to their idle states for the next session
    sim.bs_state = BsState.BROADCASTING
    sim.trace.append(at_ms, "bs", "state", state=BsState.BROADCASTING.value)
    sim.ue_state = UeState.SEARCHING
    sim.trace.append(at_ms, "ue", "state", state=UeState.SEARCHING.value)
    sim.now_ms = float(at_ms)


# ---------------------------------------------------------------------------
# Trace checks
# ---------------------------------------------------------------------------

def check_causality(trace: ProtocolTrace) -> None:
    """Msg1 -> Msg2 -> Msg3 -> Msg4 with strictly increasing timestamps,
    and no Connected state before a Msg4."""
    expected = 0  # position within the msg1..msg4 pattern
    last_t = -np.inf
    seen_msg4 = False
    for e in trace.events:
        if e.kind in MSG_KINDS:
            want = MSG_KINDS[expected]
            if e.kind != want:
                raise AssertionError(f"expected {want} but saw {e.kind} "
                                     f"at t={e.time_ms}")
            if e.time_ms <= last_t:
                raise AssertionError(f"{e.kind} at t={e.time_ms} does not "
                                     f"advance past t={last_t}")
            last_t = e.time_ms
            expected = (expected + 1) % 4
            if e.kind == "msg4":
                seen_msg4 = True
        if e.kind == "state" and e.payload.get("state") == "connected":
            if not seen_msg4:
                raise AssertionError("connected state precedes any msg4")
    if expected != 0:
        raise AssertionError("trace ends inside an unfinished msg exchange")


def ris_message_count(trace: ProtocolTrace) -> int:
    """Protocol messages attributed to the RIS; transparency demands zero."""
    return sum(1 for e in trace.events
               if e.actor == "ris" and e.kind in MSG_KINDS)


def check_dwell(trace: ProtocolTrace, clock: ClockConfig, dwell_cycles: int) -> None:
    """Beam switches sit on SSB-cycle boundaries, spaced by full dwells."""
    times = [e.time_ms for e in trace.events if e.kind == "ue_beam_applied"]
    period = clock.ssb_period_ms
    for t in times:
        if abs(t / period - round(t / period)) > 1e-9:
            raise AssertionError(f"beam switch at t={t} off the SSB grid")
    for t0, t1 in zip(times, times[1:]):
        if t1 - t0 < dwell_cycles * period - 1e-9:
            raise AssertionError(f"dwell between t={t0} and t={t1} too short")


# ---------------------------------------------------------------------------
# Overhead summary and trace serialization
# ---------------------------------------------------------------------------

def overhead_report(outcomes) -> dict:
    """Aggregate beam-training overhead across runs.

    The reduction factor compares the mean number of beams tried in the
    successful runs against a full codebook sweep; failed runs are counted
    separately and excluded from the means.
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("need at least one outcome")
    successes = [o for o in outcomes if o.success]
    report = {
        "n_runs": len(outcomes),
        "n_success": len(successes),
        "n_failure": len(outcomes) - len(successes),
    }
    if successes:
        mean_tried = float(np.mean([o.beams_tried for o in successes]))
        report["mean_beams_tried"] = mean_tried
        report["mean_t_access_ms"] = float(np.mean([o.t_access_ms
                                                    for o in successes]))
        report["mean_training_ms"] = float(np.mean([o.beam_training_ms
                                                    for o in successes]))
        report["reduction_factor"] = outcomes[0].codebook_size / mean_tried
    else:
        report["mean_beams_tried"] = float("nan")
        report["mean_t_access_ms"] = float("nan")
        report["mean_training_ms"] = float("nan")
        report["reduction_factor"] = float("nan")
    return report


def save_trace(path, trace: ProtocolTrace) -> None:
    """Line-delimited timestamped event records."""
    with open(path, "w") as fh:
        for e in trace.events:
            fh.write(json.dumps({"t": e.time_ms, "actor": e.actor,
                                 "kind": e.kind, "payload": e.payload}) + "\n")


def load_trace(path) -> ProtocolTrace:
    trace = ProtocolTrace()
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            trace.events.append(Event(rec["t"], rec["actor"], rec["kind"],
                                      rec["payload"]))
    return trace


def diff_traces(a: ProtocolTrace, b: ProtocolTrace) -> list:
    """Event-by-event comparison; returns (index, left, right) mismatches."""
    diffs = []
    for i in range(max(len(a.events), len(b.events))):
        ea = a.events[i] if i < len(a.events) else None
        eb = b.events[i] if i < len(b.events) else None
        if ea != eb:
            diffs.append((i, ea, eb))
    return diffs
