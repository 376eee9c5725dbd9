"""Acceptance criteria, one test per criterion, each printing a
PASS/FAIL line. Run with `pytest -s tests/test_acceptance.py` to see
the lines; tolerances are fixed here, not tuned elsewhere.
"""

import io
import random
import statistics

from eids import sim
from eids.announce import (
    AnnounceError,
    ReplayState,
    StatusMessage,
    decode_verify,
    encode,
)
from eids.bench import ATTACK_START_US, run_benchmark, run_scenario
from eids.central import CentralLogger, Liveness
from eids.engine import Cause, Engine, EngineConfig, format_event, replay
from eids.frames import udp_payload
from eids.packet import Direction, ParseError, parse_frame
from eids.pcap import read_pcap
from eids.timing import ActiveWindow, FlowBaseline, TimingVerdict

S = 1_000_000
S1_IP = "192.168.1.101"
PSK = b"acceptance-psk"


def _report(criterion: str, ok: bool, detail: str):
    print("[%s] criterion %s: %s" % ("PASS" if ok else "FAIL", criterion, detail))
    assert ok, "criterion %s failed: %s" % (criterion, detail)


# 1 -- detection matrix ------------------------------------------------


def test_criterion_1_detection_matrix():
    rows, elapsed = run_benchmark(seed=0)
    by_key = {(row.kind.value, row.variant): row.detected for row in rows}
    expected = {
        (1, ""): True,
        (2, ""): True,
        (3, ""): True,
        (4, ""): True,
        (5, ""): True,
        (6, ""): False,
        (7, "attacker continues"): False,
        (7, "attacker stops"): True,
        (8, ""): True,
    }
    matches = by_key == expected
    _report(
        "1 detection matrix",
        matches and elapsed < 60.0,
        "matrix %s, wall %.1fs (< 60s)" % ("exact" if matches else by_key, elapsed),
    )


# 2 -- benign false positives -----------------------------------------


def test_criterion_2_benign_false_positives(benign_trace_30m):
    engine = Engine(
        EngineConfig(local_ip=S1_IP, node_id=1, learning_duration_us=600 * S)
    )
    events = replay(engine, benign_trace_30m.frames_for("S1"))
    _report(
        "2 benign false positives",
        engine.mode.value == "active" and events == [],
        "30 min benign trace, 10 min learning: %d events" % len(events),
    )


# 3 -- timing statistics -----------------------------------------------


def test_criterion_3_timing_statistics(trace_2h):
    poll_groups = sim.interarrivals(trace_2h, "tcp:%s:502:to" % S1_IP)
    poll_gaps = [gap for _t, gap in next(iter(poll_groups.values()))]
    poll_mean_ms = statistics.mean(poll_gaps) / 1000
    poll_ok = 95.0 <= poll_mean_ms <= 105.0

    arp_groups = sim.interarrivals(trace_2h, "arp-req:%s" % S1_IP)
    arp_gaps = [gap for _t, gap in next(iter(arp_groups.values()))]
    arp_mean_s = statistics.mean(arp_gaps) / 1e6
    arp_ok = 270.0 * 0.85 <= arp_mean_s <= 270.0 * 1.15

    csv = sim.stats_csv(trace_2h, "tcp:%s:502" % S1_IP)
    pooled = [int(line.rsplit(",", 1)[1]) for line in csv.strip().split("\n")[1:]]
    below_10ms = sum(1 for gap in pooled if gap < 10_000) / len(pooled)
    near_period = sum(1 for gap in pooled if 50_000 <= gap <= 150_000) / len(pooled)
    bimodal_ok = below_10ms >= 0.30 and near_period >= 0.30

    _report(
        "3 timing statistics",
        poll_ok and arp_ok and bimodal_ok,
        "poll mean %.2f ms (100 +/- 5), arp mean %.1f s (270 +/- 15%%), "
        "mass <10ms %.0f%%, near period %.0f%% (both >= 30%%)"
        % (poll_mean_ms, arp_mean_s, below_10ms * 100, near_period * 100),
    )


# 4 -- band arithmetic conformance -------------------------------------


class _BruteForceReference:
    """Recomputes min/max/mean from the raw sample lists on every packet."""

    def __init__(self, learning, delta, capacity):
        self.learning = list(learning)
        self.delta = delta
        self.capacity = capacity
        self.window = []

    def check(self, t):
        lo = max(0.0, min(self.learning) * (1.0 - self.delta))
        hi = max(self.learning) * (1.0 + self.delta)
        if t <= lo:
            return TimingVerdict.TOO_FAST
        if t >= hi:
            return TimingVerdict.TOO_SLOW
        self.window.append(t)
        self.window = self.window[-self.capacity :]
        if len(self.window) == self.capacity:
            mean = sum(self.window) / self.capacity
            learned_mean = sum(self.learning) / len(self.learning)
            if mean <= max(0.0, learned_mean * (1.0 - self.delta)):
                return TimingVerdict.MEAN_DRIFT
            if mean >= learned_mean * (1.0 + self.delta):
                return TimingVerdict.MEAN_DRIFT
        return TimingVerdict.OK


def test_criterion_4_band_conformance():
    rng = random.Random(0xEED5)
    disagreements = 0
    checked = 0
    for _ in range(1000):
        learning = [rng.randrange(1, 1_000_000) for _ in range(rng.randrange(2, 17))]
        delta = rng.choice([0.0, 0.05, 0.3, 1.0, 1.5, rng.random()])
        baseline = FlowBaseline(delta=delta)
        for sample in learning:
            baseline.record_learning_sample(sample)
        assert baseline.activate()
        window = ActiveWindow(16)
        reference = _BruteForceReference(learning, delta, 16)
        for _ in range(1000):
            t = rng.randrange(1, 2_000_000)
            checked += 1
            if baseline.check(t, window) is not reference.check(t):
                disagreements += 1
    _report(
        "4 band conformance",
        checked == 1_000_000 and disagreements == 0,
        "%d randomized checks, %d disagreements" % (checked, disagreements),
    )


# 5 -- announce protocol ------------------------------------------------


def test_criterion_5_announce_protocol():
    wire = encode(StatusMessage(2, 1_000, False, True, 0), PSK)
    rejections = 0
    for bit in range(128):
        mutated = bytearray(wire)
        mutated[bit // 8] ^= 1 << (bit % 8)
        try:
            decode_verify(bytes(mutated), PSK, ReplayState())
        except AnnounceError:
            rejections += 1
    sweep_ok = rejections == 128

    replay_state = ReplayState()
    decode_verify(wire, PSK, replay_state)
    try:
        decode_verify(wire, PSK, replay_state)
        replay_ok = False
    except AnnounceError:
        replay_ok = True

    logger = CentralLogger(PSK)
    for k in range(12):
        at = k * 10 * S
        logger.on_datagram(
            encode(StatusMessage(2, at // 1000 + 1, False, True, 0), PSK), at
        )
        logger.sweep(at + 9 * S)
    cadence_ok = logger.records[2].liveness is Liveness.UP

    last = 11 * 10 * S
    assert logger.sweep(last + 19 * S) == []
    down = logger.sweep(last + 20 * S)
    timeout_ok = [r.node_id for r in down] == [2]

    listing = CentralLogger(PSK)
    listing.on_datagram(encode(StatusMessage(1, 1, False, True, 0), PSK), 0)
    listing.on_datagram(encode(StatusMessage(2, 25_000, False, True, 0), PSK), 25 * S)
    listing.on_datagram(encode(StatusMessage(3, 25_001, True, True, 0), PSK), 25 * S)
    listing.sweep(26 * S)
    rendered = listing.render_status()
    render_ok = rendered == (
        "ID: 1 is down Intrusion: ???\n"
        "ID: 2 is up Intrusion: no\n"
        "ID: 3 is up Intrusion: yes\n"
    )

    _report(
        "5 announce protocol",
        sweep_ok and replay_ok and cadence_ok and timeout_ok and render_ok,
        "bit flips rejected %d/128, replay %s, 10s cadence up %s, "
        "20s silence down %s, reference rendering %s"
        % (rejections, replay_ok, cadence_ok, timeout_ok, render_ok),
    )


# 6 -- DoS detection latency --------------------------------------------


def test_criterion_6_dos_latency():
    flood = sim.AttackScenario(
        sim.ScenarioKind.DOS_FLOOD, start_us=ATTACK_START_US, target="S1",
        rate_pps=1000,
    )
    result = run_scenario(flood, seed=0)
    too_fast = [e.at_us for e in result.events if e.cause is Cause.TOO_FAST]
    first = min(too_fast) if too_fast else None
    ok = first is not None and first - ATTACK_START_US <= 10_000
    _report(
        "6 dos latency",
        ok,
        "first TooFast %.3f ms after attack start (<= 10 ms)"
        % ((first - ATTACK_START_US) / 1000 if first is not None else -1),
    )


# 7 -- node removal -----------------------------------------------------


def test_criterion_7_node_removal():
    removal = sim.AttackScenario(
        sim.ScenarioKind.NODE_REMOVED, start_us=ATTACK_START_US, target="S2"
    )
    result = run_scenario(removal, seed=0)
    s2 = result.trace.topology.device("S2")

    silents = [
        e for e in result.events
        if e.cause is Cause.HOST_SILENT and e.flow is not None
        and e.flow.peer_ip == s2.ip
    ]
    engine_ok = False
    detail_engine = "no HostSilent for the removed node"
    if silents:
        event = min(silents, key=lambda e: e.at_us)
        state = result.engine.states[event.flow]
        last_seen = max(
            fr.time_us for fr in result.trace.frames
            if fr.src == "S2" and udp_payload(fr.data) is not None
        )
        bound = state.baseline.high_bound()
        latency = event.at_us - last_seen
        engine_ok = latency <= bound + 100_000  # one tick of slack
        detail_engine = "HostSilent %.2f s after last status (bound %.2f s)" % (
            latency / 1e6, bound / 1e6,
        )

    down_times = [t for t, node in result.downs if node == s2.node_id]
    logger_ok = False
    detail_logger = "logger never marked the node down"
    if down_times:
        down = min(down_times)
        logger_ok = down <= ATTACK_START_US + 21 * S
        detail_logger = "logger down %.1f s after removal (<= 21 s)" % (
            (down - ATTACK_START_US) / 1e6
        )

    _report("7 node removal", engine_ok and logger_ok,
            detail_engine + "; " + detail_logger)


# 8 -- determinism ------------------------------------------------------


def _pipeline(seed):
    scenario = sim.AttackScenario(
        sim.ScenarioKind.DOS_FLOOD, start_us=40 * S, target="S1", rate_pps=1000,
        stop_us=45 * S,
    )
    trace = sim.run(duration_us=60 * S, seed=seed, scenarios=[scenario])
    buffer = io.BytesIO()
    trace.write_pcap(buffer, viewpoint="S1")
    pcap_bytes = buffer.getvalue()

    buffer.seek(0)
    directed = []
    for ts, data in read_pcap(buffer):
        direction = Direction.RX
        try:
            meta = parse_frame(data, ts, Direction.RX)
            if (meta.l3 is not None and meta.l3.src_ip == S1_IP) or (
                meta.arp is not None and meta.arp.sender_ip == S1_IP
            ):
                direction = Direction.TX
        except ParseError:
            pass
        directed.append((ts, direction, data))
    learner = Engine(EngineConfig(local_ip=S1_IP, learning_duration_us=1 << 62))
    replay(learner, directed)
    model = learner.export_model()

    detector = Engine(EngineConfig(local_ip=S1_IP, learning_duration_us=30 * S))
    events = replay(detector, directed)
    lines = "\n".join(format_event(e, 1) for e in events)
    return pcap_bytes, model, lines


def test_criterion_8_determinism():
    first = _pipeline(seed=7)
    second = _pipeline(seed=7)
    stages_equal = [a == b for a, b in zip(first, second)]
    _report(
        "8 determinism",
        all(stages_equal) and first[2],  # the detect stage saw the flood
        "pcap/model/event-log byte equality: %s" % stages_equal,
    )
