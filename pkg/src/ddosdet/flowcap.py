"""Bidirectional flow aggregation and fixed-order flow feature vectors.

Packets sharing a canonical 5-tuple are folded into per-flow accumulators
(direction split, packet-length moments, inter-arrival times, TCP flag
counts) and reduced to a 19-entry feature vector. The feature order is
fixed and versioned:

     1 flow_duration_us      flow lifetime in microseconds
     2 total_fwd_packets     packets in the initiator's direction
     3 total_bwd_packets     packets in the reply direction
     4 total_fwd_bytes       payload bytes, forward
     5 total_bwd_bytes       payload bytes, backward
     6 fwd_pkt_len_mean      forward payload length mean
     7 fwd_pkt_len_std       forward payload length std (population)
     8 bwd_pkt_len_mean      backward payload length mean
     9 bwd_pkt_len_std       backward payload length std (population)
    10 flow_bytes_per_sec    total bytes / duration (0 for zero duration)
    11 flow_pkts_per_sec     total packets / duration (0 for zero duration)
    12 flow_iat_mean_us      inter-arrival mean over the combined flow
    13 flow_iat_std_us       inter-arrival std (population)
    14 flow_iat_max_us       largest inter-arrival gap
    15 flow_iat_min_us       smallest inter-arrival gap
    16 syn_count             SYN flags seen, either direction
    17 ack_count             ACK flags seen, either direction
    18 rst_count             RST flags seen, either direction
    19 down_up_ratio         bwd packets / fwd packets (0 if no fwd)

Conventions: std features use population variance and are 0 for fewer
than two samples; rate features are 0 (not inf) for zero-duration flows;
a flow's forward direction is the orientation of its first packet.
"""

import csv
import enum
import math
from dataclasses import dataclass, field

from .errors import KeyMismatchError, SchemaError, TimestampRegressionError

SCHEMA_ID = "flow19-v1"

FEATURE_NAMES = (
    "flow_duration_us",
    "total_fwd_packets",
    "total_bwd_packets",
    "total_fwd_bytes",
    "total_bwd_bytes",
    "fwd_pkt_len_mean",
    "fwd_pkt_len_std",
    "bwd_pkt_len_mean",
    "bwd_pkt_len_std",
    "flow_bytes_per_sec",
    "flow_pkts_per_sec",
    "flow_iat_mean_us",
    "flow_iat_std_us",
    "flow_iat_max_us",
    "flow_iat_min_us",
    "syn_count",
    "ack_count",
    "rst_count",
    "down_up_ratio",
)

TCP_FLAG_NAMES = ("SYN", "ACK", "RST", "FIN", "PSH", "URG")

PACKET_CSV_HEADER = (
    "ts_us",
    "src_addr",
    "src_port",
    "dst_addr",
    "dst_port",
    "proto",
    "len",
    "flags",
)


class Protocol(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    OTHER = "OTHER"


@dataclass(frozen=True)
class PacketEvent:
    """One observed packet."""

    ts_us: int
    src_addr: str
    src_port: int
    dst_addr: str
    dst_port: int
    protocol: Protocol
    payload_len: int
    tcp_flags: frozenset = frozenset()

    def __post_init__(self):
        if not 0 <= self.src_port <= 65535 or not 0 <= self.dst_port <= 65535:
            raise ValueError(f"port out of range: {self.src_port}/{self.dst_port}")
        if self.payload_len < 0:
            raise ValueError(f"negative payload length: {self.payload_len}")
        if not self.tcp_flags <= set(TCP_FLAG_NAMES):
            raise ValueError(f"unknown tcp flags: {sorted(self.tcp_flags)}")
        if self.tcp_flags and self.protocol is not Protocol.TCP:
            raise ValueError("tcp flags on a non-TCP packet")


@dataclass(frozen=True)
class FlowKey:
    """Direction-independent 5-tuple; lexicographically smaller (addr, port) first."""

    addr_lo: str
    addr_hi: str
    port_lo: int
    port_hi: int
    protocol: Protocol


def flow_key(pkt: PacketEvent) -> FlowKey:
    """Canonical bidirectional key; identical for both directions of a conversation."""
    a = (pkt.src_addr, pkt.src_port)
    b = (pkt.dst_addr, pkt.dst_port)
    lo, hi = (a, b) if a <= b else (b, a)
    return FlowKey(lo[0], hi[0], lo[1], hi[1], pkt.protocol)


class RunningStats:
    """Welford accumulator: count, mean, sum of squared deviations, min, max."""

    __slots__ = ("count", "mean", "m2", "min", "max")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.min = 0.0
        self.max = 0.0

    def add(self, x: float) -> None:
        if self.count == 0:
            self.min = x
            self.max = x
        else:
            self.min = min(self.min, x)
            self.max = max(self.max, x)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def std(self) -> float:
        """Population standard deviation; 0 for fewer than two samples."""
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / self.count)


class FlowState:
    """Mutable per-flow accumulators, updated packet by packet."""

    __slots__ = (
        "key",
        "first_seen",
        "last_seen",
        "forward_initiator",
        "fwd_pkt_count",
        "bwd_pkt_count",
        "fwd_byte_total",
        "bwd_byte_total",
        "fwd_len_stats",
        "bwd_len_stats",
        "iat_stats",
        "flag_counts",
    )

    def __init__(self, pkt: PacketEvent):
        self.key = flow_key(pkt)
        self.first_seen = pkt.ts_us
        self.last_seen = pkt.ts_us
        self.forward_initiator = (pkt.src_addr, pkt.src_port)
        self.fwd_pkt_count = 0
        self.bwd_pkt_count = 0
        self.fwd_byte_total = 0
        self.bwd_byte_total = 0
        self.fwd_len_stats = RunningStats()
        self.bwd_len_stats = RunningStats()
        self.iat_stats = RunningStats()
        self.flag_counts = {name: 0 for name in TCP_FLAG_NAMES}
        self._absorb(pkt, forward=True)

    def _absorb(self, pkt: PacketEvent, forward: bool) -> None:
        if forward:
            self.fwd_pkt_count += 1
            self.fwd_byte_total += pkt.payload_len
            self.fwd_len_stats.add(float(pkt.payload_len))
        else:
            self.bwd_pkt_count += 1
            self.bwd_byte_total += pkt.payload_len
            self.bwd_len_stats.add(float(pkt.payload_len))
        for name in pkt.tcp_flags:
            self.flag_counts[name] += 1

    @property
    def packet_count(self) -> int:
        return self.fwd_pkt_count + self.bwd_pkt_count


def update_flow(state: FlowState, pkt: PacketEvent) -> FlowState:
    """Fold one more packet into a flow state; the packet must belong to its key."""
    if flow_key(pkt) != state.key:
        raise KeyMismatchError(f"packet key {flow_key(pkt)} != flow key {state.key}")
    if pkt.ts_us < state.last_seen:
        raise TimestampRegressionError(
            f"packet at {pkt.ts_us}us precedes flow last_seen {state.last_seen}us"
        )
    state.iat_stats.add(float(pkt.ts_us - state.last_seen))
    state.last_seen = pkt.ts_us
    forward = (pkt.src_addr, pkt.src_port) == state.forward_initiator
    state._absorb(pkt, forward=forward)
    return state


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-order feature values; always 19 finite entries."""

    values: tuple
    schema_id: str = SCHEMA_ID

    def __post_init__(self):
        if len(self.values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(self.values)}")
        for name, v in zip(FEATURE_NAMES, self.values):
            if not math.isfinite(v):
                raise ValueError(f"non-finite feature {name}: {v}")


def finalize_flow(state: FlowState) -> FeatureVector:
    """Reduce a flow state to its feature vector. Pure: the state is not modified."""
    duration_us = state.last_seen - state.first_seen
    duration_s = duration_us / 1e6
    total_bytes = state.fwd_byte_total + state.bwd_byte_total
    total_pkts = state.packet_count
    iat = state.iat_stats
    values = (
        float(duration_us),
        float(state.fwd_pkt_count),
        float(state.bwd_pkt_count),
        float(state.fwd_byte_total),
        float(state.bwd_byte_total),
        state.fwd_len_stats.mean if state.fwd_len_stats.count else 0.0,
        state.fwd_len_stats.std(),
        state.bwd_len_stats.mean if state.bwd_len_stats.count else 0.0,
        state.bwd_len_stats.std(),
        total_bytes / duration_s if duration_us > 0 else 0.0,
        total_pkts / duration_s if duration_us > 0 else 0.0,
        iat.mean if iat.count else 0.0,
        iat.std(),
        iat.max if iat.count else 0.0,
        iat.min if iat.count else 0.0,
        float(state.flag_counts["SYN"]),
        float(state.flag_counts["ACK"]),
        float(state.flag_counts["RST"]),
        state.bwd_pkt_count / state.fwd_pkt_count if state.fwd_pkt_count else 0.0,
    )
    return FeatureVector(values)


@dataclass(frozen=True)
class TimeoutConfig:
    idle_timeout_s: float = 120.0
    active_timeout_s: float = 3600.0


@dataclass
class FlowRecord:
    """A finalized flow: key, start time, features, and optional labels."""

    key: FlowKey
    first_seen: int
    features: FeatureVector
    label: str = None
    attack_type: str = None


@dataclass
class FlowExtraction:
    """Result of a stream pass: finalized flows plus rejected-event notes."""

    records: list
    rejected: list  # (input index, reason) pairs


def process_stream(events, cfg: TimeoutConfig = TimeoutConfig()) -> FlowExtraction:
    """Aggregate a time-ordered packet stream into flows.

    A key's current flow is closed when a later packet of the same key
    arrives beyond the idle timeout (gap > idle_timeout) or would stretch
    the flow past the active timeout; the packet then opens a fresh flow.
    Remaining flows are closed at end of stream in first_seen order.
    Packets whose timestamp regresses are rejected and counted, and
    processing continues.
    """
    idle_us = cfg.idle_timeout_s * 1e6
    active_us = cfg.active_timeout_s * 1e6
    table: dict = {}
    records: list = []
    rejected: list = []
    last_ts = None
    for idx, pkt in enumerate(events):
        if last_ts is not None and pkt.ts_us < last_ts:
            rejected.append((idx, f"timestamp regression: {pkt.ts_us} < {last_ts}"))
            continue
        last_ts = pkt.ts_us
        key = flow_key(pkt)
        state = table.get(key)
        if state is not None and (
            pkt.ts_us - state.last_seen > idle_us or pkt.ts_us - state.first_seen > active_us
        ):
            records.append(FlowRecord(state.key, state.first_seen, finalize_flow(state)))
            state = None
        if state is None:
            table[key] = FlowState(pkt)
        else:
            update_flow(state, pkt)
    leftovers = sorted(table.values(), key=lambda s: s.first_seen)
    for state in leftovers:
        records.append(FlowRecord(state.key, state.first_seen, finalize_flow(state)))
    return FlowExtraction(records, rejected)


# --- packet-event CSV ----------------------------------------------------


def _parse_packet_row(row, line_no):
    ts, src_addr, src_port, dst_addr, dst_port, proto, length, flags = row
    flag_set = frozenset(part for part in flags.split("|") if part)
    return PacketEvent(
        ts_us=int(ts),
        src_addr=src_addr,
        src_port=int(src_port),
        dst_addr=dst_addr,
        dst_port=int(dst_port),
        protocol=Protocol(proto),
        payload_len=int(length),
        tcp_flags=flag_set,
    )


@dataclass
class PacketParse:
    events: list
    rejected: list  # (line number, reason) pairs


def read_packet_csv(path) -> PacketParse:
    """Parse a packet-event CSV. Malformed rows are skipped and reported."""
    events = []
    rejected = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PACKET_CSV_HEADER:
            raise SchemaError(
                f"{path}: expected packet header {','.join(PACKET_CSV_HEADER)}, got {header}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PACKET_CSV_HEADER):
                rejected.append((line_no, f"expected {len(PACKET_CSV_HEADER)} fields, got {len(row)}"))
                continue
            try:
                events.append(_parse_packet_row(row, line_no))
            except (ValueError, KeyError) as exc:
                rejected.append((line_no, str(exc)))
    return PacketParse(events, rejected)


def write_packet_csv(events, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PACKET_CSV_HEADER)
        for pkt in events:
            writer.writerow(
                [
                    pkt.ts_us,
                    pkt.src_addr,
                    pkt.src_port,
                    pkt.dst_addr,
                    pkt.dst_port,
                    pkt.protocol.value,
                    pkt.payload_len,
                    "|".join(sorted(pkt.tcp_flags)),
                ]
            )


# --- flow CSV ------------------------------------------------------------


def write_flow_csv(records, path) -> None:
    """Write finalized flows. Label columns appear iff every record is labeled."""
    labeled = all(r.label is not None for r in records) and len(records) > 0
    if any(r.label is not None for r in records) and not labeled:
        raise ValueError("mixed labeled and unlabeled flow records")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(FEATURE_NAMES) + (["label", "attack_type"] if labeled else [])
        writer.writerow(header)
        for r in records:
            row = [repr(v) for v in r.features.values]
            if labeled:
                row += [r.label, r.attack_type]
            writer.writerow(row)
