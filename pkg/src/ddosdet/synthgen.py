"""Seeded generation of labeled synthetic flows and packet traces.

Four archetypes are modeled with fixed parameter tables (ranges below):

    BenignWeb        TCP request/response exchanges: handshake then data
                     both ways, 0.5-400 packets/s, mixed sizes.
    SynFlood         TCP SYN-only barrages: every packet forward, every
                     packet flagged SYN, 3k-50k packets/s, no replies.
    UdpFlood         UDP payload floods: large forward datagrams at
                     5k-80k packets/s, at most a stray reply.
    ReflectionBurst  amplification bursts: one to four small forward
                     requests answered by 20-100 large backward
                     datagrams, 1.5k-30k packets/s.

``separability`` in (0, 1] geometrically blends each attack flow's packet
rate between a benign draw and its archetype draw: at 1.0 the benign and
attack rate supports are disjoint, so a single threshold on
flow_pkts_per_sec already separates the classes; lower values slide the
attack rates into the benign range. Flag structure and packet counts stay
archetype-pure. All draws come from one seeded generator, so outputs are
reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

from . import flowcap
from .dataio import Dataset, dataset_from_types
from .flowcap import FlowKey, PacketEvent, Protocol

ARCHETYPES = ("BenignWeb", "SynFlood", "UdpFlood", "ReflectionBurst")

ATTACK_TAG = {
    "BenignWeb": "Benign",
    "SynFlood": "SynFlood",
    "UdpFlood": "UdpFlood",
    "ReflectionBurst": "ReflectionBurst",
}

# Per-archetype driver ranges. rate is packets/s drawn log-uniformly;
# counts are inclusive integer ranges; lengths are payload-byte ranges.
PARAMS = {
    "BenignWeb": dict(
        proto=Protocol.TCP,
        fwd_pkts=(4, 40),
        bwd_per_fwd=(0.6, 1.4),
        fwd_len=(80, 600),
        bwd_len=(200, 1400),
        rate=(0.5, 400.0),
    ),
    "SynFlood": dict(
        proto=Protocol.TCP,
        fwd_pkts=(20, 200),
        bwd_per_fwd=None,
        fwd_len=(40, 80),
        bwd_len=None,
        rate=(3000.0, 50000.0),
    ),
    "UdpFlood": dict(
        proto=Protocol.UDP,
        fwd_pkts=(50, 400),
        bwd_per_fwd=None,
        fwd_len=(300, 1400),
        bwd_len=(60, 120),
        rate=(5000.0, 80000.0),
    ),
    "ReflectionBurst": dict(
        proto=Protocol.UDP,
        fwd_pkts=(1, 4),
        bwd_per_fwd=None,
        fwd_len=(40, 90),
        bwd_len=(900, 1460),
        rate=(1500.0, 30000.0),
    ),
}

TRACE_HORIZON_US = 60_000_000


@dataclass(frozen=True)
class ScenarioSpec:
    """Counts per archetype plus class-overlap control and seed."""

    counts: dict
    separability: float = 1.0
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.counts) - set(ARCHETYPES)
        if unknown:
            raise ValueError(f"unknown archetypes: {sorted(unknown)}")
        if any(v < 0 for v in self.counts.values()):
            raise ValueError("archetype counts must be >= 0")
        if not any(v > 0 for v in self.counts.values()):
            raise ValueError("at least one archetype count must be positive")
        if not 0.0 < self.separability <= 1.0:
            raise ValueError(f"separability must be in (0, 1], got {self.separability}")


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _draw_counts(rng, archetype):
    p = PARAMS[archetype]
    n_fwd = int(rng.integers(p["fwd_pkts"][0], p["fwd_pkts"][1] + 1))
    if archetype == "BenignWeb":
        n_bwd = max(1, int(round(n_fwd * rng.uniform(*p["bwd_per_fwd"]))))
    elif archetype == "UdpFlood":
        n_bwd = int(rng.integers(0, 3))
    elif archetype == "ReflectionBurst":
        n_bwd = int(rng.integers(20, 101))
    else:  # SynFlood: no replies
        n_bwd = 0
    return n_fwd, n_bwd


def _draw_rate(rng, archetype, separability):
    p = PARAMS[archetype]
    rate = _log_uniform(rng, *p["rate"])
    if archetype == "BenignWeb":
        return rate
    benign_rate = _log_uniform(rng, *PARAMS["BenignWeb"]["rate"])
    s = separability
    return float(np.exp((1.0 - s) * np.log(benign_rate) + s * np.log(rate)))


def _flag_counts(archetype, n_fwd, n_bwd):
    # mirrors the flags laid down by the trace realization below
    if archetype == "BenignWeb":
        return float(2), float(n_fwd + n_bwd - 1), 0.0  # SYN, SYN|ACK, then ACKs
    if archetype == "SynFlood":
        return float(n_fwd), 0.0, 0.0
    return 0.0, 0.0, 0.0


def _flow_features(rng, archetype, separability):
    p = PARAMS[archetype]
    n_fwd, n_bwd = _draw_counts(rng, archetype)
    n = n_fwd + n_bwd
    rate = _draw_rate(rng, archetype, separability)
    if n > 1:
        mean_gap_us = 1e6 / rate
        duration_us = max(n - 1, int(round((n - 1) * mean_gap_us)))
        iat_mean = duration_us / (n - 1)
        iat_min = iat_mean * rng.uniform(0.05, 0.8)
        iat_max = iat_mean * rng.uniform(1.2, 3.0)
        iat_std = iat_mean * rng.uniform(0.1, 0.9)
    else:
        duration_us = 0
        iat_mean = iat_min = iat_max = iat_std = 0.0

    fwd_len_mean = rng.uniform(*p["fwd_len"])
    fwd_len_std = fwd_len_mean * rng.uniform(0.0, 0.3)
    fwd_bytes = float(round(n_fwd * fwd_len_mean))
    if n_bwd > 0:
        bwd_len_mean = rng.uniform(*p["bwd_len"])
        bwd_len_std = bwd_len_mean * rng.uniform(0.0, 0.3)
        bwd_bytes = float(round(n_bwd * bwd_len_mean))
    else:
        bwd_len_mean = bwd_len_std = bwd_bytes = 0.0

    if duration_us > 0:
        bytes_per_sec = (fwd_bytes + bwd_bytes) / (duration_us / 1e6)
        pkts_per_sec = n / (duration_us / 1e6)
    else:
        bytes_per_sec = pkts_per_sec = 0.0

    syn, ack, rst = _flag_counts(archetype, n_fwd, n_bwd)
    return (
        float(duration_us),
        float(n_fwd),
        float(n_bwd),
        fwd_bytes,
        bwd_bytes,
        fwd_len_mean,
        fwd_len_std,
        bwd_len_mean,
        bwd_len_std,
        bytes_per_sec,
        pkts_per_sec,
        iat_mean,
        iat_std,
        iat_max,
        iat_min,
        syn,
        ack,
        rst,
        n_bwd / n_fwd,
    )


def generate_flows(spec: ScenarioSpec) -> Dataset:
    """Draw per-archetype feature vectors directly; counts match the spec exactly."""
    rng = np.random.default_rng(spec.seed)
    rows = []
    tags = []
    for archetype in ARCHETYPES:
        for _ in range(spec.counts.get(archetype, 0)):
            rows.append(_flow_features(rng, archetype, spec.separability))
            tags.append(ATTACK_TAG[archetype])
    features = np.asarray(rows, dtype=np.float64)
    return dataset_from_types(
        features,
        tags,
        flowcap.FEATURE_NAMES,
        provenance=f"synthgen(seed={spec.seed}, separability={spec.separability})",
    )


# --- packet realization -------------------------------------------------


def _endpoints(archetype, i):
    octet_hi = (i // 200) % 200
    octet_lo = i % 200 + 1
    if archetype == "BenignWeb":
        return (f"10.1.{octet_hi}.{octet_lo}", 10000 + i % 50000, "192.0.2.10", 443)
    if archetype == "SynFlood":
        return (f"10.9.{octet_hi}.{octet_lo}", 20000 + i % 40000, "192.0.2.10", 80)
    if archetype == "UdpFlood":
        return (f"10.7.{octet_hi}.{octet_lo}", 30000 + i % 30000, "192.0.2.10", 8080)
    # ReflectionBurst: the victim's spoofed request initiates the flow
    return ("192.0.2.10", 40000 + i % 25000, f"198.51.100.{octet_lo}", 123)


def _packet_plan(rng, archetype, n_fwd, n_bwd):
    """Sequence of (is_forward, flags) pairs realizing one flow."""
    ack = frozenset({"ACK"})
    if archetype == "BenignWeb":
        plan = [
            (True, frozenset({"SYN"})),
            (False, frozenset({"SYN", "ACK"})),
            (True, ack),
        ]
        rest = [True] * (n_fwd - 2) + [False] * (n_bwd - 1)
        order = rng.permutation(len(rest))
        for j in order:
            flags = frozenset({"PSH", "ACK"}) if rng.random() < 0.5 else ack
            plan.append((rest[j], flags))
        return plan
    if archetype == "SynFlood":
        return [(True, frozenset({"SYN"}))] * n_fwd
    none = frozenset()
    plan = [(True, none)] * n_fwd + [(False, none)] * n_bwd
    if archetype == "ReflectionBurst":
        # requests first, then the amplified responses
        return plan
    # UdpFlood: keep the first packet forward so the attacker initiates,
    # shuffle any stray replies into the rest
    tail = [plan[1 + j] for j in rng.permutation(len(plan) - 1)]
    return [plan[0]] + tail


@dataclass
class TraceResult:
    """Timestamp-sorted packets plus per-flow truth keyed by canonical flow key."""

    events: list
    labels: dict  # FlowKey -> (label, attack_type)


def generate_packet_trace(spec: ScenarioSpec) -> TraceResult:
    """Realize each flow as packets whose aggregation reproduces the archetype.

    Flow keys are unique per flow and every intra-flow gap stays far below
    the default idle timeout, so default-timeout aggregation yields exactly
    one flow per generated flow.
    """
    rng = np.random.default_rng(spec.seed)
    events = []
    labels = {}
    flow_index = 0
    for archetype in ARCHETYPES:
        p = PARAMS[archetype]
        tag = ATTACK_TAG[archetype]
        label = "Benign" if tag == "Benign" else "Attack"
        for _ in range(spec.counts.get(archetype, 0)):
            n_fwd, n_bwd = _draw_counts(rng, archetype)
            # BenignWeb realization needs the handshake prefix
            if archetype == "BenignWeb":
                n_fwd = max(n_fwd, 2)
                n_bwd = max(n_bwd, 1)
            rate = _draw_rate(rng, archetype, spec.separability)
            mean_gap_us = 1e6 / rate
            src_addr, src_port, dst_addr, dst_port = _endpoints(archetype, flow_index)
            plan = _packet_plan(rng, archetype, n_fwd, n_bwd)
            ts = int(rng.integers(0, TRACE_HORIZON_US))
            first = None
            for step, (is_fwd, flags) in enumerate(plan):
                if step > 0:
                    ts += max(1, int(round(mean_gap_us * rng.uniform(0.5, 1.5))))
                length_range = p["fwd_len"] if is_fwd else p["bwd_len"]
                length = int(rng.integers(length_range[0], length_range[1] + 1))
                if is_fwd:
                    pkt = PacketEvent(ts, src_addr, src_port, dst_addr, dst_port,
                                      p["proto"], length, flags)
                else:
                    pkt = PacketEvent(ts, dst_addr, dst_port, src_addr, src_port,
                                      p["proto"], length, flags)
                if first is None:
                    first = pkt
                events.append(pkt)
            labels[flowcap.flow_key(first)] = (label, tag)
            flow_index += 1
    events.sort(key=lambda e: e.ts_us)
    return TraceResult(events, labels)


def write_labels_csv(labels: dict, path) -> None:
    """Persist the flow-key -> truth sidecar."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["addr_lo", "addr_hi", "port_lo", "port_hi", "proto", "label", "attack_type"])
        for key in sorted(labels, key=lambda k: (k.addr_lo, k.addr_hi, k.port_lo, k.port_hi, k.protocol.value)):
            label, tag = labels[key]
            writer.writerow([key.addr_lo, key.addr_hi, key.port_lo, key.port_hi,
                             key.protocol.value, label, tag])


def read_labels_csv(path) -> dict:
    import csv

    from .errors import SchemaError

    expected = ["addr_lo", "addr_hi", "port_lo", "port_hi", "proto", "label", "attack_type"]
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise SchemaError(f"{path}: expected label sidecar header {expected}, got {header}")
        for row in reader:
            if not row:
                continue
            key = FlowKey(row[0], row[1], int(row[2]), int(row[3]), Protocol(row[4]))
            labels[key] = (row[5], row[6])
    return labels
