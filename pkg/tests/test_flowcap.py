import numpy as np
import pytest

from ddosdet import flowcap
from ddosdet.errors import KeyMismatchError, SchemaError, TimestampRegressionError
from ddosdet.flowcap import (
    FEATURE_NAMES,
    FlowState,
    PacketEvent,
    Protocol,
    TimeoutConfig,
    finalize_flow,
    flow_key,
    process_stream,
    update_flow,
)


def tcp(ts, src, sport, dst, dport, length=100, flags=()):
    return PacketEvent(ts, src, sport, dst, dport, Protocol.TCP, length, frozenset(flags))


def feature(fv, name):
    return fv.values[FEATURE_NAMES.index(name)]


class TestFlowKey:
    def test_already_canonical(self):
        key = flow_key(tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80))
        assert (key.addr_lo, key.port_lo) == ("10.0.0.1", 1234)
        assert (key.addr_hi, key.port_hi) == ("10.0.0.2", 80)
        assert key.protocol is Protocol.TCP

    def test_direction_symmetric(self):
        fwd = flow_key(tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80))
        bwd = flow_key(tcp(5, "10.0.0.2", 80, "10.0.0.1", 1234))
        assert fwd == bwd

    def test_address_tie_broken_by_port(self):
        key = flow_key(tcp(0, "10.0.0.1", 80, "10.0.0.1", 53))
        assert key.port_lo == 53 and key.port_hi == 80

    def test_direction_invariance_over_random_traces(self):
        # swapping src and dst of every packet keeps keys and totals identical
        rng = np.random.default_rng(11)
        pkts = []
        for i in range(200):
            a, b = rng.integers(1, 5, size=2)
            pkts.append(tcp(i, f"10.0.0.{a}", int(rng.integers(1, 4)) * 1000,
                            f"10.0.1.{b}", 80))
        swapped = [tcp(p.ts_us, p.dst_addr, p.dst_port, p.src_addr, p.src_port)
                   for p in pkts]
        keys = sorted(map(str, (flow_key(p) for p in pkts)))
        keys_swapped = sorted(map(str, (flow_key(p) for p in swapped)))
        assert keys == keys_swapped


class TestUpdateFlow:
    def test_direction_bookkeeping(self):
        st = FlowState(tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80))
        assert (st.fwd_pkt_count, st.bwd_pkt_count) == (1, 0)
        update_flow(st, tcp(10, "10.0.0.2", 80, "10.0.0.1", 1234))
        assert (st.fwd_pkt_count, st.bwd_pkt_count) == (1, 1)

    def test_iat_sample_is_gap_to_previous(self):
        st = FlowState(tcp(100, "10.0.0.1", 1234, "10.0.0.2", 80))
        update_flow(st, tcp(300, "10.0.0.1", 1234, "10.0.0.2", 80))
        assert st.iat_stats.count == 1
        assert st.iat_stats.mean == 200.0

    def test_flag_counting(self):
        st = FlowState(tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80, flags={"SYN"}))
        update_flow(st, tcp(5, "10.0.0.2", 80, "10.0.0.1", 1234, flags={"SYN", "ACK"}))
        assert st.flag_counts["SYN"] == 2
        assert st.flag_counts["ACK"] == 1

    def test_key_mismatch_rejected(self):
        st = FlowState(tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80))
        with pytest.raises(KeyMismatchError):
            update_flow(st, tcp(5, "10.0.9.9", 1, "10.0.0.2", 80))

    def test_timestamp_regression_rejected(self):
        st = FlowState(tcp(100, "10.0.0.1", 1234, "10.0.0.2", 80))
        with pytest.raises(TimestampRegressionError):
            update_flow(st, tcp(50, "10.0.0.1", 1234, "10.0.0.2", 80))

    def test_iat_count_invariant(self):
        st = FlowState(tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80))
        for ts in (10, 25, 70, 200):
            update_flow(st, tcp(ts, "10.0.0.2", 80, "10.0.0.1", 1234))
        assert st.iat_stats.count == st.fwd_pkt_count + st.bwd_pkt_count - 1


class TestFinalizeFlow:
    def three_packet_state(self):
        # fwd 100 B at t=0, bwd 200 B at t=1000us, fwd 100 B at t=3000us
        st = FlowState(tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80, length=100))
        update_flow(st, tcp(1000, "10.0.0.2", 80, "10.0.0.1", 1234, length=200))
        update_flow(st, tcp(3000, "10.0.0.1", 1234, "10.0.0.2", 80, length=100))
        return st

    def test_hand_computed_trace(self):
        fv = finalize_flow(self.three_packet_state())
        assert feature(fv, "flow_duration_us") == 3000.0
        assert feature(fv, "total_fwd_packets") == 2.0
        assert feature(fv, "total_bwd_packets") == 1.0
        assert feature(fv, "total_fwd_bytes") == 200.0
        assert feature(fv, "total_bwd_bytes") == 200.0
        assert feature(fv, "fwd_pkt_len_mean") == 100.0
        assert feature(fv, "fwd_pkt_len_std") == 0.0
        assert feature(fv, "flow_iat_mean_us") == 1500.0
        assert feature(fv, "flow_iat_min_us") == 1000.0
        assert feature(fv, "flow_iat_max_us") == 2000.0
        assert feature(fv, "flow_bytes_per_sec") == pytest.approx(400 / 0.003, rel=1e-9)
        assert feature(fv, "flow_pkts_per_sec") == pytest.approx(1000.0, rel=1e-9)
        assert feature(fv, "down_up_ratio") == 0.5

    def test_single_packet_degenerate_conventions(self):
        fv = finalize_flow(FlowState(tcp(42, "10.0.0.1", 1234, "10.0.0.2", 80)))
        assert feature(fv, "flow_duration_us") == 0.0
        for name in ("flow_iat_mean_us", "flow_iat_std_us", "flow_iat_max_us",
                     "flow_iat_min_us", "flow_bytes_per_sec", "flow_pkts_per_sec"):
            assert feature(fv, name) == 0.0

    def test_deterministic_and_pure(self):
        st = self.three_packet_state()
        first = finalize_flow(st)
        second = finalize_flow(st)
        assert first.values == second.values
        assert st.packet_count == 3  # state untouched


class TestRunningStats:
    def test_welford_matches_two_pass_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            xs = rng.uniform(0, 1500, size=rng.integers(1, 400))
            stats = flowcap.RunningStats()
            for x in xs:
                stats.add(float(x))
            assert stats.mean == pytest.approx(xs.mean(), rel=1e-9)
            assert stats.std() == pytest.approx(float(np.sqrt(((xs - xs.mean()) ** 2).mean())),
                                                rel=1e-9, abs=1e-12)
            assert stats.min == xs.min() and stats.max == xs.max()


class TestProcessStream:
    def test_empty_input(self):
        result = process_stream([])
        assert result.records == [] and result.rejected == []

    def test_idle_timeout_splits_flow(self):
        pkts = [
            tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80),
            tcp(300_000_000, "10.0.0.1", 1234, "10.0.0.2", 80),  # 300 s later
        ]
        result = process_stream(pkts, TimeoutConfig(idle_timeout_s=120.0))
        assert len(result.records) == 2

    def test_active_timeout_splits_flow(self):
        pkts = [tcp(i * 1_000_000, "10.0.0.1", 1234, "10.0.0.2", 80) for i in range(10)]
        result = process_stream(pkts, TimeoutConfig(idle_timeout_s=120.0, active_timeout_s=5.0))
        assert len(result.records) == 2

    def test_interleaved_keys_hand_traced(self):
        pkts = [
            tcp(0, "10.0.0.1", 1111, "10.0.0.2", 80),
            tcp(1, "10.0.0.3", 2222, "10.0.0.2", 80),
            tcp(2, "10.0.0.2", 80, "10.0.0.1", 1111),
            tcp(3, "10.0.0.3", 2222, "10.0.0.2", 80),
            tcp(4, "10.0.0.1", 1111, "10.0.0.2", 80),
        ]
        result = process_stream(pkts)
        assert len(result.records) == 2
        by_first = {r.first_seen: r for r in result.records}
        assert by_first[0].features.values[FEATURE_NAMES.index("total_fwd_packets")] == 2.0
        assert by_first[0].features.values[FEATURE_NAMES.index("total_bwd_packets")] == 1.0
        assert by_first[1].features.values[FEATURE_NAMES.index("total_fwd_packets")] == 2.0

    def test_timestamp_regression_reported_and_skipped(self):
        pkts = [
            tcp(100, "10.0.0.1", 1234, "10.0.0.2", 80),
            tcp(50, "10.0.0.1", 1234, "10.0.0.2", 80),
            tcp(200, "10.0.0.1", 1234, "10.0.0.2", 80),
        ]
        result = process_stream(pkts)
        assert len(result.rejected) == 1
        assert result.rejected[0][0] == 1
        assert len(result.records) == 1
        assert result.records[0].features.values[FEATURE_NAMES.index("total_fwd_packets")] == 2.0

    def test_packet_conservation_over_random_traces(self):
        # every input packet lands in exactly one emitted flow
        rng = np.random.default_rng(23)
        ts = 0
        pkts = []
        for _ in range(500):
            ts += int(rng.integers(0, 2_000_000))
            a = int(rng.integers(1, 6))
            pkts.append(tcp(ts, f"10.0.0.{a}", 1000 + a, "10.0.1.1", 80))
        result = process_stream(pkts, TimeoutConfig(idle_timeout_s=1.0))
        idx_f = FEATURE_NAMES.index("total_fwd_packets")
        idx_b = FEATURE_NAMES.index("total_bwd_packets")
        total = sum(r.features.values[idx_f] + r.features.values[idx_b] for r in result.records)
        assert total == len(pkts)

    def test_emission_order_deterministic(self):
        rng = np.random.default_rng(5)
        ts = 0
        pkts = []
        for _ in range(300):
            ts += int(rng.integers(0, 500_000))
            a = int(rng.integers(1, 8))
            pkts.append(tcp(ts, f"10.0.0.{a}", 1000 + a, "10.0.1.1", 80))
        first = process_stream(pkts, TimeoutConfig(idle_timeout_s=0.5))
        second = process_stream(pkts, TimeoutConfig(idle_timeout_s=0.5))
        assert [r.key for r in first.records] == [r.key for r in second.records]
        assert [r.features.values for r in first.records] == [
            r.features.values for r in second.records
        ]


class TestPacketCsv:
    def test_round_trip(self, tmp_path):
        pkts = [
            tcp(0, "10.0.0.1", 1234, "10.0.0.2", 80, flags={"SYN"}),
            PacketEvent(10, "10.0.0.3", 53, "10.0.0.4", 5353, Protocol.UDP, 64),
        ]
        path = tmp_path / "packets.csv"
        flowcap.write_packet_csv(pkts, path)
        parsed = flowcap.read_packet_csv(path)
        assert parsed.rejected == []
        assert parsed.events == pkts

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,stuff\n1,2\n")
        with pytest.raises(SchemaError):
            flowcap.read_packet_csv(path)

    def test_malformed_rows_reported_with_line_numbers(self, tmp_path):
        path = tmp_path / "packets.csv"
        path.write_text(
            "ts_us,src_addr,src_port,dst_addr,dst_port,proto,len,flags\n"
            "0,10.0.0.1,1234,10.0.0.2,80,TCP,100,SYN\n"
            "5,10.0.0.1,1234,10.0.0.2,80,TCP,not_a_number,\n"
            "9,10.0.0.1,99999,10.0.0.2,80,TCP,100,\n"
            "12,10.0.0.1,1234,10.0.0.2,80,UDP,100,SYN\n"
        )
        parsed = flowcap.read_packet_csv(path)
        assert len(parsed.events) == 1
        assert [line for line, _ in parsed.rejected] == [3, 4, 5]


class TestFeatureVector:
    def test_rejects_wrong_width(self):
        with pytest.raises(ValueError):
            flowcap.FeatureVector(tuple(float(i) for i in range(5)))

    def test_rejects_non_finite(self):
        values = [0.0] * len(FEATURE_NAMES)
        values[3] = float("inf")
        with pytest.raises(ValueError):
            flowcap.FeatureVector(tuple(values))
