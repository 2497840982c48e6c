import tempfile
from dataclasses import replace
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from dnsim.services import fountain_codec as fc
from dnsim.services import sim, te
from dnsim.services.dumper import ResultDumper
from dnsim.services.scenario import (MobilityConfig, ProtocolConfig, RunConfig, ScenarioConfig, TopologyConfig,
                                     TrafficConfig)
from dnsim.services.traffic import VideoSession
from dnsim.services.vusgw import BlockJob, Packet

PLAIN_MAX_SUM = te.solve_max_sum


def small_config(protocol='fc_mp', traffic_class='best_effort', ues=4, **traffic):
    return ScenarioConfig(
        topology=TopologyConfig(radio_nodes=6, routers=2, gateway_routers=1, area_km2=0.01),
        mobility=MobilityConfig(speed_kmh=30.0, ues=ues),
        traffic=TrafficConfig(traffic_class=traffic_class, file_size_bits=1_600_000, video_session_s=1.0,
                              **traffic),
        protocol=ProtocolConfig(name=protocol),
        run=RunConfig(duration_s=3.0, warmup_s=0.0, seeds=(1,)),
    )


def packet(block_id, esi, symbol=None):
    return Packet('ue000/be', 'ue000', block_id, esi, 8064, symbol=symbol)


def tuned(config, values):
    for path, value in values.items():
        config = config.with_value(path, value)
    return config


def outrunning_max_sum(*args, **kwargs):
    """Max-sum allocation inflated fourfold, so the radio cannot drain what the gateway sends."""
    solution = PLAIN_MAX_SUM(*args, **kwargs)
    return replace(solution, rates={key: 4 * rate for key, rate in solution.rates.items()})


class DelaySpikeSimulation(sim.Simulation):
    """Holds the first copy of a few packets of the first object back by ``spike_s``."""
    spike_s = 0.3
    spiked_esis = range(100, 105)

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.first_object = None
        self.spiked = set()

    def _admit(self, st, packet):
        if self.first_object is None:
            self.first_object = packet.block_id
        key = (packet.block_id, packet.esi)
        if packet.block_id == self.first_object and packet.esi in self.spiked_esis and key not in self.spiked:
            self.spiked.add(key)
            packet.ready += self.spike_s
        super()._admit(st, packet)


class FlowReceiverTests(SimpleTestCase):

    def test_plain_blocks(self):
        receiver = sim.FlowReceiver(1000)
        receiver.expect(('frame', 0, 0), [BlockJob(0, 2, 'plain', 2)])
        self.assertEqual(receiver.on_packet(packet(0, 0)), sim.Delivery())
        self.assertTrue(receiver.on_packet(packet(0, 0)).duplicate)
        done = receiver.on_packet(packet(0, 1))
        self.assertEqual((done.block_done, done.group_done), (0, ('frame', 0, 0)))
        self.assertTrue(receiver.on_packet(packet(0, 0)).stale)
        self.assertTrue(receiver.on_packet(packet(7, 0)).stale)

    def test_group_completes_with_its_last_block(self):
        receiver = sim.FlowReceiver(1000)
        receiver.expect(('session', 0), [BlockJob(0, 1, 'rateless'), BlockJob(1, 1, 'rateless')])
        first = receiver.on_packet(packet(0, 0, fc.CodedSymbol(0, 0, None, True)))
        self.assertEqual((first.block_done, first.group_done), (0, None))
        second = receiver.on_packet(packet(1, 0, fc.CodedSymbol(1, 0, None, True)))
        self.assertEqual((second.block_done, second.group_done), (1, ('session', 0)))

    def test_rank_and_systematic_report(self):
        receiver = sim.FlowReceiver(1000)
        receiver.expect(('session', 0), [BlockJob(0, 4, 'od', 4)])
        for esi in (0, 2):
            receiver.on_packet(packet(0, esi, fc.CodedSymbol(0, esi, None, True)))
        self.assertEqual(receiver.received_systematic(0), [0, 2])
        self.assertEqual(receiver.rank(0), 2)
        receiver.abandon(0)
        self.assertEqual(receiver.rank(0), 0)
        self.assertTrue(receiver.on_packet(packet(0, 1, fc.CodedSymbol(0, 1, None, True))).stale)

    def test_payload_is_checked_against_the_source(self):
        data = np.random.default_rng(2).integers(0, 256, size=2500, dtype=np.uint8).tobytes()
        block = fc.segment(data, 1000, 10)[0]
        receiver = sim.FlowReceiver(1000)
        receiver.expect(('session', 0), [BlockJob(0, block.K, 'rateless', source=block)])
        for esi in range(block.K):
            delivery = receiver.on_packet(packet(0, esi, fc.encode_symbol(block, esi)))
        self.assertEqual(delivery.block_done, 0)
        self.assertFalse(delivery.corrupted)


class VideoRateTests(SimpleTestCase):

    def test_wire_rate_counts_symbols_and_repair(self):
        config = small_config('udp_1path', 'video')
        self.assertEqual(sim.video_wire_rate(config, 'udp'), 67 * 8064)
        self.assertEqual(sim.video_wire_rate(config, 'fixed_rate'), 70 * 8064)


class SimulationTests(SimpleTestCase):

    def test_best_effort_sessions_complete(self):
        metrics = sim.run(small_config(), seed=1)
        self.assertGreater(metrics.total_completed, 0)
        self.assertGreater(metrics.te_runs, 0)
        self.assertTrue(metrics.conserved(), metrics.counters())
        self.assertGreater(metrics.symbols_emitted, 0)
        self.assertTrue(all(r >= 0.0 for r in metrics.redundancy))
        completed = [s for s in metrics.sessions if s.completed]
        self.assertEqual(len(completed), metrics.total_completed)
        self.assertTrue(all(s.end > s.start for s in completed))

    def test_runs_are_reproducible(self):
        config = small_config()
        a, b = sim.run(config, seed=3), sim.run(config, seed=3)
        self.assertEqual(a.summary_row('k', 3, 'fc_mp'), b.summary_row('k', 3, 'fc_mp'))
        self.assertEqual(a.sessions, b.sessions)

    def test_seed_changes_the_run(self):
        config = small_config()
        a, b = sim.run(config, seed=1), sim.run(config, seed=2)
        self.assertNotEqual([s.start for s in a.sessions], [s.start for s in b.sessions])

    def test_no_users(self):
        metrics = sim.run(small_config(ues=0), seed=1)
        self.assertEqual(metrics.total_completed, 0)
        self.assertIsNone(metrics.jain())
        self.assertEqual(metrics.symbols_emitted, 0)
        self.assertTrue(metrics.conserved())

    def test_tcp_d(self):
        metrics = sim.run(small_config('tcp_d_1path'), seed=1)
        self.assertGreater(metrics.symbols_delivered, 0)
        self.assertTrue(metrics.conserved(), metrics.counters())
        self.assertEqual(metrics.redundancy, [])

    def test_on_demand_recovery(self):
        metrics = sim.run(small_config('od_fc'), seed=1)
        self.assertTrue(metrics.conserved(), metrics.counters())

    def test_forwarding_at_handover(self):
        config = small_config()
        config = config.with_value('protocol.handover_mode', 'forward').with_value('mobility.speed_kmh', 120.0)
        metrics = sim.run(config, seed=1)
        self.assertTrue(metrics.conserved(), metrics.counters())

    def test_feedback_produces_rate_adjustments(self):
        config = small_config().with_value('protocol.feedback', True)
        metrics = sim.run(config, seed=1)
        self.assertTrue(metrics.feedback_rows)
        self.assertTrue({r['action'] for r in metrics.feedback_rows} <= {'decrease', 'increase', 'hold'})
        self.assertTrue(metrics.conserved(), metrics.counters())

    def test_bytes_mode_decodes_correctly(self):
        config = small_config(payload_mode='bytes').with_value('traffic.file_size_bits', 8 * 20_000)
        metrics = sim.run(config, seed=1)
        self.assertGreater(metrics.total_completed, 0)
        self.assertEqual(metrics.corrupted_blocks, 0)

    def test_video(self):
        for protocol in ('udp_1path', 'fc_mp_video'):
            with self.subTest(protocol=protocol):
                metrics = sim.run(small_config(protocol, 'video'), seed=1)
                outages = metrics.outage_fractions
                self.assertGreaterEqual(len(outages), 4)
                self.assertTrue(all(0.0 <= o <= 1.0 for o in outages))
                self.assertTrue(metrics.conserved(), metrics.counters())

    def test_event_trace(self):
        config = small_config().with_value('run.trace_events', True)
        events = sim.run(config, seed=1).events
        self.assertTrue(events)
        self.assertTrue({e.kind for e in events} <= set(sim.EVENT_KINDS))
        self.assertIn('session_start', {e.kind for e in events})
        self.assertEqual(events, sorted(events, key=lambda e: (e.time, e.seq)))

    def test_protocol_must_match_the_traffic(self):
        with self.assertRaises(sim.SimulationError):
            sim.Simulation(small_config('udp_1path', 'best_effort'), seed=1)
        with self.assertRaises(sim.SimulationError):
            sim.Simulation(replace(small_config(), protocol=ProtocolConfig(name='quic')), seed=1)


class SupportedRateTests(SimpleTestCase):

    def test_rate_on_the_grid(self):
        config = small_config('fc_mp_video', 'video', ues=2)
        result = sim.supported_video_rate(config, ceiling_bps=200e3, resolution_bps=100e3)
        self.assertIn(result.rate_bps, (0.0, 100e3, 200e3))
        self.assertTrue(set(result.percentiles) <= {100e3, 200e3})
        self.assertTrue(result.percentiles)

    def test_bad_grid(self):
        with self.assertRaises(sim.SimulationError):
            sim.supported_video_rate(small_config('udp_1path', 'video'), resolution_bps=0.0)


class FrameExpiryTests(SimpleTestCase):

    def test_expired_frame_is_purged_once_the_order_reaches_the_node(self):
        simulation = sim.Simulation(small_config('udp_1path', 'video', ues=1), seed=1)
        simulation._sample_channels(0.0, initial=True)
        st = next(iter(simulation.ues.values()))
        node_id = st.serving[0]
        latency = simulation._route(st.gateway.host, node_id)[0]
        self.assertGreater(latency, 0.0)
        st.gateway.apply_allocation(st.flow_id, {0: (node_id, latency)}, {0: 1e7})
        group = ('frame', 0, 0)
        jobs = st.gateway.ingest(st.flow_id, size_bits=32_000, deadline=0.05, single_path=True, plain=True)
        st.receiver.expect(group, jobs)
        st.frames[group] = [VideoSession(st.ue.id, 0, 1e6, 0.0, 1.0), jobs, False]
        for _, queued_packet in st.gateway.dispatch_tick(st.flow_id, 0.01):
            simulation._admit(st, queued_packet)
        queue = simulation.queues[node_id]
        queued = len(queue[st.ue.id])
        self.assertGreater(queued, 0)

        simulation._frame_deadline(st, group)
        self.assertEqual(len(queue[st.ue.id]), queued)
        simulation.env.run(until=latency / 2)
        self.assertEqual(len(queue[st.ue.id]), queued)
        simulation.env.run(until=latency + 1e-6)
        self.assertEqual(len(queue[st.ue.id]), 0)
        self.assertEqual(simulation.metrics.symbols_expired, queued)


class ScenarioOrderingTests(SimpleTestCase):
    """Seeded runs whose outcome follows from the scenario's bottleneck."""

    def completed(self, protocol, values, seed=1):
        return sim.run(tuned(small_config(protocol, ues=1), values), seed).total_completed

    def test_multiple_paths_beat_one_path_behind_thin_access_links(self):
        values = {'topology.access_capacity_bps': 2e6, 'mobility.speed_kmh': 0.0,
                  'traffic.off_time_mean_s': 0.05}
        counts = {p: self.completed(p, values) for p in ('tcp_d_1path', 'tcp_d_multipath', 'fc_mp', 'fc_mc')}
        self.assertGreater(counts['tcp_d_1path'], 0)
        self.assertGreater(counts['tcp_d_multipath'], counts['tcp_d_1path'])
        self.assertGreater(counts['fc_mp'], counts['tcp_d_1path'])
        self.assertGreaterEqual(counts['fc_mc'], counts['fc_mp'])

    def test_dense_cells_beat_macro_cells_at_every_speed(self):
        values = {'mobility.serving_cells': 1, 'radio.se_cap': 12.0, 'protocol.be_ceiling_bps': 1e9,
                  'traffic.off_time_mean_s': 0.005, 'traffic.file_size_bits': 8_000_000, 'run.duration_s': 2.0}
        for speed in (3.0, 30.0, 120.0):
            with self.subTest(speed=speed):
                dense = self.completed('fc_mp', {**values, 'mobility.speed_kmh': speed, 'topology.area_km2': 0.04})
                macro = self.completed('fc_mp', {**values, 'mobility.speed_kmh': speed, 'topology.area_km2': 1.0})
                self.assertGreater(dense, macro)

    def test_feedback_cuts_redundancy_when_the_allocation_outruns_the_radio(self):
        values = {'mobility.serving_cells': 2, 'mobility.speed_kmh': 30.0, 'radio.bandwidth_hz': 1e6,
                  'traffic.off_time_mean_s': 0.05, 'traffic.file_size_bits': 3_200_000,
                  'protocol.theta_high_s': 0.02, 'protocol.theta_low_s': 0.01, 'run.duration_s': 4.0}
        with mock.patch.object(te, 'solve_max_sum', side_effect=outrunning_max_sum):
            plain = sim.run(tuned(small_config(ues=1), values), seed=1)
            fed = sim.run(tuned(small_config(ues=1), {**values, 'protocol.feedback': True}), seed=1)
        self.assertTrue(plain.redundancy)
        self.assertTrue(fed.redundancy)
        self.assertIn('decrease', {row['action'] for row in fed.feedback_rows})
        self.assertGreaterEqual(plain.mean_redundancy, 2 * fed.mean_redundancy)

    def test_delay_spike_duplicates_tcp_d_segments_but_not_fountain_symbols(self):
        values = {'mobility.speed_kmh': 0.0, 'traffic.off_time_mean_s': 0.05}
        tcp = DelaySpikeSimulation(tuned(small_config('tcp_d_1path', ues=1), values), seed=1)
        tcp_metrics = tcp.run()
        self.assertEqual(len(tcp.spiked), 5)
        self.assertGreater(tcp_metrics.retransmissions, 0)
        self.assertGreaterEqual(tcp_metrics.decode_duplicates, 1)

        fountain = DelaySpikeSimulation(tuned(small_config('fc_mp', ues=1), values), seed=1)
        fountain_metrics = fountain.run()
        self.assertEqual(len(fountain.spiked), 5)
        self.assertEqual(fountain_metrics.decode_duplicates, 0)


class ResultFileTests(SimpleTestCase):

    def test_same_seed_writes_byte_identical_files(self):
        config = tuned(small_config(ues=2), {'run.trace_events': True, 'protocol.feedback': True})
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            for output in (first, second):
                ResultDumper(output).dump_run(config.content_key(1), 1, 'fc_mp', sim.run(config, seed=1))
            names = sorted(p.name for p in Path(first).iterdir())
            self.assertEqual(names, sorted(p.name for p in Path(second).iterdir()))
            self.assertIn('events.csv', names)
            self.assertIn('summary.csv', names)
            for name in names:
                with self.subTest(name=name):
                    self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes())
