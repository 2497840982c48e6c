from collections import Counter

import numpy as np
from django.test import SimpleTestCase

from dnsim.services.metrics import SUMMARY_COLUMNS, Metrics, SessionRecord, jain_index
from dnsim.services.scheduler import Candidate, ProportionalFair, tti_schedule
from dnsim.services.traffic import VideoSession, be_generator, frame_sizes, video_generator


class SchedulerTests(SimpleTestCase):

    def test_max_rate(self):
        chosen, bits = tti_schedule([Candidate('ue001', 5e6), Candidate('ue000', 10e6)], 'max_rate', tti=0.001)
        self.assertEqual(chosen, 'ue000')
        self.assertAlmostEqual(bits, 10e3)
        chosen, _ = tti_schedule([Candidate('ue001', 5e6), Candidate('ue000', 5e6)], 'max_rate')
        self.assertEqual(chosen, 'ue000')

    def test_nothing_backlogged(self):
        self.assertEqual(tti_schedule([], 'max_rate'), (None, 0.0))

    def test_proportional_fair_turns_to_the_starved_ue(self):
        pf = ProportionalFair(window=10)
        candidates = [Candidate('ue000', 10e6), Candidate('ue001', 5e6)]
        self.assertEqual(tti_schedule(candidates, 'proportional_fair', pf)[0], 'ue000')
        self.assertAlmostEqual(pf.throughput['ue000'], 1e6)
        self.assertEqual(tti_schedule(candidates, 'proportional_fair', pf)[0], 'ue001')

    def test_idle_ttis_decay_the_average(self):
        pf = ProportionalFair(window=10, throughput={'ue000': 1e6})
        tti_schedule([], 'proportional_fair', pf)
        self.assertAlmostEqual(pf.throughput['ue000'], 0.9e6)

    def test_unknown_policy(self):
        with self.assertRaises(ValueError):
            tti_schedule([Candidate('ue000', 1.0)], 'round_robin')


class TrafficTests(SimpleTestCase):

    def test_frame_sizes_fill_the_gop(self):
        i_bits, p_bits = frame_sizes(450e3, 30, 30, 5.0)
        self.assertAlmostEqual(i_bits + 29 * p_bits, 450e3, delta=30)
        self.assertAlmostEqual(i_bits / p_bits, 5.0, places=3)
        with self.assertRaises(ValueError):
            frame_sizes(0.0)

    def test_video_frames(self):
        frames = list(video_generator('ue000', 450e3, fps=30, gop=15, deadline=0.1, start=2.0, duration=1.0))
        self.assertEqual(len(frames), 30)
        self.assertEqual([f.index for f in frames if f.kind == 'I'], [0, 15])
        self.assertAlmostEqual(frames[3].release, 2.1)
        self.assertAlmostEqual(frames[3].deadline, 2.2)

    def test_sessions_follow_off_periods(self):
        generator = be_generator('ue000', np.random.default_rng(3), 1.0, file_size=1000)
        first = next(generator)
        self.assertGreater(first.start, 0.0)
        self.assertEqual((first.index, first.file_size, first.completed), (0, 1000, False))
        second = generator.send(first.start + 2.0)
        self.assertEqual(second.index, 1)
        self.assertGreater(second.start, first.start + 2.0)
        with self.assertRaises(ValueError):
            next(generator)

    def test_same_seed_same_sessions(self):
        a = be_generator('ue000', np.random.default_rng(9), 10.0)
        b = be_generator('ue000', np.random.default_rng(9), 10.0)
        self.assertEqual(next(a), next(b))
        with self.assertRaises(ValueError):
            next(be_generator('ue000', np.random.default_rng(9), 0.0))

    def test_outage_fraction(self):
        session = VideoSession('ue000', 0, 450e3, 0.0, 10.0, frames=300, missed=3, frame_interval=1 / 30)
        self.assertAlmostEqual(session.outage_fraction, 0.01)
        self.assertEqual(VideoSession('ue000', 0, 450e3, 0.0, 0.0).outage_fraction, 0.0)


class MetricsTests(SimpleTestCase):

    def test_jain_index(self):
        self.assertAlmostEqual(jain_index([3, 3, 3]), 1.0)
        self.assertAlmostEqual(jain_index([1, 0]), 0.5)
        self.assertIsNone(jain_index([]))
        self.assertIsNone(jain_index([0, 0]))
        with self.assertRaises(ValueError):
            jain_index([1, -1])

    def test_conservation(self):
        metrics = Metrics(symbols_emitted=10, symbols_delivered=5, symbols_lost=1, symbols_purged=2,
                          symbols_dropped=1, symbols_in_flight=1)
        self.assertTrue(metrics.conserved())
        metrics.symbols_in_flight = 0
        self.assertFalse(metrics.conserved())

    def test_redundancy_histogram(self):
        metrics = Metrics(redundancy=[0.0, 0.07, 0.3, 2.0])
        self.assertEqual(metrics.redundancy_histogram(), [1, 1, 0, 0, 1, 0, 1])
        self.assertAlmostEqual(metrics.mean_redundancy, 0.5925)

    def test_summary_row(self):
        metrics = Metrics(ue_ids=['ue000', 'ue001'], completed_sessions=Counter({'ue000': 2}))
        metrics.sessions.append(SessionRecord('ue000', 'video', 0, 0.0, 10.0, True, 0.02, 4500000))
        row = metrics.summary_row('abc', 1, 'fc_mp')
        self.assertEqual(list(row), SUMMARY_COLUMNS)
        self.assertEqual(row['completed_sessions'], 2)
        self.assertEqual(row['jain_index'], '0.500000')
        self.assertEqual(row['p99_outage'], '0.020000')
        self.assertEqual(row['mean_redundancy'], '')
        sessions = metrics.session_rows('abc', 1, 'fc_mp')
        self.assertEqual(sessions[0]['completed'], 1)
        self.assertEqual(sessions[0]['end'], '10.000000')
