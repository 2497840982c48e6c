from collections import deque

from django.test import SimpleTestCase

from dnsim.services import protocols
from dnsim.services.protocols import (ArqState, HarqModel, HarqOutcome, HarqProcess, ProfileError, SdpProfile,
                                      TcpDReceiver, handover_execute, harq_transmit, sdp_select, tcp_d_on_ack,
                                      tcp_d_on_timeout, tcp_d_send)


class FixedDraw:
    """Stands in for a numpy generator whose next uniform draw is known."""

    def __init__(self, value):
        self.value = value

    def random(self):
        return self.value


class ProfileTests(SimpleTestCase):

    def test_best_effort(self):
        normal = sdp_select('best_effort')
        self.assertTrue(normal.te and normal.multipath and normal.fc)
        self.assertFalse(normal.harq or normal.fixed_rate_fc or normal.radio_coordination)
        self.assertTrue(sdp_select('best_effort', high_load=True).radio_coordination)

    def test_video_i_frames(self):
        profile = sdp_select('video_I')
        self.assertTrue(profile.fixed_rate_fc and profile.handover_forwarding and profile.radio_coordination)
        self.assertFalse(profile.harq)

    def test_video_p_frames_depend_on_size(self):
        small = sdp_select('video_P', frame_symbols=3, threshold=8)
        self.assertTrue(small.harq and small.handover_forwarding)
        self.assertFalse(small.fc or small.multipath)
        large = sdp_select('video_P', frame_symbols=8, threshold=8)
        self.assertTrue(large.fc and large.fixed_rate_fc)
        self.assertFalse(large.handover_forwarding)

    def test_scheduler_passes_through(self):
        self.assertEqual(sdp_select('video_I', scheduler='proportional_fair').scheduler_policy, 'proportional_fair')

    def test_invalid_profiles(self):
        with self.assertRaises(ProfileError):
            sdp_select('voice')
        with self.assertRaises(ProfileError):
            SdpProfile(fixed_rate_fc=True)
        with self.assertRaises(ProfileError):
            SdpProfile(multipath=True)
        with self.assertRaises(ProfileError):
            SdpProfile(scheduler_policy='round_robin')

    def test_matrix(self):
        rows = {row[0]: row[1:] for row in protocols.profile_matrix()}
        self.assertEqual(rows['radio_coordination'], ('high load', 'on', 'off'))
        self.assertEqual(rows['harq'], ('off', 'off', 'on'))
        self.assertEqual(rows['scheduler'], ('max_rate', 'max_rate', 'max_rate'))
        text = protocols.format_profile_matrix()
        self.assertTrue(text.startswith('feature'))
        self.assertIn('fixed_rate_fc', text)

    def test_stacks(self):
        self.assertEqual(protocols.PROTOCOL_STACKS['fc_mp'].rate_objective, 'max_sum')
        self.assertEqual(protocols.PROTOCOL_STACKS['fc_mp_video'].rate_objective, 'max_min')
        self.assertFalse(protocols.PROTOCOL_STACKS['tcp_d_1path'].multipath)
        self.assertTrue(protocols.PROTOCOL_STACKS['tcp_d_multipath'].multipath)


class TcpDTests(SimpleTestCase):

    def test_window_and_limit(self):
        state = ArqState(window=2, limit=3)
        self.assertEqual([tcp_d_send(state, 0.0), tcp_d_send(state, 0.0), tcp_d_send(state, 0.0)], [0, 1, None])
        self.assertTrue(tcp_d_on_ack(state, 0, 0.2))
        self.assertFalse(tcp_d_on_ack(state, 0, 0.2))
        self.assertEqual(state.duplicates, 1)
        self.assertEqual(tcp_d_send(state, 0.2), 2)
        self.assertIsNone(tcp_d_send(state, 0.2))

    def test_rtt_estimate_and_backoff(self):
        state = ArqState(window=4, limit=3)
        tcp_d_send(state, 0.0)
        tcp_d_send(state, 0.0)
        tcp_d_on_ack(state, 0, 0.2)
        self.assertAlmostEqual(state.srtt, 0.2)
        self.assertAlmostEqual(state.rto, 0.6)
        tcp_d_send(state, 0.2)

        self.assertEqual(tcp_d_on_timeout(state, 1.0), [1, 2])
        self.assertAlmostEqual(state.rto, 1.2)
        self.assertEqual(tcp_d_on_timeout(state, 1.0), [])
        self.assertEqual(tcp_d_send(state, 1.0), 1)
        self.assertEqual(state.retransmissions, 1)
        # retransmitted packets give no RTT sample
        tcp_d_on_ack(state, 1, 1.5)
        self.assertAlmostEqual(state.srtt, 0.2)

    def test_rto_bounds(self):
        state = ArqState(rto_min=0.05)
        self.assertEqual(state.rto, protocols.RTO_INITIAL_S)
        state._sample(0.001)
        self.assertEqual(state.rto, 0.05)
        with self.assertRaises(ProfileError):
            ArqState(window=0)

    def test_receiver(self):
        receiver = TcpDReceiver(2)
        self.assertTrue(receiver.on_packet(0))
        self.assertFalse(receiver.on_packet(0))
        self.assertFalse(receiver.complete)
        receiver.on_packet(1)
        self.assertTrue(receiver.complete)
        self.assertEqual(receiver.duplicates, 1)


class HarqTests(SimpleTestCase):
    model = HarqModel(max_harq=3, margin_db=1.0, p_high=0.1, p_low=0.01, spacing=0.008)

    def test_error_probability(self):
        self.assertEqual(self.model.error_probability(10.0, 5.0), 0.1)
        self.assertEqual(self.model.error_probability(5.5, 5.0), 0.01)
        self.assertAlmostEqual(self.model.error_probability(10.0, 5.0, retries=2), 0.025)

    def test_retries_then_gives_up(self):
        process = HarqProcess('rn000', 'ue000', object())
        outcomes = [harq_transmit(process, 10.0, 5.0, 0.01 * i, FixedDraw(0.0), self.model) for i in range(4)]
        self.assertEqual(outcomes, [HarqOutcome.RETRY] * 3 + [HarqOutcome.FAILED])
        self.assertEqual(process.retries, 3)
        self.assertAlmostEqual(process.next_time, 0.02 + 0.008)
        self.assertEqual(process.first_time, 0.0)

    def test_disabled_harq_fails_at_once(self):
        process = HarqProcess('rn000', 'ue000', object())
        self.assertIs(harq_transmit(process, 10.0, 5.0, 0.0, FixedDraw(0.0), self.model, enabled=False),
                      HarqOutcome.FAILED)

    def test_delivery(self):
        process = HarqProcess('rn000', 'ue000', object())
        self.assertIs(harq_transmit(process, 10.0, 5.0, 0.0, FixedDraw(0.5), self.model), HarqOutcome.DELIVERED)


class HandoverTests(SimpleTestCase):

    def queues(self):
        return {'rn000': deque(['p1', 'p2']), 'rn001': deque(['p3'])}

    def test_drop(self):
        queues = self.queues()
        result = handover_execute('ue000', ('rn000', 'rn001'), ('rn001', 'rn002'), 'drop', queues, 1.0, 0.02)
        self.assertEqual(result.dropped, ['p1', 'p2'])
        self.assertEqual(list(queues['rn000']), [])
        self.assertEqual(list(queues['rn001']), ['p3'])
        self.assertEqual(list(result.joining), ['rn002'])
        self.assertAlmostEqual(result.joining['rn002'], 1.02)
        self.assertEqual([e.kind for e in result.events], ['drop', 'join'])

    def test_forward(self):
        result = handover_execute('ue000', ('rn000',), ('rn001',), 'forward', self.queues(), 1.0)
        self.assertEqual(result.forwarded, {'rn000': ['p1', 'p2']})
        self.assertEqual(result.dropped, [])

    def test_same_set_is_a_no_op(self):
        result = handover_execute('ue000', ('rn000',), ('rn000',), 'drop', self.queues())
        self.assertEqual((result.dropped, result.events), ([], []))

    def test_unknown_mode(self):
        with self.assertRaises(ProfileError):
            handover_execute('ue000', ('rn000',), ('rn001',), 'teleport', {})
