import numpy as np
from django.test import SimpleTestCase

from dnsim.services import netmodel
from dnsim.services.scenario import MobilityConfig, RadioConfig, TopologyConfig

SMALL_GRAPH = """\
area 100.0 100.0
node gw gateway
node rt00 router
node rn000 radio_node 10.0 50.0 24.0 10000000.0 0
node rn001 radio_node 90.0 50.0 24.0 10000000.0 0
link gw rt00 10000000.0 0.001
link rt00 rn000 1000000000.0 0.001
link rt00 rn001 1000000000.0 0.001
"""


def ue_at(x, y=50.0, vx=0.0, ue_id='ue000'):
    return netmodel.UserEquipment(ue_id, (x, y), (vx, 0.0), 0)


class PropagationTests(SimpleTestCase):

    def test_path_loss(self):
        self.assertAlmostEqual(netmodel.path_loss(1.0), 38.0)
        self.assertAlmostEqual(netmodel.path_loss(10.0), 68.0)
        self.assertAlmostEqual(netmodel.path_loss(0.2), 38.0)
        np.testing.assert_allclose(netmodel.path_loss([1.0, 100.0]), [38.0, 98.0])

    def test_rate_is_capped(self):
        self.assertAlmostEqual(netmodel.rate_from_sinr(0.0, 1e7), 1.5e7)
        self.assertAlmostEqual(netmodel.rate_from_sinr(80.0, 1e7), 1e7 * 6.0 * 1.5)
        self.assertAlmostEqual(netmodel.rate_from_sinr(80.0, 1e7, resource_fraction=0.5), 4.5e7)
        with self.assertRaises(ValueError):
            netmodel.rate_from_sinr(10.0, 1e7, resource_fraction=1.5)

    def test_interference_only_from_the_same_reuse_group(self):
        node = netmodel.RadioNode('a', (0.0, 0.0), 24.0, 1e7, 0)
        near = netmodel.RadioNode('b', (30.0, 0.0), 24.0, 1e7, 0)
        other_group = netmodel.RadioNode('c', (30.0, 0.0), 24.0, 1e7, 1)
        ue = ue_at(10.0, 0.0)
        alone = netmodel.sinr(ue, node, [])
        self.assertLess(netmodel.sinr(ue, node, [near]), alone)
        self.assertAlmostEqual(netmodel.sinr(ue, node, [other_group]), alone)
        self.assertAlmostEqual(netmodel.sinr(ue, node, [node]), alone)

    def test_channel_map_agrees_with_the_scalar_formulas(self):
        graph = netmodel.NetworkGraph.from_text(SMALL_GRAPH)
        cmap = netmodel.ChannelMap(graph.radio_nodes, netmodel.DEFAULT_MODEL)
        ue = ue_at(30.0)
        active = np.array([True, True])
        sample = cmap.sample(ue, ['rn000'], active)['rn000']
        expected = netmodel.sinr(ue, graph.radio_nodes['rn000'], [graph.radio_nodes['rn001']])
        self.assertAlmostEqual(sample.sinr, expected)
        self.assertAlmostEqual(sample.peak_rate, netmodel.rate_from_sinr(expected, 1e7))

        muted = {'rn000': np.array([False, True])}
        quiet = cmap.sample(ue, ['rn000'], active, muted=muted)['rn000']
        self.assertAlmostEqual(quiet.sinr, netmodel.sinr(ue, graph.radio_nodes['rn000'], []))

    def test_best_cells(self):
        graph = netmodel.NetworkGraph.from_text(SMALL_GRAPH)
        cmap = netmodel.ChannelMap(graph.radio_nodes, netmodel.DEFAULT_MODEL)
        self.assertEqual(cmap.best_n(ue_at(20.0), 1), ('rn000',))
        self.assertEqual(cmap.best_n(ue_at(80.0), 2), ('rn001', 'rn000'))
        # equidistant: ties go to the smaller id
        self.assertEqual(cmap.best_n(ue_at(50.0), 1), ('rn000',))
        nodes = list(graph.radio_nodes.values())
        self.assertEqual(netmodel.best_n_cells(ue_at(80.0), nodes, 2), ('rn001', 'rn000'))
        with self.assertRaises(ValueError):
            netmodel.best_n_cells(ue_at(80.0), nodes, 0)


class TopologyTests(SimpleTestCase):
    topology = TopologyConfig(radio_nodes=12, routers=4, gateway_routers=2, area_km2=0.04, vusgw_hosts=2)

    def test_same_seed_same_graph(self):
        a = netmodel.build_topology(self.topology, RadioConfig())
        b = netmodel.build_topology(self.topology, RadioConfig())
        self.assertEqual(a.to_text(), b.to_text())
        c = netmodel.build_topology(TopologyConfig(radio_nodes=12, routers=4, seed=2), RadioConfig())
        self.assertNotEqual(a.to_text(), c.to_text())

    def test_node_kinds(self):
        graph = netmodel.build_topology(self.topology, RadioConfig(reuse_groups=3))
        self.assertEqual(len(graph.nodes_of_kind('radio_node')), 12)
        self.assertEqual(len(graph.nodes_of_kind('router')), 4)
        self.assertEqual(graph.hosts, ['gw', 'vh0', 'vh1'])
        self.assertEqual(len(list(graph.graph.neighbors('gw'))), 2)
        self.assertEqual({n.reuse_group for n in graph.radio_nodes.values()}, {0, 1, 2})
        self.assertAlmostEqual(graph.width, 200.0)
        for node in graph.radio_nodes.values():
            self.assertTrue(0.0 <= node.position[0] <= 200.0)

    def test_text_form_reloads(self):
        graph = netmodel.build_topology(self.topology, RadioConfig())
        again = netmodel.NetworkGraph.from_text(graph.to_text())
        self.assertEqual(again.to_text(), graph.to_text())
        self.assertEqual(again.radio_nodes, graph.radio_nodes)

    def test_rejects_bad_graphs(self):
        with self.assertRaises(netmodel.TopologyError):
            netmodel.NetworkGraph.from_text(SMALL_GRAPH + "node island router\n")
        with self.assertRaises(netmodel.TopologyError):
            netmodel.NetworkGraph.from_text(SMALL_GRAPH + "wire gw rt00\n")
        with self.assertRaises(netmodel.TopologyError):
            netmodel.NetworkGraph.from_text(SMALL_GRAPH + "node x satellite\n")
        with self.assertRaises(netmodel.TopologyError):
            netmodel.build_topology(TopologyConfig(routers=2, gateway_routers=3), RadioConfig())

    def test_route_latency(self):
        graph = netmodel.NetworkGraph.from_text(SMALL_GRAPH)
        self.assertAlmostEqual(graph.route_latency(['gw', 'rt00', 'rn001']), 0.002)
        self.assertEqual(graph.capacity('gw', 'rt00'), 1e7)


class MobilityTests(SimpleTestCase):

    def test_two_lanes_opposite_directions(self):
        ues = netmodel.place_users(MobilityConfig(speed_kmh=36.0, ues=4, lane_spacing_m=20.0), 100.0, 100.0,
                                   np.random.default_rng(1))
        self.assertEqual([u.id for u in ues], ['ue000', 'ue001', 'ue002', 'ue003'])
        self.assertEqual([u.lane for u in ues], [0, 1, 0, 1])
        self.assertEqual({u.position[1] for u in ues}, {40.0, 60.0})
        self.assertEqual([u.velocity[0] for u in ues], [10.0, -10.0, 10.0, -10.0])

    def test_wraps_around_the_strip(self):
        forward, backward = netmodel.step_mobility([ue_at(99.0, vx=10.0), ue_at(1.0, vx=-10.0)], 1.0, 100.0)
        self.assertAlmostEqual(forward.position[0], 9.0)
        self.assertAlmostEqual(backward.position[0], 91.0)
        with self.assertRaises(ValueError):
            netmodel.step_mobility([ue_at(1.0)], 0.0, 100.0)

    def test_trajectory_follows_the_best_cell(self):
        graph = netmodel.NetworkGraph.from_text(SMALL_GRAPH)
        cmap = netmodel.ChannelMap(graph.radio_nodes, netmodel.DEFAULT_MODEL)
        serving = cmap.trajectory(ue_at(40.0, vx=10.0), 5.0, 0.5, 100.0)
        self.assertEqual(len(serving), 11)
        self.assertEqual(serving[0], 'rn000')
        self.assertEqual(serving[-1], 'rn001')
