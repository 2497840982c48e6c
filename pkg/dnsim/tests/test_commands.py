import csv
import json
import tempfile
from collections import Counter
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.test import SimpleTestCase

from dnsim.services.config_loader import build_config
from dnsim.services.metrics import Metrics

SIM_RUN = 'dnsim.services.sweeper.sim.run'


def fake_run(config, seed):
    return Metrics(ue_ids=['ue000'], completed_sessions=Counter({'ue000': seed}))


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def scenario(self, document, name='scenario.json'):
        path = self.dir / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)

    def call(self, *args, **options):
        out, err = StringIO(), StringIO()
        call_command(*args, stdout=out, stderr=err, **options)
        return out.getvalue(), err.getvalue()

    def call_failing(self, *args, **options):
        err = StringIO()
        with self.assertRaises(SystemExit) as ctx:
            call_command(*args, stdout=StringIO(), stderr=err, **options)
        self.assertEqual(ctx.exception.code, 2)
        return json.loads(err.getvalue())


class ValidateCommandTests(CommandTestCase):

    def test_prints_the_effective_config(self):
        out, _ = self.call('validate', self.scenario({'mobility': {'ues': 12}}))
        config = build_config(json.loads(out))
        self.assertEqual(config.mobility.ues, 12)
        self.assertEqual(config, build_config({'mobility': {'ues': 12}}))

    def test_invalid_config(self):
        error = self.call_failing('validate', self.scenario({'mobility': {'speed_kmh': -5}}))
        self.assertEqual(error['error'], 'config')
        self.assertTrue(any(m.startswith('mobility.speed_kmh') for m in error['messages']))

    def test_missing_file(self):
        error = self.call_failing('validate', str(self.dir / 'nowhere.toml'))
        self.assertEqual(error['error'], 'config')


class PresetsCommandTests(CommandTestCase):

    def test_lists_presets_with_their_axes(self):
        out, _ = self.call('presets')
        self.assertIn('paper_fig6: ', out)
        self.assertIn('    --axis mobility.ues=10,30,60', out)
        self.assertIn('    --measure supported_rate', out)

    def test_show(self):
        out, _ = self.call('presets', show='paper_fig5')
        self.assertEqual(build_config(json.loads(out)).traffic.intensity, 'high')
        error = self.call_failing('presets', show='paper_fig99')
        self.assertEqual(error['error'], 'config')


class RunCommandTests(CommandTestCase):

    def test_results_are_written(self):
        path = self.scenario({'run': {'seeds': [1, 2]}})
        with mock.patch(SIM_RUN, side_effect=fake_run) as run:
            out, _ = self.call('run', path, '--output', str(self.dir / 'out'), '--workers', '1', '--no-echo')
        self.assertEqual(run.call_count, 2)
        self.assertIn('seed=2  OK', out)
        self.assertIn('completed sessions 1.500000', out)
        with open(self.dir / 'out' / 'summary.csv', newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([row['completed_sessions'] for row in rows], ['1', '2'])

    def test_seed_option(self):
        path = self.scenario({'run': {'seeds': [1, 2]}})
        with mock.patch(SIM_RUN, side_effect=fake_run) as run:
            self.call('run', path, '--seed', '5', '--output', str(self.dir / 'out'), '--workers', '1')
        run.assert_called_once()
        self.assertEqual(run.call_args.args[1], 5)

    def test_failed_run(self):
        path = self.scenario({'run': {'seeds': [1]}})
        with mock.patch(SIM_RUN, side_effect=RuntimeError('boom')):
            error = self.call_failing('run', path, '--output', str(self.dir / 'out'), '--workers', '1')
        self.assertEqual(error, {'error': 'run', 'messages': ['seed 1: boom']})


class SweepCommandTests(CommandTestCase):

    def test_needs_a_config_or_preset(self):
        self.assertEqual(self.call_failing('sweep')['error'], 'usage')

    def test_preset_axes(self):
        output = self.dir / 'out'
        with mock.patch(SIM_RUN, side_effect=fake_run):
            out, _ = self.call('sweep', '--preset', 'paper_fig4_low', '--seed', '1', '--workers', '1',
                               '--output', str(output))
        self.assertIn('Sweep paper_fig4_low: 4 cell(s)', out)
        with open(output / 'sweep.csv', newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([row['protocol'] for row in rows], ['tcp_d_1path', 'tcp_d_multipath', 'fc_mp', 'fc_mc'])
        self.assertTrue((output / 'sweep.md').exists())

    def test_bad_axis(self):
        path = self.scenario({})
        error = self.call_failing('sweep', path, '--axis', 'speed=3')
        self.assertEqual(error['error'], 'config')

    def test_failed_runs_are_reported_as_json(self):
        path = self.scenario({'run': {'seeds': [1]}})

        def flaky(config, seed):
            if config.protocol.name == 'fc_mp':
                raise RuntimeError('solver exploded')
            return fake_run(config, seed)

        with mock.patch(SIM_RUN, side_effect=flaky):
            out, err = self.call('sweep', path, '--axis', 'protocol.name=tcp_d_1path,fc_mp', '--workers', '1',
                                 '--output', str(self.dir / 'out'))
        self.assertEqual(json.loads(err), {'error': 'runs', 'messages': ['cell 1 seed 1: solver exploded']})
        self.assertIn('Sweep sweep: 2 cell(s)', out)
