from dnsim.management.base import SimulatorCommand
from dnsim.presets import BASELINE_PROTOCOL, PRESETS
from dnsim.services.config_loader import ConfigError
from dnsim.services.dumper import ResultDumper
from dnsim.services.sweeper import run_sweep


class Command(SimulatorCommand):
    help = "Run the cartesian product of sweep axes over a scenario file or preset."

    def add_arguments(self, parser):
        parser.add_argument('config', nargs='?', help="scenario file (.toml or .json)")
        parser.add_argument('--preset', choices=sorted(PRESETS), help="start from a built-in preset")
        parser.add_argument('--axis', action='append', default=[], metavar='SECTION.KEY=V1,V2',
                            help="sweep axis (repeatable); defaults to the preset's axes")
        parser.add_argument('--name', help="sweep name in the result files")
        parser.add_argument('--baseline', help=f"protocol the gains are relative to (default {BASELINE_PROTOCOL})")
        parser.add_argument('--measure', choices=['sessions', 'supported_rate'])
        parser.add_argument('--seed', type=int, action='append', help="override the seeds (repeatable)")
        parser.add_argument('--workers', type=int, help="worker processes (default: DNSIM_WORKERS)")
        parser.add_argument('--output', help="results directory (default: DNSIM_OUTPUT_DIR)")

    def handle(self, *args, **options):
        if not options['config'] and not options['preset']:
            self.fail('usage', ["give a scenario file, --preset, or both"])
        preset = PRESETS.get(options['preset'])
        document, config = self.load(options['config'], options['preset'])
        self.echo(config)

        axes = options['axis'] or (list(preset.axes) if preset else [])
        try:
            report = run_sweep(
                document, axes,
                name=options['name'] or (preset.name if preset else 'sweep'),
                baseline=options['baseline'] or (preset.baseline if preset else BASELINE_PROTOCOL),
                seeds=options['seed'], workers=options['workers'], dumper=ResultDumper(options['output']),
                measure=options['measure'] or (preset.measure if preset else 'sessions'),
            )
        except ConfigError as e:
            self.fail('config', e.messages)

        for row in report.rows:
            value = row['supported_rate_bps'] if report.measure == 'supported_rate' else row['completed_sessions_mean']
            self.stdout.write(f"[{row['cell']}] {row['axes'] or '-'}: {value} (gain {row['gain_vs_baseline'] or '-'})")
        if report.failed:
            self.report_errors('runs', [f"cell {s['cell']} seed {s['seed']}: {s['error_message']}"
                                        for s in report.failed])
        self.stdout.write(self.style.SUCCESS(f"Sweep {report.name}: {len(report.rows)} cell(s)"))
