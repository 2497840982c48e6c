from pathlib import Path

from dnsim.management.base import SimulatorCommand
from dnsim.presets import BASELINE_PROTOCOL
from dnsim.services.config_loader import ConfigError
from dnsim.services.dumper import ResultDumper
from dnsim.services.sweeper import run_sweep


class Command(SimulatorCommand):
    help = "Simulate one scenario for each of its seeds and append the results."

    def add_arguments(self, parser):
        parser.add_argument('config', help="scenario file (.toml or .json)")
        parser.add_argument('--seed', type=int, action='append', help="run only these seeds (repeatable)")
        parser.add_argument('--output', help="results directory (default: DNSIM_OUTPUT_DIR)")
        parser.add_argument('--workers', type=int, help="worker processes (default: DNSIM_WORKERS)")
        parser.add_argument('--trace', action='store_true', help="also write the event trace")
        parser.add_argument('--no-echo', action='store_true', help="do not print the effective config")

    def handle(self, *args, **options):
        overrides = {'run': {'trace_events': True}} if options['trace'] else None
        document, config = self.load(options['config'], overrides=overrides)
        if not options['no_echo']:
            self.echo(config)

        try:
            report = run_sweep(document, name=Path(options['config']).stem, baseline=BASELINE_PROTOCOL,
                               seeds=options['seed'], workers=options['workers'],
                               dumper=ResultDumper(options['output']))
        except ConfigError as e:
            self.fail('config', e.messages)

        for status in report.statuses:
            self.stdout.write(f"{status['key']}  seed={status['seed']}  {status['status']}")
        row = report.rows[0]
        self.stdout.write(f"completed sessions {row['completed_sessions_mean']} ± {row['completed_sessions_std']}, "
                          f"p99 outage {row['p99_outage_mean'] or '-'}")
        if report.failed:
            self.fail('run', [f"seed {s['seed']}: {s['error_message']}" for s in report.failed])
