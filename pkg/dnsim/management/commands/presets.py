from dnsim.management.base import SimulatorCommand
from dnsim.presets import PRESETS


class Command(SimulatorCommand):
    help = "List the built-in presets, or print one as an effective config."

    def add_arguments(self, parser):
        parser.add_argument('--show', metavar='NAME', help="print the effective config of a preset")

    def handle(self, *args, **options):
        if options['show']:
            if options['show'] not in PRESETS:
                self.fail('config', [f"preset: unknown preset {options['show']!r}"])
            _, config = self.load(preset=options['show'])
            self.echo(config)
            return

        for preset in PRESETS.values():
            self.stdout.write(f"{preset.name}: {preset.description}")
            for axis in preset.axis_strings():
                self.stdout.write(f"    --axis {axis}")
            if preset.measure != 'sessions':
                self.stdout.write(f"    --measure {preset.measure}")
