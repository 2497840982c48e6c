from dnsim.management.base import SimulatorCommand


class Command(SimulatorCommand):
    help = "Check a scenario file and print its effective configuration."

    def add_arguments(self, parser):
        parser.add_argument('config', help="scenario file (.toml or .json)")

    def handle(self, *args, **options):
        _, config = self.load(options['config'])
        self.echo(config)
