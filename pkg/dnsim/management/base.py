import json
import sys

from django.core.management.base import BaseCommand

from dnsim.services.config_loader import ConfigError, build_config, echo, load_document, merge_documents

EXIT_FAILURE = 2


class SimulatorCommand(BaseCommand):
    """Shared plumbing: scenario loading and machine-readable failures."""

    def report_errors(self, kind: str, messages) -> None:
        self.stderr.write(json.dumps({'error': kind, 'messages': list(messages)}, sort_keys=True))

    def fail(self, kind: str, messages) -> None:
        self.report_errors(kind, messages)
        sys.exit(EXIT_FAILURE)

    def load(self, path=None, preset=None, overrides=None) -> tuple:
        """(document, effective config) of a scenario file and/or preset."""
        try:
            document = load_document(path) if path else {}
            if preset:
                document = {'preset': preset, **{k: v for k, v in document.items() if k != 'preset'}}
            if overrides:
                document = merge_documents(document, overrides)
            return document, build_config(document)
        except ConfigError as e:
            self.fail('config', e.messages)

    def echo(self, config) -> None:
        self.stdout.write(echo(config))
