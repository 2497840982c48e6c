import csv
from pathlib import Path

from django.conf import settings
from django.template.loader import render_to_string

from .logs import get_logger
from .metrics import FEEDBACK_COLUMNS, REDUNDANCY_COLUMNS, SESSION_COLUMNS, SUMMARY_COLUMNS

EVENT_COLUMNS = ['key', 'seed', 'time', 'seq', 'kind', 'detail']
AGGREGATED = ('completed_sessions', 'p99_outage', 'duplicates', 'backhaul_bytes', 'mean_redundancy', 'jain_index',
              'handovers')
SWEEP_COLUMNS = (['sweep', 'cell', 'axes', 'protocol', 'runs', 'errors']
                 + [f"{name}_{stat}" for name in AGGREGATED for stat in ('mean', 'std')]
                 + ['supported_rate_bps', 'gain_vs_baseline'])


class ResultDumper:
    """Appends run and sweep results under the output directory.

    Files are only ever appended to; a header is written when a file is
    created. Rows carry no wall-clock data, so the same runs produce the same
    bytes.
    """

    def __init__(self, output_dir=None):
        self.output_dir = Path(output_dir or settings.DNSIM_OUTPUT_DIR)
        self.logger = get_logger('dumper')

    def path(self, filename: str) -> Path:
        return self.output_dir / filename

    def append_rows(self, filename: str, columns: list, rows) -> int:
        rows = list(rows)
        if not rows:
            return 0
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.path(filename)
        is_new = not path.exists() or path.stat().st_size == 0
        with open(path, 'a', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator='\n', extrasaction='ignore')
            if is_new:
                writer.writeheader()
            writer.writerows(rows)
        self.logger.debug(f"Appended {len(rows)} row(s) to {path}")
        return len(rows)

    def dump_run(self, key: str, seed: int, protocol: str, metrics) -> None:
        tag = {'key': key, 'seed': seed}
        self.append_rows(settings.DNSIM_SESSIONS_CSV, SESSION_COLUMNS, metrics.session_rows(key, seed, protocol))
        self.append_rows(settings.DNSIM_REDUNDANCY_CSV, REDUNDANCY_COLUMNS,
                         [{**tag, **row} for row in metrics.redundancy_rows])
        self.append_rows(settings.DNSIM_FEEDBACK_CSV, FEEDBACK_COLUMNS,
                         [{**tag, **row} for row in metrics.feedback_rows])
        self.append_rows(settings.DNSIM_EVENTS_CSV, EVENT_COLUMNS,
                         [{**tag, 'time': f"{e.time:.6f}", 'seq': e.seq, 'kind': e.kind, 'detail': e.detail}
                          for e in metrics.events])
        # the summary row goes last: its key marks the run as complete
        self.append_rows(settings.DNSIM_SUMMARY_CSV, SUMMARY_COLUMNS, [metrics.summary_row(key, seed, protocol)])
        self.logger.info(f"Stored run {key} (seed {seed}, {protocol})")

    def dump_sweep(self, report) -> Path:
        self.append_rows(settings.DNSIM_SWEEP_CSV, SWEEP_COLUMNS, report.rows)
        markdown = render_to_string('dnsim/summary.md', {'report': report})
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.path(settings.DNSIM_SWEEP_MD)
        with open(path, 'a', encoding='utf-8') as f:
            f.write(markdown)
        self.logger.info(f"Sweep {report.name}: {len(report.rows)} cell(s) written to {path}")
        return path
