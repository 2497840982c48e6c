"""
Experiment sweeps: the cartesian product of axis values, every cell run for
every seed on a bounded worker pool, aggregated to mean and standard
deviation per cell.
"""
import json
import itertools
import multiprocessing
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.conf import settings

from . import sim
from .config_loader import ConfigError, build_config, merge_documents
from .dumper import AGGREGATED, ResultDumper
from .logs import get_logger
from .metrics import fmt_number
from .results_store import known_keys

logger = get_logger('sweeper')


@dataclass(frozen=True)
class SweepCell:
    index: int
    values: tuple
    config: object

    @property
    def label(self) -> str:
        return ";".join(f"{path}={value}" for path, value in self.values)


@dataclass
class SweepReport:
    name: str
    axes: list
    baseline: str
    seeds: tuple
    measure: str
    cells: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def failed(self) -> list:
        return [s for s in self.statuses if s['status'] == 'ERROR']


def _typed(text: str):
    text = text.strip()
    if text.lower() in ('true', 'false'):
        return text.lower() == 'true'
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_axis(text: str) -> tuple:
    """``section.key=v1,v2`` -> ``('section.key', (v1, v2))`` with JSON-typed values."""
    path, sep, values = text.partition('=')
    path = path.strip()
    if not sep or path.count('.') != 1 or not values.strip():
        raise ConfigError([f"axis {text!r}: expected section.key=v1,v2"])
    return path, tuple(_typed(v) for v in values.split(','))


def expand_cells(document: dict, axes) -> list:
    """One validated config per combination of axis values, in axis order."""
    axes = list(axes)
    cells, messages = [], []
    for index, combo in enumerate(itertools.product(*(values for _, values in axes))):
        override = {}
        for (path, _), value in zip(axes, combo):
            section, key = path.split('.')
            override.setdefault(section, {})[key] = value
        try:
            config = build_config(merge_documents(document, override))
        except ConfigError as e:
            messages.extend(f"cell {index}: {m}" for m in e.messages)
            continue
        cells.append(SweepCell(index, tuple((path, value) for (path, _), value in zip(axes, combo)), config))
    if messages:
        raise ConfigError(messages)
    return cells


def _run_task(task: tuple) -> dict:
    measure, cell_index, config, seed, key = task
    result = {'status': 'OK', 'error_message': None, 'key': key, 'cell': cell_index, 'seed': seed}
    try:
        if measure == 'supported_rate':
            result['rate'] = sim.supported_video_rate(config).rate_bps
        else:
            result['metrics'] = sim.run(config, seed)
    except Exception as e:
        logger.error(f"Run {key} (cell {cell_index}, seed {seed}) failed: {e}")
        result.update(status='ERROR', error_message=str(e))
    return result


def _execute(tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(task) for task in tasks]
    with multiprocessing.Pool(min(workers, len(tasks))) as pool:
        return pool.map(_run_task, tasks, chunksize=1)


def _stats(values: list) -> tuple:
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    array = np.asarray(values, dtype=float)
    return float(array.mean()), (float(array.std(ddof=1)) if array.size > 1 else 0.0)


def _number(value) -> Optional[float]:
    if value in (None, ''):
        return None
    return float(value)


def aggregate(report: SweepReport, summaries: dict, rates: dict) -> list:
    """Cell rows; ``summaries`` maps a cell index to its per-seed summary rows."""
    rows = []
    for cell in report.cells:
        runs = summaries.get(cell.index, [])
        row = {'sweep': report.name, 'cell': cell.index, 'axes': cell.label,
               'protocol': cell.config.protocol.name, 'runs': len(runs),
               'errors': sum(1 for s in report.statuses if s['cell'] == cell.index and s['status'] == 'ERROR')}
        for name in AGGREGATED:
            mean, std = _stats([_number(r.get(name)) for r in runs])
            row[f"{name}_mean"], row[f"{name}_std"] = fmt_number(mean), fmt_number(std)
        row['supported_rate_bps'] = fmt_number(rates.get(cell.index))
        rows.append(row)

    # gains against the baseline protocol of the otherwise identical cell
    target = 'supported_rate_bps' if report.measure == 'supported_rate' else 'completed_sessions_mean'
    by_values = {tuple(v for v in cell.values if v[0] != 'protocol.name'): row
                 for cell, row in zip(report.cells, rows) if cell.config.protocol.name == report.baseline}
    for cell, row in zip(report.cells, rows):
        base = by_values.get(tuple(v for v in cell.values if v[0] != 'protocol.name'))
        value = _number(row[target])
        reference = _number(base[target]) if base is not None else None
        row['gain_vs_baseline'] = fmt_number(value / reference - 1.0) if value is not None and reference else ''
    return rows


def run_sweep(document: dict, axes=(), name: str = 'sweep', baseline: str = 'tcp_d_1path', seeds=None,
              workers: Optional[int] = None, dumper: Optional[ResultDumper] = None,
              measure: str = 'sessions') -> SweepReport:
    """Run every cell for every seed; one failed run never stops the sweep.

    Keys already in the results store are reported ``CACHED`` and reuse the
    stored summary row.
    """
    axes = [parse_axis(a) if isinstance(a, str) else a for a in axes]
    cells = expand_cells(document, axes)
    dumper = dumper or ResultDumper()
    workers = workers or settings.DNSIM_WORKERS
    report = SweepReport(name, [path for path, _ in axes], baseline,
                         tuple(seeds) if seeds else cells[0].config.run.seeds if cells else (), measure, cells)
    logger.info(f"Sweep {name}: {len(cells)} cell(s), seeds {list(report.seeds)}, {workers} worker(s)")

    summaries, rates, tasks = {}, {}, []
    cached = known_keys(dumper.output_dir) if measure == 'sessions' else {}
    for cell in cells:
        if measure == 'supported_rate':
            config = cell.config
            if seeds:
                config = config.with_value('run.seeds', tuple(seeds))
            tasks.append((measure, cell.index, config, None, config.content_key(0)))
            continue
        for seed in report.seeds:
            key = cell.config.content_key(seed)
            if key in cached:
                report.statuses.append({'status': 'CACHED', 'error_message': None, 'key': key,
                                        'cell': cell.index, 'seed': seed})
                summaries.setdefault(cell.index, []).append(cached[key])
            else:
                tasks.append((measure, cell.index, cell.config, seed, key))

    by_index = {cell.index: cell for cell in cells}
    for result in _execute(tasks, workers):
        metrics = result.pop('metrics', None)
        rate = result.pop('rate', None)
        report.statuses.append(result)
        if result['status'] != 'OK':
            continue
        if rate is not None:
            rates[result['cell']] = rate
            continue
        protocol = by_index[result['cell']].config.protocol.name
        dumper.dump_run(result['key'], result['seed'], protocol, metrics)
        summaries.setdefault(result['cell'], []).append(metrics.summary_row(result['key'], result['seed'], protocol))

    report.statuses.sort(key=lambda s: (s['cell'], -1 if s['seed'] is None else s['seed']))
    report.rows = aggregate(report, summaries, rates)
    dumper.dump_sweep(report)
    logger.info(f"Sweep {name} done: {len(report.statuses)} run(s), {len(report.failed)} failed")
    return report