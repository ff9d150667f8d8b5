"""
Human-readable summaries of run directories, rendered with Jinja2 templates
stored in templates/reports.
"""

import json
import logging
from pathlib import Path

import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined, TemplateError

from agitationlab.errors import DataError
from agitationlab.metrics import MetricError, linear_fit
from agitationlab.utils import FLOAT_FORMAT, atomic_write_text

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent / 'templates' / 'reports'
RUN_INDEX = 'run_index.csv'
SUMMARY = 'summary.txt'


class ReportError(DataError):
    """A run directory cannot be summarized"""
    pass


_environment = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)
_environment.filters['num'] = lambda value, digits=4: '-' if value is None else f"{value:.{digits}f}"


def render_template(template_name: str, **context) -> str:
    """
    Render a report template.

    Args:
        template_name: file name inside templates/reports
        **context: template variables

    Returns:
        Rendered text
    """
    try:
        return _environment.get_template(template_name).render(**context)
    except TemplateError as e:
        raise ReportError(f"Failed to render template {template_name}: {e}")


# ---------------------------------------------------------------------------
# Run index
# ---------------------------------------------------------------------------

RUN_INDEX_COLUMNS = ['config_hash', 'label', 'strategy', 'proportion', 'k', 'seed1', 'seeds2', 'n_folds',
                     'mean_auroc', 'mean_proportion']


def _write(path, text: str):
    try:
        atomic_write_text(path, text)
    except OSError as e:
        raise ReportError(f"Cannot write {path}: {e}")


def update_run_index(run_dir, rows):
    """Insert or replace rows keyed by (config_hash, label); the file stays sorted"""
    path = Path(run_dir) / RUN_INDEX
    frame = pd.DataFrame(rows, columns=RUN_INDEX_COLUMNS)
    if path.exists():
        existing = pd.read_csv(path, dtype={'config_hash': str, 'label': str, 'seeds2': str})
        keys = set(zip(frame['config_hash'], frame['label']))
        keep = [key not in keys for key in zip(existing['config_hash'], existing['label'])]
        frame = pd.concat([existing[keep], frame], ignore_index=True)
    frame = frame.sort_values(['config_hash', 'label'], kind='mergesort')
    _write(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))
    return path


def read_run_index(run_dir) -> pd.DataFrame:
    path = Path(run_dir) / RUN_INDEX
    if not path.exists():
        raise ReportError(f"No {RUN_INDEX} in {run_dir}")
    return pd.read_csv(path, dtype={'config_hash': str, 'label': str, 'seeds2': str})


def prune_run(run_dir, config_hash: str):
    """
    Drop every index row of a configuration, with the report and timing files it wrote.

    A file is removed only when it still carries that configuration's hash, since a
    later run with another configuration may have rewritten the same label.

    Returns:
        Labels removed from the index
    """
    run_dir = Path(run_dir)
    index = read_run_index(run_dir)
    matches = index['config_hash'] == config_hash
    labels = sorted(index.loc[matches, 'label'])
    for label in labels:
        for prefix in ('report_', 'timing_'):
            path = run_dir / f"{prefix}{label}.json"
            if path.exists() and _read_json(path).get('config_hash') == config_hash:
                path.unlink()
                logger.info(f"Removed {path}")
    _write(run_dir / RUN_INDEX,
           index[~matches].to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))
    return labels


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportError(f"Cannot read {path}: {e}")


def collect_run(run_dir):
    """Reports, timings, sweep and cohort manifest found in a run directory"""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ReportError(f"Run directory not found: {run_dir}")
    reports = []
    for path in sorted(run_dir.glob('report_*.json')):
        report = _read_json(path)
        timing_path = path.with_name(path.name.replace('report_', 'timing_', 1))
        report['timing'] = _read_json(timing_path) if timing_path.exists() else None
        report['label'] = path.stem[len('report_'):]
        reports.append(report)
    sweep = _read_json(run_dir / 'sweep.json') if (run_dir / 'sweep.json').exists() else None
    manifest = _read_json(run_dir / 'manifest.json') if (run_dir / 'manifest.json').exists() else None
    return reports, sweep, manifest


def time_scaling(reports):
    """Line fit of final-fit time against selection proportion over rus reports (None if < 2 points)"""
    points = [
        (r['mean_proportion'], r['timing']['mean_training_ms'])
        for r in reports if r['spec']['strategy'] == 'rus' and r.get('timing')
    ]
    if len({p for p, _ in points}) < 2:
        return None
    try:
        fit = linear_fit([p for p, _ in points], [t for _, t in points])
    except MetricError as e:
        logger.warning(f"Time scaling fit failed: {e}")
        return None
    return fit.to_dict()


def render_run_summary(run_dir) -> str:
    reports, sweep, manifest = collect_run(run_dir)
    if not reports and sweep is None and manifest is None:
        raise ReportError(f"Nothing to summarize in {run_dir}")
    baseline = next((r for r in reports if r['spec']['strategy'] == 'none'), None)
    rows = []
    for report in sorted(reports, key=lambda r: (r['spec']['strategy'], r['label'])):
        timing = report.get('timing') or {}
        saved = None
        if baseline and baseline.get('timing') and timing and baseline['timing']['mean_training_ms'] > 0:
            saved = 1 - timing['mean_training_ms'] / baseline['timing']['mean_training_ms']
        rows.append({
            'label': report['label'],
            'strategy': report['spec']['strategy'],
            'proportion': report['mean_proportion'],
            'mean_auroc': report['mean_auroc'],
            'n_runs': len(report['folds']),
            'training_ms': timing.get('mean_training_ms'),
            'time_saved': saved,
        })
    return render_template(
        'run_summary.txt',
        run_dir=str(run_dir),
        rows=rows,
        scaling=time_scaling(reports),
        sweep=sweep,
        manifest=manifest,
    )


def write_run_summary(run_dir) -> Path:
    path = Path(run_dir) / SUMMARY
    _write(path, render_run_summary(run_dir))
    return path


def render_cohort_summary(summary: dict, config_hash: str) -> str:
    return render_template('cohort_summary.txt', summary=summary, config_hash=config_hash)
