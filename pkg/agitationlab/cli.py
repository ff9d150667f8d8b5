"""
Command-line entry point: synth, features, run, sweep and report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import logging
import sys
from pathlib import Path

from joblib import Parallel, delayed

from agitationlab import __version__
from agitationlab.config import get_settings, load_experiment_config, load_synth_config
from agitationlab.core import (
    agitation_days_only,
    describe_dataset,
    label_windows,
    load_annotations,
    load_dataset,
    make_folds,
    save_annotations,
    save_dataset,
)
from agitationlab.decide import CcrParams, ccr_relabel_days, effective_threshold_range, sweep_thresholds
from agitationlab.errors import AgitationLabError, DataError, UsageError
from agitationlab.experiment import StrategySpec, run_cv_experiment
from agitationlab.features import frame_to_dataset
from agitationlab.metrics import confusion
from agitationlab.models import LabeledDataset, Strategy
from agitationlab.reporting import render_cohort_summary, update_run_index, write_run_summary
from agitationlab.signals import DEFAULT_CUTOFF_HZ, load_signal_frame, save_signal_frame
from agitationlab.synth import build_cohort_dataset, iter_cohort_days
from agitationlab.utils import FLOAT_FORMAT, atomic_write_json, atomic_write_text

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULT_THRESHOLD = 0.5


class OutputError(DataError):
    """A result file cannot be written"""
    pass


def _write_text(path, text: str):
    try:
        atomic_write_text(path, text)
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}")


def _write_json(path, obj):
    try:
        atomic_write_json(path, obj)
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}")


class _ArgumentParser(argparse.ArgumentParser):
    """argparse reporting bad arguments as UsageError (exit code 1)"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stdout,
        force=True,
    )


def _output_dir(args, configured, settings, default_leaf=None) -> Path:
    if args.out:
        return Path(args.out)
    if configured:
        return Path(configured)
    return Path(settings.output_dir) / default_leaf if default_leaf else Path(settings.output_dir)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args, settings):
    config = load_synth_config(args.config, args.set)
    out = _output_dir(args, config.output_dir, settings, 'cohort')
    n_jobs = config.n_jobs or settings.n_jobs
    print(f"🧪 Generating {config.cohort.n_days} participant-days into {out}")

    cohort = build_cohort_dataset(config.cohort, n_jobs=n_jobs, cutoff_hz=config.cutoff_hz)
    dataset = cohort.dataset
    save_dataset(dataset, out / 'dataset.csv')
    save_annotations(cohort.truth, out / 'truth.annotations.csv')
    files = ['dataset.csv', 'dataset.annotations.csv', 'truth.annotations.csv']
    if config.write_signals:
        for day in iter_cohort_days(config.cohort):
            files.append(f"signals/{save_signal_frame(day.frame, out / 'signals').name}")

    summary = describe_dataset(dataset).to_dict()
    manifest = {
        'config': config.to_dict(),
        'config_hash': config.config_hash,
        'seed': config.cohort.seed,
        'summary': summary,
        'truth_summary': describe_dataset(dataset.with_annotations(cohort.truth)).to_dict()
        if cohort.jitter else summary,
        'jitter': {
            'max_shift_minutes': config.cohort.jitter_max_shift,
            'collapsed_episodes': len(cohort.jitter.collapsed) if cohort.jitter else 0,
        },
        'files': files,
    }
    _write_json(out / 'manifest.json', manifest)
    _write_text(out / 'cohort_summary.txt', render_cohort_summary(summary, config.config_hash))
    print(f"✅ Wrote {len(dataset)} windows, realized prevalence {summary['prevalence']:.4f} "
          f"(Normal : Agitation {summary['ratio']})")


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def _featurize_file(path, annotations, cutoff_hz):
    return frame_to_dataset(load_signal_frame(path), annotations, cutoff_hz)


def cmd_features(args, settings):
    signal_dir = Path(args.signals)
    paths = sorted(signal_dir.glob('*.signal.txt'))
    if not paths:
        raise DataError(f"No *.signal.txt files in {signal_dir}")
    annotations = load_annotations(args.annotations) if args.annotations else ()
    n_jobs = args.n_jobs or settings.n_jobs
    parts = Parallel(n_jobs=n_jobs)(delayed(_featurize_file)(path, annotations, args.cutoff_hz) for path in paths)
    dataset = LabeledDataset.concatenate(parts).validate()
    unused = {a.key for a in annotations} - set(dataset.day_keys())
    if unused:
        logger.warning(f"{len(unused)} annotated participant-days have no signal file")
    save_dataset(dataset, args.out)
    print(f"✅ Extracted {len(dataset)} windows from {len(paths)} signal files into {args.out}")


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------

def load_experiment_data(config, n_jobs):
    """
    Dataset of an experiment plus the labels it is evaluated against.

    Returns:
        tuple: (LabeledDataset, truth labels or None)
    """
    if config.dataset:
        dataset = load_dataset(config.dataset, config.annotations)
    else:
        synth = load_synth_config(config.synth_config)
        dataset = build_cohort_dataset(synth.cohort, n_jobs=n_jobs, cutoff_hz=synth.cutoff_hz).dataset
    if config.agitation_days_only:
        dataset = agitation_days_only(dataset)
    truth = None
    if config.truth_annotations:
        truth = label_windows(dataset, load_annotations(config.truth_annotations))
        logger.info(f"Evaluating against {config.truth_annotations} ({int(truth.sum())} agitation windows)")
    return dataset, truth


def _run_index_row(config, spec, result):
    return {
        'config_hash': config.config_hash,
        'label': spec.label,
        'strategy': spec.strategy.value,
        'proportion': spec.proportion,
        'k': spec.k,
        'seed1': config.seed1,
        'seeds2': ';'.join(str(seed) for seed in config.seeds2),
        'n_folds': config.n_folds,
        'mean_auroc': result.mean_auroc,
        'mean_proportion': result.mean_proportion,
    }


def cmd_run(args, settings):
    config = load_experiment_config(args.config, args.set)
    out = _output_dir(args, config.output_dir, settings)
    n_jobs = config.n_jobs or settings.n_jobs
    dataset, truth = load_experiment_data(config, n_jobs)
    plan = make_folds(dataset, config.n_folds, config.seed1)
    threshold = config.threshold or DEFAULT_THRESHOLD
    provenance = {'config_hash': config.config_hash, 'seed1': config.seed1, 'seeds2': list(config.seeds2)}

    ae_cache = {}
    rows = []
    for spec in config.strategy_specs():
        result = run_cv_experiment(
            dataset, spec, config.grid(), config.costs(), config.seed1, config.seeds2, config.n_folds,
            plan=plan, threshold=threshold, truth_labels=truth, n_jobs=n_jobs, ae_cache=ae_cache,
        )
        _write_json(out / f"report_{spec.label}.json", {**provenance, **result.to_dict()})
        _write_json(out / f"timing_{spec.label}.json", {**provenance, **result.timing()})
        rows.append(_run_index_row(config, spec, result))
        print(f"✅ {spec.label}: mean AUROC {result.mean_auroc:.4f} over {len(result.reports)} runs")
    update_run_index(out, rows)
    print(f"📁 Reports written to {out}")


def _sweep_row(row, variant):
    suffix = 'orig' if variant == 'original' else 'ccr'
    return {
        'threshold': row.threshold,
        'precision': getattr(row, f"precision_{suffix}"),
        'recall': getattr(row, f"recall_{suffix}"),
        'f1': getattr(row, f"f1_{suffix}"),
    }


def cmd_sweep(args, settings):
    config = load_experiment_config(args.config, args.set)
    out = _output_dir(args, config.output_dir, settings)
    n_jobs = config.n_jobs or settings.n_jobs
    dataset, truth = load_experiment_data(config, n_jobs)
    truth = dataset.labels if truth is None else truth
    plan = make_folds(dataset, config.n_folds, config.seed1)
    specs = config.strategy_specs()
    if len(specs) > 1:
        logger.warning(f"Sweep uses the first of {len(specs)} configured runs ({specs[0].label})")
    spec = specs[0]
    seed = config.seeds2[0]

    def pooled_scores(strategy_spec):
        result = run_cv_experiment(
            dataset, strategy_spec, config.grid(), config.costs(), config.seed1, (seed,), config.n_folds,
            plan=plan, truth_labels=truth, n_jobs=n_jobs,
        )
        return result.test_scores[seed]

    scores = pooled_scores(spec)
    baseline = pooled_scores(StrategySpec(Strategy.NONE)) if config.sweep_baseline else None
    codes, _ = dataset.group_codes()
    sweep = sweep_thresholds(scores, truth, config.thresholds, config.win, codes, dataset.minute_index, baseline)
    effective = effective_threshold_range(sweep)

    chosen = config.threshold or sweep.best_ccr.threshold
    trace = ccr_relabel_days(scores, codes, CcrParams(config.win, chosen), dataset.minute_index)

    header = [
        f"# config_hash={config.config_hash}",
        f"# strategy={spec.label}",
        f"# seed1={config.seed1}",
        f"# seed2={seed}",
        f"# win={config.win}",
    ]
    table = sweep.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    _write_text(out / 'sweep.csv', '\n'.join(header) + '\n' + table)
    _write_json(out / 'sweep.json', {
        'config_hash': config.config_hash,
        'spec': spec.to_dict(),
        'seed1': config.seed1,
        'seed2': seed,
        'win': config.win,
        'best_original': _sweep_row(sweep.best_original, 'original'),
        'best_ccr': _sweep_row(sweep.best_ccr, 'ccr'),
        'effective_range': effective.to_dict(),
        'confusion': {
            'threshold': chosen,
            'original': confusion(trace.interim, truth).to_dict(),
            'ccr': confusion(trace.labels, truth).to_dict(),
        },
    })
    print(f"✅ Best F1 Original {sweep.best_original.f1_orig:.4f} at Th={sweep.best_original.threshold:g}, "
          f"CCR {sweep.best_ccr.f1_ccr:.4f} at Th={sweep.best_ccr.threshold:g}")
    if effective.is_empty:
        print("ℹ️  No effective CCR threshold range")
    else:
        print(f"✅ Effective CCR threshold range [{effective.lo:g}, {effective.hi:g}]")
        if not effective.contains(sweep.best_ccr.threshold):
            lo, hi = effective.argmax_run
            logger.warning(f"CCR argmax Th={sweep.best_ccr.threshold:g} lies in the shorter run [{lo:g}, {hi:g}]")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args, settings):
    path = write_run_summary(args.run_dir)
    print(path.read_text(encoding='utf-8'))
    print(f"✅ Summary written to {path}")


def build_parser():
    parser = _ArgumentParser(prog='agitationlab', description='Agitation detection undersampling experiments')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True)

    def with_config(sub, required):
        sub.add_argument('--config', required=required, help='KEY=VALUE config file')
        sub.add_argument('--set', action='append', default=[], metavar='KEY=VALUE', help='Override a config key')
        sub.add_argument('--out', help='Output directory')

    synth = commands.add_parser('synth', help='Generate a synthetic cohort dataset')
    with_config(synth, required=False)
    synth.set_defaults(func=cmd_synth)

    features = commands.add_parser('features', help='Extract window features from signal files')
    features.add_argument('--signals', required=True, help='Directory of *.signal.txt files')
    features.add_argument('--annotations', help='Episode annotation CSV')
    features.add_argument('--out', required=True, help='Dataset CSV to write')
    features.add_argument('--cutoff-hz', type=float, default=DEFAULT_CUTOFF_HZ, help='Low-pass cutoff')
    features.add_argument('--n-jobs', type=int, default=None, help='Parallel workers')
    features.set_defaults(func=cmd_features)

    run = commands.add_parser('run', help='Cross-validated strategy comparison')
    with_config(run, required=True)
    run.set_defaults(func=cmd_run)

    sweep = commands.add_parser('sweep', help='Threshold sweep with and without CCR')
    with_config(sweep, required=True)
    sweep.set_defaults(func=cmd_sweep)

    report = commands.add_parser('report', help='Summarize a run directory')
    report.add_argument('run_dir', help='Directory written by run / sweep / synth')
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = get_settings()
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return UsageError.exit_code
    configure_logging(settings.log_level)
    try:
        args.func(args, settings)
    except AgitationLabError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
