"""
Configuration: process settings from the environment, experiment and cohort
settings from flat KEY=VALUE files.
"""

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values, load_dotenv

from agitationlab.autoenc import AeTrainConfig
from agitationlab.decide import DEFAULT_WIN, default_threshold_grid
from agitationlab.errors import AgitationLabError, UsageError
from agitationlab.experiment import StrategySpec
from agitationlab.forest import DEFAULT_N_PREDICTORS, DEFAULT_N_TREES, CostSpec, HyperGrid
from agitationlab.models import Strategy
from agitationlab.resample import WrusParams
from agitationlab.signals import DEFAULT_CUTOFF_HZ
from agitationlab.synth import CohortConfig, cohort_config_from_mapping
from agitationlab.utils import config_hash

# Load environment variables from current directory only
load_dotenv(dotenv_path=os.path.join(os.getcwd(), '.env'))


class ConfigError(UsageError):
    """Invalid or inconsistent configuration"""
    pass


@dataclass(frozen=True)
class Settings:
    log_level: str = 'INFO'
    n_jobs: int = 1
    output_dir: str = 'runs'


def get_settings() -> Settings:
    try:
        n_jobs = int(os.getenv('AGITATIONLAB_N_JOBS', '1'))
    except ValueError:
        raise ConfigError(f"AGITATIONLAB_N_JOBS must be an integer, got {os.getenv('AGITATIONLAB_N_JOBS')!r}")
    return Settings(
        log_level=os.getenv('AGITATIONLAB_LOG_LEVEL', 'INFO').upper(),
        n_jobs=n_jobs,
        output_dir=os.getenv('AGITATIONLAB_OUTPUT_DIR', 'runs'),
    )


# ---------------------------------------------------------------------------
# Value parsing
# ---------------------------------------------------------------------------

def _float_list(key, raw):
    try:
        return tuple(float(v) for v in str(raw).split(',') if v.strip())
    except ValueError:
        raise ConfigError(f"{key} must be a comma separated list of numbers, got {raw!r}") from None


def _int_list(key, raw):
    values = _float_list(key, raw)
    if any(v != int(v) for v in values):
        raise ConfigError(f"{key} must list integers, got {raw!r}")
    return tuple(int(v) for v in values)


def _threshold_grid(key, raw):
    """Either a list or start:stop:step with both ends included"""
    text = str(raw).strip()
    if ':' not in text:
        return _float_list(key, text)
    try:
        start, stop, step = (float(part) for part in text.split(':'))
    except ValueError:
        raise ConfigError(f"{key} must look like start:stop:step, got {raw!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"{key} range {raw!r} is empty")
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


def _float(key, raw):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {raw!r}") from None


def _int(key, raw):
    value = _float(key, raw)
    if value != int(value):
        raise ConfigError(f"{key} must be an integer, got {raw!r}")
    return int(value)


def _bool(key, raw):
    text = str(raw).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off', ''):
        return False
    raise ConfigError(f"{key} must be true or false, got {raw!r}")


def _text(key, raw):
    return str(raw).strip() or None


def parse_overrides(overrides):
    """['KEY=VALUE', ...] -> {'KEY': 'VALUE'}"""
    values = {}
    for item in overrides or ():
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f"Override must look like KEY=VALUE, got {item!r}")
        values[key.strip().upper()] = value.strip()
    return values


def read_config_file(path):
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    return {key.strip().upper(): value for key, value in dotenv_values(path).items() if value is not None}


def _resolve_path(value, base: Optional[Path]):
    if value is None:
        return None
    path = Path(value)
    if not path.is_absolute() and base is not None:
        path = base / path
    return str(path)


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

EXPERIMENT_KEYS = {
    'DATASET': _text,
    'ANNOTATIONS': _text,
    'SYNTH_CONFIG': _text,
    'TRUTH_ANNOTATIONS': _text,
    'AGITATION_DAYS_ONLY': _bool,
    'STRATEGY': _text,
    'PROPORTION': _float_list,
    'K': _float_list,
    'LAMBDA1': _float,
    'LAMBDA2': _float,
    'PIVOT_MINUTES': _float,
    'N_TREES': _int_list,
    'N_PREDICTORS': _int_list,
    'COST_FN': _text,
    'WIN': _int,
    'THRESHOLDS': _threshold_grid,
    'THRESHOLD': _float,
    'SEED1': _int,
    'SEEDS2': _int_list,
    'N_FOLDS': _int,
    'AE_EPOCHS': _int,
    'AE_LEARNING_RATE': _float,
    'AE_BATCH_SIZE': _int,
    'AE_ACTIVATION': _text,
    'SWEEP_BASELINE': _bool,
    'N_JOBS': _int,
    'OUTPUT_DIR': _text,
}
PATH_KEYS = ('DATASET', 'ANNOTATIONS', 'SYNTH_CONFIG', 'TRUTH_ANNOTATIONS', 'OUTPUT_DIR')


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Optional[str] = None
    annotations: Optional[str] = None
    synth_config: Optional[str] = None
    truth_annotations: Optional[str] = None
    agitation_days_only: bool = False
    strategy: Strategy = Strategy.RUS
    proportions: tuple = (1.0,)
    ks: tuple = ()
    wrus_params: WrusParams = field(default_factory=WrusParams)
    n_trees: tuple = DEFAULT_N_TREES
    n_predictors: tuple = DEFAULT_N_PREDICTORS
    cost_fn: Optional[float] = None
    win: int = DEFAULT_WIN
    thresholds: tuple = field(default_factory=default_threshold_grid)
    threshold: Optional[float] = None
    seed1: int = 0
    seeds2: tuple = (0,)
    n_folds: int = 2
    ae_config: AeTrainConfig = field(default_factory=AeTrainConfig)
    sweep_baseline: bool = False
    n_jobs: Optional[int] = None
    output_dir: Optional[str] = None

    def strategy_specs(self):
        """One StrategySpec per batched proportion (or k for aef_iqr)"""
        try:
            if self.strategy is Strategy.AEF_IQR:
                return [StrategySpec(self.strategy, k=k, ae_config=self.ae_config) for k in self.ks]
            return [
                StrategySpec(self.strategy, proportion=p, wrus_params=self.wrus_params)
                for p in self.proportions
            ]
        except AgitationLabError as e:
            raise ConfigError(str(e)) from None

    def grid(self) -> HyperGrid:
        return HyperGrid(self.n_trees, self.n_predictors)

    def costs(self) -> CostSpec:
        return CostSpec(self.cost_fn)

    def to_dict(self):
        info = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (WrusParams,)):
                value = value.to_dict()
            elif isinstance(value, AeTrainConfig):
                value = {g.name: getattr(value, g.name) for g in fields(value)}
            elif isinstance(value, tuple):
                value = list(value)
            info[f.name] = value
        return info

    @property
    def config_hash(self) -> str:
        """Hash of everything that determines results (paths and worker counts excluded)"""
        info = self.to_dict()
        for key in ('output_dir', 'n_jobs'):
            info.pop(key)
        return config_hash(info)


def experiment_config_from_mapping(values, base: Optional[Path] = None) -> ExperimentConfig:
    unknown = sorted(set(values) - set(EXPERIMENT_KEYS))
    if unknown:
        raise ConfigError(f"Unknown experiment settings: {', '.join(unknown)}")
    parsed = {key: EXPERIMENT_KEYS[key](key, raw) for key, raw in values.items()}
    for key in PATH_KEYS:
        if key in parsed:
            parsed[key] = _resolve_path(parsed[key], base)

    try:
        strategy = Strategy.parse(parsed.get('STRATEGY') or 'rus')
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if 'K' in parsed and strategy is not Strategy.AEF_IQR:
        raise ConfigError("K only applies to STRATEGY=aef_iqr")
    if strategy is Strategy.AEF_IQR and not parsed.get('K'):
        raise ConfigError("STRATEGY=aef_iqr needs K")
    if strategy is Strategy.AEF_IQR and 'PROPORTION' in parsed:
        raise ConfigError("PROPORTION does not apply to STRATEGY=aef_iqr (the retained share is measured)")
    if strategy is not Strategy.WRUS and {'LAMBDA1', 'LAMBDA2', 'PIVOT_MINUTES'} & set(parsed):
        raise ConfigError("LAMBDA1, LAMBDA2 and PIVOT_MINUTES only apply to STRATEGY=wrus")
    if strategy is not Strategy.AEF_IQR and any(key.startswith('AE_') for key in parsed):
        raise ConfigError("AE_* settings only apply to STRATEGY=aef_iqr")
    proportions = parsed.get('PROPORTION') or (1.0,)
    if strategy is Strategy.NONE and proportions != (1.0,):
        raise ConfigError("STRATEGY=none always uses PROPORTION=1")
    if bool(parsed.get('DATASET')) == bool(parsed.get('SYNTH_CONFIG')):
        raise ConfigError("Set exactly one of DATASET and SYNTH_CONFIG")

    cost_text = parsed.get('COST_FN')
    cost_fn = None if cost_text in (None, 'auto') else _float('COST_FN', cost_text)

    try:
        config = ExperimentConfig(
            dataset=parsed.get('DATASET'),
            annotations=parsed.get('ANNOTATIONS'),
            synth_config=parsed.get('SYNTH_CONFIG'),
            truth_annotations=parsed.get('TRUTH_ANNOTATIONS'),
            agitation_days_only=parsed.get('AGITATION_DAYS_ONLY', False),
            strategy=strategy,
            proportions=proportions,
            ks=parsed.get('K', ()),
            wrus_params=WrusParams(
                lambda1=parsed.get('LAMBDA1', 1.5),
                lambda2=parsed.get('LAMBDA2', 1.2),
                pivot_minutes=parsed.get('PIVOT_MINUTES', 10.0),
            ),
            n_trees=parsed.get('N_TREES', DEFAULT_N_TREES),
            n_predictors=parsed.get('N_PREDICTORS', DEFAULT_N_PREDICTORS),
            cost_fn=cost_fn,
            win=parsed.get('WIN', DEFAULT_WIN),
            thresholds=parsed.get('THRESHOLDS', default_threshold_grid()),
            threshold=parsed.get('THRESHOLD'),
            seed1=parsed.get('SEED1', 0),
            seeds2=parsed.get('SEEDS2', (0,)),
            n_folds=parsed.get('N_FOLDS', 2),
            ae_config=AeTrainConfig(
                epochs=parsed.get('AE_EPOCHS', 100),
                learning_rate=parsed.get('AE_LEARNING_RATE', 0.01),
                batch_size=parsed.get('AE_BATCH_SIZE', 64),
                activation=parsed.get('AE_ACTIVATION') or 'identity',
            ),
            sweep_baseline=parsed.get('SWEEP_BASELINE', False),
            n_jobs=parsed.get('N_JOBS'),
            output_dir=parsed.get('OUTPUT_DIR'),
        )
        # Fail at load time rather than mid-run
        config.grid()
        config.costs()
        config.strategy_specs()
    except AgitationLabError as e:
        raise ConfigError(str(e)) from None
    if config.win < 1:
        raise ConfigError(f"WIN must be >= 1, got {config.win}")
    if config.n_folds < 2:
        raise ConfigError(f"N_FOLDS must be >= 2, got {config.n_folds}")
    if not config.seeds2:
        raise ConfigError("SEEDS2 must list at least one seed")
    if config.threshold is not None and not 0 < config.threshold < 1:
        raise ConfigError(f"THRESHOLD must lie in (0, 1), got {config.threshold}")
    return config


def load_experiment_config(path=None, overrides=()) -> ExperimentConfig:
    """
    Read an experiment config file and apply KEY=VALUE overrides.

    Relative paths in the file are taken relative to the file; relative paths
    given as overrides are taken relative to the working directory.
    """
    base = Path(path).resolve().parent if path else None
    file_values = read_config_file(path)
    override_values = parse_overrides(overrides)
    for key in PATH_KEYS:
        if key in file_values and key not in override_values:
            file_values[key] = _resolve_path(str(file_values[key]).strip() or None, base)
    return experiment_config_from_mapping({**file_values, **override_values})


# ---------------------------------------------------------------------------
# Synthetic cohort configuration
# ---------------------------------------------------------------------------

SYNTH_EXTRA_KEYS = {'CUTOFF_HZ', 'WRITE_SIGNALS', 'N_JOBS', 'OUTPUT_DIR'}


@dataclass(frozen=True)
class SynthConfig:
    cohort: CohortConfig
    cutoff_hz: float = DEFAULT_CUTOFF_HZ
    write_signals: bool = False
    n_jobs: Optional[int] = None
    output_dir: Optional[str] = None

    def to_dict(self):
        return {'cohort': self.cohort.to_dict(), 'cutoff_hz': self.cutoff_hz}

    @property
    def config_hash(self) -> str:
        return config_hash(self.to_dict())


def load_synth_config(path=None, overrides=()) -> SynthConfig:
    values = {**read_config_file(path), **parse_overrides(overrides)}
    extras = {key: values.pop(key) for key in list(values) if key in SYNTH_EXTRA_KEYS}
    cohort = cohort_config_from_mapping(values)
    output_dir = _text('OUTPUT_DIR', extras['OUTPUT_DIR']) if 'OUTPUT_DIR' in extras else None
    if output_dir and path:
        output_dir = _resolve_path(output_dir, Path(path).resolve().parent)
    return SynthConfig(
        cohort=cohort,
        cutoff_hz=_float('CUTOFF_HZ', extras['CUTOFF_HZ']) if 'CUTOFF_HZ' in extras else DEFAULT_CUTOFF_HZ,
        write_signals=_bool('WRITE_SIGNALS', extras.get('WRITE_SIGNALS', 'false')),
        n_jobs=_int('N_JOBS', extras['N_JOBS']) if 'N_JOBS' in extras else None,
        output_dir=output_dir,
    )
