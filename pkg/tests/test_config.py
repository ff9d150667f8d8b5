from pathlib import Path

import pytest

from agitationlab.config import (
    ConfigError,
    get_settings,
    load_experiment_config,
    load_synth_config,
    parse_overrides,
)
from agitationlab.errors import UsageError
from agitationlab.models import Strategy


@pytest.fixture
def config_file(tmp_path):
    def write(text, name='run.cfg'):
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return path
    return write


def test_minimal_config_uses_defaults():
    config = load_experiment_config(None, ['SYNTH_CONFIG=cohort.cfg'])
    assert config.strategy is Strategy.RUS
    assert config.proportions == (1.0,)
    assert config.n_trees == (30, 50, 70, 90, 110)
    assert config.n_predictors[:3] == (1, 4, 7)
    assert config.win == 5
    assert len(config.thresholds) == 99
    assert config.seeds2 == (0,)
    assert config.n_folds == 2
    assert config.cost_fn is None


def test_file_paths_are_relative_to_the_file(config_file, tmp_path):
    path = config_file('# comment\nDATASET=data/cohort.csv\nSTRATEGY=wrus\nPROPORTION=0.2,0.5\n')
    config = load_experiment_config(path)
    assert Path(config.dataset) == tmp_path.resolve() / 'data' / 'cohort.csv'
    assert [spec.label for spec in config.strategy_specs()] == ['wrus_p0.2', 'wrus_p0.5']


def test_override_paths_stay_relative_to_the_working_directory(config_file):
    path = config_file('DATASET=data/cohort.csv\n')
    config = load_experiment_config(path, ['DATASET=elsewhere.csv'])
    assert config.dataset == 'elsewhere.csv'


def test_overrides_win_over_the_file(config_file):
    path = config_file('SYNTH_CONFIG=c.cfg\nSEED1=3\nSEEDS2=1,2\n')
    config = load_experiment_config(path, ['seed1=9'])
    assert config.seed1 == 9
    assert config.seeds2 == (1, 2)


def test_threshold_range_syntax():
    config = load_experiment_config(None, ['SYNTH_CONFIG=c.cfg', 'THRESHOLDS=0.1:0.3:0.1'])
    assert config.thresholds == (0.1, 0.2, 0.3)


@pytest.mark.parametrize('raw, expected', [('auto', None), ('19', 19.0)])
def test_cost_fn(raw, expected):
    config = load_experiment_config(None, ['SYNTH_CONFIG=c.cfg', f'COST_FN={raw}'])
    assert config.cost_fn == expected
    assert config.costs().cost_fn == expected


def test_aef_batches_over_k():
    config = load_experiment_config(None, ['SYNTH_CONFIG=c.cfg', 'STRATEGY=aef_iqr', 'K=0.5,1.5', 'AE_EPOCHS=20'])
    specs = config.strategy_specs()
    assert [spec.label for spec in specs] == ['aef_iqr_k0.5', 'aef_iqr_k1.5']
    assert specs[0].ae_config.epochs == 20


@pytest.mark.parametrize('overrides, message', [
    (['SYNTH_CONFIG=c.cfg', 'SEEDS=1'], 'Unknown'),
    (['SYNTH_CONFIG=c.cfg', 'DATASET=d.csv'], 'exactly one'),
    ([], 'exactly one'),
    (['SYNTH_CONFIG=c.cfg', 'STRATEGY=aef_iqr'], 'needs K'),
    (['SYNTH_CONFIG=c.cfg', 'K=1.5'], 'only applies'),
    (['SYNTH_CONFIG=c.cfg', 'STRATEGY=aef_iqr', 'K=1', 'PROPORTION=0.5'], 'PROPORTION'),
    (['SYNTH_CONFIG=c.cfg', 'LAMBDA1=2'], 'wrus'),
    (['SYNTH_CONFIG=c.cfg', 'AE_EPOCHS=5'], 'aef_iqr'),
    (['SYNTH_CONFIG=c.cfg', 'STRATEGY=none', 'PROPORTION=0.5'], 'PROPORTION=1'),
    (['SYNTH_CONFIG=c.cfg', 'STRATEGY=smote'], 'Unknown strategy'),
    (['SYNTH_CONFIG=c.cfg', 'PROPORTION=1.5'], 'proportion'),
    (['SYNTH_CONFIG=c.cfg', 'COST_FN=0.5'], 'cost_fn'),
    (['SYNTH_CONFIG=c.cfg', 'N_PREDICTORS=80'], 'n_predictors'),
    (['SYNTH_CONFIG=c.cfg', 'WIN=0'], 'WIN'),
    (['SYNTH_CONFIG=c.cfg', 'N_FOLDS=1'], 'N_FOLDS'),
    (['SYNTH_CONFIG=c.cfg', 'THRESHOLD=1.5'], 'THRESHOLD'),
    (['SYNTH_CONFIG=c.cfg', 'SEED1=abc'], 'SEED1'),
    (['SYNTH_CONFIG=c.cfg', 'N_TREES=10.5'], 'integers'),
    (['SYNTH_CONFIG=c.cfg', 'THRESHOLDS=0.5:0.1:0.1'], 'empty'),
])
def test_invalid_settings(overrides, message):
    with pytest.raises(ConfigError, match=message):
        load_experiment_config(None, overrides)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match='not found'):
        load_experiment_config(tmp_path / 'missing.cfg')


def test_override_syntax():
    assert parse_overrides(['a=1', 'B = x=y']) == {'A': '1', 'B': 'x=y'}
    with pytest.raises(ConfigError):
        parse_overrides(['NOVALUE'])


def test_config_hash_ignores_output_and_workers():
    base = ['SYNTH_CONFIG=c.cfg', 'PROPORTION=0.2']
    reference = load_experiment_config(None, base).config_hash
    assert load_experiment_config(None, base + ['OUTPUT_DIR=elsewhere', 'N_JOBS=4']).config_hash == reference
    assert load_experiment_config(None, base + ['SEED1=1']).config_hash != reference
    assert len(reference) == 64


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv('AGITATIONLAB_LOG_LEVEL', 'debug')
    monkeypatch.setenv('AGITATIONLAB_N_JOBS', '3')
    monkeypatch.setenv('AGITATIONLAB_OUTPUT_DIR', 'out')
    settings = get_settings()
    assert (settings.log_level, settings.n_jobs, settings.output_dir) == ('DEBUG', 3, 'out')


def test_bad_worker_count(monkeypatch):
    monkeypatch.setenv('AGITATIONLAB_N_JOBS', 'many')
    with pytest.raises(ConfigError):
        get_settings()


class TestSynthConfig:
    def test_cohort_and_extras(self, config_file):
        path = config_file('N_PARTICIPANTS=2\nWEAR_HOURS=1\nWRITE_SIGNALS=true\nCUTOFF_HZ=8\n', 'cohort.cfg')
        config = load_synth_config(path, ['SEED=4'])
        assert config.cohort.n_participants == 2
        assert config.cohort.wear_hours == 1.0
        assert config.cohort.seed == 4
        assert config.write_signals is True
        assert config.cutoff_hz == 8.0

    def test_hash_ignores_extras(self):
        plain = load_synth_config(None, ['N_PARTICIPANTS=2'])
        noisy = load_synth_config(None, ['N_PARTICIPANTS=2', 'WRITE_SIGNALS=true', 'N_JOBS=2'])
        assert plain.config_hash == noisy.config_hash
        assert load_synth_config(None, ['N_PARTICIPANTS=3']).config_hash != plain.config_hash

    def test_unknown_cohort_key(self):
        with pytest.raises(UsageError, match='Unknown'):
            load_synth_config(None, ['N_PATIENTS=2'])
