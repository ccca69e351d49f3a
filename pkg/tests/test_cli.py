"""
Command-line surface and exit codes
"""

import json

import pytest
from click.testing import CliRunner

from app.cli import lab
from app.models.experiment import ExperimentKind
from app.services.experiment_service import ExperimentReport


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(lab, ['--env', 'testing', *[str(a) for a in args]])


def test_presets_listing(runner):
    result = invoke(runner, 'presets')
    assert result.exit_code == 0
    assert 'Kernels:' in result.output
    assert 'helmholtz' in result.output
    assert '-tanh' in result.output
    assert 'alpha-sweep' in result.output


def test_presets_as_json(runner):
    result = invoke(runner, 'presets', '--json')
    assert result.exit_code == 0
    listing = json.loads(result.output)
    assert 'gaussian' in listing['kernels']


def test_validate_accepts_shipped_config(runner, configs_dir):
    result = invoke(runner, 'validate', configs_dir / 'alpha_sweep.toml')
    assert result.exit_code == 0
    assert 'valid alpha-sweep config' in result.output


def test_validate_reports_field_paths(runner, tmp_path):
    path = tmp_path / 'bad.toml'
    path.write_text('[experiment]\nkind = "filtered-profile"\n[kernel]\nalpha = -1.0\n', encoding='utf-8')
    result = invoke(runner, 'validate', path)
    assert result.exit_code == 1
    assert 'kernel.alpha' in result.output


def test_run_writes_outputs(runner, configs_dir, tmp_path):
    result = invoke(runner, 'run', configs_dir / 'riemann_exact.toml', '--output', tmp_path)
    assert result.exit_code == 0, result.output
    assert '✓ mass_balance' in result.output
    assert (tmp_path / 'summary.json').exists()
    assert (tmp_path / 'exact.csv').exists()


def test_solver_error_exits_two(runner, tmp_path):
    path = tmp_path / 'coarse.toml'
    path.write_text(
        '[experiment]\nkind = "eulerian-run"\n'
        '[kernel]\nalpha = 0.1\n'
        '[riemann]\nrho_l = 1.0\nu_l = 2.0\nrho_r = 1.0\nu_r = 0.0\n'
        '[grid]\nn = 8\n',
        encoding='utf-8',
    )
    result = invoke(runner, 'run', path, '--output', tmp_path / 'out')
    assert result.exit_code == 2
    assert 'ResolutionError' in result.output


def test_failed_checks_exit_three(runner, configs_dir, tmp_path, monkeypatch):
    def failing(cfg, settings, output_dir=None, config_path=None):
        return ExperimentReport(ExperimentKind.EULERIAN_RUN, tmp_path, checks={'front_speed': False, 'mass_slope': True})

    monkeypatch.setattr('app.cli.run_experiment', failing)
    result = invoke(runner, 'run', configs_dir / 'eulerian_run.toml')
    assert result.exit_code == 3
    assert '✗ front_speed' in result.output


def test_missing_config_is_a_usage_error(runner, tmp_path):
    result = invoke(runner, 'run', tmp_path / 'absent.toml')
    assert result.exit_code == 2
