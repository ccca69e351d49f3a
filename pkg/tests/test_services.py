"""
Experiment runner and CSV / summary export
"""

import json
import math

import numpy as np
import pytest

from app.errors import ResolutionError
from app.models.experiment import ExperimentKind, load_config, parse_config
from app.services import export_service
from app.services.experiment_service import run_experiment


RIEMANN = """
[riemann]
rho_l = 1.0
u_l = 2.0
rho_r = 1.0
u_r = 0.0
"""


def read_summary(directory):
    with open(directory / 'summary.json', encoding='utf-8') as handle:
        return json.load(handle)


# ============================================================================
# EXPORT
# ============================================================================

def test_format_value():
    assert export_service.format_value(3) == '3'
    assert export_service.format_value(np.int64(7)) == '7'
    assert export_service.format_value(True) == '1'
    assert export_service.format_value(0.1) == '0.10000000000000001'
    assert export_service.format_value(0.1, digits=6) == '0.1'
    assert export_service.format_value(math.nan) == 'nan'


def test_csv_uses_lf_line_endings(tmp_path):
    path = export_service.write_csv(tmp_path / 'nested' / 'rows.csv', ('x', 'value'), [(0.5, 1), (1.5, 2)])
    raw = path.read_bytes()
    assert b'\r\n' not in raw
    assert raw.decode('utf-8').splitlines() == ['x,value', '0.5,1', '1.5,2']


def test_summary_writes_null_for_non_finite(tmp_path):
    path = export_service.write_summary(tmp_path, {'a': math.inf, 'b': [1.0, math.nan], 'c': np.float64(2.5), 'd': np.bool_(True)})
    data = json.loads(path.read_text(encoding='utf-8'))
    assert data == {'a': None, 'b': [1.0, None], 'c': 2.5, 'd': True}


def test_copy_config_into_its_own_directory_is_a_no_op(tmp_path):
    source = tmp_path / 'run.toml'
    source.write_text('[experiment]\n', encoding='utf-8')
    assert export_service.copy_config(source, tmp_path) == source
    copied = export_service.copy_config(source, tmp_path / 'out')
    assert copied.read_text(encoding='utf-8') == '[experiment]\n'


# ============================================================================
# EXPERIMENTS
# ============================================================================

def test_riemann_exact_experiment(settings, configs_dir, tmp_path):
    cfg, _ = load_config(configs_dir / 'riemann_exact.toml')
    report = run_experiment(cfg, settings, output_dir=tmp_path, config_path=configs_dir / 'riemann_exact.toml')

    assert report.passed
    assert report.checks == {'mass_balance': True, 'lax_entropy': True}
    assert report.metrics['delta_mass'] == pytest.approx(2.0)
    assert (tmp_path / 'exact.csv').exists()
    assert (tmp_path / 'riemann_exact.toml').exists()

    summary = read_summary(tmp_path)
    assert summary['pass'] is True
    assert summary['kind'] == 'riemann-exact'
    assert summary['metrics']['solution']['sigma'] == pytest.approx(1.0)
    assert summary['error'] is None


def test_exact_csv_rows(settings, tmp_path):
    cfg = parse_config('[experiment]\nkind = "riemann-exact"\n' + RIEMANN + '[grid]\nx_lo = -1.0\nx_hi = 3.0\nn = 5\n')
    run_experiment(cfg, settings, output_dir=tmp_path)
    lines = (tmp_path / 'exact.csv').read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'x,rho,u,on_shock'
    assert len(lines) == 6


def test_filtered_profile_experiment(settings, configs_dir, tmp_path):
    cfg, _ = load_config(configs_dir / 'filtered_profile.toml')
    report = run_experiment(cfg, settings, output_dir=tmp_path)
    assert report.passed, report.metrics
    assert report.metrics['dx'] == pytest.approx(0.1 / 16)
    assert (tmp_path / 'profile.csv').exists()


def test_periodic_eulerian_experiment(settings, tmp_path):
    cfg = parse_config("""
[experiment]
kind = "eulerian-run"

[kernel]
alpha = 0.2

[initial]
preset = "-sin"
amplitude = 0.5
u_shift = 1.0

[grid]
x_lo = 0.0
x_hi = 6.283185307179586
n = 128
periodic = true

[time]
t_end = 0.5
cfl = 0.5
output_every = 0.25
""")
    report = run_experiment(cfg, settings, output_dir=tmp_path)
    assert report.kind is ExperimentKind.EULERIAN_RUN
    assert report.checks == {
        'clipping_audit': True,
        'maximum_principle': True,
        'mass_conserved': True,
        'observable_flux_balance': True,
    }
    assert report.metrics['observable_balance'] <= 1e-10
    assert (tmp_path / 'diagnostics.csv').exists()


SWEEP = """
[experiment]
kind = "alpha-sweep"

[kernel]
alphas = [0.2, 0.1]

[grid]
sizes = [{sizes}]

[time]
t_end = 0.6
fit_start = 0.2
fit_end = 0.6
"""


def test_matched_sweep_skips_the_improvement_checks(settings, tmp_path):
    report = run_experiment(parse_config(SWEEP.format(sizes='400, 400') + RIEMANN), settings, output_dir=tmp_path)
    assert set(report.checks) == {'finest_slope', 'front_speed_independent_of_alpha'}
    assert report.metrics['matched_resolution'] is True


def test_refining_sweep_checks_error_improvement(settings, tmp_path):
    report = run_experiment(parse_config(SWEEP.format(sizes='200, 400') + RIEMANN), settings, output_dir=tmp_path)
    assert {'velocity_error_improves', 'slope_error_improves'} <= set(report.checks)
    assert report.metrics['matched_resolution'] is False
    assert (tmp_path / 'sweep.csv').exists()


def test_solver_error_is_recorded_and_raised(settings, tmp_path):
    cfg = parse_config('[experiment]\nkind = "eulerian-run"\n' + RIEMANN + '[kernel]\nalpha = 0.1\n[grid]\nn = 8\n')
    with pytest.raises(ResolutionError):
        run_experiment(cfg, settings, output_dir=tmp_path)
    summary = read_summary(tmp_path)
    assert summary['pass'] is False
    assert summary['error']['error'] == 'ResolutionError'
    assert summary['error']['exit_code'] == 2


@pytest.mark.slow
@pytest.mark.parametrize('name', [
    'characteristics',
    'broad_solve',
    'verify_theorem3',
    'verify_theorem3_data2',
    'verify_theorem3_data3',
    'eulerian_run',
    'eulerian_fine',
    'eulerian_periodic',
    'alpha_sweep',
    'alpha_sweep_matched',
])
def test_shipped_experiments_pass(settings, configs_dir, tmp_path, name):
    cfg, _ = load_config(configs_dir / f'{name}.toml')
    report = run_experiment(cfg, settings, output_dir=tmp_path)
    assert report.passed, report.failed_checks()
