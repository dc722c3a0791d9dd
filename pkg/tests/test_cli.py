# tests/test_cli.py

import json
import os

import numpy as np
import pytest

from cli.commands import run
from data.result_files import read_json, write_curve
from kinetics.models import RateConstants
from kinetics.rate_equations import count_rate, derived_from_rates, g2_analytic
from photon_sim.models import G2Curve


def test_zero_duration_is_config_error(tmp_path):
    code = run(['simulate', '--seed', '1', '--out', str(tmp_path), '--set', 'simulation.duration_s=0'])
    assert code == 2


def test_pipeline_needs_three_powers(tmp_path):
    code = run(['pipeline', '--seed', '1', '--out', str(tmp_path), '--set', 'power_ladder_mW=[1.0, 2.0]'])
    assert code == 2


def test_stochastic_command_needs_seed(tmp_path):
    assert run(['simulate', '--out', str(tmp_path)]) == 2


def test_unknown_preset(tmp_path, capsys):
    code = run(['simulate', '--seed', '1', '--out', str(tmp_path), '--set', 'power_model_preset=ruby'])
    assert code == 2
    assert 'nv_532nm' in capsys.readouterr().err


def test_missing_input_is_file_error(tmp_path):
    assert run(['analyze', '--out', str(tmp_path), str(tmp_path / 'absent.csv')]) == 4


def test_short_curve_is_rejected(tmp_path):
    path = str(tmp_path / 'short.csv')
    write_curve(path, G2Curve(np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.8, 0.9]), np.full(3, 0.05)))
    assert run(['analyze', '--out', str(tmp_path / 'out'), path]) == 2


def test_invert_from_derived(tmp_path, reference_rates):
    derived = derived_from_rates(reference_rates)
    code = run(['invert', '--out', str(tmp_path),
                '--g-e', repr(derived.g_e), '--k-tm', repr(derived.k_tm), '--k-1m', repr(derived.k_1m),
                '--sigma2-inf', repr(derived.sigma2_inf)])
    assert code == 0
    rates = RateConstants.from_dict(read_json(str(tmp_path / 'rates.json'))['rates'])
    np.testing.assert_allclose(rates.as_array(), reference_rates.as_array(), rtol=1e-9)


def test_invert_ambiguous_without_hint(tmp_path, reference_rates):
    derived = derived_from_rates(reference_rates)
    code = run(['invert', '--out', str(tmp_path),
                '--g-e', repr(derived.g_e), '--k-tm', repr(derived.k_tm), '--k-1m', repr(derived.k_1m),
                '--brightness', repr(count_rate(reference_rates, 3e-3)), '--eta', '3e-3'])
    assert code == 3


def test_analyze_curve_to_rates(tmp_path, reference_rates):
    tau = np.arange(-499.5, 500.0, 1.0)
    path = str(tmp_path / 'curve.csv')
    write_curve(path, G2Curve(tau, g2_analytic(reference_rates, np.abs(tau)), np.full(tau.size, 1e-3),
                              bin_width_ns=1.0))
    out = tmp_path / 'out'
    code = run(['analyze', '--out', str(out), path, '--eta', '3e-3', '--k21-hint', '0.0862',
                '--brightness', repr(count_rate(reference_rates, 3e-3))])
    assert code == 0
    fit = read_json(str(out / 'g2_fit.json'))['fit']
    assert fit['converged']
    rates = RateConstants.from_dict(read_json(str(out / 'rates.json'))['rates'])
    np.testing.assert_allclose(rates.as_array(), reference_rates.as_array(), rtol=1e-4)


def test_simulate_writes_one_file_per_power(tmp_path):
    code = run(['simulate', '--seed', '7', '--out', str(tmp_path),
                '--set', 'simulation.duration_s=0.01', '--set', 'power_ladder_mW=[1.0, 8.0, 16.0]'])
    assert code == 0
    summary = read_json(str(tmp_path / 'simulation_summary.json'))
    assert [run_['power_mW'] for run_ in summary['runs']] == [1.0, 8.0, 16.0]
    for run_ in summary['runs']:
        assert os.path.exists(tmp_path / run_['events_file'])
        assert run_['events'] > 0
    assert len({run_['seed'] for run_ in summary['runs']}) == 3


def test_simulate_then_correlate(tmp_path):
    assert run(['simulate', '--seed', '3', '--out', str(tmp_path), '--set', 'simulation.duration_s=0.05',
                '--set', 'power_model_preset=', '--set', 'simulation.event_format=csv']) == 0
    events = str(tmp_path / 'events.csv')
    assert run(['correlate', '--out', str(tmp_path), '--bin-width', '2', '--tau-min', '-100',
                '--tau-max', '100', events]) == 0
    assert os.path.exists(tmp_path / 'histogram_events.csv')
    assert os.path.exists(tmp_path / 'g2_raw_events.csv')


def test_simulate_is_reproducible(tmp_path):
    outputs = []
    for name in ('first', 'second'):
        out = tmp_path / name
        assert run(['simulate', '--seed', '11', '--out', str(out), '--set', 'simulation.duration_s=0.02',
                    '--set', 'power_ladder_mW=[1.0, 8.0, 31.0]']) == 0
        outputs.append(out)

    files = sorted(path.name for path in outputs[0].glob('events_*'))
    assert len(files) == 3
    for name in files:
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_commands_print_one_result_line(tmp_path, capsys):
    assert run(['simulate', '--seed', '5', '--out', str(tmp_path), '--set', 'simulation.duration_s=0.01',
                '--set', 'power_ladder_mW=[1.0, 8.0, 16.0]']) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith('simulated 3 event files')


@pytest.mark.slow
def test_pipeline_report_is_reproducible(tmp_path):
    reports = []
    for name in ('first', 'second'):
        out = tmp_path / name
        assert run(['pipeline', '--seed', '19', '--out', str(out), '--set', 'simulation.duration_s=4',
                    '--set', 'power_ladder_mW=[2.0, 4.0, 8.0, 16.0, 31.0]', '--set', 'analysis.eta=0.003',
                    '--set', 'analysis.k21_hint=0.0862']) == 0
        report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
        report['provenance'].pop('created_at')
        reports.append(json.dumps(report, sort_keys=True))
    assert reports[0] == reports[1]
