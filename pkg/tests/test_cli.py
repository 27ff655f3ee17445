import asyncio
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import qrng
from qrng.cli import tools as tls
from qrng.cli.handlers import run_analyze, run_extract
from qrng.configurator import ExperimentConfigurator
from qrng.model.adc_model import AdcConfig, enob, quantize
from qrng.model.entropy_reduction import (
    UNTRUSTED, CurveRow, GammaCurve, ReductionReport, b_to_gamma_curve, curve_gamma_nq, gamma_enob, is_untrusted,
    sweep_config
    )
from qrng.model.exception import DataFormatError, UntrustedSourceError
from qrng.model.extractors import BitBuffer, ExtractorConfig, generate_seed, monobit
from qrng.model.pdf_estimation import QuantumPdfParams, sample_quantum
from qrng.model.signal_model import PulseInterferenceConfig
from qrng.model.simulation import simulate_integral_signal, simulate_waveform_signal

CONFIG_TEXT = '''
experiments:
  lab:
    extractor:
      block_len: 256
    run:
      mc_samples: 20000
      rng_seed: 3
'''


def report_with(gamma) -> ReductionReport:
    return ReductionReport(
        h_inf=None, h_inf_q=4.65, p_max=0.04, gamma_classical=1.0, gamma_comparator=1.0,
        gamma_adc_strict=None, gamma_adc_relaxed=None, gamma_nq=1.72, gamma_enob=1.11,
        gamma_total=gamma, b_value=None
        )


def fair_codes(size: int, n: int = 8, seed: int = 1) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2 ** n, size)


def arcsine_codes(size: int, n: int = 8) -> np.ndarray:
    values = sample_quantum(np.random.default_rng(2), QuantumPdfParams(0.0, 1.0), size)

    return quantize(values, AdcConfig(n=n))


@pytest.fixture
def workspace(tmp_path):
    config = tmp_path.joinpath('qrng_config.yaml')
    config.write_text(CONFIG_TEXT, encoding='utf-8')
    samples = tmp_path.joinpath('samples.csv')
    samples.write_text(tls.samples_to_csv(fair_codes(4000), 8), encoding='utf-8')
    report = tmp_path.joinpath('report.txt')
    report.write_text(report_with(2.0).to_key_value(), encoding='utf-8')

    return tmp_path, config, samples, report


def test_samples_csv():
    codes = np.array([0, 5, 255])
    n, restored = tls.samples_from_csv(tls.samples_to_csv(codes, 8))

    assert n == 8
    assert_array_equal(restored, codes)


def test_samples_csv_reports_line():
    with pytest.raises(DataFormatError) as error:
        tls.samples_from_csv('# n=8\n1\nbad\n')

    assert error.value.line == 3


def test_samples_csv_code_out_of_range():
    with pytest.raises(DataFormatError):
        tls.samples_from_csv('# n=2\n1\n5\n')


def test_samples_csv_header_conflict():
    with pytest.raises(DataFormatError) as error:
        tls.samples_from_csv('# n=10\n1\n', 8)

    assert error.value.line == 1


def test_samples_csv_header_agrees():
    n, codes = tls.samples_from_csv('# n=8\n1\n200\n', 8)

    assert n == 8
    assert_array_equal(codes, [1, 200])


def test_samples_read_csv_bits_conflict(tmp_path):
    plain = tmp_path.joinpath('codes.csv')
    plain.write_text(tls.samples_to_csv(fair_codes(50, n=10), 10), encoding='utf-8')

    with pytest.raises(DataFormatError):
        asyncio.run(tls.samples_read(plain, 8))


def test_samples_binary():
    codes = fair_codes(100, n=12)
    n, restored = tls.samples_from_binary(tls.samples_to_binary(codes, 12))

    assert n == 12
    assert_array_equal(restored, codes)


def test_samples_binary_truncated():
    data = tls.samples_to_binary(fair_codes(100), 8)

    with pytest.raises(DataFormatError):
        tls.samples_from_binary(data[:-3])


def test_samples_binary_too_wide():
    with pytest.raises(DataFormatError):
        tls.samples_to_binary(np.array([1]), 17)


def test_samples_read_formats(tmp_path):
    codes = fair_codes(500, n=10)
    binary = tmp_path.joinpath('codes.bin')
    binary.write_bytes(tls.samples_to_binary(codes, 10))
    plain = tmp_path.joinpath('codes.csv')
    plain.write_text('\n'.join(str(code) for code in codes), encoding='utf-8')

    n, from_binary = asyncio.run(tls.samples_read(binary))
    m, from_csv = asyncio.run(tls.samples_read(plain, 10))

    assert n == m == 10
    assert_array_equal(from_binary, codes)
    assert_array_equal(from_csv, codes)


def test_samples_read_needs_bits(tmp_path):
    plain = tmp_path.joinpath('codes.csv')
    plain.write_text('1\n2\n', encoding='utf-8')

    with pytest.raises(DataFormatError):
        asyncio.run(tls.samples_read(plain))


def test_samples_read_bits_conflict(tmp_path):
    binary = tmp_path.joinpath('codes.bin')
    binary.write_bytes(tls.samples_to_binary(np.array([1, 2]), 8))

    with pytest.raises(DataFormatError):
        asyncio.run(tls.samples_read(binary, 10))


def test_seed_bytes():
    seed = generate_seed(BitBuffer.from_bits(np.random.default_rng(3).integers(0, 2, 4000)), 777)
    restored = tls.seed_from_bytes(tls.seed_to_bytes(seed))

    assert restored.bits == seed.bits
    assert restored.consumed_raw == seed.consumed_raw


@pytest.mark.parametrize('cut', [4, 25])
def test_seed_bytes_corrupted(cut):
    seed = generate_seed(BitBuffer.from_bits(np.random.default_rng(3).integers(0, 2, 4000)), 777)

    with pytest.raises(DataFormatError):
        tls.seed_from_bytes(tls.seed_to_bytes(seed)[:cut])


def test_extract_writes_and_replays(tmp_path):
    codes = fair_codes(20_000)
    cfg = ExtractorConfig(block_len=1024)
    writer = tls.ArtifactWriter(tmp_path)

    out, seed = asyncio.run(run_extract(codes, 8, report_with(2.0), cfg, writer, name='run'))

    assert len(out) == (8 * len(codes) - seed.consumed_raw) // 1024 * 512
    assert tmp_path.joinpath('run_bits.bin').read_bytes() == out.data
    assert 'output_bits=' in tmp_path.joinpath('run_bits.txt').read_text(encoding='utf-8')

    saved = tls.seed_from_bytes(tmp_path.joinpath('run_seed.seed').read_bytes())
    replay, _ = asyncio.run(run_extract(codes, 8, report_with(2.0), cfg, seed=saved))

    assert replay == out


def test_extract_untrusted_writes_nothing(tmp_path):
    writer = tls.ArtifactWriter(tmp_path)

    with pytest.raises(UntrustedSourceError):
        asyncio.run(run_extract(fair_codes(20_000), 8, report_with(UNTRUSTED), ExtractorConfig(1024), writer))

    assert list(tmp_path.iterdir()) == []


def test_analyze_uses_curve(tmp_path):
    g_nq = curve_gamma_nq(8)
    curve = GammaCurve([CurveRow(1.0, g_nq, 8, 0.05, 0.0), CurveRow(3.0, 3 * g_nq, 8, 0.05, 0.04)])
    writer = tls.ArtifactWriter(tmp_path)

    report = asyncio.run(run_analyze(arcsine_codes(200_000), 8, AdcConfig(n=8, sinad_db=45.0), curve, writer, 'lab'))

    assert 1.0 <= report.b_value < 1.1
    assert report.gamma_total == pytest.approx(curve.lookup(report.b_value) * report.gamma_enob)
    assert report.gamma_comparator >= 1.0

    saved = ReductionReport.from_key_value(tmp_path.joinpath('lab_report.txt').read_text(encoding='utf-8'))
    assert saved.gamma_total == report.gamma_total
    assert tmp_path.joinpath('lab_histogram.csv').exists()


def test_starter_extract(workspace):
    tmp_path, config, samples, report = workspace
    output = tmp_path.joinpath('out')

    code = qrng.starter(['--config', str(config), 'extract', str(samples), '--report', str(report), '-o', str(output)])

    assert code == qrng.EXIT_OK
    assert output.joinpath('samples_bits.bin').exists()
    assert output.joinpath('samples_seed.seed').exists()


def test_starter_bad_config(workspace):
    tmp_path, *_ = workspace
    config = tmp_path.joinpath('broken.yaml')
    config.write_text('experiments:\n  lab:\n    adc:\n      n: 4\n', encoding='utf-8')

    assert qrng.starter(['--config', str(config), 'simulate', '-o', str(tmp_path)]) == qrng.EXIT_CONFIG


def test_starter_untrusted(workspace):
    tmp_path, config, samples, report = workspace
    report.write_text(report_with(UNTRUSTED).to_key_value(), encoding='utf-8')
    output = tmp_path.joinpath('out')

    code = qrng.starter(['--config', str(config), 'extract', str(samples), '--report', str(report), '-o', str(output)])

    assert code == qrng.EXIT_UNTRUSTED
    assert not output.exists()


def test_starter_corrupted_samples(workspace):
    tmp_path, config, samples, report = workspace
    samples.write_text('# n=8\n1\n2\nbad\n', encoding='utf-8')

    code = qrng.starter(['--config', str(config), 'extract', str(samples), '--report', str(report), '-o', str(tmp_path)])

    assert code == qrng.EXIT_DATA


def test_starter_missing_samples(workspace):
    tmp_path, config, _, report = workspace
    missing = tmp_path.joinpath('absent.csv')

    code = qrng.starter(['--config', str(config), 'extract', str(missing), '--report', str(report), '-o', str(tmp_path)])

    assert code == qrng.EXIT_DATA


def test_starter_simulate(workspace, capsys):
    tmp_path, config, _, _ = workspace
    output = tmp_path.joinpath('out')

    assert qrng.starter(['--config', str(config), 'simulate', '-o', str(output)]) == qrng.EXIT_OK

    for name in ('lab_histogram.csv', 'lab_report.txt', 'lab_manifest.yaml'):
        assert output.joinpath(name).exists()

    assert 'gamma_total=' in capsys.readouterr().out


@pytest.mark.slow
def test_starter_figures_fig2(tmp_path):
    config = tmp_path.joinpath('qrng_config.yaml')
    config.write_text(
        'experiments:\n  fig2:\n    noise:\n      sigma_zeta: 0.02\n    run:\n      mc_samples: 20000\n', encoding='utf-8'
        )
    output = tmp_path.joinpath('out')

    assert qrng.starter(['--config', str(config), 'figures', '-o', str(output)]) == qrng.EXIT_OK
    assert output.joinpath('fig2_pulse.csv').exists()
    assert len(list(output.glob('fig2_pdf_*.csv'))) == 6
    assert output.joinpath('fig2_manifest.yaml').exists()


def test_starter_runs_every_experiment(tmp_path):
    config = tmp_path.joinpath('qrng_config.yaml')
    config.write_text(CONFIG_TEXT + '''  other:
    run:
      mc_samples: 20000
      rng_seed: 4
''', encoding='utf-8')
    output = tmp_path.joinpath('out')

    assert qrng.starter(['--config', str(config), 'simulate', '-o', str(output)]) == qrng.EXIT_OK
    assert output.joinpath('lab_report.txt').exists()
    assert output.joinpath('other_report.txt').exists()


@pytest.mark.slow
def test_fig2_noisy_run_stays_within_budget():
    document = {'experiments': {'fig2': {'noise': {'sigma_zeta': 0.02}}}}
    cfg = ExperimentConfigurator(document=document).experiment('fig2')
    quiet = cfg.interference.with_noise(sigma_jitter=0.0)
    adc = replace(cfg.adc, bandwidth=20e9)
    result = simulate_waveform_signal(quiet, adc, 100_000, cfg.rng_seed)
    curve = asyncio.run(b_to_gamma_curve(
        8, cfg.interference.laser.sigma_s1, [0.0, 0.01, 0.02, 0.04, 0.06, 0.1], mc_samples=200_000, seed=6, base=quiet
        ))

    report = asyncio.run(run_analyze(result.codes, 8, adc, curve))

    assert not is_untrusted(report.gamma_total)
    assert report.gamma_total <= 4 * report.gamma_enob


@pytest.mark.slow
def test_analysis_recovers_curve_point():
    grid = [0.0, 0.01, 0.02, 0.03, 0.04, 0.06]
    curve = asyncio.run(b_to_gamma_curve(8, 0.05, grid, mc_samples=200_000, seed=6))
    adc = AdcConfig(n=8, sinad_db=40.0)
    measured = simulate_integral_signal(sweep_config(PulseInterferenceConfig(), 0.05, 0.02), adc, 200_000, seed=99)

    report = asyncio.run(run_analyze(measured.codes, 8, adc, curve))
    expected = next(row.gamma_nq_gamma for row in curve.rows if row.sigma_zeta == 0.02)

    assert report.gamma_total / report.gamma_enob == pytest.approx(expected, rel=0.1)


@pytest.mark.slow
def test_extracted_bits_are_balanced():
    codes = arcsine_codes(300_000)
    gamma = curve_gamma_nq(8) * gamma_enob(8, enob(45.0))

    out, _ = asyncio.run(run_extract(codes, 8, report_with(gamma), ExtractorConfig(block_len=4096)))

    assert len(out) >= 1_000_000
    assert monobit(out).passed(3.0)
