import csv
import io
import logging
from argparse import Namespace
from dataclasses import replace
from pathlib import Path
from typing import Any, Awaitable, Callable, Coroutine, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from qrng.cli import tools as tls
from qrng.configurator import ExperimentConfig, ExperimentConfigurator, catalog_url_make
from qrng.db import CatalogHandler
from qrng.model.adc_model import AdcConfig, design_butterworth2, filter_waveform
from qrng.model.entropy_reduction import (
    GammaCurve, ReductionReport, SweepRow, analyze_histogram, b_to_gamma_curve, factor_value, noise_sweep,
    reduction_report, strict_divergence
    )
from qrng.model.extractors import (
    BitBuffer, ExtractorConfig, ToeplitzSeed, extraction_metadata, extraction_pipeline, generate_seed, samples_to_bits,
    trusted_report
    )
from qrng.model.pdf_estimation import code_histogram, histogram_to_csv
from qrng.model.simulation import MonteCarloRunner, SignalMode, SimulationResult, chain_grid, mean_pulse, simulate


logger = logging.getLogger(__name__)

SWEEP_HEADER = (
    'sigma_zeta', 'n_bits', 'h_inf', 'h_inf_q', 'h_inf_comparator',
    'gamma_strict', 'gamma_relaxed', 'gamma_comparator', 'gamma_nq', 'gamma_nq_gamma'
    )


def runner_make(cfg: ExperimentConfig) -> MonteCarloRunner:
    return MonteCarloRunner(cfg.workers, cfg.batch_size)


def csv_dump(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO(newline='')
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)

    return buffer.getvalue()


def manifest_make(cfg: ExperimentConfig, report: Optional[ReductionReport] = None, **extra: Any) -> str:
    info = {'rng_seed': cfg.rng_seed, **extra}
    if report is not None:
        info['conventions'] = dict(report.conventions)

    return tls.manifest_dump(cfg.name, cfg.to_dict(), info)


async def run_simulate(
    cfg: ExperimentConfig, writer: tls.ArtifactWriter
    ) -> Coroutine[Any, Any, Tuple[SimulationResult, ReductionReport]]:
    logger.info('Моделирование %s: режим %s, %d событий.', cfg.name, cfg.mode.value, cfg.mc_samples)

    result = await simulate(cfg.interference, cfg.adc, cfg.mc_samples, cfg.rng_seed, cfg.mode, runner_make(cfg))
    report = reduction_report(result, cfg.adc)
    logger.info('%s: B=%s, Gamma_ADC=%s.', cfg.name, report.b_value, report.gamma_total)

    await writer.write_text(f'{cfg.name}_histogram.csv', histogram_to_csv(result.histogram), 'histogram')
    await writer.write_text(f'{cfg.name}_report.txt', report.to_key_value(), 'report')
    if cfg.write_samples:
        await writer.write(f'{cfg.name}_samples.bin', tls.samples_to_binary(result.codes, cfg.adc.n), 'samples')

    sample_time = {} if result.sample_time is None else {'sample_time': result.sample_time}
    await writer.write_text(f'{cfg.name}_manifest.yaml', manifest_make(cfg, report, gain=result.gain, **sample_time), 'manifest')

    return result, report


async def run_analyze(
    codes: np.ndarray, n: int, adc: AdcConfig, curve: GammaCurve, writer: Optional[tls.ArtifactWriter] = None, name: str = 'analyze'
    ) -> Coroutine[Any, Any, ReductionReport]:
    adc = replace(adc, n=n)
    histogram = code_histogram(codes, n, adc.delta_u)
    report = analyze_histogram(histogram, adc, curve)
    logger.info('Анализ %d отсчетов: B=%.4f, Gamma_ADC=%s.', len(codes), report.b_value, report.gamma_total)

    if writer is not None:
        await writer.write_text(f'{name}_histogram.csv', histogram_to_csv(histogram), 'histogram')
        await writer.write_text(f'{name}_report.txt', report.to_key_value(), 'report')

    return report


async def run_extract(
    codes: np.ndarray,
    n: int,
    report: ReductionReport,
    cfg: ExtractorConfig,
    writer: Optional[tls.ArtifactWriter] = None,
    seed: Optional[ToeplitzSeed] = None,
    name: str = 'extract'
    ) -> Coroutine[Any, Any, Tuple[BitBuffer, ToeplitzSeed]]:
    raw = samples_to_bits(codes, n)
    cfg = cfg.with_gamma(trusted_report(report).gamma_total)

    if seed is None:
        seed = generate_seed(raw, cfg.seed_len)

    out = extraction_pipeline(raw, report, cfg, seed)

    if writer is not None:
        await writer.write(f'{name}_bits.bin', out.data, 'bits')
        await writer.write_text(f'{name}_bits.txt', tls.key_value_dump(extraction_metadata(cfg, seed, len(raw), out)), 'metadata')
        await writer.write(f'{name}_seed.seed', tls.seed_to_bytes(seed), 'seed')

    return out, seed


async def run_curve(cfg: ExperimentConfig) -> Coroutine[Any, Any, GammaCurve]:
    rows = []
    for n in cfg.bits or (cfg.adc.n,):
        logger.info('Кривая B -> gamma_n^Q * Gamma для n=%d, %d точек.', n, len(cfg.sigma_zetas))
        curve = await b_to_gamma_curve(
            n, cfg.interference.laser.sigma_s1, cfg.sigma_zetas, cfg.mc_samples, cfg.rng_seed, cfg.interference, runner_make(cfg)
            )
        rows.extend(curve.rows)

    return GammaCurve(rows)


def sweep_rows(rows: Sequence[SweepRow]) -> List[Tuple[Any, ...]]:
    return [
        (
            row.sigma_zeta, row.n_bits, row.h_inf, row.h_inf_q, row.h_inf_comparator,
            factor_value(row.gamma_adc_strict), factor_value(row.gamma_adc_relaxed),
            factor_value(row.gamma_comparator), row.gamma_nq, factor_value(row.gamma_nq_gamma)
            )
        for row in rows
        ]


def pulse_profiles(cfg: ExperimentConfig) -> str:
    bandwidths = cfg.bandwidths or (cfg.adc.bandwidth,)
    grid = chain_grid(cfg.interference, replace(cfg.adc, bandwidth=max(bandwidths)))
    raw = mean_pulse(cfg.interference, grid)
    filtered = [filter_waveform(raw, design_butterworth2(bw, grid[1])).samples for bw in bandwidths]
    header = ['t', 'p'] + [f'filtered_{int(bw / 1e6)}mhz' for bw in bandwidths]

    return csv_dump(header, zip(raw.times, raw.samples, *filtered))


async def run_figures(cfg: ExperimentConfig, writer: tls.ArtifactWriter) -> Coroutine[Any, Any, List[Path]]:
    written = []

    if cfg.preset in ('fig2', 'fig3'):
        written.append(await writer.write_text(f'{cfg.name}_pulse.csv', pulse_profiles(cfg), 'figure'))
        for jitter in cfg.jitters or (cfg.interference.noise.sigma_jitter,):
            for bandwidth in cfg.bandwidths or (cfg.adc.bandwidth,):
                interference = cfg.interference.with_noise(sigma_jitter=jitter)
                result = await simulate(
                    interference, replace(cfg.adc, bandwidth=bandwidth), cfg.mc_samples, cfg.rng_seed, SignalMode.WAVEFORM, runner_make(cfg)
                    )
                relative = f'{cfg.name}_pdf_j{round(jitter * 1e12)}ps_bw{round(bandwidth / 1e6)}mhz.csv'
                written.append(await writer.write_text(relative, histogram_to_csv(result.histogram), 'figure'))

    elif cfg.preset in ('fig4', 'fig5'):
        rows = await noise_sweep(
            cfg.bits or (cfg.adc.n,), cfg.interference.laser.sigma_s1, cfg.sigma_zetas,
            cfg.mc_samples, cfg.rng_seed, cfg.interference, runner_make(cfg)
            )
        for n in sorted({row.n_bits for row in rows}):
            logger.info('%s: строгий Gamma расходится при sigma_zeta=%s для n=%d.', cfg.name, strict_divergence(rows, n), n)

        written.append(await writer.write_text(f'{cfg.name}_sweep.csv', csv_dump(SWEEP_HEADER, sweep_rows(rows)), 'figure'))

    elif cfg.preset == 'fig6':
        written.append(await writer.write_text(f'{cfg.name}_curve.csv', (await run_curve(cfg)).to_csv(), 'curve'))

    else:
        logger.info('%s: для сценария %s нет набора данных для графиков.', cfg.name, cfg.preset)

    if written:
        written.append(await writer.write_text(f'{cfg.name}_manifest.yaml', manifest_make(cfg), 'manifest'))

    return written


class BaseHandler:
    def __init__(self, config_path: Path) -> None:
        self._config_path = config_path

    def _configurator(self, args: Namespace) -> ExperimentConfigurator:
        return ExperimentConfigurator(Path(args.config) if args.config else self._config_path)

    def _experiments(self, args: Namespace) -> List[ExperimentConfig]:
        configurator = self._configurator(args)
        if args.experiment:
            experiments = [configurator.experiment(name) for name in args.experiment]

        else:
            experiments = list(configurator.experiments().values())

        if not getattr(args, 'verbose', False) and experiments:
            logging.getLogger().setLevel(experiments[0].log_level)

        if getattr(args, 'output', None):
            experiments = [replace(item, output_dir=Path(args.output)) for item in experiments]

        return experiments

    async def _catalog_make(self, cfg: ExperimentConfig) -> Coroutine[Any, Any, CatalogHandler]:
        catalog = CatalogHandler(catalog_url_make(cfg))
        await catalog.create()
        await catalog.normalize(cfg.output_dir)

        return catalog

    async def _with_writer(
        self, cfg: ExperimentConfig, job: Callable[[tls.ArtifactWriter], Awaitable[Any]]
        ) -> Coroutine[Any, Any, Any]:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        catalog = await self._catalog_make(cfg)

        try:
            return await job(tls.ArtifactWriter(cfg.output_dir, catalog, cfg.name))

        finally:
            await catalog.release()

    async def handle(self, args: Namespace) -> Coroutine[Any, Any, int]:
        raise NotImplementedError


class SimulateHandler(BaseHandler):
    async def handle(self, args: Namespace) -> Coroutine[Any, Any, int]:
        for cfg in self._experiments(args):
            _, report = await self._with_writer(cfg, lambda writer, cfg=cfg: run_simulate(cfg, writer))
            print(report.to_key_value(), end='')

        return 0


class AnalyzeHandler(BaseHandler):
    async def handle(self, args: Namespace) -> Coroutine[Any, Any, int]:
        cfg = self._experiments(args)[0]
        n, codes = await tls.samples_read(Path(args.samples), args.bits)
        curve = GammaCurve.from_csv((await tls.FileHandler(Path(args.curve)).file_reader()).decode('utf-8'))
        name = Path(args.samples).stem

        report = await self._with_writer(cfg, lambda writer: run_analyze(codes, n, cfg.adc, curve, writer, name))
        print(report.to_key_value(), end='')

        return 0


class ExtractHandler(BaseHandler):
    async def handle(self, args: Namespace) -> Coroutine[Any, Any, int]:
        cfg = self._experiments(args)[0]
        n, codes = await tls.samples_read(Path(args.samples), args.bits)
        text = (await tls.FileHandler(Path(args.report)).file_reader()).decode('utf-8')
        # до создания каталога вывода
        report = trusted_report(ReductionReport.from_key_value(text))
        extractor = cfg.extractor if args.block_len is None else ExtractorConfig(args.block_len)
        seed = tls.seed_from_bytes(await tls.FileHandler(Path(args.seed)).file_reader()) if args.seed else None
        name = Path(args.samples).stem

        out, _ = await self._with_writer(cfg, lambda writer: run_extract(codes, n, report, extractor, writer, seed, name))
        logger.info('Извлечено %d бит.', len(out))

        return 0


class CurveHandler(BaseHandler):
    async def handle(self, args: Namespace) -> Coroutine[Any, Any, int]:
        for cfg in self._experiments(args):
            async def job(writer: tls.ArtifactWriter, cfg: ExperimentConfig = cfg) -> Coroutine[Any, Any, Path]:
                await writer.write_text(f'{cfg.name}_manifest.yaml', manifest_make(cfg), 'manifest')
                return await writer.write_text(f'{cfg.name}_curve.csv', (await run_curve(cfg)).to_csv(), 'curve')

            await self._with_writer(cfg, job)

        return 0


class FiguresHandler(BaseHandler):
    async def handle(self, args: Namespace) -> Coroutine[Any, Any, int]:
        for cfg in self._experiments(args):
            await self._with_writer(cfg, lambda writer, cfg=cfg: run_figures(cfg, writer))

        return 0
