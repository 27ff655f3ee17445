import asyncio
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import Any, Callable, Coroutine, List, Optional, Sequence, Tuple

import numpy as np

from qrng.model.adc_model import (
    AdcConfig, Biquad, design_butterworth2, filter_batch, filter_waveform, quantize, sample_at, sample_batch
    )
from qrng.model.pdf_estimation import EmpiricalPdf, QuantumPdfParams, code_histogram, s_bounds
from qrng.model.signal_model import (
    Grid, PulseInterferenceConfig, Waveform, default_grid, draw_events, interference_intensity, interference_waveform
    )


logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 65_536
# шаг сетки не грубее 1/20 полосы АЦП
FILTER_OVERSAMPLING = 20

BatchJob = Callable[[np.random.SeedSequence, int], np.ndarray]


class SignalMode(str, Enum):
    INTEGRAL = 'integral'
    WAVEFORM = 'waveform'


@dataclass(frozen=True)
class AnalogChain:
    grid: Grid
    biquad: Biquad
    sample_time: float
    mean_level: float
    gain: float

    @property
    def cut(self) -> int:
        # сколько отсчетов сетки нужно, чтобы дойти до момента выборки
        t0, dt, count = self.grid
        return min(count, int(math.floor((self.sample_time - t0) / dt)) + 2)


@dataclass
class SimulationResult:
    volts: np.ndarray
    codes: np.ndarray
    histogram: EmpiricalPdf
    bounds: QuantumPdfParams
    gain: float
    mode: SignalMode
    sample_time: Optional[float] = None


def chain_grid(config: PulseInterferenceConfig, adc: AdcConfig) -> Grid:
    t0, dt, _ = default_grid(config)
    dt = min(dt, 1 / (FILTER_OVERSAMPLING * adc.bandwidth))
    count = int(math.ceil(config.laser.repetition_period / dt)) + 1

    return t0, dt, count


def mean_pulse(config: PulseInterferenceConfig, grid: Grid) -> Waveform:
    # cos(pi/2) = 0: остается p1 + p2 без интерференционного слагаемого
    return interference_waveform(config, math.pi / 2, 0.0, grid)


def locate_sample_time(config: PulseInterferenceConfig, adc: AdcConfig, grid: Optional[Grid] = None) -> float:
    grid = chain_grid(config, adc) if grid is None else grid
    biquad = design_butterworth2(adc.bandwidth, grid[1])
    filtered = filter_waveform(mean_pulse(config, grid), biquad)

    return float(filtered.times[int(np.argmax(filtered.samples))])


def prepare_chain(config: PulseInterferenceConfig, adc: AdcConfig) -> AnalogChain:
    grid = chain_grid(config, adc)
    biquad = design_butterworth2(adc.bandwidth, grid[1])
    filtered = filter_waveform(mean_pulse(config, grid), biquad)

    sample_time = adc.sample_time if adc.sample_time is not None else locate_sample_time(config, adc, grid)
    mean_level = sample_at(filtered, sample_time)
    gain = adc.gain if adc.gain is not None else adc.delta_u / (2 * mean_level)

    logger.debug('Цепочка АЦП: dt=%.3g с, t_s=%.4g с, уровень=%.4g, усиление=%.4g.', grid[1], sample_time, mean_level, gain)

    return AnalogChain(grid, biquad, sample_time, mean_level, gain)


def chain_bounds(config: PulseInterferenceConfig, chain: AnalogChain) -> QuantumPdfParams:
    values = []
    for delta_phi in (math.pi, 0.0):
        wave = filter_waveform(interference_waveform(config, delta_phi, 0.0, chain.grid), chain.biquad)
        values.append(sample_at(wave, chain.sample_time) * chain.gain)

    return QuantumPdfParams(*values)


def integral_gain(config: PulseInterferenceConfig, adc: AdcConfig) -> float:
    return adc.gain if adc.gain is not None else adc.delta_u / (2 * config.laser.mean_level)


def integral_bounds(config: PulseInterferenceConfig, gain: float) -> QuantumPdfParams:
    bounds = s_bounds(config.laser.mean_s1, config.laser.mean_s2, 1.0)

    return QuantumPdfParams(bounds.s_min * gain, bounds.s_max * gain)


def integral_batch(config: PulseInterferenceConfig, gain: float, seed: np.random.SeedSequence, size: int) -> np.ndarray:
    events = draw_events(np.random.default_rng(seed), config, size)

    return gain * events.integral_signal


def waveform_batch(
    config: PulseInterferenceConfig, chain: AnalogChain, seed: np.random.SeedSequence, size: int
    ) -> np.ndarray:
    events = draw_events(np.random.default_rng(seed), config, size)
    t0, dt, _ = chain.grid
    t = t0 + dt * np.arange(chain.cut)

    intensity = interference_intensity(
        config, t[np.newaxis, :],
        events.delta_phi[:, np.newaxis], events.delta[:, np.newaxis],
        events.s1[:, np.newaxis], events.s2[:, np.newaxis]
        )
    sampled = sample_batch(filter_batch(intensity, chain.biquad, dt), t0, dt, chain.sample_time)
    # zeta задан относительно среднего уровня; здесь средний уровень - отклик фильтра
    zeta = chain.mean_level * events.zeta / config.laser.mean_level

    return chain.gain * (sampled + zeta)


class MonteCarloRunner:
    def __init__(self, workers: int = 1, batch_size: int = DEFAULT_BATCH_SIZE) -> None:
        self.__workers = max(1, int(workers))
        self.__batch_size = max(1, int(batch_size))

    def _plan(self, total: int, seed: int) -> List[tuple]:
        # пачка i берет SeedSequence(seed).spawn(k)[i]: результат не зависит от числа процессов
        sizes = [self.__batch_size] * (total // self.__batch_size)
        if total % self.__batch_size:
            sizes.append(total % self.__batch_size)

        return list(zip(np.random.SeedSequence(seed).spawn(len(sizes)), sizes))

    @staticmethod
    def __joined(results: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate(results) if results else np.empty(0)

    def run_sync(self, job: BatchJob, total: int, seed: int) -> np.ndarray:
        plan = self._plan(total, seed)
        results = []
        for idx, (child, size) in enumerate(plan, start=1):
            logger.debug('Пачка %d из %d (%d событий).', idx, len(plan), size)
            results.append(job(child, size))

        return self.__joined(results)

    async def run(self, job: BatchJob, total: int, seed: int) -> Coroutine[Any, Any, np.ndarray]:
        results = await self.run_many([(job, total, seed)])

        return results[0]

    async def run_many(self, tasks: Sequence[Tuple[BatchJob, int, int]]) -> Coroutine[Any, Any, List[np.ndarray]]:
        """Несколько заданий (job, total, seed) в одном пуле процессов."""
        if self.__workers == 1:
            return [self.run_sync(job, total, seed) for job, total, seed in tasks]

        plans = [(job, self._plan(total, seed)) for job, total, seed in tasks]
        logger.debug('%d заданий, %d пачек на %d процессах.', len(plans), sum(len(plan) for _, plan in plans), self.__workers)
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.__workers) as pool:
            groups = [
                asyncio.gather(*[loop.run_in_executor(pool, job, child, size) for child, size in plan]) for job, plan in plans
                ]
            results = await asyncio.gather(*groups)

        return [self.__joined(list(group)) for group in results]


def _result(
    volts: np.ndarray,
    adc: AdcConfig,
    bounds: QuantumPdfParams,
    gain: float,
    mode: SignalMode,
    sample_time: Optional[float] = None
    ) -> SimulationResult:
    codes = quantize(volts, adc)

    return SimulationResult(volts, codes, code_histogram(codes, adc.n, adc.delta_u), bounds, gain, mode, sample_time)


def simulate_integral_signal(
    config: PulseInterferenceConfig, adc: AdcConfig, size: int, seed: int, runner: Optional[MonteCarloRunner] = None
    ) -> SimulationResult:
    runner = MonteCarloRunner() if runner is None else runner
    gain = integral_gain(config, adc)
    volts = runner.run_sync(partial(integral_batch, config, gain), size, seed)

    return _result(volts, adc, integral_bounds(config, gain), gain, SignalMode.INTEGRAL)


def simulate_waveform_signal(
    config: PulseInterferenceConfig, adc: AdcConfig, size: int, seed: int, runner: Optional[MonteCarloRunner] = None
    ) -> SimulationResult:
    runner = MonteCarloRunner() if runner is None else runner
    chain = prepare_chain(config, adc)
    volts = runner.run_sync(partial(waveform_batch, config, chain), size, seed)

    return _result(volts, adc, chain_bounds(config, chain), chain.gain, SignalMode.WAVEFORM, chain.sample_time)


async def simulate(
    config: PulseInterferenceConfig,
    adc: AdcConfig,
    size: int,
    seed: int,
    mode: SignalMode,
    runner: MonteCarloRunner
    ) -> Coroutine[Any, Any, SimulationResult]:
    mode = SignalMode(mode)

    if mode is SignalMode.INTEGRAL:
        gain = integral_gain(config, adc)
        volts = await runner.run(partial(integral_batch, config, gain), size, seed)

        return _result(volts, adc, integral_bounds(config, gain), gain, mode)

    chain = prepare_chain(config, adc)
    volts = await runner.run(partial(waveform_batch, config, chain), size, seed)

    return _result(volts, adc, chain_bounds(config, chain), chain.gain, mode, chain.sample_time)


async def simulate_integral_many(
    configs: Sequence[PulseInterferenceConfig],
    adc: AdcConfig,
    size: int,
    seed: int,
    runner: Optional[MonteCarloRunner] = None
    ) -> Coroutine[Any, Any, List[SimulationResult]]:
    runner = MonteCarloRunner() if runner is None else runner
    gains = [integral_gain(config, adc) for config in configs]
    volts = await runner.run_many([(partial(integral_batch, config, gain), size, seed) for config, gain in zip(configs, gains)])

    return [
        _result(item, adc, integral_bounds(config, gain), gain, SignalMode.INTEGRAL)
        for item, config, gain in zip(volts, configs, gains)
        ]
