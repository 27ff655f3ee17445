import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import signal

from qrng.model.exception import InvalidParameterError
from qrng.model.signal_model import Waveform


logger = logging.getLogger(__name__)

SINAD_OFFSET_DB = 1.76
DB_PER_BIT = 6.02
FILTER_DISCRETIZATION = 'butterworth-2, bilinear transform, pre-warped at f_c'


@dataclass(frozen=True)
class AdcConfig:
    n: int = 8
    delta_u: float = 1.0
    bandwidth: float = 20e9
    # None: точка выборки и усиление подбираются по модели (см. simulation)
    sample_time: Optional[float] = None
    gain: Optional[float] = None
    sinad_db: float = 45.0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameterError(f'adc.n: разрядность должна быть целым >= 1, получено {self.n}.')

        if self.delta_u <= 0:
            raise InvalidParameterError(f'adc.delta_u: должно быть > 0, получено {self.delta_u}.')

        if self.bandwidth <= 0:
            raise InvalidParameterError(f'adc.bandwidth: должно быть > 0, получено {self.bandwidth}.')

        if self.gain is not None and self.gain <= 0:
            raise InvalidParameterError(f'adc.gain: должно быть > 0, получено {self.gain}.')

        if self.sinad_db <= SINAD_OFFSET_DB:
            raise InvalidParameterError(f'adc.sinad_db: должно быть > {SINAD_OFFSET_DB}, получено {self.sinad_db}.')

    @property
    def levels(self) -> int:
        return 2 ** int(self.n)

    @property
    def lsb(self) -> float:
        return self.delta_u / self.levels


@dataclass
class Biquad:
    b: np.ndarray
    a: np.ndarray
    dt: float
    bandwidth: float
    state: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1))

    def reset(self) -> None:
        self.state = np.zeros(2)

    def process(self, x: np.ndarray) -> np.ndarray:
        y, self.state = signal.lfilter(self.b, self.a, np.asarray(x, dtype=float), zi=self.state)

        return y

    def magnitude(self, freqs: np.ndarray) -> np.ndarray:
        _, h = signal.freqz(self.b, self.a, worN=np.asarray(freqs, dtype=float), fs=1 / self.dt)

        return np.abs(h)


def design_butterworth2(bandwidth: float, dt: float) -> Biquad:
    if dt <= 0:
        raise InvalidParameterError(f'Шаг сетки должен быть > 0, получено {dt}.')

    nyquist = 1 / (2 * dt)
    if not 0 < bandwidth < nyquist:
        raise InvalidParameterError(f'Полоса {bandwidth} Гц должна лежать в (0, {nyquist}) Гц.')

    b, a = signal.butter(2, bandwidth, btype='low', fs=1 / dt)
    biquad = Biquad(np.asarray(b), np.asarray(a), dt, bandwidth)

    if not biquad.is_stable():
        raise InvalidParameterError(f'Фильтр неустойчив для полосы {bandwidth} Гц и шага {dt} с.')

    return biquad


def _check_dt(dt: float, f: Biquad) -> None:
    if not math.isclose(dt, f.dt, rel_tol=1e-9):
        raise InvalidParameterError(f'Фильтр рассчитан на шаг {f.dt} с, а сигнал задан с шагом {dt} с.')


def filter_waveform(w: Waveform, f: Biquad) -> Waveform:
    _check_dt(w.dt, f)
    f.reset()

    return Waveform(w.t0, w.dt, f.process(w.samples))


def filter_batch(samples: np.ndarray, f: Biquad, dt: float) -> np.ndarray:
    _check_dt(dt, f)

    return signal.lfilter(f.b, f.a, samples, axis=-1)


def sample_at(w: Waveform, t_s: float) -> float:
    if not w.t0 <= t_s <= w.t_end:
        raise InvalidParameterError(f'Момент выборки {t_s} с вне интервала [{w.t0}, {w.t_end}] с.')

    return float(np.interp(t_s, w.times, w.samples))


def sample_batch(samples: np.ndarray, t0: float, dt: float, t_s: float) -> np.ndarray:
    count = samples.shape[-1]
    position = (t_s - t0) / dt

    if not 0 <= position <= count - 1:
        raise InvalidParameterError(f'Момент выборки {t_s} с вне сетки.')

    idx = min(int(math.floor(position)), count - 2)
    frac = position - idx

    return samples[..., idx] * (1 - frac) + samples[..., idx + 1] * frac


def quantize(v: Union[float, np.ndarray], cfg: AdcConfig) -> Union[int, np.ndarray]:
    codes = np.clip(np.floor(np.asarray(v, dtype=float) / cfg.lsb), 0, cfg.levels - 1).astype(np.int64)

    if codes.ndim == 0:
        return int(codes)

    return codes


def enob(sinad_db: float) -> float:
    if sinad_db <= SINAD_OFFSET_DB:
        raise InvalidParameterError(f'SINAD должен быть > {SINAD_OFFSET_DB} дБ, получено {sinad_db}.')

    return (sinad_db - SINAD_OFFSET_DB) / DB_PER_BIT


def enob_to_sinad(effective_bits: float) -> float:
    if effective_bits <= 0:
        raise InvalidParameterError(f'ENOB должен быть > 0, получено {effective_bits}.')

    return DB_PER_BIT * effective_bits + SINAD_OFFSET_DB
