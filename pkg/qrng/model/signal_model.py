import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from qrng.model.exception import InvalidParameterError


logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

MAX_SIGMA_S = 0.5


class PulseKind(str, Enum):
    GAUSSIAN = 'gaussian'
    FLAT_TOP = 'flat_top'


class PhaseKind(str, Enum):
    UNIFORM = 'uniform'


@dataclass(frozen=True)
class PulseShape:
    """Огибающая интенсивности p(t).

    gaussian: p(t) = peak * exp(-t^2 / (2 w^2)), t от центра импульса.
    flat_top: плато длительностью w от t = 0, гауссовы фронты с шириной edge_width.
    """
    kind: PulseKind = PulseKind.GAUSSIAN
    width: float = 20e-12
    edge_width: float = 30e-12
    peak_power: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kind', PulseKind(self.kind))

        if self.width <= 0:
            raise InvalidParameterError(f'pulse.width: должно быть > 0, получено {self.width}.')

        if self.kind is PulseKind.FLAT_TOP and self.edge_width <= 0:
            raise InvalidParameterError(f'pulse.edge_width: должно быть > 0, получено {self.edge_width}.')

        if self.peak_power <= 0:
            raise InvalidParameterError(f'pulse.peak_power: должно быть > 0, получено {self.peak_power}.')

    @property
    def resolution(self) -> float:
        if self.kind is PulseKind.FLAT_TOP:
            return min(self.width, self.edge_width)

        return self.width

    @property
    def energy(self) -> float:
        if self.kind is PulseKind.FLAT_TOP:
            return self.peak_power * (self.width + math.sqrt(2 * math.pi) * self.edge_width)

        return self.peak_power * math.sqrt(2 * math.pi) * self.width

    def envelope(self, tau: np.ndarray) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)

        if self.kind is PulseKind.GAUSSIAN:
            return self.peak_power * np.exp(-tau ** 2 / (2 * self.width ** 2))

        rising = np.exp(-np.minimum(tau, 0.0) ** 2 / (2 * self.edge_width ** 2))
        falling = np.exp(-np.maximum(tau - self.width, 0.0) ** 2 / (2 * self.edge_width ** 2))

        return self.peak_power * rising * falling

    def chirp_phase(self, tau: np.ndarray, alpha: float) -> np.ndarray:
        # phi = (alpha / 2) * ln p(t); у flat_top только на переднем фронте
        tau = np.asarray(tau, dtype=float)

        if self.kind is PulseKind.GAUSSIAN:
            return -alpha * tau ** 2 / (4 * self.width ** 2)

        return -alpha * np.minimum(tau, 0.0) ** 2 / (4 * self.edge_width ** 2)


@dataclass(frozen=True)
class LaserParams:
    alpha: float = 4.0
    repetition_period: float = 400e-12
    sigma_s1: float = 0.0
    sigma_s2: float = 0.0
    mean_s1: float = 1.0
    mean_s2: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise InvalidParameterError(f'laser.alpha: должно быть >= 0, получено {self.alpha}.')

        if self.repetition_period <= 0:
            raise InvalidParameterError(f'laser.repetition_period: должно быть > 0, получено {self.repetition_period}.')

        for name in ('sigma_s1', 'sigma_s2'):
            value = getattr(self, name)
            if not 0 <= value <= MAX_SIGMA_S:
                raise InvalidParameterError(f'laser.{name}: допустимо от 0 до {MAX_SIGMA_S}, получено {value}.')

        for name in ('mean_s1', 'mean_s2'):
            value = getattr(self, name)
            if value <= 0:
                raise InvalidParameterError(f'laser.{name}: должно быть > 0, получено {value}.')

    @property
    def mean_level(self) -> float:
        return self.mean_s1 + self.mean_s2


@dataclass(frozen=True)
class NoiseParams:
    sigma_jitter: float = 0.0
    sigma_zeta: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma_jitter < 0:
            raise InvalidParameterError(f'noise.sigma_jitter: должно быть >= 0, получено {self.sigma_jitter}.')

        if self.sigma_zeta < 0:
            raise InvalidParameterError(f'noise.sigma_zeta: должно быть >= 0, получено {self.sigma_zeta}.')


@dataclass(frozen=True)
class PhaseModel:
    kind: PhaseKind = PhaseKind.UNIFORM

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kind', PhaseKind(self.kind))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(0.0, 2 * math.pi, size)


@dataclass(frozen=True)
class PulseInterferenceConfig:
    pulse: PulseShape = field(default_factory=PulseShape)
    laser: LaserParams = field(default_factory=LaserParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    phase: PhaseModel = field(default_factory=PhaseModel)
    # от начала периода до центра (gaussian) или начала плато (flat_top)
    pulse_offset: float = 100e-12

    def __post_init__(self) -> None:
        if not 0 <= self.pulse_offset < self.laser.repetition_period:
            raise InvalidParameterError(
                f'pulse.offset: должно лежать в периоде [0, {self.laser.repetition_period}), получено {self.pulse_offset}.'
                )

    def with_noise(self, **changes: float) -> 'PulseInterferenceConfig':
        values = {'sigma_jitter': self.noise.sigma_jitter, 'sigma_zeta': self.noise.sigma_zeta, **changes}

        return PulseInterferenceConfig(self.pulse, self.laser, NoiseParams(**values), self.phase, self.pulse_offset)


@dataclass(frozen=True)
class InterferenceEvent:
    delta_phi: float
    s1: float
    s2: float
    delta: float
    zeta: float
    integral_signal: float


@dataclass(frozen=True)
class EventBatch:
    delta_phi: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    delta: np.ndarray
    zeta: np.ndarray
    integral_signal: np.ndarray

    def __len__(self) -> int:
        return len(self.delta_phi)

    def event(self, idx: int) -> InterferenceEvent:
        return InterferenceEvent(
            float(self.delta_phi[idx]),
            float(self.s1[idx]),
            float(self.s2[idx]),
            float(self.delta[idx]),
            float(self.zeta[idx]),
            float(self.integral_signal[idx])
            )


@dataclass(frozen=True)
class Waveform:
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise InvalidParameterError(f'Шаг сетки должен быть > 0, получено {self.dt}.')

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)


Grid = Tuple[float, float, int]


def visibility_kappa(delta: ArrayLike, alpha: float, w: float) -> ArrayLike:
    if w <= 0:
        raise InvalidParameterError(f'Ширина импульса должна быть > 0, получено {w}.')

    return np.exp(-(1 + alpha ** 2) * np.square(delta) / (8 * w ** 2))


def integral_signal(s1: ArrayLike, s2: ArrayLike, kappa: ArrayLike, delta_phi: ArrayLike) -> ArrayLike:
    if np.any(np.asarray(s1) < 0) or np.any(np.asarray(s2) < 0):
        raise InvalidParameterError('Интегральные сигналы s1, s2 не могут быть отрицательными.')

    kappa_arr = np.asarray(kappa)
    if np.any(kappa_arr < 0) or np.any(kappa_arr > 1):
        raise InvalidParameterError('Видность должна лежать в [0, 1].')

    return s1 + s2 + 2 * kappa * np.sqrt(s1 * s2) * np.cos(delta_phi)


def _truncated_gaussian(rng: np.random.Generator, mean: float, sigma: float, size: int) -> np.ndarray:
    values = mean + sigma * rng.standard_normal(size)
    rejected = values <= 0

    while np.any(rejected):
        values[rejected] = mean + sigma * rng.standard_normal(int(rejected.sum()))
        rejected = values <= 0

    return values


def draw_events(rng: np.random.Generator, config: PulseInterferenceConfig, size: int) -> EventBatch:
    # порядок потребления потока: фазы, s1, s2, джиттер, шум фотодетектора
    laser, noise = config.laser, config.noise

    delta_phi = config.phase.sample(rng, size)
    s1 = _truncated_gaussian(rng, laser.mean_s1, laser.sigma_s1 * laser.mean_s1, size)
    s2 = _truncated_gaussian(rng, laser.mean_s2, laser.sigma_s2 * laser.mean_s2, size)
    delta = noise.sigma_jitter * rng.standard_normal(size)
    zeta = noise.sigma_zeta * laser.mean_level * rng.standard_normal(size)

    kappa = visibility_kappa(delta, laser.alpha, config.pulse.width)
    signal = integral_signal(s1, s2, kappa, delta_phi) + zeta

    return EventBatch(delta_phi, s1, s2, delta, zeta, signal)


def draw_event(rng: np.random.Generator, config: PulseInterferenceConfig) -> InterferenceEvent:
    return draw_events(rng, config, 1).event(0)


def _check_grid(config: PulseInterferenceConfig, grid: Grid) -> None:
    _, dt, count = grid

    if dt <= 0 or count < 2:
        raise InvalidParameterError(f'Неверная сетка: dt={dt}, count={count}.')

    if dt * (count - 1) < config.laser.repetition_period * (1 - 1e-9):
        raise InvalidParameterError('Сетка должна покрывать хотя бы один период повторения импульсов.')

    if dt > config.pulse.resolution / 10 * (1 + 1e-9):
        raise InvalidParameterError(f'Сетка слишком грубая: dt={dt} при ширине импульса {config.pulse.resolution}.')


def default_grid(config: PulseInterferenceConfig, t0: float = 0.0) -> Grid:
    dt = config.pulse.resolution / 10
    count = int(math.ceil(config.laser.repetition_period / dt)) + 1

    return t0, dt, count


def interference_intensity(
    config: PulseInterferenceConfig,
    t: np.ndarray,
    delta_phi: ArrayLike,
    delta: ArrayLike,
    s1: ArrayLike = None,
    s2: ArrayLike = None
    ) -> np.ndarray:
    """I(t) для одного события или пачки (параметры формы (k, 1) против t формы (m,))."""
    laser, pulse = config.laser, config.pulse
    s1 = laser.mean_s1 if s1 is None else s1
    s2 = laser.mean_s2 if s2 is None else s2

    tau1 = t - config.pulse_offset
    tau2 = tau1 - delta
    p1 = s1 * pulse.envelope(tau1)
    p2 = s2 * pulse.envelope(tau2)
    chirp = pulse.chirp_phase(tau1, laser.alpha) - pulse.chirp_phase(tau2, laser.alpha)

    return p1 + p2 + 2 * np.sqrt(p1 * p2) * np.cos(delta_phi + chirp)


def interference_waveform(
    config: PulseInterferenceConfig,
    delta_phi: float,
    delta: float,
    grid: Optional[Grid] = None,
    s1: Optional[float] = None,
    s2: Optional[float] = None
    ) -> Waveform:
    grid = default_grid(config) if grid is None else grid
    _check_grid(config, grid)
    t0, dt, count = grid
    t = t0 + dt * np.arange(count)

    return Waveform(t0, dt, interference_intensity(config, t, delta_phi, delta, s1, s2))
