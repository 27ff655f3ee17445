import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Tuple, Union

import numpy as np
from scipy import integrate, signal, stats

from qrng.model.exception import DataFormatError, EmptyHistogramError, InvalidParameterError, UnimodalPdfError


logger = logging.getLogger(__name__)

CSV_HEADER = ('bin_low', 'bin_high', 'count')
B_WIDTH_THRESHOLD = 0.01
B_PEAK_PROMINENCE = 0.05
B_MIN_COUNTS = 10_000


class SupportBounds(NamedTuple):
    s_min: float
    s_max: float

    @property
    def degenerate(self) -> bool:
        return not self.s_min < self.s_max


@dataclass(frozen=True)
class QuantumPdfParams:
    s_min: float
    s_max: float

    def __post_init__(self) -> None:
        if not self.s_min < self.s_max:
            raise InvalidParameterError(f'Носитель вырожден: s_min={self.s_min}, s_max={self.s_max}.')

    @property
    def width(self) -> float:
        return self.s_max - self.s_min

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.s_min + self.s_max)

    def scaled(self, gain: float) -> 'QuantumPdfParams':
        return QuantumPdfParams(self.s_min * gain, self.s_max * gain)


def s_bounds(s1: float, s2: float, kappa: float) -> SupportBounds:
    if s1 <= 0 or s2 <= 0:
        raise InvalidParameterError(f's1, s2 должны быть > 0, получено {s1}, {s2}.')

    if not 0 <= kappa <= 1:
        raise InvalidParameterError(f'Видность должна лежать в [0, 1], получено {kappa}.')

    swing = 2 * kappa * math.sqrt(s1 * s2)
    bounds = SupportBounds(s1 + s2 - swing, s1 + s2 + swing)

    if bounds.degenerate:
        logger.warning('Вырожденный носитель: s_min = s_max = %s (нулевая видность).', bounds.s_min)

    return bounds


def quantum_pdf(x: Union[float, np.ndarray], p: QuantumPdfParams) -> Union[float, np.ndarray]:
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= p.s_min) or np.any(x_arr >= p.s_max):
        raise InvalidParameterError('Плотность определена только внутри (s_min, s_max).')

    density = 1.0 / (math.pi * np.sqrt((x_arr - p.s_min) * (p.s_max - x_arr)))

    return float(density) if density.ndim == 0 else density


def quantum_cdf(x: Union[float, np.ndarray], p: QuantumPdfParams) -> Union[float, np.ndarray]:
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < p.s_min) or np.any(x_arr > p.s_max):
        raise InvalidParameterError('Функция распределения определена только на [s_min, s_max].')

    u = np.clip((x_arr - p.s_min) / p.width, 0.0, 1.0)
    cdf = 2 / math.pi * np.arcsin(np.sqrt(u))

    return float(cdf) if cdf.ndim == 0 else cdf


def quantum_quantile(u: Union[float, np.ndarray], p: QuantumPdfParams) -> Union[float, np.ndarray]:
    return p.s_min + p.width * np.sin(math.pi * np.asarray(u) / 2) ** 2


def sample_quantum(rng: np.random.Generator, p: QuantumPdfParams, size: int) -> np.ndarray:
    return quantum_quantile(rng.uniform(size=size), p)


class ArcsineDensity:
    __slots__ = 'params'

    def __init__(self, params: QuantumPdfParams) -> None:
        self.params = params

    def mass(self, a: float, b: float) -> float:
        p = self.params
        lo, hi = np.clip([a, b], p.s_min, p.s_max)

        return max(quantum_cdf(hi, p) - quantum_cdf(lo, p), 0.0)


class ConvolvedArcsineDensity:
    """f_S^Q, свернутая с гауссовым шумом sigma."""
    __slots__ = 'params', 'sigma'

    def __init__(self, params: QuantumPdfParams, sigma: float) -> None:
        if sigma < 0:
            raise InvalidParameterError(f'sigma должна быть >= 0, получено {sigma}.')

        self.params = params
        self.sigma = sigma

    def mass(self, a: float, b: float) -> float:
        if self.sigma == 0:
            return ArcsineDensity(self.params).mass(a, b)

        p = self.params

        # x = s_min + w sin^2(theta / 2): вес арксинуса постоянный 1/pi
        def integrand(theta: float) -> float:
            x = p.s_min + p.width * math.sin(theta / 2) ** 2
            return stats.norm.cdf((b - x) / self.sigma) - stats.norm.cdf((a - x) / self.sigma)

        value, _ = integrate.quad(integrand, 0.0, math.pi, limit=200, epsabs=1e-13, epsrel=1e-11)

        return max(value / math.pi, 0.0)


class SampleDensity:
    __slots__ = 'values'

    def __init__(self, values: np.ndarray) -> None:
        self.values = np.sort(np.asarray(values, dtype=float).ravel())

        if not len(self.values):
            raise EmptyHistogramError('Нет отсчетов для оценки плотности.')

    def mass(self, a: float, b: float) -> float:
        lo, hi = np.searchsorted(self.values, [a, b], side='left')

        return (hi - lo) / len(self.values)


class SmearedSampleDensity:
    __slots__ = 'values', 'sigma'

    # дальше этого числа sigma вклад отсчета в массу отрезка пренебрежимо мал
    WINDOW_SIGMAS = 10.0

    def __init__(self, values: np.ndarray, sigma: float) -> None:
        if sigma < 0:
            raise InvalidParameterError(f'sigma должна быть >= 0, получено {sigma}.')

        self.values = SampleDensity(values).values
        self.sigma = sigma

    def mass(self, a: float, b: float) -> float:
        if self.sigma == 0:
            lo, hi = np.searchsorted(self.values, [a, b], side='left')
            return (hi - lo) / len(self.values)

        reach = self.WINDOW_SIGMAS * self.sigma
        lo, hi = np.searchsorted(self.values, [a - reach, b + reach])
        near = self.values[lo:hi]
        inside = stats.norm.cdf((b - near) / self.sigma) - stats.norm.cdf((a - near) / self.sigma)

        return float(np.sum(inside) / len(self.values))


@dataclass
class EmpiricalPdf:
    bin_edges: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)

        if self.bin_edges.ndim != 1 or len(self.bin_edges) < 2:
            raise InvalidParameterError('Нужно хотя бы два края бинов.')

        if np.any(np.diff(self.bin_edges) <= 0):
            raise InvalidParameterError('Края бинов должны строго возрастать.')

        if self.counts is None:
            self.counts = np.zeros(len(self.bin_edges) - 1, dtype=np.int64)

        self.counts = np.asarray(self.counts, dtype=np.int64)

        if self.counts.shape != (len(self.bin_edges) - 1,):
            raise InvalidParameterError('Число счетчиков должно быть на единицу меньше числа краев.')

        if np.any(self.counts < 0):
            raise InvalidParameterError('Счетчики не могут быть отрицательными.')

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def _require_counts(self) -> None:
        if self.total == 0:
            raise EmptyHistogramError()

    def probabilities(self) -> np.ndarray:
        self._require_counts()

        return self.counts / self.total

    def density(self) -> np.ndarray:
        return self.probabilities() / self.widths

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float).ravel()
        if not len(values):
            return

        idx = np.searchsorted(self.bin_edges, values, side='right') - 1
        idx = np.clip(idx, 0, self.bins - 1)
        self.counts += np.bincount(idx, minlength=self.bins)

    def add_codes(self, codes: np.ndarray) -> None:
        codes = np.asarray(codes, dtype=np.int64).ravel()
        if np.any(codes < 0) or np.any(codes >= self.bins):
            raise InvalidParameterError(f'Коды АЦП должны лежать в [0, {self.bins}).')

        self.counts += np.bincount(codes, minlength=self.bins)

    def merge(self, other: 'EmpiricalPdf') -> 'EmpiricalPdf':
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise InvalidParameterError('Сливать можно только гистограммы с одинаковыми бинами.')

        return EmpiricalPdf(self.bin_edges.copy(), self.counts + other.counts)

    def mass(self, a: float, b: float) -> float:
        # массы бинов с долевым учетом крайних
        self._require_counts()
        lo = np.clip(a, self.bin_edges[:-1], self.bin_edges[1:])
        hi = np.clip(b, self.bin_edges[:-1], self.bin_edges[1:])
        covered = np.clip(hi - lo, 0.0, None) / self.widths

        return float(np.sum(covered * self.probabilities()))


def uniform_edges(low: float, high: float, bins: int) -> np.ndarray:
    if bins < 1 or not low < high:
        raise InvalidParameterError(f'Неверная сетка бинов: [{low}, {high}], {bins} бинов.')

    return np.linspace(low, high, bins + 1)


def code_histogram(codes: np.ndarray, n: int, delta_u: float) -> EmpiricalPdf:
    pdf = EmpiricalPdf(uniform_edges(0.0, delta_u, 2 ** n))
    pdf.add_codes(codes)

    return pdf


def accumulate(events: Union[np.ndarray, Iterable[np.ndarray]], edges: np.ndarray) -> EmpiricalPdf:
    pdf = EmpiricalPdf(edges)

    if isinstance(events, np.ndarray):
        pdf.add(events)

    else:
        for chunk in events:
            pdf.add(np.atleast_1d(chunk))

    return pdf


def empirical_cdf(pdf: EmpiricalPdf, y: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    if pdf.total == 0:
        raise EmptyHistogramError('Функция распределения пустой гистограммы не определена.')

    cumulative = np.concatenate([[0.0], np.cumsum(pdf.counts) / pdf.total])
    value = np.interp(y, pdf.bin_edges, cumulative, left=0.0, right=1.0)

    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class BStatistic:
    total_width: float
    peak_distance: float
    value: float
    peaks: Tuple[float, float]
    smoothing_window: int
    width_threshold: float = B_WIDTH_THRESHOLD
    peak_prominence: float = B_PEAK_PROMINENCE


def smoothing_window(bins: int) -> int:
    return max(3, bins // 64)


def estimate_B(pdf: EmpiricalPdf, min_counts: int = B_MIN_COUNTS) -> BStatistic:
    if pdf.total < min_counts:
        raise InvalidParameterError(f'Для оценки B нужно не меньше {min_counts} отсчетов, есть {pdf.total}.')

    window = smoothing_window(pdf.bins)
    smoothed = np.convolve(pdf.density(), np.ones(window) / window, mode='same')
    top = smoothed.max()

    above = np.flatnonzero(smoothed >= B_WIDTH_THRESHOLD * top)
    total_width = float(pdf.bin_edges[above[-1] + 1] - pdf.bin_edges[above[0]])

    # нули по краям, чтобы пик в крайнем бине тоже считался локальным максимумом
    padded = np.concatenate([[0.0], smoothed, [0.0]])
    found, _ = signal.find_peaks(padded, prominence=B_PEAK_PROMINENCE * top)
    found = found - 1

    if len(found) < 2:
        raise UnimodalPdfError(f'Найдено максимумов: {len(found)}; шум или джиттер разрушили бимодальность.')

    highest = found[np.argsort(smoothed[found])[-2:]]
    left, right = sorted(pdf.centers[highest])
    peak_distance = float(right - left)

    return BStatistic(total_width, peak_distance, total_width / peak_distance, (float(left), float(right)), window)


def histogram_to_csv(pdf: EmpiricalPdf) -> str:
    buffer = io.StringIO(newline='')
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_HEADER)

    for low, high, count in zip(pdf.bin_edges[:-1], pdf.bin_edges[1:], pdf.counts):
        writer.writerow((repr(float(low)), repr(float(high)), int(count)))

    return buffer.getvalue()


def histogram_from_csv(text: str) -> EmpiricalPdf:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)

    if header is None or tuple(item.strip() for item in header) != CSV_HEADER:
        raise DataFormatError(f'Ожидался заголовок {",".join(CSV_HEADER)}.', line=1)

    lows: List[float] = []
    highs: List[float] = []
    counts: List[int] = []
    for line_no, row in enumerate(reader, start=2):
        try:
            low, high, count = row
            lows.append(float(low))
            highs.append(float(high))
            counts.append(int(count))

        except ValueError as e:
            raise DataFormatError(f'Неверная строка гистограммы: {row!r}.', line=line_no) from e

    if not counts:
        raise DataFormatError('Гистограмма без бинов.', line=2)

    if not np.allclose(lows[1:], highs[:-1], rtol=1e-12, atol=0.0):
        raise DataFormatError('Бины гистограммы должны идти подряд без разрывов.')

    return EmpiricalPdf(np.array(lows + [highs[-1]]), np.array(counts))
