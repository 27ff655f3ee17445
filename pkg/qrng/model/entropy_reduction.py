import csv
import io
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Coroutine, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from qrng.model.adc_model import FILTER_DISCRETIZATION, AdcConfig, enob
from qrng.model.exception import DataFormatError, InvalidParameterError, OutOfModelError, UnimodalPdfError
from qrng.model.pdf_estimation import (
    B_PEAK_PROMINENCE, B_WIDTH_THRESHOLD, ArcsineDensity, EmpiricalPdf, QuantumPdfParams, SampleDensity,
    SmearedSampleDensity, estimate_B, smoothing_window
    )
from qrng.model.signal_model import LaserParams, NoiseParams, PulseInterferenceConfig
from qrng.model.simulation import MonteCarloRunner, SimulationResult, simulate_integral_many


logger = logging.getLogger(__name__)

# допуск на статистический разброс Монте-Карло около нешумового предела
COMPARATOR_TOLERANCE = 1e-2
ENTROPY_TOLERANCE = 2e-2
CURVE_HEADER = ('B', 'gamma_nq_gamma', 'n_bits', 'sigma_s', 'sigma_zeta', 'flagged')


# бесконечный фактор редукции; до экстрактора доходить не должен
class Untrusted:
    _instance = None

    def __new__(cls) -> 'Untrusted':
        if cls._instance is None:
            cls._instance = super().__new__(cls)

        return cls._instance

    def __repr__(self) -> str:
        return 'UNTRUSTED'

    def __str__(self) -> str:
        return 'untrusted'

    def __reduce__(self):
        return Untrusted, ()


UNTRUSTED = Untrusted()
Factor = Union[float, Untrusted]


def is_untrusted(value: object) -> bool:
    return value is UNTRUSTED


def factor_value(value: Factor) -> float:
    """Для сортировки и графиков: UNTRUSTED как +inf."""
    return math.inf if is_untrusted(value) else float(value)


class Density(Protocol):
    def mass(self, a: float, b: float) -> float:
        ...


def _entropy(mass: float) -> float:
    return math.inf if mass <= 0 else -math.log2(mass)


def min_entropy_pmax(pdf: EmpiricalPdf) -> Tuple[float, float]:
    p_max = float(pdf.probabilities().max())

    return -math.log2(p_max), p_max


def gamma_classical(n: int, h_inf: float) -> Factor:
    if h_inf <= 0:
        return UNTRUSTED

    if h_inf > n * (1 + 1e-12):
        raise InvalidParameterError(f'Min-энтропия {h_inf} больше разрядности {n}.')

    return n / h_inf


def h_inf_comparator(pdf: Density, p: QuantumPdfParams) -> float:
    return _entropy(pdf.mass(p.s_min, p.s_min + p.width / 2))


def gamma_comparator(h_inf: float, tolerance: float = COMPARATOR_TOLERANCE) -> Factor:
    if h_inf < 1 - tolerance:
        raise InvalidParameterError(f'H_inf компаратора {h_inf} < 1: плотность не соответствует модели.')

    h_inf = max(h_inf, 1.0)
    if h_inf >= 2:
        return UNTRUSTED

    return 1 / (2 - h_inf)


def h_inf_first_bin(pdf: Density, s_min: float, delta_u: float, n: int) -> float:
    return _entropy(pdf.mass(s_min, s_min + delta_u / 2 ** n))


def h_inf_q_closed_form(r: float, n: int) -> float:
    """H_inf^Q для арксинуса при r = w / dU.

    p = 1/2 - arctan[(q - 2) / (2 sqrt(q - 1))] / pi, q = r 2^n, то же самое
    что (2/pi) arcsin(1/sqrt(q)). Считаем через atan2, без вычитания близких чисел.
    """
    q = r * 2 ** n
    if q < 2:
        raise InvalidParameterError(f'r * 2^n = {q} < 2: первый бин шире половины носителя.')

    return -math.log2(math.atan2(2 * math.sqrt(q - 1), q - 2) / math.pi)


def h_inf_q_as_printed(r: float, n: int) -> float:
    # знаменатель 2 sqrt(q - 2); совпадает с верным только при q = 2
    q = r * 2 ** n
    if q < 2:
        raise InvalidParameterError(f'r * 2^n = {q} < 2.')

    if q == 2:
        return 1.0

    return -math.log2(0.5 - math.atan((q - 2) / (2 * math.sqrt(q - 2))) / math.pi)


def h_inf_quantum(p: QuantumPdfParams, delta_u: float, n: int) -> float:
    r = p.width / delta_u
    if r * 2 ** n >= 2:
        return h_inf_q_closed_form(r, n)

    return h_inf_first_bin(ArcsineDensity(p), p.s_min, delta_u, n)


def _aligned_entropy(h_inf_q: float, h_inf: float, tolerance: float) -> float:
    if h_inf < h_inf_q - tolerance:
        raise InvalidParameterError(f'H_inf = {h_inf} меньше H_inf^Q = {h_inf_q}.')

    return max(h_inf, h_inf_q)


def gamma_adc_strict(n: int, h_inf_q: float, h_inf: float, tolerance: float = ENTROPY_TOLERANCE) -> Factor:
    h_inf = _aligned_entropy(h_inf_q, h_inf, tolerance)
    denominator = 1 + h_inf_q - h_inf

    return n / denominator if denominator > 0 else UNTRUSTED


def gamma_adc_relaxed(n: int, h_inf_q: float, h_inf: float, tolerance: float = ENTROPY_TOLERANCE) -> Factor:
    h_inf = _aligned_entropy(h_inf_q, h_inf, tolerance)
    denominator = 2 * h_inf_q - h_inf

    return n / denominator if denominator > 0 else UNTRUSTED


def gamma_nq(n: int, h_inf_q: float) -> float:
    if h_inf_q <= 0:
        raise InvalidParameterError(f'H_inf^Q должна быть > 0, получено {h_inf_q}.')

    return n / h_inf_q


def gamma_enob(n: int, effective_bits: float) -> float:
    if effective_bits <= 0:
        raise InvalidParameterError(f'ENOB должен быть > 0, получено {effective_bits}.')

    if effective_bits > n:
        raise InvalidParameterError(f'ENOB {effective_bits} больше разрядности {n}.')

    return n / effective_bits


def gamma_total(gamma_nq_value: Factor, gamma_enob_value: Factor, gamma_comparator_value: Factor) -> Factor:
    factors = (gamma_nq_value, gamma_enob_value, gamma_comparator_value)
    if any(is_untrusted(item) for item in factors):
        return UNTRUSTED

    return float(np.prod(factors))


@dataclass
class ReductionReport:
    h_inf: Optional[float]
    h_inf_q: float
    p_max: float
    gamma_classical: Factor
    gamma_comparator: Optional[Factor]
    gamma_adc_strict: Optional[Factor]
    gamma_adc_relaxed: Optional[Factor]
    gamma_nq: float
    gamma_enob: float
    gamma_total: Factor
    b_value: Optional[float]
    n_bits: int = 8
    enob: Optional[float] = None
    h_inf_classical: Optional[float] = None
    h_inf_comparator: Optional[float] = None
    conventions: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def field_names(cls) -> List[str]:
        return [item.name for item in fields(cls) if item.name != 'conventions']

    @staticmethod
    def _format(value: object) -> str:
        if value is None:
            return 'none'

        if isinstance(value, float):
            return repr(float(value))

        return str(value)

    @staticmethod
    def _parse(text: str) -> object:
        text = text.strip()
        if text == 'none':
            return None

        if text == 'untrusted':
            return UNTRUSTED

        number = float(text)

        return int(number) if number.is_integer() and '.' not in text and 'e' not in text.lower() else number

    def to_key_value(self) -> str:
        lines = [f'{name}={self._format(getattr(self, name))}' for name in self.field_names()]
        lines.extend(f'convention.{key}={value}' for key, value in sorted(self.conventions.items()))

        return '\n'.join(lines) + '\n'

    @classmethod
    def from_key_value(cls, text: str) -> 'ReductionReport':
        values: Dict[str, object] = {}
        conventions: Dict[str, str] = {}

        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith('#'):
                continue

            key, sep, value = line.partition('=')
            if not sep:
                raise DataFormatError(f'Ожидалась пара ключ=значение: {line!r}.', line=line_no)

            key = key.strip()
            if key.startswith('convention.'):
                conventions[key[len('convention.'):]] = value.strip()
                continue

            if key not in cls.field_names():
                raise DataFormatError(f'Неизвестный ключ отчета: {key}.', line=line_no)

            try:
                values[key] = cls._parse(value)

            except ValueError as e:
                raise DataFormatError(f'Неверное значение {key}: {value!r}.', line=line_no) from e

        missing = [name for name in ('h_inf_q', 'gamma_total', 'gamma_nq', 'gamma_enob') if name not in values]
        if missing:
            raise DataFormatError(f'В отчете нет ключей: {", ".join(missing)}.')

        defaults = {name: None for name in cls.field_names()}

        return cls(**{**defaults, **values, 'conventions': conventions})

    def csv_header(self) -> str:
        return ','.join(self.field_names())

    def to_csv_row(self) -> str:
        return ','.join(self._format(getattr(self, name)) for name in self.field_names())


def _conventions(alignment: str, hist: EmpiricalPdf) -> Dict[str, str]:
    return {
        'alignment': alignment,
        'b_width_threshold': str(B_WIDTH_THRESHOLD),
        'b_peak_prominence': str(B_PEAK_PROMINENCE),
        'b_smoothing_window_bins': str(smoothing_window(hist.bins)),
        'comparator_tolerance': str(COMPARATOR_TOLERANCE),
        'entropy_tolerance_bits': str(ENTROPY_TOLERANCE),
        'filter': FILTER_DISCRETIZATION,
        }


def _safe_b(hist: EmpiricalPdf) -> Optional[float]:
    try:
        return estimate_B(hist).value

    except (UnimodalPdfError, InvalidParameterError) as e:
        logger.warning('B не определен: %s', e)
        return None


def _guarded(name: str, function: Callable[..., Factor], *args: float) -> Optional[Factor]:
    try:
        return function(*args)

    except InvalidParameterError as e:
        logger.warning('%s не вычислен: %s', name, e)
        return None


def reduction_report(result: SimulationResult, adc: AdcConfig) -> ReductionReport:
    """Отчет в режиме моделирования: S_min и w берутся из параметров модели."""
    n = int(adc.n)
    density = SampleDensity(result.volts)
    bounds = result.bounds

    h_classical, p_max = min_entropy_pmax(result.histogram)
    h_q = h_inf_quantum(bounds, adc.delta_u, n)
    h_exp = h_inf_first_bin(density, bounds.s_min, adc.delta_u, n)
    h_comp = h_inf_comparator(density, bounds)
    effective_bits = enob(adc.sinad_db)

    g_nq = gamma_nq(n, h_q)
    g_enob = gamma_enob(n, effective_bits)
    g_comp = _guarded('Gamma компаратора', gamma_comparator, h_comp)

    return ReductionReport(
        h_inf=h_exp,
        h_inf_q=h_q,
        p_max=p_max,
        gamma_classical=gamma_classical(n, h_classical),
        gamma_comparator=g_comp,
        gamma_adc_strict=_guarded('Строгий Gamma_ADC', gamma_adc_strict, n, h_q, h_exp),
        gamma_adc_relaxed=_guarded('Ослабленный Gamma_ADC', gamma_adc_relaxed, n, h_q, h_exp),
        gamma_nq=g_nq,
        gamma_enob=g_enob,
        # плотность вне модели: доверять источнику нельзя
        gamma_total=UNTRUSTED if g_comp is None else gamma_total(g_nq, g_enob, g_comp),
        b_value=_safe_b(result.histogram),
        n_bits=n,
        enob=effective_bits,
        h_inf_classical=h_classical,
        h_inf_comparator=h_comp,
        conventions=_conventions('model', result.histogram)
        )


@dataclass(frozen=True)
class CurveRow:
    b: float
    gamma_nq_gamma: Factor
    n_bits: int
    sigma_s: float
    sigma_zeta: float
    flagged: bool = False


class GammaCurve:
    """Таблица B -> gamma_n^Q * Gamma и монотонная интерполяция по ней."""

    def __init__(self, rows: Iterable[CurveRow]) -> None:
        self.rows: List[CurveRow] = list(rows)

    def for_bits(self, n: int) -> 'GammaCurve':
        return GammaCurve(row for row in self.rows if row.n_bits == n)

    @property
    def bits(self) -> List[int]:
        return sorted({row.n_bits for row in self.rows})

    def _points(self) -> Tuple[np.ndarray, np.ndarray]:
        usable = sorted((row.b, float(row.gamma_nq_gamma)) for row in self.rows if not row.flagged)
        if not usable:
            raise OutOfModelError('В кривой нет пригодных строк.')

        b_values, gammas = [], []
        for b, gamma in usable:
            gamma = max(gamma, gammas[-1]) if gammas else gamma
            if b_values and b <= b_values[-1]:
                gammas[-1] = gamma
                continue

            b_values.append(b)
            gammas.append(gamma)

        return np.array(b_values), np.array(gammas)

    @property
    def domain(self) -> Tuple[float, float]:
        b_values, _ = self._points()

        return float(b_values[0]), float(b_values[-1])

    def lookup(self, b: float) -> float:
        if len(self.bits) > 1:
            raise InvalidParameterError('Кривая содержит несколько разрядностей, выберите одну через for_bits.')

        b_values, gammas = self._points()
        if b > b_values[-1] * (1 + 1e-9):
            raise OutOfModelError(f'B = {b:.4f} больше максимума кривой {b_values[-1]:.4f}.')

        # B ниже нешумовой точки: источник не хуже нешумового
        if b <= b_values[0] or len(b_values) == 1:
            return float(gammas[0])

        return float(PchipInterpolator(b_values, gammas)(b))

    def to_csv(self) -> str:
        buffer = io.StringIO(newline='')
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(CURVE_HEADER)

        for row in self.rows:
            gamma = str(UNTRUSTED) if is_untrusted(row.gamma_nq_gamma) else repr(float(row.gamma_nq_gamma))
            writer.writerow((repr(float(row.b)), gamma, row.n_bits, repr(row.sigma_s), repr(row.sigma_zeta), int(row.flagged)))

        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> 'GammaCurve':
        """Кривая из CSV; файлы без столбца flagged тоже читаются."""
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        header = None if header is None else tuple(item.strip() for item in header)

        if header not in (CURVE_HEADER, CURVE_HEADER[:-1]):
            raise DataFormatError(f'Ожидался заголовок {",".join(CURVE_HEADER)}.', line=1)

        rows = []
        for line_no, row in enumerate(reader, start=2):
            try:
                if len(row) != len(header):
                    raise ValueError(f'ожидалось {len(header)} столбцов')

                b, gamma, n_bits, sigma_s, sigma_zeta, *flagged = (item.strip() for item in row)
                rows.append(CurveRow(
                    float(b),
                    UNTRUSTED if gamma == str(UNTRUSTED) else float(gamma),
                    int(n_bits),
                    float(sigma_s),
                    float(sigma_zeta),
                    flagged=bool(int(flagged[0])) if flagged else False
                    ))

            except ValueError as e:
                raise DataFormatError(f'Неверная строка кривой: {row!r}.', line=line_no) from e

        return cls(rows)


def curve_gamma_nq(n: int) -> float:
    # кривая строится при r = 1 (усиление по умолчанию)
    return gamma_nq(n, h_inf_q_closed_form(1.0, n))


def sweep_config(base: PulseInterferenceConfig, sigma_s: float, sigma_zeta: float) -> PulseInterferenceConfig:
    laser = base.laser
    laser = LaserParams(laser.alpha, laser.repetition_period, sigma_s, sigma_s, laser.mean_s1, laser.mean_s2)

    return PulseInterferenceConfig(base.pulse, laser, NoiseParams(0.0, sigma_zeta), base.phase, base.pulse_offset)


def smeared_density(noiseless: SimulationResult, laser: LaserParams, sigma_zeta: float) -> SmearedSampleDensity:
    # шум фотодетектора аддитивен и независим: интегрируется точно
    return SmearedSampleDensity(noiseless.volts, sigma_zeta * laser.mean_level * noiseless.gain)


async def b_to_gamma_curve(
    n: int,
    sigma_s: float,
    sigma_zetas: Sequence[float],
    mc_samples: int = 200_000,
    seed: int = 0,
    base: Optional[PulseInterferenceConfig] = None,
    runner: Optional[MonteCarloRunner] = None
    ) -> Coroutine[Any, Any, GammaCurve]:
    base = PulseInterferenceConfig() if base is None else base
    adc = AdcConfig(n=n, delta_u=1.0)
    g_nq = curve_gamma_nq(n)
    configs = [sweep_config(base, sigma_s, sigma_zeta) for sigma_zeta in (0.0, *sigma_zetas)]
    # одно и то же зерно на всей сетке: общие случайные числа
    noiseless, *results = await simulate_integral_many(configs, adc, mc_samples, seed, runner)
    rows = []

    for sigma_zeta, result in zip(sigma_zetas, results):
        b_value = _safe_b(result.histogram)
        density = smeared_density(noiseless, base.laser, sigma_zeta)
        g_comp = gamma_comparator(h_inf_comparator(density, result.bounds))
        flagged = b_value is None or is_untrusted(g_comp)

        if flagged:
            logger.info('sigma_zeta=%.4g, n=%d: строка исключена из интерполяции.', sigma_zeta, n)

        rows.append(CurveRow(
            b=math.nan if b_value is None else b_value,
            gamma_nq_gamma=UNTRUSTED if is_untrusted(g_comp) else g_nq * g_comp,
            n_bits=n,
            sigma_s=sigma_s,
            sigma_zeta=float(sigma_zeta),
            flagged=flagged
            ))

    return GammaCurve(rows)


@dataclass(frozen=True)
class SweepRow:
    sigma_zeta: float
    n_bits: int
    h_inf: float
    h_inf_q: float
    h_inf_comparator: float
    gamma_adc_strict: Factor
    gamma_adc_relaxed: Factor
    gamma_comparator: Optional[Factor]
    gamma_nq: float

    @property
    def gamma_nq_gamma(self) -> Factor:
        return gamma_total(self.gamma_nq, 1.0, self.gamma_comparator)


async def noise_sweep(
    bits: Sequence[int],
    sigma_s: float,
    sigma_zetas: Sequence[float],
    mc_samples: int = 1_000_000,
    seed: int = 0,
    base: Optional[PulseInterferenceConfig] = None,
    runner: Optional[MonteCarloRunner] = None
    ) -> Coroutine[Any, Any, List[SweepRow]]:
    """Факторы редукции по сетке sigma_zeta для нескольких разрядностей АЦП."""
    base = PulseInterferenceConfig() if base is None else base
    noiseless, = await simulate_integral_many([sweep_config(base, sigma_s, 0.0)], AdcConfig(n=max(bits)), mc_samples, seed, runner)
    bounds = noiseless.bounds
    rows = []

    for sigma_zeta in sigma_zetas:
        density = smeared_density(noiseless, base.laser, sigma_zeta)
        h_comp = h_inf_comparator(density, bounds)
        g_comp = gamma_comparator(h_comp)

        for n in bits:
            h_q = h_inf_quantum(bounds, 1.0, n)
            h_exp = h_inf_first_bin(density, bounds.s_min, 1.0, n)
            rows.append(SweepRow(
                sigma_zeta=float(sigma_zeta),
                n_bits=n,
                h_inf=h_exp,
                h_inf_q=h_q,
                h_inf_comparator=h_comp,
                gamma_adc_strict=gamma_adc_strict(n, h_q, h_exp),
                gamma_adc_relaxed=gamma_adc_relaxed(n, h_q, h_exp),
                gamma_comparator=g_comp,
                gamma_nq=gamma_nq(n, h_q)
                ))

    return rows


def strict_divergence(rows: Sequence[SweepRow], n: int) -> Optional[float]:
    for row in sorted((row for row in rows if row.n_bits == n), key=lambda item: item.sigma_zeta):
        if is_untrusted(row.gamma_adc_strict):
            return row.sigma_zeta

    return None


def analyze_histogram(hist: EmpiricalPdf, adc: AdcConfig, curve: GammaCurve) -> ReductionReport:
    n = int(adc.n)
    b_stat = estimate_B(hist)
    lookup = curve.for_bits(n).lookup(b_stat.value)

    # S_min и S_max по положению максимумов
    bounds = QuantumPdfParams(*b_stat.peaks)
    h_classical, p_max = min_entropy_pmax(hist)
    h_q = h_inf_quantum(bounds, adc.delta_u, n)
    h_exp = h_inf_first_bin(hist, bounds.s_min, adc.delta_u, n)
    effective_bits = enob(adc.sinad_db)

    g_nq = curve_gamma_nq(n)
    g_enob = gamma_enob(n, effective_bits)
    g_comp = lookup / g_nq

    return ReductionReport(
        h_inf=h_exp,
        h_inf_q=h_q,
        p_max=p_max,
        gamma_classical=gamma_classical(n, h_classical),
        gamma_comparator=g_comp,
        gamma_adc_strict=_guarded('Строгий Gamma_ADC', gamma_adc_strict, n, h_q, h_exp),
        gamma_adc_relaxed=_guarded('Ослабленный Gamma_ADC', gamma_adc_relaxed, n, h_q, h_exp),
        gamma_nq=g_nq,
        gamma_enob=g_enob,
        gamma_total=gamma_total(g_nq, g_enob, g_comp),
        b_value=b_stat.value,
        n_bits=n,
        enob=effective_bits,
        h_inf_classical=h_classical,
        conventions=_conventions('peaks', hist)
        )
