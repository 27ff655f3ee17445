"""Постобработка: зерно по фон Нейману и хеширование матрицей Теплица.

Биты хранятся упакованными, младший бит байта идет первым.
Матрица Теплица: T[i][j] = seed[i - j + N - 1], первый столбец
seed[N-1 .. M+N-2] сверху вниз, первая строка seed[N-1 .. 0] слева направо.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Union

import numpy as np
from scipy.linalg import toeplitz

from qrng.model.entropy_reduction import UNTRUSTED, Factor, ReductionReport, is_untrusted
from qrng.model.exception import InvalidParameterError, NeedsMoreEntropyError, UntrustedSourceError


logger = logging.getLogger(__name__)

BIT_ORDER = 'little'
MATRIX_LAYOUT = 'T[i][j] = seed[i - j + N - 1]'
DEFAULT_BLOCK_LEN = 4096


@dataclass(frozen=True)
class BitBuffer:
    data: bytes
    length: int

    def __post_init__(self) -> None:
        if self.length < 0 or len(self.data) != (self.length + 7) // 8:
            raise InvalidParameterError(f'{len(self.data)} байт не соответствуют длине {self.length} бит.')

        tail = self.length % 8
        if tail and self.data[-1] >> tail:
            raise InvalidParameterError('Неиспользуемые биты последнего байта должны быть нулевыми.')

    @classmethod
    def from_bits(cls, bits: Union[Iterable[int], np.ndarray]) -> 'BitBuffer':
        bits = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        if bits.size and bits.max() > 1:
            raise InvalidParameterError('Биты должны быть 0 или 1.')

        return cls(np.packbits(bits, bitorder=BIT_ORDER).tobytes(), int(bits.size))

    @classmethod
    def from_bytes(cls, data: bytes, length: Optional[int] = None) -> 'BitBuffer':
        length = len(data) * 8 if length is None else length
        if length > len(data) * 8:
            raise InvalidParameterError(f'В {len(data)} байтах нет {length} бит.')

        return cls.from_bits(np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=length, bitorder=BIT_ORDER))

    @classmethod
    def empty(cls) -> 'BitBuffer':
        return cls(b'', 0)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, item: slice) -> 'BitBuffer':
        if not isinstance(item, slice):
            return int(self.to_bits()[item])

        return BitBuffer.from_bits(self.to_bits()[item])

    def __xor__(self, other: 'BitBuffer') -> 'BitBuffer':
        if len(other) != len(self):
            raise InvalidParameterError(f'Длины не совпадают: {len(self)} и {len(other)}.')

        return BitBuffer(bytes(a ^ b for a, b in zip(self.data, other.data)), self.length)

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8), count=self.length, bitorder=BIT_ORDER)

    def to_int(self) -> int:
        return int.from_bytes(self.data, BIT_ORDER)

    @classmethod
    def concat(cls, parts: Iterable['BitBuffer']) -> 'BitBuffer':
        chunks = [part.to_bits() for part in parts]

        return cls.from_bits(np.concatenate(chunks)) if chunks else cls.empty()


@dataclass(frozen=True)
class ToeplitzSeed:
    bits: BitBuffer
    # сколько сырых бит ушло на зерно; в извлечение они не попадают
    consumed_raw: int = 0

    def __len__(self) -> int:
        return len(self.bits)

    def check(self, n: int, m: int) -> None:
        if len(self) != m + n - 1:
            raise InvalidParameterError(f'Длина зерна {len(self)} != M + N - 1 = {m + n - 1}.')


@dataclass(frozen=True)
class ExtractorConfig:
    block_len: int = DEFAULT_BLOCK_LEN
    gamma_adc: Optional[Factor] = None

    def __post_init__(self) -> None:
        if self.block_len < 1:
            raise InvalidParameterError(f'extractor.block_len: должно быть >= 1, получено {self.block_len}.')

        if self.gamma_adc is not None and not is_untrusted(self.gamma_adc) and self.gamma_adc < 1:
            raise InvalidParameterError(f'Gamma_ADC должен быть >= 1, получено {self.gamma_adc}.')

    @property
    def out_len(self) -> int:
        if self.gamma_adc is None:
            raise InvalidParameterError('Gamma_ADC не задан.')

        if is_untrusted(self.gamma_adc):
            raise UntrustedSourceError()

        # floor с запасом на ошибку округления при gamma = N / M
        m = int(math.floor(self.block_len / self.gamma_adc * (1 + 1e-12)))
        if m < 1:
            raise InvalidParameterError(f'Блок N={self.block_len} слишком мал для Gamma_ADC={self.gamma_adc}.')

        return min(m, self.block_len)

    @property
    def seed_len(self) -> int:
        return self.out_len + self.block_len - 1

    def with_gamma(self, gamma_adc: Factor) -> 'ExtractorConfig':
        return ExtractorConfig(self.block_len, gamma_adc)


def von_neumann(bits: BitBuffer) -> BitBuffer:
    raw = bits.to_bits()
    pairs = raw[:len(raw) // 2 * 2].reshape(-1, 2)
    # 01 -> 0, 10 -> 1: выход равен первому биту пары
    return BitBuffer.from_bits(pairs[pairs[:, 0] != pairs[:, 1], 0])


def toeplitz_matrix(seed: ToeplitzSeed, n: int, m: int) -> np.ndarray:
    seed.check(n, m)
    s = seed.bits.to_bits()

    return toeplitz(s[n - 1:m + n - 1], s[n - 1::-1]).astype(np.uint8)


def toeplitz_hash_naive(raw: BitBuffer, seed: ToeplitzSeed, m: int) -> BitBuffer:
    t = toeplitz_matrix(seed, len(raw), m).astype(np.int64)

    return BitBuffer.from_bits((t @ raw.to_bits().astype(np.int64)) % 2)


def _reversed_int(raw: BitBuffer) -> int:
    return BitBuffer.from_bits(raw.to_bits()[::-1]).to_int()


def toeplitz_hash(raw: BitBuffer, seed: ToeplitzSeed, m: int) -> BitBuffer:
    """out_i = parity((S >> i) & R'), где R' - сырой блок в обратном порядке."""
    n = len(raw)
    if n < 1 or m < 1:
        raise InvalidParameterError(f'Нужны N >= 1 и M >= 1, получено N={n}, M={m}.')

    seed.check(n, m)
    window = seed.bits.to_int()
    reversed_raw = _reversed_int(raw)

    out = np.empty(m, dtype=np.uint8)
    for i in range(m):
        out[i] = (window & reversed_raw).bit_count() & 1
        window >>= 1

    return BitBuffer.from_bits(out)


def generate_seed(raw: BitBuffer, needed: int) -> ToeplitzSeed:
    if needed < 0:
        raise InvalidParameterError(f'Длина зерна должна быть >= 0, получено {needed}.')

    if needed == 0:
        return ToeplitzSeed(BitBuffer.empty(), 0)

    bits = raw.to_bits()
    pairs = bits[:len(bits) // 2 * 2].reshape(-1, 2)
    kept = np.cumsum(pairs[:, 0] != pairs[:, 1])
    available = int(kept[-1]) if kept.size else 0

    if available < needed:
        raise NeedsMoreEntropyError(needed - available, f'Фон Нейман дал {available} бит из {needed}.')

    last_pair = int(np.searchsorted(kept, needed))
    used = pairs[:last_pair + 1]
    seed_bits = used[used[:, 0] != used[:, 1], 0]

    return ToeplitzSeed(BitBuffer.from_bits(seed_bits), 2 * (last_pair + 1))


def trusted_report(report: ReductionReport) -> ReductionReport:
    if is_untrusted(report.gamma_total):
        raise UntrustedSourceError()

    return report


def extraction_pipeline(
    raw: BitBuffer, report: ReductionReport, cfg: ExtractorConfig, seed: Optional[ToeplitzSeed] = None
    ) -> BitBuffer:
    """Сжатие сырых бит блоками по N в блоки по M = floor(N / Gamma_ADC).

    Одно зерно на сеанс. Без явного зерна оно вырабатывается из начала
    сырой последовательности, эти биты в извлечение не идут. Неполный
    последний блок отбрасывается.
    """
    cfg = cfg.with_gamma(trusted_report(report).gamma_total)
    n, m = cfg.block_len, cfg.out_len

    if seed is None:
        seed = generate_seed(raw, cfg.seed_len)

    seed.check(n, m)
    bits = raw.to_bits()[seed.consumed_raw:]
    blocks = len(bits) // n

    if blocks == 0:
        raise InvalidParameterError(f'Сырых бит {len(bits)} меньше длины блока {n}.')

    if len(bits) % n:
        logger.debug('Отброшено %d бит неполного блока.', len(bits) % n)

    logger.info('Извлечение: %d блоков, N=%d, M=%d, Gamma_ADC=%.4g.', blocks, n, m, cfg.gamma_adc)

    return BitBuffer.concat(
        toeplitz_hash(BitBuffer.from_bits(bits[k * n:(k + 1) * n]), seed, m) for k in range(blocks)
        )


def samples_to_bits(codes: np.ndarray, n: int) -> BitBuffer:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= 2 ** n):
        raise InvalidParameterError(f'Коды должны лежать в [0, {2 ** n - 1}].')

    bits = (codes[:, np.newaxis] >> np.arange(n)) & 1

    return BitBuffer.from_bits(bits.astype(np.uint8).ravel())


@dataclass(frozen=True)
class MonobitResult:
    ones: int
    total: int

    @property
    def mean(self) -> float:
        return self.ones / self.total if self.total else math.nan

    @property
    def z_score(self) -> float:
        return (self.ones - self.total / 2) / math.sqrt(self.total / 4) if self.total else math.nan

    def passed(self, sigmas: float = 3.0) -> bool:
        return abs(self.z_score) < sigmas


def monobit(bits: BitBuffer) -> MonobitResult:
    return MonobitResult(int(bits.to_bits().sum()), len(bits))


def extraction_metadata(cfg: ExtractorConfig, seed: ToeplitzSeed, raw_len: int, out: BitBuffer) -> Dict[str, str]:
    check = monobit(out)

    return {
        'seed_len': str(len(seed)),
        'seed_consumed_raw': str(seed.consumed_raw),
        'seed_policy': 'one seed per session',
        'block_len_N': str(cfg.block_len),
        'out_len_M': str(cfg.out_len),
        'gamma_adc': str(cfg.gamma_adc if cfg.gamma_adc is not None else UNTRUSTED),
        'matrix_layout': MATRIX_LAYOUT,
        'bit_order': 'LSB-first',
        'raw_bits': str(raw_len),
        'output_bits': str(len(out)),
        'monobit_mean': repr(check.mean),
        'monobit_z': repr(check.z_score),
        }
