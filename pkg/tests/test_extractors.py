import itertools

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from qrng.model.entropy_reduction import UNTRUSTED, ReductionReport
from qrng.model.exception import InvalidParameterError, NeedsMoreEntropyError, UntrustedSourceError
from qrng.model.extractors import (
    BitBuffer, ExtractorConfig, ToeplitzSeed, extraction_metadata, extraction_pipeline, generate_seed, monobit,
    samples_to_bits, toeplitz_hash, toeplitz_hash_naive, toeplitz_matrix, von_neumann
    )


def random_bits(rng: np.random.Generator, length: int, p: float = 0.5) -> BitBuffer:
    return BitBuffer.from_bits((rng.random(length) < p).astype(np.uint8))


def random_seed(rng: np.random.Generator, n: int, m: int) -> ToeplitzSeed:
    return ToeplitzSeed(random_bits(rng, m + n - 1))


def report_with(gamma) -> ReductionReport:
    return ReductionReport(
        h_inf=None, h_inf_q=4.65, p_max=0.04, gamma_classical=1.0, gamma_comparator=1.0,
        gamma_adc_strict=None, gamma_adc_relaxed=None, gamma_nq=1.0, gamma_enob=1.0,
        gamma_total=gamma, b_value=None
        )


def test_bit_buffer_packing():
    bits = BitBuffer.from_bits([1, 0, 0, 0, 0, 0, 0, 0, 1])

    assert bits.data == b'\x01\x01'
    assert len(bits) == 9
    assert bits[8] == 1
    assert_array_equal(bits[1:4].to_bits(), [0, 0, 0])


def test_bit_buffer_rejects_dirty_tail():
    with pytest.raises(InvalidParameterError):
        BitBuffer(b'\xff', 3)


def test_bit_buffer_xor():
    a = BitBuffer.from_bits([1, 1, 0, 0])
    b = BitBuffer.from_bits([1, 0, 1, 0])

    assert_array_equal((a ^ b).to_bits(), [0, 1, 1, 0])


def test_von_neumann_rule():
    assert_array_equal(von_neumann(BitBuffer.from_bits([0, 1, 1, 0, 0, 1])).to_bits(), [0, 1, 0])


def test_von_neumann_discards():
    assert len(von_neumann(BitBuffer.from_bits([0, 0, 1, 1, 0, 0, 1, 1, 1]))) == 0


@pytest.mark.parametrize('p', [0.1, 0.5, 0.7, 0.9])
def test_von_neumann_removes_bias(p):
    out = von_neumann(random_bits(np.random.default_rng(12), 1_000_000, p=p))
    pairs = 500_000

    assert monobit(out).passed(3.0)
    # пара сохраняется с вероятностью 2 p (1 - p)
    assert len(out) / pairs == pytest.approx(2 * p * (1 - p), abs=0.01)


def test_toeplitz_zero_input():
    rng = np.random.default_rng(1)
    seed = random_seed(rng, 64, 16)

    assert not toeplitz_hash(BitBuffer.from_bits(np.zeros(64, dtype=np.uint8)), seed, 16).to_bits().any()


def test_toeplitz_two_by_one():
    seed = ToeplitzSeed(BitBuffer.from_bits([1, 1]))

    assert_array_equal(toeplitz_matrix(seed, 2, 1), [[1, 1]])
    assert_array_equal(toeplitz_hash(BitBuffer.from_bits([1, 0]), seed, 1).to_bits(), [1])
    assert_array_equal(toeplitz_hash(BitBuffer.from_bits([1, 1]), seed, 1).to_bits(), [0])


def test_toeplitz_matrix_layout():
    seed = ToeplitzSeed(BitBuffer.from_bits([0, 1, 1, 0, 1]))
    matrix = toeplitz_matrix(seed, 3, 3)
    s = seed.bits.to_bits()

    for i, j in itertools.product(range(3), range(3)):
        assert matrix[i, j] == s[i - j + 2]


def test_toeplitz_exhaustive():
    seed = random_seed(np.random.default_rng(2), 8, 4)

    for value in range(2 ** 8):
        raw = BitBuffer.from_bits([(value >> k) & 1 for k in range(8)])
        assert toeplitz_hash(raw, seed, 4) == toeplitz_hash_naive(raw, seed, 4)


def test_toeplitz_random_blocks():
    rng = np.random.default_rng(3)
    seed = random_seed(rng, 4096, 1024)

    for _ in range(20):
        raw = random_bits(rng, 4096)
        assert toeplitz_hash(raw, seed, 1024) == toeplitz_hash_naive(raw, seed, 1024)


@pytest.mark.slow
def test_toeplitz_random_blocks_full():
    rng = np.random.default_rng(4)

    for _ in range(10_000):
        seed = random_seed(rng, 4096, 1024)
        raw = random_bits(rng, 4096)
        assert toeplitz_hash(raw, seed, 1024) == toeplitz_hash_naive(raw, seed, 1024)


def test_toeplitz_linear():
    rng = np.random.default_rng(5)
    seed = random_seed(rng, 256, 64)
    a, b = random_bits(rng, 256), random_bits(rng, 256)

    assert toeplitz_hash(a ^ b, seed, 64) == toeplitz_hash(a, seed, 64) ^ toeplitz_hash(b, seed, 64)


def test_toeplitz_linear_many_pairs():
    rng = np.random.default_rng(15)

    for _ in range(10_000):
        seed = random_seed(rng, 64, 16)
        a, b = random_bits(rng, 64), random_bits(rng, 64)
        assert toeplitz_hash(a ^ b, seed, 16) == toeplitz_hash(a, seed, 16) ^ toeplitz_hash(b, seed, 16)


def test_toeplitz_deterministic():
    rng = np.random.default_rng(6)
    seed = random_seed(rng, 512, 128)
    raw = random_bits(rng, 512)

    assert toeplitz_hash(raw, seed, 128) == toeplitz_hash(raw, seed, 128)


def test_toeplitz_seed_length():
    rng = np.random.default_rng(7)

    with pytest.raises(InvalidParameterError):
        toeplitz_hash(random_bits(rng, 16), random_seed(rng, 16, 4), 5)


def test_seed_empty():
    seed = generate_seed(BitBuffer.from_bits([1, 0]), 0)

    assert len(seed) == 0
    assert seed.consumed_raw == 0


def test_seed_constant_raw():
    with pytest.raises(NeedsMoreEntropyError) as error:
        generate_seed(BitBuffer.from_bits(np.ones(1000, dtype=np.uint8)), 10)

    assert error.value.deficit == 10


def test_seed_from_fair_bits():
    needed = 5119
    seed = generate_seed(random_bits(np.random.default_rng(8), 5 * needed), needed)

    assert len(seed) == needed
    assert seed.consumed_raw % 2 == 0
    assert seed.consumed_raw <= 5 * needed


def test_seed_consumption_is_minimal():
    seed = generate_seed(BitBuffer.from_bits([0, 0, 1, 0, 1, 1, 0, 1, 1, 0]), 2)

    assert_array_equal(seed.bits.to_bits(), [1, 0])
    assert seed.consumed_raw == 8


@pytest.mark.parametrize('gamma, block_len, expected', [(1.0, 4096, 4096), (4.0, 4096, 1024), (3.0, 300, 100)])
def test_out_len(gamma, block_len, expected):
    assert ExtractorConfig(block_len, gamma).out_len == expected


def test_out_len_untrusted():
    with pytest.raises(UntrustedSourceError):
        ExtractorConfig(4096, UNTRUSTED).out_len


def test_pipeline_square_matrix():
    rng = np.random.default_rng(9)
    cfg = ExtractorConfig(block_len=64)
    seed = random_seed(rng, 64, 64)
    raw = random_bits(rng, 64 * 5 + 10)

    out = extraction_pipeline(raw, report_with(1.0), cfg, seed)

    assert len(out) == 64 * 5


def test_pipeline_compression():
    rng = np.random.default_rng(10)
    raw = random_bits(rng, 200_000)

    out = extraction_pipeline(raw, report_with(4.0), ExtractorConfig(block_len=4096))
    seed_raw = generate_seed(raw, 1024 + 4096 - 1).consumed_raw

    assert len(out) == (len(raw) - seed_raw) // 4096 * 1024


def test_pipeline_untrusted():
    with pytest.raises(UntrustedSourceError):
        extraction_pipeline(random_bits(np.random.default_rng(0), 10_000), report_with(UNTRUSTED), ExtractorConfig())


def test_pipeline_reuses_seed():
    rng = np.random.default_rng(11)
    raw = random_bits(rng, 50_000)
    cfg = ExtractorConfig(block_len=1024)
    seed = generate_seed(raw, 512 + 1024 - 1)

    first = extraction_pipeline(raw, report_with(2.0), cfg, seed)
    second = extraction_pipeline(raw, report_with(2.0), cfg, seed)

    assert first == second
    assert first == extraction_pipeline(raw, report_with(2.0), cfg)


def test_pipeline_needs_a_block():
    rng = np.random.default_rng(12)

    with pytest.raises(InvalidParameterError):
        extraction_pipeline(random_bits(rng, 50), report_with(1.0), ExtractorConfig(block_len=64), random_seed(rng, 64, 64))


def test_samples_to_bits():
    assert_array_equal(samples_to_bits(np.array([1, 6]), 3).to_bits(), [1, 0, 0, 0, 1, 1])


def test_samples_to_bits_range():
    with pytest.raises(InvalidParameterError):
        samples_to_bits(np.array([8]), 3)


def test_monobit():
    result = monobit(BitBuffer.from_bits([1, 1, 1, 0]))

    assert result.mean == 0.75
    assert result.z_score == pytest.approx(1.0)


def test_metadata():
    rng = np.random.default_rng(13)
    cfg = ExtractorConfig(64, 2.0)
    seed = random_seed(rng, 64, 32)
    out = random_bits(rng, 32)

    meta = extraction_metadata(cfg, seed, 1000, out)

    assert meta['out_len_M'] == '32'
    assert meta['bit_order'] == 'LSB-first'
    assert meta['output_bits'] == '32'
