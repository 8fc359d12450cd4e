"""Tests for the Toeplitz extractor: the naive matrix path, the blocked
FFT path, their agreement, two-universality of the hash family, and the
packed bit-file format.
"""

import math

import numpy as np
import pytest

from dirne.extractor import (
    MAX_BLOCK_LEN,
    WORKERS_ENV,
    PrecisionError,
    ToeplitzJob,
    extract,
    read_bit_count,
    read_bit_file,
    toeplitz_fft,
    toeplitz_naive,
    worker_count,
    write_bit_file,
)


def random_instance(rng, max_m=64, max_n=256):
    """One random (seed, input, m, block_len) extraction instance."""
    n = int(rng.integers(1, max_n + 1))
    m = int(rng.integers(1, min(max_m, n) + 1))
    block_len = int(rng.integers(1, n + 1))
    seed = rng.integers(0, 2, size=m + n - 1, dtype=np.uint8)
    v = rng.integers(0, 2, size=n, dtype=np.uint8)
    return seed, v, m, block_len


class TestWorkerCount:
    """Worker-count resolution through the environment."""

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert worker_count() == 3

    def test_default_is_positive(self, monkeypatch):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert worker_count() >= 1

    def test_rejects_garbage(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "many")
        with pytest.raises(ValueError):
            worker_count()


class TestToeplitzJob:
    """Validation of the transform geometry."""

    def test_accepts_consistent_geometry(self):
        job = ToeplitzJob(n_bits=16, m_bits=4, block_len=8, seed=np.ones(19, dtype=np.uint8))
        assert job.n_bits == 16

    def test_block_cap_constant(self):
        assert MAX_BLOCK_LEN == 1 << 26

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(m_bits=0),
            dict(m_bits=17),
            dict(block_len=0),
            dict(block_len=17),  # block may not exceed the input length
        ],
    )
    def test_rejects_bad_geometry(self, kwargs):
        good = dict(n_bits=16, m_bits=4, block_len=8)
        good.update(kwargs)
        seed = np.ones(good["m_bits"] + good["n_bits"] - 1, dtype=np.uint8)
        if good["m_bits"] < 1:
            seed = np.ones(8, dtype=np.uint8)
        with pytest.raises(ValueError):
            ToeplitzJob(seed=seed, **good)

    def test_rejects_wrong_seed_length(self):
        with pytest.raises(ValueError, match="m \\+ n"):
            ToeplitzJob(n_bits=16, m_bits=4, block_len=8, seed=np.ones(18, dtype=np.uint8))

    def test_rejects_non_bit_seed(self):
        seed = np.full(19, 2, dtype=np.uint8)
        with pytest.raises(ValueError):
            ToeplitzJob(n_bits=16, m_bits=4, block_len=8, seed=seed)


class TestToeplitzNaive:
    """The direct matrix-vector reference path."""

    def test_hand_worked_example(self):
        """3×4 matrix from a 6-bit seed applied to (1, 1, 0, 1)."""
        seed = np.array([1, 0, 1, 1, 0, 0], dtype=np.uint8)
        v = np.array([1, 1, 0, 1], dtype=np.uint8)
        assert toeplitz_naive(seed, v, 3).tolist() == [1, 1, 1]

    def test_linearity(self):
        """Toeplitz hashing is linear over GF(2)."""
        rng = np.random.default_rng(5)
        seed = rng.integers(0, 2, size=47, dtype=np.uint8)
        u = rng.integers(0, 2, size=32, dtype=np.uint8)
        v = rng.integers(0, 2, size=32, dtype=np.uint8)
        direct = toeplitz_naive(seed, u ^ v, 16)
        split = toeplitz_naive(seed, u, 16) ^ toeplitz_naive(seed, v, 16)
        assert np.array_equal(direct, split)

    def test_domain(self):
        seed = np.ones(6, dtype=np.uint8)
        v = np.ones(4, dtype=np.uint8)
        with pytest.raises(ValueError):
            toeplitz_naive(seed, v, 0)
        with pytest.raises(ValueError):
            toeplitz_naive(seed, v, 5)
        with pytest.raises(ValueError):
            toeplitz_naive(np.ones(7, dtype=np.uint8), v, 3)


class TestToeplitzFft:
    """The blocked FFT path against the naive reference."""

    def test_matches_naive_on_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(30):
            seed, v, m, block_len = random_instance(rng)
            job = ToeplitzJob(n_bits=v.size, m_bits=m, block_len=block_len, seed=seed)
            assert np.array_equal(toeplitz_fft(job, v), toeplitz_naive(seed, v, m))

    def test_ragged_final_block(self):
        """A block length that does not divide n leaves a short tail block."""
        rng = np.random.default_rng(8)
        seed = rng.integers(0, 2, size=99 + 17 - 1, dtype=np.uint8)
        v = rng.integers(0, 2, size=99, dtype=np.uint8)
        job = ToeplitzJob(n_bits=99, m_bits=17, block_len=40, seed=seed)
        assert np.array_equal(toeplitz_fft(job, v), toeplitz_naive(seed, v, 17))

    def test_worker_count_does_not_change_output(self):
        rng = np.random.default_rng(13)
        seed = rng.integers(0, 2, size=512 + 64 - 1, dtype=np.uint8)
        v = rng.integers(0, 2, size=512, dtype=np.uint8)
        job = ToeplitzJob(n_bits=512, m_bits=64, block_len=128, seed=seed)
        single = toeplitz_fft(job, v, workers=1)
        multi = toeplitz_fft(job, v, workers=4)
        assert np.array_equal(single, multi)

    def test_rejects_wrong_input_length(self):
        job = ToeplitzJob(n_bits=16, m_bits=4, block_len=8, seed=np.ones(19, dtype=np.uint8))
        with pytest.raises(ValueError):
            toeplitz_fft(job, np.ones(15, dtype=np.uint8))

    def test_precision_error_is_a_runtime_error(self):
        assert issubclass(PrecisionError, RuntimeError)


class TestTwoUniversality:
    """Collision statistics of the hash family over random seeds.

    Two inputs differing in the bits {3, 17, 40} collide exactly when the
    seed's Toeplitz matrix annihilates their difference, which for a
    two-universal family happens with probability 2^−m over the seed.
    """

    M_BITS = 6
    N_BITS = 64
    DIFF_POSITIONS = (3, 17, 40)
    N_SEEDS = 100_000

    def test_collision_fraction(self):
        rng = np.random.default_rng(77)
        seeds = rng.integers(
            0, 2, size=(self.N_SEEDS, self.M_BITS + self.N_BITS - 1), dtype=np.uint8
        )
        # Row i of the matrix reads seed[(n − 1) + i − j]; only the columns
        # at the differing positions contribute to T·(u ⊕ v).
        out = np.zeros((self.N_SEEDS, self.M_BITS), dtype=np.uint8)
        for i in range(self.M_BITS):
            for pos in self.DIFF_POSITIONS:
                out[:, i] ^= seeds[:, (self.N_BITS - 1) + i - pos]
        collisions = int(np.all(out == 0, axis=1).sum())
        assert collisions == 1602  # deterministic given the seed stream
        expected = self.N_SEEDS * 2.0**-self.M_BITS
        sigma = math.sqrt(expected * (1.0 - 2.0**-self.M_BITS))
        assert abs(collisions - expected) <= 4.0 * sigma

    def test_column_reading_matches_naive_path(self):
        """The vectorized collision count uses the same matrix convention."""
        rng = np.random.default_rng(77)
        seeds = rng.integers(
            0, 2, size=(self.N_SEEDS, self.M_BITS + self.N_BITS - 1), dtype=np.uint8
        )
        diff = np.zeros(self.N_BITS, dtype=np.uint8)
        diff[list(self.DIFF_POSITIONS)] = 1
        for row in seeds[:100]:
            direct = toeplitz_naive(row, diff, self.M_BITS)
            via_columns = np.zeros(self.M_BITS, dtype=np.uint8)
            for i in range(self.M_BITS):
                for pos in self.DIFF_POSITIONS:
                    via_columns[i] ^= row[(self.N_BITS - 1) + i - pos]
            assert np.array_equal(direct, via_columns)


class TestExtract:
    """The quotable-error wrapper around the transform."""

    def test_output_and_error(self):
        rng = np.random.default_rng(21)
        seed = rng.integers(0, 2, size=100 + 24 - 1, dtype=np.uint8)
        v = rng.integers(0, 2, size=100, dtype=np.uint8)
        job = ToeplitzJob(n_bits=100, m_bits=24, block_len=100, seed=seed)
        bits, eps = extract(job, v, k_min_entropy=80.0)
        assert np.array_equal(bits, toeplitz_naive(seed, v, 24))
        assert eps == 2.0 ** (-(80.0 - 24.0) / 2.0)

    def test_rejects_output_beyond_entropy(self):
        job = ToeplitzJob(n_bits=16, m_bits=8, block_len=8, seed=np.ones(23, dtype=np.uint8))
        with pytest.raises(ValueError):
            extract(job, np.ones(16, dtype=np.uint8), k_min_entropy=4.0)


class TestBitFiles:
    """The counted packed-bit file format."""

    @pytest.mark.parametrize("n_bits", [0, 1, 12, 4099])
    def test_roundtrip(self, tmp_path, n_bits):
        rng = np.random.default_rng(n_bits)
        bits = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
        path = tmp_path / "bits.bin"
        write_bit_file(path, bits)
        assert read_bit_count(path) == n_bits
        assert np.array_equal(read_bit_file(path), bits)

    def test_header_is_eight_bytes(self, tmp_path):
        path = tmp_path / "bits.bin"
        write_bit_file(path, np.ones(9, dtype=np.uint8))
        raw = path.read_bytes()
        assert len(raw) == 8 + 2  # 8-byte count header + ⌈9/8⌉ payload bytes
        assert int.from_bytes(raw[:8], "little") == 9

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "bits.bin"
        path.write_bytes(b"\x04\x00\x00")
        with pytest.raises(ValueError, match="truncated"):
            read_bit_count(path)
        with pytest.raises(ValueError, match="truncated"):
            read_bit_file(path)

    def test_short_payload(self, tmp_path):
        path = tmp_path / "bits.bin"
        write_bit_file(path, np.ones(32, dtype=np.uint8))
        raw = path.read_bytes()
        path.write_bytes(raw[:-2])
        assert read_bit_count(path) == 32  # headers stay readable
        with pytest.raises(ValueError, match="fewer than"):
            read_bit_file(path)
