r"""Toeplitz hashing over GF(2): seeded strong extraction from weak bits.

A binary Toeplitz matrix ``T`` (constant along diagonals) is defined by
one seed bit vector ``s`` of length ``m + n − 1``::

    T[i, j] = s[(n − 1) + (i − j)],   0 ≤ i < m,  0 ≤ j < n

so ``s`` reads off the first row right-to-left followed by the first
column top-to-bottom.  The extractor output is ``T·v mod 2``.  Toeplitz
matrices form a two-universal hash family, which makes this a
quantum-proof strong extractor with error ``2^{−(k − m)/2}`` on any
``n``-bit source of min-entropy ``k`` — computed here by
:func:`dirne.budget.extractor_error` — and the seed stays uniform and
reusable afterwards.

``toeplitz_naive`` multiplies the materialized matrix (the oracle
path); ``toeplitz_fft`` computes the same product as a sum of short
convolutions, block by block over column ranges, evaluated by real FFTs
with exact-integer rounding.  The two are bit-identical; the FFT path
turns a dense ``m × n`` product into ``O((n/l)·(l + m)·log(l + m))``
work.

Bit files are raw little-endian packed bits behind an 8-byte
little-endian bit-count header; within each byte, bit 0 is the first
bit.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .budget import extractor_error

__all__ = [
    "MAX_BLOCK_LEN",
    "PrecisionError",
    "ToeplitzJob",
    "toeplitz_naive",
    "toeplitz_fft",
    "extract",
    "worker_count",
    "write_bit_file",
    "read_bit_file",
    "read_bit_count",
]

# Convolution coefficients are bounded by the block width; capping the
# width keeps them (and the transform's intermediate values) exactly
# representable in double precision with a wide safety margin.
MAX_BLOCK_LEN = 1 << 26

_HEADER = struct.Struct("<Q")

WORKERS_ENV = "DIRNE_WORKERS"


class PrecisionError(RuntimeError):
    """A transform coefficient rounded too far from an integer to trust."""


def worker_count() -> int:
    """Worker threads for the transforms: ``DIRNE_WORKERS`` or all CPUs."""
    value = os.environ.get(WORKERS_ENV)
    if value is not None:
        workers = int(value)
        if workers < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {value!r}")
        return workers
    return os.cpu_count() or 1


def _as_bits(arr: object, name: str) -> np.ndarray:
    bits = np.asarray(arr)
    if bits.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError(f"{name} must contain only bits")
    return bits.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ToeplitzJob:
    """Shape, blocking, and seed of one Toeplitz extraction.

    The seed must hold exactly ``m_bits + n_bits − 1`` bits.  The input
    is processed in column blocks of ``block_len``; any block length
    gives the same output, larger blocks trade memory for fewer
    transforms.
    """

    n_bits: int
    m_bits: int
    block_len: int
    seed: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.m_bits <= self.n_bits:
            raise ValueError(
                f"output length must satisfy 1 ≤ m ≤ n, got m={self.m_bits} n={self.n_bits}"
            )
        if not 1 <= self.block_len <= min(self.n_bits, MAX_BLOCK_LEN):
            raise ValueError(
                f"block length must lie in [1, min(n, {MAX_BLOCK_LEN})], got {self.block_len}"
            )
        seed = _as_bits(self.seed, "seed")
        expected = self.m_bits + self.n_bits - 1
        if seed.size != expected:
            raise ValueError(f"seed must hold m + n − 1 = {expected} bits, got {seed.size}")
        object.__setattr__(self, "seed", seed)


def toeplitz_naive(seed: np.ndarray, input_bits: np.ndarray, m_bits: int) -> np.ndarray:
    """Materialize the Toeplitz matrix and multiply mod 2 (oracle path).

    Quadratic in ``m·n``; intended for cross-checking the transform path
    on small instances.
    """
    v = _as_bits(input_bits, "input")
    s = _as_bits(seed, "seed")
    n = v.size
    m = int(m_bits)
    if not 1 <= m:
        raise ValueError(f"output length must be positive, got {m}")
    if n < m:
        raise ValueError(f"output length must satisfy m ≤ n, got m={m} n={n}")
    if s.size != m + n - 1:
        raise ValueError(f"seed must hold m + n − 1 = {m + n - 1} bits, got {s.size}")
    i = np.arange(m, dtype=np.int64)[:, None]
    j = np.arange(n, dtype=np.int64)[None, :]
    matrix = s[(n - 1) + (i - j)]
    return (matrix.astype(np.int64) @ v.astype(np.int64) & 1).astype(np.uint8)


def toeplitz_fft(job: ToeplitzJob, input_bits: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Toeplitz product mod 2 as XOR of per-block convolutions.

    The columns ``[start, start + w)`` contribute
    ``Σ_j seed[(n−1) + i − (start+j)]·v[start+j]``, which is a slice of
    the linear convolution of the input block against the seed slice
    covering those diagonals.  Each convolution runs as a real FFT of
    length ``next_fast_len(w + m − 1)``; the wrapped (circular) tail
    would land past every nonzero linear coefficient, so the slice read
    off is exact.  A final block shorter than ``block_len`` runs at its
    true width, which gives the same bits as zero-padding its input to
    the nominal width.  Coefficients are integers bounded by the block
    width; each is rounded to the nearest integer and the job aborts if
    any lands 0.25 or farther away.

    Raises
    ------
    PrecisionError
        If a transform coefficient fails the rounding-distance guard.
    """
    v = _as_bits(input_bits, "input")
    if v.size != job.n_bits:
        raise ValueError(f"input must hold {job.n_bits} bits, got {v.size}")
    if workers is None:
        workers = worker_count()
    n, m = job.n_bits, job.m_bits
    seed = job.seed
    out = np.zeros(m, dtype=np.uint8)
    for start in range(0, n, job.block_len):
        w = min(job.block_len, n - start)
        # Seed slice covering diagonals (n−1) + i − j for i ∈ [0, m),
        # j ∈ [start, start + w): indices n−1−start−w+1 … n−1−start+m−1.
        a = seed[n - start - w : n - start + m - 1].astype(np.float64)
        block = v[start : start + w].astype(np.float64)
        length = scipy.fft.next_fast_len(w + m - 1, real=True)
        conv = scipy.fft.irfft(
            scipy.fft.rfft(a, length, workers=workers)
            * scipy.fft.rfft(block, length, workers=workers),
            length,
            workers=workers,
        )[w - 1 : w - 1 + m]
        rounded = np.rint(conv)
        drift = np.abs(conv - rounded).max() if conv.size else 0.0
        if drift >= 0.25:
            raise PrecisionError(
                f"transform coefficient drifted {drift:.3g} from an integer "
                f"(block at column {start}); reduce the block length"
            )
        out ^= rounded.astype(np.int64).astype(np.uint8) & 1
    return out


def extract(
    job: ToeplitzJob,
    input_bits: np.ndarray,
    k_min_entropy: float,
    workers: int | None = None,
) -> tuple[np.ndarray, float]:
    """Hash ``input_bits`` down to ``m_bits`` near-uniform bits.

    Returns the output bits and the extraction error
    ``2^{−(k − m)/2}`` for a source of min-entropy ``k_min_entropy``.
    The seed is untouched and remains reusable (strong-extractor
    contract).

    Raises
    ------
    ValueError
        If ``m_bits`` exceeds the source min-entropy (no error bound
        below 1 would hold).
    """
    if job.m_bits > k_min_entropy:
        raise ValueError(
            f"cannot extract {job.m_bits} bits from min-entropy {k_min_entropy}"
        )
    return toeplitz_fft(job, input_bits, workers=workers), extractor_error(
        k_min_entropy, job.m_bits
    )


def write_bit_file(path: str | Path, bits: np.ndarray) -> None:
    """Write bits as packed bytes behind an 8-byte little-endian bit count."""
    arr = _as_bits(bits, "bits")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(arr.size))
        fh.write(np.packbits(arr, bitorder="little").tobytes())


def read_bit_count(path: str | Path) -> int:
    """Read only the bit-count header (cheap pre-validation of lengths)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ValueError(f"{path}: truncated bit-file header")
    return _HEADER.unpack(header)[0]


def read_bit_file(path: str | Path) -> np.ndarray:
    """Read a packed bit file back into a 0/1 uint8 array."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated bit-file header")
        (count,) = _HEADER.unpack(header)
        payload = np.frombuffer(fh.read(), dtype=np.uint8)
    if payload.size * 8 < count:
        raise ValueError(f"{path}: payload holds fewer than {count} bits")
    return np.unpackbits(payload, bitorder="little", count=count)
