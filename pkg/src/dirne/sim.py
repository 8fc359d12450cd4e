r"""Honest-device simulation of the spot-checking protocol.

Each round is a test round with probability γ.  Test rounds draw uniform
inputs ``(x, y)``, sample outcomes ``(a, b)`` from a device model, and
record the game indicator ``u = 1`` iff ``a ⊕ b = x·y``.  Generation
rounds fix the inputs to ``(0, 0)``, overwrite the published ``b`` with
0, and mark ``u`` as undefined.  The run aborts when the number of won
test rounds falls below ``n·γ·(ω_exp − δ)``.

The module also covers the surrounding experimental arithmetic: score
estimation from count tables, heralding-efficiency ratios, spacelike-
separation checks for a two-station geometry, and exact biased-bit
generation from a uniform source by interval subdivision.

Randomness discipline
---------------------
Simulation randomness comes from a counter-based generator (Philox)
keyed by ``(seed, role)`` with one stream per role: round-type draws,
Alice's input, Bob's input, and device sampling (two draws per round).
Every role consumes its per-round quota on every round — whether or not
the values are used — so the draw consumed by round ``i`` depends only
on ``i``.  Blocks of rounds are then simulated independently by seeking
each stream to the block start, which makes the transcript bit-identical
under any block partitioning (the counter advances in 4-draw blocks, so
block sizes must be multiples of 4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "DeviceModel",
    "TrialTally",
    "Transcript",
    "SpacetimeGeometry",
    "SpacetimeVerdict",
    "quantum_setting_distribution",
    "run_protocol",
    "chsh_score_from_counts",
    "heralding_efficiency",
    "spacetime_check",
    "biased_bits",
]

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Philox role keys: one independent stream per randomness consumer.
_ROLE_TEST, _ROLE_X, _ROLE_Y, _ROLE_DEVICE = 0, 1, 2, 3
_DRAWS_PER_ROUND = {_ROLE_TEST: 1, _ROLE_X: 1, _ROLE_Y: 1, _ROLE_DEVICE: 2}
# Philox emits 4 64-bit words per counter increment; streams can only be
# seeked to multiples of 4 draws.
_COUNTER_BLOCK = 4


@dataclass(frozen=True, eq=False)
class DeviceModel:
    """Conditional outcome distribution of an honest device pair.

    ``joint[x, y, a, b]`` is the probability of outcomes ``(a, b)`` given
    inputs ``(x, y)``; each input slice must be a probability
    distribution.  Sampling factorizes it as ``P(a | x, y)`` followed by
    ``P(b | x, y, a)``, one uniform draw each.

    Construct via :meth:`bernoulli` or :meth:`quantum`.
    """

    joint: np.ndarray
    variant: str
    label: str
    p_a_one: np.ndarray = field(init=False, repr=False)
    p_b_one: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        joint = np.asarray(self.joint, dtype=np.float64)
        if joint.shape != (2, 2, 2, 2):
            raise ValueError(f"joint table must have shape (2, 2, 2, 2), got {joint.shape}")
        if np.any(joint < -1e-12):
            raise ValueError("joint table has a negative probability")
        joint = np.clip(joint, 0.0, None)
        sums = joint.sum(axis=(2, 3))
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("per-setting outcome distributions must each sum to 1")
        p_a_one = joint[:, :, 1, :].sum(axis=2)
        marg = joint.sum(axis=3)
        with np.errstate(invalid="ignore"):
            p_b_one = np.where(marg > 0.0, joint[:, :, :, 1] / np.where(marg > 0.0, marg, 1.0), 0.0)
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "p_a_one", p_a_one)
        object.__setattr__(self, "p_b_one", p_b_one)

    @classmethod
    def bernoulli(cls, win_prob: float) -> "DeviceModel":
        """Device that wins each round independently with probability ``win_prob``.

        ``a`` is a fair coin; ``b`` equals the winning response
        ``a ⊕ (x·y)`` with probability ``win_prob``, its complement
        otherwise.
        """
        if not 0.0 <= win_prob <= 1.0:
            raise ValueError(f"win probability must lie in [0, 1], got {win_prob}")
        joint = np.empty((2, 2, 2, 2))
        for x in (0, 1):
            for y in (0, 1):
                for a in (0, 1):
                    for b in (0, 1):
                        wins = (a ^ b) == (x & y)
                        joint[x, y, a, b] = 0.5 * (win_prob if wins else 1.0 - win_prob)
        return cls(joint=joint, variant="bernoulli", label=f"bernoulli(win_prob={win_prob!r})")

    @classmethod
    def quantum(
        cls,
        theta: float,
        alice_angles: tuple[float, float],
        bob_angles: tuple[float, float],
        eta_a: float = 1.0,
        eta_b: float = 1.0,
    ) -> "DeviceModel":
        """Single-photon-pair model with lossy threshold detectors.

        The pair is in the partially entangled polarization state
        ``cos θ·|HV⟩ + sin θ·|VH⟩``.  Station inputs select analyzer
        angles ``alice_angles[x]`` / ``bob_angles[y]`` (radians); an
        outcome of 1 means the station's detector clicked, which happens
        with efficiency ``eta_a`` / ``eta_b`` when the photon passes the
        analyzer.  No dark counts and no multi-pair events: a missed
        detection is binned as outcome 0.
        """
        if not 0.0 <= eta_a <= 1.0 or not 0.0 <= eta_b <= 1.0:
            raise ValueError("detection efficiencies must lie in [0, 1]")
        for angle in (theta, *alice_angles, *bob_angles):
            if not math.isfinite(angle):
                raise ValueError("angles must be finite")
        joint = np.empty((2, 2, 2, 2))
        for x in (0, 1):
            for y in (0, 1):
                phi_a, phi_b = alice_angles[x], bob_angles[y]
                # Amplitude for both analyzers passing their photon.
                amp = math.cos(theta) * math.cos(phi_a) * math.sin(phi_b) + math.sin(
                    theta
                ) * math.sin(phi_a) * math.cos(phi_b)
                p_pass_a = math.cos(theta) ** 2 * math.cos(phi_a) ** 2 + math.sin(
                    theta
                ) ** 2 * math.sin(phi_a) ** 2
                p_pass_b = math.cos(theta) ** 2 * math.sin(phi_b) ** 2 + math.sin(
                    theta
                ) ** 2 * math.cos(phi_b) ** 2
                p11 = eta_a * eta_b * amp * amp
                pa1 = eta_a * p_pass_a
                pb1 = eta_b * p_pass_b
                joint[x, y, 1, 1] = p11
                joint[x, y, 1, 0] = pa1 - p11
                joint[x, y, 0, 1] = pb1 - p11
                joint[x, y, 0, 0] = 1.0 - pa1 - pb1 + p11
        label = (
            f"quantum(theta={theta!r}, alice_angles={tuple(alice_angles)!r}, "
            f"bob_angles={tuple(bob_angles)!r}, eta_a={eta_a!r}, eta_b={eta_b!r})"
        )
        return cls(joint=joint, variant="quantum", label=label)

    def win_probability(self, x: int, y: int) -> float:
        """Probability of ``a ⊕ b = x·y`` under inputs ``(x, y)``."""
        slice_ = self.joint[x, y]
        if x & y:
            return float(slice_[0, 1] + slice_[1, 0])
        return float(slice_[0, 0] + slice_[1, 1])

    def expected_score(self) -> float:
        """Win probability averaged uniformly over the four inputs."""
        return sum(self.win_probability(x, y) for x in (0, 1) for y in (0, 1)) / 4.0


def quantum_setting_distribution(model: DeviceModel, x: int, y: int) -> np.ndarray:
    """Outcome distribution ``[[p00, p01], [p10, p11]]`` (indexed ``[a][b]``) of a quantum model at inputs ``(x, y)``.

    Raises
    ------
    ValueError
        If the model is not the quantum variant (the projection math
        this accessor exposes does not exist for other variants), or the
        inputs are not bits.
    """
    if model.variant != "quantum":
        raise ValueError(f"expected a quantum device model, got variant {model.variant!r}")
    if x not in (0, 1) or y not in (0, 1):
        raise ValueError(f"inputs must be bits, got ({x}, {y})")
    return model.joint[x, y].copy()


@dataclass
class TrialTally:
    """Outcome counts, split by round type.

    ``counts[x, y, a, b]`` counts test rounds; ``gen_counts[a, b]``
    counts generation rounds by their raw (pre-overwrite) outcomes.
    """

    counts: np.ndarray
    gen_counts: np.ndarray

    @classmethod
    def zeros(cls) -> "TrialTally":
        return cls(
            counts=np.zeros((2, 2, 2, 2), dtype=np.int64),
            gen_counts=np.zeros((2, 2), dtype=np.int64),
        )

    @property
    def n_test(self) -> int:
        return int(self.counts.sum())

    @property
    def n_gen(self) -> int:
        return int(self.gen_counts.sum())

    def to_text(self, path: str | Path) -> None:
        """Write the tally in the count-table text format.

        One ``x y a b count`` line per test-round cell, then one
        ``gen a b count`` line per generation-round cell.
        """
        lines = []
        for x in (0, 1):
            for y in (0, 1):
                for a in (0, 1):
                    for b in (0, 1):
                        lines.append(f"{x} {y} {a} {b} {self.counts[x, y, a, b]}")
        for a in (0, 1):
            for b in (0, 1):
                lines.append(f"gen {a} {b} {self.gen_counts[a, b]}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_text(cls, path: str | Path) -> "TrialTally":
        """Read a count table.

        Accepts ``x y a b count`` and ``gen a b count`` lines in any
        order; repeated cells accumulate.  Blank lines and ``#`` comments
        are ignored; generation lines may be absent (counts stay zero).
        """
        tally = cls.zeros()
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                if tokens[0] == "gen":
                    if len(tokens) != 4:
                        raise ValueError
                    a, b, count = (int(t) for t in tokens[1:])
                    if a not in (0, 1) or b not in (0, 1) or count < 0:
                        raise ValueError
                    tally.gen_counts[a, b] += count
                else:
                    if len(tokens) != 5:
                        raise ValueError
                    x, y, a, b, count = (int(t) for t in tokens)
                    if any(v not in (0, 1) for v in (x, y, a, b)) or count < 0:
                        raise ValueError
                    tally.counts[x, y, a, b] += count
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed count line: {raw!r}") from None
        return tally


@dataclass
class Transcript:
    """Result of one simulated run.

    ``a_bits`` packs every round's ``a`` outcome and ``b_test_bits``
    packs the test rounds' (raw) ``b`` outcomes, little-endian within
    bytes; together they form the extractor input.  ``records`` holds
    per-round structured rows (fields ``t, x, y, a, b, u``) only for
    runs small enough to store; the published ``b`` is 0 and ``u`` is
    the sentinel −1 on generation rounds.
    """

    n: int
    gamma: float
    omega_exp: float
    delta: float
    wins: int
    n_test: int
    threshold: float
    aborted: bool
    tally: TrialTally
    a_bits: np.ndarray
    b_test_bits: np.ndarray
    records: np.ndarray | None

    def extractor_input(self) -> np.ndarray:
        """All ``a`` outcomes followed by the test-round ``b`` outcomes, one bit each."""
        a = np.unpackbits(self.a_bits, bitorder="little", count=self.n)
        b = np.unpackbits(self.b_test_bits, bitorder="little", count=self.n_test)
        return np.concatenate([a, b])


_RECORD_DTYPE = np.dtype(
    [("t", "i1"), ("x", "i1"), ("y", "i1"), ("a", "i1"), ("b", "i1"), ("u", "i1")]
)


def _role_stream(seed: int, role: int, start_round: int, n_rounds: int) -> np.ndarray:
    """Uniform draws for one role covering rounds ``[start_round, start_round + n_rounds)``."""
    draws_per_round = _DRAWS_PER_ROUND[role]
    offset = start_round * draws_per_round
    if offset % _COUNTER_BLOCK:
        raise ValueError(f"block start {start_round} is not seekable for role {role}")
    gen = np.random.Generator(np.random.Philox(key=[seed, role]))
    gen.bit_generator.advance(offset // _COUNTER_BLOCK)
    return gen.random(n_rounds * draws_per_round)


def run_protocol(
    n: int,
    gamma: float,
    omega_exp: float,
    delta: float,
    model: DeviceModel,
    seed: int,
    records_threshold: int = 10**8,
    block_rounds: int = 2**20,
) -> Transcript:
    """Simulate ``n`` rounds of the spot-checking protocol against an honest device.

    Rounds are processed in blocks of ``block_rounds`` (a multiple of 4;
    see the module docstring) with each randomness stream seeked to the
    block start, so the transcript is bit-identical for every block
    size.  Per-round records are kept only when ``n`` is at most
    ``records_threshold``; the tally, win count, and extractor input are
    always produced.  Identical arguments give identical transcripts.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"round count must be positive, got {n}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"test probability must lie in (0, 1], got {gamma}")
    if not 0.0 <= omega_exp <= 1.0:
        raise ValueError(f"expected score must lie in [0, 1], got {omega_exp}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"abort width must lie in [0, 1], got {delta}")
    block_rounds = int(block_rounds)
    if block_rounds < _COUNTER_BLOCK or block_rounds % _COUNTER_BLOCK:
        raise ValueError(f"block size must be a positive multiple of 4, got {block_rounds}")

    keep_records = n <= records_threshold
    records = np.empty(n, dtype=_RECORD_DTYPE) if keep_records else None
    tally = TrialTally.zeros()
    a_blocks: list[np.ndarray] = []
    b_test_blocks: list[np.ndarray] = []
    wins = 0
    n_test = 0

    for start in range(0, n, block_rounds):
        nb = min(block_rounds, n - start)
        u_t = _role_stream(seed, _ROLE_TEST, start, nb)
        u_x = _role_stream(seed, _ROLE_X, start, nb)
        u_y = _role_stream(seed, _ROLE_Y, start, nb)
        u_d = _role_stream(seed, _ROLE_DEVICE, start, nb)

        t = u_t < gamma
        x = np.where(t, u_x < 0.5, False).astype(np.int8)
        y = np.where(t, u_y < 0.5, False).astype(np.int8)
        a = (u_d[0::2] < model.p_a_one[x, y]).astype(np.int8)
        b_raw = (u_d[1::2] < model.p_b_one[x, y, a]).astype(np.int8)
        win = (a ^ b_raw) == (x & y)

        code = (((x.astype(np.int64) * 2 + y) * 2 + a) * 2 + b_raw)[t]
        tally.counts += np.bincount(code, minlength=16).reshape(2, 2, 2, 2)
        gen_code = (a.astype(np.int64) * 2 + b_raw)[~t]
        tally.gen_counts += np.bincount(gen_code, minlength=4).reshape(2, 2)
        wins += int(win[t].sum())
        n_test += int(t.sum())
        a_blocks.append(a.astype(np.uint8))
        b_test_blocks.append(b_raw[t].astype(np.uint8))

        if records is not None:
            rows = records[start : start + nb]
            rows["t"] = t
            rows["x"] = x
            rows["y"] = y
            rows["a"] = a
            rows["b"] = np.where(t, b_raw, 0)
            rows["u"] = np.where(t, win.astype(np.int8), np.int8(-1))

    threshold = n * gamma * (omega_exp - delta)
    return Transcript(
        n=n,
        gamma=gamma,
        omega_exp=omega_exp,
        delta=delta,
        wins=wins,
        n_test=n_test,
        threshold=threshold,
        aborted=wins < threshold,
        tally=tally,
        a_bits=np.packbits(np.concatenate(a_blocks), bitorder="little"),
        b_test_bits=np.packbits(
            np.concatenate(b_test_blocks) if n_test else np.empty(0, dtype=np.uint8),
            bitorder="little",
        ),
        records=records,
    )


def chsh_score_from_counts(tally: TrialTally) -> float:
    """Empirical game score of a count table.

    The per-setting win fractions (wins are ``a ⊕ b = x·y``) are
    averaged uniformly over the four settings, which matches drawing
    test inputs uniformly regardless of how unbalanced the observed
    setting totals are.

    Raises
    ------
    ValueError
        If any setting has no counts.
    """
    score = 0.0
    for x in (0, 1):
        for y in (0, 1):
            bucket = tally.counts[x, y]
            total = int(bucket.sum())
            if total == 0:
                raise ValueError(f"no counts for setting ({x}, {y})")
            if x & y:
                won = int(bucket[0, 1] + bucket[1, 0])
            else:
                won = int(bucket[0, 0] + bucket[1, 1])
            score += won / total
    return score / 4.0


def heralding_efficiency(coincidences: int, singles_a: int, singles_b: int) -> tuple[float, float]:
    """Heralding efficiencies ``(η_A, η_B)`` from coincidence and singles counts.

    Each station's efficiency is the fraction of the *other* station's
    singles that arrived in coincidence: ``η_A = C/N_B``, ``η_B = C/N_A``.
    """
    if singles_a <= 0 or singles_b <= 0:
        raise ValueError("singles counts must be positive")
    if coincidences < 0 or coincidences > min(singles_a, singles_b):
        raise ValueError("coincidences must lie in [0, min(singles)]")
    return coincidences / singles_b, coincidences / singles_a


@dataclass(frozen=True)
class SpacetimeGeometry:
    """Distances and delays of a two-station experiment.

    ``dist_*_m`` are straight-line source-to-station distances and
    ``path_*_m`` the photons' effective optical path lengths; the ``_ns``
    fields are the entangled-pair emission time and each station's
    setting-generation, electronic-delay, basis-switch, and measurement
    times.
    """

    dist_sa_m: float
    dist_sb_m: float
    path_sa_m: float
    path_sb_m: float
    t_e_ns: float
    qrng_a_ns: float
    qrng_b_ns: float
    delay_a_ns: float
    delay_b_ns: float
    pc_a_ns: float
    pc_b_ns: float
    m_a_ns: float
    m_b_ns: float

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")


class SpacetimeVerdict(NamedTuple):
    """Truth values of the four spacelike-separation inequalities."""

    locality_a: bool
    locality_b: bool
    mi_a: bool
    mi_b: bool

    def all_satisfied(self) -> bool:
        return all(self)


def spacetime_check(geom: SpacetimeGeometry) -> SpacetimeVerdict:
    """Evaluate the spacelike-separation inequalities of a geometry.

    Locality at a station requires the light travel time across both
    source arms to strictly exceed everything that must finish before
    that station's measurement completes: emission, its own setting
    generation, delays, basis switch, and measurement, corrected by the
    photons' optical-path skew (early arrival at the far station loosens
    its budget, tightens the other's).  Measurement independence at a
    station requires the straight-line light time from the source to
    strictly exceed the photon's optical flight time net of the delays
    inserted after setting choice.
    """
    ns_per_m = 1e9 / SPEED_OF_LIGHT
    both_arms = (geom.dist_sa_m + geom.dist_sb_m) * ns_per_m
    skew = (geom.path_sa_m - geom.path_sb_m) * ns_per_m
    locality_a = both_arms > (
        geom.t_e_ns - skew + geom.qrng_a_ns + geom.delay_a_ns + geom.pc_a_ns + geom.m_a_ns
    )
    locality_b = both_arms > (
        geom.t_e_ns + skew + geom.qrng_b_ns + geom.delay_b_ns + geom.pc_b_ns + geom.m_b_ns
    )
    mi_a = geom.dist_sa_m * ns_per_m > geom.path_sa_m * ns_per_m - geom.delay_a_ns - geom.pc_a_ns
    mi_b = geom.dist_sb_m * ns_per_m > geom.path_sb_m * ns_per_m - geom.delay_b_ns - geom.pc_b_ns
    return SpacetimeVerdict(
        locality_a=bool(locality_a),
        locality_b=bool(locality_b),
        mi_a=bool(mi_a),
        mi_b=bool(mi_b),
    )


_INTERVAL_BITS = 96
_ONE = 1 << _INTERVAL_BITS
_HALF = _ONE >> 1
_QUARTER = _ONE >> 2


def biased_bits(
    gamma: float, count: int, uniform_source: Iterator[int]
) -> tuple[np.ndarray, int]:
    """Turn uniform bits into ``count`` independent Bernoulli(γ) bits.

    Interval subdivision (arithmetic decoding): the current interval is
    split at mass ``1 − γ`` from its low end, the uniform stream is read
    only until it pins the split side, and the interval renormalizes by
    doubling whenever it fits in a half or the middle of the unit range.
    The uniform cost is therefore the information content of the output
    — about ``H_bin(γ)`` source bits per output bit amortized — rather
    than one bit per output.  Arithmetic is exact on 96-bit integers, so
    each output bit's probability is within ``2^−94`` of γ.

    Returns the bits as a uint8 array together with the number of source
    bits consumed.

    Raises
    ------
    ValueError
        If γ is not in (0, 1) or ``count`` is negative.
    RuntimeError
        If the uniform source is exhausted before ``count`` bits are out.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"bias must lie strictly in (0, 1), got {gamma}")
    count = int(count)
    if count < 0:
        raise ValueError(f"bit count must be nonnegative, got {count}")

    split_weight = min(max(round((1.0 - gamma) * _ONE), 1), _ONE - 1)
    out = np.empty(count, dtype=np.uint8)
    consumed = 0
    low, high = 0, _ONE
    code_low, code_width = 0, _ONE

    for i in range(count):
        split = low + (((high - low) * split_weight) >> _INTERVAL_BITS)
        split = min(max(split, low + 1), high - 1)
        # Read until the revealed code window no longer straddles the split.
        while code_low < split < code_low + code_width:
            try:
                bit = next(uniform_source)
            except StopIteration:
                raise RuntimeError(
                    f"uniform source exhausted after {consumed} bits ({i} of {count} emitted)"
                ) from None
            consumed += 1
            code_width >>= 1
            if bit:
                code_low += code_width
        if code_low >= split:
            out[i] = 1
            low = split
        else:
            out[i] = 0
            high = split
        # Renormalize: zoom into halves or the straddled middle.
        while True:
            if high <= _HALF:
                pass
            elif low >= _HALF:
                low -= _HALF
                high -= _HALF
                code_low -= _HALF
            elif low >= _QUARTER and high <= 3 * _QUARTER:
                low -= _QUARTER
                high -= _QUARTER
                code_low -= _QUARTER
            else:
                break
            low <<= 1
            high <<= 1
            code_low <<= 1
            code_width <<= 1
    return out, consumed
