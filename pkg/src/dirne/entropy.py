r"""Certified-entropy arithmetic for spot-checking CHSH randomness expansion.

This module implements the per-round rate function of the CHSH game, the
tangent family of min-tradeoff functions used to certify randomness, and
the accumulated smooth min-entropy lower bound for a full protocol run.

The chain of quantities, bottom to top:

``rate_chsh(q)``
    A device winning a CHSH test round with probability ``q`` must emit
    at least ``rate_chsh(q)`` bits of fresh conditional entropy per round
    (one-sided: Alice's output only).  The function vanishes on the
    classically achievable scores ``[0.25, 0.75]``, rises to 1 bit at the
    quantum extremes ``1/2 ± √2/4``, and is convex on its domain.

``MinTradeoffFn``
    The affine lower bounds ``g_t(q) = rate(t) + (q − t)·rate'(t)``
    (tangents to the convex rate curve), lifted to the three-outcome
    per-round score alphabet {1, 0, ⊥} of a spot-checking protocol:
    test rounds (probability ``gamma``) score 1 or 0, generation rounds
    score ⊥.  The lift takes the value ``c_perp`` at ⊥ and
    ``g_t(x)/gamma + (1 − 1/gamma)·c_perp`` at x ∈ {1, 0}, which makes
    its expectation under any spot-check score distribution with test
    part ``q`` equal ``g_t(q)`` exactly.

``eat_bound``
    Entropy accumulation: ``n`` rounds certify at least

        n·r − (α/(α−1))·log2(1/(ε_EAT·(1−√(1−ε_h²))))
            + n·inf_q [Δ(q) − (α−1)·V(q) − (α−1)²·K_α]

    bits of smooth min-entropy conditioned on not aborting, where ``r``
    is the worst-case value of the min-tradeoff function over score
    frequencies that survive the abort test, ``Δ(q) = rate(q) − g_t(q)``
    is the tangent gap, and V/K are second-order correction terms in the
    Rényi order ``α ∈ (1, 2)``.

All functions are pure; all classes are frozen dataclasses, safe to share
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

__all__ = [
    "Q_LOW",
    "Q_HIGH",
    "TestDistribution",
    "ScoreDistribution",
    "MinTradeoffFn",
    "EatParams",
    "EntropyCertificate",
    "FProperties",
    "h_bin",
    "rate_chsh",
    "rate_chsh_prime",
    "g_tangent",
    "f_eval",
    "f_properties",
    "v_term",
    "k_term",
    "threshold_rate",
    "eat_bound",
]

_LN2 = math.log(2.0)

#: Lowest and highest CHSH win probabilities reachable by quantum devices,
#: 1/2 ∓ √2/4.  Scores outside this interval are unphysical; scores inside
#: [0.25, 0.75] are classically reachable and certify nothing.
Q_LOW = 0.5 - math.sqrt(2.0) / 4.0
Q_HIGH = 0.5 + math.sqrt(2.0) / 4.0

# Slack for floating-point callers that land a hair outside the closed
# quantum interval (e.g. Q_HIGH - 1e-17 rounding up).
_DOMAIN_TOL = 1e-12

# log2 of the K-term above which the certificate is -inf for any sane n;
# signalled as OverflowError instead of silently returning 2**big.
_K_LOG2_LIMIT = 1000.0


def h_bin(x: float) -> float:
    """Binary Shannon entropy ``−x·log2(x) − (1−x)·log2(1−x)`` in bits.

    The degenerate products use the convention ``0·log2(0) := 0``.

    Parameters
    ----------
    x : float
        A probability, ``0 ≤ x ≤ 1``.

    Raises
    ------
    ValueError
        If ``x`` lies outside ``[0, 1]``.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"h_bin argument must be a probability in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    # log1p keeps the second term accurate for small x, where the
    # explicit difference 1 − x would round away low-order bits of x.
    return -x * math.log2(x) - (1.0 - x) * (math.log1p(-x) / _LN2)


def _check_quantum_domain(q: float, who: str) -> float:
    """Clamp ``q`` into the closed quantum interval, rejecting real violations."""
    if q < Q_LOW - _DOMAIN_TOL or q > Q_HIGH + _DOMAIN_TOL:
        raise ValueError(
            f"{who} is defined on the quantum score interval "
            f"[{Q_LOW:.12f}, {Q_HIGH:.12f}]; got {q}"
        )
    return min(max(q, Q_LOW), Q_HIGH)


def rate_chsh(q: float) -> float:
    """Certified one-sided entropy rate (bits/round) at CHSH score ``q``.

    For ``q`` in the quantum interval ``[Q_LOW, Q_HIGH]``:

    * ``0.25 ≤ q ≤ 0.75`` (classically reachable): returns 0;
    * otherwise: returns ``1 − h_bin(1/2 + 1/2·√(16q(q−1)+3))``.

    The radicand ``16q(q−1)+3`` runs from 0 at the classical boundary to
    1 at the quantum extremes, so the rate runs from 0 to a full bit.

    Raises
    ------
    ValueError
        For ``q`` outside the quantum interval, where no quantum device
        exists and the rate is undefined.
    """
    q = _check_quantum_domain(q, "rate_chsh")
    if 0.25 <= q <= 0.75:
        return 0.0
    rad = 16.0 * q * (q - 1.0) + 3.0
    # Floating-point noise can push the radicand a hair outside [0, 1]
    # at the interval endpoints; the exact values are 0 and 1 there.
    rad = min(max(rad, 0.0), 1.0)
    return 1.0 - h_bin(0.5 + 0.5 * math.sqrt(rad))


def rate_chsh_prime(q: float) -> float:
    """Closed-form derivative of :func:`rate_chsh` at ``q``.

    Differentiating ``1 − h_bin(1/2 + s/2)`` with ``s = √(16q² − 16q + 3)``
    gives

        rate'(q) = (8q − 4)/s · log2(u / (1 − u)),   u = 1/2 + s/2.

    On the classical plateau the derivative is 0; at the plateau edges
    the outward one-sided limits are ``±4/ln 2``, which is what this
    function returns there; at the quantum extremes the derivative
    diverges and ``±inf`` is returned.

    The closed form exists so that optimizer tangents are smooth and
    noise-free; finite differences are relegated to tests.
    """
    q = _check_quantum_domain(q, "rate_chsh_prime")
    if 0.25 < q < 0.75:
        return 0.0
    if q == 0.75:
        return 4.0 / _LN2
    if q == 0.25:
        return -4.0 / _LN2
    rad = min(max(16.0 * q * q - 16.0 * q + 3.0, 0.0), 1.0)
    s = math.sqrt(rad)
    u = 0.5 + 0.5 * s
    if u >= 1.0:
        return math.inf if q > 0.5 else -math.inf
    return (8.0 * q - 4.0) / s * math.log2(u / (1.0 - u))


@dataclass(frozen=True)
class TestDistribution:
    """Win probability of a CHSH test round.

    The single number ``q`` fully parametrizes the statistics a pair of
    devices can show on test rounds, which is what makes the one-dimensional
    rate function above sufficient.

    Attributes
    ----------
    q : float
        Probability of winning a test round, in ``[0, 1]``.
    """

    q: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"win probability must lie in [0, 1], got {self.q}")

    def is_quantum(self) -> bool:
        """Whether ``q`` is reachable by quantum devices."""
        return Q_LOW <= self.q <= Q_HIGH


@dataclass(frozen=True)
class ScoreDistribution:
    """Distribution of the per-round score U ∈ {1, 0, ⊥} under spot checking.

    A round is a test round with probability ``gamma`` and then wins with
    probability ``q``; otherwise it scores ⊥.  The induced distribution is
    ``p(1) = gamma·q``, ``p(0) = gamma·(1−q)``, ``p(⊥) = 1 − gamma``.
    """

    gamma: float
    q: float

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"test probability must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"win probability must lie in [0, 1], got {self.q}")

    @property
    def p_one(self) -> float:
        return self.gamma * self.q

    @property
    def p_zero(self) -> float:
        return self.gamma * (1.0 - self.q)

    @property
    def p_perp(self) -> float:
        return 1.0 - self.gamma


@dataclass(frozen=True)
class MinTradeoffFn:
    """A member of the tangent family of min-tradeoff functions.

    Parametrized by the test probability ``gamma``, the tangent point
    ``t`` (strictly inside the open quantum interval so the slope is
    finite), and the free value ``c_perp`` assigned to the ⊥ symbol.

    Construction derives and caches the tangent data:

    * ``slope = rate_chsh'(t)`` and ``rate_at_t = rate_chsh(t)``;
    * ``g_zero = g_t(0)`` and ``g_one = g_t(1)``, the affine extension of
      the tangent to the full ``[0, 1]`` score axis;
    * ``f_one``/``f_zero``, the lifted values on test outcomes,
      ``g_t(x)/gamma + (1 − 1/gamma)·c_perp``;
    * ``max_f``, the maximum of the lift over all score distributions,
      and ``min_quantum_f``, its minimum over quantum ones (attained at
      an endpoint of the quantum interval since ``g_t`` is affine).

    The defining identity — the expectation of the lift under any
    spot-check score distribution with test part ``q`` equals ``g_t(q)``
    — is exposed through :func:`f_eval` and enforced by tests.
    """

    gamma: float
    t: float
    c_perp: float
    slope: float = field(init=False, repr=False)
    rate_at_t: float = field(init=False, repr=False)
    g_zero: float = field(init=False, repr=False)
    g_one: float = field(init=False, repr=False)
    f_one: float = field(init=False, repr=False)
    f_zero: float = field(init=False, repr=False)
    max_f: float = field(init=False, repr=False)
    min_quantum_f: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"test probability must lie in (0, 1], got {self.gamma}")
        if not Q_LOW < self.t < Q_HIGH:
            raise ValueError(
                f"tangent point must lie strictly inside ({Q_LOW:.12f}, "
                f"{Q_HIGH:.12f}) so the tangent slope is finite; got {self.t}"
            )
        if not math.isfinite(self.c_perp):
            raise ValueError(f"c_perp must be finite, got {self.c_perp}")
        slope = rate_chsh_prime(self.t)
        rate_at_t = rate_chsh(self.t)
        inv_g = 1.0 / self.gamma
        g_zero = rate_at_t - self.t * slope
        g_one = rate_at_t + (1.0 - self.t) * slope
        f_one = g_one * inv_g + (1.0 - inv_g) * self.c_perp
        f_zero = g_zero * inv_g + (1.0 - inv_g) * self.c_perp
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "rate_at_t", rate_at_t)
        object.__setattr__(self, "g_zero", g_zero)
        object.__setattr__(self, "g_one", g_one)
        object.__setattr__(self, "f_one", f_one)
        object.__setattr__(self, "f_zero", f_zero)
        object.__setattr__(self, "max_f", max(f_one, f_zero, self.c_perp))
        g_at_qlow = rate_at_t + (Q_LOW - self.t) * slope
        g_at_qhigh = rate_at_t + (Q_HIGH - self.t) * slope
        object.__setattr__(self, "min_quantum_f", min(g_at_qlow, g_at_qhigh))

    def g(self, q: float) -> float:
        """Tangent value ``rate(t) + (q − t)·rate'(t)`` at any real ``q``.

        This is the affine extension: ``q`` may lie anywhere on the score
        axis (and beyond), not just in the quantum interval.
        """
        return self.rate_at_t + (q - self.t) * self.slope

    def var_bound(self, q: float) -> float:
        """Variance-like second moment of the lift at test part ``q``.

        Returns ``(1/gamma)·[q·(c_perp − g_t(1))² + (1−q)·(c_perp − g_t(0))²]``.
        The single ``1/gamma`` prefactor is already included here; the
        second-order term below consumes this quantity as-is.
        """
        d1 = self.c_perp - self.g_one
        d0 = self.c_perp - self.g_zero
        return (q * d1 * d1 + (1.0 - q) * d0 * d0) / self.gamma


class FProperties(NamedTuple):
    """Derived traits of a min-tradeoff function: its maximum over all
    score distributions, its minimum over quantum ones, and the
    variance-bound map ``q ↦ var_bound(q)``."""

    max_f: float
    min_quantum_f: float
    var_bound: "MinTradeoffFn.var_bound"  # bound method of the owning fn


def g_tangent(fn: MinTradeoffFn, q: float) -> float:
    """Tangent to the rate curve at ``fn.t``, evaluated at ``q``.

    Equals ``rate_chsh(t) + (q − t)·rate_chsh'(t)`` with the derivative
    in closed form.  Because the rate curve is convex, this lies at or
    below ``rate_chsh(q)`` for every quantum ``q``, with equality at
    ``q = t`` — the property that makes the family sound.
    """
    return fn.g(q)


def f_eval(fn: MinTradeoffFn, p: ScoreDistribution) -> float:
    """Expectation of the lifted min-tradeoff function under ``p``.

    Computes the literal three-term sum
    ``p(⊥)·c_perp + p(1)·f(1) + p(0)·f(0)``; by construction this equals
    ``g_tangent(fn, p.q)`` to floating precision, and tests pin the two
    down to within 1e−12 of each other.

    Raises
    ------
    ValueError
        If ``p`` was built with a different test probability than ``fn``.
    """
    if abs(p.gamma - fn.gamma) > 1e-15 * max(1.0, abs(fn.gamma)):
        raise ValueError(
            f"score distribution has gamma={p.gamma}, function has {fn.gamma}"
        )
    return p.p_perp * fn.c_perp + p.p_one * fn.f_one + p.p_zero * fn.f_zero


def f_properties(fn: MinTradeoffFn) -> FProperties:
    """Bundle the (max, quantum-min, variance-bound) traits of ``fn``."""
    return FProperties(fn.max_f, fn.min_quantum_f, fn.var_bound)


def v_term(fn: MinTradeoffFn, q: float) -> float:
    """First-order correction term of the accumulation bound.

    Returns ``(ln 2 / 2)·(log2(9) + √(2 + var_bound(q)))²`` where
    ``var_bound`` already carries its ``1/gamma`` factor (see
    :meth:`MinTradeoffFn.var_bound`).  Nondecreasing in the variance
    bound, hence in the spread of the lift's values.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"win probability must lie in [0, 1], got {q}")
    root = math.sqrt(2.0 + fn.var_bound(q))
    base = math.log2(9.0) + root
    return 0.5 * _LN2 * base * base


def k_term(fn: MinTradeoffFn, alpha: float) -> float:
    """Second-order correction term of the accumulation bound.

    Returns::

        1/(6·(2−α)³·ln 2) · 2^{(α−1)(1 + Max − Min_Q)}
                          · ln³(2^{1 + Max − Min_Q} + e²)

    with ``Max``/``Min_Q`` the traits of ``fn``.  The spread
    ``1 + Max − Min_Q`` reaches ~1e4 in the regimes of interest, so the
    power and the inner logarithm are evaluated in log space: for
    exponents above 60, ``ln(2^E + e²) = E·ln 2`` to below 2⁻⁸⁰ relative
    error, and the final result is assembled as ``2^{log2 K}``.

    Raises
    ------
    ValueError
        If ``alpha`` is outside ``(1, 2)``.
    OverflowError
        If ``log2 K`` exceeds 1000 — the certificate would be −inf for
        any round count that fits in a float.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"Renyi order must lie in (1, 2), got {alpha}")
    expo = 1.0 + fn.max_f - fn.min_quantum_f
    if expo > 60.0:
        ln_inner = expo * _LN2
    else:
        ln_inner = math.log(2.0**expo + math.e**2)
    log2_k = (
        -math.log2(6.0 * (2.0 - alpha) ** 3 * _LN2)
        + (alpha - 1.0) * expo
        + 3.0 * math.log2(ln_inner)
    )
    if log2_k > _K_LOG2_LIMIT:
        raise OverflowError(
            f"second-order term overflows: log2(K) = {log2_k:.3g} > {_K_LOG2_LIMIT:g}"
        )
    return 2.0**log2_k


def threshold_rate(fn: MinTradeoffFn, omega_threshold: float) -> float:
    """Worst-case value of ``fn`` over score statistics that pass the test.

    A run survives the abort rule when its test-round win frequency is at
    least ``omega_threshold``; the frequencies a surviving spot-checking
    run can show are ``(gamma·s, gamma·(1−s), 1−gamma)`` over {1, 0, ⊥}
    with ``s ∈ [omega_threshold, 1]``.  The expectation of the lift on
    that slice is ``g_t(s)``, an affine function of ``s``, so the exact
    minimum sits at an endpoint::

        r = min(g_t(omega_threshold), g_t(1))

    This is the per-round rate the accumulation bound multiplies by
    ``n``.  Thresholds at or below the classical plateau simply produce
    a rate that is too small to be useful, never an error.

    Raises
    ------
    ValueError
        If ``omega_threshold`` exceeds 1 (not a frequency).
    """
    if omega_threshold > 1.0:
        raise ValueError(f"win-frequency threshold cannot exceed 1, got {omega_threshold}")
    s_low = max(0.0, omega_threshold)
    return min(fn.g(s_low), fn.g(1.0))


@dataclass(frozen=True)
class EatParams:
    """Protocol-level inputs of the accumulation bound.

    Attributes
    ----------
    n : float
        Number of protocol rounds (≥ 1; carried as a float because
        planners sweep it continuously).
    gamma : float
        Test-round probability in ``(0, 1]``.
    omega_exp : float
        Expected CHSH score of the honest devices.  Values in
        ``(0.75, Q_HIGH]`` give nontrivial certificates; the full
        ``[0, 1]`` range is accepted so that scores estimated from data
        (which can fluctuate outside the useful window) flow through and
        simply yield a non-positive certificate.
    delta : float
        Confidence width of the abort test: the run aborts when fewer
        than ``n·gamma·(omega_exp − delta)`` test wins are observed.
    alpha : float
        Rényi order in ``(1, 2)``; near-1 values trade a larger error
        term for smaller second-order corrections.
    eps_h : float
        Smoothing parameter of the certified min-entropy, in ``(0, 1)``.
    eps_eat : float
        Accumulation error budget replacing the abort probability in the
        error term, in ``(0, 1)``.
    """

    n: float
    gamma: float
    omega_exp: float
    delta: float
    alpha: float
    eps_h: float
    eps_eat: float

    def __post_init__(self) -> None:
        if not self.n >= 1:
            raise ValueError(f"round count must be at least 1, got {self.n}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"test probability must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.omega_exp <= 1.0:
            raise ValueError(f"expected score must lie in [0, 1], got {self.omega_exp}")
        if not self.delta > 0.0:
            raise ValueError(f"confidence width must be positive, got {self.delta}")
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"Renyi order must lie in (1, 2), got {self.alpha}")
        for name in ("eps_h", "eps_eat"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")


@dataclass(frozen=True)
class EntropyCertificate:
    """Result of the accumulation bound, with its term breakdown.

    The four stored terms satisfy the exact bookkeeping identity

        ``hmin_lower = n·threshold_r + n·inner_inf_value − error_term_alpha``

    (the certificate is *assembled* from the right-hand side, so the
    identity holds to the last bit).  ``rate_per_round`` is
    ``hmin_lower / n``.  A non-positive ``hmin_lower`` means the
    parameters were too weak to certify anything — that is a reported
    outcome, not an error.

    Attributes
    ----------
    n : float
        Round count the certificate is for.
    hmin_lower : float
        Certified smooth min-entropy of the raw output, in bits.
    rate_per_round : float
        ``hmin_lower / n``.
    threshold_r : float
        Worst-case min-tradeoff value over surviving score statistics.
    error_term_alpha : float
        The ``(α/(α−1))·log2(...)`` penalty, in bits.
    inner_inf_value : float
        Infimum of the second-order-corrected tangent gap, bits/round.
    alpha, t, c_perp : float
        The parameter point the certificate was evaluated at.
    """

    n: float
    hmin_lower: float
    rate_per_round: float
    threshold_r: float
    error_term_alpha: float
    inner_inf_value: float
    alpha: float
    t: float
    c_perp: float


def eat_bound(params: EatParams, fn: MinTradeoffFn) -> EntropyCertificate:
    """Accumulated smooth min-entropy certified by ``fn`` at ``params``.

    Assembles the three terms described in the module docstring:

    * rate term ``n·r`` with ``r = threshold_rate(fn, omega_exp − delta)``;
    * error term ``(α/(α−1))·log2(1/(ε_EAT·(1−√(1−ε_h²))))``, evaluated
      with the cancellation-free rewrite ``1−√(1−x²) = x²/(1+√(1−x²))``;
    * second-order term ``n·inf_q [Δ(q) − (α−1)V(q) − (α−1)²K_α]`` with
      the infimum over the closed quantum interval delegated to
      :func:`dirne.optimize.inner_inf` (the objective is convex there).

    Any admissible ``(alpha, t, c_perp)`` yields a valid lower bound;
    optimizing over them is the caller's concern (see
    :func:`dirne.optimize.outer_optimize`).  Parameters too weak to
    certify anything produce a certificate with non-positive
    ``hmin_lower`` rather than an exception; if the second-order term
    overflows (wild ``fn``), the certificate reports ``-inf``.

    Raises
    ------
    ValueError
        If ``fn`` and ``params`` disagree on the test probability.
    """
    if abs(fn.gamma - params.gamma) > 1e-15 * max(1.0, abs(params.gamma)):
        raise ValueError(
            f"min-tradeoff function has gamma={fn.gamma}, params have {params.gamma}"
        )
    from .optimize import inner_inf  # deferred: optimize imports this module

    r = threshold_rate(fn, params.omega_exp - params.delta)
    try:
        inner = inner_inf(fn, params.alpha).value
    except OverflowError:
        inner = -math.inf
    # 1 − √(1−ε_h²) without cancellation for tiny ε_h:
    one_minus_root = params.eps_h**2 / (1.0 + math.sqrt(1.0 - params.eps_h**2))
    error_term = (params.alpha / (params.alpha - 1.0)) * (
        -math.log2(params.eps_eat) - math.log2(one_minus_root)
    )
    hmin = params.n * r + params.n * inner - error_term
    return EntropyCertificate(
        n=params.n,
        hmin_lower=hmin,
        rate_per_round=hmin / params.n,
        threshold_r=r,
        error_term_alpha=error_term,
        inner_inf_value=inner,
        alpha=params.alpha,
        t=fn.t,
        c_perp=fn.c_perp,
    )
