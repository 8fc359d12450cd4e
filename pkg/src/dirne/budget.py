r"""Error-budget arithmetic for randomness-expansion runs.

The accounting chain, in protocol order:

* **Completeness** — honest devices must rarely abort.  The abort test
  compares the test-round win count against ``n·γ·(ω_exp − δ)``; a sharp
  normal-approximation bound on the binomial CDF controls the abort
  probability of an honest run.
* **Soundness** — the certified output must be close to uniform.  The
  accumulation error ``ε_EAT`` and the extraction step (hashing error
  ``ε_EXT``, smoothing parameter ``ε_h``) compose as
  ``ε_S = max{ε_EAT, ε_EXT + 2·ε_h}``.
* **Expansion bookkeeping** — the run is only worthwhile net of the
  uniform bits it consumes: ``rand_in = n·(H_bin(γ) + 2γ) + 2`` input
  bits (round selection at bias γ, two uniform test inputs on a
  γ-fraction of rounds), and the extractor surrenders ``2·log2(1/ε_EXT)``
  bits of certified entropy as its output margin.

All quantities are plain floats; probabilities are validated at the edges.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .entropy import EntropyCertificate, h_bin

__all__ = [
    "ErrorBudget",
    "split_budget",
    "binomial_cdf_bound",
    "completeness_error",
    "soundness_compose",
    "input_randomness",
    "extractor_error",
    "net_expansion",
]

#: Default fraction of the soundness budget assigned to the extractor.
EXT_FRACTION = 1e-5

# Relative slack when validating the composition inequality: the default
# split reconstructs eps_s through a subtract-halve-redouble round trip
# that can land one ulp above it.
_COMPOSE_SLACK = 1e-12


@dataclass(frozen=True)
class ErrorBudget:
    """A full ε budget for one protocol run.

    Attributes
    ----------
    eps_s : float
        Soundness error of the composed protocol.
    eps_c : float
        Completeness error (honest-abort probability budget).
    eps_ext : float
        Extractor (hashing) error.
    eps_h : float
        Smoothing parameter of the certified min-entropy.
    eps_eat : float
        Accumulation error.

    Raises
    ------
    ValueError
        If any component is outside ``(0, 1)`` or the components fail the
        composition inequality ``eps_s ≥ max{eps_eat, eps_ext + 2·eps_h}``
        (up to 1e-12 relative slack).
    """

    eps_s: float
    eps_c: float
    eps_ext: float
    eps_h: float
    eps_eat: float

    def __post_init__(self) -> None:
        for name in ("eps_s", "eps_c", "eps_ext", "eps_h", "eps_eat"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        composed = soundness_compose(self.eps_eat, self.eps_ext, self.eps_h)
        if composed > self.eps_s * (1.0 + _COMPOSE_SLACK):
            raise ValueError(
                f"soundness components compose to {composed}, exceeding eps_s={self.eps_s}"
            )


def split_budget(eps_s: float, eps_c: float) -> ErrorBudget:
    """Default split of a soundness budget into its components.

    Assigns ``eps_ext = 1e-5·eps_s``, solves ``eps_h`` so that the sum
    branch of the composition exhausts the budget
    (``eps_h = (eps_s − eps_ext)/2``), and sets
    ``eps_eat = eps_ext + 2·eps_h`` so both branches of the max balance at
    ``eps_s``.
    """
    if not 0.0 < eps_s < 1.0:
        raise ValueError(f"eps_s must lie in (0, 1), got {eps_s}")
    if not 0.0 < eps_c < 1.0:
        raise ValueError(f"eps_c must lie in (0, 1), got {eps_c}")
    eps_ext = EXT_FRACTION * eps_s
    eps_h = 0.5 * (eps_s - eps_ext)
    eps_eat = eps_ext + 2.0 * eps_h
    return ErrorBudget(eps_s=eps_s, eps_c=eps_c, eps_ext=eps_ext, eps_h=eps_h, eps_eat=eps_eat)


def _phi(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def binomial_cdf_bound(n: float, k_plus_1: float, p: float) -> float:
    """Sharp upper bound on ``P(X ≤ k_plus_1 − 1)`` for ``X ~ Binomial(n, p)``.

    Returns ``Φ(sign(x − p)·√(2·n·G(x, p)))`` with ``x = k_plus_1/n`` and

        G(x, p) = x·ln(x/p) + (1 − x)·ln((1 − x)/(1 − p)),

    the KL divergence between Bernoulli(x) and Bernoulli(p), with the
    conventions ``0·ln 0 := 0`` and the second term dropped at ``x = 1``.
    At ``x = p`` the bound is exactly 1/2.  The bound dominates the exact
    CDF and is tight in the tails.

    Parameters
    ----------
    n : float
        Number of trials (integral value; float accepted for large n).
    k_plus_1 : float
        One more than the count whose lower tail is bounded;
        ``1 ≤ k_plus_1 ≤ n``.
    p : float
        Success probability, strictly inside ``(0, 1)``.
    """
    if not 1 <= k_plus_1 <= n:
        raise ValueError(f"need 1 <= k_plus_1 <= n, got k_plus_1={k_plus_1}, n={n}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly in (0, 1), got {p}")
    x = k_plus_1 / n
    if x == p:
        return 0.5
    if x >= 1.0:
        g = x * math.log(x / p)
    else:
        # Cancellation-free split: G = x·f(p/x) + (1−x)·f((1−p)/(1−x))
        # with f(1 + w) = w − log1p(w) ≥ 0, so both terms are nonnegative
        # and G keeps full relative precision even when x is within a few
        # parts in 10⁴ of p (where the textbook two-log form loses ~12
        # significant digits to cancellation).
        w_lo = (p - x) / x
        w_hi = (x - p) / (1.0 - x)
        g = x * (w_lo - math.log1p(w_lo)) + (1.0 - x) * (w_hi - math.log1p(w_hi))
    return _phi(math.copysign(math.sqrt(2.0 * n * g), x - p))


def completeness_error(n: float, gamma: float, omega_exp: float, delta: float) -> float:
    """Upper bound on the abort probability of an honest run.

    An honest device wins each round with probability ``γ·ω_exp`` (test
    round and win), so the win count is ``Binomial(n, γ·ω_exp)`` and the
    run aborts when it falls below ``n·γ·(ω_exp − δ)``.  Returns
    ``binomial_cdf_bound(n, ⌈n·γ·(ω_exp − δ)⌉ + 1, γ·ω_exp)``.

    Degenerate corners:

    * threshold ≤ 0 — abort is impossible; the ``k_plus_1 = 1`` bound is
      returned and a :class:`RuntimeWarning` flags the degeneracy;
    * threshold so high that ``k_plus_1`` would exceed ``n`` — returns 1
      (the trivial bound).
    """
    if not n >= 1:
        raise ValueError(f"round count must be at least 1, got {n}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"test probability must lie in (0, 1], got {gamma}")
    if not 0.0 <= omega_exp <= 1.0:
        raise ValueError(f"expected score must lie in [0, 1], got {omega_exp}")
    threshold = n * gamma * (omega_exp - delta)
    if threshold <= 0.0:
        warnings.warn(
            "abort threshold is non-positive: an honest run cannot abort; "
            "reporting the k=1 tail bound",
            RuntimeWarning,
            stacklevel=2,
        )
        k_plus_1 = 1.0
    else:
        k_plus_1 = math.ceil(threshold) + 1.0
        if k_plus_1 > n:
            return 1.0
    return binomial_cdf_bound(n, k_plus_1, gamma * omega_exp)


def soundness_compose(eps_eat: float, eps_ext: float, eps_h: float) -> float:
    """Soundness error of the composed protocol: ``max{ε_EAT, ε_EXT + 2·ε_h}``."""
    for name, val in (("eps_eat", eps_eat), ("eps_ext", eps_ext), ("eps_h", eps_h)):
        if not 0.0 < val < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {val}")
    return max(eps_eat, eps_ext + 2.0 * eps_h)


def input_randomness(n: float, gamma: float) -> float:
    """Uniform input bits consumed by an ``n``-round spot-checking run.

    Returns ``n·(H_bin(γ) + 2γ) + 2``: biased round-type bits cost
    ``H_bin(γ)`` uniform bits each (interval-algorithm rate), the two
    uniform test inputs cost ``2γ`` per round on average, and two bits of
    fixed overhead close the interval decoder.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"test probability must lie strictly in (0, 1), got {gamma}")
    return n * (h_bin(gamma) + 2.0 * gamma) + 2.0


def extractor_error(k: float, m: float) -> float:
    """Hashing error of Toeplitz extraction: ``2^{−(k−m)/2}``.

    ``k`` is the certified min-entropy of the input, ``m`` the output
    length; the error halves for every two bits of margin.
    """
    if not 0 <= m <= k:
        raise ValueError(f"need 0 <= m <= k, got k={k}, m={m}")
    return 2.0 ** (-0.5 * (k - m))


def net_expansion(certificate: EntropyCertificate, n: float, gamma: float, eps_ext: float) -> float:
    """Net certified output of a run, in bits.

    The extractor may emit ``m = hmin_lower − 2·log2(1/ε_EXT)`` bits at
    hashing error ``ε_EXT`` (equality case of :func:`extractor_error`);
    the net gain subtracts the input randomness:
    ``m − input_randomness(n, γ)``.  Non-positive results mean the run
    does not expand and are returned as-is.
    """
    if not 0.0 < eps_ext < 1.0:
        raise ValueError(f"eps_ext must lie in (0, 1), got {eps_ext}")
    m = certificate.hmin_lower - 2.0 * math.log2(1.0 / eps_ext)
    return m - input_randomness(n, gamma)
