r"""Parameter search for entropy certificates and protocol planning.

Three nested searches, innermost first:

``inner_inf``
    The accumulation bound contains an infimum over quantum win
    probabilities of ``Δ(q) − (α−1)·V(q) − (α−1)²·K_α`` where
    ``Δ(q) = rate_chsh(q) − g_t(q)`` is the tangent gap.  ``Δ`` is convex
    (convex curve minus affine tangent), ``−V`` is convex in ``q``
    (``V`` is affine in ``q`` composed with a concave square-root map),
    and ``K_α`` is constant, so the objective is convex on the quantum
    interval and golden-section search finds its global minimum.

``outer_optimize``
    Any admissible ``(α, t, c_⊥)`` yields a sound lower bound, so the
    outer search only has to find a *good* point, not a provably optimal
    one.  Deterministic coordinate descent with golden-section line
    searches, seeded at ``α = 1 + 1/√n`` (clamped into the search box),
    ``t = ω_exp − δ`` (clamped), ``c_⊥ = rate_chsh(t)``; a sweep that
    improves the certificate by less than one bit terminates the search.

``plan_protocol`` / ``find_n_min``
    For a candidate ``(n, γ)`` the abort width δ is the smallest value
    whose completeness bound fits the budget (binary search); the net
    gain is the certificate minus extractor margin minus input
    randomness.  γ is optimized by golden-section on ``log γ`` and the
    minimal expanding ``n`` by bisection on ``log n``, using the
    monotonicity of the net rate in ``n``.

Searches are derivative-free and fully deterministic: identical inputs
give identical plans.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

from .budget import ErrorBudget, completeness_error, net_expansion, split_budget
from .entropy import (
    Q_HIGH,
    Q_LOW,
    EatParams,
    EntropyCertificate,
    MinTradeoffFn,
    TestDistribution,
    eat_bound,
    k_term,
    rate_chsh,
    v_term,
)

__all__ = [
    "InnerResult",
    "NetPoint",
    "PlanResult",
    "InfeasiblePlanError",
    "golden_min",
    "inner_inf",
    "outer_optimize",
    "solve_delta",
    "max_net_over_gamma",
    "find_n_min",
    "plan_protocol",
    "expansion_curve",
    "score_curve",
    "gamma_curve",
]

# Search boxes. Generous enough to cover every regime of interest; the
# tangent box keeps a safe distance from the classical plateau edge
# (where the tangent slope is discontinuous) and from the quantum
# extreme (where it diverges).
ALPHA_MINUS_ONE_LO = 1e-9
ALPHA_MINUS_ONE_HI = 0.5
T_LO = 0.7501
T_HI = Q_HIGH - 1e-6
C_PERP_LO = -5.0
C_PERP_HI = 5.0
GAMMA_LO = 1e-7
GAMMA_HI = 1e-1
N_CAP = 1e18

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasiblePlanError(RuntimeError):
    """No round count within the search cap achieves net expansion."""


def golden_min(
    f: Callable[[float], float], lo: float, hi: float, tol: float
) -> tuple[float, float]:
    """Golden-section minimization of a unimodal ``f`` on ``[lo, hi]``.

    Shrinks the bracket by the inverse golden ratio per step, reusing one
    interior evaluation, until its width is at most ``tol``.  Returns
    ``(argmin, min)`` at the better surviving interior point.  On convex
    functions the result is the global minimum to within ``tol``.
    """
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass(frozen=True)
class InnerResult:
    """Minimizer of the second-order-corrected tangent gap.

    Attributes
    ----------
    q_star : TestDistribution
        Quantum win probability attaining the infimum.
    value : float
        The infimum, in bits per round (≤ 0 for every α > 1, since the
        objective at ``q = t`` is already ``−(α−1)V(t) − (α−1)²K < 0``).
    """

    q_star: TestDistribution
    value: float


def inner_inf(fn: MinTradeoffFn, alpha: float) -> InnerResult:
    """Global minimum of ``q ↦ Δ(q) − (α−1)·V(q) − (α−1)²·K_α`` over quantum ``q``.

    ``K_α`` is constant in ``q`` and added once.  The objective is convex
    on the closed quantum interval (see the module docstring), so
    golden-section search to absolute tolerance 1e-12 in ``q`` certifies
    the global minimum; both interval endpoints are checked explicitly in
    case the minimum sits on the boundary.

    Raises
    ------
    ValueError
        If ``alpha`` is outside ``(1, 2)``.
    OverflowError
        Propagated from :func:`dirne.entropy.k_term` when the constant
        term is astronomically large (callers that want a certificate
        rather than an exception treat this as −inf).
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"Renyi order must lie in (1, 2), got {alpha}")
    a1 = alpha - 1.0
    shift = a1 * a1 * k_term(fn, alpha)

    def objective(q: float) -> float:
        return rate_chsh(q) - fn.g(q) - a1 * v_term(fn, q) - shift

    q_best, val = golden_min(objective, Q_LOW, Q_HIGH, 1e-12)
    for q_edge in (Q_LOW, Q_HIGH):
        v_edge = objective(q_edge)
        if v_edge < val:
            q_best, val = q_edge, v_edge
    return InnerResult(q_star=TestDistribution(q_best), value=val)


def outer_optimize(
    n: float,
    gamma: float,
    omega_exp: float,
    delta: float,
    eps_h: float,
    eps_eat: float,
) -> EntropyCertificate:
    """Best entropy certificate found over ``(α, t, c_⊥)``.

    Coordinate descent with golden-section line searches:

    * ``α − 1`` on a log10 scale over ``[1e-9, 0.5]`` (tolerance 1e-6),
      seeded at ``1/√n`` — the scale at which the α-linear second-order
      penalty and the 1/(α−1) error term balance;
    * ``t`` over ``(0.7501, Q_HIGH − 1e-6)`` (tolerance 1e-12), seeded at
      ``ω_exp − δ`` clamped into the box;
    * ``c_⊥`` over ``[−5, 5]`` (tolerance 1e-10), seeded at
      ``rate_chsh(t)``.

    A coordinate update is kept only if it improves the certificate; the
    search stops once a full sweep gains less than one bit (checked from
    the second sweep on) or after 50 sweeps.  Every probed point yields a
    valid lower bound, so early termination affects quality, never
    soundness.  Points where the second-order term overflows count as
    −inf and are simply never selected.
    """

    def certificate_at(alpha: float, t: float, c_perp: float) -> EntropyCertificate:
        fn = MinTradeoffFn(gamma=gamma, t=t, c_perp=c_perp)
        params = EatParams(
            n=n,
            gamma=gamma,
            omega_exp=omega_exp,
            delta=delta,
            alpha=alpha,
            eps_h=eps_h,
            eps_eat=eps_eat,
        )
        return eat_bound(params, fn)

    def hmin_at(log_a1: float, t: float, c_perp: float) -> float:
        try:
            return certificate_at(1.0 + 10.0**log_a1, t, c_perp).hmin_lower
        except (ValueError, OverflowError):
            return -math.inf

    log_a1_lo = math.log10(ALPHA_MINUS_ONE_LO)
    log_a1_hi = math.log10(ALPHA_MINUS_ONE_HI)
    t_lo, t_hi = T_LO + 1e-7, T_HI

    log_a1 = math.log10(min(max(1.0 / math.sqrt(n), ALPHA_MINUS_ONE_LO), ALPHA_MINUS_ONE_HI))
    t = min(max(omega_exp - delta, 0.7502), t_hi)
    c_perp = min(max(rate_chsh(t), C_PERP_LO), C_PERP_HI)
    best = hmin_at(log_a1, t, c_perp)

    for sweep in range(50):
        previous = best
        cand, neg = golden_min(lambda u: -hmin_at(u, t, c_perp), log_a1_lo, log_a1_hi, 1e-6)
        if -neg > best:
            log_a1, best = cand, -neg
        cand, neg = golden_min(lambda u: -hmin_at(log_a1, u, c_perp), t_lo, t_hi, 1e-12)
        if -neg > best:
            t, best = cand, -neg
        cand, neg = golden_min(lambda u: -hmin_at(log_a1, t, u), C_PERP_LO, C_PERP_HI, 1e-10)
        if -neg > best:
            c_perp, best = cand, -neg
        if sweep >= 1 and not best - previous >= 1.0:
            break
    return certificate_at(1.0 + 10.0**log_a1, t, c_perp)


def solve_delta(
    n: float, gamma: float, omega_exp: float, eps_c: float, rel_tol: float = 1e-6
) -> float | None:
    """Smallest abort width δ whose completeness bound fits the budget.

    The completeness bound is nonincreasing in δ, so binary search on
    ``δ ∈ (0, ω_exp]`` converges to the smallest admissible value within
    relative tolerance ``rel_tol``; smaller δ means a stricter abort test
    and a larger certified rate, so the smallest admissible value is the
    right choice for planning.  Returns ``None`` when even ``δ = ω_exp``
    (an abort test no honest run can fail) does not meet the budget —
    the bound cannot certify completeness at this ``(n, γ)``.

    Degeneracy warnings from probing extreme widths are suppressed: the
    planner explores those corners deliberately.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        hi = omega_exp
        if completeness_error(n, gamma, omega_exp, hi) > eps_c:
            return None
        lo = 0.0  # the zero-width test aborts an honest run half the time
        for _ in range(200):
            if hi - lo <= rel_tol * hi:
                break
            mid = 0.5 * (lo + hi)
            if completeness_error(n, gamma, omega_exp, mid) <= eps_c:
                hi = mid
            else:
                lo = mid
    return hi


@dataclass(frozen=True)
class NetPoint:
    """Net-expansion evaluation at one ``(n, γ)`` point.

    ``net_bits`` is −inf (and ``certificate`` is None, ``delta`` NaN)
    when the completeness budget is unreachable at this point.
    """

    n: float
    gamma: float
    delta: float
    net_bits: float
    certificate: EntropyCertificate | None

    @property
    def net_rate(self) -> float:
        """Net bits per round."""
        return self.net_bits / self.n


def _net_at(n: float, gamma: float, omega_exp: float, budget: ErrorBudget) -> NetPoint:
    delta = solve_delta(n, gamma, omega_exp, budget.eps_c)
    if delta is None:
        return NetPoint(n=n, gamma=gamma, delta=math.nan, net_bits=-math.inf, certificate=None)
    cert = outer_optimize(n, gamma, omega_exp, delta, budget.eps_h, budget.eps_eat)
    net = net_expansion(cert, n, gamma, budget.eps_ext)
    return NetPoint(n=n, gamma=gamma, delta=delta, net_bits=net, certificate=cert)


def max_net_over_gamma(n: float, omega_exp: float, budget: ErrorBudget) -> NetPoint:
    """Best net expansion over the test probability at fixed ``n``.

    Golden-section search on ``log10 γ ∈ [−7, −1]`` (tolerance 1e-3): the
    net gain is concave around its maximum — small γ inflates the
    variance penalty of the certificate, large γ wastes input randomness.
    """
    def neg_net(log_g: float) -> float:
        return -_net_at(n, 10.0**log_g, omega_exp, budget).net_bits

    log_g, _ = golden_min(neg_net, math.log10(GAMMA_LO), math.log10(GAMMA_HI), 1e-3)
    return _net_at(n, 10.0**log_g, omega_exp, budget)


def find_n_min(
    omega_exp: float,
    budget: ErrorBudget,
    gamma: float | None = None,
    n_cap: float = N_CAP,
) -> NetPoint:
    """Minimal round count with positive net expansion.

    Bisection on ``log10 n`` down to relative width 1e-4, probing the net
    gain with γ optimized per probe (``gamma=None``) or held fixed.  The
    net rate is nondecreasing in ``n`` (the α-error term and the fixed
    overheads amortize), which makes the sign change unique.  A single
    round can never expand — the α-error term alone exceeds any one-round
    certificate — so ``n = 1`` serves as the failing end of the bracket.

    Raises
    ------
    InfeasiblePlanError
        If even ``n_cap`` rounds do not expand.
    """

    def probe(n: float) -> NetPoint:
        if gamma is None:
            return max_net_over_gamma(n, omega_exp, budget)
        return _net_at(n, gamma, omega_exp, budget)

    top = probe(n_cap)
    if not top.net_bits > 0.0:
        raise InfeasiblePlanError(
            f"no round count up to {n_cap:.3g} yields net expansion at score {omega_exp}"
        )
    lo, hi = 0.0, math.log10(n_cap)
    while 10.0**hi - 10.0**lo > 1e-4 * 10.0**hi:
        mid = 0.5 * (lo + hi)
        if probe(10.0**mid).net_bits > 0.0:
            hi = mid
        else:
            lo = mid
    return probe(10.0**hi)


@dataclass(frozen=True)
class PlanResult:
    """Planner output: the smallest expanding run and its parameters.

    ``net_bits`` is positive by construction and equals the certificate's
    ``hmin_lower`` minus the extractor margin minus
    ``input_randomness(n_min, gamma_opt)``.
    """

    n_min: float
    gamma_opt: float
    delta: float
    net_bits: float
    certificate: EntropyCertificate


def plan_protocol(omega_exp: float, eps_s: float, eps_c: float) -> PlanResult:
    """Plan the smallest expanding run for a device of score ``omega_exp``.

    Splits the soundness budget by the default rule
    (:func:`dirne.budget.split_budget`), then searches for the minimal
    ``n`` — optimizing γ per candidate and deriving δ from the
    completeness budget throughout — via :func:`find_n_min`.

    Raises
    ------
    ValueError
        If ``omega_exp`` is not in ``(0.75, Q_HIGH]`` (scores at or below
        the classical plateau cannot certify anything; scores above the
        quantum extreme are unphysical) or the budgets are not in (0, 1).
    InfeasiblePlanError
        If no round count up to 1e18 expands.
    """
    if not 0.75 < omega_exp <= Q_HIGH:
        raise ValueError(
            f"expected score must lie in (0.75, {Q_HIGH:.12f}] to certify expansion, "
            f"got {omega_exp}"
        )
    budget = split_budget(eps_s, eps_c)
    point = find_n_min(omega_exp, budget)
    assert point.certificate is not None
    return PlanResult(
        n_min=point.n,
        gamma_opt=point.gamma,
        delta=point.delta,
        net_bits=point.net_bits,
        certificate=point.certificate,
    )


def _check_grid(grid: Sequence[float], name: str) -> None:
    if len(grid) == 0:
        raise ValueError(f"{name} must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"{name} must be strictly ascending")


def expansion_curve(
    omega_exp: float,
    eps_s: float,
    eps_c: float,
    n_grid: Sequence[float],
    gamma: float | None = None,
) -> list[NetPoint]:
    """Net expansion along an ascending grid of round counts.

    γ is optimized per point unless fixed by the caller.  The net rate is
    nondecreasing along the grid and approaches the asymptote
    ``rate-at-threshold − input rate`` as ``n → ∞``.
    """
    _check_grid(n_grid, "n_grid")
    budget = split_budget(eps_s, eps_c)
    if gamma is None:
        return [max_net_over_gamma(n, omega_exp, budget) for n in n_grid]
    return [_net_at(n, gamma, omega_exp, budget) for n in n_grid]


def score_curve(
    score_grid: Sequence[float],
    eps_s: float,
    eps_c: float,
    gamma: float | None = None,
    n_cap: float = N_CAP,
) -> list[tuple[float, NetPoint | None]]:
    """Minimal expanding round count along an ascending grid of scores.

    Entries where no ``n ≤ n_cap`` expands carry ``None``.
    """
    _check_grid(score_grid, "score_grid")
    budget = split_budget(eps_s, eps_c)
    out: list[tuple[float, NetPoint | None]] = []
    for omega in score_grid:
        try:
            out.append((omega, find_n_min(omega, budget, gamma=gamma, n_cap=n_cap)))
        except InfeasiblePlanError:
            out.append((omega, None))
    return out


def gamma_curve(
    n: float,
    omega_exp: float,
    eps_s: float,
    eps_c: float,
    gamma_grid: Sequence[float],
) -> list[NetPoint]:
    """Net expansion along an ascending grid of test probabilities at fixed ``n``."""
    _check_grid(gamma_grid, "gamma_grid")
    budget = split_budget(eps_s, eps_c)
    return [_net_at(n, g, omega_exp, budget) for g in gamma_grid]
