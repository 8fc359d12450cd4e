"""Certification, planning, and post-processing for spot-checking randomness expansion.

The toolkit covers the full life of a randomness-expansion run against
untrusted devices playing the CHSH game on a tested fraction of rounds:

- :mod:`dirne.entropy` — certified output entropy: the rate curve, affine
  tradeoff bounds, and the accumulation bound with its α-order error term;
- :mod:`dirne.budget` — error bookkeeping: completeness/soundness bounds,
  input-randomness cost, extractor margin, net expansion;
- :mod:`dirne.optimize` — parameter searches: certificate tuning, abort
  widths, test probabilities, and minimal expanding round counts;
- :mod:`dirne.sim` — honest-device simulation, score estimation from
  count tables, spacelike-separation checks, biased-bit generation;
- :mod:`dirne.extractor` — Toeplitz hashing over GF(2) with a blocked FFT
  path and a naive oracle path;
- :mod:`dirne.cli` — the ``dirne`` command.
"""

from .budget import (
    ErrorBudget,
    binomial_cdf_bound,
    completeness_error,
    extractor_error,
    input_randomness,
    net_expansion,
    soundness_compose,
    split_budget,
)
from .entropy import (
    Q_HIGH,
    Q_LOW,
    EatParams,
    EntropyCertificate,
    MinTradeoffFn,
    ScoreDistribution,
    TestDistribution,
    eat_bound,
    f_eval,
    f_properties,
    g_tangent,
    h_bin,
    k_term,
    rate_chsh,
    rate_chsh_prime,
    threshold_rate,
    v_term,
)
from .extractor import (
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
from .optimize import (
    InfeasiblePlanError,
    InnerResult,
    NetPoint,
    PlanResult,
    expansion_curve,
    find_n_min,
    gamma_curve,
    golden_min,
    inner_inf,
    max_net_over_gamma,
    outer_optimize,
    plan_protocol,
    score_curve,
    solve_delta,
)
from .sim import (
    SPEED_OF_LIGHT,
    DeviceModel,
    SpacetimeGeometry,
    SpacetimeVerdict,
    Transcript,
    TrialTally,
    biased_bits,
    chsh_score_from_counts,
    heralding_efficiency,
    quantum_setting_distribution,
    run_protocol,
    spacetime_check,
)

__version__ = "0.1.0"
