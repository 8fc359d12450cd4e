"""Command-line surface: certify, plan, simulate, score, extract, curve.

Reports are JSON on stdout (optionally mirrored to ``--report``), curve
products are CSV with a header row, and figures are rendered only where
a ``--plot`` path is given.  Parameters come from flags, falling back to
a line-oriented ``key = value`` config file with ``[section]`` headers
(``--config``); flags win.  Unknown config sections or keys are
rejected.

Exit codes: 0 success (expansion where that is the question), 2 no
expansion / infeasible plan, 3 configuration error, 4 numerical guard
tripped.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .budget import (
    ErrorBudget,
    completeness_error,
    input_randomness,
    net_expansion,
    split_budget,
)
from .entropy import Q_HIGH, EntropyCertificate
from .extractor import (
    PrecisionError,
    ToeplitzJob,
    extract,
    read_bit_count,
    read_bit_file,
    toeplitz_naive,
    worker_count,
    write_bit_file,
)
from .optimize import (
    InfeasiblePlanError,
    expansion_curve,
    find_n_min,
    gamma_curve,
    score_curve,
    solve_delta,
    outer_optimize,
)
from .sim import (
    DeviceModel,
    SpacetimeGeometry,
    TrialTally,
    chsh_score_from_counts,
    run_protocol,
    spacetime_check,
)

__all__ = ["ConfigError", "main"]

_DEFAULT_BLOCK_LEN = 1 << 20
_ORACLE_CHECK_CAP = 1 << 31  # naive-path work limit (m·n matrix cells)


class ConfigError(Exception):
    """Invalid or missing configuration; maps to exit code 3."""


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_GEOMETRY_KEYS = (
    "dist_sa_m",
    "dist_sb_m",
    "path_sa_m",
    "path_sb_m",
    "t_e_ns",
    "qrng_a_ns",
    "qrng_b_ns",
    "delay_a_ns",
    "delay_b_ns",
    "pc_a_ns",
    "pc_b_ns",
    "m_a_ns",
    "m_b_ns",
)

# Config schema: section -> key -> caster.  Unknown keys are rejected.
_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "protocol": {
        "n": float,
        "gamma": float,
        "omega_exp": float,
        "delta": float,
        "seed": int,
        "block_rounds": int,
    },
    "budget": {
        "eps_s": float,
        "eps_c": float,
        "eps_ext": float,
        "eps_h": float,
        "eps_eat": float,
    },
    "device": {
        "model": str,
        "win_prob": float,
        "theta_rad": float,
        "a0_rad": float,
        "a1_rad": float,
        "b0_rad": float,
        "b1_rad": float,
        "eta_a": float,
        "eta_b": float,
    },
    "geometry": {key: float for key in _GEOMETRY_KEYS},
    "extract": {
        "input": str,
        "seed": str,
        "out": str,
        "m_bits": int,
        "k_min_entropy": float,
        "eps_ext": float,
        "block_len": int,
        "oracle_check": _parse_bool,
        "workers": int,
    },
    "plan": {
        "gamma": float,
        "n_cap": float,
        "sweep_csv": str,
        "sweep_points": int,
        "plot": str,
    },
    "curve": {
        "mode": str,
        "omega_exp": float,
        "score_min": float,
        "score_max": float,
        "n_min": float,
        "n_max": float,
        "gamma_min": float,
        "gamma_max": float,
        "gamma": float,
        "n": float,
        "n_cap": float,
        "points": int,
        "out": str,
        "plot": str,
    },
}


def _load_config(path: str) -> dict[tuple[str, str], str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    values: dict[tuple[str, str], str] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            values[(section, key)] = raw
    return values


@dataclass(frozen=True)
class _Opt:
    """One resolvable parameter: a flag with an optional config fallback."""

    dest: str
    flag: str
    cast: Callable[[str], Any]
    section: str | None = None
    key: str | None = None
    default: Any = None
    required: bool = False
    help: str = ""
    is_switch: bool = False


def _add_opts(sub: argparse.ArgumentParser, opts: Sequence[_Opt]) -> None:
    for opt in opts:
        if opt.is_switch:
            sub.add_argument(opt.flag, dest=opt.dest, action="store_true", default=None, help=opt.help)
        else:
            sub.add_argument(opt.flag, dest=opt.dest, type=opt.cast, default=None, help=opt.help)


def _resolve(
    args: argparse.Namespace, cfg: dict[tuple[str, str], str], opts: Sequence[_Opt]
) -> dict[str, Any]:
    resolved: dict[str, Any] = {}
    for opt in opts:
        value = getattr(args, opt.dest)
        if value is None and opt.section is not None and (opt.section, opt.key) in cfg:
            raw = cfg[(opt.section, opt.key)]
            try:
                value = opt.cast(raw)
            except ValueError:
                raise ConfigError(
                    f"bad value for [{opt.section}] {opt.key}: {raw!r}"
                ) from None
        if value is None:
            value = opt.default
        if value is None and opt.required:
            where = f" (or [{opt.section}] {opt.key})" if opt.section else ""
            raise ConfigError(f"missing required parameter {opt.flag}{where}")
        resolved[opt.dest] = value
    return resolved


def _clean(value: Any) -> Any:
    """Make a report JSON-friendly: numpy scalars to Python, non-finite to None."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    return value


def _emit_report(report: dict[str, Any], path: str | None) -> None:
    text = json.dumps(_clean(report), indent=2)
    print(text)
    if path:
        Path(path).write_text(text + "\n")


def _write_csv(path: str | None, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    if path is None or path == "-":
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
        return
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _certificate_dict(cert: EntropyCertificate) -> dict[str, float]:
    return {
        "hmin_lower": cert.hmin_lower,
        "rate_per_round": cert.rate_per_round,
        "threshold_rate": cert.threshold_r,
        "inner_inf": cert.inner_inf_value,
        "alpha_error_term": cert.error_term_alpha,
        "alpha": cert.alpha,
        "t": cert.t,
        "c_perp": cert.c_perp,
    }


def _budget_dict(budget: ErrorBudget) -> dict[str, float]:
    return {
        "eps_s": budget.eps_s,
        "eps_c": budget.eps_c,
        "eps_ext": budget.eps_ext,
        "eps_h": budget.eps_h,
        "eps_eat": budget.eps_eat,
    }


def _resolve_budget(resolved: dict[str, Any]) -> ErrorBudget:
    eps_s, eps_c = resolved["eps_s"], resolved["eps_c"]
    overrides = [resolved.get("eps_ext"), resolved.get("eps_h"), resolved.get("eps_eat")]
    if all(v is None for v in overrides):
        return split_budget(eps_s, eps_c)
    if any(v is None for v in overrides):
        raise ConfigError("override either all of eps_ext/eps_h/eps_eat or none")
    try:
        return ErrorBudget(
            eps_s=eps_s,
            eps_c=eps_c,
            eps_ext=overrides[0],
            eps_h=overrides[1],
            eps_eat=overrides[2],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _render_plot(path: str, x, series, **kwargs) -> None:
    from . import plots  # deferred: matplotlib loads only when a figure is asked for

    plots.render_curve(path, x, series, **kwargs)


# --------------------------------------------------------------------------
# certify

_CERTIFY_OPTS = [
    _Opt("n", "--n", float, "protocol", "n", required=True, help="number of rounds"),
    _Opt("gamma", "--gamma", float, "protocol", "gamma", required=True, help="test-round probability"),
    _Opt("omega_exp", "--omega-exp", float, "protocol", "omega_exp", help="expected score (omit when --tally is given)"),
    _Opt("delta", "--delta", float, "protocol", "delta", help="abort width (solved from eps_c when omitted)"),
    _Opt("eps_s", "--eps-s", float, "budget", "eps_s", required=True, help="soundness budget"),
    _Opt("eps_c", "--eps-c", float, "budget", "eps_c", required=True, help="completeness budget"),
    _Opt("eps_ext", "--eps-ext", float, "budget", "eps_ext", help="extractor error override"),
    _Opt("eps_h", "--eps-h", float, "budget", "eps_h", help="smoothing error override"),
    _Opt("eps_eat", "--eps-eat", float, "budget", "eps_eat", help="accumulation error override"),
    _Opt("tally", "--tally", str, help="estimate the score from this count-table file"),
    _Opt("report", "--report", str, help="also write the JSON report here"),
]


def _cmd_certify(args: argparse.Namespace, cfg: dict[tuple[str, str], str]) -> int:
    p = _resolve(args, cfg, _CERTIFY_OPTS)
    if p["tally"] is not None:
        if p["omega_exp"] is not None:
            raise ConfigError("give either --omega-exp or --tally, not both")
        omega_exp = chsh_score_from_counts(TrialTally.from_text(p["tally"]))
        score_source = f"estimated from {p['tally']}"
    elif p["omega_exp"] is not None:
        omega_exp = p["omega_exp"]
        score_source = "configured"
    else:
        raise ConfigError("missing required parameter --omega-exp (or --tally)")
    budget = _resolve_budget(p)
    n, gamma = p["n"], p["gamma"]

    delta = p["delta"]
    if delta is None:
        delta = solve_delta(n, gamma, omega_exp, budget.eps_c)
        if delta is None:
            raise ConfigError(
                "no abort width meets the completeness budget at these (n, gamma); "
                "increase n, gamma, or eps_c"
            )
    cert = outer_optimize(n, gamma, omega_exp, delta, budget.eps_h, budget.eps_eat)
    consumed = input_randomness(n, gamma)
    extractable = cert.hmin_lower - 2.0 * math.log2(1.0 / budget.eps_ext)
    net = net_expansion(cert, n, gamma, budget.eps_ext)
    report = {
        "command": "certify",
        "config": {
            "n": n,
            "gamma": gamma,
            "omega_exp": omega_exp,
            "score_source": score_source,
            "delta": delta,
            "budget": _budget_dict(budget),
        },
        "certificate": _certificate_dict(cert),
        "completeness_bound": completeness_error(n, gamma, omega_exp, delta),
        "randomness": {
            "certified_bits": cert.hmin_lower,
            "extractable_bits": extractable,
            "consumed_bits": consumed,
            "net_bits": net,
        },
        "expansion": net > 0.0,
    }
    _emit_report(report, p["report"])
    return 0 if net > 0.0 else 2


# --------------------------------------------------------------------------
# plan

_PLAN_OPTS = [
    _Opt("omega_exp", "--omega-exp", float, "protocol", "omega_exp", required=True, help="expected score"),
    _Opt("eps_s", "--eps-s", float, "budget", "eps_s", required=True, help="soundness budget"),
    _Opt("eps_c", "--eps-c", float, "budget", "eps_c", required=True, help="completeness budget"),
    _Opt("gamma", "--gamma", float, "plan", "gamma", help="hold the test probability fixed instead of optimizing it"),
    _Opt("n_cap", "--n-cap", float, "plan", "n_cap", default=1e18, help="largest round count to consider"),
    _Opt("sweep_csv", "--sweep-csv", str, "plan", "sweep_csv", help="write a gamma sweep at n_min to this CSV"),
    _Opt("sweep_points", "--sweep-points", int, "plan", "sweep_points", default=13, help="points in the gamma sweep"),
    _Opt("plot", "--plot", str, "plan", "plot", help="render the gamma sweep to this image file"),
    _Opt("report", "--report", str, help="also write the JSON report here"),
]


def _cmd_plan(args: argparse.Namespace, cfg: dict[tuple[str, str], str]) -> int:
    p = _resolve(args, cfg, _PLAN_OPTS)
    omega_exp = p["omega_exp"]
    if not 0.75 < omega_exp <= Q_HIGH:
        raise ConfigError(
            f"expected score must lie in (0.75, {Q_HIGH:.12f}] to certify expansion, got {omega_exp}"
        )
    budget = split_budget(p["eps_s"], p["eps_c"])
    config_block = {
        "omega_exp": omega_exp,
        "gamma": p["gamma"],
        "n_cap": p["n_cap"],
        "budget": _budget_dict(budget),
    }
    try:
        point = find_n_min(omega_exp, budget, gamma=p["gamma"], n_cap=p["n_cap"])
    except InfeasiblePlanError as exc:
        _emit_report(
            {"command": "plan", "config": config_block, "feasible": False, "reason": str(exc)},
            p["report"],
        )
        return 2
    assert point.certificate is not None
    report = {
        "command": "plan",
        "config": config_block,
        "feasible": True,
        "n_min": point.n,
        "gamma_opt": point.gamma,
        "delta": point.delta,
        "net_bits": point.net_bits,
        "net_rate": point.net_rate,
        "certificate": _certificate_dict(point.certificate),
    }
    _emit_report(report, p["report"])

    if p["sweep_csv"] or p["plot"]:
        lo = math.log10(max(point.gamma / 10.0, 1e-7))
        hi = math.log10(min(point.gamma * 10.0, 1e-1))
        grid = [10.0**v for v in np.linspace(lo, hi, p["sweep_points"])]
        sweep = gamma_curve(point.n, omega_exp, budget.eps_s, budget.eps_c, grid)
        rows = [
            [pt.gamma, _finite_or_blank(pt.delta), _finite_or_blank(pt.net_bits), _finite_or_blank(pt.net_rate)]
            for pt in sweep
        ]
        if p["sweep_csv"]:
            _write_csv(p["sweep_csv"], ["gamma", "delta", "net_bits", "net_rate"], rows)
        if p["plot"]:
            feasible = [pt for pt in sweep if math.isfinite(pt.net_bits)]
            _render_plot(
                p["plot"],
                [pt.gamma for pt in feasible],
                {"net bits": [pt.net_bits for pt in feasible]},
                xlabel="test probability",
                ylabel="net expansion (bits)",
                title=f"net expansion vs test probability at n = {point.n:.3e}",
                logx=True,
            )
    return 0


# --------------------------------------------------------------------------
# simulate

_SIMULATE_OPTS = [
    _Opt("n", "--n", int, "protocol", "n", required=True, help="number of rounds"),
    _Opt("gamma", "--gamma", float, "protocol", "gamma", required=True, help="test-round probability"),
    _Opt("omega_exp", "--omega-exp", float, "protocol", "omega_exp", required=True, help="expected score"),
    _Opt("delta", "--delta", float, "protocol", "delta", required=True, help="abort width"),
    _Opt("seed", "--seed", int, "protocol", "seed", default=0, help="simulation seed"),
    _Opt("block_rounds", "--block-rounds", int, "protocol", "block_rounds", default=1 << 20, help="rounds per simulation block (multiple of 4)"),
    _Opt("model", "--model", str, "device", "model", default="bernoulli", help="device model: bernoulli or quantum"),
    _Opt("win_prob", "--win-prob", float, "device", "win_prob", help="bernoulli win probability (default: omega_exp)"),
    _Opt("theta_rad", "--theta-rad", float, "device", "theta_rad", help="quantum state angle"),
    _Opt("a0_rad", "--a0-rad", float, "device", "a0_rad", help="first analyzer angle, station A"),
    _Opt("a1_rad", "--a1-rad", float, "device", "a1_rad", help="second analyzer angle, station A"),
    _Opt("b0_rad", "--b0-rad", float, "device", "b0_rad", help="first analyzer angle, station B"),
    _Opt("b1_rad", "--b1-rad", float, "device", "b1_rad", help="second analyzer angle, station B"),
    _Opt("eta_a", "--eta-a", float, "device", "eta_a", default=1.0, help="detection efficiency, station A"),
    _Opt("eta_b", "--eta-b", float, "device", "eta_b", default=1.0, help="detection efficiency, station B"),
    _Opt("tally_out", "--tally-out", str, help="write the count table here"),
    _Opt("a_bits_out", "--a-bits-out", str, help="write all A outcomes as a packed bit file"),
    _Opt("b_bits_out", "--b-bits-out", str, help="write test-round B outcomes as a packed bit file"),
    _Opt("report", "--report", str, help="also write the JSON report here"),
]


def _build_device(p: dict[str, Any]) -> DeviceModel:
    model = p["model"].lower()
    if model == "bernoulli":
        win_prob = p["win_prob"] if p["win_prob"] is not None else p["omega_exp"]
        return DeviceModel.bernoulli(win_prob)
    if model == "quantum":
        angles = {key: p[key] for key in ("theta_rad", "a0_rad", "a1_rad", "b0_rad", "b1_rad")}
        missing = [key for key, val in angles.items() if val is None]
        if missing:
            raise ConfigError(f"quantum model needs angles: missing {', '.join(missing)}")
        return DeviceModel.quantum(
            angles["theta_rad"],
            (angles["a0_rad"], angles["a1_rad"]),
            (angles["b0_rad"], angles["b1_rad"]),
            eta_a=p["eta_a"],
            eta_b=p["eta_b"],
        )
    raise ConfigError(f"unknown device model {p['model']!r} (expected bernoulli or quantum)")


def _resolve_geometry(cfg: dict[tuple[str, str], str]) -> SpacetimeGeometry | None:
    present = {key: raw for (section, key), raw in cfg.items() if section == "geometry"}
    if not present:
        return None
    missing = [key for key in _GEOMETRY_KEYS if key not in present]
    if missing:
        raise ConfigError(f"[geometry] section is incomplete: missing {', '.join(missing)}")
    try:
        fields = {key: float(present[key]) for key in _GEOMETRY_KEYS}
    except ValueError as exc:
        raise ConfigError(f"bad geometry value: {exc}") from None
    return SpacetimeGeometry(**fields)


def _cmd_simulate(args: argparse.Namespace, cfg: dict[tuple[str, str], str]) -> int:
    p = _resolve(args, cfg, _SIMULATE_OPTS)
    model = _build_device(p)
    geometry = _resolve_geometry(cfg)
    transcript = run_protocol(
        p["n"],
        p["gamma"],
        p["omega_exp"],
        p["delta"],
        model,
        p["seed"],
        records_threshold=0,
        block_rounds=p["block_rounds"],
    )
    try:
        empirical = chsh_score_from_counts(transcript.tally)
    except ValueError:
        empirical = None  # some setting bucket is empty; too few test rounds
    if p["tally_out"]:
        transcript.tally.to_text(p["tally_out"])
    if p["a_bits_out"]:
        write_bit_file(
            p["a_bits_out"], np.unpackbits(transcript.a_bits, bitorder="little", count=transcript.n)
        )
    if p["b_bits_out"]:
        write_bit_file(
            p["b_bits_out"],
            np.unpackbits(transcript.b_test_bits, bitorder="little", count=transcript.n_test),
        )
    report = {
        "command": "simulate",
        "config": {
            "n": p["n"],
            "gamma": p["gamma"],
            "omega_exp": p["omega_exp"],
            "delta": p["delta"],
            "seed": p["seed"],
            "block_rounds": p["block_rounds"],
            "device": model.label,
        },
        "wins": transcript.wins,
        "n_test": transcript.n_test,
        "threshold": transcript.threshold,
        "aborted": transcript.aborted,
        "empirical_score": empirical,
        "model_expected_score": model.expected_score(),
        "outputs": {
            "tally": p["tally_out"],
            "a_bits": p["a_bits_out"],
            "b_test_bits": p["b_bits_out"],
        },
    }
    if geometry is not None:
        verdict = spacetime_check(geometry)
        report["spacetime"] = {
            "locality_a": verdict.locality_a,
            "locality_b": verdict.locality_b,
            "mi_a": verdict.mi_a,
            "mi_b": verdict.mi_b,
            "all_satisfied": verdict.all_satisfied(),
        }
    _emit_report(report, p["report"])
    return 0


# --------------------------------------------------------------------------
# score

def _cmd_score(args: argparse.Namespace, cfg: dict[tuple[str, str], str]) -> int:
    tally = TrialTally.from_text(args.tally_path)
    score = chsh_score_from_counts(tally)
    fractions = {}
    for x in (0, 1):
        for y in (0, 1):
            bucket = tally.counts[x, y]
            won = int(bucket[0, 1] + bucket[1, 0]) if x & y else int(bucket[0, 0] + bucket[1, 1])
            fractions[f"{x}{y}"] = won / int(bucket.sum())
    report = {
        "command": "score",
        "config": {"tally": args.tally_path},
        "score": score,
        "per_setting_win_fraction": fractions,
        "n_test": tally.n_test,
        "n_gen": tally.n_gen,
    }
    _emit_report(report, args.report)
    return 0


# --------------------------------------------------------------------------
# extract

_EXTRACT_OPTS = [
    _Opt("input", "--input", str, "extract", "input", required=True, help="packed-bit input file"),
    _Opt("seed_path", "--seed", str, "extract", "seed", required=True, help="packed-bit seed file (m + n − 1 bits)"),
    _Opt("out", "--out", str, "extract", "out", required=True, help="packed-bit output file"),
    _Opt("k_min_entropy", "--k-min-entropy", float, "extract", "k_min_entropy", required=True, help="certified min-entropy of the input"),
    _Opt("m_bits", "--m-bits", int, "extract", "m_bits", help="output length (default: derived from --eps-ext)"),
    _Opt("eps_ext", "--eps-ext", float, "extract", "eps_ext", help="target extraction error used to derive m_bits"),
    _Opt("block_len", "--block-len", int, "extract", "block_len", help="columns per transform block (default 2^20)"),
    _Opt("workers", "--workers", int, "extract", "workers", help="transform worker threads (default: DIRNE_WORKERS or all CPUs)"),
    _Opt("oracle_check", "--oracle-check", _parse_bool, "extract", "oracle_check", is_switch=True, help="also run the naive matrix path and compare"),
    _Opt("report", "--report", str, help="also write the JSON report here"),
]


def _cmd_extract(args: argparse.Namespace, cfg: dict[tuple[str, str], str]) -> int:
    p = _resolve(args, cfg, _EXTRACT_OPTS)
    n_bits = read_bit_count(p["input"])
    seed_count = read_bit_count(p["seed_path"])
    k = p["k_min_entropy"]

    m_bits = p["m_bits"]
    if m_bits is None:
        if p["eps_ext"] is None:
            raise ConfigError("give either --m-bits or --eps-ext to fix the output length")
        if not 0.0 < p["eps_ext"] < 1.0:
            raise ConfigError(f"eps_ext must lie in (0, 1), got {p['eps_ext']}")
        m_bits = math.floor(k - 2.0 * math.log2(1.0 / p["eps_ext"]))
        if m_bits < 1:
            raise ConfigError(
                f"min-entropy {k} cannot support eps_ext={p['eps_ext']} (derived m = {m_bits})"
            )
    if not 1 <= m_bits <= n_bits:
        raise ConfigError(f"output length must satisfy 1 ≤ m ≤ n = {n_bits}, got {m_bits}")
    # Validate the seed length from headers before touching any payload.
    if seed_count != m_bits + n_bits - 1:
        raise ConfigError(
            f"seed file holds {seed_count} bits but m + n − 1 = {m_bits + n_bits - 1} are required"
        )
    block_len = p["block_len"] if p["block_len"] is not None else min(n_bits, _DEFAULT_BLOCK_LEN)
    oracle_check = bool(p["oracle_check"])
    if oracle_check and n_bits * m_bits > _ORACLE_CHECK_CAP:
        raise ConfigError(
            f"oracle check materializes an m×n matrix; {m_bits}×{n_bits} exceeds the "
            f"{_ORACLE_CHECK_CAP} cell cap"
        )

    input_bits = read_bit_file(p["input"])
    seed_bits = read_bit_file(p["seed_path"])
    job = ToeplitzJob(n_bits=n_bits, m_bits=m_bits, block_len=block_len, seed=seed_bits)
    workers = p["workers"] if p["workers"] is not None else worker_count()
    output_bits, eps_ext = extract(job, input_bits, k, workers=workers)
    oracle_agrees = None
    if oracle_check:
        oracle = toeplitz_naive(seed_bits, input_bits, m_bits)
        oracle_agrees = bool(np.array_equal(output_bits, oracle))
        if not oracle_agrees:
            raise PrecisionError("transform path disagrees with the naive matrix oracle")
    write_bit_file(p["out"], output_bits)
    report = {
        "command": "extract",
        "config": {
            "input": p["input"],
            "seed": p["seed_path"],
            "out": p["out"],
            "n_bits": n_bits,
            "m_bits": m_bits,
            "k_min_entropy": k,
            "block_len": block_len,
            "workers": workers,
            "oracle_check": oracle_check,
        },
        "eps_ext": eps_ext,
        "output_bits": m_bits,
        "oracle_agrees": oracle_agrees,
    }
    _emit_report(report, p["report"])
    return 0


# --------------------------------------------------------------------------
# curve

_CURVE_OPTS = [
    _Opt("mode", "--mode", str, "curve", "mode", required=True, help="score, rounds, or gamma"),
    _Opt("eps_s", "--eps-s", float, "budget", "eps_s", required=True, help="soundness budget"),
    _Opt("eps_c", "--eps-c", float, "budget", "eps_c", required=True, help="completeness budget"),
    _Opt("points", "--points", int, "curve", "points", default=9, help="grid size"),
    _Opt("omega_exp", "--omega-exp", float, "curve", "omega_exp", help="expected score (rounds/gamma modes)"),
    _Opt("score_min", "--score-min", float, "curve", "score_min", help="score grid start (score mode)"),
    _Opt("score_max", "--score-max", float, "curve", "score_max", help="score grid end (score mode)"),
    _Opt("n_min", "--n-min", float, "curve", "n_min", help="round grid start (rounds mode)"),
    _Opt("n_max", "--n-max", float, "curve", "n_max", help="round grid end (rounds mode)"),
    _Opt("gamma_min", "--gamma-min", float, "curve", "gamma_min", help="gamma grid start (gamma mode)"),
    _Opt("gamma_max", "--gamma-max", float, "curve", "gamma_max", help="gamma grid end (gamma mode)"),
    _Opt("gamma", "--gamma", float, "curve", "gamma", help="fix the test probability (score/rounds modes)"),
    _Opt("n", "--n", float, "curve", "n", help="round count (gamma mode)"),
    _Opt("n_cap", "--n-cap", float, "curve", "n_cap", default=1e18, help="largest round count to consider (score mode)"),
    _Opt("out", "--out", str, "curve", "out", help="CSV path (default: stdout)"),
    _Opt("plot", "--plot", str, "curve", "plot", help="render the curve to this image file"),
]


def _finite_or_blank(value: float) -> float | str:
    return value if math.isfinite(value) else ""


def _require(p: dict[str, Any], names: Sequence[str], mode: str) -> None:
    missing = [name for name in names if p[name] is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise ConfigError(f"curve mode {mode!r} needs {flags}")


def _log_grid(lo: float, hi: float, points: int) -> list[float]:
    if not 0.0 < lo < hi:
        raise ConfigError(f"grid bounds must satisfy 0 < min < max, got [{lo}, {hi}]")
    if points < 2:
        raise ConfigError(f"grid needs at least 2 points, got {points}")
    return [10.0**v for v in np.linspace(math.log10(lo), math.log10(hi), points)]


def _cmd_curve(args: argparse.Namespace, cfg: dict[tuple[str, str], str]) -> int:
    p = _resolve(args, cfg, _CURVE_OPTS)
    mode = p["mode"].lower()
    eps_s, eps_c, points = p["eps_s"], p["eps_c"], p["points"]

    if mode == "score":
        _require(p, ["score_min", "score_max"], mode)
        if not p["score_min"] < p["score_max"]:
            raise ConfigError("score grid needs score_min < score_max")
        if points < 2:
            raise ConfigError(f"grid needs at least 2 points, got {points}")
        grid = list(np.linspace(p["score_min"], p["score_max"], points))
        results = score_curve(grid, eps_s, eps_c, gamma=p["gamma"], n_cap=p["n_cap"])
        rows = []
        for omega, point in results:
            if point is None:
                rows.append([omega, "", "", "", ""])
            else:
                rows.append([omega, point.n, point.gamma, point.delta, point.net_bits])
        _write_csv(p["out"], ["omega", "n_min", "gamma", "delta", "net_bits"], rows)
        if p["plot"]:
            feasible = [(omega, pt) for omega, pt in results if pt is not None]
            _render_plot(
                p["plot"],
                [omega for omega, _ in feasible],
                {"minimal rounds": [pt.n for _, pt in feasible]},
                xlabel="expected score",
                ylabel="minimal expanding round count",
                title="rounds needed for net expansion vs score",
                logy=True,
            )
        return 0

    if mode == "rounds":
        _require(p, ["omega_exp", "n_min", "n_max"], mode)
        grid = _log_grid(p["n_min"], p["n_max"], points)
        curve = expansion_curve(p["omega_exp"], eps_s, eps_c, grid, gamma=p["gamma"])
        rows = [
            [pt.n, pt.gamma, _finite_or_blank(pt.delta), _finite_or_blank(pt.net_bits), _finite_or_blank(pt.net_rate)]
            for pt in curve
        ]
        _write_csv(p["out"], ["n", "gamma", "delta", "net_bits", "net_rate"], rows)
        if p["plot"]:
            feasible = [pt for pt in curve if math.isfinite(pt.net_rate)]
            _render_plot(
                p["plot"],
                [pt.n for pt in feasible],
                {"net rate": [pt.net_rate for pt in feasible]},
                xlabel="rounds",
                ylabel="net bits per round",
                title=f"net expansion rate vs rounds at score {p['omega_exp']}",
                logx=True,
            )
        return 0

    if mode == "gamma":
        _require(p, ["omega_exp", "n", "gamma_min", "gamma_max"], mode)
        grid = _log_grid(p["gamma_min"], p["gamma_max"], points)
        curve = gamma_curve(p["n"], p["omega_exp"], eps_s, eps_c, grid)
        rows = [
            [pt.gamma, _finite_or_blank(pt.delta), _finite_or_blank(pt.net_bits), _finite_or_blank(pt.net_rate)]
            for pt in curve
        ]
        _write_csv(p["out"], ["gamma", "delta", "net_bits", "net_rate"], rows)
        if p["plot"]:
            feasible = [pt for pt in curve if math.isfinite(pt.net_bits)]
            _render_plot(
                p["plot"],
                [pt.gamma for pt in feasible],
                {"net bits": [pt.net_bits for pt in feasible]},
                xlabel="test probability",
                ylabel="net expansion (bits)",
                title=f"net expansion vs test probability at n = {p['n']:.3e}",
                logx=True,
            )
        return 0

    raise ConfigError(f"unknown curve mode {p['mode']!r} (expected score, rounds, or gamma)")


# --------------------------------------------------------------------------
# parser / dispatch

class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors map to the config-error exit code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="dirne",
        description=(
            "Certification, planning, simulation, and post-processing for "
            "spot-checking randomness-expansion runs."
        ),
        epilog=(
            "Exit codes: 0 success/expansion, 2 no expansion or infeasible, "
            "3 configuration error, 4 numerical guard tripped. "
            "DIRNE_WORKERS limits transform worker threads."
        ),
    )
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps the subparser from clobbering a --config given before the
    # subcommand (the subcommand's namespace is copied over the top-level one).
    common.add_argument(
        "--config", default=argparse.SUPPRESS, help="key = value config file with [section] headers"
    )
    parser.add_argument("--config", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    certify = sub.add_parser(
        "certify", parents=[common], help="entropy certificate and net expansion for one run configuration"
    )
    _add_opts(certify, _CERTIFY_OPTS)
    certify.set_defaults(handler=_cmd_certify)

    plan = sub.add_parser("plan", parents=[common], help="smallest expanding round count, optimizing gamma and delta")
    _add_opts(plan, _PLAN_OPTS)
    plan.set_defaults(handler=_cmd_plan)

    simulate = sub.add_parser("simulate", parents=[common], help="simulate an honest device through the protocol")
    _add_opts(simulate, _SIMULATE_OPTS)
    simulate.set_defaults(handler=_cmd_simulate)

    score = sub.add_parser("score", parents=[common], help="empirical game score of a count table")
    score.add_argument("tally_path", help="count-table file")
    score.add_argument("--report", default=None, help="also write the JSON report here")
    score.set_defaults(handler=_cmd_score)

    extract_cmd = sub.add_parser(
        "extract", parents=[common], help="Toeplitz-hash a packed bit file down to near-uniform bits"
    )
    _add_opts(extract_cmd, _EXTRACT_OPTS)
    extract_cmd.set_defaults(handler=_cmd_extract)

    curve = sub.add_parser("curve", parents=[common], help="expansion curves over score, rounds, or gamma grids (CSV)")
    _add_opts(curve, _CURVE_OPTS)
    curve.set_defaults(handler=_cmd_curve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args.config) if args.config else {}
        return args.handler(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (PrecisionError, OverflowError) as exc:
        print(f"numerical guard tripped: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
