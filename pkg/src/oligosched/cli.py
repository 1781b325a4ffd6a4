"""Command-line surface tying the library together.

Subcommand tree:

    l2 strategy   print {a, b, g} for a chosen market architecture
    l2 metrics    closed-form moments / welfare / tail bound as JSON
    l2 simulate   Monte Carlo path statistics (JSON) + optional series CSV
    lti build     write the R1/R2 matrices for a given L
    lti h2        H2 report of a gain read from CSV
    lti mpe       equilibrium gain under a linear pricing rule
    lti pareto    trace the three-way front over a weight grid
    lti operator  optimize the pricing rule for the operator objective

Exit codes: 0 success, 2 validation error, 3 convergence failure.  The
environment variable OLIGO_SEED overrides any configured seed.  Every
file-writing command also writes ``<out>.manifest.json`` (atomically)
recording the command line, resolved configuration, library version, seed,
wall-clock time, and output paths; re-running the recorded command
reproduces the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, _textio
from .analysis import efficiency, risk_upper_bound, stationary_moments
from .errors import (
    InvalidParamsError,
    NotConvergedError,
    OligoschedError,
    UnstableError,
)
from .fixed_point import FixedPointConfig, PricingRule, marginal_cost_pricing, solve_mpe
from .operator_design import OperatorWeights, optimize_pricing
from .pareto import SynthesisConfig, default_weight_grid, trace_front
from .simulate import SimConfig, series_rows, simulate_l2
from .statespace import (
    FeedbackGain,
    OutputWeights,
    build_state_space,
    h2_norms,
    load_matrix_csv,
    save_matrix_csv,
    state_space_to_json,
)
from .strategies import (
    MarketParamsL2,
    RiskSensitivity,
    baseline_strategies,
    congestion_strategy,
    coop_strategy,
    k_agent_strategy,
    mpe_strategy,
    risk_sensitive_strategy,
)

_PARAM_KEYS = ("q1", "q2", "mu1", "mu2", "sigma1", "sigma2")


def _load_json(arg: str):
    import json

    if os.path.exists(arg):
        with open(arg) as fh:
            return json.load(fh)
    return json.loads(arg)


def _parse_params(arg: str) -> MarketParamsL2:
    data = _load_json(arg)
    if not isinstance(data, dict):
        raise InvalidParamsError("params must be a JSON object")
    unknown = set(data) - set(_PARAM_KEYS)
    if unknown:
        raise InvalidParamsError(f"unknown params keys: {sorted(unknown)}")
    missing = set(_PARAM_KEYS) - set(data)
    if missing:
        raise InvalidParamsError(f"missing params keys: {sorted(missing)}")
    return MarketParamsL2(**{k: float(data[k]) for k in _PARAM_KEYS})


def _parse_arch(arch: str, p: MarketParamsL2, rs_constant: str):
    if arch == "nc":
        return mpe_strategy(p)
    if arch == "coop":
        return coop_strategy(p)
    if arch == "naive":
        return baseline_strategies()[0]
    if arch == "none":
        return baseline_strategies()[1]
    if arch.startswith("k:"):
        return k_agent_strategy(p, int(arch[2:]))
    if arch.startswith("rs:"):
        theta_s, beta_s = arch[3:].split(",")
        rs = RiskSensitivity(float(theta_s), float(beta_s))
        return risk_sensitive_strategy(p, rs, constant_term=rs_constant)
    if arch.startswith("cong:"):
        return congestion_strategy(p, float(arch[5:]))
    raise InvalidParamsError(
        f"unknown arch {arch!r}; expected nc|coop|naive|none|k:<K>|"
        f"rs:<theta>,<beta>|cong:<gamma>"
    )


def _seed_override(seed: int) -> int:
    env = os.environ.get("OLIGO_SEED")
    return int(env) if env is not None else seed


_T0 = time.perf_counter()


def _emit(text: str, out: str | None, manifest: dict | None = None, extra_outputs=()):
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        return
    _textio.atomic_write_text(out, text)
    if manifest is not None:
        manifest["wall_clock_s"] = time.perf_counter() - _T0
        manifest["outputs"] = [out, *extra_outputs]
        _textio.atomic_write_text(
            out + ".manifest.json", _textio.dumps(manifest) + "\n"
        )


def _manifest(args, config: dict, seed=None) -> dict:
    return {
        "command": ["oligosched", *args],
        "config": config,
        "version": __version__,
        "seed": seed,
        "wall_clock_s": 0.0,
    }


def _cmd_l2_strategy(ns, argv):
    p = _parse_params(ns.params)
    s = _parse_arch(ns.arch, p, ns.rs_constant)
    text = _textio.dumps({"a": s.a, "b": s.b, "g": s.g}) + "\n"
    man = _manifest(argv, {"arch": ns.arch, "params": vars(p)})
    _emit(text, ns.out, man)
    return 0


def _cmd_l2_metrics(ns, argv):
    p = _parse_params(ns.params)
    s = _parse_arch(ns.arch, p, ns.rs_constant)
    m = stationary_moments(s, p)
    result = {
        "strategy": {"a": s.a, "b": s.b, "g": s.g},
        "moments": {
            "mean_x": m.mean_x,
            "second_x": m.second_x,
            "mean_u": m.mean_u,
            "second_u": m.second_u,
        },
        "efficiency": efficiency(s, p),
    }
    if ns.threshold is not None:
        try:
            rb = risk_upper_bound(s, p, ns.threshold)
            result["risk_bound"] = {
                "M": ns.threshold,
                "m1": rb.m1,
                "x_tail_bound": rb.x_tail_bound,
                "condition_holds": rb.condition_holds,
                "demand_risk_bound": rb.demand_risk_bound,
            }
        except OligoschedError as exc:
            result["risk_bound"] = {"M": ns.threshold, "error": str(exc)}
    man = _manifest(argv, {"arch": ns.arch, "params": vars(p), "M": ns.threshold})
    _emit(_textio.dumps(result) + "\n", ns.out, man)
    return 0


def _cmd_l2_simulate(ns, argv):
    p = _parse_params(ns.params)
    s = _parse_arch(ns.arch, p, ns.rs_constant)
    seed = _seed_override(ns.seed)
    cfg = SimConfig(
        horizon=ns.horizon,
        burn_in=ns.burn_in,
        replications=ns.replications,
        seed=seed,
        nonneg_demand=ns.nonneg,
        tail_thresholds=tuple(float(v) for v in ns.thresholds.split(",") if v)
        if ns.thresholds
        else (),
        quantile_levels=tuple(float(v) for v in ns.quantiles.split(",") if v),
        keep_series=ns.series_csv is not None,
        threads=ns.threads,
    )
    stats = simulate_l2(s, p, cfg)
    result = {
        "strategy": {"a": s.a, "b": s.b, "g": s.g},
        "mean_u": stats.mean_u,
        "var_u": stats.var_u,
        "second_u": stats.second_u,
        "mean_x": stats.mean_x,
        "second_x": stats.second_x,
        "quantiles": {f"{k:g}": v for k, v in stats.quantiles.items()},
        "tail_probs": {f"{k:g}": v for k, v in stats.tail_probs.items()},
        "mc_stderr": stats.mc_stderr,
        "n_samples": stats.n_samples,
    }
    if stats.conditional is not None:
        c = stats.conditional
        result["conditional"] = {
            "threshold": c.threshold,
            "p_spike_absent": c.p_spike_absent,
            "p_spike_present": c.p_spike_present,
            "p_spike_high_backlog": c.p_spike_high_backlog,
            "p_spike_low_backlog": c.p_spike_low_backlog,
        }
    extra = []
    if ns.series_csv is not None:
        _textio.atomic_write_text(
            ns.series_csv,
            _textio.csv_text(["t", "U", "x_sum", "o_flags"], series_rows(stats)),
        )
        extra.append(ns.series_csv)
    man = _manifest(
        argv,
        {
            "arch": ns.arch,
            "params": vars(p),
            "horizon": ns.horizon,
            "burn_in": ns.burn_in,
            "replications": ns.replications,
            "nonneg_demand": ns.nonneg,
            "threads": ns.threads,
        },
        seed=seed,
    )
    _emit(_textio.dumps(result) + "\n", ns.out, man, extra)
    return 0


def _cmd_lti_build(ns, argv):
    ss = build_state_space(ns.L)
    os.makedirs(ns.out_dir, exist_ok=True)
    r1_path = os.path.join(ns.out_dir, "R1.csv")
    r2_path = os.path.join(ns.out_dir, "R2.csv")
    js_path = os.path.join(ns.out_dir, "state_space.json")
    save_matrix_csv(r1_path, ss.R1, ss)
    save_matrix_csv(r2_path, ss.R2, ss)
    _textio.atomic_write_text(js_path, state_space_to_json(ss) + "\n")
    man = _manifest(argv, {"L": ns.L})
    man["wall_clock_s"] = time.perf_counter() - _T0
    man["outputs"] = [r1_path, r2_path, js_path]
    _textio.atomic_write_text(js_path + ".manifest.json", _textio.dumps(man) + "\n")
    sys.stdout.write(f"wrote {r1_path}, {r2_path}, {js_path}\n")
    return 0


def _cmd_lti_h2(ns, argv):
    mat, D, L = load_matrix_csv(ns.gain)
    ss = build_state_space(L)
    if mat.shape != (ss.D_c, ss.D_c):
        raise InvalidParamsError(
            f"gain shape {mat.shape} does not match D_c={ss.D_c}"
        )
    rep = h2_norms(FeedbackGain(mat, ss), ss, mismatch_form=ns.mismatch)
    result = {"L": L, "z1sq": rep.z1sq, "z2sq": rep.z2sq, "z3sq": rep.z3sq}
    if ns.alpha:
        a1, a2, a3 = (float(v) for v in ns.alpha.split(","))
        w = OutputWeights.normalized(a1, a2, a3)
        result["alpha"] = [w.alpha1, w.alpha2, w.alpha3]
        result["weighted_objective"] = (
            w.alpha1 ** 2 * rep.z1sq + w.alpha2 ** 2 * rep.z2sq + w.alpha3 ** 2 * rep.z3sq
        )
    man = _manifest(argv, {"gain": ns.gain, "alpha": ns.alpha})
    _emit(_textio.dumps(result) + "\n", ns.out, man)
    return 0


def _cmd_lti_mpe(ns, argv):
    ss = build_state_space(ns.L)
    if ns.pricing is None:
        pricing = marginal_cost_pricing(ss)
    else:
        data = _load_json(ns.pricing)
        unknown = set(data) - {"q1", "q2"}
        if unknown:
            raise InvalidParamsError(f"unknown pricing keys: {sorted(unknown)}")
        pricing = PricingRule(np.asarray(data["q1"]), np.asarray(data["q2"]))
    cfg = FixedPointConfig(
        tol=ns.tol,
        max_iter=ns.max_iter,
        damping=ns.damping,
        sweep={"jacobi": "jacobi", "gs": "gauss-seidel"}[ns.mode],
    )
    sol = solve_mpe(pricing, ss, cfg)
    result = {
        "L": ns.L,
        "gain": sol.gain.F,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "stability_margin": sol.stability_margin,
        "sweep": cfg.sweep,
    }
    man = _manifest(
        argv,
        {
            "L": ns.L,
            "pricing": {"q1": pricing.q1, "q2": pricing.q2},
            "tol": ns.tol,
            "max_iter": ns.max_iter,
            "damping": ns.damping,
            "mode": ns.mode,
        },
    )
    _emit(_textio.dumps(result) + "\n", ns.out, man)
    return 0


def _cmd_lti_pareto(ns, argv):
    ss = build_state_space(ns.L)
    if ns.grid is None:
        grid = default_weight_grid()
    else:
        data = _load_json(ns.grid)
        grid = [OutputWeights.normalized(*map(float, triple)) for triple in data]
    cfg = SynthesisConfig(
        tol_grad=ns.tol_grad, max_iter=ns.max_iter, restarts=ns.restarts, seed=ns.seed
    )
    points = trace_front(grid, ss, cfg)
    rows = [
        (
            p.weights.alpha1,
            p.weights.alpha2,
            p.weights.alpha3,
            p.report.z1sq,
            p.report.z2sq,
            p.report.z3sq,
        )
        for p in points
    ]
    csv = _textio.csv_text(
        ["alpha1", "alpha2", "alpha3", "z1sq", "z2sq", "z3sq"], rows
    )
    gains = {
        f"point_{i}": p.gain.F for i, p in enumerate(points)
    }
    man = _manifest(
        argv,
        {
            "L": ns.L,
            "grid": [[p.weights.alpha1, p.weights.alpha2, p.weights.alpha3] for p in points],
            "tol_grad": ns.tol_grad,
            "max_iter": ns.max_iter,
            "restarts": ns.restarts,
        },
        seed=ns.seed,
    )
    gains_path = ns.out + ".gains.json"
    _textio.atomic_write_text(gains_path, _textio.dumps(gains) + "\n")
    _emit(csv, ns.out, man, [gains_path])
    return 0


def _cmd_lti_operator(ns, argv):
    ss = build_state_space(ns.L)
    seed = _seed_override(ns.seed)
    res = optimize_pricing(
        OperatorWeights(ns.alpha1, ns.alpha2), ss, budget=ns.budget, seed=seed
    )
    result = {
        "L": ns.L,
        "pricing": {"q1": res.pricing.q1, "q2": res.pricing.q2},
        "gain": res.gain.F if res.gain is not None else None,
        "objective": res.objective,
        "baseline_objective": res.baseline_objective,
        "evaluations": res.evaluations,
    }
    man = _manifest(
        argv,
        {"L": ns.L, "alpha1": ns.alpha1, "alpha2": ns.alpha2, "budget": ns.budget},
        seed=seed,
    )
    _emit(_textio.dumps(result) + "\n", ns.out, man)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oligosched", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="group", required=True)

    l2 = sub.add_parser("l2", help="two-type market").add_subparsers(
        dest="cmd", required=True
    )
    for name in ("strategy", "metrics", "simulate"):
        sp = l2.add_parser(name)
        sp.add_argument("--arch", required=True)
        sp.add_argument("--params", required=True, help="JSON file or literal")
        sp.add_argument("--rs-constant", default="recursion",
                        choices=["recursion", "headline"])
        sp.add_argument("--out", default=None)
        if name == "metrics":
            sp.add_argument("--threshold", type=float, default=None, metavar="M")
        if name == "simulate":
            sp.add_argument("--horizon", type=int, required=True)
            sp.add_argument("--burn-in", type=int, default=0)
            sp.add_argument("--replications", type=int, default=1)
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--thresholds", default="")
            sp.add_argument("--quantiles", default="0.5,0.95,0.999")
            sp.add_argument("--nonneg", action="store_true")
            sp.add_argument("--series-csv", default=None)
            sp.add_argument("--threads", type=int, default=1)

    lti = sub.add_parser("lti", help="general-L surrogate system").add_subparsers(
        dest="cmd", required=True
    )
    sp = lti.add_parser("build")
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--out-dir", required=True)

    sp = lti.add_parser("h2")
    sp.add_argument("--gain", required=True, help="gain CSV (D_c,L header)")
    sp.add_argument("--alpha", default=None, help="a1,a2,a3")
    sp.add_argument("--mismatch", default="deadline", choices=["deadline", "unmasked"])
    sp.add_argument("--out", default=None)

    sp = lti.add_parser("mpe")
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--pricing", default=None, help="JSON file or literal")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--max-iter", type=int, default=2000)
    sp.add_argument("--damping", type=float, default=0.5)
    sp.add_argument("--mode", default="jacobi", choices=["jacobi", "gs"])
    sp.add_argument("--out", default=None)

    sp = lti.add_parser("pareto")
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--grid", default=None, help="JSON list of weight triples")
    sp.add_argument("--out", required=True)
    sp.add_argument("--tol-grad", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=5000)
    sp.add_argument("--restarts", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)

    sp = lti.add_parser("operator")
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--alpha1", type=float, required=True)
    sp.add_argument("--alpha2", type=float, required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    return ap


_DISPATCH = {
    ("l2", "strategy"): _cmd_l2_strategy,
    ("l2", "metrics"): _cmd_l2_metrics,
    ("l2", "simulate"): _cmd_l2_simulate,
    ("lti", "build"): _cmd_lti_build,
    ("lti", "h2"): _cmd_lti_h2,
    ("lti", "mpe"): _cmd_lti_mpe,
    ("lti", "pareto"): _cmd_lti_pareto,
    ("lti", "operator"): _cmd_lti_operator,
}


def main(argv=None) -> int:
    global _T0
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    ap = _build_parser()
    try:
        ns = ap.parse_args(argv)
        handler = _DISPATCH[(ns.group, ns.cmd)]
        _T0 = time.perf_counter()
        return handler(ns, argv)
    except (NotConvergedError, UnstableError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except (OligoschedError, ValueError, KeyError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
