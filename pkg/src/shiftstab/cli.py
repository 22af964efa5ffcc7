"""Command-line interface.

Exit codes: 0 success, 1 usage or parse error, 2 infeasible threshold
(the estimate hit the +inf / at-max boundary), 3 infeasible hard-pair
construction.  Reports are still printed for codes 2 and 3.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .convergence import ConvergenceConfig, run_convergence
from .core import (
    Boundary,
    CramerSpec,
    chi_squared_sampler,
    cramer_probability,
    estimate_stability,
    exponential_sampler,
    format_real,
    gamma_sampler,
    stability_chi_squared,
    stability_gamma,
)
from .errors import (
    ConfigurationError,
    ConstructionInfeasibleError,
    InvalidArgumentError,
    NumericError,
    RegimeError,
)
from .hardpair import GammaTailClass, ld_report, md_report
from .io import (
    ParseError,
    RunManifest,
    load_config,
    read_cost_csv,
    rows_to_csv,
    sha256_text,
    to_json,
)
from .queuesim import POLICIES, QueueConfig, run_batch, shift_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE_THRESHOLD = 2
EXIT_INFEASIBLE_CONSTRUCTION = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class Outcome:
    """Result of one subcommand: named outputs, the one to print, an exit code."""

    def __init__(self, outputs: dict, primary: str, code: int = EXIT_OK, parameters=None):
        self.outputs = outputs
        self.primary = primary
        self.code = code
        self.parameters = parameters or {}


def _global_flags(p, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="master seed (default 0, or the config's seed)")
    p.add_argument("--out-dir", default=d, help="write outputs and manifest.json here")
    p.add_argument("--format", choices=("csv", "json"), default=d, help="format printed to stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shiftstab", description="Stability of expected cost under KL-bounded distribution shift.")
    parser.add_argument("--version", action="version", version=f"shiftstab {__version__}")
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", parents=[common], help="stability of a cost sample at threshold y")
    p.add_argument("input", help="CSV with a 'cost' or 'risk' column")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--column", help="value column (default: 'cost', else 'risk')")

    p = sub.add_parser("sweep", parents=[common], help="stability over an even grid of thresholds")
    p.add_argument("input")
    p.add_argument("--y-min", type=float, required=True)
    p.add_argument("--y-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--column", help="value column (default: 'cost', else 'risk')")

    p = sub.add_parser("converge", parents=[common], help="MSE of the estimator over a sample-size grid")
    p.add_argument("config", help="config JSON file or preset name (e.g. exp_sigma0.9_y2)")
    p.add_argument("--replications", type=int)
    p.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")],
                   help="comma-separated sample sizes")

    p = sub.add_parser("hardpair", parents=[common], help="verify a two-point hard instance")
    p.add_argument("kind", choices=("ld", "md"))
    p.add_argument("--params", help="JSON file or preset name (hardpair_ld, hardpair_md)")
    for name in ("sigma", "y", "gamma", "x0", "omega"):
        p.add_argument(f"--{name}", type=float)

    p = sub.add_parser("queue", parents=[common], help="simulate cumulative costs of a multiclass queue")
    p.add_argument("--scenario", default="baseline", help="baseline or 1..5")
    p.add_argument("--policy", default="gcmu")
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--threshold-from", help="policy whose mean sets y = 2 x mean (default: --policy)")
    p.add_argument("--config", help="QueueConfig JSON replacing the default baseline")
    p.add_argument("--engine", choices=("auto", "python", "compiled"), default="auto")

    p = sub.add_parser("cramer", parents=[common], help="Monte Carlo P(S_m >= m y) and its rate proxy")
    p.add_argument("--dist", choices=("exp", "gamma", "chisq"), default="exp")
    p.add_argument("--sigma", type=float, default=1.0, help="rate for exp and gamma")
    p.add_argument("--alpha", type=float, default=1.0, help="gamma shape")
    p.add_argument("--k", type=float, default=1.0, help="chi-squared degrees of freedom")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--trials", type=int, default=1_000_000)
    return parser


# --------------------------------------------------------------------------
# subcommands


def _solution_record(sol, sample, y):
    return {
        "y": y,
        "stability": format_real(sol.stability),
        "lambdaStar": format_real(sol.lambda_star),
        "boundary": sol.boundary.value,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "n": sample.n,
        "mean": sample.mean,
        "max": sample.max,
    }


def _dict_csv(d: dict) -> str:
    flat = {k: v for k, v in d.items() if not isinstance(v, (dict, list))}
    return rows_to_csv(list(flat), [list(flat.values())])


def cmd_estimate(args) -> Outcome:
    table = read_cost_csv(args.input, args.column)
    sample = table.sample
    sol = estimate_stability(sample, args.y, tol=args.tol)
    rec = _solution_record(sol, sample, args.y)
    rec["column"] = table.column
    code = EXIT_INFEASIBLE_THRESHOLD if sol.boundary == Boundary.INFINITE_OR_AT_MAX else EXIT_OK
    return Outcome({"estimate.json": to_json(rec), "estimate.csv": _dict_csv(rec)}, "json", code,
                   {"input_sha256": sha256_text(Path(args.input).read_text(encoding="utf-8")),
                    "y": args.y, "tol": args.tol, "column": table.column})


def cmd_sweep(args) -> Outcome:
    if not args.y_min < args.y_max:
        raise InvalidArgumentError("need --y-min < --y-max")
    if args.steps < 2:
        raise InvalidArgumentError("need --steps >= 2")
    table = read_cost_csv(args.input, args.column)
    sample = table.sample
    rows = []
    for y in np.linspace(args.y_min, args.y_max, args.steps):
        sol = estimate_stability(sample, float(y), tol=args.tol)
        rows.append([float(y), sol.stability, sol.lambda_star, sol.boundary.value])
    header = ["y", "stability", "lambda_star", "boundary"]
    records = [dict(zip(header, r)) for r in rows]
    return Outcome({"sweep.csv": rows_to_csv(header, rows), "sweep.json": to_json(records)}, "csv",
                   EXIT_OK,
                   {"input_sha256": sha256_text(Path(args.input).read_text(encoding="utf-8")),
                    "y_min": args.y_min, "y_max": args.y_max, "steps": args.steps, "tol": args.tol})


def cmd_converge(args) -> Outcome:
    raw = load_config(args.config)
    if args.replications is not None:
        raw["replications"] = args.replications
    if args.sizes is not None:
        raw["sample_sizes"] = args.sizes
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = ConvergenceConfig.from_dict(raw)
    res = run_convergence(cfg)
    header = ["n", "mse", "mean_error", "sd_error", "boundary_count"]
    rows = [[r.n, r.mse, r.mean_error, r.sd_error, r.boundary_count] for r in res.per_size]
    summary = {
        "config": cfg.to_dict(),
        "true_stability": res.true_stability,
        "fitted_slope": res.fitted_slope,
        "per_size": [r.to_dict() for r in res.per_size],
    }
    return Outcome({"converge.csv": rows_to_csv(header, rows), "converge.json": to_json(summary)},
                   "csv", EXIT_OK, cfg.to_dict())


def _hardpair_params(args) -> dict:
    params = {}
    if args.params:
        params.update(load_config(args.params))
    elif args.kind == "ld":
        params.update(load_config("hardpair_ld"))
    else:
        params.update(load_config("hardpair_md"))
    for name in ("sigma", "y", "gamma", "x0", "omega"):
        v = getattr(args, name)
        if v is not None:
            params[name] = v
    params["kind"] = args.kind
    return params


def cmd_hardpair(args) -> Outcome:
    p = _hardpair_params(args)
    if args.kind == "ld":
        for name in ("sigma", "y", "gamma"):
            if name not in p:
                raise InvalidArgumentError(f"ld needs --{name}")
        cls = GammaTailClass(float(p["sigma"]), float(p["y"]), float(p["gamma"]))
        report, ok = ld_report(cls, p.get("x0"))
    else:
        for name in ("sigma", "omega", "x0", "y"):
            if name not in p:
                raise InvalidArgumentError(f"md needs --{name}")
        report, ok = md_report(float(p["sigma"]), float(p["omega"]), float(p["x0"]), float(p["y"]),
                               None if p.get("gamma") is None else float(p["gamma"]))
    code = EXIT_OK if ok else EXIT_INFEASIBLE_CONSTRUCTION
    return Outcome({"hardpair.json": to_json(report), "hardpair.csv": _dict_csv(report)}, "json", code, p)


def _queue_config(args, policy) -> QueueConfig:
    base = QueueConfig.from_dict(load_config(args.config)) if args.config else None
    return shift_scenario(args.scenario, policy, base)


def cmd_queue(args) -> Outcome:
    policy = args.policy.lower()
    ref = (args.threshold_from or policy).lower()
    for pol in (policy, ref):
        if pol not in POLICIES:
            raise InvalidArgumentError(f"unknown policy {pol!r}; expected one of {sorted(POLICIES)}")
    if args.paths < 1:
        raise InvalidArgumentError("--paths must be >= 1")
    seed = 0 if args.seed is None else args.seed
    cfg = _queue_config(args, policy)
    batch = run_batch(cfg, args.paths, seed, engine=args.engine)
    # the reference batch shares the scenario and the seed (common random numbers)
    ref_batch = batch if ref == policy else run_batch(_queue_config(args, ref), args.paths, seed,
                                                       engine=args.engine)
    y = 2.0 * ref_batch.mean
    sol = batch.stability(y)
    scen = cfg.name
    rows = [[i, policy, scen, float(c)] for i, c in enumerate(batch.sample.values)]
    summary = {
        "scenario": scen,
        "policy": policy,
        "paths": args.paths,
        "mean": batch.mean,
        "sd": batch.sd,
        "se": batch.se,
        "threshold_policy": ref,
        "threshold": y,
        "stability": format_real(sol.stability),
        "lambdaStar": format_real(sol.lambda_star),
        "boundary": sol.boundary.value,
    }
    outputs = {
        "queue.csv": rows_to_csv(["path_id", "policy", "scenario", "cumulative_cost"], rows),
        "queue.json": to_json(summary),
    }
    params = {"scenario": str(args.scenario), "policy": policy, "paths": args.paths,
              "threshold_from": ref, "config": cfg.to_dict()}
    return Outcome(outputs, "csv", EXIT_OK, params)


def cmd_cramer(args) -> Outcome:
    spec = CramerSpec(args.m, args.y, args.trials)
    if args.dist == "exp":
        sampler, closed = exponential_sampler(args.sigma), stability_gamma(1.0, args.sigma, args.y)
        dist = {"dist": "exp", "sigma": args.sigma}
    elif args.dist == "gamma":
        sampler, closed = gamma_sampler(args.alpha, args.sigma), stability_gamma(args.alpha, args.sigma, args.y)
        dist = {"dist": "gamma", "alpha": args.alpha, "sigma": args.sigma}
    else:
        sampler, closed = chi_squared_sampler(args.k), stability_chi_squared(args.k, args.y)
        dist = {"dist": "chisq", "k": args.k}
    seed = 0 if args.seed is None else args.seed
    res = cramer_probability(sampler, spec, seed)
    rec = {**dist, "m": args.m, "y": args.y, **res.to_dict(), "closedFormI": format_real(closed.stability)}
    params = {**dist, "m": args.m, "y": args.y, "trials": args.trials}
    return Outcome({"cramer.json": to_json(rec), "cramer.csv": _dict_csv(rec)}, "json", EXIT_OK, params)


COMMANDS = {
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "converge": cmd_converge,
    "hardpair": cmd_hardpair,
    "queue": cmd_queue,
    "cramer": cmd_cramer,
}


def _emit(args, outcome: Outcome, stdout):
    fmt = args.format or outcome.primary
    name = next(n for n in outcome.outputs if n.endswith("." + fmt))
    stdout.write(outcome.outputs[name])
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for fname, text in sorted(outcome.outputs.items()):
            (out / fname).write_text(text, encoding="utf-8", newline="\n")
            files.append((fname, sha256_text(text)))
        manifest = RunManifest(args.command, outcome.parameters,
                               0 if args.seed is None else args.seed, __version__, tuple(files))
        (out / "manifest.json").write_text(to_json(manifest.to_dict()), encoding="utf-8", newline="\n")


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=stderr)
        return EXIT_USAGE
    try:
        outcome = COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"shiftstab {args.command}: {exc}", file=stderr)
        return EXIT_USAGE
    except ConstructionInfeasibleError as exc:
        print(f"shiftstab {args.command}: infeasible construction ({exc.violated}): {exc}", file=stderr)
        return EXIT_INFEASIBLE_CONSTRUCTION
    except (InvalidArgumentError, ConfigurationError, RegimeError, FileNotFoundError, KeyError) as exc:
        print(f"shiftstab {args.command}: {exc}", file=stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"shiftstab {args.command}: numeric failure: {exc}", file=stderr)
        return EXIT_USAGE
    _emit(args, outcome, stdout)
    if outcome.code == EXIT_INFEASIBLE_THRESHOLD:
        print(f"shiftstab {args.command}: threshold at or beyond the sample maximum", file=stderr)
    elif outcome.code == EXIT_INFEASIBLE_CONSTRUCTION:
        print(f"shiftstab {args.command}: construction hypotheses violated", file=stderr)
    return outcome.code


if __name__ == "__main__":
    sys.exit(main())
