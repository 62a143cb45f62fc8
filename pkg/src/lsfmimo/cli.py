"""Command line front end.

Four subcommands: `validate` runs the closed-form self-checks and exits
nonzero on any failure, `cdf` runs the rate-distribution study, `sinr`
prints the per-user analytic report for one network, and `estimate-beta`
runs the gain-estimation convergence study. Every subcommand takes the same
four options: --config, --seed, --out, --threads.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from .analytic import build_sinr_report
from .config import load_config, parse_int_list
from .errors import ConfigError, ExperimentAborted
from .estimation import convergence_study, error_decay_slope, estimate_beta
from .experiments import SCHEMES, run_cdf_experiment
from .precoding import no_lsfp, zf_lsfp
from .validation import fading_for, oracle_checks, render_table

_SCHEME_ALIASES = {"zf": "zf-lsfp", "no": "no-lsfp", "none": "no-lsfp"}


def _canonical_scheme(name: str) -> str:
    scheme = _SCHEME_ALIASES.get(name.strip().lower(), name.strip().lower())
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {name!r}; expected one of {SCHEMES}")
    return scheme


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsfmimo",
        description="Multi-cell massive MIMO studies with network-level precoding.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub):
        sub.add_argument("--config", required=True, help="path to the INI config file")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument("--out", default=".", help="directory for CSV outputs")
        sub.add_argument("--threads", type=int, default=None, help="worker thread count")

    validate = commands.add_parser(
        "validate", help="run the Monte-Carlo self-checks against the closed forms"
    )
    add_common(validate)
    validate.add_argument(
        "--trials", type=int, default=None, help="override the trial count"
    )

    cdf = commands.add_parser("cdf", help="rate CDFs over random network draws")
    add_common(cdf)
    cdf.add_argument("--scheme", default=None, help="no-lsfp or zf-lsfp (aliases: no, zf)")
    cdf.add_argument("--M", default=None, help="comma-separated antenna counts")
    cdf.add_argument("--draws", type=int, default=None, help="number of network draws")
    cdf.add_argument("--variant", default=None, help="zero-forcing variant: mu or eta")

    sinr = commands.add_parser("sinr", help="per-user closed-form SINR and rate report")
    add_common(sinr)
    sinr.add_argument("--scheme", default=None, help="no-lsfp or zf-lsfp (aliases: no, zf)")

    beta = commands.add_parser(
        "estimate-beta", help="gain-estimation bias and convergence study"
    )
    add_common(beta)
    return parser


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------

def _run_validate(args) -> int:
    net, settings, layout = load_config(args.config)
    if args.seed is not None:
        net = replace(net, seed=args.seed)
    trials = args.trials if args.trials is not None else settings.trials
    fading = fading_for(net, layout)
    results = oracle_checks(net, fading, trials, net.seed, threads=args.threads)
    print(render_table(results))
    failures = [r for r in results if not r.passed]
    report_path = os.path.join(_ensure_out(args.out), "validation.csv")
    with open(report_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "value", "limit", "status"])
        for r in results:
            writer.writerow([r.name, repr(r.value), repr(r.limit), "ok" if r.passed else "fail"])
    return 1 if failures else 0


def _run_cdf(args) -> int:
    net, settings, _ = load_config(args.config)
    seed = args.seed if args.seed is not None else net.seed
    scheme = _canonical_scheme(args.scheme if args.scheme else settings.scheme)
    grid = settings.M_grid
    if args.M:
        grid = parse_int_list(args.M)
    draws = args.draws if args.draws is not None else settings.network_draws
    variant = args.variant if args.variant else settings.variant

    result = run_cdf_experiment(
        net, scheme, grid, draws, seed=seed, variant=variant,
        threads=args.threads, outage_fraction=settings.outage_fraction,
    )
    out = _ensure_out(args.out)
    for M in grid:
        result.write_rate_csv(os.path.join(out, f"rates_{scheme}_M{M}.csv"), M)
    result.write_summary_csv(os.path.join(out, f"summary_{scheme}.csv"))
    for M in grid:
        print(
            f"{scheme} M={M}: outage rate {result.outage[M]:.6g} "
            f"({result.draws - result.skipped} draws, {result.skipped} skipped)"
        )
    return 0


def _run_sinr(args) -> int:
    net, settings, layout = load_config(args.config)
    if args.seed is not None:
        net = replace(net, seed=args.seed)
    scheme = _canonical_scheme(args.scheme if args.scheme else settings.scheme)
    fading = fading_for(net, layout)
    if scheme == "zf-lsfp":
        weights = zf_lsfp(fading, net.rho_r, net.tau, variant=settings.variant)
    else:
        weights = no_lsfp(fading, net.rho_r, net.tau, net.M)
    report = build_sinr_report(fading, weights, net.rho_f, net.rho_r, net.tau, net.M)
    out = _ensure_out(args.out)
    path = os.path.join(out, f"sinr_{scheme}.csv")
    report.to_csv(path)
    for k in range(net.K):
        for l in range(net.L):
            print(
                f"user (k={k}, l={l}): forward {report.rate_dl[k, l]:.4f} "
                f"reverse {report.rate_ul[k, l]:.4f} bit/s/Hz"
            )
    print(f"report written to {path}")
    return 0


def _run_estimate_beta(args) -> int:
    net, settings, _ = load_config(args.config)
    seed = args.seed if args.seed is not None else net.seed
    env = [settings.target_gain] * settings.tones
    rows = convergence_study(
        env, 0, settings.estimation_M_grid, net.rho_r, settings.tones,
        seed, trials=settings.estimation_trials,
    )
    slope = error_decay_slope(rows)
    point = estimate_beta(
        env, 0, max(settings.estimation_M_grid), net.rho_r, settings.tones,
        seed + 1, trials=100,
    )
    out = _ensure_out(args.out)
    path = os.path.join(out, "beta_estimates.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["M", "mean", "std", "se"])
        for row in rows:
            writer.writerow(
                [row["M"], repr(row["mean"]), repr(row["std"]), repr(row["se"])]
            )
    for row in rows:
        print(f"M={row['M']}: mean {row['mean']:.6f} +- {row['se']:.6f}")
    print(f"spread decay slope: {slope:.3f} (expect about -0.5)")
    print(
        f"estimate at M={point.M_used} over {point.trials} trials: "
        f"{point.beta_hat:.6f} (true {settings.target_gain})"
    )
    print(f"table written to {path}")
    return 0


_COMMANDS = {
    "validate": _run_validate,
    "cdf": _run_cdf,
    "sinr": _run_sinr,
    "estimate-beta": _run_estimate_beta,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExperimentAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
