"""Command-line interface.

Subcommands: check, fit, summary, compare-groups, compare-sources, combine,
predictive, elicit, plot.  Exit codes: 0 success, 1 invalid input, 2 runtime
failure.  The default output directory honours $TRACERMIX_OUTDIR.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    combine_sources,
    compare_groups,
    compare_sources,
    posterior_predictive,
    summarize,
)
from .elicitation import elicit
from .errors import TracermixError, ValidationError
from .ffvb import FfvbControl, run_ffvb
from .geometry import in_mixing_region
from .io import load, load_priors, load_run, output_dir, save_priors, save_run
from .mcmc import DEFAULT_SEED, McmcControl, run_mcmc
from .model import Priors
from . import plots


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on bad usage, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _out(path):
    if os.path.isabs(path) or os.path.dirname(path):
        return path
    return os.path.join(output_dir(), path)


def _add_data_args(p):
    p.add_argument("--mixtures", required=True, help="mixture CSV (tracer columns + optional group)")
    p.add_argument("--sources", required=True, help="source CSV (source, <tracer>_mean, <tracer>_sd)")
    p.add_argument("--corrections", help="correction CSV, same schema as sources")
    p.add_argument("--concentrations", help="concentration CSV (source, <tracer>)")
    p.add_argument("--group-column", default="group")


def _load_data(args):
    return load(args.mixtures, args.sources, args.corrections,
                args.concentrations, args.group_column)


def build_parser() -> _Parser:
    parser = _Parser(prog="tracermix",
                     description="Bayesian tracer mixing models")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[], help="mixing-region geometry report")
    _add_data_args(p)
    p.add_argument("--json", help="write the per-mixture report as JSON here")

    p = sub.add_parser("fit", help="fit the model and save a run artifact")
    _add_data_args(p)
    p.add_argument("--method", choices=["mcmc", "ffvb"], default="mcmc")
    p.add_argument("--out", default="run.json", help="run artifact path")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--priors", help="JSON file with prior hyperparameters")
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iterations", type=int, default=10000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--ffvb-samples", type=int, default=100)
    p.add_argument("--max-iterations", type=int, default=5000)
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--output-draws", type=int, default=3600)
    p.add_argument("--lb-trace", metavar="DIR",
                   help="write per-iteration lower-bound traces here (ffvb)")

    p = sub.add_parser("summary", help="tables from a saved run")
    p.add_argument("--run", required=True)
    p.add_argument("--type", default="statistics",
                   choices=["diagnostics", "statistics", "quantiles", "correlations"])
    p.add_argument("--group")
    p.add_argument("--csv", help="also write the table as CSV here")
    p.add_argument("--json", help="also write the table as JSON here")

    p = sub.add_parser("compare-groups", help="P(source share higher in one group)")
    p.add_argument("--run", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--groups", nargs="+", required=True)
    p.add_argument("--csv", help="write the per-group quantiles as CSV here")

    p = sub.add_parser("compare-sources", help="P(one source share exceeds another)")
    p.add_argument("--run", required=True)
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--group")
    p.add_argument("--csv", help="write the per-source quantiles as CSV here")

    p = sub.add_parser("combine", help="sum source columns a posteriori")
    p.add_argument("--run", required=True)
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--name", required=True, help="name of the combined source")
    p.add_argument("--out", required=True, help="path for the combined run artifact")

    p = sub.add_parser("predictive", help="posterior-predictive interval check")
    p.add_argument("--run", required=True)
    p.add_argument("--group")
    p.add_argument("--interval", type=float, default=0.5)
    p.add_argument("--csv", help="write per-observation intervals as CSV here")

    p = sub.add_parser("elicit", help="prior hyperparameters from target moments")
    p.add_argument("--means",
                   help="comma-separated target proportion means (sum to 1)")
    p.add_argument("--sds", help="comma-separated target sds")
    p.add_argument("--targets",
                   help='JSON file {"means": [...], "sds": [...]} instead of flags')
    p.add_argument("--n-sim", type=int, default=10000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="write the priors JSON here (default: stdout)")

    p = sub.add_parser("plot", help="render an SVG figure plus its data CSV")
    p.add_argument("--type", required=True, choices=list(plots.PLOT_KINDS))
    p.add_argument("--run", help="run artifact (all types except isospace)")
    p.add_argument("--mixtures")
    p.add_argument("--sources")
    p.add_argument("--corrections")
    p.add_argument("--concentrations")
    p.add_argument("--group-column", default="group")
    p.add_argument("--group")
    p.add_argument("--groups", nargs="+", help="group filter for isospace plots")
    p.add_argument("--out", default="plot.svg")
    return parser


def _cmd_check(args):
    data = _load_data(args)
    report = in_mixing_region(data)
    print(report)
    if args.json:
        with open(_out(args.json), "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        print(f"wrote {_out(args.json)}")
    return 0


def _cmd_fit(args):
    data = _load_data(args)
    priors = None
    if args.priors:
        priors = load_priors(args.priors, data.n_sources)
    if args.method == "mcmc":
        control = McmcControl(
            n_chains=args.chains, iterations=args.iterations,
            burn_in=args.burn_in, thin=args.thin, seed=args.seed,
        )
        result = run_mcmc(data, priors, control)
    else:
        control = FfvbControl(
            samples_per_iter=args.ffvb_samples,
            max_iterations=args.max_iterations,
            step_size=args.step_size,
            n_output_draws=args.output_draws, seed=args.seed,
        )
        result = run_ffvb(data, priors, control, trace_dir=args.lb_trace)
    out = _out(args.out)
    save_run(result, out)
    print(f"fitted {len(result.group_names)} group(s) with {args.method}; wrote {out}")
    return 0


def _cmd_summary(args):
    result = load_run(args.run)
    table = summarize(result, args.type, args.group)
    print(table)
    if args.csv:
        table.to_csv(_out(args.csv))
        print(f"wrote {_out(args.csv)}")
    if args.json:
        with open(_out(args.json), "w") as fh:
            fh.write(table.to_json())
        print(f"wrote {_out(args.json)}")
    return 0


def _cmd_compare_groups(args):
    result = load_run(args.run)
    comp = compare_groups(result, args.source, args.groups)
    for (a, b), prob in comp.probabilities.items():
        print(f"P({args.source} share in {a} > {args.source} share in {b}) = {prob:.3f}")
    if args.csv:
        comp.boxplot_stats().to_csv(_out(args.csv))
        print(f"wrote {_out(args.csv)}")
    return 0


def _cmd_compare_sources(args):
    result = load_run(args.run)
    comp = compare_sources(result, args.sources, args.group)
    for (a, b), prob in comp.probabilities.items():
        print(f"P({a} share > {b} share) = {prob:.3f}")
    if args.csv:
        comp.boxplot_stats().to_csv(_out(args.csv))
        print(f"wrote {_out(args.csv)}")
    return 0


def _cmd_combine(args):
    result = load_run(args.run)
    combined = combine_sources(result, args.sources, args.name)
    out = _out(args.out)
    save_run(combined, out)
    print(f"combined {args.sources} into {args.name!r}; wrote {out}")
    return 0


def _cmd_predictive(args):
    result = load_run(args.run)
    check = posterior_predictive(result, args.group, args.interval)
    print(
        f"{check.prob_interval:.0%} interval coverage: {check.coverage:.3f} "
        f"({int(check.inside.sum())}/{check.inside.size} observation cells inside)"
    )
    if args.csv:
        import csv as _csv

        with open(_out(args.csv), "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["row", "tracer", "observed", "lower", "upper", "inside"])
            for i in range(check.observed.shape[0]):
                for j, t in enumerate(check.tracer_names):
                    writer.writerow([
                        i, t, repr(float(check.observed[i, j])), repr(float(check.lower[i, j])),
                        repr(float(check.upper[i, j])), bool(check.inside[i, j]),
                    ])
        print(f"wrote {_out(args.csv)}")
    return 0


def _parse_floats(text, label):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"could not parse {label}: {text!r}") from None


def _cmd_elicit(args):
    if args.targets:
        try:
            with open(args.targets) as fh:
                doc = json.load(fh)
            means, sds = doc["means"], doc["sds"]
        except FileNotFoundError:
            raise ValidationError(f"targets file not found: {args.targets}") from None
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ValidationError(
                f"{args.targets}: expected JSON with 'means' and 'sds' lists ({e})"
            ) from None
    elif args.means and args.sds:
        means = _parse_floats(args.means, "--means")
        sds = _parse_floats(args.sds, "--sds")
    else:
        raise ValidationError("provide either --targets or both --means and --sds")
    prior = elicit(means, sds, n_sim=args.n_sim, seed=args.seed)
    priors = Priors(prior.clr_mean, prior.clr_cov)
    if args.out:
        save_priors(priors, _out(args.out))
        print(f"wrote {_out(args.out)}")
    else:
        print(json.dumps({
            "clr_mean": prior.clr_mean.tolist(),
            "clr_cov": prior.clr_cov.tolist(),
            "tau_shape": priors.tau_shape,
            "tau_rate": priors.tau_rate,
        }))
    print(
        "achieved means "
        + np.array2string(prior.achieved_means, precision=3)
        + " sds "
        + np.array2string(prior.achieved_sds, precision=3),
        file=sys.stderr,
    )
    return 0


def _cmd_plot(args):
    out = _out(args.out)
    if args.type == "isospace":
        if not (args.mixtures and args.sources):
            raise ValidationError("isospace plots need --mixtures and --sources")
        data = _load_data(args)
        plots.plot_isospace(data, out, groups=args.groups)
    else:
        if not args.run:
            raise ValidationError(f"{args.type} plots need --run")
        result = load_run(args.run)
        renderer = {
            "boxplot": plots.plot_boxplot,
            "matrix": plots.plot_matrix,
            "density": plots.plot_density,
            "prior": plots.plot_prior,
        }[args.type]
        renderer(result, out, group=args.group)
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "check": _cmd_check,
    "fit": _cmd_fit,
    "summary": _cmd_summary,
    "compare-groups": _cmd_compare_groups,
    "compare-sources": _cmd_compare_sources,
    "combine": _cmd_combine,
    "predictive": _cmd_predictive,
    "elicit": _cmd_elicit,
    "plot": _cmd_plot,
}


def cli_dispatch(argv) -> int:
    """Parse argv and run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except TracermixError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return cli_dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
