"""Command-line front end: fit trees, test agreement, run studies, plot.

Exit codes: 0 on success, 1 on validation/data errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agreement import ba_estimates, ba_test, loa_quantile, sequential_ba_test
from .data import CATEGORICAL, CONTINUOUS, CsvSchema, load_csv
from .kernel import MAX, QUAD
from .render import render_ba_svg, render_tree_text
from .simulate import (
    Scenario,
    SimConfig,
    desk_preset,
    paper_preset,
    run_simulation,
    write_results_csv,
)
from .tree import (
    ENGINES,
    CoatModel,
    FitConfig,
    fit_coat,
    model_from_json,
    model_to_json,
    predict_node,
)


def _fmt(x: float) -> str:
    return format(x, ".4g")


def _add_schema_flags(parser: argparse.ArgumentParser, covariates: bool = True):
    parser.add_argument("--m1", help="column with the first method's measurements")
    parser.add_argument("--m2", help="column with the second method's measurements")
    parser.add_argument("--diff", help="column with precomputed differences")
    parser.add_argument("--mean", help="column with precomputed pairwise means")
    if covariates:
        parser.add_argument(
            "--covariate", "-x", action="append", default=[], metavar="NAME[:cat|:num]",
            help="covariate column; append ':cat' for categorical (default numeric); repeatable",
        )


def _schema_from_args(args, extra_covariates=()) -> CsvSchema:
    covs = []
    for spec in getattr(args, "covariate", []):
        name, _, kind = spec.partition(":")
        if kind in ("", "num", "numeric", "continuous"):
            covs.append((name, CONTINUOUS))
        elif kind in ("cat", "categorical"):
            covs.append((name, CATEGORICAL))
        else:
            raise ValueError(f"unknown covariate kind {kind!r} in {spec!r}")
    covs.extend(extra_covariates)
    return CsvSchema(m1=args.m1, m2=args.m2, diff=args.diff, mean=args.mean,
                     covariates=tuple(covs))


def _default_out(input_path: str, suffix: str) -> Path:
    return Path(Path(input_path).stem + suffix)


def _cmd_fit(args) -> int:
    include_mean = not args.no_mean_covariate
    schema = _schema_from_args(args)
    dataset, report = load_csv(args.data, schema, include_mean_as_covariate=include_mean)
    if include_mean and dataset.mean_values is None:
        print("note: no mean values available; fitting without the mean covariate",
              file=sys.stderr)
    print(report.summary(), file=sys.stderr)
    config = FitConfig(
        engine=args.engine,
        alpha=args.alpha,
        minsplit=args.minsplit,
        minbucket=args.minbucket,
        maxdepth=args.maxdepth,
        bonferroni=not args.no_bonferroni,
        statistic=args.statistic,
        mob_trim=args.mob_trim,
    )
    model = fit_coat(dataset, config)
    out = Path(args.out) if args.out else _default_out(args.data, "_model.json")
    out.write_text(model_to_json(model), encoding="utf-8")
    sys.stdout.write(render_tree_text(model))
    print(f"model written to {out}", file=sys.stderr)
    return 0


def _cmd_batest(args) -> int:
    schema = _schema_from_args(args, extra_covariates=[(args.group, CATEGORICAL)])
    dataset, report = load_csv(args.data, schema)
    print(report.summary(), file=sys.stderr)
    group_col = next(c for c in dataset.covariates if c.name == args.group)
    labels = [group_col.levels[i - 1] for i in group_col.values.astype(int)]
    quantile = loa_quantile(args.loa_quantile, n=dataset.n)
    result = ba_test(dataset.y, labels, quantile=quantile)
    decisions = sequential_ba_test(result, alpha=args.alpha)

    out = Path(args.out) if args.out else _default_out(args.data, "_batest.json")
    doc = result.to_dict()
    doc["alpha"] = args.alpha
    doc["sequential"] = [
        {"test": name, "p_value": p, "decision": decision}
        for name, p, decision in decisions
    ]
    out.write_text(json.dumps(doc, indent=2), encoding="utf-8")

    print(f"Two-sample Bland-Altman test (group: {args.group})")
    print(f"  {'test':<10}{'statistic':>12}{'df':>5}{'p value':>12}")
    for name, test in (("joint", result.joint), ("mean", result.mean_only),
                       ("variance", result.var_only)):
        print(f"  {name:<10}{_fmt(test.statistic):>12}{test.df:>5}{_fmt(test.p_raw):>12}")
    print("Group estimates:")
    for label, est in result.group_estimates:
        print(f"  {label}: n={est.n}, bias={_fmt(est.bias)}, sd={_fmt(est.sd)}, "
              f"LoA [{_fmt(est.loa_lower)}, {_fmt(est.loa_upper)}]")
    seq = "; ".join(f"{name} {decision}" for name, _, decision in decisions)
    print(f"Sequential decisions (alpha={args.alpha:g}): {seq}")
    print(f"results written to {out}", file=sys.stderr)
    return 0


def _cmd_simulate(args) -> int:
    if args.preset:
        base = desk_preset(seed=args.seed) if args.preset == "desk" else paper_preset(seed=args.seed)
        cfg = SimConfig(base.scenarios, base.methods, base.ns,
                        args.reps or base.replications,
                        seed=args.seed, alpha=args.alpha)
    else:
        if not args.scenario:
            raise ValueError("simulate needs --preset or at least one --scenario")
        scenarios = tuple(Scenario.parse(s) for s in args.scenario)
        methods = tuple(args.methods.split(",")) if args.methods else ENGINES
        ns = tuple(args.n) if args.n else (100, 500)
        cfg = SimConfig(scenarios=scenarios, methods=methods, ns=ns,
                        replications=args.reps or 500, seed=args.seed, alpha=args.alpha)
    result = run_simulation(cfg)
    out = Path(args.out)
    write_results_csv(result, out)
    print(f"{len(result.rows)} aggregates written to {out} "
          f"({result.wall_time_s:.1f}s)", file=sys.stderr)
    for scenario, method, n, count in result.failures:
        print(f"warning: {count} failed replications for {scenario}/{method}/n={n}",
              file=sys.stderr)
    if args.figures:
        from .figures import render_sim_figures, rows_from_result

        written = render_sim_figures(rows_from_result(result), out.parent or Path("."),
                                     stem=out.stem)
        print(f"{len(written)} figures written next to {out}", file=sys.stderr)
    return 0


def _cmd_plot(args) -> int:
    if args.sim_results:
        from .figures import read_results_csv, render_sim_figures

        path = Path(args.sim_results)
        rows = read_results_csv(path)
        written = render_sim_figures(rows, path.parent if str(path.parent) else Path("."),
                                     stem=path.stem)
        print(f"{len(written)} figures written next to {path}", file=sys.stderr)
        return 0
    if not args.data:
        raise ValueError("plot needs a data CSV (or --sim-results)")

    model: CoatModel | None = None
    extra = []
    if args.model:
        model = model_from_json(Path(args.model).read_text(encoding="utf-8"))
        extra = [(c.name, c.kind) for c in model.schema if c.name != "mean"]
    schema = _schema_from_args(args, extra_covariates=extra)
    dataset, report = load_csv(args.data, schema)
    print(report.summary(), file=sys.stderr)
    if dataset.mean_values is None:
        raise ValueError("plotting needs mean values; supply --m1/--m2 or --mean")
    quantile = loa_quantile(args.loa_quantile, n=dataset.n)
    estimates = ba_estimates(dataset.y, quantile=quantile)

    leaf_ids = None
    if model is not None:
        by_name = {c.name: c for c in dataset.covariates}
        leaf_ids = []
        for i in range(dataset.n):
            row = {}
            for info in model.schema:
                if info.name == "mean":
                    row["mean"] = float(dataset.mean_values[i])
                else:
                    col = by_name[info.name]
                    value = col.values[i]
                    row[info.name] = (col.levels[int(value) - 1]
                                      if col.is_categorical else float(value))
            leaf_ids.append(predict_node(model, row)[0])

    svg = render_ba_svg(dataset.y, dataset.mean_values, estimates, leaf_ids=leaf_ids)
    out = Path(args.out) if args.out else _default_out(args.data, "_ba.svg")
    out.write_text(svg, encoding="utf-8")
    print(f"plot written to {out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coat",
        description="Conditional method agreement trees: fit, test, simulate, plot.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a tree to method-comparison data")
    p_fit.add_argument("data", help="input CSV file")
    _add_schema_flags(p_fit)
    p_fit.add_argument("--engine", choices=ENGINES, default="ctree_trafo")
    p_fit.add_argument("--alpha", type=float, default=0.05)
    p_fit.add_argument("--minsplit", type=int, default=20)
    p_fit.add_argument("--minbucket", type=int, default=7)
    p_fit.add_argument("--maxdepth", type=int, default=None)
    p_fit.add_argument("--statistic", choices=(QUAD, MAX), default=QUAD)
    p_fit.add_argument("--mob-trim", type=float, default=0.1)
    p_fit.add_argument("--no-bonferroni", action="store_true")
    p_fit.add_argument("--no-mean-covariate", action="store_true",
                       help="do not add the pairwise mean as a covariate")
    p_fit.add_argument("--out", help="model JSON path (default: <data>_model.json)")
    p_fit.set_defaults(func=_cmd_fit)

    p_ba = sub.add_parser("batest", help="two-sample Bland-Altman test")
    p_ba.add_argument("data", help="input CSV file")
    _add_schema_flags(p_ba, covariates=False)
    p_ba.add_argument("--group", required=True, help="column defining the two groups")
    p_ba.add_argument("--alpha", type=float, default=0.05)
    p_ba.add_argument("--loa-quantile", choices=("normal", "t"), default="normal")
    p_ba.add_argument("--out", help="result JSON path (default: <data>_batest.json)")
    p_ba.set_defaults(func=_cmd_batest)

    p_sim = sub.add_parser(
        "simulate", help="run Monte-Carlo studies",
        description="Runs the requested scenarios; COAT_THREADS caps worker processes.",
    )
    p_sim.add_argument("--preset", choices=("desk", "paper"))
    p_sim.add_argument("--scenario", action="append", default=[],
                       help="null | stump1..3 | tree1..2; repeatable")
    p_sim.add_argument("--methods", help="comma-separated engine list")
    p_sim.add_argument("--n", action="append", type=int, help="sample size; repeatable")
    p_sim.add_argument("--reps", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--out", default="simulation_results.csv")
    p_sim.add_argument("--figures", action="store_true",
                       help="also render metric-vs-n figures next to the CSV")
    p_sim.set_defaults(func=_cmd_simulate)

    p_plot = sub.add_parser(
        "plot", help="render a Bland-Altman SVG, or figures from simulation results"
    )
    p_plot.add_argument("data", nargs="?", help="input CSV file")
    _add_schema_flags(p_plot)
    p_plot.add_argument("--model", help="fitted model JSON for leaf coloring")
    p_plot.add_argument("--loa-quantile", choices=("normal", "t"), default="normal")
    p_plot.add_argument("--sim-results",
                        help="simulation results CSV; renders metric-vs-n figures instead")
    p_plot.add_argument("--out", help="SVG path (default: <data>_ba.svg)")
    p_plot.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except Exception as exc:
        print(f"coat: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
