"""Command-line entry point: ``vbrecon <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 when the command
itself fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .dynamics import DynamicsKind, read_panel, simulate, write_panel
from .metrics import strength_error, tpr_tnr
from .network import GeneratorSpec, WeightedNetwork, generate, read_network, write_network
from .vbr import SolverError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _cmd_generate(args):
    spec = GeneratorSpec(kind=harness.generator_kind(args.kind) or args.kind, n_nodes=args.nodes,
                         ba_edges_per_node=args.m, ws_mean_degree=args.k,
                         ws_rewire_prob=args.rewire, sf_gamma=args.gamma,
                         weight_range=tuple(args.weight_range), seed=args.seed)
    net = generate(spec)
    write_network(net, args.out, args.format)
    print(f"wrote {net.n_nodes} nodes, {len(net.undirected_edges())} edges to {args.out}")


def _cmd_simulate(args):
    net = read_network(args.network, args.format)
    panel = simulate(net, args.dynamics, args.samples, args.sigma, args.seed)
    write_panel(panel, args.out)
    if args.truth_out:
        write_network(panel.truth, args.truth_out)
    print(f"wrote {panel.n_samples} x {panel.n_nodes} panel to {args.out}")


def _cmd_reconstruct(args):
    panel = read_panel(args.panel, args.dynamics)
    cfg = harness.ExperimentConfig(threshold=args.threshold)
    result = harness.reconstruct(panel, args.method, cfg, seed=args.seed)
    write_network(WeightedNetwork(result.weights), args.out, args.format)
    print(f"{result.method}: {int((result.weights != 0).sum())} nonzero weights, "
          f"{result.runtime_seconds:.3f} s; wrote {args.out}")


def _cmd_evaluate(args):
    truth = read_network(args.truth, args.format)
    est = read_network(args.est, args.format)
    tpr, tnr = tpr_tnr(truth, est)
    err = strength_error(truth, est)
    print(f"TPR={tpr:.6g} TNR={tnr:.6g} Error={err:.6g}")


def _cmd_experiment(args):
    cfg = harness.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["output_dir"] = args.out_dir
    if overrides:
        cfg = harness.parse_config(cfg.to_text() + "".join(f"{k} = {v}\n" for k, v in overrides.items()))
    if cfg.experiment is harness.Experiment.EXP5:
        _run_stock_config(cfg)
        return
    rows = harness.run_experiment(cfg)
    results, summary = harness.write_results(rows, cfg)
    failed = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} rows ({failed} failed); wrote {results} and {summary}")


def _run_stock_config(cfg):
    if cfg.prices:
        results, reports = harness.run_stock(cfg.prices, cfg.labels, cfg.methods, cfg.seed,
                                             cfg.nmf_restarts)
    else:
        tickers, prices, labels = harness.planted_partition_prices(seed=cfg.seed)
        results, reports = harness.run_stock(prices, labels, cfg.methods, cfg.seed,
                                             cfg.nmf_restarts, tickers=tickers)
    out = Path(cfg.output_dir) / "Exp5_stock_results.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(harness.config_header(cfg) + harness.stock_csv(reports), encoding="utf-8")
    print(harness.stock_csv(reports), end="")
    print(f"wrote {out}")


def _cmd_stock(args):
    results, reports = harness.run_stock(args.prices, args.labels, args.methods, args.seed,
                                         args.restarts)
    text = harness.stock_csv(reports)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    if args.networks_dir:
        d = Path(args.networks_dir)
        d.mkdir(parents=True, exist_ok=True)
        for m, res in results.items():
            write_network(WeightedNetwork(res.weights), d / f"{m.lower()}.tsv")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vbrecon", description="Weighted network reconstruction from time series.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="random weighted topology")
    g.add_argument("--kind", required=True, help="BA, WS or SF")
    g.add_argument("--nodes", type=int, default=50)
    g.add_argument("--m", type=int, default=2, help="BA edges per new node")
    g.add_argument("--k", type=int, default=4, help="WS mean degree")
    g.add_argument("--rewire", type=float, default=0.1, help="WS rewiring probability")
    g.add_argument("--gamma", type=float, default=-2.5, help="SF degree exponent")
    g.add_argument("--weight-range", type=float, nargs=2, default=(2.0, 3.0))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=["tsv", "mtx"])
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("simulate", help="time series on a network")
    s.add_argument("--network", required=True)
    s.add_argument("--dynamics", required=True, type=DynamicsKind.parse)
    s.add_argument("--samples", type=int, default=50)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--format", choices=["tsv", "mtx"])
    s.add_argument("--truth-out", help="also write the network the panel was generated from")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    r = sub.add_parser("reconstruct", help="estimate the network from a panel")
    r.add_argument("--method", required=True, type=str.lower, choices=["vbr", "lasso"])
    r.add_argument("--panel", required=True)
    r.add_argument("--dynamics", type=DynamicsKind.parse)
    r.add_argument("--threshold", type=float, default=0.5)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--format", choices=["tsv", "mtx"])
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_reconstruct)

    e = sub.add_parser("evaluate", help="compare an estimate with the truth")
    e.add_argument("--truth", required=True)
    e.add_argument("--est", required=True)
    e.add_argument("--format", choices=["tsv", "mtx"])
    e.set_defaults(func=_cmd_evaluate)

    x = sub.add_parser("experiment", help="run an experiment from a config file")
    x.add_argument("--config", required=True)
    x.add_argument("--seed", type=int)
    x.add_argument("--out-dir")
    x.set_defaults(func=_cmd_experiment)

    k = sub.add_parser("stock", help="price network with industry cohesion and NMI")
    k.add_argument("--prices", required=True)
    k.add_argument("--labels", required=True)
    k.add_argument("--methods", nargs="+", default=list(harness.METHODS))
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--restarts", type=int, default=100)
    k.add_argument("--out")
    k.add_argument("--networks-dir")
    k.set_defaults(func=_cmd_stock)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr, end="")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        args.func(args)
    except (OSError, ValueError, SolverError) as exc:
        print(f"vbrecon {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
