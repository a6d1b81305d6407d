"""
``gdw`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Reports go to ``--report``/``--out`` when given, otherwise to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import DataError, NumericalError
from .graph import Graph, Norm, load_edge_list, save_edge_list, set_num_threads
from .io import read_labels, read_mask_csv, read_matrix, write_labels, write_mask_csv, write_matrix

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_graph(args, path=None, directed=None) -> Graph:
    directed = args.directed if directed is None else directed
    return load_edge_list(path or args.graph, directed=directed, nodes=getattr(args, "nodes", None))


def _report(command, args, skip=()):
    from .report import Report
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ("func", "command", "kind", *skip)}
    return Report(command, params)


def _need_seed(args):
    if args.seed is None:
        raise DataError("this command draws random numbers; pass --seed")
    return args.seed


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_precompute(args) -> int:
    from .operators import parse_spec_list, precompute_sign_features
    g = _load_graph(args)
    X = read_matrix(args.features)
    specs = parse_spec_list(args.spec)
    rep = _report("precompute", args)
    t0 = time.perf_counter()
    bank = precompute_sign_features(g, X, specs)
    elapsed = time.perf_counter() - t0
    bank.save(args.out)
    rep.metrics = {"n": bank.n, "d": bank.d, "blocks": len(bank), "edges": g.num_edges,
                   "specs": [str(s) for s in specs],
                   "edges_per_second": g.num_edges * max(len(specs), 1) / elapsed if elapsed > 0 else None}
    rep.time("precompute_seconds", elapsed)
    rep.emit(args.report)
    return EXIT_OK


def cmd_impute(args) -> int:
    from .fp import dirichlet_energy, impute
    from .synth import random_mask
    g = _load_graph(args)
    X = read_matrix(args.features)
    if args.mask:
        mask = read_mask_csv(args.mask)
    elif args.missing_rate is not None:
        mask = random_mask(X.shape[0], X.shape[1], args.missing_rate, seed=_need_seed(args))
    else:
        raise DataError("pass either --mask or --missing-rate")
    if mask.shape != X.shape:
        raise DataError(f"mask shape {mask.shape} does not match feature shape {X.shape}")
    if args.method == "random":
        _need_seed(args)
    kw = {"max_iters": args.iters, "tol": args.tol, "norm": args.norm} if args.method == "fp" else {}
    rep = _report("impute", args)
    t0 = time.perf_counter()
    res = impute(g, X, mask, args.method, seed=args.seed, **kw)
    rep.time("impute_seconds", time.perf_counter() - t0)
    write_matrix(args.out, res.X)
    norm = args.norm
    rep.metrics = {
        "method": res.method,
        "iterations": res.iterations,
        "residual": res.residual,
        "observed_fraction": float(mask.mean()) if mask.size else 1.0,
        "dirichlet_energy_before": dirichlet_energy(g, np.where(mask, X, 0.0), norm),
        "dirichlet_energy_after": dirichlet_energy(g, res.X, norm),
        "normalization": norm,
    }
    rep.emit(args.report)
    return EXIT_OK


def cmd_homophily(args) -> int:
    from .homophily import effective_homophily
    g = _load_graph(args)
    y = read_labels(args.labels, n=g.n)
    rep = _report("homophily", args)
    r = effective_homophily(g, y, zero_diag=not args.keep_diag)
    rep.metrics = r.to_dict()
    rep.emit(args.out)
    return EXIT_OK


def cmd_wl(args) -> int:
    from .wl import compare
    g1 = _load_graph(args, args.graph)
    g2 = _load_graph(args, args.graph2)
    rep = _report("wl", args)
    rep.metrics = compare(g1, g2, args.mode, args.max_iters).to_dict()
    rep.emit(args.out)
    return EXIT_OK


def cmd_spectral(args) -> int:
    from .spectral import (JACOBI_MAX_N, channel_average, graph_fourier_transform, high_frequency_fraction,
                           laplacian_decomposition)
    g = _load_graph(args)
    rep = _report("spectral", args)
    dec = laplacian_decomposition(g, args.self_loops)
    rep.metrics = {"n": g.n, "eigenvalues": dec.eigenvalues, "solver": "jacobi" if g.n <= JACOBI_MAX_N else "lapack",
                   "sweeps": dec.sweeps}
    if args.features:
        X = read_matrix(args.features)
        lam, coef = graph_fourier_transform(g, X, decomposition=dec)
        mags = np.abs(coef)
        table = np.column_stack([lam, mags, channel_average(mags), channel_average(mags, True)])
        if args.out:
            write_matrix(args.out, table)
        rep.metrics["high_frequency_fraction"] = high_frequency_fraction(lam, mags)
        rep.metrics["columns"] = (["eigenvalue"] + [f"channel_{c}" for c in range(X.shape[1])]
                                  + ["mean", "mean_normalized"])
    else:
        if args.k > g.n:
            raise DataError(f"need k <= n = {g.n}, got k = {args.k}")
        if args.out:
            write_matrix(args.out, dec.eigenvectors[:, :args.k])
    rep.emit(args.report)
    return EXIT_OK


def cmd_synth(args) -> int:
    from . import synth
    seed = _need_seed(args)
    rep = _report("synth", args)
    rep.parameters["kind"] = args.kind
    out = Path(args.out)
    if args.kind in ("pa", "er", "dirtask"):
        out.mkdir(parents=True, exist_ok=True)
    if args.kind == "pa":
        if args.compat:
            H = read_matrix(args.compat)
        else:
            H = synth.target_homophily_compat(args.classes, args.h)
        g, y = synth.gen_pa_labeled(args.n, args.classes, args.m, H, seed=seed)
        save_edge_list(g, out / "edges.tsv")
        write_labels(out / "y.csv", y)
        rep.metrics = {"n": g.n, "edges": g.num_edges}
    elif args.kind == "er":
        g = synth.gen_erdos_renyi(args.n, args.p, directed=args.directed, seed=seed)
        save_edge_list(g, out / "edges.tsv")
        rep.metrics = {"n": g.n, "edges": g.num_edges}
    elif args.kind == "dirtask":
        g, X, y = synth.gen_directed_task(args.n, args.p, seed=seed)
        save_edge_list(g, out / "edges.tsv")
        write_matrix(out / "X.gdm", X)
        write_labels(out / "y.csv", y)
        rep.metrics = {"n": g.n, "edges": g.num_edges, "label_balance": float(y.values.mean())}
    elif args.kind == "features":
        y = read_labels(args.labels)
        X = synth.gen_class_features(y, args.d, args.sep, args.noise, seed=seed)
        write_matrix(out, X)
        rep.metrics = {"rows": X.shape[0], "cols": X.shape[1]}
    else:
        mask = synth.random_mask(args.n, args.d, args.rate, seed=seed)
        write_mask_csv(out, mask)
        rep.metrics = {"observed_fraction": float(mask.mean()) if mask.size else 1.0}
    rep.emit(args.report)
    return EXIT_OK


def _train_config(args):
    from .learn import TrainConfig
    return TrainConfig(lr=args.lr, max_epochs=args.max_epochs, patience=args.patience,
                       seed=_need_seed(args), hidden=args.hidden, weight_decay=args.weight_decay)


def cmd_train(args) -> int:
    from .learn import SplitSpec, accuracy, per_class_split, save_model, train
    from .operators import FeatureBank
    bank = FeatureBank.load(args.bank)
    y = read_labels(args.labels, n=bank.n)
    cfg = _train_config(args)
    if Path(args.split).is_file():
        split = SplitSpec.from_dict(json.loads(Path(args.split).read_text(encoding="utf-8")))
    else:
        try:
            split_seed = int(args.split)
        except ValueError:
            raise DataError(f"--split must be an integer seed or an existing JSON file: {args.split}")
        split = per_class_split(y, args.per_class, args.val_frac, seed=split_seed)
    rep = _report("train", args)
    t0 = time.perf_counter()
    model, hist = train(bank, y, split, cfg)
    rep.time("train_seconds", time.perf_counter() - t0)
    if args.out:
        save_model(args.out, model)
    rep.metrics = {
        "architecture": "sign-readout",
        "train_accuracy": accuracy(model, bank, y, split.train),
        "val_accuracy": accuracy(model, bank, y, split.val),
        "test_accuracy": accuracy(model, bank, y, split.test),
        "best_epoch": hist.best_epoch,
        "epochs": hist.epochs,
        "sizes": {"train": int(split.train.size), "val": int(split.val.size),
                  "test": int(split.test.size)},
    }
    rep.per_seed = [{"epoch": i + 1, "train_loss": l, "val_accuracy": v}
                    for i, (l, v) in enumerate(zip(hist.train_loss, hist.val_acc))]
    rep.emit(args.report)
    return EXIT_OK


def _cfg_value(cfg: dict, key: str, default=None, required: bool = False):
    if key not in cfg:
        if required:
            raise DataError(f"experiment config is missing {key!r}")
        return default
    return cfg[key]


def _experiment_graph(cfg: dict):
    from .synth import gen_class_features, gen_pa_labeled, target_homophily_compat
    gcfg = _cfg_value(cfg, "graph", required=True)
    if "edges" in gcfg:
        g = load_edge_list(gcfg["edges"], directed=gcfg.get("directed", True))
        y = read_labels(_cfg_value(gcfg, "labels", required=True), n=g.n)
        X = read_matrix(_cfg_value(gcfg, "features", required=True))
        return g, X, y
    C = gcfg.get("classes", 5)
    H = target_homophily_compat(C, gcfg.get("h", 0.9))
    g, y = gen_pa_labeled(gcfg.get("n", 2000), C, gcfg.get("m", 2), H,
                          seed=_cfg_value(gcfg, "seed", required=True))
    fcfg = _cfg_value(cfg, "features", {})
    X = gen_class_features(y, fcfg.get("d", 16), fcfg.get("sep", 3.0), fcfg.get("noise", 1.0),
                           seed=_cfg_value(fcfg, "seed", required=True))
    return g, X, y


def cmd_experiment(args) -> int:
    from .experiments import run_dir_experiment, run_fp_experiment
    from .learn import TrainConfig
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{args.config}: invalid JSON ({e})")
    if not isinstance(cfg, dict):
        raise DataError(f"{args.config}: expected a JSON object")
    rep = _report("experiment", args)
    rep.parameters.update({"kind": args.kind, "config": cfg})
    tcfg = TrainConfig.from_dict(cfg.get("train", {}))
    if args.kind == "fp":
        g, X, y = _experiment_graph(cfg)
        res = run_fp_experiment(
            g, X, y,
            missing_rates=cfg.get("missing_rates", [0.0, 0.5, 0.9, 0.99]),
            methods=cfg.get("methods", ["fp", "zero", "random", "global_mean", "neighbor_mean"]),
            specs=cfg.get("specs", ["sym_selfloop^1", "sym_selfloop^2"]),
            cfg=tcfg, trials=cfg.get("trials", 5), seed=_cfg_value(cfg, "seed", required=True),
            fp_iters=cfg.get("fp_iters", 40))
        rep.time("experiment_seconds", res.pop("seconds"))
        rep.metrics = res
    else:
        seeds = _cfg_value(cfg, "seeds", required=True)
        runs = [run_dir_experiment(cfg.get("n", 5000), cfg.get("p", 0.001), seed=s, cfg=tcfg)
                for s in seeds]
        total = 0.0
        for r in runs:
            total += r.pop("seconds")
        rep.per_seed = runs
        names = list(runs[0]["accuracy"]) if runs else []
        rep.metrics = {
            "architecture": runs[0]["architecture"] if runs else None,
            "mean_accuracy": {k: float(np.mean([r["accuracy"][k] for r in runs])) for k in names},
            "flags": sorted({f for r in runs for f in r["flags"]}),
        }
        rep.time("experiment_seconds", total)
    rep.emit(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _graph_flags(p, directed=True):
    p.add_argument("--graph", required=True, help="edge list (src<TAB>dst per line)")
    p.add_argument("--nodes", type=int, default=None, help="fix the node count")
    p.add_argument("--directed", action=argparse.BooleanOptionalAction, default=directed,
                   help=f"treat the edge list as directed (default: {directed})")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for sparse products (default: all cores; 1 = reference path)")
    parser = _Parser(prog="gdw", description=__doc__.strip().splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"gdw {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("precompute", parents=[common], help="precompute a SIGN feature bank")
    _graph_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--spec", required=True,
                   help='comma-separated operator specs, e.g. "sym_selfloop^1,ppr(0.05,64,1e-4)^1"')
    p.add_argument("--out", required=True, help="output bank directory")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("impute", parents=[common], help="fill missing node features")
    _graph_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--mask", default=None, help="n x d CSV of 0/1, 1 = observed")
    p.add_argument("--missing-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--method", default="fp",
                   choices=["fp", "zero", "random", "global_mean", "neighbor_mean"])
    p.add_argument("--iters", type=int, default=40)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--norm", default="sym", choices=["sym", "sym_selfloop"])
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("homophily", parents=[common], help="homophily and effective homophily")
    _graph_flags(p, directed=False)
    p.add_argument("--labels", required=True)
    p.add_argument("--keep-diag", action="store_true",
                   help="keep diagonals of 2-hop products in the headline numbers")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_homophily)

    p = sub.add_parser("wl", parents=[common], help="color-refinement distinguishability")
    _graph_flags(p)
    p.add_argument("--graph2", required=True)
    p.add_argument("--mode", default="dwl", choices=["dwl", "uwl", "wl1", "out", "in",
                                                      "d_wl", "u_wl", "out_only", "in_only"])
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_wl)

    p = sub.add_parser("spectral", parents=[common], help="Laplacian eigenvectors and Fourier magnitudes")
    _graph_flags(p)
    p.add_argument("--features", default=None)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--self-loops", action="store_true")
    p.add_argument("--out", default=None, help="eigenvectors (or spectrum table with --features)")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("synth", parents=[common], help="synthetic graphs, features and masks")
    p.add_argument("kind", choices=["pa", "er", "dirtask", "features", "mask"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.01)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--h", type=float, default=0.5)
    p.add_argument("--compat", default=None, help="C x C compatibility matrix file")
    p.add_argument("--directed", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--labels", default=None)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--sep", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output directory (pa, er, dirtask) or file")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the SIGN readout on a bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True, help="integer split seed or split JSON file")
    p.add_argument("--seed", type=int, default=None, help="parameter initialization seed")
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--patience", type=int, default=200)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--max-epochs", type=int, default=2000)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--val-frac", type=float, default=0.15)
    p.add_argument("--out", default=None, help="model JSON")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", parents=[common], help="run an experiment from a JSON config")
    p.add_argument("kind", choices=["fp", "dir"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    set_num_threads(args.threads if args.threads is not None else (os.cpu_count() or 1))
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"gdw: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError, ValueError) as e:
        print(f"gdw: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
