"""Command line entry point: ``hcmcrit <subcommand> ...``.

Exit status is 1 when any declared tolerance check fails, 0 otherwise.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .critical import OutsideWindow, pin_pout_curve, solve_pi_critical
from .exploration import explore, write_components_csv, write_walk_csv
from .generator import generate, read_graph, write_graph
from .percolation import PercolationConfig, percolate_hcm, write_summary_csv


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(float(x)) for x in s.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser, dist=None, n=None, lam="0", replicas=None):
    p.add_argument("--dist", default=dist,
                   help=f"distribution file or builtin ({', '.join(ex.BUILTIN)})")
    p.add_argument("--n", default=n, help="community count(s), comma separated")
    p.add_argument("--lambda", dest="lam", default=lam, help="window parameter(s), comma separated")
    p.add_argument("--replicas", type=int, default=replicas)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="results")


def _finish(rep: ex.ExperimentReport, args) -> int:
    rep.write(args.out)
    for line in rep.lines():
        print(line)
    print(f"wrote {rep.name}.json/.csv to {args.out} ({rep.runtime:.1f} s)")
    return 0 if rep.ok else 1


def _graph_from_args(args):
    if getattr(args, "graph", None):
        return read_graph(args.graph)
    n = _ints(args.n)[0]
    dist = ex.resolve_distribution(args.dist, _floats(args.lam)[0], n)
    return generate(dist, n, args.seed, mode=args.mode)


def cmd_table(args, which):
    runner = ex.run_table_star if which == "star" else ex.run_table_line
    return _finish(runner(_ints(args.n), _floats(args.lam)), args)


def cmd_figure(args):
    dist = ex.resolve_distribution(args.dist or "star5")
    return _finish(ex.run_figure_pinout(_ints(args.n)[0], _floats(args.lam), args.grid, dist), args)


def cmd_scaling(args):
    lam = _floats(args.lam)[0]
    n_list = _ints(args.n)
    spec = args.dist
    rep = ex.run_scaling_experiment(lambda n: ex.resolve_distribution(spec, lam, n), n_list, lam,
                                    args.replicas, args.seed, args.jobs,
                                    ratio_tol=args.ratio_tol)
    code = _finish(rep, args)
    if args.limit_paths:
        lim = ex.run_limit_comparison(ex.resolve_distribution(spec, lam, n_list[-1]), n_list[-1],
                                      args.replicas, args.limit_paths, args.seed, args.jobs)
        code = max(code, _finish(lim, args))
    return code


def cmd_perc_equiv(args):
    n = _ints(args.n)[0]
    dist = ex.resolve_distribution(args.dist, _floats(args.lam)[0], n)
    return _finish(ex.run_percolation_equivalence(dist, args.pi, n, args.replicas, args.seed, args.jobs), args)


def cmd_l2(args):
    small = (lambda n: ex.resolve_distribution(args.dist, 0.0, n)) if args.dist else None
    return _finish(ex.run_l2_diagnostic(small, None, _ints(args.n), args.replicas, args.seed, args.jobs,
                                        args.K), args)


def cmd_generate(args):
    g = _graph_from_args(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graph(g, out)
    print(f"wrote graph with n={g.n}, N={g.N}, ell={g.ell} to {out}")
    return 0


def cmd_explore(args):
    g = _graph_from_args(args)
    t = explore(g, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_components_csv(t, out / "components.csv")
    if args.walk:
        write_walk_csv(t, out / "walk.csv")
    print(f"{len(t.tau)} components; largest v = {int(np.max(t.Z[t.tau] - t.Z[np.r_[0, t.tau[:-1]]]))}")
    return 0


def cmd_percolate(args):
    g = _graph_from_args(args)
    res = percolate_hcm(g, PercolationConfig(args.pi, args.perc_mode, args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_graph(res.graph, out / "percolated.hcm")
    t = explore(res.graph, args.seed)
    v = np.sort(t.Z[t.tau] - t.Z[np.r_[0, t.tau[:-1]]])[::-1]
    write_summary_csv([{"pi": args.pi, "mode": args.perc_mode, "n": g.n, "n_bar": res.n_bar,
                        "n_tilde": res.record.n_tilde if res.record else "",
                        "deleted_vertices": res.deleted_vertices, "top": v[:10].tolist()}],
                      out / "summary.csv")
    print(f"percolated graph: n={res.graph.n}, N={res.graph.N}; largest component {v[0]}")
    return 0


def cmd_critical_window(args):
    dist = ex.resolve_distribution(args.dist or "star5")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in _ints(args.n):
        for lam in _floats(args.lam):
            try:
                rows.append(solve_pi_critical(dist, n, lam).row())
            except OutsideWindow as err:
                print(f"n={n} lambda={lam}: {err}", file=sys.stderr)
                rows.append({"lambda": lam, "n": n, "pi_exact": "", "pi_approx": "", "c_star": "",
                             "nu_at_pi": "", "residual": ""})
    cols = ["lambda", "n", "pi_exact", "pi_approx", "c_star", "nu_at_pi", "residual"]
    if not args.approx:
        cols.remove("pi_approx")
    with open(out / "critical_window.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(json.dumps({k: r[k] for k in cols}))
    if args.curve:
        grid = np.linspace(1.0 / args.grid, 1.0, args.grid)
        with open(out / "pinout_curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "lambda", "pi_in", "pi_out", "intersection"])
            for n in _ints(args.n):
                for lam in _floats(args.lam):
                    c = pin_pout_curve(dist, n, lam, grid)
                    for a, b in zip(c.pi_in, c.pi_out):
                        w.writerow([n, lam, a, b, c.intersection])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hcmcrit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("table-star", "table-line"):
        p = sub.add_parser(name, help="window table")
        _common(p, n="100000,1000000", lam="-10,-1,0,1,10")
        p.set_defaults(fn=lambda a, w=name.split("-")[1]: cmd_table(a, w))

    p = sub.add_parser("figure-pinout", help="pi_in / pi_out curves")
    _common(p, n="100000", lam="-10,-1,0,1,10")
    p.add_argument("--grid", type=int, default=200)
    p.set_defaults(fn=cmd_figure)

    p = sub.add_parser("scaling", help="largest components across n")
    _common(p, dist="critical-cm", n="10000,30000,100000", replicas=200)
    p.add_argument("--ratio-tol", type=float, default=None,
                   help="check mean v1/vH1 against E[DS]/E[D] at this relative tolerance")
    p.add_argument("--limit-paths", type=int, default=0,
                   help="also compare the largest n against this many limit paths")
    p.set_defaults(fn=cmd_scaling)

    p = sub.add_parser("perc-equiv", help="percolation routes compared by KS")
    _common(p, dist="household3", n="10000", replicas=200)
    p.add_argument("--pi", type=float, default=0.7)
    p.set_defaults(fn=cmd_perc_equiv)

    p = sub.add_parser("l2-diag", help="tail of squared component sizes")
    _common(p, n="10000,30000,100000", replicas=50)
    p.add_argument("--K", type=int, default=10)
    p.set_defaults(fn=cmd_l2)

    for name, fn in (("generate", cmd_generate), ("explore", cmd_explore), ("percolate", cmd_percolate)):
        p = sub.add_parser(name)
        _common(p, dist="critical-cm", n="10000")
        p.add_argument("--mode", default="iid", choices=["iid", "exact"])
        if name != "generate":
            p.add_argument("--graph", help="read this graph file instead of generating one")
        p.set_defaults(fn=fn)
    sub.choices["generate"].set_defaults(out="graph.hcm")
    sub.choices["explore"].add_argument("--walk", action="store_true", help="also dump Q and Z")
    sub.choices["percolate"].add_argument("--pi", type=float, default=0.7)
    sub.choices["percolate"].add_argument("--perc-mode", default="algorithm2_S4",
                                          choices=["algorithm2_S4", "algorithm2_S4prime", "direct"])

    p = sub.add_parser("critical-window", help="solve for pi_n(lambda)")
    _common(p, n="100000", lam="0")
    p.add_argument("--curve", action="store_true")
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--approx", action="store_true", help="include the first-order approximation")
    p.set_defaults(fn=cmd_critical_window)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
