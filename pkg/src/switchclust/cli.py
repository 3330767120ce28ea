"""Command-line interface.

Subcommands: simulate, fit, eval, curves, silhouette. Exit codes:
0 success, 2 input-format error, 3 numerical failure, 4 fit did not
converge (results are still written).

The environment variable SWITCHCLUST_THREADS caps the number of worker
threads used for per-object work during fitting (default 1).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import panelio
from .errors import (
    DegenerateCluster,
    DegenerateCovariance,
    NumericalUnderflow,
    PanelFormatError,
    SingleClusterError,
)
from .learn import FitConfig, fit
from .metrics import corrected_rand, silhouette_scan, variation_of_information
from .model import RegressedTransition, eval_alpha, eval_beta_row
from .simulate import SimConfig, simulate

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_NUMERIC = 3
EXIT_NONCONVERGED = 4


def _fmt(v: float) -> str:
    return repr(float(v))


def _thread_count() -> int:
    raw = os.environ.get("SWITCHCLUST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_csv(path, header, rows):
    out = sys.stdout if path in (None, "-") else open(
        path, "w", newline="", encoding="utf-8")
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_simulate(args) -> int:
    cfg = SimConfig(n=args.n, T_max=args.tmax, K=args.K, p=args.p,
                    regressed=args.regressed, seed=args.seed)
    ds, truth = simulate(cfg)
    panelio.write_panel(ds, args.out_data)
    panelio.save_truth(truth, ds, args.out_truth)
    print(f"wrote {ds.n} objects ({ds.total_obs} rows) to {args.out_data}")
    return EXIT_OK


def cmd_fit(args) -> int:
    ds = panelio.load_panel(args.data)
    config = FitConfig(
        K=args.K,
        max_iters=args.max_iters,
        rel_tol=args.tol,
        kmeans_restarts=args.restarts,
        ridge=args.ridge,
        seed=args.seed,
        regressed=args.regressed,
        n_threads=_thread_count(),
    )
    report = fit(ds, config)
    if args.out_params:
        panelio.save_params(report.params, args.out_params, d=ds.d)
    if args.out_posteriors:
        header = (["object_id", "t"]
                  + [f"p_{k}" for k in range(1, config.K + 1)] + ["hard"])
        rows = []
        for obj, post, hard in zip(ds.objects, report.posteriors,
                                   report.hard_labels):
            for t in range(obj.T):
                rows.append([obj.id, str(t + 1)]
                            + [_fmt(v) for v in post.marginals[t]]
                            + [str(int(hard[t]))])
        _write_csv(args.out_posteriors, header, rows)
    if args.out_trace:
        _write_csv(args.out_trace, ["iteration", "loglik"],
                   [[str(i + 1), _fmt(v)]
                    for i, v in enumerate(report.loglik_trace)])
    status = "converged" if report.converged else "did not converge"
    print(f"loglik {report.loglik_trace[-1]:.6f} after {report.iterations} "
          f"iterations ({status}); {report.wall_seconds:.2f}s")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def cmd_eval(args) -> int:
    keys_a, labels_a = panelio.load_flat_labels(args.labels_a)
    keys_b, labels_b = panelio.load_flat_labels(args.labels_b)
    if set(keys_a) != set(keys_b):
        raise PanelFormatError(
            "label files cover different (object, t) pairs")
    by_key = dict(zip(keys_b, labels_b))
    aligned_b = np.array([by_key[k] for k in keys_a], dtype=int)
    vi = variation_of_information(labels_a, aligned_b)
    cri = corrected_rand(labels_a, aligned_b)
    print(f"VI {vi:.6f} CRI {cri:.6f}")
    return EXIT_OK


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, steps = spec.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise PanelFormatError(
            f"bad grid {spec!r}; expected lo:hi:steps") from None
    if steps < 1:
        raise PanelFormatError("grid needs at least one step")
    return np.linspace(lo, hi, steps)


def cmd_curves(args) -> int:
    params = panelio.load_params(args.params)
    K = params.K
    tm = params.transitions
    regressed = isinstance(tm, RegressedTransition)
    # fixed models produce flat curves; the grid column is still emitted
    d = tm.d if regressed else max(args.covariate_index, 1)
    if args.covariate_index < 1 or args.covariate_index > d:
        raise PanelFormatError(
            f"covariate index {args.covariate_index} out of range 1..{d}")
    fixed = np.zeros(d)
    if args.fixed_covariates:
        vals = [float(v) for v in args.fixed_covariates.split(",")]
        if len(vals) != d:
            raise PanelFormatError(
                f"--fixed-covariates needs {d} comma-separated values")
        fixed = np.array(vals)
    grid = _parse_grid(args.grid)
    if args.row == "init":
        def evaluate(w):
            return eval_alpha(tm, w)
    else:
        try:
            h = int(args.row)
        except ValueError:
            raise PanelFormatError(
                f"row must be 'init' or 1..{K}, got {args.row!r}") from None
        if h < 1 or h > K:
            raise PanelFormatError(f"row must be 'init' or 1..{K}")

        def evaluate(w):
            return eval_beta_row(tm, h - 1, w)

    rows = []
    for v in grid:
        w = fixed.copy()
        w[args.covariate_index - 1] = v
        probs = evaluate(w if regressed else None)
        rows.append([_fmt(v)] + [_fmt(x) for x in probs])
    _write_csv(args.out, ["w"] + [f"prob_{k}" for k in range(1, K + 1)], rows)
    return EXIT_OK


def cmd_silhouette(args) -> int:
    ds = panelio.load_panel(args.data)
    config = FitConfig(
        K=2,
        max_iters=args.max_iters,
        kmeans_restarts=args.restarts,
        seed=args.seed,
        regressed=args.regressed,
        n_threads=_thread_count(),
    )
    table = silhouette_scan(ds, range(args.kmin, args.kmax + 1), config)
    _write_csv(args.out, ["K", "avg_silhouette"],
               [[str(k), _fmt(v)] for k, v in table])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchclust",
        description="Model-based clustering of longitudinal panels with "
                    "time-varying cluster assignments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic panel")
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--tmax", type=int, default=10)
    p_sim.add_argument("--K", type=int, default=5)
    p_sim.add_argument("--p", type=int, default=5)
    p_sim.add_argument("--regressed", action="store_true")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out-data", required=True)
    p_sim.add_argument("--out-truth", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit the model to a panel CSV")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--K", type=int, required=True)
    p_fit.add_argument("--regressed", action="store_true")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--restarts", type=int, default=15)
    p_fit.add_argument("--tol", type=float, default=1e-8)
    p_fit.add_argument("--max-iters", type=int, default=500)
    p_fit.add_argument("--ridge", type=float, default=0.0)
    p_fit.add_argument("--out-params")
    p_fit.add_argument("--out-posteriors")
    p_fit.add_argument("--out-trace")
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("eval", help="compare two labelings")
    p_eval.add_argument("--labels-a", required=True)
    p_eval.add_argument("--labels-b", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_cur = sub.add_parser("curves",
                           help="probability curves along one covariate")
    p_cur.add_argument("--params", required=True)
    p_cur.add_argument("--row", required=True,
                       help="'init' or a 1-based cluster index")
    p_cur.add_argument("--covariate-index", type=int, default=1)
    p_cur.add_argument("--grid", required=True, help="lo:hi:steps")
    p_cur.add_argument("--fixed-covariates", default="")
    p_cur.add_argument("--out", default="-")
    p_cur.set_defaults(func=cmd_curves)

    p_sil = sub.add_parser("silhouette",
                           help="average silhouette across a K range")
    p_sil.add_argument("--data", required=True)
    p_sil.add_argument("--kmin", type=int, required=True)
    p_sil.add_argument("--kmax", type=int, required=True)
    p_sil.add_argument("--seed", type=int, default=0)
    p_sil.add_argument("--regressed", action="store_true")
    p_sil.add_argument("--restarts", type=int, default=15)
    p_sil.add_argument("--max-iters", type=int, default=500)
    p_sil.add_argument("--out", default="-")
    p_sil.set_defaults(func=cmd_silhouette)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PanelFormatError, SingleClusterError, ValueError,
            FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except (DegenerateCovariance, DegenerateCluster, NumericalUnderflow,
            np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
