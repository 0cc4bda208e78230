"""Command line front end.

Subcommands bind the library end to end: simulate writes a synthetic
panel as CSV, fit estimates the latent structure (single split or
aggregated) into a JSON model document, krige-space and forecast read
artifacts back and emit predictions, impute fills missing cells, cv
tunes the roughness weight, bench drives the experiment harness, and
deseason removes a periodic component from an observation table.

Exit codes: 0 on success, 2 for anything the user can fix (bad flags,
malformed files, contract violations), 3 for numerical failures inside
an estimate. Randomized subcommands print "seed=N" so runs can be
reproduced; LATENT_KRIG_THREADS caps worker threads in the modules.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .ensemble import aggregate_fit, ensemble_from_document, save_ensemble
from .errors import (EXIT_NUMERICAL, EXIT_VALIDATION, LatentKrigError,
                     ParseError, PeriodTooLarge)
from .factors import fit_factors, fit_from_document, save_fit
from .forecast import forecast as forecast_op
from .forecast import forecast_ensemble
from .kriging import KernelSpec, impute_missing, krige_space
from .simbench import (SimConfig, run_table, select_bandwidth, select_tau)
from .simbench import simulate as simulate_op
from .stdata import (SpatioTemporalFrame, load_frame, load_observation_table,
                     random_partition, save_frame)

_KERNELS = ("gaussian", "epanechnikov_2d")
_METRICS = ("euclidean", "great_circle")


def _fmt(value: float) -> str:
    return repr(float(value))


def _parse_point(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError(f"expected a coordinate pair 'x,y', got {text!r}")
    try:
        return np.array([float(parts[0]), float(parts[1])])
    except ValueError:
        raise ParseError(f"non-numeric coordinate in {text!r}") from None


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ParseError(f"expected comma-separated integers, got {text!r}") from None


def _parse_grid(text: str) -> np.ndarray:
    """Grid spec: 'lo:hi:count' for a linear grid, else comma values."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParseError(f"grid spec must be lo:hi:count, got {text!r}")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError(f"bad grid spec {text!r}") from None
        if count < 1 or hi < lo:
            raise ParseError(f"bad grid spec {text!r}")
        return np.linspace(lo, hi, count)
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ParseError(f"bad grid values {text!r}") from None
    if not values:
        raise ParseError("empty grid")
    return np.asarray(values)


def _load_dir(args) -> SpatioTemporalFrame:
    d = Path(args.data)
    return load_frame(d / "locations.csv", d / "observations.csv",
                      distance_metric=args.metric)


def _resolve_cli_tau(frame: SpatioTemporalFrame, args) -> float:
    if args.tau_grid is not None:
        return select_tau(frame, grid=_parse_grid(args.tau_grid),
                          folds=args.folds, rng_seed=args.seed, k0=args.k0,
                          family=args.kernel)
    return args.tau if args.tau is not None else 0.0


def _write_value_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---- subcommands ----

def cmd_simulate(args) -> int:
    cfg = SimConfig(n=args.n, p=args.p, seed=args.seed,
                    n_future=args.n_future, holdout_sites=args.holdout_sites)
    draw = simulate_op(cfg)
    print(f"seed={args.seed}")
    out = Path(args.out)
    paths = save_frame(draw.frame, out)
    written = [paths["locations"], paths["observations"]]
    ids = draw.frame.locations.ids

    xi_path = out / "truth_xi.csv"
    _write_value_rows(xi_path, ["t", "id", "value"],
                      ((t + 1, ids[i], _fmt(draw.xi[t, i]))
                       for t in range(cfg.n) for i in range(cfg.p)))
    written.append(xi_path)

    if draw.future_y is not None:
        fpath = out / "future_y.csv"
        _write_value_rows(fpath, ["t", "id", "value"],
                          ((cfg.n + t + 1, ids[i], _fmt(draw.future_y[t, i]))
                           for t in range(cfg.n_future) for i in range(cfg.p)))
        written.append(fpath)
    if draw.holdout_locations is not None:
        hl = out / "holdout_locations.csv"
        hids = draw.holdout_locations.ids
        _write_value_rows(hl, ["id", "x1", "x2"],
                          ((hids[i], _fmt(c[0]), _fmt(c[1]))
                           for i, c in enumerate(draw.holdout_locations.coords)))
        hy = out / "holdout_y.csv"
        _write_value_rows(hy, ["t", "id", "value"],
                          ((t + 1, hids[i], _fmt(draw.holdout_y[t, i]))
                           for t in range(cfg.n)
                           for i in range(len(hids))))
        written.extend([hl, hy])
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_fit(args) -> int:
    frame = _load_dir(args)
    print(f"seed={args.seed}")
    tau = _resolve_cli_tau(frame, args)
    if args.ensemble is not None:
        ens = aggregate_fit(frame, J=args.ensemble, tau_policy=tau,
                            k0=args.k0, p_star=args.p_star,
                            rng_seed=args.seed, d_override=args.d)
        save_ensemble(ens, args.out, frame.locations)
        print(f"tau={_fmt(tau)}")
        print(f"J={ens.J}")
        print(f"d_hat_mean={_fmt(float(np.mean(ens.d_hats)))}")
    else:
        part = random_partition(frame.p, args.seed)
        fit = fit_factors(frame, part, tau, k0=args.k0, p_star=args.p_star,
                          d_override=args.d)
        save_fit(fit, args.out, frame.locations)
        print(f"tau={_fmt(tau)}")
        print(f"d_hat={fit.d_hat}")
    print(f"wrote {args.out}")
    return 0


def cmd_krige_space(args) -> int:
    doc = json.loads(Path(args.model).read_text(encoding="utf-8"))
    fmt = doc.get("format")
    if fmt == "latentkrig-fit":
        fit, locs = fit_from_document(doc)
        latent = fit.xi_hat
    elif fmt == "latentkrig-ensemble":
        ens, locs = ensemble_from_document(doc)
        latent = ens.xi_tilde
    else:
        raise ParseError(f"{args.model}: not a model document")
    if locs is None:
        raise ParseError(f"{args.model}: model has no embedded locations")
    if latent.shape[0] == 0:
        raise ParseError(f"{args.model}: model has no latent field")
    if args.h == "auto":
        h = select_bandwidth(latent, locs, family=args.kernel)
    else:
        try:
            h = float(args.h)
        except ValueError:
            raise ParseError(f"--h must be a number or 'auto', got {args.h!r}") from None
    kernel = KernelSpec(family=args.kernel, h=h)
    sites = [_parse_point(text) for text in args.at]
    preds = [krige_space(latent, locs, s0, kernel) for s0 in sites]

    if args.format == "json":
        payload = json.dumps({
            "h": h,
            "kernel": args.kernel,
            "sites": [{"x1": float(s0[0]), "x2": float(s0[1]),
                       "values": [float(v) for v in pred.xi_hat_series]}
                      for s0, pred in zip(sites, preds)],
        }, indent=2) + "\n"
        if args.out:
            Path(args.out).write_text(payload, encoding="utf-8")
        else:
            sys.stdout.write(payload)
    else:
        rows = [(t + 1, _fmt(s0[0]), _fmt(s0[1]), _fmt(pred.xi_hat_series[t]))
                for s0, pred in zip(sites, preds)
                for t in range(latent.shape[0])]
        if args.out:
            _write_value_rows(Path(args.out), ["t", "x1", "x2", "value"], rows)
        else:
            w = csv.writer(sys.stdout)
            w.writerow(["t", "x1", "x2", "value"])
            w.writerows(rows)
    if args.out:
        print(f"h={_fmt(h)}")
        print(f"wrote {args.out}")
    return 0


def cmd_forecast(args) -> int:
    frame = _load_dir(args)
    print(f"seed={args.seed}")
    horizons = _parse_ints(args.j)
    if not horizons:
        raise ParseError("--j must list at least one horizon")
    tau = _resolve_cli_tau(frame, args)
    preds: dict[int, np.ndarray] = {}
    if args.J is not None and args.J > 1:
        for j in horizons:
            preds[j] = forecast_ensemble(frame, args.J, j, args.j0, tau=tau,
                                         k0=args.k0, p_star=args.p_star,
                                         d_override=args.d,
                                         rng_seed=args.seed, ridge=args.ridge)
    else:
        part = random_partition(frame.p, args.seed)
        fit = fit_factors(frame, part, tau, k0=args.k0, p_star=args.p_star,
                          d_override=args.d)
        for j in horizons:
            preds[j] = forecast_op(frame, fit, j, args.j0, ridge=args.ridge)
    ids = frame.locations.ids
    rows = [(j, ids[i], _fmt(preds[j][i]))
            for j in horizons for i in range(frame.p)]
    _write_value_rows(Path(args.out), ["horizon", "id", "value"], rows)
    print(f"tau={_fmt(tau)}")
    print(f"wrote {args.out}")
    return 0


def cmd_impute(args) -> int:
    frame = _load_dir(args)
    filled = impute_missing(frame)
    paths = save_frame(filled, Path(args.out))
    print(f"filled={len(filled.filled_cells or ())}")
    for path in paths.values():
        print(f"wrote {path}")
    return 0


def cmd_cv(args) -> int:
    frame = _load_dir(args)
    print(f"seed={args.seed}")
    grid = _parse_grid(args.tau_grid) if args.tau_grid is not None else None
    tau = select_tau(frame, grid=grid, folds=args.folds, rng_seed=args.seed,
                     k0=args.k0, family=args.kernel)
    print(f"tau={_fmt(tau)}")
    if args.out:
        Path(args.out).write_text(
            json.dumps({"tau": tau, "seed": args.seed, "folds": args.folds})
            + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_bench(args) -> int:
    settings = None
    if args.n is not None or args.p is not None:
        if args.n is None or args.p is None:
            raise ParseError("--n and --p must be given together")
        settings = [(n, p) for n in _parse_ints(args.n)
                    for p in _parse_ints(args.p)]
    print(f"seed={args.seed}")
    grid = _parse_grid(args.tau_grid) if args.tau_grid is not None else None
    reports, summary = run_table(args.table, args.replicates, args.seed,
                                 scale_factor=args.scale_factor,
                                 settings=settings, out_dir=args.out,
                                 j0=args.j0, tau_grid=grid)
    for block in summary["settings"]:
        bits = [f"n={block['n']}", f"p={block['p']}"]
        if block["variant"]:
            bits.append(block["variant"])
        for name, stat in block["metrics"].items():
            if isinstance(stat, dict):
                bits.append(f"{name}={stat['mean']:.4f}")
        print(" ".join(bits))
    print(f"wrote {Path(args.out) / (args.table + '.csv')}")
    print(f"wrote {Path(args.out) / (args.table + '_summary.json')}")
    return 0


def cmd_deseason(args) -> int:
    period = args.period
    if period < 2:
        raise ParseError("--period must be >= 2")
    stamps, ids, obs = load_observation_table(args.observations)
    n = len(stamps)
    if n < 2 * period:
        raise PeriodTooLarge(
            f"period {period} needs >= {2 * period} time points, found {n}")
    out = obs.copy()
    for r in range(period):
        rows = np.arange(r, n, period)
        block = obs[rows]
        seen = ~np.isnan(block)
        counts = seen.sum(axis=0)
        means = np.zeros(block.shape[1])
        good = counts > 0
        means[good] = np.nansum(np.where(seen, block, 0.0), axis=0)[good] / counts[good]
        out[rows] = block - means
    rows_out = [(stamps[t], ids[i], _fmt(out[t, i]))
                for t in range(n) for i in range(len(ids))
                if not np.isnan(out[t, i])]
    _write_value_rows(Path(args.out), ["t", "id", "value"], rows_out)
    print(f"wrote {args.out}")
    return 0


# ---- parser ----

def _add_metric(p) -> None:
    p.add_argument("--metric", choices=_METRICS, default="euclidean",
                   help="distance metric for the location coordinates")


def _add_kernel(p) -> None:
    p.add_argument("--kernel", choices=_KERNELS, default="gaussian")


def _add_tau_flags(p) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--tau", type=float, default=None,
                       help="fixed roughness weight (default 0)")
    group.add_argument("--tau-grid", default=None,
                       help="cross-validate tau over 'lo:hi:count' or a comma list")
    p.add_argument("--folds", type=int, default=5,
                   help="folds for --tau-grid cross-validation")


def _add_estimator_flags(p) -> None:
    p.add_argument("--k0", type=int, default=0,
                   help="extra lags folded into the eigenanalysis")
    p.add_argument("--p-star", type=int, default=None,
                   help="scan width for the factor-count ratio estimator")
    p.add_argument("--d", type=int, default=None,
                   help="fix the factor count instead of estimating it")


def _add_seed(p) -> None:
    p.add_argument("--seed", type=int, required=True,
                   help="seed for every random choice in this command")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentkrig",
        description="Latent-factor kriging for spatio-temporal panels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic benchmark panel")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    _add_seed(p)
    p.add_argument("--n-future", type=int, default=0)
    p.add_argument("--holdout-sites", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate the latent factor structure")
    p.add_argument("data", help="directory with locations.csv and observations.csv")
    _add_metric(p)
    _add_tau_flags(p)
    _add_estimator_flags(p)
    _add_kernel(p)
    _add_seed(p)
    p.add_argument("--ensemble", type=int, default=None, metavar="J",
                   help="aggregate over J random partitions instead of one")
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("krige-space", help="predict at unobserved sites")
    p.add_argument("model", help="model JSON from fit")
    p.add_argument("--at", action="append", required=True, metavar="X,Y",
                   help="prediction site; repeatable")
    p.add_argument("--h", default="auto",
                   help="kernel bandwidth, or 'auto' for leave-one-out choice")
    _add_kernel(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_krige_space)

    p = sub.add_parser("forecast", help="predict future time points")
    p.add_argument("data")
    _add_metric(p)
    p.add_argument("--j", required=True, help="comma list of horizons >= 1")
    p.add_argument("--j0", type=int, default=6,
                   help="number of trailing readouts used by the predictor")
    _add_tau_flags(p)
    _add_estimator_flags(p)
    _add_kernel(p)
    p.add_argument("--J", type=int, default=None,
                   help="aggregate forecasts over J random partitions")
    p.add_argument("--ridge", type=float, default=0.0,
                   help="opt-in ridge added to the lag-0 factor covariance")
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("impute", help="fill missing cells by kriging")
    p.add_argument("data")
    _add_metric(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("cv", help="cross-validate the roughness weight tau")
    p.add_argument("data")
    _add_metric(p)
    p.add_argument("--tau-grid", default=None,
                   help="grid spec (default 0:10:101)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--k0", type=int, default=0)
    _add_kernel(p)
    _add_seed(p)
    p.add_argument("--out", default=None, help="optional JSON result path")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    p.add_argument("--table", required=True,
                   choices=("mse_table1", "kriging_table2", "fig1_distance",
                            "fig2_mse"))
    p.add_argument("--replicates", type=int, required=True)
    _add_seed(p)
    p.add_argument("--n", default=None, help="comma list of panel lengths")
    p.add_argument("--p", default=None, help="comma list of location counts")
    p.add_argument("--scale-factor", type=float, default=1.0,
                   help="scales the aggregation size J (nominally 100)")
    p.add_argument("--j0", type=int, default=6)
    p.add_argument("--tau-grid", default=None)
    p.add_argument("--out", required=True, help="artifact directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("deseason",
                       help="subtract per-location periodic means")
    p.add_argument("observations", help="observation CSV (t,id,value)")
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_deseason)

    return parser


def _merge_coordinate_flags(argv: list[str]) -> list[str]:
    """Join '--at' with a following negative coordinate pair.

    argparse reads '-0.5,0.5' as an option name; '--at=-0.5,0.5' always
    works, and this keeps the two-token spelling usable too.
    """
    out: list[str] = []
    skip = False
    for k, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if (tok == "--at" and k + 1 < len(argv)
                and argv[k + 1].startswith("-") and "," in argv[k + 1]):
            out.append(f"--at={argv[k + 1]}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(_merge_coordinate_flags(list(argv)))
    try:
        return args.func(args)
    except LatentKrigError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
