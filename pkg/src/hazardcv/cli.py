"""Command-line interface: ``hazardcv {fit,select,simulate,forecast,constants}``.

Exit status is 0 on success, 2 for unreadable or invalid input and
configuration, and 3 for numerical failures (undefined scores, degenerate
pilots, unbounded bandwidths).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import data, estimators, forecasting, kernels, selection, simulation

EXIT_INPUT = 2
EXIT_NUMERIC = 3

KERNEL_CHOICES = ("epanechnikov", "quartic", "sextic")


class CommandError(ValueError):
    pass


# ------------------------------------------------------------------ helpers
def _writer(path: Path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid(args, sample=None) -> selection.BandwidthGrid:
    if args.bandwidth_grid:
        return selection.BandwidthGrid.parse(args.bandwidth_grid)
    if sample is None:
        raise CommandError("--bandwidth-grid is required")
    width = sample.t_end - sample.t0
    return selection.BandwidthGrid.linspace(2.0 * sample.delta, width / 2.0, 100)


def _weights(args, sample) -> data.WeightScheme:
    spec = args.weights or "unit"
    if spec == "unit":
        return data.WeightScheme.unit_product()
    if spec.startswith("custom:"):
        path = spec[len("custom:"):]
        values = []
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or (lineno == 1 and row[0].strip().lower() == "weight"):
                    continue
                try:
                    values.append(float(row[-1]))
                except ValueError:
                    raise data.ParseError(f"bad weight {row[-1]!r}", lineno) from None
        if len(values) != sample.R:
            raise data.ValidationError(f"{path}: {len(values)} weights for {sample.R} grid cells")
        return data.WeightScheme.from_values(values)
    raise CommandError(f"--weights must be 'unit' or 'custom:<path>', got {spec!r}")


def _load_sample(args) -> data.GridSample:
    if not args.input:
        raise CommandError("--input is required")
    return data.load_grid_csv(args.input)


def _write_selection(res: selection.SelectionResult, out: Path) -> None:
    fh, w = _writer(out / "selection.csv")
    with fh:
        w.writerow(["method", "estimator", "bandwidth", "raw_bandwidth", "rho",
                    "minimum_at_grid_edge", "multiple_local_minima", "side_score_degenerate"])
        d = res.diagnostics
        w.writerow([res.method.value, res.estimator_kind, repr(res.bandwidth), repr(res.raw_bandwidth), repr(res.rho),
                    int(d.minimum_at_grid_edge), int(d.multiple_local_minima), int(d.side_score_degenerate)])
    if res.method is selection.SelectionMethod.DO:
        for side in res.side_results:
            tag = "left" if side.method is selection.SelectionMethod.OSCV_L else "right"
            side.trace_to_csv(out / f"score_trace_{tag}.csv")
    res.trace_to_csv(out / "score_trace.csv")


# ----------------------------------------------------------------- commands
def cmd_fit(args) -> int:
    sample = _load_sample(args)
    kernel = kernels.get_kernel(args.kernel)
    out = _out_dir(args)
    est = args.estimator.upper()
    if args.bandwidth is not None:
        b = args.bandwidth
    else:
        res = selection.select(args.method, sample, _grid(args, sample), est, kernel, _weights(args, sample), args.side_mode)
        _write_selection(res, out)
        b = res.bandwidth
    kind = ("BO_" + est) if args.best_one_sided else est
    fit = estimators.estimate(sample, b, kernel, kind, args.side_mode)
    fit.to_csv(out / "hazard.csv")
    return 0


def cmd_select(args) -> int:
    sample = _load_sample(args)
    kernel = kernels.get_kernel(args.kernel)
    res = selection.select(args.method, sample, _grid(args, sample), args.estimator.upper(), kernel,
                           _weights(args, sample), args.side_mode)
    _write_selection(res, _out_dir(args))
    print(f"{res.method.value} {res.estimator_kind} bandwidth {res.bandwidth!r}")
    return 0


def cmd_simulate(args) -> int:
    overrides = {
        "model": args.model,
        "n": args.n,
        "R": args.R,
        "truncation": args.truncation,
        "seed": args.seed,
        "replications": args.replications,
        "estimator": args.estimator,
        "kernel": args.kernel,
        "methods": args.methods,
        "grid": args.bandwidth_grid,
        "mode": args.side_mode,
        "workers": args.threads,
    }
    study = simulation.load_study_config(args.config, overrides)
    result = simulation.run_study(study)
    out = _out_dir(args)
    result.to_csv(out / "results.csv")
    result.bandwidths_to_csv(out / "bandwidths.csv")
    return 0


def cmd_forecast(args) -> int:
    if not args.input:
        raise CommandError("--input is required")
    triangle = forecasting.load_triangle_csv(args.input)
    kernel = kernels.get_kernel(args.kernel)
    bandwidths = None
    if args.bandwidths:
        parts = args.bandwidths.split(",")
        if len(parts) != 2:
            raise CommandError("--bandwidths expects b1,b2")
        bandwidths = (float(parts[0]), float(parts[1]))
    grid = selection.BandwidthGrid.parse(args.bandwidth_grid) if args.bandwidth_grid else None
    comps, selections = forecasting.fit_components(
        triangle, kernel, args.estimator.upper(), args.method, grid, bandwidths, args.side_mode
    )
    out = _out_dir(args)
    fc = forecasting.forecast(triangle, comps)
    fc.to_csv(out / "forecast.csv")
    fc.cells_to_csv(out / "forecast_cells.csv")
    forecasting.chain_ladder(triangle).to_csv(out / "chain_ladder.csv")
    fh, w = _writer(out / "components.csv")
    with fh:
        w.writerow(["reversed_time", "alpha1", "S1", "f1", "alpha2", "S2", "f2"])
        for k in range(triangle.m):
            w.writerow([k + 1] + [repr(float(v[k])) for v in (
                comps.alpha1_hat.values, comps.S1_hat, comps.f1_hat, comps.alpha2_hat.values, comps.S2_hat, comps.f2_hat)])
    if selections is not None:
        for i, res in enumerate(selections, start=1):
            res.trace_to_csv(out / f"score_trace_component{i}.csv")
    return 0


def cmd_constants(args) -> int:
    names = [args.kernel] if args.kernel else list(KERNEL_CHOICES)
    ks = [kernels.get_kernel(n) for n in names]
    table = kernels.psi_table(ks)
    out = _out_dir(args)
    fh, w = _writer(out / "constants.csv")
    with fh:
        w.writerow(["kernel", "estimator", "method", "psi"])
        for k in ks:
            for est in ("LL", "MBC"):
                for method in kernels.PSI_METHODS:
                    val = table[(method, est, k.name)]
                    w.writerow([k.name, est, method, repr(val)])
                    print(f"{k.name:13s} {est:4s} {method:5s} {val:.4f}")
    fh, w = _writer(out / "rho.csv")
    with fh:
        w.writerow(["kernel", "rho_ll", "rho_mbc"])
        for k in ks:
            w.writerow([k.name, repr(kernels.rho_ll(k)), repr(kernels.rho_mbc(k))])
    return 0


# ------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hazardcv", description="Kernel hazard estimation with best one-sided cross-validation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True, method=True):
        sp.add_argument("--input", help="input CSV")
        sp.add_argument("--estimator", choices=("ll", "mbc"), default="ll", type=str.lower, help="hazard estimator (default ll)")
        sp.add_argument("--kernel", choices=KERNEL_CHOICES, default="epanechnikov", help="kernel (default epanechnikov)")
        sp.add_argument("--side-mode", choices=("occurrence", "exposure"), default="exposure", help="side selection process (default exposure)")
        if method:
            sp.add_argument("--method", choices=("cv", "do", "bo"), default="bo", type=str.lower, help="bandwidth selector (default bo)")
        if grid:
            sp.add_argument("--bandwidth-grid", metavar="MIN:MAX:COUNT", help="candidate bandwidths (default 2*delta to half the window, 100 values)")
        sp.add_argument("--out", default=".", help="output directory (default current directory)")

    fit = sub.add_parser("fit", help="fit a hazard at a given or selected bandwidth; writes hazard.csv")
    common(fit)
    fit.add_argument("--bandwidth", type=float, help="fixed bandwidth; selects one with --method when omitted")
    fit.add_argument("--best-one-sided", action="store_true", help="fit the best one-sided estimator instead of the symmetric one")
    fit.add_argument("--weights", default="unit", help="unit or custom:<path> (default unit)")
    fit.set_defaults(func=cmd_fit)

    sel = sub.add_parser("select", help="select a bandwidth; writes selection.csv and score_trace.csv")
    common(sel)
    sel.add_argument("--weights", default="unit", help="unit or custom:<path> (default unit)")
    sel.set_defaults(func=cmd_select)

    sim = sub.add_parser("simulate", help="run a simulation study; writes results.csv and bandwidths.csv")
    sim.add_argument("--config", help="JSON study configuration (flags override it)")
    sim.add_argument("--model", help="default model name: " + ", ".join(sorted(simulation.DEFAULT_MODELS)))
    sim.add_argument("--n", type=int, help="individuals per sample")
    sim.add_argument("--R", type=int, help="grid size (default 500)")
    sim.add_argument("--truncation", choices=("none", "uniform"), help="entry mechanism (default none)")
    sim.add_argument("--replications", type=int, help="Monte Carlo replications (default 1)")
    sim.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    sim.add_argument("--estimator", choices=("ll", "mbc"), type=str.lower, help="hazard estimator (default ll)")
    sim.add_argument("--kernel", choices=KERNEL_CHOICES, help="kernel (default sextic)")
    sim.add_argument("--methods", help="comma list of CV,DO,BO,OSCV_L,OSCV_R (default CV,DO,BO)")
    sim.add_argument("--bandwidth-grid", metavar="MIN:MAX:COUNT", help="candidate bandwidths (default around the MISE-optimal one)")
    sim.add_argument("--side-mode", choices=("occurrence", "exposure"), help="side selection process (default exposure)")
    sim.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes (default: all cores)")
    sim.add_argument("--out", default=".", help="output directory (default current directory)")
    sim.set_defaults(func=cmd_simulate)

    fc = sub.add_parser("forecast", help="forecast a run-off triangle; writes forecast.csv, chain_ladder.csv and components.csv")
    common(fc)
    fc.add_argument("--bandwidths", metavar="B1,B2", help="fixed bandwidths for both components")
    fc.set_defaults(func=cmd_forecast)

    const = sub.add_parser("constants", help="write the psi factor table and rho values")
    const.add_argument("--kernel", choices=KERNEL_CHOICES, help="single kernel (default all three)")
    const.add_argument("--out", default=".", help="output directory (default current directory)")
    const.set_defaults(func=cmd_constants)
    return p


NUMERIC_ERRORS = (ArithmeticError,)
INPUT_ERRORS = (data.DataError, ValueError, OSError, KeyError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"hazardcv: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except INPUT_ERRORS as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"hazardcv: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
