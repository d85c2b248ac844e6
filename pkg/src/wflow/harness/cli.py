"""Command line entry point ``wflow``.

Exit codes: 0 on success, 2 on invalid input (configuration, arguments,
files), 1 when a computation fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .. import analytic
from ..measures import RandomSource, write_points
from ..schemes import FlowError
from .checks import gradcheck_losses, selftest
from .config import ConfigError, load_config, preset_names
from .experiment import MetricRow, compare_to_analytic, read_trace_dir, run_experiment, write_metrics

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def _cmd_run(args) -> int:
    cfg = load_config(args.config, output=args.out, seed=args.seed, deterministic=args.deterministic)

    def progress(trace):
        if not args.quiet:
            diag = trace.diagnostics[-1]
            extra = "" if diag.scale is None else f" scale={diag.scale:.4g}"
            print(f"step {diag.step}: t={trace.times[-1]:.6g} F={diag.value:.6g}{extra}", file=sys.stderr)

    result = run_experiment(cfg, on_step=progress)
    print(f"wrote {len(result.files)} files to {cfg.output}")
    return EXIT_OK


def _cmd_analytic(args) -> int:
    if args.steps < 1 or not args.tau > 0:
        raise ConfigError(["--steps must be >= 1 and --tau > 0"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    horizon = args.steps * args.tau
    grid = np.linspace(0.0, horizon, 20 * args.steps + 1)
    limit = [analytic.limit_curve_scale(t, args.r) for t in grid]
    scheme = analytic.scheme_scale_curve(args.r, args.tau, grid)
    lines = ["t,limit_scale,scheme_scale"]
    lines += [f"{t:.17g},{a:.17g},{b:.17g}" for t, a, b in zip(grid, limit, scheme)]
    (out / "scale_curves.csv").write_text("\n".join(lines) + "\n")
    seq = analytic.jko_time_sequence(args.r, args.tau, args.steps)
    rows = ["n,t_n,n_tau"] + [f"{k},{t:.17g},{k * args.tau:.17g}" for k, t in enumerate(seq.values)]
    (out / "proximal_times.csv").write_text("\n".join(rows) + "\n")
    written = 2
    if args.samples:
        base = analytic.sample_eta_star(analytic.eta_star_params(args.d, args.r), args.samples, RandomSource(args.seed))
        for k in range(args.steps + 1):
            t = k * args.tau
            write_points(out / f"step_{k}.csv", analytic.limit_curve_scale(t, args.r) * base.points, t)
            written += 1
    print(f"wrote {written} files to {out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        snapshots = read_trace_dir(args.trace_dir)
    except (OSError, ValueError) as exc:
        raise ConfigError([str(exc)]) from exc
    rows = compare_to_analytic(snapshots, args.d, args.r, seed=args.seed)
    write_metrics(args.out, rows, ("t", "mmd_to_reference", "w2_radial_to_reference"))
    last: MetricRow = rows[-1]
    print(f"t={last.t:.6g}: mmd={last.mmd_to_reference:.6g} w2_radial={last.w2_radial_to_reference:.6g}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    errors = gradcheck_losses(seed=args.seed)
    worst = max(errors.values())
    for name, err in errors.items():
        print(f"{name:24s} relative error {err:.3e}")
    ok = worst <= args.tol
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_selftest(args) -> int:
    results = selftest()
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(p for _, p, _ in results) else EXIT_RUNTIME


def _cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wflow", description="Wasserstein flows of Riesz-kernel energies.")
    parser.add_argument("--seed", type=int, default=None, help="override the random seed")
    parser.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="request bit-reproducible reductions (always on; kept for configs that set it)",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a JSON config or a preset name")
    run.add_argument("config", help="path to a config file, or a preset name (see 'wflow presets')")
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=_cmd_run)

    ana = sub.add_parser("analytic", help="closed-form scale curves, proximal times and flow samples")
    ana.add_argument("--d", type=int, default=2)
    ana.add_argument("--r", type=float, default=1.0)
    ana.add_argument("--tau", type=float, default=0.05)
    ana.add_argument("--steps", type=int, default=12)
    ana.add_argument("--samples", type=int, default=0, help="also write this many samples per step time")
    ana.add_argument("--out", required=True, help="output directory")
    ana.set_defaults(func=_cmd_analytic)

    cmp_ = sub.add_parser("compare", help="score a run directory against the exact flow from a Dirac")
    cmp_.add_argument("--trace-dir", required=True)
    cmp_.add_argument("--d", type=int, required=True)
    cmp_.add_argument("--r", type=float, default=1.0)
    cmp_.add_argument("--out", required=True, help="metrics CSV to write")
    cmp_.set_defaults(func=_cmd_compare)

    grad = sub.add_parser("gradcheck", help="check training-loss gradients against central differences")
    grad.add_argument("--tol", type=float, default=1e-5)
    grad.set_defaults(func=_cmd_gradcheck)

    sub.add_parser("selftest", help="run quick oracle checks").set_defaults(func=_cmd_selftest)
    sub.add_parser("presets", help="list shipped presets").set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None and args.command in ("analytic", "compare", "gradcheck"):
        args.seed = 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"wflow: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FlowError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"wflow: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
