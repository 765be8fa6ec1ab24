"""Command line entry point.

Subcommands:

* ``couplab run CONFIG [CONFIG ...]`` — run scenario configs, write the
  CSV series and JSON verdict per scenario, print one PASS/FAIL line
  each; exit 0 iff every scenario passes.
* ``couplab distance CLOUD1 CLOUD2`` — transport distance between two
  weighted point clouds (CSV with header ``weight,x1..xd``), either by
  the exact LP or by the one-dimensional quantile formula.
* ``couplab residual stable`` — quadrature residual of the stable
  generator identity at one or more stability indices.
* ``couplab residual weight-pde`` — worst residual of the coupled
  second-order operator on random state pairs with unit coefficients.
* ``couplab report RESULTS_DIR`` — summarize a results directory into
  ``report.json`` plus one figure per scenario; exit 0 iff all pass.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import parse_config
from .costs import PowerCost, stable_identity_residual, weight_pde_residual
from .errors import CouplabError
from .measures import load_cloud
from .runner import run_and_write
from .transport import wasserstein_1d, wasserstein_lp

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="couplab",
        description="Coupling experiments for transport-distance decay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run scenario configs")
    p_run.add_argument("configs", nargs="+", metavar="CONFIG",
                       help="TOML scenario config file(s)")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: the config's "
                            "output.dir, else ./results)")
    p_run.add_argument("--workers", type=int, default=None,
                       help="worker processes per scenario "
                            "(default: COUPLAB_WORKERS or 1)")

    p_dist = sub.add_parser("distance",
                            help="transport distance between two clouds")
    p_dist.add_argument("cloud1", help="CSV cloud (weight,x1..xd)")
    p_dist.add_argument("cloud2", help="CSV cloud (weight,x1..xd)")
    p_dist.add_argument("--p", type=float, default=2.0,
                        help="cost exponent (default 2)")
    p_dist.add_argument("--method", choices=("lp", "quantile"),
                        default="lp",
                        help="exact LP (any dimension) or quantile "
                             "formula (one dimension)")

    p_res = sub.add_parser("residual", help="numerical identity checks")
    res_sub = p_res.add_subparsers(dest="identity", required=True)

    p_stable = res_sub.add_parser(
        "stable", help="stable generator identity residual")
    p_stable.add_argument("--alpha", type=float, action="append",
                          required=True,
                          help="stability index in (1, 2); repeatable")

    p_wpde = res_sub.add_parser(
        "weight-pde",
        help="coupled operator residual with unit coefficients")
    p_wpde.add_argument("--dim", type=int, default=1,
                        help="ambient dimension (default 1)")
    p_wpde.add_argument("--p", type=float, default=2.0,
                        help="cost exponent (default 2)")
    p_wpde.add_argument("--samples", type=int, default=100,
                        help="number of random pairs (default 100)")
    p_wpde.add_argument("--seed", type=int, default=0)

    p_rep = sub.add_parser("report", help="summarize a results directory")
    p_rep.add_argument("results_dir")
    p_rep.add_argument("--report-dir", default=None,
                       help="where to write report.json and figures "
                            "(default: the results directory)")

    return parser


def _cmd_run(args) -> int:
    failures = 0
    for path in args.configs:
        cfg = parse_config(path)
        out_dir = args.out or cfg.output_dir or "results"
        written = run_and_write(cfg, out_dir, workers=args.workers)
        verdict = written["result"].verdict
        status = "PASS" if verdict["pass"] else "FAIL"
        detail = ", ".join(f"{k}={'ok' if v else 'FAIL'}"
                           for k, v in verdict["checks"].items())
        print(f"[{status}] {cfg.scenario_id} ({detail or 'no checks'}) "
              f"-> {written['csv']}")
        failures += 0 if verdict["pass"] else 1
    return 1 if failures else 0


def _cmd_distance(args) -> int:
    mu = load_cloud(args.cloud1)
    nu = load_cloud(args.cloud2)
    if args.method == "quantile":
        value = float(wasserstein_1d(mu, nu, p=args.p))
        print(f"distance={value!r}")
    else:
        plan = wasserstein_lp(mu, nu, PowerCost(args.p))
        print(f"distance={float(plan.value)!r} "
              f"duality_gap={float(plan.duality_gap())!r}")
    return 0


def _cmd_residual(args) -> int:
    if args.identity == "stable":
        for alpha in args.alpha:
            res = float(stable_identity_residual(alpha))
            print(f"alpha={alpha} residual={res!r}")
        return 0

    d = args.dim
    rng = np.random.default_rng(args.seed)
    identity = np.eye(d)

    def unit_field(_x, _m=identity):
        return _m

    cost = PowerCost(args.p)
    worst = 0.0
    for _ in range(args.samples):
        x = rng.uniform(-3.0, 3.0, d)
        y = rng.uniform(-3.0, 3.0, d)
        if np.allclose(x, y):
            continue
        res = weight_pde_residual(unit_field, unit_field, cost, x, y)
        worst = max(worst, abs(res))
    print(f"dim={d} p={args.p} worst_residual={worst!r}")
    return 0


def _cmd_report(args) -> int:
    from .report import render_report

    out = render_report(args.results_dir, report_dir=args.report_dir)
    print(f"report: {out['report_json']} "
          f"({len(out['figures'])} figure(s), "
          f"all_pass={out['all_pass']})")
    return 0 if out["all_pass"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "distance": _cmd_distance,
                "residual": _cmd_residual, "report": _cmd_report}
    try:
        return handlers[args.command](args)
    except CouplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
