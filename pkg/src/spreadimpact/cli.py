"""Command-line front end: solve, asymptotic, policy, simulate, sweep, compare.

Every command is deterministic given its full flag set. Exit codes: 0 on
success, 1 for usage or validation problems, 2 when the free-boundary
construction reports that the frictions are too large (no matching rate),
3 for numerical failures.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import asymptotic as asym
from . import montecarlo as mc
from .market import (
    AllocationRegime,
    MarketParams,
    ParameterError,
    buy_and_hold_esr,
    degenerate_regime,
    validate,
)
from .solver import NoMatchError, NumericalFailure, SolverOptions, policy, solve
from .whittaker import SpecialFunctionError

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_MATCH = 2
EXIT_NUMERICAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage problems; the contract here is 1.
    def error(self, message):
        raise _UsageError(message)


def _add_market_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", metavar="FILE",
                   help="JSON file with mu, sigma, gamma, epsilon, lambda")
    p.add_argument("--mu", type=float, help="expected excess return per year")
    p.add_argument("--sigma", type=float, help="volatility per sqrt-year")
    p.add_argument("--gamma", type=float, help="relative risk aversion")
    p.add_argument("--epsilon", type=float,
                   help="relative half-spread (decimal, e.g. 0.001)")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="price-impact coefficient (decimal)")


def _add_output_flags(p: argparse.ArgumentParser, default_format: str) -> None:
    p.add_argument("--out", metavar="FILE", default=None,
                   help="output path (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"), default=default_format)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="spreadimpact",
        description=("Optimal long-run portfolio rebalancing under a bid-ask "
                     "spread and linear price impact."),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve the free-boundary problem")
    _add_market_flags(p_solve)
    _add_output_flags(p_solve, "json")
    p_solve.add_argument("--grid-points", type=int, default=2001,
                         help="rows in the emitted grid")

    p_asym = sub.add_parser("asymptotic", help="small-cost expansion constants")
    _add_market_flags(p_asym)
    _add_output_flags(p_asym, "json")
    p_asym.add_argument("--k", type=float, default=None,
                        help="override the coupling K = lambda/epsilon^(4/3)")

    p_pol = sub.add_parser("policy", help="emit the optimal turnover on a grid")
    _add_market_flags(p_pol)
    _add_output_flags(p_pol, "csv")
    p_pol.add_argument("--grid-points", type=int, default=2001)

    p_sim = sub.add_parser("simulate",
                           help="Monte Carlo estimate of the equivalent safe rate")
    _add_market_flags(p_sim)
    _add_output_flags(p_sim, "json")
    p_sim.add_argument("--seed", type=int, default=20140221)
    p_sim.add_argument("--paths", type=int, default=100_000)
    p_sim.add_argument("--horizon", type=float, default=100.0)
    p_sim.add_argument("--burn-in", type=float, default=20.0)
    p_sim.add_argument("--dt", type=float, default=1e-3)
    p_sim.add_argument("--y0", type=float, default=None,
                       help="initial risky weight (default: Merton weight)")
    p_sim.add_argument("--policy", choices=("optimal", "hold"),
                       default="optimal",
                       help="'hold' simulates zero turnover (buy and hold)")
    p_sim.add_argument("--antithetic", action="store_true")
    p_sim.add_argument("--paths-csv", metavar="FILE", default=None,
                       help="also write a per-path summary CSV")

    p_sweep = sub.add_parser("sweep",
                             help="solve over a grid of epsilon and/or lambda")
    _add_market_flags(p_sweep)
    _add_output_flags(p_sweep, "csv")
    p_sweep.add_argument("--sweep-epsilon", metavar="LIST", default=None,
                         help="comma-separated epsilon values")
    p_sweep.add_argument("--sweep-lambda", metavar="LIST", default=None,
                         help="comma-separated lambda values")
    p_sweep.add_argument("--grid-points", type=int, default=201)

    p_cmp = sub.add_parser("compare",
                           help="exact versus asymptotic turnover on a window")
    _add_market_flags(p_cmp)
    _add_output_flags(p_cmp, "csv")
    p_cmp.add_argument("--k", type=float, default=None)
    p_cmp.add_argument("--points", type=int, default=201)
    p_cmp.add_argument("--window", type=float, default=None,
                       help="half-width of the comparison window around the "
                            "Merton weight (default: 3 epsilon^(1/3))")
    return parser


def _resolve_params(args) -> MarketParams:
    if args.params is not None:
        flags = [args.mu, args.sigma, args.gamma, args.epsilon, args.lam]
        if any(v is not None for v in flags):
            raise _UsageError("--params cannot be combined with inline flags")
        return MarketParams.from_file(args.params)
    missing = [name for name, v in (
        ("--mu", args.mu), ("--sigma", args.sigma), ("--gamma", args.gamma),
        ("--epsilon", args.epsilon), ("--lambda", args.lam),
    ) if v is None]
    if missing:
        raise _UsageError(f"missing required flags: {', '.join(missing)}")
    return validate(MarketParams(mu=args.mu, sigma=args.sigma,
                                 gamma=args.gamma, epsilon=args.epsilon,
                                 lam=args.lam))


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _json_dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def _degenerate_answer(params: MarketParams) -> dict:
    regime = degenerate_regime(params)
    return {"regime": ("FullSafe" if regime is AllocationRegime.FULL_SAFE
                       else "FullRisky"),
            "esr": buy_and_hold_esr(params)}


def _cmd_solve(args) -> int:
    params = _resolve_params(args)
    if degenerate_regime(params) is not AllocationRegime.INTERIOR:
        _emit(_json_dumps(_degenerate_answer(params)), args.out)
        return EXIT_OK
    solution = solve(params)
    if args.format == "json":
        _emit(_json_dumps(solution.to_json_dict(grid_points=args.grid_points)),
              args.out)
    else:
        buf = io.StringIO()
        solution.to_csv(buf, grid_points=args.grid_points)
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _cmd_asymptotic(args) -> int:
    params = _resolve_params(args)
    inputs = asym.AsymptoticInputs.from_params(params, K=args.k)
    sol = asym.find_z_minus(inputs)
    doc = sol.to_json_dict()
    slope_buy, slope_sell = asym.near_boundary_slope(sol)
    doc["near_boundary_slope"] = {"buy": slope_buy, "sell": slope_sell}
    _emit(_json_dumps(doc), args.out)
    return EXIT_OK


def _cmd_policy(args) -> int:
    params = _resolve_params(args)
    if degenerate_regime(params) is not AllocationRegime.INTERIOR:
        _emit(_json_dumps(_degenerate_answer(params)), args.out)
        return EXIT_OK
    solution = solve(params)
    ys = np.linspace(solution.y_grid[0], solution.y_grid[-1], args.grid_points)
    us = solution.turnover_at(ys)
    if args.format == "json":
        doc = {"y_minus": solution.y_minus, "y_plus": solution.y_plus,
               "beta": solution.beta,
               "policy": [[float(a), float(b)] for a, b in zip(ys, us)]}
        _emit(_json_dumps(doc), args.out)
    else:
        lines = ["y,u"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(ys, us)]
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    params = _resolve_params(args)
    cfg = mc.SimConfig(horizon_T=args.horizon, dt=args.dt, n_paths=args.paths,
                       seed=args.seed, y0=args.y0, burn_in_T=args.burn_in,
                       antithetic=args.antithetic)
    if args.policy == "hold":
        turnover = None
    else:
        if degenerate_regime(params) is not AllocationRegime.INTERIOR:
            raise ParameterError(
                "the optimal policy is buy-and-hold for degenerate "
                "parameters; use --policy hold"
            )
        turnover = policy(solve(params)).tabulated()
    ensemble = mc.simulate_paths(params, turnover, cfg)
    report = mc.estimate_esr(ensemble, params.gamma, cfg)
    if args.paths_csv:
        with open(args.paths_csv, "w", encoding="utf-8") as fh:
            mc.write_path_summary_csv(ensemble, fh)
    _emit(_json_dumps(report.to_json_dict()), args.out)
    return EXIT_OK


def _parse_list(text: str | None) -> list[float] | None:
    if text is None:
        return None
    values = [float(tok) for tok in text.split(",") if tok.strip()]
    if not values:
        raise _UsageError("empty sweep grid")
    return values


def _cmd_sweep(args) -> int:
    params = _resolve_params(args)
    eps_grid = _parse_list(args.sweep_epsilon)
    lam_grid = _parse_list(args.sweep_lambda)
    if eps_grid is None and lam_grid is None:
        raise _UsageError("sweep needs --sweep-epsilon and/or --sweep-lambda")
    eps_grid = eps_grid or [params.epsilon]
    lam_grid = lam_grid or [params.lam]
    points = [
        MarketParams(mu=params.mu, sigma=params.sigma, gamma=params.gamma,
                     epsilon=e, lam=l)
        for e in eps_grid for l in lam_grid
    ]
    for p in points:
        validate(p)

    workers = min(len(points), max(1, int(os.environ.get("REBAL_THREADS", "1"))))

    def run(p):
        return solve(p)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solutions = list(pool.map(run, points))
    else:
        solutions = [run(p) for p in points]

    lines = ["epsilon,lambda,y,q,u"]
    for p, sol in zip(points, solutions):
        ys = np.linspace(sol.y_grid[0], sol.y_grid[-1], args.grid_points)
        ys = np.unique(np.concatenate([ys, [sol.y_minus, sol.y_plus]]))
        qs = sol.q_at(ys)
        us = sol.turnover_at(ys)
        for a, b, c in zip(ys, qs, us):
            lines.append(f"{p.epsilon!r},{p.lam!r},{float(a)!r},{float(b)!r},{float(c)!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_compare(args) -> int:
    params = _resolve_params(args)
    solution = solve(params)
    inputs = asym.AsymptoticInputs.from_params(params, K=args.k)
    expansion = asym.find_z_minus(inputs)

    half = args.window
    if half is None:
        half = 3.0 * params.epsilon ** (1.0 / 3.0)
    y_star = params.merton_weight
    lo = max(solution.y_grid[0], y_star - half)
    hi = min(solution.y_grid[-1], y_star + half)
    ys = np.linspace(lo, hi, args.points)

    lines = [
        f"# beta_exact={solution.beta!r},beta_asym={expansion.beta_approx!r}",
        "y,u_exact,u_asym,abs_err,rel_err",
    ]
    for y in ys:
        ue = float(solution.turnover_at(y))
        ua = asym.asymptotic_policy(float(y), expansion)
        err = abs(ue - ua)
        rel = err / abs(ue) if ue != 0.0 else math.nan
        lines.append(f"{float(y)!r},{ue!r},{ua!r},{err!r},{rel!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


_DISPATCH = {
    "solve": _cmd_solve,
    "asymptotic": _cmd_asymptotic,
    "policy": _cmd_policy,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _DISPATCH[args.command](args)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ParameterError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except NoMatchError as exc:
        sys.stderr.write(f"no match: {exc}\n")
        return EXIT_NO_MATCH
    except (NumericalFailure, SpecialFunctionError, ArithmeticError,
            asym.NoRootError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
