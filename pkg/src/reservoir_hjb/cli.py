"""Command-line entry point: ``reservoir-hjb {estimate,solve,verify,simulate} CONFIG``.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, estimate_bins, load_config
from .errors import ConfigError, InputError, NumericalError, ReservoirError
from .exact import ExactParams, check_validity, exact_value, steady_residual_at
from .io import read_csv_table, write_csv, write_json, write_text
from .regime import (
    RegimeModel,
    classify_inflows,
    estimate_transition_probs,
    rates_from_probs,
    read_inflow_csv,
    stationary_distribution,
)
from .scheme import Grid
from .sim import estimate_objective, simulate_trajectory
from .solver import PolicyField, solve

log = logging.getLogger("reservoir_hjb")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

VALUE_HEADER = ("regime", "k", "v", "phi")
POLICY_HEADER = ("regime", "k", "v", "q_star")
CONVERGENCE_HEADER = ("step", "t", "residual")
TABLE_HEADER = ("K", "weno_l1", "weno_linf", "llxf_l1", "llxf_linf",
                "weno_l1_order", "weno_linf_order", "llxf_l1_order", "llxf_linf_order")


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _grid_rows(values: np.ndarray, grid: Grid):
    v = grid.normalized_vertices
    for i, row in enumerate(values):
        for k, x in enumerate(row):
            yield i, k, v[k], x


# --------------------------------------------------------------------------
# estimate
# --------------------------------------------------------------------------


def cmd_estimate(cfg: RunConfig, args) -> int:
    block = cfg.estimate
    if block.inflow_csv is None:
        raise ConfigError("estimate.inflow_csv is required")
    _, discharge = read_inflow_csv(block.inflow_csv, block.lag_hours)
    edges, reps = estimate_bins(block)
    # rates are filled in below; a zero matrix validates the bins first
    probe = RegimeModel(edges, reps, np.zeros((edges.size, edges.size)), block.lag_hours)
    seq = classify_inflows(discharge, probe)
    p = estimate_transition_probs(seq, edges.size)
    pi = stationary_distribution(p)
    model = RegimeModel(edges, reps, rates_from_probs(p, block.lag_hours), block.lag_hours,
                        stationary=pi)
    out = Path(args.output_dir)
    write_text(out / "regime_model.json", model.to_json())
    n = edges.size
    write_csv(out / "pij.csv", ("i", "j", "p"),
              ((i, j, p[i, j]) for i in range(n) for j in range(n)))
    write_csv(out / "stationary.csv", ("regime", "probability"), enumerate(pi))
    _say(args, f"estimated {n} regimes from {discharge.size} samples; "
               f"stationary mass of the top regimes: "
               + ", ".join(f"{i}:{pi[i]:.4f}" for i in np.argsort(pi)[::-1][:4]))
    return EXIT_OK


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig, args) -> int:
    model = cfg.regime_model()
    problem = cfg.problem(model)
    t0 = time.perf_counter()
    result = solve(cfg.solver, problem)
    grid = result.value.grid
    values = result.value.values
    if args.normalize:
        values = values * problem.costs.delta / problem.costs.y
    out = Path(args.output_dir)
    write_csv(out / "value.csv", VALUE_HEADER, _grid_rows(values, grid))
    write_csv(out / "policy.csv", POLICY_HEADER, _grid_rows(result.policy.q_star, grid))
    write_csv(out / "convergence.csv", CONVERGENCE_HEADER,
              ((int(s), t, r) for s, t, r in result.convergence_log(cfg.solver.log_stride)))
    write_text(out / "regime_model.json", model.to_json())
    _say(args, f"{result.status} after {result.steps_taken} steps "
               f"({time.perf_counter() - t0:.1f} s), final residual {result.final_residual:.3e}")
    return EXIT_OK


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


def _orders(errors: list[float]) -> list[float]:
    return [math.nan] + [math.log2(a / b) for a, b in zip(errors, errors[1:])]


def grid_errors(phi: np.ndarray, grid: Grid, params: ExactParams) -> tuple[float, float]:
    """Grid-weighted l¹ and maximum deviation from the closed-form value."""
    err = np.abs(phi - exact_value(grid.vertices, params))
    return float(grid.dv * err.sum()), float(err.max())


def residual_profile(params: ExactParams, samples: int, seed: int = 0) -> np.ndarray:
    """``(v, residual)`` at ``samples`` random points inside each smooth branch."""
    rng = np.random.default_rng(seed)
    pieces = [(0.0, params.a), (params.a, params.b), (params.b, params.capacity)]
    v = np.concatenate([rng.uniform(lo, hi, samples) for lo, hi in pieces])
    v = np.sort(v[(v != params.a) & (v != params.b)])
    return np.column_stack([v, [steady_residual_at(x, params) for x in v]])


def cmd_verify(cfg: RunConfig, args) -> int:
    problem = cfg.problem()
    params = ExactParams.from_problem(problem)
    out = Path(args.output_dir)
    validity = check_validity(params)
    write_json(out / "validity.json", vars(validity))
    if not validity.valid:
        log.warning("parameter condition fails (left margin %.3g, right margin %.3g); "
                    "relying on the residual check", validity.left_margin, validity.right_margin)
    profile = residual_profile(params, cfg.verify.residual_samples,
                               0 if args.seed is None else args.seed)
    write_csv(out / "residual_profile.csv", ("v", "residual"), profile)
    worst = float(np.max(np.abs(profile[:, 1])))
    _say(args, f"closed-form residual: max {worst:.3e} over {len(profile)} points")
    if worst > 1e-10:
        raise NumericalError(f"closed-form value violates the steady equation ({worst:.3e})")
    errs = {"weno": ([], []), "llxf": ([], [])}
    for K in cfg.verify.K_values:
        for name, weno in (("weno", True), ("llxf", False)):
            sc = dataclasses.replace(cfg.solver, K=K, weno=weno)
            t0 = time.perf_counter()
            res = solve(sc, problem)
            l1, linf = grid_errors(res.value.values[0], res.value.grid, params)
            errs[name][0].append(l1)
            errs[name][1].append(linf)
            _say(args, f"K={K:4d} {name:5s} l1={l1:.5f} linf={linf:.5f} "
                       f"({time.perf_counter() - t0:.1f} s)")
    cols = [errs["weno"][0], errs["weno"][1], errs["llxf"][0], errs["llxf"][1]]
    orders = [_orders(c) for c in cols]
    rows = [[K] + [c[n] for c in cols] + [o[n] for o in orders]
            for n, K in enumerate(cfg.verify.K_values)]
    write_csv(out / "table1.csv", TABLE_HEADER, rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def load_policy(path, grid: Grid, num_regimes: int) -> PolicyField:
    """Read a policy table and insist that it matches the configured grid."""
    data = read_csv_table(path, POLICY_HEADER)
    regimes = data[:, 0].astype(int)
    ks = data[:, 1].astype(int)
    if regimes.max() + 1 != num_regimes or ks.max() != grid.K or \
            len(data) != num_regimes * (grid.K + 1):
        raise InputError(
            f"{path}: policy covers {regimes.max() + 1} regimes x {ks.max() + 1} vertices, "
            f"configuration needs {num_regimes} x {grid.K + 1}"
        )
    q = np.full((num_regimes, grid.K + 1), np.nan)
    q[regimes, ks] = data[:, 3]
    if np.isnan(q).any():
        raise InputError(f"{path}: missing policy entries")
    if not np.allclose(data[:, 2], grid.normalized_vertices[ks], rtol=0, atol=1e-12):
        raise InputError(f"{path}: vertex coordinates do not match the grid")
    return PolicyField(grid, q)


def cmd_simulate(cfg: RunConfig, args) -> int:
    problem = cfg.problem()
    s = cfg.simulate
    policy_path = Path(args.policy) if args.policy else s.policy_csv
    if policy_path is None:
        raise ConfigError("no policy given (use --policy or simulate.policy_csv)")
    grid = Grid(cfg.solver.K, problem.costs.capacity)
    policy = load_policy(policy_path, grid, problem.num_regimes)
    seed = s.seed if args.seed is None else args.seed
    v0 = s.v0_fraction * problem.costs.capacity
    out = Path(args.output_dir)
    traj = simulate_trajectory(policy, problem, v0, s.i0, s.horizon_days, s.dt_sim_days,
                               seed=np.random.default_rng([seed, 0]))
    write_csv(out / "trajectory.csv", ("t", "regime", "v", "q", "cost_increment"),
              ((t, i, v / problem.costs.capacity, q, c) for t, i, v, q, c in traj.rows()))
    est = estimate_objective(policy, problem, v0, s.i0, s.horizon_days, s.n_paths,
                             s.dt_sim_days, seed=seed)
    write_csv(out / "ensemble.csv", ("n_paths", "mean", "stderr"),
              [(est.n_paths, est.mean, est.stderr)])
    _say(args, f"{est.n_paths} paths: mean discounted cost {est.mean:.6g} "
               f"+- {est.stderr:.2g} (tail bound {est.tail_bound:.2g})")
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reservoir-hjb", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override every RNG seed")
    common.add_argument("--output-dir", default=".", help="directory for the output files")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="fit the regime chain to an inflow record")
    p = sub.add_parser("solve", parents=[common], help="compute value and policy tables")
    p.add_argument("--normalize", action="store_true", help="divide the value by y/delta")
    sub.add_parser("verify", parents=[common], help="grid study against the closed form")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo evaluation of a policy")
    p.add_argument("--policy", default=None, help="policy CSV (overrides simulate.policy_csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return COMMANDS[args.command](cfg, args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ConfigError, ReservoirError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # keep the documented exit-code set closed
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
