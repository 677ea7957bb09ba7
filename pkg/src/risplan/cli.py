"""Command-line front end: deploy, sweep, validate, phase-opt."""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .channel import precompute_los, sample_channel_realization
from .deployment import optimize_azimuth, sample_user_locations
from .errors import ParseError, RisPlanError, ValidationError
from .geometry import RisPose, UserLocation
from .harness import _deploy, emit_csv, parse_config, run_experiment, scaled_config
from .phase import optimize_phases
from .rate import ClosedFormContext, covariance_entry, sigma_hat_inv_entry


def _load_spec(path):
    if path is None:
        return parse_config("")
    with open(path) as handle:
        return parse_config(handle.read())


def _cmd_deploy(args) -> int:
    spec = _load_spec(args.config)
    seed = args.seed if args.seed is not None else spec.seed
    rng = np.random.default_rng([seed, 0, 0])
    result = _deploy(args.method, spec.dist, spec.settings, spec.geom, spec.cfg, rng)
    pose = result.pose
    print(f"method={result.method} iterations={result.iterations}")
    print(f"d0={pose.d0:.6g} phi0={pose.phi0:.6g} h0={pose.h0:.6g} phiR={pose.phiR:.6g}")
    if args.out:
        lines = ["iteration,objective,served_count"]
        for it, obj in enumerate(result.objective_trace, start=1):
            served = result.served_count_trace[it - 1] if result.served_count_trace else 0
            lines.append(f"{it},{obj:.9g},{served}")
        with open(args.out, "w", newline="") as handle:
            handle.write("\n".join(lines) + "\n")
    return 0


def _cmd_sweep(args) -> int:
    from dataclasses import replace

    spec = _load_spec(args.config)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    rows = run_experiment(spec)
    if args.out:
        emit_csv(rows, args.out)
    else:
        emit_csv(rows, sys.stdout)
    return 0


def _check(name: str, passed: bool, detail: str, failures: list) -> None:
    print(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")
    if not passed:
        failures.append(name)


def _cmd_validate(args) -> int:
    failures = []
    rng = np.random.default_rng(args.seed if args.seed is not None else 7)
    cfg, geom = scaled_config()

    # Covariance oracle: closed-form diagonal against the empirical mean of
    # the effective channel's squared norm.
    users = [UserLocation(40.0, 0.0), UserLocation(60.0, 2.0), UserLocation(50.0, -2.0)]
    pose = RisPose(d0=10.0, phi0=0.0, h0=8.0, phiR=1.2)
    theta = np.ones(cfg.nr, dtype=complex)
    draws = args.trials if args.trials is not None else 20000
    los = precompute_los(cfg, geom, pose, users)
    acc = np.zeros(len(users))
    for _ in range(draws):
        real = sample_channel_realization(cfg, geom, pose, users, rng, los=los)
        rows = real.d[:, 0, :] + real.omega[:, None] * np.einsum(
            "tr,kr->kt", real.g[0], theta * real.h[:, 0, :])
        acc += np.sum(np.abs(rows) ** 2, axis=1)
    acc /= draws
    worst = 0.0
    for i in range(len(users)):
        ref = covariance_entry(i, i, 0, cfg, geom, pose, users, theta, los=los).real
        worst = max(worst, abs(acc[i] - ref) / ref)
    _check("covariance-diagonal", worst < 0.02, f"max rel err {worst:.4f} over {draws} draws", failures)

    # Rank-one inverse oracle: the scalar formula against dense inversion.
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 6))
        ctx = ClosedFormContext(
            kappa=rng.uniform(0.5, 2.0, k),
            tau=float(rng.uniform(0.0, 0.5)),
            xi=(rng.normal(size=(1, k)) + 1j * rng.normal(size=(1, k))),
            mu=np.zeros((1, k, 1), dtype=complex),
            sigma_hat=np.zeros((1, k, k), dtype=complex),
            pbar=1.0,
        )
        dense = np.linalg.inv(np.diag(ctx.kappa)
                              + ctx.tau * np.outer(ctx.xi[0], np.conj(ctx.xi[0])))
        for idx in range(k):
            worst = max(worst, abs(sigma_hat_inv_entry(idx, 0, ctx) - dense[idx, idx].real))
    _check("rank-one-inverse", worst < 1e-10, f"max abs err {worst:.2e}", failures)

    # Azimuth oracle: closed form against a dense grid argmin.
    grid = np.linspace(0.0, 2.0 * math.pi, 100_000, endpoint=False)
    step = grid[1] - grid[0]
    worst = 0.0
    for _ in range(200):
        t = int(rng.integers(1, 40))
        d = rng.uniform(1.0, geom.r, t)
        phi = rng.uniform(-math.pi, math.pi, t)
        pose_a = RisPose(d0=10.0, phi0=0.0, h0=5.0, phiR=0.0)
        best = optimize_azimuth(pose_a, d, phi, geom, covered_only=False)
        a1 = float(np.sum(-2.0 * pose_a.d0 * d * np.cos(phi)))
        a2 = float(np.sum(-2.0 * pose_a.d0 * d * np.sin(phi)))
        vals = a1 * np.cos(grid) + a2 * np.sin(grid)
        ref = grid[int(np.argmin(vals))]
        diff = abs(math.remainder(best - ref, 2.0 * math.pi))
        worst = max(worst, diff)
    _check("azimuth-closed-form", worst <= step + 1e-12, f"max angle gap {worst:.2e} rad", failures)

    return 1 if failures else 0


def _cmd_phase_opt(args) -> int:
    spec = _load_spec(args.config)
    seed = args.seed if args.seed is not None else spec.seed
    rng = np.random.default_rng([seed, 99])
    users = sample_user_locations(spec.dist, spec.cfg.k, rng)
    pose = RisPose(d0=spec.geom.r_min, phi0=users[0].phik, h0=spec.geom.h_max, phiR=1.0)
    real = sample_channel_realization(spec.cfg, spec.geom, pose, users, rng)
    result = optimize_phases(real, spec.cfg, real.omega, max_iters=50, tol=1e-8)
    lines = ["iteration,objective"]
    for it, val in enumerate(result.objective_trace, start=1):
        lines.append(f"{it},{val:.9g}")
    payload = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as handle:
            handle.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risplan",
        description="Place a reflecting panel in a wideband mmWave cell for long-term sum-rate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_deploy = sub.add_parser("deploy", help="optimize one scenario, print the pose")
    p_deploy.add_argument("--config", default=None)
    p_deploy.add_argument("--seed", type=int, default=None)
    p_deploy.add_argument("--out", default=None)
    p_deploy.add_argument("--method", default="heuristic")
    p_deploy.set_defaults(func=_cmd_deploy)

    p_sweep = sub.add_parser("sweep", help="run a full experiment sweep to CSV")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--trials", type=int, default=None)
    p_sweep.add_argument("--parallel", type=int, default=1,
                         help="worker cap (execution is serial; results are identical)")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_validate = sub.add_parser("validate", help="run the numeric oracle checks")
    p_validate.add_argument("--seed", type=int, default=None)
    p_validate.add_argument("--trials", type=int, default=None)
    p_validate.set_defaults(func=_cmd_validate)

    p_phase = sub.add_parser("phase-opt", help="trace one phase optimization run")
    p_phase.add_argument("--config", default=None)
    p_phase.add_argument("--seed", type=int, default=None)
    p_phase.add_argument("--out", default=None)
    p_phase.set_defaults(func=_cmd_phase_opt)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except RisPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
