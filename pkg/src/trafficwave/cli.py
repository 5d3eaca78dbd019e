"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 a certificate or acceptance check failed.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .control import check_compatibility
from .errors import ConfigurationError, ControllerError, InvariantViolation
from .output import write_diagnostics, write_equilibria, write_snapshot, format_equilibria
from .scenario import ScenarioConfig, load_scenario
from .scheme import SimulationResult

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2

SEC4_CHECK_TIME = 6.58
SEC4_CLOSED = {"T": 10.0, "X_check": 1e-2, "X_final": 5e-3}
SEC4_OPEN = {"T": 20.0, "max_rho": 2.3, "X_final": 0.5}


def _out_dir(cfg: ScenarioConfig, override: Optional[str]) -> Path:
    path = Path(override) if override else Path(cfg.directory or f"out/{cfg.name}")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_run(result: SimulationResult, directory: Path, prefix: str = "") -> list[Path]:
    paths = [write_diagnostics(directory, result.diagnostics, prefix)]
    for t in sorted(result.snapshots):
        paths.append(write_snapshot(directory, result.snapshots[t], prefix))
    return paths


def _summarize(cfg: ScenarioConfig, result: SimulationResult) -> tuple[list[str], bool]:
    d = result.diagnostics
    cert = analysis.certify_bounds(d, cfg.params)
    lines = [
        f"scenario {cfg.name}: controller={cfg.controller.kind} N={result.grid.N} "
        f"T={result.grid.T:g} steps={result.grid.m} lambda={result.grid.lam:.6g}",
        f"  X(0) = {d.X[0]:.6e}   X(T) = {d.X[-1]:.6e}   max rho(T) = {d.max_rho[-1]:.6f}",
    ]
    for check in cert.checks:
        status = "pass" if check.passed else f"FAIL at step {check.first_violation}"
        lines.append(f"  bound {check.name:<14} {status}")
    wash = analysis.washout_check(d, cfg.params)
    if wash.applicable:
        obs = "never" if wash.t_observed is None else f"{wash.t_observed:.4f}"
        lines.append(f"  washout: 1/v_min = {wash.t_theory:.4f}, observed {obs} "
                     f"(threshold {wash.threshold:g})")
    return lines, cert.passed


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.scenario)
    result = cfg.run(N=args.N)
    directory = _out_dir(cfg, args.out)
    paths = _write_run(result, directory, cfg.prefix)
    lines, ok = _summarize(cfg, result)
    print("\n".join(lines))
    print(f"  wrote {len(paths)} files to {directory}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_equilibria(args) -> int:
    cfg = load_scenario(args.scenario)
    if not args.q > 0:
        raise ConfigurationError(f"--q must be positive, got {args.q}")
    report = analysis.find_equilibria(args.q, cfg.params)
    print(format_equilibria(report), end="")
    if args.out:
        directory = Path(args.out)
        directory.mkdir(parents=True, exist_ok=True)
        write_equilibria(directory, report, cfg.prefix)
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = load_scenario(args.scenario)
    rho_eq = args.rho_eq
    if not rho_eq > 0:
        raise ConfigurationError(f"--rho-eq must be positive, got {rho_eq}")
    c31 = analysis.check_condition_31(rho_eq, cfg.params, args.samples)
    admissible = analysis.check_rho_eq_admissible(rho_eq, cfg.params)
    rho0, v0 = cfg.profiles()
    compat = check_compatibility(rho0, v0, rho_eq, cfg.params)
    print(f"rho_eq = {rho_eq:g}, f(rho_eq) = {cfg.params.f(rho_eq):.6g}")
    print(f"stabilizability inequality sampled ({c31.n_samples} points): {str(c31.holds).lower()}")
    if not c31.holds:
        print(f"  witness v = {c31.witness_v:.6g}, product = {c31.witness_product:.3e}")
    print(f"monotone F(rho) = rho (c + f(rho)) sufficient test: {str(c31.sufficient_test).lower()}")
    print(f"admissibility rho_eq <= c/(c+f(rho_eq)) (rho_max - eps): {str(admissible).lower()}")
    print(f"initial data compatible with feedback: {str(compat.theorem31_ok).lower()} "
          f"(residuals {compat.residuals[0]:.3e}, {compat.residuals[1]:.3e})")
    if compat.suggestion is not None:
        s = compat.suggestion
        print(f"  suggested blended ramp: a = {s.a_lin:.6g}, b = {s.b_lin:.6g}, "
              f"T_blend = {s.T_blend:g}")
    return EXIT_OK if (c31.holds and admissible) else EXIT_FAILED


def cmd_reproduce(args) -> int:
    cfg = load_scenario("section4_openloop" if args.open_loop else "section4_closedloop")
    out = args.out or ("out/sec4_openloop" if args.open_loop else "out/sec4_closedloop")
    T = SEC4_OPEN["T"] if args.open_loop else SEC4_CLOSED["T"]
    result = cfg.run(N=args.N, T=T)
    directory = _out_dir(cfg, out)
    _write_run(result, directory)
    lines, ok = _summarize(cfg, result)
    print("\n".join(lines))
    d = result.diagnostics
    if args.open_loop:
        checks = [
            (f"max rho({T:g}) = {d.max_rho[-1]:.6f} >= {SEC4_OPEN['max_rho']}",
             d.max_rho[-1] >= SEC4_OPEN["max_rho"]),
            (f"X({T:g}) = {d.X[-1]:.6e} >= {SEC4_OPEN['X_final']}",
             d.X[-1] >= SEC4_OPEN["X_final"]),
        ]
    else:
        k = d.at(SEC4_CHECK_TIME)
        checks = [
            (f"X({SEC4_CHECK_TIME}) = {d.X[k]:.6e} <= {SEC4_CLOSED['X_check']:g}",
             d.X[k] <= SEC4_CLOSED["X_check"]),
            (f"X({T:g}) = {d.X[-1]:.6e} <= {SEC4_CLOSED['X_final']:g}",
             d.X[-1] <= SEC4_CLOSED["X_final"]),
        ]
    for text, passed in checks:
        print(f"  {'PASS' if passed else 'FAIL'}  {text}")
    print(f"  wrote outputs to {directory}")
    return EXIT_OK if ok and all(p for _, p in checks) else EXIT_FAILED


def cmd_convergence(args) -> int:
    cfg = load_scenario(args.scenario)
    try:
        N_list = [int(s) for s in args.N_list.split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"--N-list must be comma-separated integers, got {args.N_list!r}")
    T = args.T if args.T is not None else cfg.T
    report = analysis.convergence_order(lambda n: cfg.run(N=n, T=T, snapshot_times=()), N_list)
    print(f"scenario {cfg.name}: final-profile sup-differences at T={T:g}")
    for (a, b), diff in zip(zip(N_list, N_list[1:]), report.differences):
        print(f"  N={a:>5} vs {b:>5}: {diff:.6e}")
    for j, (ratio, order) in enumerate(zip(report.ratios, report.orders)):
        print(f"  ratio {j}: {ratio:.4f}  (order {order:.3f})")
    if report.exact:
        ok = True
        print("  PASS  profiles identical at every resolution")
    else:
        ok = all(r >= args.min_ratio for r in report.ratios)
        print(f"  {'PASS' if ok else 'FAIL'}  every ratio >= {args.min_ratio:g}")
    return EXIT_OK if ok else EXIT_FAILED


def _sweep_one(path: str, out_root: Optional[str]) -> tuple[str, int, str]:
    try:
        cfg = load_scenario(path)
        result = cfg.run()
        directory = _out_dir(cfg, str(Path(out_root) / cfg.name) if out_root else None)
        _write_run(result, directory, cfg.prefix)
        lines, ok = _summarize(cfg, result)
        return cfg.name, EXIT_OK if ok else EXIT_FAILED, "\n".join(lines)
    except (ConfigurationError, ValueError) as exc:
        return Path(path).stem, EXIT_INVALID, f"scenario {Path(path).stem}: invalid: {exc}"
    except (InvariantViolation, ControllerError) as exc:
        return Path(path).stem, EXIT_FAILED, f"scenario {Path(path).stem}: run failed: {exc}"


def sweep_workers() -> int:
    env = os.environ.get("TRAFFICWAVE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"TRAFFICWAVE_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise ConfigurationError("TRAFFICWAVE_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def cmd_sweep(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise ConfigurationError(f"{directory} is not a directory")
    files = sorted(str(p) for p in directory.glob("*.scn"))
    if not files:
        raise ConfigurationError(f"no *.scn scenario files in {directory}")
    workers = min(sweep_workers(), len(files))
    if workers == 1:
        results = [_sweep_one(f, args.out) for f in files]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, files, [args.out] * len(files)))
    for _, _, text in results:
        print(text)
    codes = [code for _, code, _ in results]
    print(f"sweep: {codes.count(EXIT_OK)}/{len(codes)} scenarios passed")
    return max(codes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trafficwave",
                                     description="Traffic flow PDE simulation and inlet control")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write CSV outputs")
    p.add_argument("scenario", help="scenario file or bundled name")
    p.add_argument("--N", type=int, default=None, help="override numerics.N")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equilibria", help="list equilibria for a constant demand")
    p.add_argument("scenario")
    p.add_argument("--q", type=float, required=True, help="constant inlet demand")
    p.add_argument("--out", default=None, help="also write equilibria.txt here")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("check", help="stabilizability checks for a target density")
    p.add_argument("scenario")
    p.add_argument("--rho-eq", type=float, required=True, dest="rho_eq")
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("reproduce-sec4", help="rerun the worked example")
    p.add_argument("--open-loop", action="store_true")
    p.add_argument("--N", type=int, default=400)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("convergence", help="grid refinement study")
    p.add_argument("scenario")
    p.add_argument("--N-list", required=True, dest="N_list")
    p.add_argument("--T", type=float, default=None, help="override numerics.T")
    p.add_argument("--min-ratio", type=float, default=1.5, dest="min_ratio")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("sweep", help="run every *.scn file in a directory")
    p.add_argument("directory")
    p.add_argument("--out", default=None, help="root for per-scenario output directories")
    p.set_defaults(func=cmd_sweep)
    return parser


def run_command(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InvariantViolation, ControllerError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
