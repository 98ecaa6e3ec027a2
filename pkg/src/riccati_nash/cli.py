"""Command-line front end: config ingestion, dispatch, CSV/JSON emission."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from .errors import ConfigError, RiccatiNashError

COMMANDS = ("solve", "genfun", "ergodic", "sweep", "nash-mc", "meanfield",
            "certify-seq")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
               "NUMEXPR_NUM_THREADS")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems are config errors
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="riccati-nash",
                description="Solve and validate linear-quadratic network "
                            "game systems.")
    p.add_argument("command", nargs="?", choices=COMMANDS,
                   help="override the command named in the config file")
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS thread cap (env RICCATI_NASH_THREADS wins)")
    p.add_argument("--quiet", action="store_true",
                   help="suppress progress lines on stdout")
    return p


def _apply_threads(flag_value: int | None) -> None:
    """Pin BLAS pools; must run before numpy is first imported."""
    env = os.environ.get("RICCATI_NASH_THREADS")
    value = env if env else flag_value
    if value is None:
        return
    for var in THREAD_VARS:
        os.environ[var] = str(int(value))


def _toml_loads(raw: bytes) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc


def _game_table(config: dict) -> dict:
    game = config.get("game")
    if not isinstance(game, dict):
        raise ConfigError("config needs a [game] table")
    return game


def _pow2(n: int) -> int:
    return 1 << (max(int(n), 4) - 1).bit_length()


def _plan_for(symbol, truncation: int, numerics: dict):
    from .genfun import ContourPlan
    r = numerics.get("r")
    n_nodes = numerics.get("n_nodes")
    if r is None and n_nodes is None:
        return ContourPlan.for_symbol(symbol, truncation)
    if r is None:
        r = 0.5 * (1.0 + symbol.rho)
    if n_nodes is None:
        n_nodes = max(256, 4 * truncation)
    return ContourPlan(r=float(r), n_nodes=_pow2(int(n_nodes)))


def _upper_triangle(prefix: str, h: int) -> list[str]:
    return [f"{prefix}_{a}_{b}" for a in range(h) for b in range(a, h)]


# -- command handlers: (config, numerics, seed) -> (tables, certificates) ---

def _cmd_solve(config, numerics, seed):
    from .core import build_game
    from .riccati import integrate_backward

    game = build_game(_game_table(config))
    trunc = numerics.get("truncation")
    flow = integrate_backward(game, steps=int(numerics.get("steps", 512)),
                              truncation=None if trunc is None else int(trunc))
    if flow.layout == "reduced":
        mats, prefix = flow.values, "c"
    else:
        mats, prefix = flow.values[:, 0], "c0"
    h = mats.shape[-1]
    header = ["t"] + _upper_triangle(prefix, h)
    rows = [[float(t)] + [float(m[a, b]) for a in range(h)
                          for b in range(a, h)]
            for t, m in zip(flow.grid, mats)]
    return {"solve": (header, rows)}, []


def _cmd_genfun(config, numerics, seed):
    from .core import build_game
    from .genfun import certify_symbol, extract_coefficients

    game = build_game(_game_table(config))
    if game.stencil is None:
        raise ConfigError("genfun needs a shift-invariant stencil")
    rho = float(numerics.get("rho", 1.4))
    symbol = certify_symbol(game.stencil, rho, game.horizon)
    h = int(numerics.get("truncation", 12))
    plan = _plan_for(symbol, h, numerics)
    ts = [float(t) for t in numerics.get("t_samples", [game.horizon])]
    rows = []
    for t in ts:
        c = extract_coefficients(symbol, plan, t, h)
        rows += [[t, a, b, float(c[a, b])]
                 for a in range(h) for b in range(h)]
    certs = [{"kind": "strong-gathering", "rho": rho,
              "margin": symbol.gathering_margin},
             {"kind": "compatibility", "t_max": symbol.compat_t_max,
              "margin": symbol.compat_margin}]
    return {"genfun": (["t", "h", "k", "value"], rows)}, certs


def _cmd_ergodic(config, numerics, seed):
    import numpy as np

    from .ergodic import ergodic_value
    from .genfun import (ContourPlan, build_symbol, certify_symbol,
                         directed_chain_oracle, ergodic_coefficients)

    h = int(numerics.get("truncation", 12))
    if numerics.get("oracle") == "directed-chain":
        from .core import CostStencil
        stencil = CostStencil(np.array([[1.0, -1.0], [-1.0, 1.0]]),
                              np.zeros((2, 2)))
        # branch point at z = 1: no gathering radius above 1 exists, so
        # extract inside the unit disc where the series still converges
        symbol = build_symbol(stencil)
        plan = ContourPlan(r=float(numerics.get("r", 0.9)),
                           n_nodes=_pow2(int(numerics.get("n_nodes", 512))))
        cbar = ergodic_coefficients(symbol, plan, h, allow_uncertified=True)
        rows, worst = [], 0.0
        for a in range(h):
            for b in range(h):
                want = float(directed_chain_oracle(a, b))
                err = abs(float(cbar[a, b]) - want)
                worst = max(worst, err)
                rows.append([a, b, float(cbar[a, b]), want, err])
        certs = [{"kind": "oracle-comparison", "oracle": "directed-chain",
                  "max_abs_error": worst}]
        return {"ergodic": (["h", "k", "value", "oracle", "abs_error"],
                            rows)}, certs

    from .core import build_game
    game = build_game(_game_table(config))
    if game.stencil is None:
        raise ConfigError("ergodic needs a shift-invariant stencil")
    rho = float(numerics.get("rho", 1.4))
    symbol = certify_symbol(game.stencil, rho, game.horizon)
    plan = _plan_for(symbol, h, numerics)
    cbar = ergodic_coefficients(symbol, plan, h)
    lam = ergodic_value(cbar, d=game.d)
    rows = [[a, b, float(cbar[a, b])] for a in range(h) for b in range(h)]
    certs = [{"kind": "strong-gathering", "rho": rho,
              "margin": symbol.gathering_margin},
             {"kind": "ergodic-value", "value": lam.value,
              "tail_bound": lam.tail_bound}]
    return {"ergodic": (["h", "k", "value"], rows)}, certs


def _cmd_sweep(config, numerics, seed):
    from .core import build_game
    from .ergodic import convergence_sweep
    from .genfun import certify_symbol

    game = build_game(_game_table(config))
    if game.stencil is None:
        raise ConfigError("sweep needs a shift-invariant stencil")
    horizons = [float(t) for t in numerics.get("horizons", [1, 2, 4, 8])]
    rho = float(numerics.get("rho", 1.4))
    symbol = certify_symbol(game.stencil, rho, max(horizons))
    h = int(numerics.get("truncation", 16))
    plan = _plan_for(symbol, h, numerics)
    report = convergence_sweep(symbol, horizons, h, plan, d=game.d)
    rows = [[t, g1, g2] for t, g1, g2 in
            zip(report.horizons, report.l1_gaps, report.trace_gaps)]
    certs = [{"kind": "long-time", "lam": report.lam,
              "mu_estimate": report.mu_estimate,
              "fitted_rate": report.fitted_rate}]
    return {"sweep": (["T", "l1_gap", "trace_gap"], rows)}, certs


def _cmd_nash_mc(config, numerics, seed):
    from .core import build_game
    from .mcsim import McParams, drift_deviation, epsilon_nash_experiment

    game = build_game(_game_table(config))
    if game.stencil is None:
        raise ConfigError("nash-mc needs a shift-invariant stencil")
    n_list = [int(n) for n in numerics.get("n_list", [8, 16, 32])]
    drift = float(numerics.get("drift", 0.5))
    params = McParams(horizon=game.horizon,
                      rho=float(numerics.get("rho", 1.4)),
                      n_paths=int(numerics.get("paths", 10_000)),
                      dt=float(numerics.get("dt", 1e-3)), seed=seed,
                      solver_steps=int(numerics.get("steps", 256)))
    report = epsilon_nash_experiment(
        game.stencil, n_list, lambda base: drift_deviation(base, drift),
        params)
    rows = [[n, g, se, up, env] for n, g, se, up, env in
            zip(report.n_values, report.gains, report.std_errors,
                report.upper95, report.envelope)]
    certs = [{"kind": "epsilon-nash", "n_paths": report.n_paths,
              "dt": params.dt, "drift": drift}]
    return {"nash-mc": (["N", "gain", "std_error", "upper95", "envelope"],
                        rows)}, certs


def _cmd_meanfield(config, numerics, seed):
    from .meanfield import (check_mf_scaling, generate_mf_costs,
                            scan_horizon_condition, solve_mf_system)

    game = config.get("game")
    if isinstance(game, dict) and game.get("mode") == "mean_field_like":
        from .core import build_game
        spec = build_game(game)
        costs_f, costs_g = spec.costs_f, spec.costs_g
        horizon = spec.horizon
    else:
        horizon = float(numerics.get("horizon", 1.0))
        costs_f, costs_g = generate_mf_costs(
            int(numerics.get("n_players", 16)),
            kappa_target=float(numerics.get("kappa", 1.0)),
            k_target=float(numerics.get("k_defect", 0.0)), seed=seed)
    budget = check_mf_scaling(costs_f, costs_g)
    scan = scan_horizon_condition(budget.k_f, budget.k_g, horizon)
    flow, monitor = solve_mf_system(
        costs_f, costs_g, horizon, steps=int(numerics.get("steps", 64)),
        m_guess=float(numerics.get("m_guess", 1e-6)))
    header = ["t", "min_eig", "norm1", "norm2", "norm3",
              "env0", "env1", "env2"]
    rows = [[float(monitor.grid[m]), float(monitor.min_eig_bc[m])]
            + [float(v) for v in monitor.measured_norms[:, m]]
            + [float(v) for v in monitor.envelopes[:, m]]
            for m in range(monitor.grid.size)]
    certs = [{"kind": "scaling-budget", "kappa_f": budget.kappa_f,
              "kappa_g": budget.kappa_g, "k_f": budget.k_f,
              "k_g": budget.k_g},
             {"kind": "horizon-scan", "feasible": scan.feasible,
              "barrier": scan.barrier, "kg_sup": scan.kg_sup,
              "kf_bound": scan.kf_bound},
             {"kind": "final-bound", "value": monitor.final_bound}]
    return {"meanfield": (header, rows)}, certs


def _cmd_certify_seq(config, numerics, seed):
    from .seqtools import certify_self_controlled, make_exponential_fourier_seq

    alpha = float(numerics.get("alpha", 2.0))
    radius = int(numerics.get("radius", 256))
    beta = make_exponential_fourier_seq(alpha, radius)
    beta = certify_self_controlled(beta,
                                   tol_tail=float(numerics.get("tol_tail",
                                                               16.0)))
    rows = [[i, float(v)] for i, v in enumerate(beta.entries)]
    certs = [{"kind": "self-controlled", "constant": beta.csc_constant,
              "alpha": alpha, "tail_constant": beta.tail_constant}]
    return {"certify-seq": (["i", "beta"], rows)}, certs


_HANDLERS = {
    "solve": _cmd_solve,
    "genfun": _cmd_genfun,
    "ergodic": _cmd_ergodic,
    "sweep": _cmd_sweep,
    "nash-mc": _cmd_nash_mc,
    "meanfield": _cmd_meanfield,
    "certify-seq": _cmd_certify_seq,
}


# -- emission ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_fmt(v) for v in row] for row in rows)
    _atomic_write(path, buf.getvalue())


def _run(args) -> int:
    cfg_path = Path(args.config)
    try:
        raw = cfg_path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    config = _toml_loads(raw)
    command = args.command or config.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}; "
                          f"got {command!r}")
    numerics = config.get("numerics", {})
    if not isinstance(numerics, dict):
        raise ConfigError("[numerics] must be a table")
    seed = args.seed if args.seed is not None else int(numerics.get("seed", 0))
    outputs = config.get("outputs", {})
    out_dir = Path(args.out or outputs.get("directory", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    tables, certificates = _HANDLERS[command](config, numerics, seed)
    wall = time.perf_counter() - start

    written = []
    for name, (header, rows) in tables.items():
        path = out_dir / f"{name}.csv"
        _write_csv(path, header, rows)
        written.append(path)
    sidecar = {
        "command": command,
        "config_hash": hashlib.sha256(raw).hexdigest(),
        "seed": seed,
        "certificates": certificates,
        "wall_time_s": round(wall, 6),
    }
    side_path = out_dir / f"{command}.json"
    _atomic_write(side_path, json.dumps(sidecar, indent=2, sort_keys=True)
                  + "\n")
    written.append(side_path)
    if not args.quiet:
        for path in written:
            print(f"[{command}] wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        _apply_threads(args.threads)
        return _run(args)
    except RiccatiNashError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
