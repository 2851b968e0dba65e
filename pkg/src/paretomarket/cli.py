"""Experiment runner.

Subcommands: simulate, solve, sweep, oracle, fit, gini, compare. Configs
are JSON with nested blocks (economy / simulation / solver / sweep /
output / seed); unknown keys are rejected. Every run that writes artifacts
also writes a manifest (config, seed, versions, output hashes) from which
the artifacts can be regenerated bit-identically.

Exit codes: 0 success, 1 invalid config or input files, 2 runtime failure
(partial outputs are left in place). A failed `compare` band check exits 2;
mismatched economies exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import solve_multi_class_fixed_point, solve_single_class
from .errors import ConfigurationError, ParetoMarketError
from .market import build_goods, economy_digest, quantize_wealth
from .oracle import exact_stationary_success_rates
from .reporting import (
    compare_files,
    write_agents_csv,
    write_histograms_csv,
    write_json,
    write_manifest,
    write_observables_json,
    write_p_suc_csv,
    write_realizations_csv,
    write_solution_json,
    write_sweep_csv,
)
from .simulate import EconomyTemplate, SimConfig, run_simulation, sweep_beta
from .wealth import (
    ShareTable,
    WealthVector,
    adjust_to_expected_mean,
    build_staircase,
    fit_pareto_exponent,
    gini,
    sample_pareto,
)

_TOP_KEYS = {"economy", "simulation", "solver", "sweep", "output", "oracle", "seed"}
_ECONOMY_KEYS = {
    "n_agents", "beta", "c_min", "wealth", "values", "k_classes",
    "pi_1", "price_ratio", "pi_over_c", "c_over_pi",
    "staircase_base", "staircase_levels",
}
_SIM_KEYS = {
    "total_steps", "equilibration_steps", "auto_equilibrate",
    "measurement_interval", "realizations", "rule",
    "histogram_agents", "histogram_bins",
}
_SOLVER_KEYS = {"tolerance", "max_iter", "node_cap"}
_SWEEP_KEYS = {"betas", "realizations"}
_OUTPUT_KEYS = {"directory"}
_ORACLE_KEYS = {"rule", "cap"}


def _reject_unknown(block: dict, allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _load_config(path: str | None, required: set) -> dict:
    if path is None:
        raise ConfigurationError("this subcommand requires --config")
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be an object")
    _reject_unknown(cfg, _TOP_KEYS, "config")
    for block, keys in (
        ("economy", _ECONOMY_KEYS),
        ("simulation", _SIM_KEYS),
        ("solver", _SOLVER_KEYS),
        ("sweep", _SWEEP_KEYS),
        ("output", _OUTPUT_KEYS),
        ("oracle", _ORACLE_KEYS),
    ):
        if block in cfg:
            if not isinstance(cfg[block], dict):
                raise ConfigurationError(f"{block} block must be an object")
            _reject_unknown(cfg[block], keys, block)
    missing = required - set(cfg)
    if missing:
        raise ConfigurationError(f"config lacks required block(s): {', '.join(sorted(missing))}")
    return cfg


def _ratio_from(econ: dict) -> float:
    has_pc = "pi_over_c" in econ
    has_cp = "c_over_pi" in econ
    if has_pc == has_cp:
        raise ConfigurationError("economy needs exactly one of pi_over_c / c_over_pi")
    return float(econ["pi_over_c"]) if has_pc else 1.0 / float(econ["c_over_pi"])


def _build_economy(econ: dict, seed: int):
    """Return (wealth, goods, staircase-or-None) for one economy config."""
    kind = econ.get("wealth", "pareto")
    c_min = float(econ.get("c_min", 1.0))
    stair = None
    if kind == "explicit":
        if "values" not in econ:
            raise ConfigurationError("explicit wealth requires a values list")
        wealth = WealthVector(values=np.asarray(econ["values"], dtype=np.float64), c_min=c_min)
    else:
        for key in ("n_agents", "beta"):
            if key not in econ:
                raise ConfigurationError(f"{kind} wealth requires economy.{key}")
        n = int(econ["n_agents"])
        beta = float(econ["beta"])
        wseed = int(np.random.SeedSequence((seed, 17)).generate_state(1)[0])
        if kind == "pareto":
            wealth = sample_pareto(beta, c_min, n, wseed)
        elif kind == "adjusted":
            wealth = sample_pareto(beta, c_min, n, wseed)
            wealth = adjust_to_expected_mean(wealth, seed=(seed, 19))
        elif kind == "staircase":
            stair = build_staircase(
                beta, c_min,
                float(econ.get("staircase_base", 1.1)),
                int(econ.get("staircase_levels", 64)),
                n,
            )
            wealth = stair.expand()
        else:
            raise ConfigurationError(f"unknown wealth kind {kind!r}")
    if "pi_1" not in econ:
        raise ConfigurationError("economy requires pi_1")
    goods = build_goods(
        wealth,
        _ratio_from(econ),
        int(econ.get("k_classes", 1)),
        float(econ["pi_1"]),
        econ.get("price_ratio", "3/2"),
    )
    return wealth, goods, stair


def _sim_config(cfg: dict, seed: int, jobs: int) -> SimConfig:
    block = cfg.get("simulation", {})
    return SimConfig(
        total_steps=block.get("total_steps"),
        equilibration_steps=block.get("equilibration_steps"),
        auto_equilibrate=bool(block.get("auto_equilibrate", False)),
        measurement_interval=block.get("measurement_interval"),
        realizations=int(block.get("realizations", 1)),
        seed=seed,
        rule=block.get("rule"),
        jobs=jobs,
        histogram_agents=tuple(int(a) for a in block.get("histogram_agents", ())),
        histogram_bins=int(block.get("histogram_bins", 256)),
    )


def _resolve_out_dir(args, cfg: dict, default: str | None = "out") -> Path | None:
    if args.out_dir is not None:
        target = args.out_dir
    elif "output" in cfg and "directory" in cfg["output"]:
        target = cfg["output"]["directory"]
    else:
        target = default
    if target is None:
        return None
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _effective_seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(cfg.get("seed", 0))


def _manifest_config(cfg: dict, seed: int) -> dict:
    out = json.loads(json.dumps(cfg))  # deep copy, JSON-clean
    out["seed"] = seed
    out.pop("output", None)  # directory choice does not affect artifact bytes
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, required={"economy"})
    seed = _effective_seed(args, cfg)
    out_dir = _resolve_out_dir(args, cfg)
    wealth, goods, _ = _build_economy(cfg["economy"], seed)
    sim_cfg = _sim_config(cfg, seed, args.jobs)
    obs = run_simulation(wealth, goods, sim_cfg)
    files = [
        write_observables_json(out_dir, obs, goods),
        write_p_suc_csv(out_dir, obs, goods),
        write_agents_csv(out_dir, obs, wealth.values),
    ]
    if obs.histograms:
        files.append(write_histograms_csv(out_dir, obs, goods))
    write_manifest(out_dir, "simulate", _manifest_config(cfg, seed), seed, files)
    for k in range(obs.k_classes):
        print(f"class {k}: p_suc = {obs.p_suc[k]:.6f} "
              f"[{obs.p_suc_min[k]:.6f}, {obs.p_suc_max[k]:.6f}]")
    print(f"p_bar = {obs.p_bar:.6f}  stationary = {obs.stationary}")
    print(f"wrote {len(files) + 1} file(s) to {out_dir}")
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args.config, required={"economy"})
    seed = _effective_seed(args, cfg)
    out_dir = _resolve_out_dir(args, cfg)
    solver = cfg.get("solver", {})
    tol = args.tolerance if args.tolerance is not None else float(solver.get("tolerance", 1e-10))
    wealth, goods, stair = _build_economy(cfg["economy"], seed)
    if goods.k_classes == 1:
        solution = solve_single_class(
            stair if stair is not None else wealth,
            m_objects=int(goods.counts[0]),
            price=float(goods.prices_money[0]),
            tol=tol,
            max_iter=int(solver.get("max_iter", 200)),
        )
    else:
        if stair is None:
            raise ConfigurationError("multi-class solving requires staircase wealth")
        solution = solve_multi_class_fixed_point(
            stair, goods, tol=tol,
            max_iter=int(solver.get("max_iter", 500)),
            node_cap=int(solver.get("node_cap", 20_000_000)),
        )
    digest = economy_digest(quantize_wealth(wealth.values, goods.quantum), goods)
    files = [write_solution_json(out_dir, solution, digest)]
    write_manifest(out_dir, "solve", _manifest_config(cfg, seed), seed, files)
    for k in range(solution.k_classes):
        print(f"class {k}: p_suc = {solution.p_suc[k]:.8f}")
    print(f"residual = {solution.residual:.3e}  converged = {solution.converged}"
          f"  frozen = {solution.frozen}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, required={"economy", "sweep"})
    seed = _effective_seed(args, cfg)
    out_dir = _resolve_out_dir(args, cfg)
    econ = cfg["economy"]
    if econ.get("wealth", "pareto") == "explicit":
        raise ConfigurationError("sweeps need a parametric wealth kind, not explicit values")
    for key in ("n_agents", "pi_1"):
        if key not in econ:
            raise ConfigurationError(f"sweep economy requires {key}")
    template = EconomyTemplate(
        n_agents=int(econ["n_agents"]),
        k_classes=int(econ.get("k_classes", 1)),
        c_min=float(econ.get("c_min", 1.0)),
        wealth_kind=econ.get("wealth", "adjusted"),
        pi_1=float(econ["pi_1"]),
        price_ratio=econ.get("price_ratio", "3/2"),
        pi_over_c=_ratio_from(econ),
        staircase_base=float(econ.get("staircase_base", 1.1)),
        staircase_levels=int(econ.get("staircase_levels", 64)),
    )
    sweep_block = cfg["sweep"]
    if "betas" not in sweep_block:
        raise ConfigurationError("sweep block requires a betas list")
    betas = [float(b) for b in sweep_block["betas"]]
    sim_cfg = replace(
        _sim_config(cfg, seed, args.jobs),
        realizations=int(sweep_block.get("realizations", 1)),
    )
    result = sweep_beta(betas, template, sim_cfg)
    files = [write_sweep_csv(out_dir, result), write_realizations_csv(out_dir, result)]
    write_manifest(out_dir, "sweep", _manifest_config(cfg, seed), seed, files)
    summary = result.by_beta()
    n_failed = sum(e["n_failed"] for e in summary.values())
    for beta in sorted(summary):
        entry = summary[beta]
        if entry["n_ok"]:
            print(f"beta {beta:g}: p_bar = {entry['p_bar_mean']:.6f} "
                  f"[{entry['p_bar_min']:.6f}, {entry['p_bar_max']:.6f}] "
                  f"({entry['n_ok']} ok)")
        else:
            print(f"beta {beta:g}: all realizations failed")
    if n_failed:
        print(f"warning: {n_failed} point(s) failed", file=sys.stderr)
    if all(e["n_ok"] == 0 for e in summary.values()):
        return 2
    return 0


def cmd_oracle(args) -> int:
    cfg = _load_config(args.config, required={"economy"})
    seed = _effective_seed(args, cfg)
    out_dir = _resolve_out_dir(args, cfg, default=None)
    block = cfg.get("oracle", {})
    wealth, goods, _ = _build_economy(cfg["economy"], seed)
    result = exact_stationary_success_rates(
        wealth, goods,
        rule=block.get("rule"),
        cap=int(block.get("cap", 1_000_000)),
    )
    for k in range(goods.k_classes):
        print(f"class {k}: p_suc = {result.p_suc[k]:.4f}")
    print(f"{result.n_states} feasible state(s), uniform residual {result.uniform_residual:.3e}, "
          f"ergodic = {result.ergodic}")
    if result.n_states <= 50:
        for row in result.states:
            print("  owners:", " ".join(str(int(v)) for v in row))
    if out_dir is not None:
        payload = {
            "p_suc": result.p_suc.tolist(),
            "n_states": int(result.n_states),
            "uniform_residual": float(result.uniform_residual),
            "ergodic": bool(result.ergodic),
            "states": result.states.tolist(),
            "economy": economy_digest(quantize_wealth(wealth.values, goods.quantum), goods),
        }
        files = [write_json(out_dir / "oracle.json", payload)]
        write_manifest(out_dir, "oracle", _manifest_config(cfg, seed), seed, files)
    return 0


def cmd_fit(args) -> int:
    try:
        table = ShareTable.from_csv(args.shares)
    except ParetoMarketError as exc:
        raise ConfigurationError(f"cannot read share table {args.shares}: {exc}")
    beta, err = fit_pareto_exponent(table)
    print(f"beta = {beta:.6f} ± {err:.6f}")
    if args.out_dir is not None:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "fit.json", {"beta": beta, "error": err})
    return 0


def _read_values(path: str) -> np.ndarray:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        return np.asarray(json.loads(text), dtype=np.float64)
    return np.loadtxt(path, dtype=np.float64, ndmin=1)


def cmd_gini(args) -> int:
    values = _read_values(args.values)
    g = gini(values)
    print(f"gini = {g:.6f}")
    if args.out_dir is not None:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "gini.json", {"gini": g, "n": int(values.size)})
    return 0


def cmd_compare(args) -> int:
    lines, passed, refused = compare_files(
        args.simulation, args.solution, tolerance=args.tolerance
    )
    for line in lines:
        print(line)
    if refused:
        return 1
    return 0 if passed else 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paretomarket",
        description="Random-exchange market simulator and mean-field solver.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", help="directory for output artifacts")
        p.add_argument("--jobs", type=int, default=1, help="worker threads")
        p.add_argument("--tolerance", type=float, help="override solver/compare tolerance")
        return p

    common(sub.add_parser("simulate", help="run Monte Carlo and write observables"))
    common(sub.add_parser("solve", help="run the mean-field solver"))
    common(sub.add_parser("sweep", help="sweep beta over fresh economies"))
    common(sub.add_parser("oracle", help="exact results for an enumerable economy"))

    p_fit = common(sub.add_parser("fit", help="fit a Pareto exponent to a share table"))
    p_fit.add_argument("shares", help="CSV with header p_top,w_share")

    p_gini = common(sub.add_parser("gini", help="Gini index of a value file"))
    p_gini.add_argument("values", help="JSON array or single-column text file")

    p_cmp = common(sub.add_parser("compare", help="check simulation against a solver file"))
    p_cmp.add_argument("simulation", help="per-class rate CSV from `simulate`")
    p_cmp.add_argument("solution", help="solution JSON from `solve`")
    return parser


_HANDLERS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "fit": cmd_fit,
    "gini": cmd_gini,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParetoMarketError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
