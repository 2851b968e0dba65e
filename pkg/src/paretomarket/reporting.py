"""Result files: stable CSV/JSON artifacts, manifests, and the
simulation-vs-solver comparison report.

Every writer is deterministic for fixed inputs (floats serialized with
repr-faithful %.17g, JSON with sorted keys, no timestamps), so a manifest
plus its config regenerates byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .errors import ConfigurationError, ParameterError
from .market import GoodsSpec
from .simulate import Observables, SweepResult

P_SUC_HEADER = [
    "economy", "k", "price", "attempts", "successes",
    "p_suc", "p_mean", "p_min", "p_max", "p_std", "n_realizations",
]
AGENTS_HEADER_PREFIX = ["agent", "wealth", "mean_cash"]
SWEEP_HEADER = [
    "beta", "k", "p_suc", "p_min", "p_max", "p_std",
    "n_ok", "n_failed", "gini_wealth", "gini_cash_mean",
    "gini_cash_min", "gini_cash_max",
]
REALIZATIONS_HEADER = ["beta", "realization", "status", "p_bar", "gini_wealth",
                       "gini_cash", "stationary", "error"]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    v = float(x)
    if math.isnan(v):
        return "nan"
    return "%.17g" % v


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_observables_json(out_dir, obs: Observables, goods: GoodsSpec) -> Path:
    payload = obs.to_json_dict()
    payload["prices"] = goods.prices_money.tolist()
    payload["object_counts"] = goods.counts.tolist()
    payload["quantum"] = goods.quantum
    return write_json(Path(out_dir) / "observables.json", payload)


def write_p_suc_csv(out_dir, obs: Observables, goods: GoodsSpec) -> Path:
    prices = goods.prices_money
    n_real = len(obs.realizations)
    rows = [
        [
            obs.economy, k, prices[k], int(obs.attempts[k]), int(obs.successes[k]),
            obs.p_suc[k], obs.p_suc_mean[k], obs.p_suc_min[k], obs.p_suc_max[k],
            obs.p_suc_std[k], n_real,
        ]
        for k in range(obs.k_classes)
    ]
    return _write_csv(Path(out_dir) / "p_suc.csv", P_SUC_HEADER, rows)


def write_agents_csv(out_dir, obs: Observables, wealth_values) -> Path:
    k = obs.k_classes
    header = AGENTS_HEADER_PREFIX + [f"z_mean_{j}" for j in range(k)]
    values = np.asarray(wealth_values, dtype=np.float64)
    rows = (
        [i, values[i], obs.mean_cash[i]] + [obs.mean_holdings[i, j] for j in range(k)]
        for i in range(len(values))
    )
    return _write_csv(Path(out_dir) / "agents.csv", header, rows)


def write_histograms_csv(out_dir, obs: Observables, goods: GoodsSpec) -> Path:
    unit = float(goods.prices_money[0])
    rows = []
    for agent in sorted(obs.histograms):
        dens = obs.histograms[agent]
        for b, weight in enumerate(dens):
            rows.append([agent, b, b * unit, weight])
    return _write_csv(
        Path(out_dir) / "histograms.csv",
        ["agent", "bin", "cash_lo", "weight"],
        rows,
    )


def write_sweep_csv(out_dir, sweep: SweepResult) -> Path:
    """Long-format per-(beta, k) aggregates; k='bar' rows carry the
    value-weighted rate and the cash/wealth Gini columns."""
    rows = []
    summary = sweep.by_beta()
    for beta in sorted(summary):
        entry = summary[beta]
        n_ok, n_failed = entry["n_ok"], entry["n_failed"]
        if n_ok:
            for k in range(sweep.k_classes):
                rows.append([
                    beta, k, entry["p_suc_mean"][k], entry["p_suc_min"][k],
                    entry["p_suc_max"][k], entry["p_suc_std"][k],
                    n_ok, n_failed, None, None, None, None,
                ])
            rows.append([
                beta, "bar", entry["p_bar_mean"], entry["p_bar_min"],
                entry["p_bar_max"], None, n_ok, n_failed,
                entry["gini_wealth_mean"], entry["gini_cash_mean"],
                entry["gini_cash_min"], entry["gini_cash_max"],
            ])
        else:
            rows.append([beta, "bar", None, None, None, None, 0, n_failed,
                         None, None, None, None])
    return _write_csv(Path(out_dir) / "sweep.csv", SWEEP_HEADER, rows)


def write_realizations_csv(out_dir, sweep: SweepResult) -> Path:
    rows = [
        [r.beta, r.realization, r.status, r.p_bar, r.gini_wealth,
         r.gini_cash, r.stationary, r.error]
        for r in sweep.rows
    ]
    return _write_csv(Path(out_dir) / "realizations.csv", REALIZATIONS_HEADER, rows)


def write_solution_json(out_dir, solution, economy: str) -> Path:
    payload = solution.to_json_dict()
    payload["economy"] = economy
    return write_json(Path(out_dir) / "solution.json", payload)


def write_manifest(out_dir, command: str, config: dict, seed: int, outputs) -> Path:
    import numpy
    import scipy

    try:
        import numba

        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    out_dir = Path(out_dir)
    payload = {
        "command": command,
        "config": config,
        "seed": seed,
        "backend": BACKEND,
        "versions": {
            "paretomarket": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "numba": numba_version,
        },
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    }
    return write_json(out_dir / "manifest.json", payload)


def read_p_suc_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != P_SUC_HEADER:
            raise ConfigurationError(f"{path} is not a per-class rate table")
        return list(reader)


def compare_files(sim_csv, solution_json, tolerance: float | None = None, n_se: float = 3.0):
    """Per-class differences between a simulation table and a solver file.

    The default acceptance band is ``n_se`` simulation standard errors per
    class (realization spread when available, else binomial); an explicit
    ``tolerance`` replaces it with an absolute band. Returns
    ``(lines, passed, refused)``; economies must match or the comparison is
    refused.
    """
    rows = read_p_suc_csv(sim_csv)
    solution = json.loads(Path(solution_json).read_text())
    lines: list[str] = []
    if not rows:
        raise ParameterError(f"{sim_csv} holds no rows")
    sim_econ = {r["economy"] for r in rows}
    if len(sim_econ) != 1:
        raise ParameterError(f"{sim_csv} mixes multiple economies")
    sim_econ = sim_econ.pop()
    sol_econ = solution.get("economy")
    if sol_econ != sim_econ:
        lines.append(
            f"REFUSED: economy mismatch (simulation {sim_econ}, solver {sol_econ})"
        )
        return lines, False, True
    p_solver = solution["p_suc"]
    if len(p_solver) != len(rows):
        lines.append(
            f"REFUSED: class count mismatch (simulation {len(rows)}, solver {len(p_solver)})"
        )
        return lines, False, True
    lines.append(f"economy {sim_econ}: {len(rows)} class(es)")
    all_ok = True
    for row in sorted(rows, key=lambda r: int(r["k"])):
        k = int(row["k"])
        p_sim = float(row["p_suc"])
        p_ref = float(p_solver[k])
        n_real = int(row["n_realizations"])
        std = float(row["p_std"])
        attempts = int(row["attempts"])
        if n_real > 1 and std > 0:
            se = std / math.sqrt(n_real)
        else:
            se = math.sqrt(max(p_sim * (1 - p_sim), 1e-300) / max(attempts, 1))
        band = tolerance if tolerance is not None else n_se * se
        diff = abs(p_sim - p_ref)
        rel = diff / p_ref if p_ref else math.inf
        ok = diff <= band
        all_ok &= ok
        lines.append(
            f"k={k}: sim {p_sim:.6f} solver {p_ref:.6f} "
            f"|diff| {diff:.3e} rel {rel:.3e} band {band:.3e} "
            f"{'PASS' if ok else 'FAIL'}"
        )
    lines.append(f"RESULT: {'PASS' if all_ok else 'FAIL'}")
    return lines, all_ok, False
