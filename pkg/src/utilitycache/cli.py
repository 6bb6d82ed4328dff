"""Command-line experiment runner.

Subcommands: solve, simulate, fluid, market, bound, compare (and rerun,
which replays a manifest).  Each run writes plain CSV tables and a
``manifest.ini`` that echoes the full configuration, so any run can be
replayed from its manifest alone.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cache import Metrics, run_simulation
from .catalog import Catalog
from .config import ConfigError, ExperimentConfig, config_fields
from .control import (
    DualController,
    HitMissController,
    HitMissRule,
    HitProbEstimator,
    PrimalController,
    PrimalDualController,
    RateEstimator,
)
from .fluid import integrate_dual, integrate_primal, integrate_primal_dual, natural_gains
from .roots import BracketError
from .solver import (
    InfeasibleCapacityError,
    allocate,
    buffer_sizing,
    characteristic_time,
    market_equilibrium,
    solve_soft_capacity,
    violation_bound,
)
from .utility import CostFunction, UtilityFunction, UtilitySet

OUTPUT_ROOT_ENV = "UTILITYCACHE_OUTPUT_ROOT"
COMMANDS = ("solve", "simulate", "fluid", "market", "bound")


class CatalogMismatchError(ValueError):
    pass


# -- building blocks ----------------------------------------------------------

def build_catalog(cfg: ExperimentConfig) -> Catalog:
    if cfg.rates_csv:
        with open(cfg.rates_csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            ids = [int(r["file_id"]) for r in rows]
            rates = [float(r["lambda"]) for r in rows]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{cfg.rates_csv}: need file_id and lambda columns ({exc})") from None
        return Catalog.from_rates(rates, ids)
    return Catalog.zipf(cfg.files, cfg.zipf_exponent, cfg.aggregate_rate_per_time)


def build_utilities(cfg: ExperimentConfig, catalog: Catalog, online: bool = False) -> list[UtilityFunction]:
    """One utility per file for the configured preset.

    max_min is beta = inf offline; online controllers need a strictly
    concave stand-in, and identical log utilities have the same optimum.
    """
    rates = [float(r) for r in catalog.rates]
    p = cfg.preset
    if p == "lru":
        return [UtilityFunction.lru(r) for r in rates]
    if p == "fifo":
        return [UtilityFunction.fifo(r) for r in rates]
    if p == "proportional":
        return [UtilityFunction.rate_weighted_beta_fair(1.0, r) for r in rates]
    if p == "max_min":
        beta = 1.0 if online else math.inf
        return [UtilityFunction(kind="beta_fair", beta=beta, rate=r) for r in rates]
    if p == "lfu":
        return [UtilityFunction.rate_weighted_beta_fair(0.0, r) for r in rates]
    if cfg.rate_weighted:
        return [UtilityFunction.rate_weighted_beta_fair(cfg.beta, r) for r in rates]
    return [UtilityFunction(kind="beta_fair", beta=cfg.beta, rate=r) for r in rates]


def build_cost(cfg: ExperimentConfig) -> CostFunction:
    return CostFunction(cfg.cost_kind, cfg.cost_scale, cfg.cost_stiffness)


def offline_solution(cfg: ExperimentConfig, catalog: Catalog):
    """(allocation, B*) for the configured formulation; B* is None under a hard constraint."""
    us = build_utilities(cfg, catalog)
    if cfg.formulation == "soft":
        return solve_soft_capacity(catalog, us, build_cost(cfg), cfg.capacity_files, cfg.cache_kind)[::-1]
    return allocate(catalog, us, cfg.capacity_files, cfg.cache_kind), None


def build_controller(cfg: ExperimentConfig, catalog: Catalog):
    us = build_utilities(cfg, catalog, online=True)
    kw = dict(cache_kind=cfg.cache_kind, gamma=cfg.optional("gamma_per_file"), decay=cfg.decay)
    if cfg.rate_knowledge == "exact":
        kw["rates"] = catalog.rates
    else:
        kw["estimator"] = RateEstimator(
            catalog.n, catalog.n / catalog.total_rate, cfg.estimator, cfg.theta, cfg.estimator_sample_on
        )
    b = cfg.capacity_files
    if cfg.algorithm == "dual":
        return DualController(us, b, **kw)
    if cfg.algorithm == "hit_miss":
        names = {"proportional": "proportional_fair", "max_min": "max_min"}
        if cfg.preset not in names:
            raise ConfigError("hit_miss rules exist for the proportional and max_min presets only")
        rule = HitMissRule(names[cfg.preset], cfg.hit_miss_step, cfg.hit_miss_gain)
        return HitMissController(us, b, rule, **kw)
    hp = HitProbEstimator(catalog.n, cfg.theta_h, initial=min(b / catalog.n, 1.0))
    if cfg.algorithm == "primal":
        return PrimalController(us, b, build_cost(cfg), hit_estimator=hp, k=cfg.optional("gain"), **kw)
    return PrimalDualController(us, b, hit_estimator=hp, k=cfg.optional("gain"), **kw)


# -- artifact writing ---------------------------------------------------------

def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.12g" % float(x)
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def resolve_run(path) -> Path:
    """Relative run directories live under $UTILITYCACHE_OUTPUT_ROOT when it is set."""
    out = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def output_dir(cfg: ExperimentConfig) -> Path:
    out = resolve_run(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, results: dict):
    extra = {
        "manifest": {"command": command},
        "results": {k: _cell(v) for k, v in results.items()},
        "versions": {
            "utilitycache": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    (out / "manifest.ini").write_text(cfg.to_ini(extra))


def write_occupancy(out: Path, metrics: Metrics):
    write_csv(out / "occupancy.csv", ["time", "occupancy"], metrics.occupancy_samples)
    pdf, ccdf = metrics.occupancy_pdf, metrics.occupancy_ccdf
    write_csv(out / "occupancy_dist.csv", ["size", "pdf", "ccdf"], zip(range(pdf.size), pdf, ccdf))


# -- commands ---------------------------------------------------------------

def cmd_solve(cfg: ExperimentConfig) -> dict:
    catalog = build_catalog(cfg)
    alloc, b_star = offline_solution(cfg, catalog)
    out = output_dir(cfg)
    write_csv(
        out / "per_file.csv",
        ["file_id", "lambda", "h_model", "timer"],
        zip(catalog.ids, catalog.rates, alloc.h, alloc.t),
    )
    results = {"alpha": alloc.alpha, "occupancy": alloc.occupancy, "clamped": int(alloc.clamped.sum())}
    if b_star is not None:
        results["capacity_star"] = b_star
    if cfg.preset in ("lru", "fifo") and cfg.formulation == "hard":
        T = characteristic_time(catalog, cfg.capacity_files, cfg.preset)
        results["characteristic_time"] = T
        results["inverse_characteristic_time"] = 1.0 / T
    write_manifest(out, cfg, "solve", results)
    return results


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    catalog = build_catalog(cfg)
    alloc, _ = offline_solution(cfg, catalog)
    prov = cfg.optional("provisioned_files")
    kw = dict(
        warmup_fraction=cfg.warmup_fraction,
        occupancy_every=cfg.occupancy_every_requests,
        trajectory_every=cfg.trajectory_every_requests,
        provisioned_size=None if prov is None else int(prov),
    )
    if cfg.algorithm == "offline":
        result = run_simulation(catalog, cfg.cache_kind, cfg.horizon_requests, cfg.seed, timers=alloc.t, **kw)
    else:
        ctl = build_controller(cfg, catalog)
        result = run_simulation(catalog, cfg.cache_kind, cfg.horizon_requests, cfg.seed, controller=ctl, **kw)
    m = result.metrics
    out = output_dir(cfg)
    write_csv(
        out / "per_file.csv",
        ["file_id", "lambda", "requests", "hits", "h_empirical", "h_model"],
        zip(catalog.ids, catalog.rates, m.requests, m.hits, m.h_empirical, alloc.h),
    )
    write_occupancy(out, m)
    if cfg.algorithm != "offline":
        write_csv(out / "trajectory.csv", ["event_index", "time", "alpha", "b_curr"], result.trajectory)
    err = np.abs(m.h_empirical - alloc.h)[m.requests >= 1000]
    results = {
        "alpha_model": alloc.alpha,
        "alpha_tail_mean": result.alpha_tail_mean,
        "mean_occupancy": m.mean_occupancy,
        "violation_frequency_10pct": m.violation_frequency(1.1 * cfg.capacity_files),
        "max_error_files_1000_requests": float(err.max()) if err.size else math.nan,
        "final_time": result.final_time,
    }
    if prov is not None:
        results["provisioned_violations"] = m.provisioned_violations
    write_manifest(out, cfg, "simulate", results)
    return results


def cmd_fluid(cfg: ExperimentConfig) -> dict:
    from .control import _alpha0

    catalog = build_catalog(cfg)
    us = UtilitySet(build_utilities(cfg, catalog, online=True))
    b = cfg.capacity_files
    n = catalog.n
    h0 = np.full(n, min(b / n, 0.5))
    alpha0 = _alpha0(us.utilities, catalog.rates, b / n)
    # unset gains default to unit-rate linearized modes around the optimum
    price = None
    if cfg.algorithm == "primal":
        price = solve_soft_capacity(catalog, us, build_cost(cfg), b, cfg.cache_kind)[1].alpha
    gamma0, k0 = natural_gains(catalog, us, b, cfg.cache_kind, price=price)
    gamma = cfg.optional("gamma_per_file") or gamma0
    k = cfg.optional("gain") or k0
    dt, t_end, every = cfg.optional("dt_time"), cfg.t_end_time, cfg.record_every_steps
    if cfg.algorithm == "dual":
        traj = integrate_dual(catalog, us, b, gamma, alpha0, dt, t_end, every)
    elif cfg.algorithm == "primal":
        traj = integrate_primal(catalog, us, build_cost(cfg), b, k, h0, dt, t_end, cfg.cache_kind, every)
    elif cfg.algorithm == "primal_dual":
        traj = integrate_primal_dual(catalog, us, b, k, gamma, h0, alpha0, dt, t_end, cfg.cache_kind, every)
    else:
        raise ConfigError("fluid runs need algorithm dual, primal or primal_dual")
    out = output_dir(cfg)
    write_csv(out / "trajectory.csv", traj.header(), traj.rows())
    write_csv(
        out / "per_file.csv",
        ["file_id", "lambda", "h_final", "h_model"],
        zip(catalog.ids, catalog.rates, traj.final_h, traj.optimum_h),
    )
    results = {
        "V0": traj.V0,
        "V_end": float(traj.V[-1]),
        "reduction": traj.reduction,
        "monotone": traj.monotone,
        "rejected_steps": traj.rejected,
        "accepted_steps": traj.V.size - 1,
        "alpha_final": traj.final_alpha,
        "alpha_model": traj.optimum_alpha,
    }
    write_manifest(out, cfg, "fluid", results)
    return results


def cmd_market(cfg: ExperimentConfig) -> dict:
    catalog = build_catalog(cfg)
    us = build_utilities(cfg, catalog)
    if any(u.kind != "beta_fair" or u.beta != 1.0 for u in us):
        raise ConfigError("the market needs log utilities (preset proportional, or beta_fair with beta = 1)")
    eq = market_equilibrium(catalog, us, cfg.capacity_files)
    out = output_dir(cfg)
    weights = [u.effective_weight() for u in us]
    write_csv(
        out / "per_file.csv",
        ["file_id", "lambda", "weight", "h_model", "payment"],
        zip(catalog.ids, catalog.rates, weights, eq.h, eq.payments),
    )
    results = {"price": eq.price, "total_payment": float(eq.payments.sum())}
    write_manifest(out, cfg, "market", results)
    return results


def cmd_bound(cfg: ExperimentConfig, sizing: bool = False) -> dict:
    if sizing:
        plan = buffer_sizing(cfg.files, cfg.zipf_exponent, cfg.sizing_scale)
        print(f"buffer={plan.buffer:.6g} headroom={plan.headroom:.6g} provisioned={plan.provisioned} bound={plan.bound:.6g}")
        return {"buffer": plan.buffer, "headroom": plan.headroom, "bound": plan.bound}
    p = violation_bound(cfg.capacity_files, cfg.headroom)
    print(f"{p:.6g}")
    return {"bound": p}


def compare_runs(dir_a: Path, dir_b: Path, min_requests: int = 0):
    """Per-file |value_a - value_b| where a run's value is h_empirical if it has one, else h_model."""
    a, b = read_csv(Path(dir_a) / "per_file.csv"), read_csv(Path(dir_b) / "per_file.csv")
    ids_a = [(r["file_id"], float(r["lambda"])) for r in a]
    ids_b = [(r["file_id"], float(r["lambda"])) for r in b]
    if len(ids_a) != len(ids_b) or any(
        x[0] != y[0] or not math.isclose(x[1], y[1], rel_tol=1e-9) for x, y in zip(ids_a, ids_b)
    ):
        raise CatalogMismatchError(f"{dir_a} and {dir_b} describe different catalogs")

    def value(r):
        return float(r["h_empirical"]) if "h_empirical" in r else float(r["h_model"])

    table = []
    for ra, rb in zip(a, b):
        if "requests" in ra and int(ra["requests"]) < min_requests:
            continue
        va, vb = value(ra), value(rb)
        table.append((ra["file_id"], va, vb, abs(va - vb)))
    errs = np.array([row[3] for row in table]) if table else np.array([0.0])
    summary = {"files": len(table), "max_error": float(np.nanmax(errs)), "mean_error": float(np.nanmean(errs))}
    occ = []
    for d in (dir_a, dir_b):
        p = Path(d) / "occupancy_dist.csv"
        if p.exists():
            rows = read_csv(p)
            occ.append(sum(int(r["size"]) * float(r["pdf"]) for r in rows))
    if len(occ) == 2:
        summary["mean_occupancy_delta"] = occ[0] - occ[1]
    return table, summary


# -- argument parsing ---------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config (a manifest.ini works too)")
    for f in config_fields():
        choices = f.metadata.get("choices")
        hint = " {" + ",".join(c or "''" for c in choices) + "}" if choices else ""
        p.add_argument(
            "--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar=f.name.upper(),
            help=f"[{f.metadata['section']}] {f.metadata['help']}{hint} (default {f.default!r})",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="utilitycache", description="Utility-driven TTL cache experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "offline optimum (dual price, timers, characteristic time)",
        "simulate": "discrete-event TTL cache simulation, fixed timers or an online controller",
        "fluid": "integrate the fluid dynamics of a controller and track its Lyapunov function",
        "market": "market-clearing price and payments for log utilities",
        "bound": "Chernoff bound on occupancy excursions",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)
        if name == "bound":
            p.add_argument("--sizing", action="store_true", help="print the sublinear buffer plan for Zipf(N, s)")
    p = sub.add_parser("compare", help="per-file error between two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--min-requests", type=int, default=0)
    p.add_argument("--table", help="write the per-file error table to this CSV")
    p = sub.add_parser("rerun", help="replay a run from its manifest.ini")
    p.add_argument("manifest")
    p.add_argument("--output-dir", default=None)
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.from_ini(Path(args.config).read_text())
    overrides = {f.name: getattr(args, f.name) for f in config_fields()}
    return cfg.with_overrides(overrides).validate()


def run(command: str, cfg: ExperimentConfig, **kw) -> dict:
    handlers = {"solve": cmd_solve, "simulate": cmd_simulate, "fluid": cmd_fluid, "market": cmd_market, "bound": cmd_bound}
    return handlers[command](cfg, **kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            table, summary = compare_runs(resolve_run(args.run_a), resolve_run(args.run_b), args.min_requests)
            if args.table:
                write_csv(Path(args.table), ["file_id", "value_a", "value_b", "abs_error"], table)
            for k, v in summary.items():
                print(f"{k}={_cell(v)}")
            return 0
        if args.command == "rerun":
            text = Path(args.manifest).read_text()
            parser = configparser.ConfigParser(interpolation=None)
            parser.read_string(text)
            command = parser.get("manifest", "command")
            cfg = ExperimentConfig.from_ini(text)
            if args.output_dir:
                cfg.output_dir = args.output_dir
            results = run(command, cfg.validate())
        else:
            cfg = load_config(args)
            kw = {"sizing": args.sizing} if args.command == "bound" else {}
            results = run(args.command, cfg, **kw)
            if args.command == "bound":
                return 0
    except (ConfigError, InfeasibleCapacityError, BracketError, CatalogMismatchError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for k, v in results.items():
        print(f"{k}={_cell(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
