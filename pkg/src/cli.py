"""
Punto de entrada de línea de comandos: ``python -m src.cli <subcomando> --config RUTA``.

Subcomandos: free-dispersive, simulate, decay, scatter, duhamel, selftest.
Las tablas salen en CSV (o registros JSON con --format json), los reportes en
JSON y los campos como snapshots SLS1. Ningún artefacto lleva timestamp:
configuraciones idénticas dan bytes idénticos.
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import OUTPUT_DIR, CHECK_CAP, REFINEMENT_TOLERANCE, RunConfig, config_digest, load_config, with_overrides
from src.duhamel import (
    apply_baselines,
    calibrate_baselines,
    duhamel_terms,
    ito_isometry_check,
    load_baselines,
    modulated_sweep,
    check_sweep,
    refinement_change,
    remainder_scaling,
    save_baselines,
    term_consistency,
)
from src.ensemble import (
    bootstrap_check,
    build_grid,
    fit_decay,
    free_stats,
    initial_field,
    run_ensemble,
    rho_moment,
    write_table,
)
from src.errors import ConfigError, InvariantViolation, SimulationError
from src.grid_spectral import (
    boundary_mass_fraction,
    free_propagate,
    gaussian_field,
    inner,
    laplacian,
    lp_norm,
    make_grid,
    mass,
    translate,
)
from src.integrator import evolve, strang_step, strong_order
from src.monitoring import RunMonitor, configure_logging
from src.noise import refine, refine_to, restrict, sample_path
from src.potential import PotentialSpec, sample_real, smallness
from src.scattering import cauchy_decrease, cauchy_table, check_triangle, pullback, pullback_duhamel_check
from src.snapshot import write_snapshot

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("free-dispersive", "simulate", "decay", "scatter", "duhamel", "selftest")


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return value.name
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _finite(value):
    if isinstance(value, float) and np.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def write_report(path: Path, report: Dict) -> Path:
    path.write_text(json.dumps(_finite(report), sort_keys=True, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def _stamp(config: RunConfig, grid=None) -> Dict:
    return {
        "config_digest": config_digest(config),
        "master_seed": config.noise.master_seed,
        "smallness": smallness(config.potential, grid if grid is not None else build_grid(config)),
        "delta": config.potential.delta,
    }


def _table_name(stem: str, fmt: str) -> str:
    return f"{stem}.{'json' if fmt == 'json' else 'csv'}"


def _fit_all(stats, config: RunConfig) -> List[Dict]:
    fits = []
    for rho in config.ensemble.rho:
        for q in config.ensemble.q:
            fit = fit_decay(stats, rho, q, config.ensemble.fit_window, config.ensemble.fit_t_min, config.ensemble.confidence)
            fits.append(fit.to_dict())
    return fits


def cmd_free_dispersive(config: RunConfig, args, out: Path) -> int:
    """Flujo libre de la gaussiana, sin ruido: pendiente dispersiva −α para cada q"""
    stats = free_stats(config)
    fits = _fit_all(stats, config)
    stats.write(out / _table_name("free_stats", args.format), args.format)
    report = {**_stamp(config), "fits": fits}
    write_report(out / "fit_report.json", report)
    for fit in fits:
        logger.info(f"📉 q={fit['q']}: pendiente {fit['slope']:.4f}, objetivo {-fit['target_alpha']:.4f}")
    return 0


def cmd_simulate(config: RunConfig, args, out: Path) -> int:
    """Una trayectoria: snapshots SLS1 en cada tiempo registrado y tabla resumen por tiempo"""
    grid = build_grid(config)
    f = initial_field(config, grid)
    path = sample_path(config.noise.master_seed, args.path, config.noise.dt, config.noise.T)
    times = sorted(config.experiment.record_times)
    trajectory = evolve(f, config.potential, path, times)
    rows = []
    for t, psi in zip(trajectory.times, trajectory.fields):
        name = f"psi_path{args.path}_t{t:g}.sls"
        write_snapshot(out / "snapshots" / name, psi)
        row = {"t": t, "mass": mass(psi), "boundary_mass": boundary_mass_fraction(psi, config.ensemble.core_fraction), "snapshot": name}
        for q in config.ensemble.q:
            row[f"norm_q{q:g}"] = lp_norm(psi, q)
        rows.append(row)
    write_table(pd.DataFrame(rows), out / _table_name("trajectory", args.format), args.format,
                config_digest(config), config.noise.master_seed)
    write_report(out / "simulate_report.json", {**_stamp(config, grid), "path": args.path, "mass_drift": trajectory.mass_drift()})
    return 0


def cmd_decay(config: RunConfig, args, out: Path, monitor: Optional[RunMonitor] = None) -> int:
    """Estadísticas del ensamble, ajustes de decaimiento y cantidad bootstrap contra δ = 0"""
    stats = run_ensemble(config, workers=args.workers, monitor=monitor)
    # ningún archivo se escribe si un ajuste falla
    fits = _fit_all(stats, config)
    free = free_stats(config)
    bootstrap = []
    for rho in config.ensemble.rho:
        for q in config.ensemble.q:
            check = bootstrap_check(stats, free, rho, q, config.ensemble.bootstrap_factor)
            bootstrap.append({"rho": rho, "q": q, **asdict(check)})
    stats.write(out / _table_name("ensemble_stats", args.format), args.format)
    report = {**_stamp(config), "fits": fits, "bootstrap": bootstrap}
    write_report(out / "decay_report.json", report)
    return 0


def _pullback_increment(config: RunConfig, f, path, s: float, t: float, halvings: int = 2) -> Dict:
    """Desajuste entre la diferencia de pullbacks y su incremento de Duhamel, en dt y dt/2^halvings"""
    base = restrict(path, t)
    coarse = pullback_duhamel_check(f, config.potential, base, s, t)
    refined = pullback_duhamel_check(f, config.potential, refine_to(base, base.level + halvings), s, t)
    logger.info(f"🔍 Incremento del pullback en [{s:g}, {t:g}]: desajuste {coarse:.3e} → {refined:.3e}")
    return {"s": s, "t": t, "dt": base.dt, "refined_dt": base.dt / 2**halvings,
            "mismatch": coarse, "refined_mismatch": refined, "shrinks": refined <= coarse}


def cmd_scatter(config: RunConfig, args, out: Path) -> int:
    """Tabla de Cauchy sobre los pares de tiempos, banderas de decrecimiento y pullback final"""
    table = cauchy_table(config, workers=args.workers)
    table.write(out / _table_name("cauchy", args.format), args.format)
    summary = {}
    for rho in config.ensemble.rho:
        entry = {"triangle_violations": check_triangle(table, rho)}
        try:
            decrease = cauchy_decrease(table, rho)
            entry.update(asdict(decrease), decreasing=decrease.decreasing)
        except ValueError as e:
            entry["decrease"] = str(e)
        summary[f"rho={rho:g}"] = entry

    grid = build_grid(config)
    f = initial_field(config, grid)
    last = float(table.table["t"].max())
    path = sample_path(config.noise.master_seed, 0, config.noise.dt, config.noise.T)
    psi = evolve(f, config.potential, path, [last]).fields[-1]
    write_snapshot(out / "snapshots" / f"pullback_path0_t{last:g}.sls", pullback(psi, last))
    first = table.select(config.ensemble.rho[0]).iloc[0]
    increment = _pullback_increment(config, f, path, float(first["s"]), float(first["t"]))
    write_report(out / "scatter_report.json", {**_stamp(config, grid), "summary": summary, "pullback_increment": increment})
    return 0


def _duhamel_paths(config: RunConfig, T: float):
    return [sample_path(config.noise.master_seed, i, config.noise.dt, T) for i in range(config.noise.n_paths)]


def _check_sweeps(config: RunConfig, spec: PotentialSpec, grid, paths) -> Dict[str, pd.DataFrame]:
    settings = config.experiment.duhamel
    f = initial_field(config, grid)
    sweeps = {
        kind: check_sweep(kind, f, spec, settings.check_q, settings.n_tuples, settings.check_seed, settings.chain_m, paths)
        for kind in ("exchange", "strong", "variable_small")
    }
    sweeps["modulated"] = modulated_sweep(
        f, spec, paths, settings.check_times, settings.xi, settings.check_q, settings.constants,
        validity_threshold=config.ensemble.validity_threshold, core_fraction=config.ensemble.core_fraction,
    )
    return sweeps


def cmd_duhamel(config: RunConfig, args, out: Path) -> int:
    """Términos de la expansión, escalamiento del resto en δ, isometría de Itô y cocientes contra cotas"""
    settings = config.experiment.duhamel
    grid = build_grid(config)
    f = initial_field(config, grid)
    spec = config.potential
    horizon = max([settings.t, 1.0] + [t for _, t in settings.check_times])
    paths = _duhamel_paths(config, horizon)

    terms = duhamel_terms(f, spec, paths[0], settings.t)
    for name in ("free", "stochastic", "drift", "remainder"):
        write_snapshot(out / "snapshots" / f"duhamel_{name}_t{settings.t:g}.sls", getattr(terms, name))
    scaling = remainder_scaling(f, spec, paths, settings.t, settings.deltas, settings.order)
    isometry = ito_isometry_check(f, spec, settings.t, settings.isometry_paths, config.noise.dt, config.noise.master_seed)

    calibration = _check_sweeps(config, spec.with_delta(0.0), grid, paths)
    if args.calibrate:
        baselines = calibrate_baselines(calibration)
        save_baselines(out / "baselines.json", baselines)
        source = "calibrated"
    elif args.baselines:
        baselines = load_baselines(args.baselines)
        source = str(args.baselines)
    else:
        baselines = calibrate_baselines(calibration)
        source = "in-run"
    sweeps = _check_sweeps(config, spec, grid, paths)
    checks = pd.concat([apply_baselines(frame, baselines) for frame in sweeps.values()], ignore_index=True)
    write_table(checks, out / _table_name("checks", args.format), args.format, config_digest(config), config.noise.master_seed)

    refinement = {}
    if settings.refinement_n:
        for n in settings.refinement_n:
            fine_grid = make_grid(grid.dim, n, grid.box_length)
            fine_f = initial_field(config, fine_grid)
            for kind in ("exchange", "strong"):
                coarse = sweeps[kind]
                fine = check_sweep(kind, fine_f, spec, settings.check_q, settings.n_tuples, settings.check_seed, settings.chain_m)
                refinement[f"{kind}@n={n}"] = refinement_change(coarse, fine)
            fine_modulated = modulated_sweep(
                fine_f, spec, paths, settings.check_times, settings.xi, settings.check_q, settings.constants,
                validity_threshold=config.ensemble.validity_threshold, core_fraction=config.ensemble.core_fraction,
            )
            refinement[f"modulated@n={n}"] = refinement_change(sweeps["modulated"], fine_modulated)

    report = {
        **_stamp(config, grid),
        "t": settings.t,
        "scaling": scaling.to_dict(),
        "term_consistency": term_consistency(f, spec, paths[0], settings.t),
        "isometry": asdict(isometry),
        "isometry_within_3se": isometry.within <= 3.0,
        "baselines": baselines,
        "baseline_source": source,
        "check_cap": CHECK_CAP,
        "checks_passed": bool(checks["passed"].all()),
        "refinement_change": refinement,
        "refinement_tolerance": REFINEMENT_TOLERANCE,
        "refinement_stable": all(change <= REFINEMENT_TOLERANCE for change in refinement.values()),
    }
    write_report(out / "duhamel_report.json", report)
    if not report["checks_passed"]:
        failed = checks[~checks["passed"]]["check"].unique().tolist()
        raise InvariantViolation(f"check ratios above {CHECK_CAP} x baseline: {failed}")
    if not report["refinement_stable"]:
        unstable = sorted(key for key, change in refinement.items() if change > REFINEMENT_TOLERANCE)
        raise InvariantViolation(f"check ratios change more than {REFINEMENT_TOLERANCE:.0%} under grid refinement: {unstable}")
    return 0


def selftest_checks(seed: int = 20240601) -> Dict[str, Dict]:
    """Suite reducida de propiedades en mallas 1-D pequeñas"""
    grid = make_grid(1, 128, 32.0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    checks: Dict[str, Dict] = {}

    worst = 0.0
    for _ in range(20):
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        field = gaussian_field(grid, 1.0).with_values(values)
        t = rng.uniform(-10, 10)
        worst = max(worst, abs(np.sqrt(mass(free_propagate(field, t)) / mass(field)) - 1.0))
    checks["unitarity"] = {"value": worst, "passed": worst < 1e-12}

    f = gaussian_field(grid, 0.5)
    s, t = 0.7, 1.9
    gap = np.sqrt(mass(free_propagate(free_propagate(f, s), t) - free_propagate(f, s + t)) / mass(f))
    checks["group_law"] = {"value": gap, "passed": gap < 1e-12}

    spec = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.1)
    path = sample_path(seed, 0, 0.01, 2.0)
    drift = evolve(f, spec, path, [0.0, 1.0, 2.0]).mass_drift()
    checks["mass_conservation"] = {"value": drift, "passed": drift < 1e-11}

    c = 0.7
    constant = PotentialSpec(shape="constant", amplitude=c, delta=0.3)
    psi = evolve(f, constant, path, [2.0]).fields[-1]
    exact = free_propagate(f, 2.0) * np.exp(-1j * constant.delta * c * path.terminal)
    error = float(np.max(np.abs(psi.values - exact.values)))
    checks["constant_potential"] = {"value": error, "passed": error < 1e-10}

    fine = refine(path)
    pair_gap = float(np.max(np.abs(fine.increments[0::2] + fine.increments[1::2] - path.increments)))
    checks["bridge_pairs"] = {"value": pair_gap, "passed": pair_gap < 1e-14}

    isometry = ito_isometry_check(f, spec, 1.0, 400, 0.02, seed)
    checks["ito_isometry"] = {"value": isometry.rel_error, "passed": isometry.within <= 4.0}

    samples = rng.lognormal(size=500)
    moments = [rho_moment(samples, rho)[0] for rho in (1, 2, 4, 8)]
    checks["rho_monotone"] = {"value": moments, "passed": bool(np.all(np.diff(moments) >= 0))}

    step = strang_step(f, 0.01, 0.0, sample_real(spec, grid), spec.delta)
    step_gap = float(np.sqrt(mass(step - free_propagate(f, 0.01))))
    checks["strang_free_limit"] = {"value": step_gap, "passed": step_gap < 1e-12}

    # e^{itΔ} tiene generador iΔ
    eps = 1e-4
    difference = (free_propagate(f, eps) - free_propagate(f, -eps)) * (1 / (2 * eps)) - laplacian(f) * 1j
    generator_gap = float(np.sqrt(inner(difference, difference).real / inner(laplacian(f), laplacian(f)).real))
    checks["generator"] = {"value": generator_gap, "passed": generator_gap < 1e-6}

    shifted = gaussian_field(grid, 1.0).with_values(rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    commute = translate(free_propagate(shifted, 1.3), 5) - free_propagate(translate(shifted, 5), 1.3)
    shift_gap = float(np.sqrt(mass(commute) / mass(shifted)))
    checks["translation_invariance"] = {"value": shift_gap, "passed": shift_gap < 1e-12}

    order_grid = make_grid(1, 64, 20.0)
    order_paths = [sample_path(seed, i, 0.05, 1.0) for i in range(8)]
    bump = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.5)
    convergence = strong_order(gaussian_field(order_grid, 0.5), bump, order_paths, levels=4)
    checks["strong_order"] = {"value": convergence.order, "passed": bool(0.75 < convergence.order < 1.5)}
    return checks


def cmd_selftest(config: Optional[RunConfig], args, out: Path) -> int:
    seed = args.seed if args.seed is not None else 20240601
    checks = selftest_checks(seed)
    write_report(out / "selftest.json", {"checks": checks, "seed": seed})
    failed = [name for name, check in checks.items() if not check["passed"]]
    for name, check in checks.items():
        print(f"{'✅' if check['passed'] else '❌'} {name}: {check['value']}")
    if failed:
        raise InvariantViolation(f"selftest failures: {failed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slschro", description="Stochastic linear Schrödinger decay toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "selftest")
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=_u64, default=None)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "simulate":
            p.add_argument("--path", type=int, default=0)
        if name == "duhamel":
            p.add_argument("--calibrate", action="store_true")
            p.add_argument("--baselines", type=Path, default=None)
    return parser


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {text}")
    return value


HANDLERS = {
    "free-dispersive": cmd_free_dispersive,
    "simulate": cmd_simulate,
    "scatter": cmd_scatter,
    "duhamel": cmd_duhamel,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    monitor = None
    try:
        config = None
        if args.config is not None:
            config = with_overrides(load_config(args.config), seed=args.seed)
            sample_real(config.potential, build_grid(config))
        if args.workers < 1:
            raise ConfigError(f"--workers must be ≥ 1, got {args.workers}")
        out = args.out or OUTPUT_DIR / args.command
        out.mkdir(parents=True, exist_ok=True)
        logger.info(f"🚀 {args.command} → {out}")

        if args.command == "selftest":
            return cmd_selftest(config, args, out)
        if args.command == "decay":
            monitor = RunMonitor()
            code = cmd_decay(config, args, out, monitor)
            logger.info(f"📊 Monitor: {monitor.get_metrics_summary()}")
            return code
        return HANDLERS[args.command](config, args, out)
    except SimulationError as e:
        if monitor is not None:
            monitor.log_error(type(e).__name__, str(e))
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        # precondiciones de argumentos que la config validada dejó pasar
        logger.error(f"❌ {e}")
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
