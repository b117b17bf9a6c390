"""
Estimaciones Monte Carlo de ‖Ψ(t)‖_{L^ρ_ω L^q_x} y ajustes de decaimiento.

Cada trayectoria es un trabajo independiente indexado; las estadísticas
dependen solo de la semilla maestra, nunca del número de workers.
"""
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.config import (
    FIT_T_MIN,
    MASS_TOLERANCE,
    MIN_FIT_POINTS,
    MIN_FIT_SPAN,
    RunConfig,
    config_digest,
)
from src.errors import ConfigError, InsufficientWindowError, InvariantViolation, NonFiniteFieldError, ValidityWindowError
from src.fitting import loglog_fit
from src.grid_spectral import (
    ComplexField,
    Grid,
    NormSpec,
    boundary_mass_fraction,
    free_propagate,
    gaussian_field,
    lp_norm,
    make_grid,
    norm_alpha,
)
from src.integrator import evolve
from src.monitoring import RunMonitor
from src.noise import mesh_steps, sample_path
from src.potential import PotentialSpec, sample_real, smallness

logger = logging.getLogger(__name__)

STATS_COLUMNS = ["t", "q", "rho", "estimate", "stderr", "n_paths", "valid", "boundary_mass"]


def write_table(frame: pd.DataFrame, path: Union[str, Path], fmt: str, digest: str, master_seed: int) -> Path:
    """Escribir una tabla de resultados sellada con (digest, semilla maestra), sin timestamps"""
    path = Path(path)
    out = frame.copy()
    out["config_digest"] = digest
    out["master_seed"] = int(master_seed)
    if fmt == "json":
        if "q" in out:
            out["q"] = out["q"].map(lambda q: "inf" if np.isinf(q) else q)
        records = out.to_dict(orient="records")
        path.write_text(json.dumps(records, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    else:
        out.to_csv(path, index=False)
    return path


def rho_moment(samples: Sequence[float], rho: float) -> Tuple[float, float]:
    """
    (media de x^ρ)^{1/ρ} y su error estándar por método delta

    Muestras iguales dan stderr exactamente 0; una sola muestra da NaN.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("rho_moment needs at least one sample")
    if not rho >= 1:
        raise ValueError(f"rho must be ≥ 1, got {rho}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite and nonnegative")
    if x.size < 2:
        logger.warning("⚠️ rho_moment con una sola muestra: error estándar NaN")
        return float(x[0]), float("nan")
    if np.ptp(x) == 0:
        return float(x[0]), 0.0
    peak = float(x.max())
    powers = (x / peak) ** rho
    moment = float(np.mean(powers))
    estimate = peak * moment ** (1.0 / rho)
    moment_se = float(np.std(powers, ddof=1)) / np.sqrt(x.size)
    return estimate, estimate * moment_se / (rho * moment)


@dataclass(frozen=True, eq=False)
class EnsembleSetup:
    """Todo lo que un worker necesita para integrar una trayectoria"""

    grid: Grid
    initial: ComplexField
    spec: PotentialSpec
    V: np.ndarray
    record_times: Tuple[float, ...]
    q: Tuple[float, ...]
    master_seed: int
    dt: float
    T: float
    core_fraction: float


@dataclass(frozen=True)
class PathSample:
    index: int
    norms: np.ndarray
    boundary: np.ndarray
    mass_drift: float
    runtime: float


def initial_field(config: RunConfig, grid: Grid) -> ComplexField:
    initial = config.experiment.initial
    return gaussian_field(grid, initial.a, initial.amplitude, initial.center)


def build_grid(config: RunConfig) -> Grid:
    try:
        return make_grid(config.grid.dim, config.grid.n, config.grid.box_length)
    except ValueError as e:
        raise ConfigError(f"grid: {e}") from e


def prepare_setup(config: RunConfig, record_times: Optional[Sequence[float]] = None) -> EnsembleSetup:
    grid = build_grid(config)
    times = tuple(sorted(float(t) for t in (record_times or config.experiment.record_times)))
    noise = config.noise
    try:
        mesh_steps(noise.dt, noise.T)
        V = sample_real(config.potential, grid)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if times and times[-1] > noise.T * (1 + 1e-12):
        raise ConfigError(f"experiment.record_times: {times[-1]} exceeds noise.T={noise.T}")
    return EnsembleSetup(
        grid=grid,
        initial=initial_field(config, grid),
        spec=config.potential,
        V=V,
        record_times=times,
        q=tuple(config.ensemble.q),
        master_seed=noise.master_seed,
        dt=noise.dt,
        T=noise.T,
        core_fraction=config.ensemble.core_fraction,
    )


def simulate_path(index: int, setup: EnsembleSetup) -> PathSample:
    """Integrar la trayectoria ``index`` y reducirla a normas L^q y masa en el borde"""
    started = time.perf_counter()
    path = sample_path(setup.master_seed, index, setup.dt, setup.T)
    try:
        trajectory = evolve(setup.initial, setup.spec, path, setup.record_times, setup.V)
    except NonFiniteFieldError as e:
        raise NonFiniteFieldError(f"path {index}: {e}") from e
    norms = np.array([[lp_norm(psi, q) for q in setup.q] for psi in trajectory.fields])
    boundary = np.array([boundary_mass_fraction(psi, setup.core_fraction) for psi in trajectory.fields])
    return PathSample(
        index=index,
        norms=norms,
        boundary=boundary,
        mass_drift=trajectory.mass_drift(),
        runtime=time.perf_counter() - started,
    )


def map_paths(func: Callable, setup, n_paths: int, workers: int = 1) -> List:
    """Ejecutar func(i, setup) por índice; los resultados vuelven en orden de índice"""
    if workers == 1:
        return [func(index, setup) for index in range(n_paths)]
    return Parallel(n_jobs=workers)(delayed(func)(index, setup) for index in range(n_paths))


@dataclass
class EnsembleStats:
    """
    Estimaciones por (t, q, ρ) con las columnas de STATS_COLUMNS, selladas con
    el digest de configuración y la semilla maestra de origen.
    """

    table: pd.DataFrame
    dim: int
    config_digest: str = ""
    master_seed: int = 0
    smallness: float = 0.0

    def select(self, rho: float, q: float) -> pd.DataFrame:
        mask = np.isclose(self.table["rho"], rho) & np.isclose(self.table["q"], q)
        return self.table[mask].sort_values("t").reset_index(drop=True)

    def write(self, path: Union[str, Path], fmt: str = "csv") -> Path:
        return write_table(self.table, path, fmt, self.config_digest, self.master_seed)


def _stats_table(
    times: Sequence[float],
    qs: Sequence[float],
    rhos: Sequence[float],
    norms: np.ndarray,
    boundary: np.ndarray,
    threshold: float,
) -> pd.DataFrame:
    """norms tiene forma (trayectorias, tiempos, q); boundary, (trayectorias, tiempos)"""
    rows = []
    n_paths = norms.shape[0]
    worst_boundary = boundary.max(axis=0)
    for i, t in enumerate(times):
        for j, q in enumerate(qs):
            for rho in rhos:
                estimate, stderr = rho_moment(norms[:, i, j], rho)
                rows.append(
                    {
                        "t": float(t),
                        "q": float(q),
                        "rho": float(rho),
                        "estimate": estimate,
                        "stderr": stderr,
                        "n_paths": int(n_paths),
                        "valid": bool(worst_boundary[i] < threshold),
                        "boundary_mass": float(worst_boundary[i]),
                    }
                )
    return pd.DataFrame(rows, columns=STATS_COLUMNS)


def check_rho_monotone(table: pd.DataFrame, rtol: float = 1e-12) -> None:
    """Desigualdad de medias: la estimación no decrece en ρ con (t, q) fijos"""
    for (t, q), group in table.groupby(["t", "q"], sort=True):
        estimates = group.sort_values("rho")["estimate"].to_numpy()
        if np.any(np.diff(estimates) < -rtol * np.abs(estimates[1:])):
            raise InvariantViolation(f"rho-moment decreases in rho at t={t}, q={q}: {estimates.tolist()}")


def check_conservation(stats: EnsembleStats, reference: float, rtol: float = 1e-10) -> None:
    """Las filas ρ = q = 2 deben coincidir con ‖f‖₂"""
    rows = stats.select(2.0, 2.0)
    if rows.empty or reference == 0:
        return
    error = np.max(np.abs(rows["estimate"].to_numpy() / reference - 1.0))
    if error > rtol:
        raise InvariantViolation(f"L² norm not conserved: relative error {error:.2e}")


def run_ensemble(
    config: RunConfig,
    workers: int = 1,
    monitor: Optional[RunMonitor] = None,
    n_paths: Optional[int] = None,
) -> EnsembleStats:
    """
    Integrar el ensamble configurado y reducirlo a EnsembleStats

    Args:
        config: configuración validada
        workers: número de workers de joblib (no cambia el resultado)
        monitor: RunMonitor opcional, recibe un registro por trayectoria
        n_paths: reemplaza config.noise.n_paths

    Returns:
        EnsembleStats con una fila por (t, q, ρ)
    """
    setup = prepare_setup(config)
    n_paths = n_paths or config.noise.n_paths
    logger.info(f"🚀 Ensamble: {n_paths} trayectorias, malla {setup.grid.n}, δ={setup.spec.delta}, workers={workers}")
    samples: List[PathSample] = map_paths(simulate_path, setup, n_paths, workers)

    for sample in samples:
        if monitor is not None:
            monitor.log_path(sample.index, sample.runtime, sample.mass_drift, float(sample.boundary[-1]))
        if sample.mass_drift > MASS_TOLERANCE:
            raise InvariantViolation(f"path {sample.index}: mass drift {sample.mass_drift:.2e}")

    norms = np.stack([s.norms for s in samples])
    boundary = np.stack([s.boundary for s in samples])
    table = _stats_table(
        setup.record_times,
        setup.q,
        config.ensemble.rho,
        norms,
        boundary,
        config.ensemble.validity_threshold,
    )
    stats = EnsembleStats(
        table=table,
        dim=setup.grid.dim,
        config_digest=config_digest(config),
        master_seed=config.noise.master_seed,
        smallness=smallness(config.potential, setup.grid),
    )
    check_rho_monotone(table)
    check_conservation(stats, lp_norm(setup.initial, 2.0))
    return stats


def free_stats(config: RunConfig, record_times: Optional[Sequence[float]] = None) -> EnsembleStats:
    """Flujo determinista δ = 0 en la malla configurada: una sola trayectoria, stderr 0"""
    grid = build_grid(config)
    f = initial_field(config, grid)
    times = tuple(sorted(float(t) for t in (record_times or config.experiment.record_times)))
    fields = [free_propagate(f, t) for t in times]
    norms = np.array([[[lp_norm(psi, q) for q in config.ensemble.q] for psi in fields]])
    boundary = np.array([[boundary_mass_fraction(psi, config.ensemble.core_fraction) for psi in fields]])
    table = _stats_table(times, config.ensemble.q, config.ensemble.rho, norms, boundary, config.ensemble.validity_threshold)
    table["stderr"] = 0.0
    return EnsembleStats(
        table=table,
        dim=grid.dim,
        config_digest=config_digest(config),
        master_seed=config.noise.master_seed,
        smallness=0.0,
    )


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    ci: float
    window: Tuple[float, float]
    target_alpha: float
    rho: float
    q: float
    n_points: int
    bootstrap_range: bool
    config_digest: str = ""

    def deviation(self) -> float:
        return abs(self.slope + self.target_alpha)

    def to_dict(self) -> dict:
        report = asdict(self)
        report["window"] = list(self.window)
        report["q"] = "inf" if np.isinf(self.q) else self.q
        return report


def _fit_rows(stats: EnsembleStats, rho: float, q: float, window: Optional[Tuple[float, float]], t_min: float) -> pd.DataFrame:
    rows = stats.select(rho, q)
    lower, upper = (t_min, np.inf) if window is None else (max(window[0], t_min), window[1])
    inside = rows[(rows["t"] >= lower) & (rows["t"] <= upper) & (rows["t"] > 0)]
    dropped = int((~inside["valid"]).sum())
    if dropped:
        logger.warning(f"⚠️ {dropped} puntos fuera de la ventana de validez excluidos del ajuste (rho={rho}, q={q})")
    return inside[inside["valid"]]


def fit_decay(
    stats: EnsembleStats,
    rho: float,
    q: float,
    window: Optional[Tuple[float, float]] = None,
    t_min: float = FIT_T_MIN,
    confidence: float = 0.95,
) -> DecayFit:
    """
    Ajuste log-log ponderado de la estimación contra t sobre puntos válidos

    Los pesos son el inverso del error relativo al cuadrado; un stderr nulo
    (corridas deterministas) deja el ajuste sin pesos. Lanza
    InsufficientWindowError si no hay MIN_FIT_POINTS puntos que cubran un
    factor MIN_FIT_SPAN en t.
    """
    rows = _fit_rows(stats, rho, q, window, t_min)
    if len(rows) < MIN_FIT_POINTS:
        raise InsufficientWindowError(
            f"only {len(rows)} valid points in the fit window for rho={rho}, q={q} (need {MIN_FIT_POINTS})"
        )
    t = rows["t"].to_numpy()
    estimate = rows["estimate"].to_numpy()
    stderr = rows["stderr"].to_numpy()
    if t.max() / t.min() < MIN_FIT_SPAN:
        raise InsufficientWindowError(f"fit window [{t.min():g}, {t.max():g}] spans less than a factor {MIN_FIT_SPAN:g}")
    if np.any(estimate <= 0):
        raise ValueError("decay fit needs positive estimates")
    weights = None
    if np.all(np.isfinite(stderr)) and np.all(stderr > 0):
        weights = (estimate / stderr) ** 2
    fit = loglog_fit(t, estimate, weights, confidence)
    norm = NormSpec(q=q, rho=rho, dim=stats.dim)
    result = DecayFit(
        slope=fit.slope,
        intercept=fit.intercept,
        ci=fit.slope_halfwidth,
        window=(float(t.min()), float(t.max())),
        target_alpha=norm.alpha,
        rho=float(rho),
        q=float(q),
        n_points=fit.n_points,
        bootstrap_range=norm.bootstrap_range,
        config_digest=stats.config_digest,
    )
    logger.info(
        f"📉 rho={rho}, q={q}: pendiente {fit.slope:.4f} ± {fit.slope_halfwidth:.4f} "
        f"(objetivo {-norm.alpha:.4f}) en t ∈ [{t.min():g}, {t.max():g}]"
    )
    return result


def bootstrap_sup(stats: EnsembleStats, rho: float, q: float) -> float:
    """sup de t^α · estimación sobre los t > 0 válidos"""
    rows = stats.select(rho, q)
    rows = rows[rows["valid"] & (rows["t"] > 0)]
    if rows.empty:
        raise ValidityWindowError(f"no valid record times for rho={rho}, q={q}")
    alpha = norm_alpha(stats.dim, q)
    return float(np.max(rows["t"].to_numpy() ** alpha * rows["estimate"].to_numpy()))


@dataclass(frozen=True)
class BootstrapCheck:
    sup: float
    free_sup: float
    ratio: float
    factor: float
    passed: bool


def bootstrap_check(stats: EnsembleStats, free: EnsembleStats, rho: float, q: float, factor: float = 2.0) -> BootstrapCheck:
    """Comparar sup t^α·estimación contra su contraparte δ = 0"""
    sup = bootstrap_sup(stats, rho, q)
    free_sup = bootstrap_sup(free, rho, q)
    ratio = sup / free_sup if free_sup > 0 else float("inf")
    passed = ratio <= factor
    if not passed:
        logger.warning(f"🚨 cociente de la cantidad bootstrap {ratio:.3f} supera {factor:g} (rho={rho}, q={q})")
    return BootstrapCheck(sup=sup, free_sup=free_sup, ratio=ratio, factor=factor, passed=passed)
