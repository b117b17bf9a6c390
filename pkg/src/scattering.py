"""
Diferencias de Cauchy del pullback por el flujo libre e^{−itΔ}Ψ(t).

Si Ψ dispersa, e^{−itΔ}Ψ(t) converge en L²; en una ventana finita eso se ve
como diferencias sobre pares diádicos (2^k, 2^{k+1}) que se achican con k.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import RunConfig, config_digest
from src.errors import ConfigError, NonFiniteFieldError, ValidityWindowError
from src.ensemble import EnsembleSetup, map_paths, prepare_setup, rho_moment, write_table
from src.grid_spectral import ComplexField, boundary_mass_fraction, free_propagate, inverse_fft, forward_fft, kinetic_multiplier, mass
from src.integrator import SplitStepPropagator, evolve
from src.noise import BrownianPath, sample_path
from src.potential import PotentialSpec, sample_real

logger = logging.getLogger(__name__)

CAUCHY_COLUMNS = ["s", "t", "rho", "estimate", "stderr", "n_paths"]


def pullback(field: ComplexField, t: float) -> ComplexField:
    """e^{−itΔ} aplicado a Ψ(t)"""
    return free_propagate(field, -t)


def dyadic_pairs(k_min: int, k_max: int, base: float = 1.0) -> List[Tuple[float, float]]:
    """[(base·2^k, base·2^{k+1}) para k_min ≤ k ≤ k_max]"""
    return [(base * 2.0**k, base * 2.0 ** (k + 1)) for k in range(k_min, k_max + 1)]


def default_pairs(T: float) -> List[Tuple[float, float]]:
    k_max = int(np.floor(np.log2(T))) - 1 if T >= 2 else -1
    return dyadic_pairs(0, k_max) if k_max >= 0 else []


@dataclass
class CauchyTable:
    table: pd.DataFrame
    config_digest: str = ""
    master_seed: int = 0
    boundary: Optional[pd.DataFrame] = None

    def select(self, rho: float) -> pd.DataFrame:
        rows = self.table[np.isclose(self.table["rho"], rho)]
        return rows.sort_values(["s", "t"]).reset_index(drop=True)

    def write(self, path: Union[str, Path], fmt: str = "csv") -> Path:
        return write_table(self.table, path, fmt, self.config_digest, self.master_seed)


def _cauchy_path(index: int, setup: EnsembleSetup) -> Tuple[Dict[float, ComplexField], np.ndarray]:
    path = sample_path(setup.master_seed, index, setup.dt, setup.T)
    try:
        trajectory = evolve(setup.initial, setup.spec, path, setup.record_times, setup.V)
    except NonFiniteFieldError as e:
        raise NonFiniteFieldError(f"path {index}: {e}") from e
    pulled = {t: pullback(psi, t) for t, psi in zip(setup.record_times, trajectory.fields)}
    boundary = np.array([boundary_mass_fraction(psi, setup.core_fraction) for psi in trajectory.fields])
    return pulled, boundary


def cauchy_table(
    config: RunConfig,
    time_pairs: Optional[Sequence[Tuple[float, float]]] = None,
    workers: int = 1,
    n_paths: Optional[int] = None,
) -> CauchyTable:
    """
    ‖pullback(Ψ(t),t) − pullback(Ψ(s),s)‖_{L^ρ_ω L²_x} para cada par y cada ρ

    Todos los pares se miden sobre las mismas trayectorias. Se rechazan los
    pares que tocan un tiempo cuya masa en el borde alcanza el umbral de validez.
    """
    pairs = [tuple(map(float, p)) for p in (time_pairs or config.experiment.time_pairs or default_pairs(config.noise.T))]
    if not pairs:
        raise ConfigError("experiment.time_pairs: no time pairs fit inside noise.T")
    for s, t in pairs:
        if s > t:
            raise ConfigError(f"experiment.time_pairs: s={s} > t={t}")
    times = sorted({time for pair in pairs for time in pair})
    setup = prepare_setup(config, record_times=times)
    n_paths = n_paths or config.noise.n_paths
    logger.info(f"🚀 Tabla de Cauchy: {len(pairs)} pares, {n_paths} trayectorias, workers={workers}")

    results = map_paths(_PairReducer(pairs), setup, n_paths, workers)
    diffs = np.stack([r[0] for r in results])
    boundary = np.stack([r[1] for r in results]).max(axis=0)

    threshold = config.ensemble.validity_threshold
    invalid = {t for t, b in zip(setup.record_times, boundary) if b >= threshold}
    rejected = [(s, t) for s, t in pairs if s in invalid or t in invalid]
    if rejected:
        raise ValidityWindowError(f"time pairs outside the validity window: {rejected}")

    rows = []
    for i, (s, t) in enumerate(pairs):
        for rho in config.ensemble.rho:
            estimate, stderr = rho_moment(diffs[:, i], rho)
            rows.append({"s": s, "t": t, "rho": float(rho), "estimate": estimate, "stderr": stderr, "n_paths": n_paths})
    boundary_frame = pd.DataFrame({"t": setup.record_times, "boundary_mass": boundary})
    return CauchyTable(
        table=pd.DataFrame(rows, columns=CAUCHY_COLUMNS),
        config_digest=config_digest(config),
        master_seed=config.noise.master_seed,
        boundary=boundary_frame,
    )


class _PairReducer:
    """Reductor por trayectoria, serializable para los workers de joblib"""

    def __init__(self, pairs: Sequence[Tuple[float, float]]):
        self.pairs = list(pairs)

    def __call__(self, index: int, setup: EnsembleSetup) -> Tuple[np.ndarray, np.ndarray]:
        pulled, boundary = _cauchy_path(index, setup)
        diffs = np.array([np.sqrt(mass(pulled[t] - pulled[s])) for s, t in self.pairs])
        return diffs, boundary


@dataclass(frozen=True)
class CauchyDecrease:
    nonincreasing: bool
    final_ratio: float
    final_small: bool

    @property
    def decreasing(self) -> bool:
        return self.nonincreasing and self.final_small


def cauchy_decrease(table: CauchyTable, rho: float = 2.0, shrink: float = 0.2, n_se: float = 3.0) -> CauchyDecrease:
    """
    Si las entradas no crecen a lo largo de los pares (dentro de n_se errores
    estándar combinados) y si la última queda bajo ``shrink`` veces la primera
    """
    rows = table.select(rho)
    rows = rows[rows["s"] < rows["t"]]
    if len(rows) < 2:
        raise ValueError("need at least two pairs with s < t")
    estimate = rows["estimate"].to_numpy()
    stderr = np.nan_to_num(rows["stderr"].to_numpy())
    combined = np.sqrt(stderr[1:] ** 2 + stderr[:-1] ** 2)
    nonincreasing = bool(np.all(estimate[1:] <= estimate[:-1] + n_se * combined))
    first, last = estimate[0], estimate[-1]
    final_ratio = float(last / first) if first > 0 else float("nan")
    final_small = bool(first > 0 and last <= shrink * first + n_se * np.hypot(stderr[0] * shrink, stderr[-1]))
    return CauchyDecrease(nonincreasing=nonincreasing, final_ratio=final_ratio, final_small=final_small)


def check_triangle(table: CauchyTable, rho: float = 2.0, n_se: float = 3.0) -> List[Tuple[float, float, float]]:
    """Ternas s < r < t con entry(s,t) > entry(s,r) + entry(r,t) + n_se·(stderr combinado)"""
    rows = table.select(rho)
    entries = {(s, t): (e, se) for s, t, e, se in zip(rows["s"], rows["t"], rows["estimate"], np.nan_to_num(rows["stderr"]))}
    violations = []
    for (s, t), (e_st, se_st) in entries.items():
        for (a, r), (e_sr, se_sr) in entries.items():
            if a != s or not s < r < t or (r, t) not in entries:
                continue
            e_rt, se_rt = entries[(r, t)]
            slack = n_se * np.sqrt(se_st**2 + se_sr**2 + se_rt**2)
            if e_st > e_sr + e_rt + slack:
                violations.append((s, r, t))
    return violations


def pullback_duhamel_check(f: ComplexField, spec: PotentialSpec, path: BrownianPath, s: float, t: float) -> float:
    """
    Desajuste relativo entre pullback(Ψ(t),t) − pullback(Ψ(s),s) y el incremento

        −iδ ∫ₛᵗ e^{−irΔ}(VΨ(r)) dB_r − (δ²/2) ∫ₛᵗ e^{−irΔ}(V²Ψ(r)) dr

    con sumas de extremo izquierdo en la malla. El desajuste es error de
    discretización y se achica al refinar la trayectoria.
    """
    if not 0 <= s <= t:
        raise ValueError(f"need 0 ≤ s ≤ t, got s={s}, t={t}")
    if spec.delta == 0:
        # sin ruido el pullback es constante en t
        return 0.0
    k_s, k_t = path.step_index(s), path.step_index(t)
    grid = f.grid
    V = sample_real(spec, grid)
    propagator = SplitStepPropagator(grid, V, spec.delta, path.dt)
    stochastic = np.zeros(grid.shape, dtype=np.complex128)
    drift = np.zeros(grid.shape, dtype=np.complex128)
    start = end = None
    for k, psi in propagator.iterate(f.values, path.increments[:k_t]):
        if k == k_s:
            start = psi
        if k == k_t:
            end = psi
            break
        if k >= k_s:
            # en Fourier e^{−irΔ} es el multiplicador e^{+i|k|²r}
            pull = np.conj(kinetic_multiplier(grid, k * path.dt))
            stochastic += pull * forward_fft(V * psi) * path.increments[k]
            drift += pull * forward_fft(V**2 * psi) * path.dt
    measured = pullback(ComplexField(grid, end), t) - pullback(ComplexField(grid, start), s)
    predicted = ComplexField(grid, inverse_fft(-1j * spec.delta * stochastic - 0.5 * spec.delta**2 * drift))
    scale = np.sqrt(mass(measured))
    if scale == 0:
        return 0.0 if mass(predicted) == 0 else float("inf")
    return float(np.sqrt(mass(measured - predicted)) / scale)
