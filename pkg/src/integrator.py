"""
Integración split-step, unitaria trayectoria a trayectoria, de

    i ∂_t Ψ + ΔΨ = δ V Ψ Ḃ − (i/2) δ² V² Ψ        (Itô)

Con la corrección de Itô queda la ecuación de Stratonovich
dΨ = iΔΨ dt − iδVΨ∘dB, cuyo flujo de ruido en un paso es multiplicar por
exp(−iδ V ΔB). Cada paso de Strang es medio paso libre, fase de ruido con el
incremento completo y medio paso libre; cada subpaso es unimodular en su base.
"""
import logging
import time
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import NonFiniteFieldError
from src.fitting import LogLogFit, loglog_fit
from src.grid_spectral import ComplexField, Grid, forward_fft, inverse_fft, free_propagate, kinetic_multiplier, mass
from src.noise import BrownianPath, refine, refine_to
from src.potential import PotentialSpec, sample_real

logger = logging.getLogger(__name__)

PotentialValues = Union[ComplexField, np.ndarray]


def _real_values(V: PotentialValues) -> np.ndarray:
    values = V.values if isinstance(V, ComplexField) else np.asarray(V)
    if np.iscomplexobj(values):
        if np.any(values.imag != 0):
            raise ValueError("potential values must be real")
        values = values.real
    return values


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ψ registrado en tiempos de malla de una trayectoria browniana"""

    times: Tuple[float, ...]
    fields: Tuple[ComplexField, ...]
    master_seed: int
    index: int
    dt: float

    def at(self, t: float) -> ComplexField:
        for time_, field in zip(self.times, self.fields):
            if abs(time_ - t) <= 1e-9 * max(1.0, abs(t)):
                return field
        raise KeyError(f"t={t} was not recorded")

    def masses(self) -> np.ndarray:
        return np.array([mass(field) for field in self.fields])

    def mass_drift(self) -> float:
        """Mayor desviación relativa de ‖Ψ(t)‖₂² respecto del primer registro"""
        masses = self.masses()
        if masses.size == 0 or masses[0] == 0:
            return 0.0
        return float(np.max(np.abs(masses / masses[0] - 1.0)))


def noise_phase_step(field: ComplexField, V_field: PotentialValues, delta: float, dB: float) -> ComplexField:
    """Flujo exacto del ruido Ψ ↦ exp(−iδ V ΔB) Ψ"""
    if delta == 0 or dB == 0:
        return field
    if not np.isfinite(dB):
        raise ValueError(f"increment must be finite, got {dB}")
    return field.with_values(field.values * np.exp(-1j * delta * dB * _real_values(V_field)))


def strang_step(field: ComplexField, dt: float, dB: float, V_field: PotentialValues, delta: float) -> ComplexField:
    """Un paso libre/ruido/libre de largo dt con todo el incremento en el punto medio"""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    half = free_propagate(field, dt / 2)
    return free_propagate(noise_phase_step(half, V_field, delta, dB), dt / 2)


class SplitStepPropagator:
    """
    Pasos de Strang fusionados con malla, potencial, acoplamiento y paso fijos

    Los medios pasos libres consecutivos se funden en un multiplicador completo:
    cada paso cuesta una FFT directa y una inversa; cada registro, una inversa más.
    """

    def __init__(self, grid: Grid, V_values: np.ndarray, delta: float, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.V = _real_values(V_values)
        self.delta = float(delta)
        self.dt = float(dt)
        self.half = kinetic_multiplier(grid, dt / 2)
        self.full = kinetic_multiplier(grid, dt)

    def run(self, values: np.ndarray, increments: np.ndarray, record_steps: Iterable[int]) -> Dict[int, np.ndarray]:
        """Integrar len(increments) pasos desde ``values``; devuelve los arreglos registrados"""
        wanted = set(int(k) for k in record_steps)
        records: Dict[int, np.ndarray] = {}
        if 0 in wanted:
            records[0] = np.array(values, dtype=np.complex128, copy=True)
        spectrum = forward_fft(values)
        for k, dB in enumerate(increments, start=1):
            spectrum = self.step_spectrum(spectrum, dB, first=k == 1, step=k)
            if k in wanted:
                records[k] = inverse_fft(spectrum * self.half)
        return records

    def iterate(self, values: np.ndarray, increments: np.ndarray) -> Iterator[Tuple[int, np.ndarray]]:
        """Entregar (k, Ψ_k) tras cada paso, empezando por (0, values)"""
        yield 0, np.asarray(values, dtype=np.complex128)
        spectrum = forward_fft(values)
        for k, dB in enumerate(increments, start=1):
            spectrum = self.step_spectrum(spectrum, dB, first=k == 1, step=k)
            yield k, inverse_fft(spectrum * self.half)

    def step_spectrum(self, spectrum: np.ndarray, dB: float, first: bool, step: int) -> np.ndarray:
        """Un paso fusionado sobre el espectro; el medio paso de cierre queda pendiente"""
        psi = inverse_fft(spectrum * (self.half if first else self.full))
        if self.delta != 0 and dB != 0:
            psi = psi * np.exp(-1j * self.delta * dB * self.V)
        if not np.isfinite(psi).all():
            raise NonFiniteFieldError(f"non-finite field at step {step} (t={step * self.dt:.6g})")
        return forward_fft(psi)


def _record_steps(path: BrownianPath, record_times: Sequence[float]) -> List[int]:
    times = [float(t) for t in record_times]
    if not times:
        raise ValueError("record_times must not be empty")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"record_times must be strictly increasing, got {times}")
    return [path.step_index(t) for t in times]


def evolve(
    f: ComplexField,
    spec: PotentialSpec,
    path: BrownianPath,
    record_times: Sequence[float],
    V_values: Optional[np.ndarray] = None,
) -> Trajectory:
    """
    Integrar Ψ(0) = f a lo largo de ``path`` y registrar Ψ en ``record_times``

    Args:
        f: campo inicial
        spec: potencial y acoplamiento δ
        path: trayectoria browniana cuya malla fija el paso
        record_times: tiempos de malla crecientes
        V_values: potencial ya muestreado en la malla de f (desde spec si None)

    Returns:
        Trajectory con un campo por tiempo registrado
    """
    steps = _record_steps(path, record_times)
    V = sample_real(spec, f.grid) if V_values is None else V_values
    propagator = SplitStepPropagator(f.grid, V, spec.delta, path.dt)
    started = time.perf_counter()
    arrays = propagator.run(f.values, path.increments[: steps[-1]], steps)
    fields = tuple(f if k == 0 else ComplexField(f.grid, arrays[k]) for k in steps)
    trajectory = Trajectory(
        times=tuple(k * path.dt for k in steps),
        fields=fields,
        master_seed=path.master_seed,
        index=path.index,
        dt=path.dt,
    )
    logger.debug(
        f"Trayectoria {path.index}: {steps[-1]} pasos en {time.perf_counter() - started:.3f}s, "
        f"deriva de masa {trajectory.mass_drift():.2e}"
    )
    return trajectory


def final_state(f: ComplexField, spec: PotentialSpec, path: BrownianPath, V_values: Optional[np.ndarray] = None) -> ComplexField:
    return evolve(f, spec, path, [path.n_steps * path.dt], V_values).fields[-1]


def strong_error(
    f: ComplexField,
    spec: PotentialSpec,
    path: BrownianPath,
    dt: Optional[float] = None,
    V_values: Optional[np.ndarray] = None,
) -> float:
    """
    ‖Ψ_dt(T) − Ψ_{dt/2}(T)‖₂; la corrida fina usa refine(path)

    ``dt`` elige antes un refinamiento por puente de ``path``; debe ser path.dt/2^k.
    """
    if dt is not None:
        halvings = int(round(np.log2(path.dt / dt))) if dt > 0 else -1
        if halvings < 0 or abs(path.dt / 2**halvings - dt) > 1e-12 * dt:
            raise ValueError(f"dt={dt} is not a dyadic refinement of the path step {path.dt}")
        path = refine_to(path, path.level + halvings)
    V = sample_real(spec, f.grid) if V_values is None else V_values
    coarse = final_state(f, spec, path, V)
    fine = final_state(f, spec, refine(path), V)
    return float(np.sqrt(mass(coarse - fine)))


@dataclass(frozen=True)
class StrongConvergence:
    dts: Tuple[float, ...]
    errors: Tuple[float, ...]
    fit: Optional[LogLogFit]

    @property
    def order(self) -> float:
        return float("nan") if self.fit is None else self.fit.slope


def strong_order(
    f: ComplexField,
    spec: PotentialSpec,
    paths: Sequence[BrownianPath],
    levels: int = 4,
) -> StrongConvergence:
    """
    Errores RMS de autoconvergencia sobre ``paths`` en refinamientos sucesivos

    La pendiente ajustada del error contra dt es el orden fuerte; no se ajusta
    si los errores quedan a nivel de redondeo (δ = 0 o potencial constante).
    """
    if levels < 2:
        raise ValueError("need at least two refinement levels to fit an order")
    V = sample_real(spec, f.grid)
    current = list(paths)
    dts, errors = [], []
    for _ in range(levels):
        squares = [strong_error(f, spec, path, V_values=V) ** 2 for path in current]
        dts.append(current[0].dt)
        errors.append(float(np.sqrt(np.mean(squares))))
        current = [refine(path) for path in current]
    # errores a nivel de redondeo: esquema exacto para este potencial
    floor = 1e-12 * np.sqrt(mass(f))
    fit = loglog_fit(dts, errors) if all(e > floor for e in errors) else None
    if fit is not None:
        logger.info(f"📈 Orden fuerte {fit.slope:.3f} ± {fit.slope_halfwidth:.3f} con dt {dts[0]:g}..{dts[-1]:g}")
    return StrongConvergence(dts=tuple(dts), errors=tuple(errors), fit=fit)
