"""
Trayectorias brownianas reproducibles por semilla en mallas uniformes, con
refinamiento por puente.

Las normales están fijadas: un generador Philox con clave
SeedSequence(master_seed, spawn_key=(index, level)) entrega palabras de 64 bits,
cada palabra conserva sus 53 bits altos como uniforme y Box-Muller convierte
cada par (u1, u2) en (r cos θ, r sin θ). Nada depende del muestreador normal de
numpy: una trayectoria es función pura de (seed, index, dt, T, level).
"""
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

_MESH_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Una realización de B en la malla {k·dt : 0 ≤ k ≤ T/dt}"""

    master_seed: int
    index: int
    dt: float
    T: float
    increments: np.ndarray
    level: int = 0

    @property
    def n_steps(self) -> int:
        return int(self.increments.size)

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def values(self) -> np.ndarray:
        """B_k en la malla, desde B_0 = 0"""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    @property
    def terminal(self) -> float:
        return float(np.sum(self.increments))

    def step_index(self, t: float) -> int:
        """Índice de malla de t; falla si t no es un punto de la malla"""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > _MESH_TOLERANCE * max(1.0, abs(t)) or not 0 <= k <= self.n_steps:
            raise ValueError(f"t={t} is not on the mesh of step {self.dt} up to T={self.T}")
        return k


def _bit_generator(master_seed: int, index: int, level: int) -> np.random.Philox:
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(int(index), int(level)))
    return np.random.Philox(sequence)


def standard_normals(master_seed: int, index: int, level: int, count: int) -> np.ndarray:
    """Normales N(0, 1) fijadas para un flujo (seed, index, level)"""
    if count == 0:
        return np.empty(0)
    pairs = (count + 1) // 2
    words = _bit_generator(master_seed, index, level).random_raw(2 * pairs)
    uniforms = (words >> np.uint64(11)).astype(np.float64) * 2.0**-53
    # u1 en (0, 1] mantiene finito el logaritmo
    u1 = 1.0 - uniforms[0::2]
    u2 = uniforms[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    draws = np.empty(2 * pairs)
    draws[0::2] = radius * np.cos(angle)
    draws[1::2] = radius * np.sin(angle)
    return draws[:count]


def mesh_steps(dt: float, T: float) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not T >= 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > _MESH_TOLERANCE * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return steps


def sample_path(master_seed: int, index: int, dt: float, T: float) -> BrownianPath:
    """
    Generar la trayectoria ``index`` del ensamble con clave ``master_seed``

    Args:
        master_seed: semilla de 64 bits del ensamble
        index: número de trayectoria dentro del ensamble
        dt: paso de malla
        T: horizonte, múltiplo entero de dt

    Returns:
        BrownianPath con round(T/dt) incrementos de varianza dt
    """
    steps = mesh_steps(dt, T)
    increments = np.sqrt(dt) * standard_normals(master_seed, index, 0, steps)
    return BrownianPath(master_seed=master_seed, index=index, dt=float(dt), T=float(T), increments=increments)


def refine(path: BrownianPath) -> BrownianPath:
    """
    Partir la malla a la mitad insertando puntos medios por puente browniano

    Cada incremento grueso b en [t, t+dt] se parte en b/2 + √(dt/4)·z y el
    resto; cada par refinado vuelve a sumar b.
    """
    level = path.level + 1
    z = standard_normals(path.master_seed, path.index, level, path.n_steps)
    first = 0.5 * path.increments + np.sqrt(path.dt / 4.0) * z
    fine = np.empty(2 * path.n_steps)
    fine[0::2] = first
    fine[1::2] = path.increments - first
    return BrownianPath(
        master_seed=path.master_seed,
        index=path.index,
        dt=path.dt / 2.0,
        T=path.T,
        increments=fine,
        level=level,
    )


def refine_to(path: BrownianPath, level: int) -> BrownianPath:
    while path.level < level:
        path = refine(path)
    return path


def restrict(path: BrownianPath, T: float) -> BrownianPath:
    """La misma trayectoria cortada en un horizonte anterior, sobre su propia malla"""
    steps = path.step_index(T)
    return BrownianPath(
        master_seed=path.master_seed,
        index=path.index,
        dt=path.dt,
        T=steps * path.dt,
        increments=path.increments[:steps].copy(),
        level=path.level,
    )
