"""
Mallas periódicas, campos complejos y el propagador libre exacto e^{itΔ}

El toro [-L/2, L/2)^d reemplaza a R^d. Toda norma es una suma de Riemann con
peso de celda h^d, así los valores en la malla aproximan las normas continuas,
y la transformada de Fourier sigue la convención del análisis

    f̂(k) = (2π)^{-d} ∫ f(x) e^{-i k·x} dx,      f(x) = ∫ f̂(k) e^{i k·x} dk.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft
from scipy.special import erfc

from src.config import FFT_WORKERS
from src.errors import NonFiniteFieldError

logger = logging.getLogger(__name__)

Number = Union[int, float]


def _is_fft_size(n: int) -> bool:
    """n ≥ 8 y n es 2^k o 3·2^k"""
    if n < 8:
        return False
    m = n // 3 if n % 3 == 0 else n
    return m & (m - 1) == 0


def _per_axis(value, dim: int, name: str) -> tuple:
    if np.isscalar(value):
        return (value,) * dim
    value = tuple(value)
    if len(value) != dim:
        raise ValueError(f"{name} needs {dim} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class Grid:
    """
    Malla periódica uniforme en [-L/2, L/2)^d

    Args:
        dim: dimensión espacial (1, 2 o 3)
        n: puntos por eje
        box_length: lado de la caja por eje
    """

    dim: int
    n: Tuple[int, ...]
    box_length: Tuple[float, ...]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n

    @property
    def n_points(self) -> int:
        return int(np.prod(self.n))

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array(self.box_length) / np.array(self.n)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            -length / 2 + h * np.arange(n)
            for n, length, h in zip(self.n, self.box_length, self.spacing)
        )

    @cached_property
    def frequency_axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            2 * np.pi * sp_fft.fftfreq(n, d=h) for n, h in zip(self.n, self.spacing)
        )

    def _broadcast(self, axis: int, values: np.ndarray) -> np.ndarray:
        shape = [1] * self.dim
        shape[axis] = values.size
        return values.reshape(shape)

    @cached_property
    def k_squared(self) -> np.ndarray:
        total = np.zeros(self.shape)
        for axis, k in enumerate(self.frequency_axes):
            total = total + self._broadcast(axis, k) ** 2
        return total

    def radius_squared(self, center: Optional[Sequence[float]] = None) -> np.ndarray:
        """|x - c|^2 evaluado en la malla"""
        center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        total = np.zeros(self.shape)
        for axis, x in enumerate(self.axes):
            total = total + self._broadcast(axis, x - center[axis]) ** 2
        return total

    def phase_plane(self, xi: Sequence[float]) -> np.ndarray:
        """⟨ξ, x⟩ en la malla"""
        total = np.zeros(self.shape)
        for axis, x in enumerate(self.axes):
            total = total + self._broadcast(axis, xi[axis] * x)
        return total


@dataclass(frozen=True)
class ComplexField:
    """Valores complejos sobre una malla, en orden row-major, siempre finitos"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            if values.size != self.grid.n_points:
                raise ValueError(
                    f"field has {values.size} values, grid has {self.grid.n_points} points"
                )
            values = values.reshape(self.grid.shape)
        if not np.isfinite(values).all():
            raise NonFiniteFieldError("field contains NaN or Inf values")
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.grid, values)

    def __add__(self, other: "ComplexField") -> "ComplexField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: complex) -> "ComplexField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "ComplexField":
        return self.with_values(-self.values)


@dataclass(frozen=True)
class NormSpec:
    """Exponentes de la norma mixta L^ρ_ω L^q_x y tasa de decaimiento α = d(1/2 - 1/q)"""

    q: float
    rho: float = 2.0
    dim: int = 3

    def __post_init__(self):
        if not self.q >= 2:
            raise ValueError(f"q must be ≥ 2, got {self.q}")
        if not self.rho >= 2:
            raise ValueError(f"rho must be ≥ 2, got {self.rho}")

    @property
    def p(self) -> float:
        return 1.0 if np.isinf(self.q) else self.q / (self.q - 1.0)

    @property
    def alpha(self) -> float:
        return self.dim * (0.5 - 1.0 / self.q)

    @property
    def bootstrap_range(self) -> bool:
        """Si d(1/2 - 1/q) > 1"""
        return self.alpha > 1.0


def norm_alpha(dim: int, q: float) -> float:
    return dim * (0.5 - 1.0 / q)


def make_grid(d: int, n: Union[int, Sequence[int]], L: Union[Number, Sequence[Number]]) -> Grid:
    """
    Construir una malla periódica

    Args:
        d: dimensión, de 1 a 3
        n: puntos por eje (2^k o 3·2^k, al menos 8)
        L: largo de la caja por eje

    Returns:
        Grid con volumen de celda prod(L/n)
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    sizes = tuple(int(v) for v in _per_axis(n, d, "n"))
    lengths = tuple(float(v) for v in _per_axis(L, d, "L"))
    for size in sizes:
        if not _is_fft_size(size):
            raise ValueError(f"n={size} is not a power of two (or three times one), n ≥ 8")
    for length in lengths:
        if not length > 0:
            raise ValueError(f"box length must be positive, got {length}")
    return Grid(dim=d, n=sizes, box_length=lengths)


def forward_fft(values: np.ndarray) -> np.ndarray:
    return sp_fft.fftn(values, workers=FFT_WORKERS)


def inverse_fft(values: np.ndarray) -> np.ndarray:
    return sp_fft.ifftn(values, workers=FFT_WORKERS)


def lp_norm(field: ComplexField, p: float) -> float:
    """Norma L^p por suma de Riemann (Σ|v|^p h^d)^{1/p}; máximo de la malla si p = ∞"""
    if not p >= 1:
        raise ValueError(f"p must lie in [1, ∞], got {p}")
    modulus = np.abs(field.values)
    peak = float(modulus.max()) if modulus.size else 0.0
    if peak == 0.0:
        return 0.0
    if np.isinf(p):
        return peak
    # escalado por el máximo para que p grande no desborde
    total = np.sum((modulus / peak) ** p) * field.grid.cell_volume
    return float(peak * total ** (1.0 / p))


def inner(f: ComplexField, g: ComplexField) -> complex:
    return complex(np.vdot(f.values, g.values) * f.grid.cell_volume)


def mass(field: ComplexField) -> float:
    """‖f‖₂²."""
    return float(np.sum(np.abs(field.values) ** 2) * field.grid.cell_volume)


def kinetic_multiplier(grid: Grid, t: float) -> np.ndarray:
    """Símbolo espectral e^{-i|k|²t} de e^{itΔ}"""
    return np.exp(-1j * grid.k_squared * t)


def free_propagate(field: ComplexField, t: float) -> ComplexField:
    """Aplicar e^{itΔ} exactamente sobre los modos de la malla (t puede ser negativo)"""
    if t == 0:
        return field
    spectrum = forward_fft(field.values) * kinetic_multiplier(field.grid, t)
    return field.with_values(inverse_fft(spectrum))


def laplacian(field: ComplexField) -> ComplexField:
    return field.with_values(inverse_fft(-field.grid.k_squared * forward_fft(field.values)))


def _origin_phase(grid: Grid) -> np.ndarray:
    origin = [axis[0] for axis in grid.axes]
    total = np.zeros(grid.shape)
    for axis, k in enumerate(grid.frequency_axes):
        total = total + grid._broadcast(axis, k * origin[axis])
    return np.exp(-1j * total)


def to_fourier(field: ComplexField) -> np.ndarray:
    """Coeficientes f̂(k) con la normalización del análisis, en orden FFT"""
    grid = field.grid
    scale = grid.cell_volume / (2 * np.pi) ** grid.dim
    return scale * _origin_phase(grid) * forward_fft(field.values)


def from_fourier(grid: Grid, coefficients: np.ndarray) -> ComplexField:
    """Inversa de to_fourier"""
    scale = grid.cell_volume / (2 * np.pi) ** grid.dim
    return ComplexField(grid, inverse_fft(coefficients / (scale * _origin_phase(grid))))


def fourier_l1(field: ComplexField) -> float:
    """‖f̂‖_{L¹} como suma en la red con peso (2π/L)^d"""
    spectrum = np.abs(forward_fft(field.values))
    return float(np.sum(spectrum) / field.grid.n_points)


def snap_frequency(grid: Grid, xi: Union[Number, Sequence[Number]]) -> Tuple[float, ...]:
    """Redondear ξ al punto más cercano de la red (2π/L)Z^d"""
    xi = _per_axis(xi, grid.dim, "xi")
    return tuple(
        2 * np.pi * round(value * length / (2 * np.pi)) / length
        for value, length in zip(xi, grid.box_length)
    )


def modulate(field: ComplexField, xi: Union[Number, Sequence[Number]]) -> ComplexField:
    """Multiplicar por e^{i⟨ξ,x⟩}; ξ debe ser una frecuencia de la red"""
    grid = field.grid
    xi = _per_axis(xi, grid.dim, "xi")
    snapped = snap_frequency(grid, xi)
    for value, lattice, length in zip(xi, snapped, grid.box_length):
        if abs(value - lattice) * length / (2 * np.pi) > 1e-9:
            raise ValueError(f"ξ={xi} is off the frequency lattice; snap it first")
    if not any(snapped):
        return field
    return field.with_values(field.values * np.exp(1j * grid.phase_plane(snapped)))


def translate(field: ComplexField, cells: Union[int, Sequence[int]]) -> ComplexField:
    """Traslación periódica por celdas enteras: (τf)(x) = f(x - cells·h)"""
    shifts = tuple(int(c) for c in _per_axis(cells, field.grid.dim, "cells"))
    return field.with_values(np.roll(field.values, shifts, axis=tuple(range(field.grid.dim))))


def _core_slices(grid: Grid, core_fraction: float) -> Tuple[slice, ...]:
    slices = []
    for x, length, h in zip(grid.axes, grid.box_length, grid.spacing):
        half = core_fraction * length / 2
        tol = 1e-9 * h
        inside = np.nonzero((x >= -half - tol) & (x < half - tol))[0]
        if inside.size == 0:
            slices.append(slice(0, 0))
        else:
            slices.append(slice(int(inside[0]), int(inside[-1]) + 1))
    return tuple(slices)


def boundary_mass_fraction(field: ComplexField, core_fraction: float) -> float:
    """Fracción de masa L² fuera de la caja central [-cL/2, cL/2)^d"""
    if not 0 < core_fraction < 1:
        raise ValueError(f"core_fraction must lie in (0, 1), got {core_fraction}")
    density = np.abs(field.values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    inside = float(np.sum(density[_core_slices(field.grid, core_fraction)]))
    return float(min(max(1.0 - inside / total, 0.0), 1.0))


def gaussian_field(
    grid: Grid, a: float, amplitude: float = 1.0, center: Optional[Sequence[float]] = None
) -> ComplexField:
    """A e^{-a|x-c|²}."""
    return ComplexField(grid, amplitude * np.exp(-a * grid.radius_squared(center)))


def free_gaussian_solution(
    grid: Grid,
    a: float,
    t: float,
    amplitude: float = 1.0,
    center: Optional[Sequence[float]] = None,
) -> ComplexField:
    """Forma cerrada de e^{itΔ}(A e^{-a|x-c|²}) = A (1+4iat)^{-d/2} exp(-a|x-c|²/(1+4iat))."""
    z = 1 + 4j * a * t
    values = amplitude * z ** (-grid.dim / 2) * np.exp(-a * grid.radius_squared(center) / z)
    return ComplexField(grid, values)


def gaussian_lq_norm(a: float, d: int, q: float, t: float = 0.0, amplitude: float = 1.0) -> float:
    """‖e^{itΔ}(A e^{-a|x|²})‖_q en R^d"""
    spread = 1 + 16 * a**2 * t**2
    if np.isinf(q):
        return float(abs(amplitude) * spread ** (-d / 4))
    return float(abs(amplitude) * spread ** (-d / 4 + d / (2 * q)) * (np.pi / (q * a)) ** (d / (2 * q)))


def gaussian_boundary_fraction(
    a: float, d: int, core_fraction: float, box_length: float, t: float = 0.0
) -> float:
    """Masa L² de e^{itΔ}e^{-a|x|²} fuera de la caja central, en R^d"""
    std = np.sqrt((1 + 16 * a**2 * t**2) / (4 * a))
    half = core_fraction * box_length / 2
    outside_axis = erfc(half / (std * np.sqrt(2)))
    return float(1.0 - (1.0 - outside_axis) ** d)
