"""
El potencial real V, su acoplamiento δ y las normas de V que entran en las cotas.

Para formas gaussianas se usan formas cerradas; lo demás cae en cuadratura
sobre la malla y por eso necesita una malla.
"""
import logging
from typing import List, Optional

import numpy as np

from src.config import MIN_SIGMA_CELLS, GaussianComponent, PotentialSpec
from src.grid_spectral import ComplexField, Grid, fourier_l1, lp_norm

logger = logging.getLogger(__name__)

__all__ = [
    "PotentialSpec",
    "GaussianComponent",
    "sample",
    "l1_norm",
    "fourier_l1_norm",
    "lr_norm",
    "smallness",
    "holder_exponent",
    "quadrature_l1_norm",
    "quadrature_fourier_l1_norm",
    "quadrature_lr_norm",
]


def _sigmas(component: GaussianComponent, dim: int) -> np.ndarray:
    sigma = np.atleast_1d(np.asarray(component.sigma, dtype=float))
    if sigma.size == 1:
        sigma = np.repeat(sigma, dim)
    if sigma.size != dim:
        raise ValueError(f"sigma needs {dim} entries, got {sigma.size}")
    if np.any(sigma <= 0):
        raise ValueError(f"sigma must be positive, got {sigma}")
    return sigma


def _center(component: GaussianComponent, dim: int) -> np.ndarray:
    if component.center is None:
        return np.zeros(dim)
    center = np.asarray(component.center, dtype=float)
    if center.size != dim:
        raise ValueError(f"center needs {dim} entries, got {center.size}")
    return center


def _check_resolution(component: GaussianComponent, grid: Grid) -> None:
    sigma = _sigmas(component, grid.dim)
    center = _center(component, grid.dim)
    lengths = np.asarray(grid.box_length)
    if np.any(sigma < MIN_SIGMA_CELLS * grid.spacing):
        raise ValueError(
            f"gaussian with sigma={sigma.tolist()} is under-resolved by cells {grid.spacing.tolist()}"
        )
    if np.any(3 * sigma > lengths / 2) or np.any(np.abs(center) >= lengths / 2):
        raise ValueError(f"gaussian with sigma={sigma.tolist()} is not contained in the box")


def _component_values(component: GaussianComponent, grid: Grid) -> np.ndarray:
    sigma = _sigmas(component, grid.dim)
    center = _center(component, grid.dim)
    exponent = np.zeros(grid.shape)
    for axis, x in enumerate(grid.axes):
        exponent = exponent + grid._broadcast(axis, (x - center[axis]) ** 2 / (2 * sigma[axis] ** 2))
    return component.amplitude * np.exp(-exponent)


def sample(spec: PotentialSpec, grid: Grid) -> ComplexField:
    """Evaluar V punto a punto en la malla (valores reales, parte imaginaria nula)"""
    if spec.shape == "constant":
        return ComplexField(grid, np.full(grid.shape, spec.amplitude, dtype=float))
    values = np.zeros(grid.shape)
    for component in spec.gaussians():
        _check_resolution(component, grid)
        values = values + _component_values(component, grid)
    return ComplexField(grid, values)


def sample_real(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    """Arreglo real de valores de V para los núcleos del integrador"""
    return sample(spec, grid).values.real.copy()


def _same_sign(components: List[GaussianComponent]) -> bool:
    amplitudes = np.array([c.amplitude for c in components])
    return bool(np.all(amplitudes >= 0) or np.all(amplitudes <= 0))


def _same_center(components: List[GaussianComponent], dim: int) -> bool:
    centers = [_center(c, dim) for c in components]
    return all(np.array_equal(centers[0], c) for c in centers[1:])


def _dim_of(spec: PotentialSpec, grid: Optional[Grid]) -> int:
    if grid is not None:
        return grid.dim
    for component in spec.gaussians():
        for value in (component.center, component.sigma):
            if isinstance(value, list) and len(value) > 1:
                return len(value)
    return 3


def _need_grid(grid: Optional[Grid], what: str) -> Grid:
    if grid is None:
        raise ValueError(f"{what} has no closed form; pass a grid for quadrature")
    return grid


def _constant_torus_norm(spec: PotentialSpec, r: float, grid: Optional[Grid]) -> float:
    if spec.amplitude == 0 or np.isinf(r):
        return abs(spec.amplitude)
    if grid is None:
        raise ValueError("constant potential is torus-only: its L^r norm on R^d is infinite")
    logger.warning("⚠️ Norma de potencial constante evaluada en el toro, no en R^d")
    volume = float(np.prod(grid.box_length))
    return abs(spec.amplitude) * volume ** (1.0 / r)


def l1_norm(spec: PotentialSpec, grid: Optional[Grid] = None) -> float:
    """‖V‖_{L¹}; |A|(2πσ²)^{d/2} para una gaussiana"""
    return lr_norm(spec, 1.0, grid)


def lr_norm(spec: PotentialSpec, r: float, grid: Optional[Grid] = None) -> float:
    """
    ‖V‖_{L^r} para r en [1, ∞]

    Para A e^{-|x|²/(2σ²)} vale |A| Π_i (2πσ_i²/r)^{1/(2r)}, y |A| en r = ∞.
    """
    if not r >= 1:
        raise ValueError(f"r must lie in [1, ∞], got {r}")
    if spec.shape == "constant":
        return _constant_torus_norm(spec, r, grid)
    components = spec.gaussians()
    if all(c.amplitude == 0 for c in components):
        return 0.0
    dim = _dim_of(spec, grid)
    if len(components) == 1:
        component = components[0]
        if np.isinf(r):
            return abs(component.amplitude)
        sigma = _sigmas(component, dim)
        return float(abs(component.amplitude) * np.prod((2 * np.pi * sigma**2 / r) ** (1 / (2 * r))))
    if r == 1 and _same_sign(components):
        return float(
            sum(abs(c.amplitude) * np.prod(np.sqrt(2 * np.pi * _sigmas(c, dim) ** 2)) for c in components)
        )
    if np.isinf(r) and _same_sign(components) and _same_center(components, dim):
        return abs(sum(c.amplitude for c in components))
    return quadrature_lr_norm(spec, _need_grid(grid, f"‖V‖_L^{r}"), r)


def fourier_l1_norm(spec: PotentialSpec, grid: Optional[Grid] = None) -> float:
    """
    ‖V̂‖_{L¹} con V̂(ξ) = (2π)^{-d}∫V e^{-iξ·x}dx

    La transformada de una gaussiana es positiva con masa total V(centro): la
    norma es |A|; sumas con mismo centro y signo se suman; una constante da V̂ = A·δ₀.
    """
    if spec.shape == "constant":
        return abs(spec.amplitude)
    components = spec.gaussians()
    dim = _dim_of(spec, grid)
    if len(components) == 1 or (_same_sign(components) and _same_center(components, dim)):
        return abs(sum(c.amplitude for c in components))
    return quadrature_fourier_l1_norm(spec, _need_grid(grid, "‖V̂‖_L¹"))


def smallness(spec: PotentialSpec, grid: Optional[Grid] = None) -> float:
    """δ(‖V‖_{L¹} + ‖V̂‖_{L¹}), el escalar registrado con cada resultado"""
    if spec.delta == 0:
        return 0.0
    return float(spec.delta * (l1_norm(spec, grid) + fourier_l1_norm(spec, grid)))


def holder_exponent(p: float, q: float) -> float:
    """pq/(q - p), exponente de la norma de V en la cota fuerte del operador"""
    if np.isinf(q):
        return p
    if q == p:
        return float("inf")
    return p * q / (q - p)


def quadrature_l1_norm(spec: PotentialSpec, grid: Grid) -> float:
    return lp_norm(sample(spec, grid), 1.0)


def quadrature_lr_norm(spec: PotentialSpec, grid: Grid, r: float) -> float:
    return lp_norm(sample(spec, grid), r)


def quadrature_fourier_l1_norm(spec: PotentialSpec, grid: Grid) -> float:
    return fourier_l1(sample(spec, grid))
