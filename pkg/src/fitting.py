"""Ajustes de ley de potencias: regresión de log y sobre log x."""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    slope_halfwidth: float
    n_points: int

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.intercept))

    def covers(self, target: float, tolerance: float = 0.0) -> bool:
        return abs(self.slope - target) <= self.slope_halfwidth + tolerance


def loglog_fit(
    x: Sequence[float],
    y: Sequence[float],
    weights: Optional[Sequence[float]] = None,
    confidence: float = 0.95,
) -> LogLogFit:
    """
    Ajusta y ≈ C x^s

    Args:
        x, y: muestras positivas
        weights: pesos relativos de los residuos en escala log (uniformes si None)
        confidence: nivel del semiancho t de Student sobre la pendiente

    Returns:
        LogLogFit; el semiancho es 0 con solo dos puntos
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two (x, y) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive x and y")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != x.shape or np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be positive and finite, one per point")

    log_x, log_y = np.log(x), np.log(y)
    if np.ptp(log_x) == 0:
        raise ValueError("x values must not all coincide")

    n = x.size
    if weights is None:
        result = stats.linregress(log_x, log_y)
        slope, intercept, slope_se = result.slope, result.intercept, result.stderr
    elif n > 2:
        # polyfit pondera residuos, no cuadrados
        (slope, intercept), cov = np.polyfit(log_x, log_y, 1, w=np.sqrt(weights), cov=True)
        slope_se = np.sqrt(cov[0, 0])
    else:
        slope, intercept = np.polyfit(log_x, log_y, 1)
        slope_se = 0.0

    halfwidth = 0.0
    if n > 2:
        halfwidth = float(stats.t.ppf(0.5 + confidence / 2, n - 2) * slope_se)
    return LogLogFit(slope=float(slope), intercept=float(intercept), slope_halfwidth=halfwidth, n_points=n)
