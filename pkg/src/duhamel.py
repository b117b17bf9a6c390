"""
Expansión de Duhamel de Ψ(t), isometría de Itô con ρ = 2 y cocientes contra cotas.

Hasta segundo orden en δ la solución se descompone como

    Ψ(t) = e^{itΔ}f − iδ ∫₀ᵗ e^{i(t−s)Δ} V e^{isΔ}f dB_s
           − (δ²/2) ∫₀ᵗ e^{i(t−s)Δ} V² e^{isΔ}f ds + resto

Las integrales son sumas con extremo izquierdo en la malla (sentido Itô),
acumuladas en la imagen de interacción: en Fourier e^{−irΔ} es el
multiplicador e^{+i|k|²r}.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import CHECK_CAP
from src.errors import ConfigError, ValidityWindowError
from src.ensemble import rho_moment
from src.fitting import LogLogFit, loglog_fit
from src.grid_spectral import (
    ComplexField,
    NormSpec,
    boundary_mass_fraction,
    forward_fft,
    free_propagate,
    inverse_fft,
    kinetic_multiplier,
    lp_norm,
    mass,
    modulate,
    snap_frequency,
)
from src.integrator import evolve
from src.noise import BrownianPath, refine, sample_path
from src.potential import PotentialSpec, fourier_l1_norm, holder_exponent, lr_norm, sample_real

logger = logging.getLogger(__name__)

CHECK_COLUMNS = ["check", "params", "ratio", "bound"]
CHECK_KINDS = ("exchange", "strong", "variable_small", "modulated")
EXPECTED_EXPONENT = {0: 1.0, 1: 2.0, 2: 2.0}


@dataclass(frozen=True, eq=False)
class DuhamelTerms:
    """Términos explícitos de la expansión en el tiempo t y lo que dejan de resto"""

    t: float
    psi: ComplexField
    free: ComplexField
    stochastic: ComplexField
    drift: ComplexField

    def explicit(self, order: int = 2) -> ComplexField:
        """Suma de los términos hasta ``order`` (0: libre, 1: + estocástico, 2: + deriva)"""
        if order not in EXPECTED_EXPONENT:
            raise ValueError(f"order must be 0, 1 or 2, got {order}")
        total = self.free
        if order >= 1:
            total = total + self.stochastic
        if order >= 2:
            total = total + self.drift
        return total

    def remainder_at(self, order: int) -> ComplexField:
        return self.psi - self.explicit(order)

    @property
    def remainder(self) -> ComplexField:
        return self.remainder_at(2)


def _interaction_sums(
    f: ComplexField, V: np.ndarray, path: BrownianPath, steps: int, drift_rule: str = "left"
) -> Tuple[np.ndarray, np.ndarray]:
    """Espectros de Σ e^{−ir_kΔ}V e^{ir_kΔ}f ΔB_k y de la suma de Riemann con V² (regla left o trapezoid)"""
    if drift_rule not in ("left", "trapezoid"):
        raise ValueError(f"unknown quadrature rule {drift_rule!r}")
    grid = f.grid
    f_hat = forward_fft(f.values)
    stochastic = np.zeros(grid.shape, dtype=np.complex128)
    drift = np.zeros(grid.shape, dtype=np.complex128)
    last = steps if drift_rule == "trapezoid" else steps - 1
    for k in range(last + 1):
        r = k * path.dt
        forward = kinetic_multiplier(grid, r)
        phi = inverse_fft(f_hat * forward)
        weight = path.dt
        if drift_rule == "trapezoid" and k in (0, steps):
            weight = path.dt / 2
        drift += np.conj(forward) * forward_fft(V**2 * phi) * weight
        if k < steps:
            stochastic += np.conj(forward) * forward_fft(V * phi) * path.increments[k]
    return stochastic, drift


def _assemble(f: ComplexField, delta: float, t: float, sums: Tuple[np.ndarray, np.ndarray], psi: ComplexField) -> DuhamelTerms:
    grid = f.grid
    closing = kinetic_multiplier(grid, t)
    stochastic, drift = sums
    return DuhamelTerms(
        t=t,
        psi=psi,
        free=free_propagate(f, t),
        stochastic=ComplexField(grid, inverse_fft(-1j * delta * stochastic * closing)),
        drift=ComplexField(grid, inverse_fft(-0.5 * delta**2 * drift * closing)),
    )


def _check_inputs(f: ComplexField, V: np.ndarray, path: BrownianPath, t: float) -> int:
    if V.shape != f.grid.shape:
        raise ValueError(f"potential shape {V.shape} does not match grid {f.grid.shape}")
    return path.step_index(t)


def duhamel_terms(
    f: ComplexField,
    spec: PotentialSpec,
    path: BrownianPath,
    t: float,
    V_values: Optional[np.ndarray] = None,
    drift_rule: str = "left",
) -> DuhamelTerms:
    """
    Términos libre, estocástico y de deriva en t sobre una trayectoria, más Ψ(t)

    El resto es Ψ(t) menos los tres términos; los cuatro campos suman Ψ(t)
    por construcción.
    """
    V = sample_real(spec, f.grid) if V_values is None else np.asarray(V_values)
    steps = _check_inputs(f, V, path, t)
    sums = _interaction_sums(f, V, path, steps, drift_rule)
    psi = evolve(f, spec, path, [t], V).fields[-1]
    return _assemble(f, spec.delta, t, sums, psi)


def term_consistency(f: ComplexField, spec: PotentialSpec, path: BrownianPath, t: float) -> Dict[str, float]:
    """
    Cambios relativos de los términos explícitos con una segunda cuadratura

    La deriva se recalcula con la regla del trapecio y el término estocástico
    sobre la trayectoria refinada por puente; ambas diferencias son O(dt).
    """
    left = duhamel_terms(f, spec, path, t)
    trapezoid = duhamel_terms(f, spec, path, t, drift_rule="trapezoid")
    fine = duhamel_terms(f, spec, refine(path), t)

    def relative(a: ComplexField, b: ComplexField) -> float:
        scale = np.sqrt(mass(a))
        return 0.0 if scale == 0 else float(np.sqrt(mass(a - b)) / scale)

    return {
        "drift": relative(left.drift, trapezoid.drift),
        "stochastic": relative(left.stochastic, fine.stochastic),
    }


@dataclass(frozen=True)
class ScalingResult:
    deltas: Tuple[float, ...]
    remainder: Tuple[float, ...]
    first_order: Tuple[float, ...]
    remainder_fit: LogLogFit
    first_fit: LogLogFit
    order: int
    expected: float

    def to_dict(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "remainder": list(self.remainder),
            "first_order": list(self.first_order),
            "remainder_exponent": self.remainder_fit.slope,
            "first_order_exponent": self.first_fit.slope,
            "expected_remainder_exponent": self.expected,
            "order": self.order,
        }


def remainder_scaling(
    f: ComplexField,
    spec: PotentialSpec,
    paths: Sequence[BrownianPath],
    t: float,
    deltas: Sequence[float] = (0.2, 0.1, 0.05),
    order: int = 2,
) -> ScalingResult:
    """
    Normas L²_ω del resto y del término estocástico para cada δ de ``deltas``

    Las mismas trayectorias sirven para todo δ. Truncar tras ``order`` términos
    deja un resto de tamaño δ (orden 0) o δ² (órdenes 1 y 2); el término
    estocástico es lineal en δ.
    """
    if order not in EXPECTED_EXPONENT:
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    if len(deltas) < 2 or any(d <= 0 for d in deltas):
        raise ValueError("need at least two positive couplings")
    V = sample_real(spec, f.grid)
    remainders = np.zeros((len(paths), len(deltas)))
    firsts = np.zeros_like(remainders)
    for i, path in enumerate(paths):
        steps = _check_inputs(f, V, path, t)
        sums = _interaction_sums(f, V, path, steps)
        for j, delta in enumerate(deltas):
            scaled = spec.with_delta(delta)
            psi = evolve(f, scaled, path, [t], V).fields[-1]
            terms = _assemble(f, delta, t, sums, psi)
            remainders[i, j] = np.sqrt(mass(terms.remainder_at(order)))
            firsts[i, j] = np.sqrt(mass(terms.stochastic))
    remainder = tuple(rho_moment(remainders[:, j], 2.0)[0] for j in range(len(deltas)))
    first = tuple(rho_moment(firsts[:, j], 2.0)[0] for j in range(len(deltas)))
    result = ScalingResult(
        deltas=tuple(float(d) for d in deltas),
        remainder=remainder,
        first_order=first,
        remainder_fit=loglog_fit(deltas, remainder),
        first_fit=loglog_fit(deltas, first),
        order=order,
        expected=EXPECTED_EXPONENT[order],
    )
    logger.info(
        f"📐 Exponente del resto {result.remainder_fit.slope:.3f} (esperado {result.expected:g}), "
        f"exponente de primer orden {result.first_fit.slope:.3f}"
    )
    return result


@dataclass(frozen=True)
class IsometryCheck:
    lhs: float
    rhs: float
    stderr: float
    rel_error: float
    rel_stderr: float
    n_paths: int

    @property
    def within(self) -> float:
        """Error relativo en unidades de su error estándar"""
        if self.rel_error == 0:
            return 0.0
        return self.rel_error / self.rel_stderr if self.rel_stderr > 0 else float("inf")


def ito_isometry_check(
    f: ComplexField,
    spec: PotentialSpec,
    t: float,
    M: int,
    dt: float,
    master_seed: int = 0,
) -> IsometryCheck:
    """
    E‖Σ_k e^{i(t−r_k)Δ} Φ(r_k) ΔB_k‖₂² contra Σ_k ‖Φ(r_k)‖₂² dt, Φ(s) = V e^{isΔ}f

    La norma al cuadrado de cada trayectoria es la forma cuadrática ΔBᵀ G ΔB
    con la matriz de Gram G_jk = Re⟨Y_j, Y_k⟩; el lado Monte Carlo no trabaja
    con campos más allá de construir G una vez.
    """
    if M < 100:
        raise ValueError(f"isometry check needs M ≥ 100 paths, got {M}")
    grid = f.grid
    V = sample_real(spec, grid)
    steps = sample_path(master_seed, 0, dt, t).n_steps
    f_hat = forward_fft(f.values)
    rows = np.empty((steps, grid.n_points), dtype=np.complex128)
    for k in range(steps):
        forward = kinetic_multiplier(grid, k * dt)
        rows[k] = (np.conj(forward) * forward_fft(V * inverse_fft(f_hat * forward))).ravel()
    # Parseval para la FFT sin normalizar: ⟨a, b⟩ = h^d/N Σ conj(â) b̂
    gram = np.real(rows.conj() @ rows.T) * grid.cell_volume / grid.n_points
    rhs = float(np.trace(gram) * dt)
    increments = np.stack([sample_path(master_seed, i, dt, t).increments for i in range(M)])
    samples = np.einsum("mj,jk,mk->m", increments, gram, increments)
    lhs = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / np.sqrt(M))
    if rhs == 0:
        return IsometryCheck(lhs=lhs, rhs=0.0, stderr=stderr, rel_error=0.0, rel_stderr=0.0, n_paths=M)
    rel_error = abs(lhs - rhs) / rhs
    logger.info(f"🎯 Isometría de Itô: E‖X‖² = {lhs:.6g} ± {stderr:.2g}, cuadratura {rhs:.6g}")
    return IsometryCheck(lhs=lhs, rhs=rhs, stderr=stderr, rel_error=rel_error, rel_stderr=stderr / rhs, n_paths=M)


@dataclass
class CheckResult:
    check: str
    params: Dict
    ratio: float
    bound: float
    baseline: Optional[float] = None
    passed: Optional[bool] = None

    def to_row(self) -> Dict:
        return {
            "check": self.check,
            "params": json.dumps(self.params, sort_keys=True),
            "ratio": self.ratio,
            "bound": self.bound,
        }


def _ratio(measured: float, bound: float) -> float:
    if bound == 0:
        return 0.0 if measured == 0 else float("inf")
    return float(measured / bound)


def modulated_check(
    f: ComplexField,
    spec: PotentialSpec,
    paths: Sequence[BrownianPath],
    t: float,
    s: float,
    xis: Sequence[Sequence[float]],
    q: float,
    constants: Tuple[float, float] = (1.0, 1.0),
    rho: float = 2.0,
    core_fraction: float = 0.5,
    validity_threshold: Optional[float] = None,
) -> List[CheckResult]:
    """
    ‖e^{i(t−s)Δ} e^{i⟨ξ,·⟩} Ψ(s)‖_{L^ρ_ω L^q_x} para cada ξ ajustado a la red, dividido por

        t^{−α} ‖f‖_p exp(c₁ δ²‖V̂‖₁² s + c₂ δ⁴‖V̂‖₁⁴ s²)

    F_t(s) es el mayor de ellos; su cociente es el mayor cociente devuelto.
    """
    if not 0 <= s <= t or t <= 0:
        raise ValueError(f"need 0 ≤ s ≤ t and t > 0, got s={s}, t={t}")
    grid = f.grid
    norm = NormSpec(q=q, rho=rho, dim=grid.dim)
    V = sample_real(spec, grid)
    starts = [f if s == 0 else evolve(f, spec, path, [s], V).fields[-1] for path in paths]
    v_hat = fourier_l1_norm(spec, grid)
    c1, c2 = constants
    growth = np.exp(c1 * spec.delta**2 * v_hat**2 * s + c2 * spec.delta**4 * v_hat**4 * s**2)
    bound = t ** (-norm.alpha) * lp_norm(f, norm.p) * growth
    results = []
    for xi in xis:
        snapped = snap_frequency(grid, xi)
        fields = [free_propagate(modulate(psi, snapped), t - s) for psi in starts]
        boundary = max(boundary_mass_fraction(g, core_fraction) for g in fields)
        if validity_threshold is not None and boundary >= validity_threshold:
            raise ValidityWindowError(f"modulated check at ξ={list(snapped)}, t={t} leaves the validity window")
        measured, _ = rho_moment([lp_norm(g, q) for g in fields], rho)
        params = {"s": s, "t": t, "xi": [float(x) for x in snapped], "delta": spec.delta, "q": q, "boundary_mass": boundary}
        results.append(CheckResult(check="modulated", params=params, ratio=_ratio(measured, bound), bound=float(bound)))
    return results


def _apply_chain(start: np.ndarray, V: np.ndarray, u: Sequence[float], grid, first_free: bool) -> np.ndarray:
    """e^{iu_mΔ} V e^{iu_{m−1}Δ} ··· V e^{iu_1Δ} aplicado a start (sin e^{iu_1Δ} salvo first_free)"""
    h = start
    for j, u_j in enumerate(u[:-1]):
        if j > 0 or first_free:
            h = free_propagate(ComplexField(grid, h), u_j).values
        h = V * h
    return free_propagate(ComplexField(grid, h), u[-1]).values


def _bracket(u: float) -> float:
    return float(np.sqrt(1.0 + u * u))


def chain_bound_check(
    u: Sequence[float],
    m: int,
    f: ComplexField,
    spec: PotentialSpec,
    q: float,
    form: str = "exchange",
    paths: Optional[Sequence[BrownianPath]] = None,
    rho: float = 2.0,
    V_values: Optional[np.ndarray] = None,
    starts: Optional[Sequence[ComplexField]] = None,
) -> CheckResult:
    """
    ‖e^{iu_mΔ} Π_j (V e^{iu_jΔ}) f‖_q sobre una cota de la cadena

    Formas:
        exchange: |Σu_j|^{−α} ‖V̂‖₁^{m−1} ‖f‖_p
        strong: Π_j ⟨u_j⟩^{−α} (‖V̂‖₁ + ‖V‖_{pq/(q−p)})^{m−1} ‖f‖_p, requiere |Σu_j| > 1
        variable_small: cota strong, con el primer flujo libre reemplazado por
            el flujo estocástico Ψ(u₁) sobre ``paths``; requiere u₁ < 1 y Σu_j > 2
    """
    u = [float(x) for x in u]
    if m not in (2, 3) or len(u) != m:
        raise ValueError(f"chain needs m ∈ {{2, 3}} times, got m={m}, u={u}")
    if any(x < 0 for x in u):
        raise ValueError(f"chain times must be nonnegative, got {u}")
    total = sum(u)
    grid = f.grid
    norm = NormSpec(q=q, rho=rho, dim=grid.dim)
    V = sample_real(spec, grid) if V_values is None else V_values
    f_norm = lp_norm(f, norm.p)
    v_hat = fourier_l1_norm(spec, grid)
    params = {"u": u, "m": m, "q": q, "form": form}

    if form == "exchange":
        if total == 0:
            raise ValueError("exchange bound needs Σu_j ≠ 0")
        bound = abs(total) ** (-norm.alpha) * v_hat ** (m - 1) * f_norm
        measured = lp_norm(ComplexField(grid, _apply_chain(f.values, V, u, grid, True)), q)
        return CheckResult(check="exchange", params=params, ratio=_ratio(measured, bound), bound=float(bound))

    if form not in ("strong", "variable_small"):
        raise ValueError(f"unknown chain form {form!r}")
    if abs(total) <= 1.0:
        raise ValueError(f"strong bound needs |Σu_j| > 1, got {total}")
    v_r = lr_norm(spec, holder_exponent(norm.p, q), grid)
    bound = float(np.prod([_bracket(x) ** (-norm.alpha) for x in u]) * (v_hat + v_r) ** (m - 1) * f_norm)

    if form == "strong":
        measured = lp_norm(ComplexField(grid, _apply_chain(f.values, V, u, grid, True)), q)
        return CheckResult(check="strong", params=params, ratio=_ratio(measured, bound), bound=bound)

    if not (u[0] < 1 and total > 2):
        raise ValueError(f"variable_small needs u₁ < 1 and Σu_j > 2, got {u}")
    if starts is None:
        if not paths:
            raise ValueError("variable_small needs Brownian paths")
        starts = [evolve(f, spec, path, [u[0]], V).fields[-1] for path in paths]
    norms = [lp_norm(ComplexField(grid, _apply_chain(psi.values, V, u, grid, False)), q) for psi in starts]
    measured, _ = rho_moment(norms, rho)
    params["delta"] = spec.delta
    return CheckResult(check="variable_small", params=params, ratio=_ratio(measured, bound), bound=bound)


def _check_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def sample_chain_times(kind: str, m: int, n_tuples: int, seed: int, dt: Optional[float] = None) -> List[List[float]]:
    """Tuplas de tiempos sembradas dentro del dominio de cada forma"""
    rng = _check_rng(seed)
    tuples = []
    while len(tuples) < n_tuples:
        if kind == "variable_small":
            if dt is None:
                raise ValueError("variable_small tuples need the path step dt")
            u1 = round(rng.uniform(0.1, 0.9) / dt) * dt
            u = [u1] + list(rng.uniform(0.5, 3.0, m - 1))
            if not (0 < u1 < 1 and sum(u) > 2):
                continue
        else:
            u = list(rng.uniform(0.25, 3.0, m))
            if kind == "strong" and sum(u) <= 1:
                continue
        tuples.append([float(x) for x in u])
    return tuples


def check_sweep(
    kind: str,
    f: ComplexField,
    spec: PotentialSpec,
    q: float,
    n_tuples: int = 100,
    seed: int = 7,
    m: int = 2,
    paths: Optional[Sequence[BrownianPath]] = None,
) -> pd.DataFrame:
    """Cadena evaluada en ``n_tuples`` tuplas sembradas; una fila por tupla"""
    if kind not in ("exchange", "strong", "variable_small"):
        raise ValueError(f"unknown chain check {kind!r}")
    dt = paths[0].dt if paths else None
    tuples = sample_chain_times(kind, m, n_tuples, seed, dt)
    V = sample_real(spec, f.grid)
    states: Dict[float, List[ComplexField]] = {}
    if kind == "variable_small":
        if not paths:
            raise ValueError("variable_small sweep needs Brownian paths")
        # una integración por trayectoria cubre todos los u₁
        u1s = sorted({u[0] for u in tuples})
        trajectories = [evolve(f, spec, path, u1s, V) for path in paths]
        states = {u1: [traj.at(u1) for traj in trajectories] for u1 in u1s}
    rows = []
    for u in tuples:
        result = chain_bound_check(u, m, f, spec, q, form=kind, V_values=V, starts=states.get(u[0]))
        rows.append(result.to_row())
    return pd.DataFrame(rows, columns=CHECK_COLUMNS)


def modulated_sweep(
    f: ComplexField,
    spec: PotentialSpec,
    paths: Sequence[BrownianPath],
    times: Sequence[Tuple[float, float]],
    xis: Sequence[Sequence[float]],
    q: float,
    constants: Tuple[float, float] = (1.0, 1.0),
    validity_threshold: Optional[float] = None,
    core_fraction: float = 0.5,
) -> pd.DataFrame:
    """Cociente modulado para cada (s, t) configurado, una fila por ξ"""
    rows = []
    for s, t in times:
        for result in modulated_check(
            f, spec, paths, t, s, xis, q, constants,
            core_fraction=core_fraction, validity_threshold=validity_threshold,
        ):
            rows.append(result.to_row())
    return pd.DataFrame(rows, columns=CHECK_COLUMNS)


def refinement_change(coarse: pd.DataFrame, fine: pd.DataFrame) -> float:
    """Mayor cambio relativo entre cocientes correspondientes de dos mallas"""
    if len(coarse) != len(fine):
        raise ValueError("sweeps must come from the same tuples")
    a = coarse["ratio"].to_numpy()
    b = fine["ratio"].to_numpy()
    scale = np.maximum(np.abs(a), np.abs(b))
    nonzero = scale > 0
    if not nonzero.any():
        return 0.0
    return float(np.max(np.abs(a - b)[nonzero] / scale[nonzero]))


def calibrate_baselines(sweeps: Dict[str, pd.DataFrame]) -> Dict[str, float]:
    """Línea base por tipo: el mayor cociente de un barrido de calibración (δ = 0)"""
    return {kind: float(frame["ratio"].max()) for kind, frame in sorted(sweeps.items()) if not frame.empty}


def save_baselines(path: Union[str, Path], baselines: Dict[str, float]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(baselines, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.info(f"💾 Baselines guardados en {path}")
    return path


def load_baselines(path: Union[str, Path]) -> Dict[str, float]:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read baselines from {path}: {e}") from e
    if not isinstance(document, dict) or not all(isinstance(v, (int, float)) for v in document.values()):
        raise ConfigError(f"{path}: baselines must map check names to numbers")
    return {str(k): float(v) for k, v in document.items()}


def apply_baselines(frame: pd.DataFrame, baselines: Dict[str, float], cap: float = CHECK_CAP) -> pd.DataFrame:
    """Agregar las columnas baseline y passed: cociente finito y ≤ cap × baseline"""
    out = frame.copy()
    out["baseline"] = out["check"].map(lambda kind: baselines.get(kind, np.nan))
    finite = np.isfinite(out["ratio"])
    out["passed"] = finite & ((out["ratio"] <= cap * out["baseline"]) | out["baseline"].isna())
    return out[["check", "params", "ratio", "baseline", "passed"]]
