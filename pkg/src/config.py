"""
Configuración global del proyecto: rutas, variables de entorno y modelos de
configuración de experimentos.
"""
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.errors import ConfigError

logger = logging.getLogger(__name__)

# Cargar variables de entorno
load_dotenv()

# Rutas del proyecto
PROJECT_ROOT = Path(__file__).parent.parent
CONFIGS_DIR = PROJECT_ROOT / "configs"
LOGS_DIR = Path(os.getenv("SLSCHRO_LOGS", PROJECT_ROOT / "logs"))
OUTPUT_DIR = Path(os.getenv("SLSCHRO_OUT", PROJECT_ROOT / "outputs"))

# Configuración del proyecto
PROJECT_NAME = os.getenv("PROJECT_NAME", "stochastic-schrodinger-decay")
DEBUG = os.getenv("DEBUG", "False").lower() == "true"
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
FFT_WORKERS = int(os.getenv("SLSCHRO_FFT_WORKERS", "1"))

# Umbrales numéricos por defecto
VALIDITY_THRESHOLD = 1e-6
CORE_FRACTION = 0.5
FIT_T_MIN = 2.0
MIN_FIT_POINTS = 6
MIN_FIT_SPAN = 4.0
BOOTSTRAP_FACTOR = 2.0
CHECK_CAP = 1.5
REFINEMENT_TOLERANCE = 0.10
MASS_TOLERANCE = 1e-11
PATH_RUNTIME_BUDGET = 10.0
MIN_SIGMA_CELLS = 1.0

Scalar = Union[float, List[float]]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Section):
    dim: int = Field(3, ge=1, le=3)
    n: Union[int, List[int]] = 48
    box_length: Union[float, List[float]] = 48.0


class GaussianComponent(_Section):
    amplitude: float = 1.0
    sigma: Scalar = 1.0
    center: Optional[List[float]] = None


class PotentialSpec(_Section):
    """
    Potencial real V y acoplamiento δ del término de ruido δ V Ψ dB

    Formas: ``gaussian`` (A e^{-Σ x_i²/(2σ_i²)}), ``constant`` (A en todo punto,
    solo en el toro) y ``sum-of-gaussians`` (``components``).
    """

    shape: Literal["gaussian", "constant", "sum-of-gaussians"] = "gaussian"
    amplitude: float = 1.0
    sigma: Scalar = 1.0
    center: Optional[List[float]] = None
    delta: float = Field(0.05, ge=0)
    components: List[GaussianComponent] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_components(self):
        if self.shape == "sum-of-gaussians" and not self.components:
            raise ValueError("sum-of-gaussians needs at least one component")
        return self

    def gaussians(self) -> List[GaussianComponent]:
        """Componentes gaussianas, sea cual sea la forma (vacío si es constante)"""
        if self.shape == "gaussian":
            return [GaussianComponent(amplitude=self.amplitude, sigma=self.sigma, center=self.center)]
        if self.shape == "sum-of-gaussians":
            return list(self.components)
        return []

    def with_delta(self, delta: float) -> "PotentialSpec":
        return self.model_copy(update={"delta": float(delta)})


class NoiseConfig(_Section):
    master_seed: int = Field(20240601, ge=0, lt=2**64)
    n_paths: int = Field(1000, ge=1)
    dt: float = Field(0.01, gt=0)
    T: float = Field(8.0, ge=0)


class EnsembleConfig(_Section):
    q: List[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0])
    rho: List[float] = Field(default_factory=lambda: [2.0, 4.0])
    validity_threshold: float = Field(VALIDITY_THRESHOLD, gt=0)
    core_fraction: float = Field(CORE_FRACTION, gt=0, lt=1)
    fit_t_min: float = Field(FIT_T_MIN, ge=0)
    fit_window: Optional[Tuple[float, float]] = None
    bootstrap_factor: float = Field(BOOTSTRAP_FACTOR, gt=0)
    confidence: float = Field(0.95, gt=0, lt=1)

    @field_validator("q")
    @classmethod
    def _q_range(cls, values):
        for q in values:
            if not q >= 2:
                raise ValueError(f"q must be ≥ 2, got {q}")
        return values

    @field_validator("rho")
    @classmethod
    def _rho_range(cls, values):
        for rho in values:
            if not rho >= 2:
                raise ValueError(f"rho must be ≥ 2, got {rho}")
        return values


class InitialData(_Section):
    shape: Literal["gaussian"] = "gaussian"
    a: float = Field(0.5, gt=0)
    amplitude: float = 1.0
    center: Optional[List[float]] = None


class DuhamelConfig(_Section):
    t: float = Field(1.0, gt=0)
    deltas: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    order: int = Field(2, ge=0, le=2)
    isometry_paths: int = Field(2000, ge=100)
    check_q: float = Field(8.0, ge=2)
    check_times: List[Tuple[float, float]] = Field(default_factory=lambda: [(0.5, 2.0), (1.0, 2.0)])
    xi: List[List[float]] = Field(default_factory=lambda: [[0.0, 0.0, 0.0]])
    constants: Tuple[float, float] = (1.0, 1.0)
    chain_m: int = Field(2, ge=2, le=3)
    n_tuples: int = Field(100, ge=1)
    check_seed: int = Field(7, ge=0)
    refinement_n: Optional[List[int]] = None


class ExperimentConfig(_Section):
    initial: InitialData = Field(default_factory=InitialData)
    record_times: List[float] = Field(default_factory=lambda: [0.0, 2.0, 4.0, 8.0])
    time_pairs: Optional[List[Tuple[float, float]]] = None
    duhamel: DuhamelConfig = Field(default_factory=DuhamelConfig)


class RunConfig(_Section):
    grid: GridConfig
    potential: PotentialSpec
    noise: NoiseConfig
    ensemble: EnsembleConfig
    experiment: ExperimentConfig


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"])
        lines.append(f"{location}: {error['msg']}")
    return "; ".join(lines)


def parse_config(document: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from e


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Leer y validar un documento JSON de experimento

    Args:
        path: ruta al archivo JSON

    Returns:
        RunConfig validado
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    config = parse_config(document)
    logger.debug(f"Configuración cargada desde {path}")
    return config


def config_digest(config: RunConfig) -> str:
    """Primeros 16 dígitos hex del SHA-256 del JSON canónico"""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def with_overrides(config: RunConfig, seed: Optional[int] = None) -> RunConfig:
    if seed is None:
        return config
    noise = config.noise.model_copy(update={"master_seed": int(seed)})
    return config.model_copy(update={"noise": noise})


if DEBUG:
    logger.debug(f"✅ Configuración cargada para proyecto: {PROJECT_NAME}")
    logger.debug(f"📂 Directorio de salida: {OUTPUT_DIR}")
