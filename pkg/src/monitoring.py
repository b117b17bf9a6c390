import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from src.config import LOG_LEVEL, LOGS_DIR, MASS_TOLERANCE, PATH_RUNTIME_BUDGET, VALIDITY_THRESHOLD

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(log_dir: Optional[Union[str, Path]] = None, level: str = LOG_LEVEL) -> Path:
    """Configurar logging a archivo y consola (una sola vez por proceso)"""
    log_dir = Path(log_dir or LOGS_DIR)
    log_dir.mkdir(parents=True, exist_ok=True)
    if logging.getLogger().handlers:
        return log_dir
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_dir / 'slschro.log', encoding='utf-8'),
            logging.StreamHandler()
        ]
    )
    return log_dir


class RunMonitor:
    """
    Monitor de una corrida Monte Carlo: registra cada trayectoria, guarda los
    registros en JSONL y emite alertas sobre masa, borde y tiempo de cómputo.
    """

    def __init__(self, log_dir: Optional[Union[str, Path]] = None,
                 mass_tolerance: float = MASS_TOLERANCE,
                 validity_threshold: float = VALIDITY_THRESHOLD,
                 runtime_budget: float = PATH_RUNTIME_BUDGET):
        self.log_dir = configure_logging(log_dir)
        self.logger = logging.getLogger('RunMonitor')
        self.mass_tolerance = mass_tolerance
        self.validity_threshold = validity_threshold
        self.runtime_budget = runtime_budget

        # Métricas en memoria
        self.metrics = {
            'paths': [],
            'runtimes': [],
            'mass_drifts': [],
            'boundary_masses': [],
            'alerts': [],
            'errors': []
        }

    def log_path(self, index: int, runtime: float, mass_drift: float,
                 boundary_mass: float, context: Optional[Dict[str, Any]] = None):
        """Registrar una trayectoria integrada"""

        path_log = {
            'timestamp': datetime.now().isoformat(),
            'index': int(index),
            'runtime': float(runtime),
            'mass_drift': float(mass_drift),
            'boundary_mass': float(boundary_mass),
            'context': context or {}
        }

        self.metrics['paths'].append(path_log)
        self.metrics['runtimes'].append(float(runtime))
        self.metrics['mass_drifts'].append(float(mass_drift))
        self.metrics['boundary_masses'].append(float(boundary_mass))

        self.logger.debug(f"Trayectoria {index}: RT={runtime:.2f}s, "
                          f"deriva de masa={mass_drift:.2e}, masa en borde={boundary_mass:.2e}")

        self._append_jsonl('paths.jsonl', path_log)
        self._check_alerts(path_log)

    def log_error(self, error_type: str, error_message: str, context: Optional[Dict[str, Any]] = None):
        """Registrar un error"""

        error_log = {
            'timestamp': datetime.now().isoformat(),
            'error_type': error_type,
            'error_message': error_message,
            'context': context or {}
        }

        self.metrics['errors'].append(error_log)
        self.logger.error(f"Error {error_type}: {error_message}")
        self._append_jsonl('errors.jsonl', error_log)

    def get_metrics_summary(self) -> Dict:
        """Obtener resumen de métricas"""

        if not self.metrics['paths']:
            return {'message': 'No hay trayectorias registradas aún', 'status': self._get_run_status()}

        runtimes = np.array(self.metrics['runtimes'])
        return {
            'total_paths': len(self.metrics['paths']),
            'avg_runtime': float(runtimes.mean()),
            'max_runtime': float(runtimes.max()),
            'max_mass_drift': float(max(self.metrics['mass_drifts'])),
            'max_boundary_mass': float(max(self.metrics['boundary_masses'])),
            'total_alerts': len(self.metrics['alerts']),
            'total_errors': len(self.metrics['errors']),
            'status': self._get_run_status()
        }

    def _append_jsonl(self, name: str, record: Dict):
        with open(self.log_dir / name, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, ensure_ascii=False) + '\n')

    def _alert(self, kind: str, message: str):
        # Solo la primera alerta de cada tipo llega a WARNING
        if kind in self.metrics['alerts']:
            self.logger.debug(f"ALERTA repetida: {message}")
        else:
            self.logger.warning(f"🚨 ALERTA: {message}")
        self.metrics['alerts'].append(kind)

    def _check_alerts(self, path_log: Dict):
        """Verificar condiciones de alerta"""

        if path_log['mass_drift'] > self.mass_tolerance:
            self._alert('mass', f"Deriva de masa {path_log['mass_drift']:.2e} en trayectoria {path_log['index']}")

        if path_log['boundary_mass'] > self.validity_threshold:
            self._alert('boundary', f"Masa en borde {path_log['boundary_mass']:.2e} fuera de la ventana de validez")

        if path_log['runtime'] > self.runtime_budget:
            self._alert('runtime', f"Tiempo por trayectoria alto: {path_log['runtime']:.2f}s")

    def _get_run_status(self) -> str:
        """Determinar el estado de la corrida"""

        if self.metrics['errors'] or 'mass' in self.metrics['alerts']:
            return "CRITICAL"
        if not self.metrics['paths']:
            return "STARTING"
        if self.metrics['alerts']:
            return "DEGRADED"
        return "HEALTHY"
