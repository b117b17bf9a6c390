"""
Fixtures compartidos por la suite de pruebas: grillas pequeñas 1-D y
documentos de configuración que corren en segundos.
"""
import copy

import pytest

from src.config import parse_config
from src.grid_spectral import gaussian_field, make_grid
from src.potential import PotentialSpec

BASE_DOCUMENT = {
    "grid": {"dim": 1, "n": 256, "box_length": 100.0},
    "potential": {"shape": "gaussian", "amplitude": 1.0, "sigma": 1.0, "delta": 0.2},
    "noise": {"master_seed": 20240601, "n_paths": 6, "dt": 0.05, "T": 4.0},
    "ensemble": {"q": [2.0, 4.0], "rho": [2.0, 4.0], "fit_t_min": 0.5},
    "experiment": {
        "initial": {"a": 0.0625},
        "record_times": [0.0, 1.0, 2.0, 4.0],
        "time_pairs": [[1.0, 2.0], [2.0, 4.0], [1.0, 4.0]],
        "duhamel": {
            "t": 0.5,
            "deltas": [0.2, 0.1, 0.05],
            "isometry_paths": 200,
            "check_q": 8.0,
            "check_times": [[0.25, 1.0]],
            "xi": [[0.0], [1.0]],
            "n_tuples": 100,
        },
    },
}


def make_document(**sections) -> dict:
    """Copia de BASE_DOCUMENT con secciones actualizadas (merge de un nivel)."""
    document = copy.deepcopy(BASE_DOCUMENT)
    for name, update in sections.items():
        document[name].update(update)
    return document


@pytest.fixture
def document():
    return make_document()


@pytest.fixture
def config():
    return parse_config(make_document())


@pytest.fixture
def grid_1d():
    return make_grid(1, 128, 32.0)


@pytest.fixture
def gaussian_1d(grid_1d):
    return gaussian_field(grid_1d, 0.5)


@pytest.fixture
def bump():
    return PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.5)


@pytest.fixture(autouse=True)
def isolated_dirs(tmp_path, monkeypatch):
    # logs y salidas de cada prueba en su propio directorio temporal
    monkeypatch.setenv("SLSCHRO_LOGS", str(tmp_path / "logs"))
    monkeypatch.setattr("src.monitoring.LOGS_DIR", tmp_path / "logs", raising=False)
    monkeypatch.setattr("src.cli.OUTPUT_DIR", tmp_path / "outputs", raising=False)
    return tmp_path
