"""
Snapshots SLS1 de campos.

Formato: magic ``SLS1``, luego little-endian u32 versión, u32 d, d × u32 n,
d × f64 L, y los n^d valores como pares (re, im) f64 intercalados en orden row-major.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np

from src.grid_spectral import ComplexField, make_grid

logger = logging.getLogger(__name__)

MAGIC = b"SLS1"
VERSION = 1


def encode_snapshot(field: ComplexField) -> bytes:
    grid = field.grid
    header = np.array([VERSION, grid.dim, *grid.n], dtype="<u4").tobytes()
    lengths = np.array(grid.box_length, dtype="<f8").tobytes()
    pairs = np.empty((grid.n_points, 2), dtype="<f8")
    flat = field.values.ravel(order="C")
    pairs[:, 0] = flat.real
    pairs[:, 1] = flat.imag
    return MAGIC + header + lengths + pairs.tobytes()


def decode_snapshot(payload: bytes) -> ComplexField:
    if payload[:4] != MAGIC:
        raise ValueError(f"not an SLS1 snapshot (magic {payload[:4]!r})")
    offset = 4
    if len(payload) < offset + 8:
        raise ValueError("truncated SLS1 header")
    version, dim = np.frombuffer(payload, dtype="<u4", count=2, offset=offset)
    if version != VERSION:
        raise ValueError(f"unsupported SLS1 version {version}")
    if dim not in (1, 2, 3):
        raise ValueError(f"invalid SLS1 dimension {dim}")
    offset += 8
    dim = int(dim)
    if len(payload) < offset + 12 * dim:
        raise ValueError("truncated SLS1 header")
    sizes = np.frombuffer(payload, dtype="<u4", count=dim, offset=offset)
    offset += 4 * dim
    lengths = np.frombuffer(payload, dtype="<f8", count=dim, offset=offset)
    offset += 8 * dim
    grid = make_grid(dim, [int(n) for n in sizes], [float(L) for L in lengths])
    expected = offset + 16 * grid.n_points
    if len(payload) != expected:
        raise ValueError(f"SLS1 payload has {len(payload)} bytes, expected {expected}")
    pairs = np.frombuffer(payload, dtype="<f8", offset=offset).reshape(grid.n_points, 2)
    return ComplexField(grid, (pairs[:, 0] + 1j * pairs[:, 1]).reshape(grid.shape))


def write_snapshot(path: Union[str, Path], field: ComplexField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_snapshot(field))
    logger.debug(f"💾 Snapshot escrito: {path}")
    return path


def read_snapshot(path: Union[str, Path]) -> ComplexField:
    return decode_snapshot(Path(path).read_bytes())
