"""CSV tables and binary containers for bands, projector fields and Wannier functions.

Binary containers are a little-endian int64 header followed by row-major
complex128 data.
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .bloch import PlaneWaveBasis
from .errors import ModelFileError
from .projector import KGrid, ProjectorField
from .wannier import WannierFunction

logger = logging.getLogger(__name__)

NUMBER_FORMAT = "%.17g"
HEADER_DTYPE = "<i8"
DATA_DTYPE = "<c16"
PROJECTOR_MAGIC = 0x50524F4A
WANNIER_MAGIC = 0x57414E4E


def write_table(path: Path, columns: Sequence[str], rows: np.ndarray) -> Path:
    """Numeric CSV with 17 significant digits"""
    path = Path(path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float)).reshape(-1, len(columns))
    np.savetxt(path, rows, fmt=NUMBER_FORMAT, delimiter=",", header=",".join(columns), comments="")
    logger.debug("wrote %d rows to %s", len(rows), path)
    return path


def read_table(path: Path) -> Tuple[List[str], np.ndarray]:
    path = Path(path)
    with path.open() as handle:
        columns = handle.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return columns, data.reshape(-1, len(columns))


def band_columns(dimension: int, count: int) -> List[str]:
    return [f"k{j + 1}" for j in range(dimension)] + [f"E{n + 1}" for n in range(count)]


def write_bands(path: Path, table: np.ndarray, dimension: int) -> Path:
    count = table.shape[1] - dimension
    return write_table(path, band_columns(dimension, count), table)


def write_records(path: Path, columns: Sequence[str], records: Iterable[Sequence[object]]) -> Path:
    """CSV of mixed text and numbers; floats keep 17 significant digits"""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for record in records:
            writer.writerow([NUMBER_FORMAT % v if isinstance(v, float) else v for v in record])
    return path


def write_masses(path: Path, w: WannierFunction) -> Path:
    d = len(w.counts)
    cells = w.cells.reshape(-1, d)
    order = np.lexsort(cells.T[::-1])
    rows = np.column_stack([cells, w.distances.reshape(-1), w.masses.reshape(-1)])[order]
    columns = [f"gamma{j + 1}" for j in range(d)] + ["distance", "mass"]
    return write_table(path, columns, rows)


def _write_container(path: Path, header: Sequence[int], data: np.ndarray) -> Path:
    path = Path(path)
    with path.open("wb") as handle:
        handle.write(np.asarray(header, dtype=HEADER_DTYPE).tobytes())
        handle.write(np.ascontiguousarray(data, dtype=DATA_DTYPE).tobytes())
    return path


def _read_header(raw: bytes, magic: int, what: str) -> Tuple[np.ndarray, int]:
    head = np.frombuffer(raw[:16], dtype=HEADER_DTYPE)
    if len(head) < 2 or int(head[0]) != magic:
        raise ModelFileError(f"not a {what} container")
    d = int(head[1])
    return head, d


def write_projector_field(path: Path, field: ProjectorField) -> Path:
    """Header: magic, d, N_1..N_d, centered, M, m, cutoff"""
    header = [PROJECTOR_MAGIC, field.dimension, *field.grid.counts, int(field.grid.centered)]
    header += [field.size, field.rank, field.cutoff]
    return _write_container(path, header, field.matrices)


def read_projector_field(path: Path) -> ProjectorField:
    raw = Path(path).read_bytes()
    _, d = _read_header(raw, PROJECTOR_MAGIC, "projector field")
    length = 2 + d + 4
    header = np.frombuffer(raw[: 8 * length], dtype=HEADER_DTYPE)
    counts = tuple(int(n) for n in header[2 : 2 + d])
    centered, size, rank, cutoff = (int(v) for v in header[2 + d :])
    data = np.frombuffer(raw[8 * length :], dtype=DATA_DTYPE)
    grid = KGrid(counts, centered=bool(centered))
    matrices = data.reshape(counts + (size, size)).copy()
    if cutoff > 0:
        basis = PlaneWaveBasis(d, cutoff)
        embeddings = tuple(basis.shift_matrix(j, +1).astype(complex) for j in range(d))
    else:
        embeddings = tuple(np.eye(size, dtype=complex) for _ in range(d))
    return ProjectorField(grid=grid, matrices=matrices, rank=rank, embeddings=embeddings, cutoff=cutoff, label=Path(path).stem)


def write_wannier(path: Path, w: WannierFunction) -> Path:
    """Header: magic, d, N_1..N_d, resolution, points per cell; samples in FFT cell order"""
    header = [WANNIER_MAGIC, len(w.counts), *w.counts, w.resolution, w.samples.shape[-1]]
    return _write_container(path, header, w.samples)


def read_wannier(path: Path) -> Tuple[Tuple[int, ...], int, np.ndarray]:
    """(cell counts, resolution, samples)"""
    raw = Path(path).read_bytes()
    _, d = _read_header(raw, WANNIER_MAGIC, "Wannier")
    length = 2 + d + 2
    header = np.frombuffer(raw[: 8 * length], dtype=HEADER_DTYPE)
    counts = tuple(int(n) for n in header[2 : 2 + d])
    resolution, points = int(header[2 + d]), int(header[3 + d])
    samples = np.frombuffer(raw[8 * length :], dtype=DATA_DTYPE).reshape(counts + (points,)).copy()
    return counts, resolution, samples


def ensure_directory(path: Optional[Path]) -> Path:
    path = Path(path or "out")
    path.mkdir(parents=True, exist_ok=True)
    return path
