"""Activation matrices, background models, and their on-disk formats.

Two formats are supported for matrices:

* CSV: a header line of node labels followed by one line of decimal reals per
  sample. UTF-8, comma separated, no quoting. A header whose first cell is
  ``sample_id`` marks a leading text column of sample labels.
* Binary (canonical): ``b"SSAM"``, u16 version, u64 n_samples, u64 n_nodes,
  row-major little-endian float32 values, then the CRC32 of the value block.

Background models are binary only: ``b"SSBM"``, u16 version, u64 J, u64 M,
J ascending columns of M little-endian float32 values, then CRC32.

Values are stored as float32 and promoted to float64 for computation, which is
exact, so binary round-trips are bit-exact.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MATRIX_MAGIC = b"SSAM"
MODEL_MAGIC = b"SSBM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHQQ")
_CRC = struct.Struct("<I")
_FLOAT_LE = np.dtype("<f4")

SAMPLE_ID_COLUMN = "sample_id"


class ActivationFormatError(ValueError):
    """Raised when an activation or model file does not conform to its format."""


class FormatVersionError(ActivationFormatError):
    """Wrong magic bytes or unsupported format version."""


class CorruptFileError(ActivationFormatError):
    """Truncated file, trailing garbage, or checksum mismatch."""


@dataclass(eq=False)
class ActivationMatrix:
    """Flattened activations of one layer, one row per sample.

    ``values`` is coerced to a C-contiguous float32 array. A matrix with zero
    rows is permitted so that empty evaluation batches flow through scoring;
    a background model still requires at least one row.
    """

    values: np.ndarray
    layer_name: str = ""
    sample_ids: list[str] | None = None

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ActivationFormatError(f"expected a 2-D matrix, got shape {values.shape}")
        if values.shape[1] < 1:
            raise ActivationFormatError("matrix must have at least one node column")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise ActivationFormatError(f"non-finite value at row {r}, column {c}")
        if self.sample_ids is not None:
            self.sample_ids = [str(s) for s in self.sample_ids]
            if len(self.sample_ids) != values.shape[0]:
                raise ActivationFormatError(
                    f"{len(self.sample_ids)} sample ids for {values.shape[0]} rows"
                )
        self.values = values

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    def ids(self) -> list[str]:
        """Sample labels, defaulting to the row index."""
        if self.sample_ids is not None:
            return list(self.sample_ids)
        return [str(i) for i in range(self.n_samples)]


@dataclass(eq=False)
class BackgroundModel:
    """Per-node ascending clean activations.

    ``sorted_columns`` has shape ``(J, M)``: row ``j`` holds the M background
    activations of node ``j`` in ascending order. The array is made read-only
    so a model can be shared between scorers.
    """

    sorted_columns: np.ndarray
    layer_name: str = ""

    def __post_init__(self) -> None:
        cols = np.ascontiguousarray(self.sorted_columns, dtype=np.float32)
        if cols.ndim != 2 or cols.shape[0] < 1 or cols.shape[1] < 1:
            raise ActivationFormatError(f"background model needs J >= 1 and M >= 1, got {cols.shape}")
        if not np.all(np.isfinite(cols)):
            raise ActivationFormatError("background model contains non-finite values")
        if cols.shape[1] > 1 and np.any(cols[:, 1:] < cols[:, :-1]):
            raise ActivationFormatError("background columns must be sorted ascending")
        if cols is self.sorted_columns:
            cols = cols.copy()
        cols.setflags(write=False)
        self.sorted_columns = cols

    @property
    def n_nodes(self) -> int:
        return self.sorted_columns.shape[0]

    @property
    def m_background(self) -> int:
        return self.sorted_columns.shape[1]


def build_background(matrix: ActivationMatrix) -> BackgroundModel:
    """Sort each node's background activations ascending."""
    if matrix.n_samples < 1:
        raise ActivationFormatError("background matrix needs at least one sample")
    return BackgroundModel(np.sort(matrix.values.T, axis=1), layer_name=matrix.layer_name)


# --------------------------------------------------------------------------
# truncation
# --------------------------------------------------------------------------


def _flat_rows(ragged: Iterable[Sequence[float] | np.ndarray]) -> list[np.ndarray]:
    rows = [np.asarray(r, dtype=np.float64).ravel() for r in ragged]
    for i, r in enumerate(rows):
        if r.size < 1:
            raise ActivationFormatError(f"sample {i} has no activations")
    return rows


def truncate_and_flatten(
    ragged: Iterable[Sequence[float] | np.ndarray],
    target_len: int | str = "auto",
    layer_name: str = "",
    sample_ids: list[str] | None = None,
) -> ActivationMatrix:
    """Cut variable-length activation sequences to a common length.

    Multi-dimensional samples are flattened row-major first, so for
    ``(time, features)`` activations the cut falls on the time axis.
    ``target_len="auto"`` uses the shortest sample. An explicit length longer
    than some sample is an error.
    """
    rows = _flat_rows(ragged)
    if target_len == "auto":
        if not rows:
            raise ActivationFormatError("cannot infer a target length from zero samples")
        target = min(r.size for r in rows)
    else:
        target = int(target_len)
        if target < 1:
            raise ActivationFormatError(f"target length must be >= 1, got {target}")
        for i, r in enumerate(rows):
            if r.size < target:
                raise ActivationFormatError(
                    f"sample {i} has length {r.size}, shorter than target length {target}"
                )
    values = np.array([r[:target] for r in rows], dtype=np.float64).reshape(len(rows), target)
    return ActivationMatrix(values, layer_name=layer_name, sample_ids=sample_ids)


def truncate_jointly(
    *sets: Iterable[Sequence[float] | np.ndarray] | ActivationMatrix,
    target_len: int | str = "auto",
) -> list[ActivationMatrix]:
    """Truncate several sample sets to one shared length.

    In auto mode the length is the minimum over every sample of every set,
    so background, clean and anomalous matrices end up with equal width.
    """
    collected: list[list[np.ndarray]] = []
    meta: list[tuple[str, list[str] | None]] = []
    for s in sets:
        if isinstance(s, ActivationMatrix):
            collected.append([row for row in s.values])
            meta.append((s.layer_name, s.sample_ids))
        else:
            collected.append(_flat_rows(s))
            meta.append(("", None))
    if target_len == "auto":
        lengths = [r.size for rows in collected for r in rows]
        if not lengths:
            raise ActivationFormatError("cannot infer a target length from zero samples")
        target_len = min(lengths)
    return [
        truncate_and_flatten(rows, target_len, layer_name=name, sample_ids=ids)
        for rows, (name, ids) in zip(collected, meta)
    ]


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _read_csv(path: Path, layer_name: str) -> ActivationMatrix:
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ActivationFormatError(f"{path}: missing header line")
    header = [h.strip() for h in lines[0].split(",")]
    has_ids = header[0] == SAMPLE_ID_COLUMN
    labels = header[1:] if has_ids else header
    if not labels or any(not h for h in labels):
        raise ActivationFormatError(f"{path}: malformed header {lines[0]!r}")
    width = len(header)

    rows: list[np.ndarray] = []
    ids: list[str] = []
    for r, line in enumerate(lines[1:]):
        if not line.strip():
            # only a trailing blank line is tolerated
            if all(not rest.strip() for rest in lines[r + 2 :]):
                break
            raise ActivationFormatError(f"{path}: blank line at row {r}")
        cells = line.split(",")
        if len(cells) != width:
            raise ActivationFormatError(
                f"{path}: row {r} has {len(cells)} cells, header has {width}"
            )
        if has_ids:
            ids.append(cells[0].strip())
            cells = cells[1:]
        try:
            row = np.array(cells, dtype=np.float64)
        except ValueError:
            for c, cell in enumerate(cells):
                try:
                    float(cell)
                except ValueError:
                    raise ActivationFormatError(
                        f"{path}: non-numeric cell {cell.strip()!r} at row {r}, column {c}"
                    ) from None
            raise
        bad = np.flatnonzero(~np.isfinite(row))
        if bad.size:
            raise ActivationFormatError(f"{path}: non-finite value at row {r}, column {bad[0]}")
        rows.append(row)

    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(labels))
    return ActivationMatrix(values, layer_name=layer_name, sample_ids=ids if has_ids else None)


def _write_csv(matrix: ActivationMatrix, path: Path) -> None:
    header = [f"j{j}" for j in range(matrix.n_nodes)]
    if matrix.sample_ids is not None:
        header.insert(0, SAMPLE_ID_COLUMN)
    out = [",".join(header)]
    # repr of the float64 image of each float32 parses back to the same float32
    for i, row in enumerate(matrix.values.astype(np.float64).tolist()):
        cells = [repr(v) for v in row]
        if matrix.sample_ids is not None:
            cells.insert(0, matrix.sample_ids[i])
        out.append(",".join(cells))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# binary
# --------------------------------------------------------------------------


def _pack(magic: bytes, rows: int, cols: int, values: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(values, dtype=_FLOAT_LE).tobytes()
    return _HEADER.pack(magic, FORMAT_VERSION, rows, cols) + payload + _CRC.pack(zlib.crc32(payload))


def _unpack(data: bytes, magic: bytes, path: Path) -> np.ndarray:
    if len(data) < len(magic) or data[: len(magic)] != magic:
        raise FormatVersionError(f"{path}: bad magic bytes, expected {magic!r}")
    if len(data) < _HEADER.size:
        raise CorruptFileError(f"{path}: truncated header")
    _, version, rows, cols = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"{path}: unsupported format version {version}")
    n_bytes = rows * cols * _FLOAT_LE.itemsize
    expected = _HEADER.size + n_bytes + _CRC.size
    if len(data) != expected:
        raise CorruptFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    payload = data[_HEADER.size : _HEADER.size + n_bytes]
    (crc,) = _CRC.unpack_from(data, _HEADER.size + n_bytes)
    if zlib.crc32(payload) != crc:
        raise CorruptFileError(f"{path}: checksum mismatch")
    return np.frombuffer(payload, dtype=_FLOAT_LE).reshape(rows, cols).astype(np.float32)


def _check_format(fmt: str) -> str:
    if fmt not in ("csv", "binary"):
        raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'binary'")
    return fmt


def load_matrix(path: str | Path, format: str = "binary", layer_name: str = "") -> ActivationMatrix:
    """Read and validate an activation matrix."""
    path = Path(path)
    if _check_format(format) == "csv":
        return _read_csv(path, layer_name)
    values = _unpack(path.read_bytes(), MATRIX_MAGIC, path)
    if values.shape[1] < 1:
        raise ActivationFormatError(f"{path}: matrix has zero node columns")
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = bad[0]
        raise ActivationFormatError(f"{path}: non-finite value at row {r}, column {c}")
    return ActivationMatrix(values, layer_name=layer_name)


def save_matrix(matrix: ActivationMatrix, path: str | Path, format: str = "binary") -> None:
    """Write a matrix; sample ids survive only the CSV format."""
    path = Path(path)
    if _check_format(format) == "csv":
        _write_csv(matrix, path)
    else:
        path.write_bytes(_pack(MATRIX_MAGIC, matrix.n_samples, matrix.n_nodes, matrix.values))


def save_model(model: BackgroundModel, path: str | Path) -> None:
    Path(path).write_bytes(
        _pack(MODEL_MAGIC, model.n_nodes, model.m_background, model.sorted_columns)
    )


def load_model(path: str | Path, layer_name: str = "") -> BackgroundModel:
    path = Path(path)
    return BackgroundModel(_unpack(path.read_bytes(), MODEL_MAGIC, path), layer_name=layer_name)


def load_ragged(path: str | Path) -> list[np.ndarray]:
    """Read variable-length samples: one comma-separated line per sample, no header."""
    path = Path(path)
    rows = []
    for r, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        cells = line.split(",")
        row = []
        for c, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise ActivationFormatError(
                    f"{path}: non-numeric cell {cell.strip()!r} at row {r}, column {c}"
                ) from None
            if not math.isfinite(v):
                raise ActivationFormatError(f"{path}: non-finite value at row {r}, column {c}")
            row.append(v)
        rows.append(np.array(row))
    return rows
