"""Empirical p-values of test activations against a background model.

For node ``j`` with background column ``A[:, j]`` of size M, the p-value of a
test activation ``a`` is

    p = (#{z : A[z, j] >= a} + 1) / (M + 1)

so it lies on the grid ``{1/(M+1), ..., 1}`` and is never zero. Only the upper
tail is tested: unusually high activations give small p-values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from subscan.io import ActivationMatrix, BackgroundModel


@dataclass(eq=False)
class PValueVector:
    """Per-node p-values of one sample, all in ``(0, 1]``.

    ``counts`` optionally carries the integer numerators ``#{>=} + 1``; the
    scanner sorts those instead of the floats when present.
    """

    values: np.ndarray
    m_background: int
    sample_id: str | None = None
    counts: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.values)


def empirical_pvalue(sorted_column: np.ndarray, activation: float) -> float:
    """p-value of one activation against an ascending background column."""
    column = np.asarray(sorted_column, dtype=np.float64)
    m = len(column)
    n_geq = m - int(np.searchsorted(column, float(activation), side="left"))
    return (n_geq + 1) / (m + 1)


# rows per block in count_geq; keeps the search temporaries cache resident
_CHUNK_ROWS = 2048


def _float32_keys(activations: np.ndarray) -> np.ndarray:
    """Round float64 activations up to float32 without changing any comparison.

    For float32 ``c`` and float64 ``a``, ``c < a`` iff ``c < roundup32(a)``,
    because no float32 lies strictly between ``a`` and its float32 ceiling.
    """
    with np.errstate(over="ignore"):
        keys = activations.astype(np.float32)
    low = keys < activations
    keys[low] = np.nextafter(keys[low], np.float32(np.inf))
    return keys


def _count_below_block(flat: np.ndarray, m: int, keys: np.ndarray, itype) -> np.ndarray:
    n_rows = keys.shape[0]
    start = np.arange(n_rows, dtype=itype) * itype(m)
    pos = start.copy()
    probe = np.empty_like(pos)
    vals = np.empty(n_rows, dtype=flat.dtype)
    below = np.empty(n_rows, dtype=bool)
    # branchless lower bound, identical step sequence for every row
    n = m
    while n > 1:
        half = n >> 1
        np.add(pos, half, out=probe)
        flat.take(probe, out=vals)
        np.less(vals, keys, out=below)
        np.multiply(below, half, out=probe, casting="unsafe")
        pos += probe
        n -= half
    flat.take(pos, out=vals)
    np.less(vals, keys, out=below)
    pos += below
    pos -= start
    return pos


def count_geq(sorted_columns: np.ndarray, activations: np.ndarray) -> np.ndarray:
    """Number of background entries ``>= activations[j]`` in each row ``j``.

    A vectorised binary search run in lockstep over all rows, O(J log M).
    """
    n_rows, m = sorted_columns.shape
    activations = np.asarray(activations, dtype=np.float64)
    if sorted_columns.dtype == np.float32:
        keys = _float32_keys(activations)
    else:
        sorted_columns = np.asarray(sorted_columns, dtype=np.float64)
        keys = activations
    itype = np.int32 if _CHUNK_ROWS * m < np.iinfo(np.int32).max else np.int64
    below = np.empty(n_rows, dtype=np.int64)
    for lo in range(0, n_rows, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, n_rows)
        block = np.ascontiguousarray(sorted_columns[lo:hi]).reshape(-1)
        below[lo:hi] = _count_below_block(block, m, keys[lo:hi], itype)
    return m - below


def pvalues_for_sample(
    model: BackgroundModel, sample: np.ndarray, sample_id: str | None = None
) -> PValueVector:
    sample = np.asarray(sample, dtype=np.float64).ravel()
    if sample.shape[0] != model.n_nodes:
        raise ValueError(
            f"sample has {sample.shape[0]} activations, background model has {model.n_nodes} nodes"
        )
    if not np.all(np.isfinite(sample)):
        raise ValueError("sample contains non-finite activations")
    m = model.m_background
    counts = count_geq(model.sorted_columns, sample) + 1
    return PValueVector(counts / (m + 1), m_background=m, sample_id=sample_id, counts=counts)


def pvalues_for_matrix(model: BackgroundModel, matrix: ActivationMatrix) -> list[PValueVector]:
    """Row-wise :func:`pvalues_for_sample`; rows are scored independently."""
    if matrix.n_nodes != model.n_nodes:
        raise ValueError(
            f"matrix has {matrix.n_nodes} nodes, background model has {model.n_nodes}"
        )
    ids = matrix.ids()
    return [pvalues_for_sample(model, row, sample_id=ids[i]) for i, row in enumerate(matrix.values)]
