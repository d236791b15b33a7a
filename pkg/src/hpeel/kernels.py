"""Backend selection for the batched block-product kernel.

The compiled extension is used when it imports; setting ``HPEEL_PURE_PYTHON=1``
forces the numpy fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels

try:
    if os.environ.get("HPEEL_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
_IMPLS = {"python": _pykernels.gemm_batch}
if _ckernels is not None:
    _IMPLS["cython"] = _ckernels.gemm_batch


def available_backends() -> list[str]:
    return list(_IMPLS)


@dataclass
class BatchPlan:
    """A packed list of block products ``Y[y_row:] += op(A_t) X[x_row:]``."""

    A: np.ndarray
    a_off: np.ndarray
    a_rows: np.ndarray
    a_cols: np.ndarray
    trans: np.ndarray
    x_row: np.ndarray
    y_row: np.ndarray

    @classmethod
    def build(cls, blocks, trans, x_row, y_row) -> "BatchPlan":
        blocks = [np.ascontiguousarray(b, dtype=np.float64) for b in blocks]
        sizes = np.array([b.size for b in blocks], dtype=np.int64)
        a_off = np.zeros(len(blocks), dtype=np.int64)
        if len(blocks):
            a_off[1:] = np.cumsum(sizes)[:-1]
        A = np.concatenate([b.ravel() for b in blocks]) if blocks else np.zeros(0)
        i64 = lambda v: np.ascontiguousarray(v, dtype=np.int64)
        return cls(A, a_off,
                   i64([b.shape[0] for b in blocks]), i64([b.shape[1] for b in blocks]),
                   np.ascontiguousarray(trans, dtype=np.uint8), i64(x_row), i64(y_row))

    @classmethod
    def concat(cls, plans) -> "BatchPlan":
        plans = list(plans)
        shift = np.cumsum([0] + [p.A.size for p in plans])[:-1]
        return cls(np.concatenate([p.A for p in plans]),
                   np.concatenate([p.a_off + s for p, s in zip(plans, shift)]),
                   *(np.concatenate([getattr(p, f) for p in plans])
                     for f in ("a_rows", "a_cols", "trans", "x_row", "y_row")))

    def __len__(self):
        return len(self.a_off)

    def run(self, X: np.ndarray, Y: np.ndarray, backend: str | None = None) -> None:
        """Accumulate into ``Y``; both must be C-contiguous float64 2-D arrays."""
        if len(self) == 0:
            return
        fn = _IMPLS[backend or BACKEND]
        fn(self.A, self.a_off, self.a_rows, self.a_cols, self.trans,
           X, self.x_row, Y, self.y_row, X.shape[1])
