"""Test problems and black-box matvec oracles.

The elliptic operators live on the periodic ``N x N`` grid with the
unscaled five-point stencil (diagonal 4, off-diagonals -1), i.e. no
``1/h^2`` factor.  Grid arrays are indexed ``[k1, k2]`` and flattened to
``k1 + N * k2`` like the rest of the package.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import yaml

from .linalg import RngStream

KINDS = ("laplace_plus_V", "divergence_form")
# purpose codes for the potential / coefficient streams
_W_TAG, _U_TAG = 11, 12


class MatvecOracle:
    """Counted black-box ``f -> G f``.

    ``apply`` accepts a vector or an ``n x k`` block; a block counts as
    ``k`` applications.  The counter is guarded by a lock.
    """

    def __init__(self, dim: int, fn: Callable[[np.ndarray], np.ndarray]):
        self.dim = dim
        self._fn = fn
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape[0] != self.dim or f.ndim > 2:
            raise ValueError(f"oracle expects leading dimension {self.dim}, got {f.shape}")
        k = 1 if f.ndim == 1 else f.shape[1]
        with self._lock:
            self._count += k
        return self._fn(f)

    __call__ = apply

    def uncounted(self, f) -> np.ndarray:
        """Apply without touching the counter (error measurement only)."""
        return self._fn(np.asarray(f, dtype=np.float64))


@dataclass(frozen=True)
class EllipticProblem:
    N: int
    kind: str = "laplace_plus_V"
    potential: str = "paper1"
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")

    @property
    def V(self) -> np.ndarray:
        return random_potential(self.potential, self.scale, self.N, self.seed)

    @property
    def a(self) -> np.ndarray | None:
        if self.kind != "divergence_form":
            return None
        return 1.0 + RngStream(self.seed, (_U_TAG,)).uniform((self.N, self.N))


def random_potential(kind: str, scale: float, N: int, seed: int) -> np.ndarray:
    """``paper1``: ``1 + W``; ``scaled``: ``scale * W``; W uniform on [0, 1]."""
    W = RngStream(seed, (_W_TAG,)).uniform((N, N))
    if kind == "paper1":
        return 1.0 + W
    if kind == "scaled":
        if scale <= 0:
            raise ValueError("scale must be positive")
        return scale * W
    raise ValueError(f"unknown potential kind {kind!r}")


def _index(N: int) -> np.ndarray:
    k1, k2 = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    return k1 + N * k2


def _edges(N: int):
    """(i, j) index pairs of every +k1 and +k2 edge on the torus."""
    idx = _index(N)
    right = np.roll(idx, -1, axis=0)
    up = np.roll(idx, -1, axis=1)
    src = np.concatenate([idx.ravel(), idx.ravel()])
    dst = np.concatenate([right.ravel(), up.ravel()])
    return src, dst


def build_operator(p: EllipticProblem) -> sp.csr_matrix:
    """Sparse symmetric five-point operator ``-div(a grad) + V`` (a = 1 for Laplace)."""
    N = p.N
    n = N * N
    src, dst = _edges(N)
    if p.kind == "divergence_form":
        a = p.a.ravel(order="F")
        w = 0.5 * (a[src] + a[dst])
    else:
        w = np.ones(src.size)
    V = p.V.ravel(order="F")
    deg = np.bincount(src, weights=w, minlength=n) + np.bincount(dst, weights=w, minlength=n)
    rows = np.concatenate([src, dst, np.arange(n)])
    cols = np.concatenate([dst, src, np.arange(n)])
    vals = np.concatenate([-w, -w, deg + V])
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def inverse_oracle(H, method: str = "direct_factorization") -> MatvecOracle:
    """Oracle for ``H^{-1}``: sparse LU with a symmetric fill-reducing order, or dense."""
    n = H.shape[0]
    if method == "direct_factorization":
        try:
            lu = spla.splu(sp.csc_matrix(H), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as e:
            raise ValueError(f"factorization failed: {e}") from e
        return MatvecOracle(n, lu.solve)
    if method == "dense_inverse":
        G = dense_inverse(H)
        return MatvecOracle(n, lambda f: G @ f)
    raise ValueError(f"unknown method {method!r}")


def dense_inverse(H) -> np.ndarray:
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
    if Hd.shape[0] > 64 * 64:
        raise ValueError("dense inverse is desk-scale only (N <= 64)")
    try:
        c = scipy.linalg.cho_factor(Hd)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"operator is not positive definite: {e}") from e
    G = scipy.linalg.cho_solve(c, np.eye(Hd.shape[0]))
    return 0.5 * (G + G.T)


def explicit_oracle(M) -> MatvecOracle:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("explicit oracle needs a square matrix")
    return MatvecOracle(M.shape[0], lambda f: M @ f)


def load_recipe(path) -> EllipticProblem:
    """Read a problem recipe (YAML/``key: value`` text: N, kind, potential, scale, seed)."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    return EllipticProblem(**data)


def export_grid_csv(grid: np.ndarray, path) -> None:
    """Write an ``N x N`` grid array as CSV, one k1 row per line."""
    np.savetxt(path, np.asarray(grid), delimiter=",", fmt="%.17g")
