"""Dense kernels: SVD, pseudoinverse, seeded Gaussians, power-method norms."""
from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

PINV_RTOL = 1e-12

# purpose codes folded into RNG stream tags
PROBE = 1
UNIFORMIZE = 2
NORM = 3
TEST = 99


class SvdResult(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def _finite(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite entries in matrix")
    return A


def svd(A) -> SvdResult:
    """Thin SVD ``A = U diag(S) V^T``."""
    A = _finite(A)
    if A.size == 0:
        r = 0
        return SvdResult(np.zeros((A.shape[0], r)), np.zeros(r), np.zeros((A.shape[1], r)))
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    return SvdResult(U, S, Vt.T)


def pinv(A, tol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse, dropping singular values <= tol * S[0]."""
    A = _finite(A)
    U, S, V = svd(A)
    if S.size == 0 or S[0] == 0.0:
        return np.zeros(A.T.shape)
    keep = S > tol * S[0]
    return (V[:, keep] / S[keep]) @ U[:, keep].T


def rank_by_tolerance(S, eps: float, rmax: int | None = None) -> int:
    """Smallest ``r`` with ``S[r] <= eps * S[0]``, capped at ``rmax``."""
    S = np.asarray(S)
    if S.size == 0 or S[0] <= 0.0:
        return 0
    r = int(np.count_nonzero(S > eps * S[0]))
    return r if rmax is None else min(r, rmax)


class RngStream:
    """Gaussian source keyed by a master seed and a tuple-of-ints tag.

    The same ``(seed, tag)`` always reproduces the same samples, whatever
    order streams are created or consumed in.
    """

    def __init__(self, seed: int, tag: Sequence[int] = ()):
        self.seed = int(seed)
        self.tag = tuple(int(t) for t in tag)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.tag)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        return self._gen.random(shape)


def gaussian(rows: int, cols: int, stream: RngStream) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("gaussian matrix needs rows, cols >= 1")
    return stream.normal((rows, cols))


def norm2_estimate(apply_a: Callable[[np.ndarray], np.ndarray],
                   apply_at: Callable[[np.ndarray], np.ndarray],
                   dim: int, iters: int = 100, starts: int = 5,
                   stream: RngStream | None = None,
                   history: list | None = None) -> float:
    """Power iteration on ``A^T A`` from ``starts`` random vectors.

    The callbacks receive ``dim x starts`` blocks so all starts advance
    together.  Returns the largest ``||A x||`` over the unit iterates.  If
    ``history`` is given, the per-iteration estimates (one row per
    iteration) are appended to it.
    """
    if dim < 1:
        raise ValueError("dimension must be positive")
    stream = stream or RngStream(0, (NORM,))
    X = stream.normal((dim, starts))
    X /= np.linalg.norm(X, axis=0)
    best = 0.0
    for _ in range(iters):
        AX = np.asarray(apply_a(X)).reshape(-1, starts)
        est = np.linalg.norm(AX, axis=0)
        if history is not None:
            history.append(est.copy())
        best = max(best, float(est.max()))
        Y = np.asarray(apply_at(AX)).reshape(dim, starts)
        ny = np.linalg.norm(Y, axis=0)
        if not np.any(ny > 0):
            break
        # a start that hits the null space restarts nowhere; keep it frozen
        ny[ny == 0] = 1.0
        X = Y / ny
    return best
