"""Randomized low-rank factorization ``A ~ U1 M U2^T`` from products with A and A^T."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import RngStream, gaussian, pinv, rank_by_tolerance, svd

OVERSAMPLE = 10


@dataclass
class LowRankFactor:
    U1: np.ndarray
    M: np.ndarray
    U2: np.ndarray

    @property
    def rank(self) -> int:
        return self.M.shape[0]

    def dense(self) -> np.ndarray:
        return self.U1 @ self.M @ self.U2.T


@dataclass
class ProbeData:
    """Sketches of an ``n x m`` matrix A: ``AR1 = A R1`` and ``AtR2 = A^T R2``."""

    AR1: np.ndarray
    AtR2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray

    @property
    def R2tA(self) -> np.ndarray:
        return self.AtR2.T


def make_probes(apply_a: Callable, apply_at: Callable, n: int, m: int, r: int,
                c: int = OVERSAMPLE, stream: RngStream | None = None) -> ProbeData:
    """Draw Gaussian probes and sketch A with one callback call per column."""
    k = r + c
    if k > min(n, m):
        raise ValueError("oversampled beyond dimension")
    stream = stream or RngStream(0)
    R1 = gaussian(m, k, stream)
    R2 = gaussian(n, k, stream)
    AR1 = np.column_stack([apply_a(R1[:, t]) for t in range(k)])
    AtR2 = np.column_stack([apply_at(R2[:, t]) for t in range(k)])
    return ProbeData(AR1, AtR2, R1, R2)


def rsvd_from_products(probe: ProbeData, r: int, eps: float | None = None) -> LowRankFactor:
    """Assemble the factorization from sketches.

    The retained rank is ``r`` or, when ``eps`` is given, the eps-rank of
    ``A R1``, whichever is smaller.  The probe width may exceed the block
    dimensions; the rank is then limited by the block itself.
    """
    AR1, AtR2, R1, R2 = probe.AR1, probe.AtR2, probe.R1, probe.R2
    n, k = AR1.shape
    m = AtR2.shape[0]
    if R1.shape != (m, k) or R2.shape != (n, k) or AtR2.shape[1] != k:
        raise ValueError(
            f"probe shape mismatch: AR1 {AR1.shape}, AtR2 {AtR2.shape}, "
            f"R1 {R1.shape}, R2 {R2.shape}")
    U1, S1, _ = svd(AR1)
    U2, _, _ = svd(AtR2)
    rk = min(r, U1.shape[1], U2.shape[1])
    if eps is not None:
        rk = min(rk, rank_by_tolerance(S1, eps))
    elif S1.size == 0 or S1[0] == 0.0:
        rk = 0
    U1, U2 = U1[:, :rk], U2[:, :rk]
    if rk == 0:
        return LowRankFactor(U1, np.zeros((0, 0)), U2)
    core = R2.T @ AR1
    M = pinv(R2.T @ U1) @ core @ pinv(U2.T @ R1)
    return LowRankFactor(U1, M, U2)
