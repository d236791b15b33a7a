"""Top-down peeling: build a hierarchical representation from matvecs alone."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import hmat
from .grid import (FIRST_LEVEL, GridSpec, box_slice, diagonal_sets, il_pairs,
                   interaction_list, neighbor_list, nl_pairs, peeling_sets)
from .hmat import H1Block, HRep, Variant, from_tree, partial_tree, to_tree
from .linalg import PROBE, RngStream, gaussian
from .oracle import MatvecOracle
from .rsvd import OVERSAMPLE, ProbeData, rsvd_from_products


@dataclass
class PeelConfig:
    variant: Variant = Variant.H2
    eps: float = 1e-6
    r_cap: int = 10
    c: int = OVERSAMPLE
    seed: int = 0
    L: int | None = None
    rU_cap: int | None = None
    randomized_uniformize: bool = True
    threads: int = 1

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.r_cap < 1 or self.c < 0:
            raise ValueError("need r_cap >= 1 and c >= 0")

    @property
    def probe_width(self) -> int:
        return self.r_cap + self.c

    @property
    def basis_cap(self) -> int:
        return self.rU_cap if self.rU_cap is not None else 4 * self.r_cap

    def grid_for(self, N: int) -> GridSpec:
        if self.L is not None:
            return GridSpec(N, self.L)
        return GridSpec(N, default_leaf_level(N))


def default_leaf_level(N: int) -> int:
    """Leaf boxes of 8 x 8 points, but never above level 3."""
    return max(FIRST_LEVEL, int(math.log2(N)) - 3)


def predicted_matvecs(grid: GridSpec, probe_width: int) -> int:
    return 64 * probe_width * (grid.L - 2) + 16 * grid.box_size(grid.L)


@dataclass
class LevelStats:
    level: int
    matvecs: int
    seconds: float
    blocks: int
    avg_rank: float


@dataclass
class PeelStats:
    matvec_count: int = 0
    per_level: list[LevelStats] = field(default_factory=list)
    diag_matvecs: int = 0
    diag_seconds: float = 0.0
    memory_bytes: int = 0
    seconds: float = 0.0


@contextmanager
def _mapper(threads: int):
    if threads <= 1:
        yield map
    else:
        with ThreadPoolExecutor(threads) as ex:
            yield ex.map


def _probe(config: PeelConfig, grid: GridSpec, box) -> np.ndarray:
    p, q = (box.i - 1) % 8 + 1, (box.j - 1) % 8 + 1
    stream = RngStream(config.seed, (PROBE, box.level, p, q, box.i, box.j))
    return gaussian(grid.box_size(box.level), config.probe_width, stream)


def _oracle_tree(oracle: MatvecOracle, grid: GridSpec, Xt: np.ndarray) -> np.ndarray:
    return to_tree(grid, np.asarray(oracle.apply(from_tree(grid, Xt))).reshape(Xt.shape))


def peel_level(oracle: MatvecOracle, rep: HRep, level: int, config: PeelConfig,
               mapper=map) -> dict:
    """H1 blocks of ``G(level)`` from ``64 * (r_cap + c)`` oracle applications."""
    grid = rep.grid
    if oracle.dim != grid.n:
        raise ValueError(f"oracle dimension {oracle.dim} != grid size {grid.n}")
    if rep.built_through != level - 1:
        raise ValueError(f"rep built through {rep.built_through}, need {level - 1}")
    k = config.probe_width
    probes, harvest = {}, {}
    for S in peeling_sets(grid, level):
        Rt = np.zeros((grid.n, k))
        for J in S:
            probes[J] = _probe(config, grid, J)
            Rt[box_slice(grid, J)] = probes[J]
        Yt = _oracle_tree(oracle, grid, Rt)
        if level > FIRST_LEVEL:
            Yt -= partial_tree(rep, Rt, level - 1)
        for J in S:
            for I in interaction_list(grid, J):
                harvest[I, J] = Yt[box_slice(grid, I)].copy()

    def one(pair):
        A, B = pair
        probe = ProbeData(harvest[A, B], harvest[B, A], probes[B], probes[A])
        f = rsvd_from_products(probe, config.r_cap, config.eps)
        return pair, H1Block(A, B, f.U1, f.M, f.U2)

    return dict(mapper(one, il_pairs(grid, level)))


def extract_diagonal(oracle: MatvecOracle, rep: HRep, config: PeelConfig | None = None) -> dict:
    """Dense near-field blocks ``D(I, J)``, ``J`` in ``NL(I)``, from identity probes."""
    grid = rep.grid
    if rep.built_through != grid.L:
        raise ValueError("diagonal extraction needs a rep built through the leaf level")
    m = grid.box_size(grid.L)
    got = {}
    for S in diagonal_sets(grid):
        Et = np.zeros((grid.n, m))
        for J in S:
            Et[box_slice(grid, J)] = np.eye(m)
        Yt = _oracle_tree(oracle, grid, Et) - partial_tree(rep, Et, grid.L)
        for J in S:
            for I in set(neighbor_list(grid, J)):
                got[I, J] = Yt[box_slice(grid, I)].copy()
    return {(A, B): 0.5 * (got[A, B] + got[B, A].T) for A, B in nl_pairs(grid, grid.L)}


def construct(oracle: MatvecOracle, config: PeelConfig,
              sink: Callable[[dict], None] | None = None) -> tuple[HRep, PeelStats]:
    """Peel levels 3..L, compress per variant, then extract the near field."""
    N = math.isqrt(oracle.dim)
    if N * N != oracle.dim:
        raise ValueError(f"oracle dimension {oracle.dim} is not a square grid")
    grid = config.grid_for(N)
    rep = HRep(config.variant, grid, config.eps, config.seed)
    stats = PeelStats()
    start = oracle.count
    t_start = time.perf_counter()
    with _mapper(config.threads) as mapper:
        for level in range(FIRST_LEVEL, grid.L + 1):
            c0, t0 = oracle.count, time.perf_counter()
            blocks = peel_level(oracle, rep, level, config, mapper)
            _install_level(rep, level, blocks, config, mapper)
            rec = LevelStats(level, oracle.count - c0, time.perf_counter() - t0,
                             len(blocks), rep.average_rank(level))
            stats.per_level.append(rec)
            if sink is not None:
                sink(dict(rec.__dict__))
        c0, t0 = oracle.count, time.perf_counter()
        rep.diag = extract_diagonal(oracle, rep, config)
        rep.invalidate()
    stats.diag_matvecs = oracle.count - c0
    stats.diag_seconds = time.perf_counter() - t0
    if sink is not None:
        sink(dict(level="diag", matvecs=stats.diag_matvecs, seconds=stats.diag_seconds,
                  blocks=len(rep.diag), avg_rank=float(grid.box_size(grid.L))))
    stats.matvec_count = oracle.count - start
    stats.memory_bytes = hmat.memory_bytes(rep)
    stats.seconds = time.perf_counter() - t_start
    symmetrize(rep)
    return rep, stats


def _install_level(rep: HRep, level: int, blocks: dict, config: PeelConfig, mapper) -> None:
    if rep.variant is Variant.H1:
        rep.h1[level] = blocks
        rep.built_through = level
        rep.invalidate()
        return
    bases, cps = hmat.uniformize(rep.grid, level, blocks, config.eps, config.basis_cap,
                                 config.c, config.seed, config.randomized_uniformize,
                                 mapper=mapper)
    if rep.variant is Variant.UNIFORM or level == FIRST_LEVEL:
        rep.bases[level], rep.couplings[level] = bases, cps
        rep.built_through = level
        rep.invalidate()
    else:
        hmat.add_h2_level(rep, level, bases, cps, config.basis_cap)


def symmetrize(rep: HRep) -> HRep:
    """Audit single-orientation storage: each pair once, applied both ways."""
    tables = list(rep.h1.items()) + list(rep.couplings.items())
    for level, table in tables:
        for A, B in table:
            if A != B and (B, A) in table:
                raise ValueError(f"duplicate twin stored at level {level}: {A}, {B}")
        have = {(A, B) if A < B else (B, A) for A, B in table}
        if have != set(il_pairs(rep.grid, level)):
            raise ValueError(f"pair inventory at level {level} does not match the interaction lists")
    if rep.diag is not None:
        for A, B in rep.diag:
            if A != B and (B, A) in rep.diag:
                raise ValueError(f"duplicate twin in near field: {A}, {B}")
    return rep
