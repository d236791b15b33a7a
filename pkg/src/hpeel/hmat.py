"""Hierarchical representations (H1, uniform H1, H2) and their algebra.

All factor rows are stored in *tree order* (see :mod:`hpeel.grid`): the rows
of a basis on box ``I`` follow ``tree_order(grid)[box_slice(grid, I)]``.
Public ``apply_*`` functions take and return naturally ordered vectors.

Each interaction pair is stored once, keyed ``(A, B)``; the block ``G(A, B)``
is represented and ``G(B, A)`` is applied as its transpose.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import FIRST_LEVEL, BoxId, GridSpec, box_slice, il_pairs, tree_order
from .kernels import BatchPlan
from .linalg import UNIFORMIZE, RngStream, gaussian, rank_by_tolerance, svd
from .rsvd import OVERSAMPLE

DENSE_LIMIT = 64

Pair = tuple[BoxId, BoxId]


class Variant(str, Enum):
    H1 = "H1"
    UNIFORM = "uniformH1"
    H2 = "H2"


@dataclass
class H1Block:
    """``G(I, J) ~ U_IJ M U_JI^T``."""

    I: BoxId
    J: BoxId
    U_IJ: np.ndarray
    M: np.ndarray
    U_JI: np.ndarray

    @property
    def rank(self) -> int:
        return self.M.shape[0]

    def dense(self) -> np.ndarray:
        return self.U_IJ @ self.M @ self.U_JI.T


@dataclass
class UniformBasis:
    """Shared basis of box ``I`` with singular-value weights ``S``.

    In an H2 representation the explicit ``U`` of non-leaf boxes is
    dropped (``U is None``) once transfer matrices reach it.
    """

    I: BoxId
    U: np.ndarray | None
    S: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.S)


@dataclass
class UniformBlock:
    I: BoxId
    J: BoxId
    N: np.ndarray


@dataclass
class TransferMap:
    """``U_I(C, :) ~ U_C T``."""

    C: BoxId
    I: BoxId
    T: np.ndarray


@dataclass
class HRep:
    variant: Variant
    grid: GridSpec
    eps: float = 0.0
    seed: int = 0
    h1: dict[int, dict[Pair, H1Block]] = field(default_factory=dict)
    bases: dict[int, dict[BoxId, UniformBasis]] = field(default_factory=dict)
    couplings: dict[int, dict[Pair, UniformBlock]] = field(default_factory=dict)
    transfers: dict[int, dict[BoxId, TransferMap]] = field(default_factory=dict)
    diag: dict[Pair, np.ndarray] | None = None
    built_through: int = FIRST_LEVEL - 1
    _plans: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.variant = Variant(self.variant)

    def invalidate(self) -> None:
        self._plans.clear()

    @property
    def complete(self) -> bool:
        return self.diag is not None and self.built_through == self.grid.L

    def levels(self) -> range:
        return range(FIRST_LEVEL, self.built_through + 1)

    def average_rank(self, level: int) -> float:
        if self.variant is Variant.H1:
            ranks = [b.rank for b in self.h1.get(level, {}).values()]
        else:
            ranks = [b.rank for b in self.bases.get(level, {}).values()]
        return float(np.mean(ranks)) if ranks else 0.0


# ------------------------------------------------------------------ plans

def _rows(grid: GridSpec, b: BoxId) -> int:
    return box_slice(grid, b).start


def _h1_plans(rep: HRep, level: int):
    key = ("h1", level)
    if key not in rep._plans:
        g = rep.grid
        blocks = list(rep.h1.get(level, {}).values())
        off, tmp = [], 0
        for b in blocks:
            off.append(tmp)
            tmp += b.rank
        off = np.array(off, dtype=np.int64)
        rows_i = [_rows(g, b.I) for b in blocks]
        rows_j = [_rows(g, b.J) for b in blocks]
        rev = off + tmp
        ones, zeros = np.ones(len(blocks)), np.zeros(len(blocks))
        # forward G(I,J) f(J) into t[off], reverse G(I,J)^T f(I) into t[rev]
        s1 = BatchPlan.build([b.U_JI for b in blocks] + [b.U_IJ for b in blocks],
                             np.r_[ones, ones], rows_j + rows_i, np.r_[off, rev])
        s2 = BatchPlan.build([b.M for b in blocks] * 2, np.r_[zeros, ones],
                             np.r_[off, rev], np.r_[off, rev])
        s3 = BatchPlan.build([b.U_IJ for b in blocks] + [b.U_JI for b in blocks],
                             np.r_[zeros, zeros], np.r_[off, rev], rows_i + rows_j)
        rep._plans[key] = (s1, s2, s3, 2 * tmp)
    return rep._plans[key]


def _reduced_offsets(rep: HRep) -> tuple[dict[BoxId, int], int]:
    key = ("roff",)
    if key not in rep._plans:
        offs, tot = {}, 0
        for l in rep.levels():
            for b, basis in rep.bases.get(l, {}).items():
                offs[b] = tot
                tot += basis.rank
        rep._plans[key] = (offs, tot)
    return rep._plans[key]


def _uniform_plans(rep: HRep, level: int):
    """(project, couple, expand) plans for one level of a uniform/H2 rep."""
    key = ("uni", level)
    if key not in rep._plans:
        g = rep.grid
        offs, _ = _reduced_offsets(rep)
        bases = [b for b in rep.bases.get(level, {}).values()]
        explicit = [b for b in bases if b.U is not None]
        proj = BatchPlan.build([b.U for b in explicit], np.ones(len(explicit)),
                               [_rows(g, b.I) for b in explicit], [offs[b.I] for b in explicit])
        expand = BatchPlan.build([b.U for b in explicit], np.zeros(len(explicit)),
                                 [offs[b.I] for b in explicit], [_rows(g, b.I) for b in explicit])
        cps = list(rep.couplings.get(level, {}).values())
        oi = [offs[c.I] for c in cps]
        oj = [offs[c.J] for c in cps]
        couple = BatchPlan.build([c.N for c in cps] * 2,
                                 np.r_[np.zeros(len(cps)), np.ones(len(cps))],
                                 oj + oi, oi + oj)
        rep._plans[key] = (proj, couple, expand)
    return rep._plans[key]


def _transfer_plans(rep: HRep, level: int):
    """(up, down) plans between ``level`` and its parent level."""
    key = ("tr", level)
    if key not in rep._plans:
        offs, _ = _reduced_offsets(rep)
        tms = list(rep.transfers.get(level, {}).values())
        oc = [offs[t.C] for t in tms]
        op = [offs[t.I] for t in tms]
        up = BatchPlan.build([t.T for t in tms], np.ones(len(tms)), oc, op)
        down = BatchPlan.build([t.T for t in tms], np.zeros(len(tms)), op, oc)
        rep._plans[key] = (up, down)
    return rep._plans[key]


def _diag_plan(rep: HRep):
    key = ("diag",)
    if key not in rep._plans:
        g = rep.grid
        blocks, trans, xr, yr = [], [], [], []
        for (I, J), D in rep.diag.items():
            ri, rj = _rows(g, I), _rows(g, J)
            blocks.append(D); trans.append(0); xr.append(rj); yr.append(ri)
            if I != J:
                blocks.append(D); trans.append(1); xr.append(ri); yr.append(rj)
        rep._plans[key] = BatchPlan.build(blocks, trans, xr, yr)
    return rep._plans[key]


# ------------------------------------------------------------------ applies

def _as_block(f: np.ndarray) -> tuple[np.ndarray, bool]:
    f = np.asarray(f, dtype=np.float64)
    vec = f.ndim == 1
    return (f[:, None] if vec else f), vec


def to_tree(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(f[tree_order(grid)])


def from_tree(grid: GridSpec, ft: np.ndarray) -> np.ndarray:
    out = np.empty_like(ft)
    out[tree_order(grid)] = ft
    return out


def _check_level(rep: HRep, through: int) -> None:
    if through > rep.built_through:
        raise ValueError(
            f"level {through} beyond built_through={rep.built_through}")


def _add_diag_tree(rep: HRep, X: np.ndarray, Y: np.ndarray) -> None:
    if rep.diag is not None:
        _diag_plan(rep).run(X, Y)


def h1_tree(rep: HRep, X: np.ndarray, through: int, levels=None) -> np.ndarray:
    """Sum of H1 levels 3..through applied to tree-ordered ``X``."""
    Y = np.zeros_like(X)
    for l in (levels if levels is not None else range(FIRST_LEVEL, through + 1)):
        s1, s2, s3, tmp = _h1_plans(rep, l)
        t1 = np.zeros((tmp, X.shape[1]))
        t2 = np.zeros_like(t1)
        s1.run(X, t1)
        s2.run(t1, t2)
        s3.run(t2, Y)
    return Y


def uniform_tree(rep: HRep, X: np.ndarray, through: int, levels=None) -> np.ndarray:
    """Sum of uniform-H1 levels applied to tree-ordered ``X``."""
    _, tot = _reduced_offsets(rep)
    ft = np.zeros((tot, X.shape[1]))
    ut = np.zeros_like(ft)
    Y = np.zeros_like(X)
    levels = list(levels if levels is not None else range(FIRST_LEVEL, through + 1))
    for l in levels:
        _uniform_plans(rep, l)[0].run(X, ft)
    for l in levels:
        _uniform_plans(rep, l)[1].run(ft, ut)
    for l in levels:
        _uniform_plans(rep, l)[2].run(ut, Y)
    return Y


def h2_tree(rep: HRep, X: np.ndarray, through: int) -> np.ndarray:
    """Partial H2 product ``G3 + ... + G(through)``, tree order.

    Explicit bases live only on the deepest built level; coarser bases are
    reached through transfer matrices, so the upward and downward passes
    always span the full built depth while couplings stop at ``through``.
    """
    top = rep.built_through
    _, tot = _reduced_offsets(rep)
    ft = np.zeros((tot, X.shape[1]))
    ut = np.zeros_like(ft)
    Y = np.zeros_like(X)
    _uniform_plans(rep, top)[0].run(X, ft)
    for l in range(top, FIRST_LEVEL, -1):
        _transfer_plans(rep, l)[0].run(ft, ft)
    for l in range(FIRST_LEVEL, through + 1):
        _uniform_plans(rep, l)[1].run(ft, ut)
    for l in range(FIRST_LEVEL + 1, top + 1):
        _transfer_plans(rep, l)[1].run(ut, ut)
    _uniform_plans(rep, top)[2].run(ut, Y)
    return Y


def partial_tree(rep: HRep, X: np.ndarray, through: int) -> np.ndarray:
    """``G3 + ... + G(through)`` in the rep's own variant, tree order."""
    if through < FIRST_LEVEL:
        return np.zeros_like(X)
    _check_level(rep, through)
    if rep.variant is Variant.H1:
        return h1_tree(rep, X, through)
    if rep.variant is Variant.UNIFORM:
        return uniform_tree(rep, X, through)
    return h2_tree(rep, X, through)


def _natural_apply(rep: HRep, f, body) -> np.ndarray:
    F, vec = _as_block(f)
    if F.shape[0] != rep.grid.n:
        raise ValueError(f"vector length {F.shape[0]} != {rep.grid.n}")
    X = to_tree(rep.grid, F)
    Y = body(X)
    out = from_tree(rep.grid, Y)
    return out[:, 0] if vec else out


def _require(rep: HRep, variant: Variant) -> None:
    if rep.variant is not variant:
        raise ValueError(f"expected a {variant.value} rep, got {rep.variant.value}")


def apply_h1(rep: HRep, f, through_level: int | None = None) -> np.ndarray:
    _require(rep, Variant.H1)
    through = rep.built_through if through_level is None else through_level
    _check_level(rep, through)

    def body(X):
        Y = h1_tree(rep, X, through)
        if through == rep.grid.L:
            _add_diag_tree(rep, X, Y)
        return Y
    return _natural_apply(rep, f, body)


def apply_uniform_h1(rep: HRep, f, through_level: int | None = None) -> np.ndarray:
    _require(rep, Variant.UNIFORM)
    through = rep.built_through if through_level is None else through_level
    _check_level(rep, through)

    def body(X):
        Y = uniform_tree(rep, X, through)
        if through == rep.grid.L:
            _add_diag_tree(rep, X, Y)
        return Y
    return _natural_apply(rep, f, body)


def apply_partial_h2(rep: HRep, f, through_level: int | None = None) -> np.ndarray:
    _require(rep, Variant.H2)
    through = rep.built_through if through_level is None else through_level
    _check_level(rep, through)
    _check_transfers(rep)
    return _natural_apply(rep, f, lambda X: h2_tree(rep, X, through))


def apply_h2(rep: HRep, f) -> np.ndarray:
    """Full H2 product including the near field."""
    _require(rep, Variant.H2)
    if not rep.complete:
        raise ValueError("H2 apply needs a complete rep (all levels and diagonal)")
    _check_transfers(rep)

    def body(X):
        Y = h2_tree(rep, X, rep.grid.L)
        _add_diag_tree(rep, X, Y)
        return Y
    return _natural_apply(rep, f, body)


def apply(rep: HRep, f) -> np.ndarray:
    """Apply everything stored in ``rep``, whatever its variant."""
    if rep.variant is Variant.H1:
        return apply_h1(rep, f)
    if rep.variant is Variant.UNIFORM:
        return apply_uniform_h1(rep, f)
    if rep.complete:
        return apply_h2(rep, f)
    return apply_partial_h2(rep, f)


def _check_transfers(rep: HRep) -> None:
    for l in range(FIRST_LEVEL + 1, rep.built_through + 1):
        if len(rep.transfers.get(l, {})) != len(rep.bases.get(l, {})):
            raise ValueError(f"missing transfer matrices at level {l}")


# ------------------------------------------------------------ construction

def uniformize(grid: GridSpec, level: int, blocks: dict[Pair, H1Block], eps: float,
               rU_cap: int, c: int = OVERSAMPLE, seed: int = 0,
               randomized: bool = True, check_complete: bool = True,
               mapper=map) -> tuple[dict[BoxId, UniformBasis], dict[Pair, UniformBlock]]:
    """Shared per-box bases and pair cores from one level of H1 blocks."""
    if check_complete:
        want = set(il_pairs(grid, level))
        have = {p if p[0] < p[1] else (p[1], p[0]) for p in blocks}
        if want != have:
            raise ValueError(f"missing pair blocks at level {level}: "
                             f"{len(want - have)} absent")
    m = grid.box_size(level)
    by_box: dict[BoxId, list] = {b: [] for b in grid.boxes(level)}
    for (A, B), blk in blocks.items():
        by_box[A].append((B, blk.U_IJ, blk.M))
        by_box[B].append((A, blk.U_JI, blk.M.T))

    def one(box):
        items = sorted(by_box[box], key=lambda t: t[0])
        width = sum(M.shape[1] for _, _, M in items)
        if width == 0:
            return box, UniformBasis(box, np.zeros((m, 0)), np.zeros(0))
        if randomized:
            k = rU_cap + c
            R = gaussian(width, k, RngStream(seed, (UNIFORMIZE, level, box.i, box.j)))
            Y = np.zeros((m, k))
            col = 0
            for _, U, M in items:
                w = M.shape[1]
                Y += U @ (M @ R[col:col + w])
                col += w
            U, S, _ = svd(Y)
            # E||x^T R||^2 = k ||x||^2: rescale to estimate the stack's own spectrum
            S = S / np.sqrt(k)
        else:
            U, S, _ = svd(np.hstack([U @ M for _, U, M in items]))
        r = rank_by_tolerance(S, eps, rU_cap)
        return box, UniformBasis(box, U[:, :r], S[:r].copy())

    bases = dict(mapper(one, grid.boxes(level)))
    couplings = {}
    for (A, B), blk in blocks.items():
        IA = bases[A].U.T @ blk.U_IJ
        IB = bases[B].U.T @ blk.U_JI
        couplings[(A, B)] = UniformBlock(A, B, IA @ blk.M @ IB.T)
    return bases, couplings


def project_to_h2(grid: GridSpec, level: int, parents: dict[BoxId, UniformBasis],
                  children: dict[BoxId, UniformBasis],
                  couplings: dict[Pair, UniformBlock], eps: float, rU_cap: int,
                  keep_parent_rows: dict | None = None):
    """Nest level-``level`` bases under their parents.

    Returns ``(transfers, new_children, new_couplings)``.  When
    ``keep_parent_rows`` is a dict, the parent rows ``U_I(C, :)`` and the
    parent weights are stored in it per child for later auditing.
    """
    mc = grid.box_size(level)
    transfers, new_children, K = {}, {}, {}
    for C, cb in sorted(children.items()):
        P = C.parent()
        if P not in parents or parents[P].U is None:
            raise ValueError(f"missing parent basis for {C}")
        pb = parents[P]
        q = _quadrant(C)
        rows = pb.U[q * mc:(q + 1) * mc]
        A = np.hstack([rows * pb.S, cb.U * cb.S])
        V, W, _ = svd(A)
        r = rank_by_tolerance(W, eps, rU_cap)
        V = V[:, :r]
        K[C] = V.T @ cb.U
        transfers[C] = TransferMap(C, P, V.T @ rows)
        new_children[C] = UniformBasis(C, V, W[:r].copy())
        if keep_parent_rows is not None:
            keep_parent_rows[C] = (rows.copy(), pb.S.copy(), cb.S.copy())
    new_couplings = {(A, B): UniformBlock(A, B, K[A] @ blk.N @ K[B].T)
                     for (A, B), blk in couplings.items()}
    return transfers, new_children, new_couplings


def _quadrant(C: BoxId) -> int:
    return ((C.i - 1) & 1) + 2 * ((C.j - 1) & 1)


def uniformize_rep(rep: HRep, rU_cap: int, c: int = OVERSAMPLE,
                   randomized: bool = True) -> HRep:
    """Whole-rep conversion H1 -> uniform H1, diagonal carried over."""
    _require(rep, Variant.H1)
    out = HRep(Variant.UNIFORM, rep.grid, rep.eps, rep.seed, diag=rep.diag,
               built_through=rep.built_through)
    for l in rep.levels():
        out.bases[l], out.couplings[l] = uniformize(
            rep.grid, l, rep.h1[l], rep.eps, rU_cap, c, rep.seed, randomized)
    return out


def project_rep(rep: HRep, rU_cap: int) -> HRep:
    """Whole-rep conversion uniform H1 -> H2, projecting top-down."""
    _require(rep, Variant.UNIFORM)
    out = HRep(Variant.H2, rep.grid, rep.eps, rep.seed, diag=rep.diag,
               built_through=FIRST_LEVEL)
    out.bases[FIRST_LEVEL] = dict(rep.bases[FIRST_LEVEL])
    out.couplings[FIRST_LEVEL] = dict(rep.couplings[FIRST_LEVEL])
    for l in range(FIRST_LEVEL + 1, rep.built_through + 1):
        add_h2_level(out, l, rep.bases[l], rep.couplings[l], rU_cap)
    return out


def add_h2_level(rep: HRep, level: int, bases, couplings, rU_cap: int,
                 keep_parent_rows: dict | None = None) -> None:
    """Project a new uniform level into an H2 rep and drop parent bases."""
    tr, nb, nc = project_to_h2(rep.grid, level, rep.bases[level - 1], bases,
                               couplings, rep.eps, rU_cap, keep_parent_rows)
    rep.transfers[level] = tr
    rep.bases[level] = nb
    rep.couplings[level] = nc
    for b in rep.bases[level - 1].values():
        b.U = None
    rep.built_through = level
    rep.invalidate()


# --------------------------------------------------------- accounting/oracle

def memory_bytes(rep: HRep) -> int:
    """8 bytes per stored real of U, M, N, T and D factors."""
    n = 0
    for blocks in rep.h1.values():
        n += sum(b.U_IJ.size + b.M.size + b.U_JI.size for b in blocks.values())
    for bases in rep.bases.values():
        n += sum(b.U.size for b in bases.values() if b.U is not None)
    for cps in rep.couplings.values():
        n += sum(c.N.size for c in cps.values())
    for tms in rep.transfers.values():
        n += sum(t.T.size for t in tms.values())
    if rep.diag is not None:
        n += sum(D.size for D in rep.diag.values())
    return 8 * n


def transfer_bytes(rep: HRep) -> int:
    return 8 * sum(t.T.size for tms in rep.transfers.values() for t in tms.values())


def implied_bases(rep: HRep) -> dict[int, dict[BoxId, np.ndarray]]:
    """Explicit basis matrices at every level, expanding H2 transfers."""
    out: dict[int, dict[BoxId, np.ndarray]] = {}
    for l in sorted(rep.bases, reverse=True):
        out[l] = {}
        for b, basis in rep.bases[l].items():
            if basis.U is not None:
                out[l][b] = basis.U
            else:
                kids = b.children()
                out[l][b] = np.vstack([out[l + 1][k] @ rep.transfers[l + 1][k].T
                                       for k in kids])
    return out


def assemble_dense(rep: HRep) -> np.ndarray:
    """Materialize the stored representation as an ``n x n`` matrix (desk scale)."""
    g = rep.grid
    if g.N > DENSE_LIMIT:
        raise ValueError("oracle is desk-scale only")
    G = np.zeros((g.n, g.n))

    def put(I, J, B):
        si, sj = box_slice(g, I), box_slice(g, J)
        G[si, sj] += B
        if I != J:
            G[sj, si] += B.T

    for blocks in rep.h1.values():
        for (I, J), b in blocks.items():
            put(I, J, b.dense())
    if rep.couplings:
        U = implied_bases(rep)
        for l, cps in rep.couplings.items():
            for (I, J), c in cps.items():
                put(I, J, U[l][I] @ c.N @ U[l][J].T)
    if rep.diag is not None:
        for (I, J), D in rep.diag.items():
            put(I, J, D)
    order = tree_order(g)
    out = np.empty_like(G)
    out[np.ix_(order, order)] = G
    return out
