"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines are repeated in the
terminal summary) or directly as ``python tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import plant_h1  # noqa: E402

from hpeel import hmat  # noqa: E402
from hpeel.cli import CSV_COLUMNS, ExperimentSpec, RunSpec, emit, run, run_one  # noqa: E402
from hpeel.hmat import Variant  # noqa: E402
from hpeel.linalg import TEST, RngStream  # noqa: E402
from hpeel.oracle import (EllipticProblem, build_operator, dense_inverse,  # noqa: E402
                          explicit_oracle, inverse_oracle)
from hpeel.peel import PeelConfig, construct  # noqa: E402
from hpeel.rsvd import make_probes, rsvd_from_products  # noqa: E402
from hpeel.serialize import dumps  # noqa: E402

EPS = 1e-6
REL_ERR_MAX = 1e-5
MEM_RATIO_MAX = 0.75
PLANT_TOL = 1e-8
RSVD_EXACT_TOL = 1e-9
RSVD_OPT_FACTOR = 10
AGREE_FACTOR = 10
DENSE_TOL = 1e-11
DIVERGENCE = {"kind": "divergence_form", "potential": "scaled", "scale": 1e-3}

RESULTS: list[str] = []


def report(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


_runs: dict = {}


def _run(N, L, variant, problem=None):
    key = (N, L, variant, tuple(sorted((problem or {}).items())))
    if key not in _runs:
        spec = RunSpec(N=N, L=L, variant=variant, eps=EPS, problem=dict(problem or {}))
        _runs[key] = run_one(spec, error_check=True, keep_rep=True)
    return _runs[key]


def _sweep(cases, problem=None):
    worst, parts = 0.0, []
    for N, L in cases:
        for v in Variant:
            rec, _ = _run(N, L, v.value, problem)
            assert rec.ok, rec.message
            worst = max(worst, rec.rel_err)
            parts.append(f"N={N} L={L} {v.value} {rec.rel_err:.2e}")
    return worst, parts


def test_c1_desk_reconstruction_n32():
    worst, parts = _sweep([(32, 4)])
    report(1, worst <= REL_ERR_MAX, f"max rel err {worst:.2e} <= {REL_ERR_MAX:g} ({'; '.join(parts)})")


def test_c2_reconstruction_n64():
    worst, parts = _sweep([(64, 4), (64, 5)])
    report(2, worst <= REL_ERR_MAX, f"max rel err {worst:.2e} <= {REL_ERR_MAX:g} ({'; '.join(parts)})")


def test_c3_matvec_law():
    r_cap, c = 10, 10
    counts, ok = {}, True
    # N=32 has L_M - 3 = 2 < 3, so its smallest valid leaf level is used
    for N, L in [(32, 3), (64, 3), (128, 4)]:
        oracle = inverse_oracle(build_operator(EllipticProblem(N)))
        _, stats = construct(oracle, PeelConfig(variant=Variant.H1, L=L, r_cap=r_cap, c=c))
        want = 64 * (r_cap + c) * (L - 2) + 16 * (N >> L) ** 2
        counts[N] = stats.matvec_count
        ok &= stats.matvec_count == want == oracle.count
    step = counts[128] - counts[64]
    ok &= step == 64 * (r_cap + c)
    report(3, ok, f"counts {counts} match 64(r+c)(L-2)+16(N/2^L)^2; "
                  f"N=64->128 step {step} == {64 * (r_cap + c)}")


def test_c4_memory_ordering():
    ok, checked = True, 0
    for (N, L, variant, prob), (rec, rep) in list(_runs.items()):
        if variant != Variant.H1.value:
            continue
        h1 = rec.mem_per_dof
        uni_rec, _ = _run(N, L, Variant.UNIFORM.value, dict(prob))
        h2_rec, h2_rep = _run(N, L, Variant.H2.value, dict(prob))
        extra = hmat.transfer_bytes(h2_rep) / N**2
        ok &= uni_rec.mem_per_dof <= h1 and h2_rec.mem_per_dof <= uni_rec.mem_per_dof + extra
        checked += 1
    if checked == 0:
        _sweep([(64, 5)])
        return test_c4_memory_ordering()
    h1_rec, _ = _run(64, 5, Variant.H1.value)
    uni_rec, _ = _run(64, 5, Variant.UNIFORM.value)
    ratio = uni_rec.mem_bytes / h1_rec.mem_bytes
    ok &= ratio <= MEM_RATIO_MAX
    report(4, ok, f"ordering holds on {checked} configurations; N=64 L=5 uniform/H1 "
                  f"= {ratio:.3f} <= {MEM_RATIO_MAX} "
                  f"({uni_rec.mem_per_dof / 2**20:.5f} vs {h1_rec.mem_per_dof / 2**20:.5f} MB/DOF)")


def test_c5_plant_and_recover():
    t0 = time.perf_counter()
    worst_b = worst_d = 0.0
    for N, L, rank in [(32, 4, 4), (64, 4, 10)]:
        G, blocks, near = plant_h1(N, L, rank=rank, seed=N)
        rep, _ = construct(explicit_oracle(G), PeelConfig(variant=Variant.H1, L=L, eps=1e-12))
        rel = lambda a, b: np.linalg.norm(a - b) / np.linalg.norm(b)
        worst_b = max(worst_b, max(rel(rep.h1[I.level][I, J].dense(), B)
                                   for (I, J), B in blocks.items()))
        worst_d = max(worst_d, max(rel(rep.diag[k], B) for k, B in near.items()))
    secs = time.perf_counter() - t0
    report(5, worst_b <= PLANT_TOL and worst_d <= PLANT_TOL and secs < 60,
           f"blocks {worst_b:.1e}, D {worst_d:.1e} <= {PLANT_TOL:g} in {secs:.1f}s")


def _rank_k(n, m, sv, seed):
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, len(sv))))
    V, _ = np.linalg.qr(rng.standard_normal((m, len(sv))))
    return U @ np.diag(sv) @ V.T


def test_c6_rsvd_suite():
    def fit(A, r, seed, eps=None):
        p = make_probes(lambda x: A @ x, lambda y: A.T @ y, *A.shape, r, 10,
                        RngStream(seed, (TEST, 6)))
        return rsvd_from_products(p, r, eps).dense()

    exact = max(np.linalg.norm(A - fit(A, 8, s, 1e-12), 2) / np.linalg.norm(A, 2)
                for s in range(20)
                for A in [_rank_k(60, 50, np.linspace(4, 1, 1 + s % 8), 500 + s)])
    A = _rank_k(60, 50, 0.5 ** np.arange(50), 7)
    sigma = np.linalg.svd(A, compute_uv=False)[6]
    good = sum(np.linalg.norm(A - fit(A, 6, s), 2) <= RSVD_OPT_FACTOR * sigma for s in range(20))
    report(6, exact <= RSVD_EXACT_TOL and good >= 19,
           f"exact-rank max rel err {exact:.1e} <= {RSVD_EXACT_TOL:g} (20 seeds); "
           f"near-optimal in {good}/20 seeds (need 19)")


def test_c7_variant_agreement():
    G = dense_inverse(build_operator(EllipticProblem(32)))
    reps = {v: construct(explicit_oracle(G), PeelConfig(variant=v, L=4, eps=EPS))[0]
            for v in Variant}
    F = RngStream(0, (TEST, 7)).normal((32 * 32, 10))
    out = {Variant.H1: hmat.apply_h1(reps[Variant.H1], F),
           Variant.UNIFORM: hmat.apply_uniform_h1(reps[Variant.UNIFORM], F),
           Variant.H2: hmat.apply_h2(reps[Variant.H2], F)}
    pair = max(np.max(np.linalg.norm(out[a] - out[b], axis=0) / np.linalg.norm(out[a], axis=0))
               for a in Variant for b in Variant)
    dense = 0.0
    for v in Variant:
        D = hmat.assemble_dense(reps[v]) @ F
        dense = max(dense, np.max(np.linalg.norm(out[v] - D, axis=0) / np.linalg.norm(D, axis=0)))
    report(7, pair <= AGREE_FACTOR * EPS and dense <= DENSE_TOL,
           f"pairwise {pair:.1e} <= {AGREE_FACTOR * EPS:g}; vs dense {dense:.1e} <= {DENSE_TOL:g}")


def test_c8_divergence_form():
    worst, parts = _sweep([(64, 4)], DIVERGENCE)
    report(8, worst <= REL_ERR_MAX, f"max rel err {worst:.2e} <= {REL_ERR_MAX:g} ({'; '.join(parts)})")


def test_c9_determinism():
    G = dense_inverse(build_operator(EllipticProblem(32, seed=9)))
    blobs = {dumps(construct(explicit_oracle(G), PeelConfig(L=4, seed=9, threads=t))[0])
             for t in (1, 2, 4)}
    spec = ExperimentSpec(runs=[RunSpec(32, 3, "H1"), RunSpec(32, 4, "H2")], norm_iters=30)
    timing = {CSV_COLUMNS.index("seconds"), CSV_COLUMNS.index("seconds_per_dof")}

    def strip(text):
        return [[x for i, x in enumerate(row.split(",")) if i not in timing]
                for row in text.splitlines()]
    csvs = [strip(emit(run(spec, threads=t), "csv")) for t in (1, 2)]
    report(9, len(blobs) == 1 and csvs[0] == csvs[1],
           f"{len(blobs)} distinct serialized rep(s) over 1/2/4 threads; "
           f"CSV identical without timing columns: {csvs[0] == csvs[1]}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
