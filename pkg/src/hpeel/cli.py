"""Experiment runner: build representations over (N, L, variant) and report cost and error.

An experiment file (YAML or JSON) looks like::

    error_check: true
    runs:
      - {N: 32, L: 4, variant: H1, eps: 1.0e-6, r_cap: 10, c: 10, seed: 0,
         problem: {kind: laplace_plus_V, potential: paper1}}

Missing run keys take the :class:`~hpeel.peel.PeelConfig` defaults; ``L``
defaults to 8 x 8 leaves.  ``problem`` may also be a path to a recipe file
(its ``N``, if any, is replaced by the run's).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import yaml

from . import hmat
from .linalg import NORM, RngStream, norm2_estimate
from .oracle import EllipticProblem, build_operator, dense_inverse, inverse_oracle
from .peel import PeelConfig, construct, default_leaf_level

log = logging.getLogger("hpeel")

CSV_COLUMNS = ("N", "L", "variant", "eps", "r_cap", "c", "seed", "matvecs", "seconds",
               "seconds_per_dof", "mem_bytes", "mem_per_dof", "abs_err", "rel_err")
_INT_COLS = {"N", "L", "r_cap", "c", "seed", "matvecs", "mem_bytes"}
_STR_COLS = {"variant"}


@dataclass
class RunSpec:
    N: int
    L: int | None = None
    variant: str = "H2"
    eps: float = 1e-6
    r_cap: int = 10
    c: int = 10
    seed: int = 0
    problem: dict = field(default_factory=dict)


@dataclass
class ExperimentSpec:
    runs: list[RunSpec] = field(default_factory=list)
    out: str | None = None
    format: str = "csv"
    error_check: bool = True
    norm_iters: int = 100

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentSpec":
        data = dict(data or {})
        runs = []
        for r in data.pop("runs", None) or []:
            r = dict(r)
            prob = r.get("problem", {})
            if isinstance(prob, str):
                path = Path(prob)
                if base is not None and not path.is_absolute():
                    path = base / path
                r["problem"] = yaml.safe_load(path.read_text()) or {}
            runs.append(RunSpec(**r))
        return cls(runs=runs, **data)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_dict(yaml.safe_load(path.read_text()), base=path.parent)


@dataclass
class RunRecord:
    N: int
    L: int
    variant: str
    eps: float
    r_cap: int
    c: int
    seed: int
    matvecs: int | None = None
    seconds: float | None = None
    seconds_per_dof: float | None = None
    mem_bytes: int | None = None
    mem_per_dof: float | None = None
    abs_err: float | None = None
    rel_err: float | None = None
    ranks: list[float] = field(default_factory=list)
    ok: bool = True
    message: str = ""


def _problem(run: RunSpec) -> EllipticProblem:
    p = dict(run.problem)
    p.setdefault("seed", run.seed)
    p["N"] = run.N
    return EllipticProblem(**p)


@lru_cache(maxsize=2)
def _dense_truth(problem: EllipticProblem, norm_iters: int, seed: int):
    """Dense ``G`` and its estimated norm, shared by runs on the same problem."""
    G = dense_inverse(build_operator(problem))
    G.flags.writeable = False
    apply_g = lambda X: G @ X
    n = G.shape[0]
    return G, norm2_estimate(apply_g, apply_g, n, iters=norm_iters,
                             stream=RngStream(seed, (NORM,)))


def run_one(run: RunSpec, error_check: bool = True, norm_iters: int = 100,
            threads: int = 1, keep_rep: bool = False):
    """Execute one row.  Returns the record (and the rep when ``keep_rep``)."""
    L = run.L if run.L is not None else default_leaf_level(run.N)
    rec = RunRecord(run.N, L, str(run.variant), run.eps, run.r_cap, run.c, run.seed)
    rep = None
    try:
        config = PeelConfig(variant=run.variant, eps=run.eps, r_cap=run.r_cap, c=run.c,
                            seed=run.seed, L=L, threads=threads)
        config.grid_for(run.N)
        if error_check and run.N > hmat.DENSE_LIMIT:
            raise ValueError(f"error check needs N <= {hmat.DENSE_LIMIT}")
        H = build_operator(_problem(run))
        oracle = inverse_oracle(H)
        t0 = time.perf_counter()
        rep, stats = construct(oracle, config)
        seconds = time.perf_counter() - t0
        dofs = run.N * run.N
        rec.matvecs = stats.matvec_count
        rec.seconds, rec.seconds_per_dof = seconds, seconds / dofs
        rec.mem_bytes, rec.mem_per_dof = stats.memory_bytes, stats.memory_bytes / dofs
        rec.ranks = [s.avg_rank for s in stats.per_level]
        if error_check:
            G, gnorm = _dense_truth(_problem(run), norm_iters, run.seed)
            exact = lambda X: G @ X
        else:
            exact = oracle.uncounted
            gnorm = norm2_estimate(exact, exact, dofs, iters=norm_iters,
                                   stream=RngStream(run.seed, (NORM,)))
        diff = lambda X: exact(X) - hmat.apply(rep, X)
        rec.abs_err = norm2_estimate(diff, diff, dofs, iters=norm_iters,
                                     stream=RngStream(run.seed, (NORM,)))
        rec.rel_err = rec.abs_err / gnorm
    except (ValueError, np.linalg.LinAlgError) as e:
        rec.ok, rec.message = False, str(e)
        log.warning("run N=%d L=%s %s failed: %s", run.N, run.L, run.variant, e)
    return (rec, rep) if keep_rep else rec


def run(spec: ExperimentSpec, threads: int = 1) -> list[RunRecord]:
    """All runs of ``spec`` in order; ``threads > 1`` runs rows concurrently."""
    def one(r):
        log.info("run N=%d L=%s variant=%s", r.N, r.L, r.variant)
        return run_one(r, spec.error_check, spec.norm_iters)

    if threads <= 1:
        return [one(r) for r in spec.runs]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(one, spec.runs))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_COLUMNS])
    return buf.getvalue()


def to_json(records) -> str:
    return json.dumps([asdict(r) for r in records], indent=1, sort_keys=True)


def emit(records, fmt: str = "csv", path=None) -> str:
    """Serialize records; write to ``path`` when given.  Returns the text."""
    if fmt == "csv":
        text = to_csv(records)
    elif fmt == "json":
        text = to_json(records)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as e:
            raise ValueError(f"cannot write {path}: {e}") from e
    return text


def parse(text: str, fmt: str = "csv") -> list[RunRecord]:
    """Inverse of :func:`emit` (CSV carries no rank arrays or status)."""
    if fmt == "json":
        return [RunRecord(**d) for d in json.loads(text)]
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for k in CSV_COLUMNS:
            v = row[k]
            if v == "":
                kw[k] = None
            elif k in _INT_COLS:
                kw[k] = int(v)
            elif k in _STR_COLS:
                kw[k] = v
            else:
                kw[k] = float(v)
        kw["ok"] = kw["matvecs"] is not None
        out.append(RunRecord(**kw))
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hpeel", description=__doc__.splitlines()[0])
    ap.add_argument("--spec", required=True, help="experiment file (YAML or JSON)")
    ap.add_argument("--out", help="output file (default: from spec, else stdout)")
    ap.add_argument("--format", choices=("csv", "json"), help="output format")
    ap.add_argument("--seed-override", type=int, help="replace every run's seed")
    ap.add_argument("--threads", type=int, default=1, help="runs executed concurrently")
    ap.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        spec = ExperimentSpec.load(args.spec)
    except (OSError, TypeError, ValueError, yaml.YAMLError) as e:
        print(f"hpeel: bad spec: {e}", file=sys.stderr)
        return 2
    if args.seed_override is not None:
        for r in spec.runs:
            r.seed = args.seed_override
    records = run(spec, threads=args.threads)
    fmt = args.format or spec.format
    out = args.out or spec.out
    try:
        text = emit(records, fmt, out)
    except ValueError as e:
        print(f"hpeel: {e}", file=sys.stderr)
        return 2
    if out is None:
        sys.stdout.write(text)
    for r in records:
        if not r.ok:
            print(f"hpeel: N={r.N} L={r.L} {r.variant}: {r.message}", file=sys.stderr)
    return 0 if all(r.ok for r in records) else 1


if __name__ == "__main__":
    sys.exit(main())
