"""Binary container for :class:`~hpeel.hmat.HRep`.

Layout::

    b"HREP" | uint32 version | uint64 header length | JSON header | float64 payload

The JSON header (sorted keys, no timestamps) records variant, N, L, eps,
seed, built_through and one entry per stored array with its shape; the
payload holds the arrays back to back in header order, little-endian.
Identical reps always serialize to identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import BoxId, GridSpec
from .hmat import H1Block, HRep, TransferMap, UniformBasis, UniformBlock

MAGIC = b"HREP"
VERSION = 1


def _entries(rep: HRep):
    """Yield ``(meta, arrays)`` in a canonical order."""
    for l in sorted(rep.h1):
        for (I, J), b in sorted(rep.h1[l].items()):
            yield {"kind": "h1", "level": l, "I": list(I), "J": list(J)}, [b.U_IJ, b.M, b.U_JI]
    for l in sorted(rep.bases):
        for I, b in sorted(rep.bases[l].items()):
            arrays = [b.S] if b.U is None else [b.S, b.U]
            yield {"kind": "basis", "level": l, "I": list(I)}, arrays
    for l in sorted(rep.couplings):
        for (I, J), c in sorted(rep.couplings[l].items()):
            yield {"kind": "coupling", "level": l, "I": list(I), "J": list(J)}, [c.N]
    for l in sorted(rep.transfers):
        for C, t in sorted(rep.transfers[l].items()):
            yield {"kind": "transfer", "level": l, "C": list(C), "I": list(t.I)}, [t.T]
    if rep.diag is not None:
        for (I, J), D in sorted(rep.diag.items()):
            yield {"kind": "diag", "I": list(I), "J": list(J)}, [D]


def dumps(rep: HRep) -> bytes:
    header = {
        "variant": rep.variant.value, "N": rep.grid.N, "L": rep.grid.L,
        "eps": rep.eps, "seed": rep.seed, "built_through": rep.built_through,
        "has_diag": rep.diag is not None, "entries": [],
    }
    chunks = []
    for meta, arrays in _entries(rep):
        meta["shapes"] = [list(a.shape) for a in arrays]
        header["entries"].append(meta)
        chunks.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(chunks)


def loads(data: bytes) -> HRep:
    if data[:4] != MAGIC:
        raise ValueError("not an HRep container")
    version, hlen = struct.unpack_from("<IQ", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    pos = 16
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    rep = HRep(header["variant"], GridSpec(header["N"], header["L"]), header["eps"],
               header["seed"], built_through=header["built_through"],
               diag={} if header["has_diag"] else None)

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape))
        a = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        return a.astype(np.float64)

    for e in header["entries"]:
        arrays = [take(s) for s in e["shapes"]]
        kind = e["kind"]
        I = BoxId(*e["I"])
        if kind == "h1":
            J = BoxId(*e["J"])
            rep.h1.setdefault(e["level"], {})[I, J] = H1Block(I, J, *arrays)
        elif kind == "basis":
            U = arrays[1] if len(arrays) > 1 else None
            rep.bases.setdefault(e["level"], {})[I] = UniformBasis(I, U, arrays[0])
        elif kind == "coupling":
            J = BoxId(*e["J"])
            rep.couplings.setdefault(e["level"], {})[I, J] = UniformBlock(I, J, arrays[0])
        elif kind == "transfer":
            C = BoxId(*e["C"])
            rep.transfers.setdefault(e["level"], {})[C] = TransferMap(C, I, arrays[0])
        elif kind == "diag":
            rep.diag[I, BoxId(*e["J"])] = arrays[0]
        else:
            raise ValueError(f"unknown entry kind {kind!r}")
    return rep


def save(rep: HRep, path) -> None:
    Path(path).write_bytes(dumps(rep))


def load(path) -> HRep:
    return loads(Path(path).read_bytes())
