"""Seed management: named substreams and counter-based cell streams.

Every random decision in the package flows from one 64-bit master seed
through named substreams, so consuming more randomness in one stage never
perturbs another.  Bit-cell fault sampling additionally uses a chunked
counter-based (Philox) stream: the Bernoulli draw for a given cell depends
only on (seed, cell linear index), never on generation order or on which
other cells were queried.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids; changing these changes every derived stream.
STREAMS = {
    "faults": 0x0F_A1,
    "coding": 0xC0_DE,
    "training": 0x7_124,
    "sweep": 0x5_3EE,
    "init": 0x1_417,
}

# Cells per Philox chunk.  Part of the stream definition: altering it
# changes which draw a cell maps to.
CELL_CHUNK = 1 << 22


def substream_seed(master_seed: int, name: str, *indices: int) -> int:
    """Derive a 64-bit seed for a named substream (plus optional indices)."""
    if name not in STREAMS:
        raise KeyError(f"unknown substream {name!r}")
    ss = np.random.SeedSequence(
        entropy=int(master_seed) & (2**64 - 1),
        spawn_key=(STREAMS[name], *[int(i) & (2**64 - 1) for i in indices]),
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    """A PCG64 generator for a named substream."""
    return np.random.Generator(
        np.random.PCG64(substream_seed(master_seed, name, *indices))
    )


def _chunk_generator(seed: int, chunk_id: int) -> np.random.Generator:
    key = np.random.SeedSequence(
        entropy=int(seed) & (2**64 - 1), spawn_key=(int(chunk_id),)
    ).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def cell_uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    """Uniform[0,1) draws for cell indices [start, stop).

    Draw i is a pure function of (seed, i): chunk ``i // CELL_CHUNK`` is
    generated from its own Philox key and draw ``i % CELL_CHUNK`` taken from
    it.  Any range query therefore agrees with full materialization.
    """
    if not 0 <= start <= stop:
        raise ValueError("bad cell range")
    out = np.empty(stop - start, dtype=np.float64)
    pos = start
    while pos < stop:
        cid = pos // CELL_CHUNK
        chunk_lo = cid * CELL_CHUNK
        take_hi = min(chunk_lo + CELL_CHUNK, stop)
        chunk = _chunk_generator(seed, cid).random(CELL_CHUNK)
        out[pos - start : take_hi - start] = chunk[pos - chunk_lo : take_hi - chunk_lo]
        pos = take_hi
    return out


def cell_uniforms_at(seed: int, cells: np.ndarray) -> np.ndarray:
    """Uniform draws for an arbitrary (sorted or not) array of cell indices."""
    cells = np.asarray(cells, dtype=np.int64)
    out = np.empty(cells.shape, dtype=np.float64)
    if cells.size == 0:
        return out
    order = np.argsort(cells, kind="stable")
    sorted_cells = cells[order]
    chunk_ids = sorted_cells // CELL_CHUNK
    boundaries = np.flatnonzero(np.diff(chunk_ids)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [sorted_cells.size]))
    vals = np.empty(sorted_cells.size, dtype=np.float64)
    for s, e in zip(starts, ends):
        cid = int(chunk_ids[s])
        g = _chunk_generator(seed, cid)
        chunk = g.random(CELL_CHUNK)
        vals[s:e] = chunk[sorted_cells[s:e] - cid * CELL_CHUNK]
    out[order] = vals
    return out
