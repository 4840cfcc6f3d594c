"""Weight placement, tile residency, fault application and access accounting.

DRAM placement walks addresses in the fixed scan order row, subarray, bank,
column (column innermost) and assigns the next logical word to every slot
whose fault count passes the per-word budget.  SRAM placement walks row
then bank.  Consecutive words therefore fill one DRAM row before moving
on, which maximizes row-buffer hits; the ledger counts an activation every
time the (bank, subarray, row) triple changes along the access sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .fam_codec import (
    MappingPattern,
    _np_popcount,
    apply_fault_mask,
    rol,
    ror,
    select_rotations,
)
from .memory_model import DramGeometry, FaultKind, FaultMap, SramGeometry

STRATEGIES = ("baseline", "FAM1", "FAM2")


@dataclass(frozen=True)
class DramAddress:
    bank: int
    subarray: int
    row: int
    column: int

    def __str__(self):
        return f"{self.bank}.{self.subarray}.{self.row}.{self.column}"


@dataclass(frozen=True)
class SramAddress:
    bank: int
    row: int

    def __str__(self):
        return f"{self.bank}.{self.row}"


@dataclass(frozen=True)
class PlacementConfig:
    """Per-word fault budgets realizing the max tolerable word fault rates."""

    dram_max_faults_per_word: int = 2
    sram_max_faults_per_word: int = 2
    word_width: int = 8

    def __post_init__(self):
        if not 0 <= self.dram_max_faults_per_word <= self.word_width:
            raise ValueError("dram budget must be in [0, word_width]")
        if not 0 <= self.sram_max_faults_per_word <= self.word_width:
            raise ValueError("sram budget must be in [0, word_width]")


@dataclass
class AccessLedger:
    """Memory access counts; the deterministic energy proxy."""

    dram_row_activations: int = 0
    dram_row_buffer_hits: int = 0
    dram_reads: int = 0
    sram_reads: int = 0
    sram_writes: int = 0

    def validate(self) -> None:
        if self.dram_row_buffer_hits > self.dram_reads:
            raise ValueError("row-buffer hits cannot exceed reads")
        if self.dram_row_activations > self.dram_reads:
            raise ValueError("activations cannot exceed reads")

    def csv_row(self) -> str:
        return (
            f"{self.dram_row_activations},{self.dram_row_buffer_hits},"
            f"{self.dram_reads},{self.sram_reads},{self.sram_writes}"
        )


# -- scan-order address enumeration -----------------------------------------


def dram_scan_addresses(geometry: DramGeometry, start: int, stop: int) -> np.ndarray:
    """Linear addresses of DRAM scan positions [start, stop).

    Scan order: row outermost, then subarray, then bank, column innermost.
    """
    k = np.arange(start, stop, dtype=np.int64)
    co = k % geometry.columns
    k2 = k // geometry.columns
    ba = k2 % geometry.banks
    k3 = k2 // geometry.banks
    su = k3 % geometry.subarrays
    ro = k3 // geometry.subarrays
    return ((ba * geometry.subarrays + su) * geometry.rows + ro) * geometry.columns + co


def sram_scan_addresses(geometry: SramGeometry, start: int, stop: int) -> np.ndarray:
    """Linear addresses of SRAM scan positions [start, stop): row outer, bank inner."""
    k = np.arange(start, stop, dtype=np.int64)
    ba = k % geometry.banks
    ro = k // geometry.banks
    return ba * geometry.rows + ro


# -- placement ---------------------------------------------------------------


def _passes(popcounts: np.ndarray, budget: int, width: int) -> np.ndarray:
    # fully faulty words are skipped regardless of the budget
    return (popcounts <= budget) & (popcounts < width)


def place_in_dram(
    n_words: int,
    geometry: DramGeometry,
    fault_map: FaultMap,
    config: PlacementConfig,
    strategy: str = "FAM1",
) -> MappingPattern:
    """Assign n_words logical words to DRAM slots in scan order (guarded)."""
    if strategy not in ("baseline", "FAM1"):
        raise ValueError("place_in_dram handles baseline/FAM1; use place_fam2")
    if n_words <= 0:
        raise ValueError("store must be non-empty")
    w = geometry.word_width
    total = geometry.words
    addrs = np.empty(n_words, dtype=np.int64)
    masks = np.empty(n_words, dtype=np.uint64)
    placed = 0
    pos = 0
    block = max(n_words + n_words // 32 + 16, 4096)
    while placed < n_words:
        if pos >= total:
            raise CapacityError(
                f"DRAM capacity exhausted: {n_words - placed} of {n_words} "
                f"words unplaceable",
                unplaceable=n_words - placed,
            )
        hi = min(pos + block, total)
        scan = dram_scan_addresses(geometry, pos, hi)
        if strategy == "baseline":
            ok = np.ones(scan.size, dtype=bool)
            blk_masks = None
        else:
            blk_masks = fault_map.word_int_masks(scan)
            ok = _passes(_np_popcount(blk_masks), config.dram_max_faults_per_word, w)
        good = np.flatnonzero(ok)
        take = min(good.size, n_words - placed)
        sel = good[:take]
        addrs[placed : placed + take] = scan[sel]
        if blk_masks is None:
            masks[placed : placed + take] = 0
        else:
            masks[placed : placed + take] = blk_masks[sel]
        placed += take
        pos = hi
    if strategy == "baseline":
        rots = np.zeros(n_words, dtype=np.uint8)
        tag = "baseline"
    else:
        rots = select_rotations(masks, w)
        tag = "FAM1-DRAM"
    return MappingPattern(tag, w, addrs, rots)


def usable_sram_slots(
    geometry: SramGeometry,
    fault_map: FaultMap,
    config: PlacementConfig,
    strategy: str,
) -> np.ndarray:
    """Budget-passing SRAM slot addresses in scan order (all slots for baseline)."""
    scan = sram_scan_addresses(geometry, 0, geometry.words)
    if strategy == "baseline":
        return scan
    masks = fault_map.word_int_masks(scan)
    ok = _passes(
        _np_popcount(masks), config.sram_max_faults_per_word, geometry.word_width
    )
    return scan[ok]


def place_in_sram(
    tile_size: int,
    geometry: SramGeometry,
    fault_map: FaultMap,
    config: PlacementConfig,
    strategy: str = "FAM1",
) -> MappingPattern:
    """Place one tile of words into the buffer's budget-passing rows."""
    if tile_size <= 0:
        raise ValueError("tile must be non-empty")
    usable = usable_sram_slots(geometry, fault_map, config, strategy)
    if tile_size > usable.size:
        raise CapacityError(
            f"tile of {tile_size} words exceeds {usable.size} usable buffer rows",
            unplaceable=tile_size - usable.size,
        )
    addrs = usable[:tile_size]
    if strategy == "baseline":
        rots = np.zeros(tile_size, dtype=np.uint8)
        tag = "baseline"
    else:
        rots = select_rotations(fault_map.word_int_masks(addrs), geometry.word_width)
        tag = "FAM1-SRAM"
    return MappingPattern(tag, geometry.word_width, addrs, rots)


def tile_residency(n_words: int, usable_words: int) -> np.ndarray:
    """Buffer-slot ordinal for each logical word: tiles stream consecutively."""
    if n_words <= 0 or usable_words <= 0:
        raise ValueError("capacities must be > 0")
    return np.arange(n_words, dtype=np.int64) % usable_words


def place_in_sram_stream(
    n_words: int,
    geometry: SramGeometry,
    fault_map: FaultMap,
    config: PlacementConfig,
    strategy: str = "FAM1",
) -> MappingPattern:
    """Word-to-buffer-slot association for the whole streamed weight set.

    Unlike a single-tile pattern, addresses repeat across tiles: logical
    word i occupies usable slot (i mod usable_count).
    """
    usable = usable_sram_slots(geometry, fault_map, config, strategy)
    if usable.size == 0:
        raise CapacityError("no usable buffer rows", unplaceable=n_words)
    res = tile_residency(n_words, usable.size)
    addrs = usable[res]
    if strategy == "baseline":
        rots = np.zeros(n_words, dtype=np.uint8)
        tag = "baseline"
    else:
        slot_rots = select_rotations(
            fault_map.word_int_masks(usable), geometry.word_width
        )
        rots = slot_rots[res]
        tag = "FAM1-SRAM"
    return MappingPattern(tag, geometry.word_width, addrs, rots)


def place_fam2(
    n_words: int,
    dram_map: FaultMap,
    sram_map: FaultMap,
    config: PlacementConfig,
) -> tuple[MappingPattern, MappingPattern]:
    """Shared-rotation placement from the merged per-word fault masks.

    The DRAM scan guard tests the union of the candidate slot's mask with
    the word's buffer-slot mask, so a pairing can be rejected even when
    each memory alone passes the budget.  Returns (dram, sram) patterns
    carrying one common rotation per word.
    """
    if n_words <= 0:
        raise ValueError("store must be non-empty")
    dram_geom: DramGeometry = dram_map.geometry
    sram_geom: SramGeometry = sram_map.geometry
    if dram_geom.word_width != sram_geom.word_width:
        raise ValueError("word widths of the two memories must agree")
    w = dram_geom.word_width
    usable = usable_sram_slots(sram_geom, sram_map, config, "FAM2")
    if usable.size == 0:
        raise CapacityError("no usable buffer rows", unplaceable=n_words)
    res = tile_residency(n_words, usable.size)
    sram_addrs = usable[res]
    slot_masks = sram_map.word_int_masks(usable)
    word_sram_masks = slot_masks[res]

    budget = config.dram_max_faults_per_word
    total = dram_geom.words
    dram_addrs = np.empty(n_words, dtype=np.int64)
    union_masks = np.empty(n_words, dtype=np.uint64)
    placed = 0
    pos = 0
    block = max(n_words + n_words // 16 + 16, 4096)
    scan = np.empty(0, dtype=np.int64)
    scan_masks = np.empty(0, dtype=np.uint64)
    scan_pop = np.empty(0, dtype=np.uint64)
    offset = 0
    while placed < n_words:
        if offset >= scan.size:
            if pos >= total:
                raise CapacityError(
                    f"DRAM capacity exhausted: {n_words - placed} of {n_words} "
                    f"words unplaceable",
                    unplaceable=n_words - placed,
                )
            hi = min(pos + block, total)
            scan = dram_scan_addresses(dram_geom, pos, hi)
            scan_masks = dram_map.word_int_masks(scan)
            scan_pop = _np_popcount(scan_masks)
            pos = hi
            offset = 0
        # fast path: pair the next run of words with the next passing slots
        # and accept every pairing whose union also passes
        remaining = n_words - placed
        cand = np.flatnonzero(scan_pop[offset:] <= budget)[:remaining] + offset
        if cand.size == 0:
            offset = scan.size
            continue
        unions = scan_masks[cand] | word_sram_masks[placed : placed + cand.size]
        ok = _passes(_np_popcount(unions), budget, w)
        stop = int(np.argmin(ok)) if not ok.all() else cand.size
        if stop > 0:
            dram_addrs[placed : placed + stop] = scan[cand[:stop]]
            union_masks[placed : placed + stop] = unions[:stop]
            placed += stop
            offset = int(cand[stop - 1]) + 1
        else:
            # the words's union fails at this slot: skip the slot
            offset = int(cand[0]) + 1
    rots = select_rotations(union_masks, w)
    dram_pat = MappingPattern("FAM2", w, dram_addrs, rots)
    sram_pat = MappingPattern("FAM2", w, sram_addrs, rots.copy())
    return dram_pat, sram_pat


# -- read-back and hierarchy composition -------------------------------------


def encode_store(words: np.ndarray, pattern: MappingPattern) -> np.ndarray:
    """Physical patterns as stored in memory under the mapping's rotations."""
    return ror(np.asarray(words, dtype=np.uint64), pattern.rotations, pattern.word_width)


def read_back(
    pattern: MappingPattern,
    fault_maps: FaultMap | list[FaultMap],
    stored: np.ndarray,
    flip_probability: float = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Apply each map's faults to the stored patterns, then decode.

    Flip faults fire deterministically at every faulty cell (worst-case
    transient model).  Passing flip_probability < 1 with an rng switches
    flips to the probabilistic per-read model; stuck-at faults always act.
    """
    if isinstance(fault_maps, FaultMap):
        fault_maps = [fault_maps]
    corrupted = np.asarray(stored, dtype=np.uint64)
    for fmap in fault_maps:
        masks = fmap.word_int_masks(pattern.addresses)
        if fmap.kind is FaultKind.FLIP and flip_probability < 1.0:
            if rng is None:
                raise ValueError("per-read flip mode needs an rng")
            w = pattern.word_width
            keep = rng.random((masks.size, w)) < flip_probability
            weights = np.uint64(1) << np.arange(w, dtype=np.uint64)
            masks = masks & (keep.astype(np.uint64) * weights[None, :]).sum(
                axis=1, dtype=np.uint64
            )
        corrupted = apply_fault_mask(corrupted, masks, fmap.kind)
    return rol(corrupted, pattern.rotations, pattern.word_width)


@dataclass
class HierarchyMapping:
    """Mapping bundle for one strategy: DRAM pattern + streamed SRAM pattern."""

    strategy: str
    dram_pattern: MappingPattern
    sram_pattern: MappingPattern


def build_hierarchy_mapping(
    strategy: str,
    n_words: int,
    dram_map: FaultMap,
    sram_map: FaultMap,
    config: PlacementConfig,
) -> HierarchyMapping:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "FAM2":
        dram_pat, sram_pat = place_fam2(n_words, dram_map, sram_map, config)
    else:
        dram_pat = place_in_dram(
            n_words, dram_map.geometry, dram_map, config, strategy
        )
        sram_pat = place_in_sram_stream(
            n_words, sram_map.geometry, sram_map, config, strategy
        )
    return HierarchyMapping(strategy, dram_pat, sram_pat)


def count_dram_ledger(geometry: DramGeometry, addresses: np.ndarray) -> AccessLedger:
    """Activation/hit accounting for one streaming pass over the addresses."""
    ledger = AccessLedger()
    n = int(addresses.size)
    ledger.dram_reads = n
    ledger.sram_writes = n
    ledger.sram_reads = n
    if n:
        rows = addresses // geometry.columns  # identifies (ba, su, ro)
        ledger.dram_row_activations = 1 + int(np.count_nonzero(np.diff(rows)))
        ledger.dram_row_buffer_hits = n - ledger.dram_row_activations
    ledger.validate()
    return ledger


def make_effective_fn(
    mapping: HierarchyMapping,
    dram_maps: FaultMap | list[FaultMap],
    sram_maps: FaultMap | list[FaultMap],
):
    """Precompute per-word fault masks; return words -> effective words.

    Mask queries against procedural maps are the expensive part of a
    hierarchy pass, and they depend only on the mapping, so repeated passes
    (fault-aware training refreshes the store every image) reuse them.
    """
    if isinstance(dram_maps, FaultMap):
        dram_maps = [dram_maps]
    if isinstance(sram_maps, FaultMap):
        sram_maps = [sram_maps]
    d_pat, s_pat = mapping.dram_pattern, mapping.sram_pattern
    d_masks = [(m.kind, m.word_int_masks(d_pat.addresses)) for m in dram_maps]
    s_masks = [(m.kind, m.word_int_masks(s_pat.addresses)) for m in sram_maps]

    def effective(words: np.ndarray) -> np.ndarray:
        stored = ror(np.asarray(words, dtype=np.uint64), d_pat.rotations, d_pat.word_width)
        for kind, masks in d_masks:
            stored = apply_fault_mask(stored, masks, kind)
        after_dram = rol(stored, d_pat.rotations, d_pat.word_width)
        stored = ror(after_dram, s_pat.rotations, s_pat.word_width)
        for kind, masks in s_masks:
            stored = apply_fault_mask(stored, masks, kind)
        return rol(stored, s_pat.rotations, s_pat.word_width)

    return effective


def simulate_hierarchy(
    words: np.ndarray,
    mapping: HierarchyMapping,
    dram_maps: FaultMap | list[FaultMap],
    sram_maps: FaultMap | list[FaultMap],
) -> tuple[np.ndarray, AccessLedger]:
    """Stream the store through DRAM and the buffer, applying each memory's faults.

    Returns the effective words the compute consumes plus the access ledger
    for one full pass (each word: one DRAM read, one buffer write, one
    buffer read).
    """
    words = np.asarray(words, dtype=np.uint64)
    if words.size != len(mapping.dram_pattern) or words.size != len(
        mapping.sram_pattern
    ):
        raise ValueError("store size does not match mapping")
    effective = make_effective_fn(mapping, dram_maps, sram_maps)(words)
    geom: DramGeometry = (
        dram_maps[0].geometry if isinstance(dram_maps, list) else dram_maps.geometry
    )
    ledger = count_dram_ledger(geom, mapping.dram_pattern.addresses)
    return effective, ledger
