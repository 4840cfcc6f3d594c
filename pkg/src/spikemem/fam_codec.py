"""Per-word fault analysis and circular-shift encode/decode.

Bit-placement convention: logical bits are numbered by significance with
MSB = significance W-1.  Under rotation r the logical bit of significance
W-1-k occupies physical position (k + r) mod W.  Rotation 0 is the natural
MSB-first layout (physical position 0 holds the MSB).

A physical W-bit pattern is represented as an integer whose bit (W-1-p) is
the content of physical cell p; encoding is then exactly a right rotation
of the W-bit integer and decoding a left rotation.  Fault masks use the
same integer-space convention (see memory_model), which makes the
significance-weighted exposure of a mask under rotation r simply the
integer value of the mask left-rotated by r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .memory_model import FaultKind


def _np_popcount(values: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(values)
    v = np.asarray(values, dtype=np.uint64)
    out = np.zeros(v.shape, dtype=np.uint64)
    for _ in range(64):
        out += v & np.uint64(1)
        v = v >> np.uint64(1)
    return out


def _width_mask(width: int) -> np.uint64:
    if not 1 <= width <= 64:
        raise ValueError("word width must be in [1, 64]")
    if width == 64:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << width) - 1)


def ror(values: np.ndarray, amounts: np.ndarray, width: int) -> np.ndarray:
    """Right-rotate W-bit integers element-wise; amounts in [0, W)."""
    v = np.asarray(values, dtype=np.uint64)
    r = np.asarray(amounts, dtype=np.uint64)
    w = np.uint64(width)
    back = (w - r) % w
    return ((v >> r) | (v << back)) & _width_mask(width)


def rol(values: np.ndarray, amounts: np.ndarray, width: int) -> np.ndarray:
    """Left-rotate W-bit integers element-wise; amounts in [0, W)."""
    v = np.asarray(values, dtype=np.uint64)
    r = np.asarray(amounts, dtype=np.uint64)
    w = np.uint64(width)
    back = (w - r) % w
    return ((v << r) | (v >> back)) & _width_mask(width)


@dataclass(frozen=True)
class WordFaultMask:
    """Faulty physical bit positions of a single word."""

    width: int
    faulty_positions: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "faulty_positions", frozenset(self.faulty_positions))
        if any(not 0 <= p < self.width for p in self.faulty_positions):
            raise ValueError("faulty position out of word width")
        _width_mask(self.width)

    @property
    def int_mask(self) -> int:
        """Integer-space mask: bit (W-1-p) set for each faulty position p."""
        m = 0
        for p in self.faulty_positions:
            m |= 1 << (self.width - 1 - p)
        return m

    @classmethod
    def from_int_mask(cls, width: int, mask: int) -> "WordFaultMask":
        pos = {width - 1 - j for j in range(width) if (mask >> j) & 1}
        return cls(width, frozenset(pos))

    def fault_count(self) -> int:
        return len(self.faulty_positions)


@dataclass(frozen=True)
class Rotation:
    """A right circular-shift amount in [0, W)."""

    amount: int
    width: int

    def __post_init__(self):
        if not 0 <= self.amount < self.width:
            raise ValueError(f"rotation {self.amount} outside [0, {self.width})")


def word_fault_budget_ok(mask: WordFaultMask, max_faults: int) -> bool:
    """True iff the word has at most max_faults faulty cells."""
    return mask.fault_count() <= max_faults


def longest_circular_run(mask: WordFaultMask) -> tuple[int, int]:
    """Longest run of non-faulty cells on the circular word.

    Returns (start position, length); ties break to the smallest start.
    Empty mask gives (0, W); a fully faulty word gives (0, 0).
    """
    w = mask.width
    faulty = mask.faulty_positions
    if not faulty:
        return 0, w
    if len(faulty) == w:
        return 0, 0
    ok = [p not in faulty for p in range(w)]
    best_start, best_len = 0, 0
    for start in range(w):
        if not ok[start]:
            continue
        length = 0
        while length < w and ok[(start + length) % w]:
            length += 1
        if length > best_len:
            best_start, best_len = start, length
    return best_start, best_len


def exposure(mask: WordFaultMask, r: int) -> int:
    """Significance-weighted fault exposure of the mask under rotation r."""
    return int(rol(np.uint64(mask.int_mask), np.uint64(r), mask.width))


def select_rotation(mask: WordFaultMask, align_to_run: bool = False) -> Rotation:
    """Rotation minimizing exposure; ties break to the smallest amount.

    With ``align_to_run`` the rotation instead places the MSB at the start
    of the longest non-faulty run (documented alternative policy; both
    coincide whenever the faults fit in W - run_length consecutive cells).
    """
    if align_to_run:
        start, _ = longest_circular_run(mask)
        return Rotation(start, mask.width)
    r = select_rotations(np.array([mask.int_mask], dtype=np.uint64), mask.width)
    return Rotation(int(r[0]), mask.width)


def select_rotations(int_masks: np.ndarray, width: int) -> np.ndarray:
    """Vectorized exposure-minimizing rotations for integer-space masks."""
    m = np.asarray(int_masks, dtype=np.uint64)
    vals = np.stack([rol(m, np.uint64(r), width) for r in range(width)])
    return np.argmin(vals, axis=0).astype(np.uint8)


def encode_word(word: int, r: Rotation) -> int:
    """Physical pattern storing ``word`` under rotation r (right rotate)."""
    if not 0 <= word < (1 << r.width):
        raise ValueError(f"word {word} does not fit in {r.width} bits")
    return int(ror(np.uint64(word), np.uint64(r.amount), r.width))

def decode_word(pattern: int, r: Rotation) -> int:
    """Logical value of a stored physical pattern (left rotate)."""
    if not 0 <= pattern < (1 << r.width):
        raise ValueError(f"pattern {pattern} does not fit in {r.width} bits")
    return int(rol(np.uint64(pattern), np.uint64(r.amount), r.width))


def apply_fault_mask(
    patterns: np.ndarray, int_masks: np.ndarray, kind: FaultKind
) -> np.ndarray:
    """Corrupt stored physical patterns at the masked cells."""
    p = np.asarray(patterns, dtype=np.uint64)
    m = np.asarray(int_masks, dtype=np.uint64)
    if kind is FaultKind.FLIP:
        return p ^ m
    if kind is FaultKind.STUCK_AT_0:
        return p & ~m
    if kind is FaultKind.STUCK_AT_1:
        return p | m
    raise ValueError(f"unknown fault kind {kind}")


@dataclass
class MappingPattern:
    """Per-logical-word physical placement plus rotation.

    ``addresses[i]`` is the linear word address holding logical word i and
    ``rotations[i]`` its right circular-shift amount.  Strategy tags:
    baseline, FAM1-DRAM, FAM1-SRAM, FAM2.
    """

    strategy: str
    word_width: int
    addresses: np.ndarray
    rotations: np.ndarray
    unplaceable: int = 0

    def __post_init__(self):
        self.addresses = np.asarray(self.addresses, dtype=np.int64)
        self.rotations = np.asarray(self.rotations, dtype=np.uint8)
        if self.addresses.shape != self.rotations.shape:
            raise ValueError("addresses and rotations must align")
        if self.rotations.size and int(self.rotations.max()) >= self.word_width:
            raise ValueError("rotation amount outside word width")

    def __len__(self) -> int:
        return int(self.addresses.size)

    def validate_unique_addresses(self) -> None:
        if np.unique(self.addresses).size != self.addresses.size:
            raise ValueError("physical addresses must be unique per memory")

    def dump(self, fp) -> None:
        fp.write(f"pattern {self.strategy} width {self.word_width}\n")
        for i in range(len(self)):
            fp.write(
                f"word {i} addr {int(self.addresses[i])} "
                f"rot {int(self.rotations[i])}\n"
            )

    @classmethod
    def load(cls, fp) -> "MappingPattern":
        header = fp.readline().split()
        if len(header) != 4 or header[0] != "pattern" or header[2] != "width":
            raise ValueError("pattern file must start with a pattern header")
        strategy, width = header[1], int(header[3])
        addrs, rots = [], []
        for line in fp:
            parts = line.split()
            if not parts:
                continue
            if parts[0] != "word" or parts[2] != "addr" or parts[4] != "rot":
                raise ValueError(f"malformed pattern line: {line!r}")
            if int(parts[1]) != len(addrs):
                raise ValueError("pattern lines must be in logical word order")
            addrs.append(int(parts[3]))
            rots.append(int(parts[5]))
        return cls(strategy, width, np.array(addrs), np.array(rots))


def derive_fam1_patterns(
    dram_map, sram_map, n_words: int, config
) -> tuple[MappingPattern, MappingPattern]:
    """Independent per-memory patterns (one rotation per memory per word)."""
    from . import memory_sim

    dram_pat = memory_sim.place_in_dram(
        n_words, dram_map.geometry, dram_map, config, strategy="FAM1"
    )
    sram_pat = memory_sim.place_in_sram_stream(
        n_words, sram_map.geometry, sram_map, config, strategy="FAM1"
    )
    return dram_pat, sram_pat


def derive_fam2_pattern(dram_map, sram_map, n_words: int, config) -> MappingPattern:
    """Single shared-rotation pattern from the merged per-word fault masks.

    Returns the DRAM-side placement; the buffer side reuses the same
    rotations over the tile-residency slots (see memory_sim.place_fam2).
    """
    from . import memory_sim

    dram_pattern, _ = memory_sim.place_fam2(n_words, dram_map, sram_map, config)
    return dram_pattern
