"""DRAM/SRAM geometries, bit-level fault maps, yield and voltage tables.

Conventions used throughout the package:

* A *word* is one ``word_width``-bit storage unit (a DRAM column word or an
  SRAM row).  Words are identified by a linear address.
* A *cell* is one bit of one word.  Cell linear index
  ``= word_address * word_width + physical_position`` with physical
  position 0 being the leftmost cell of the word.
* Fault maps are uniform random over all cells of a geometry, sampled from
  a counter-based stream keyed by (seed, cell index), so any sub-range
  query agrees bit-for-bit with full materialization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import rng

# Materialization guard: full fault enumeration above this many cells is
# refused (use word_int_masks() range queries instead).
MATERIALIZE_CELL_LIMIT = 1 << 33


class FaultKind(enum.Enum):
    FLIP = "flip"
    STUCK_AT_0 = "sa0"
    STUCK_AT_1 = "sa1"

    @classmethod
    def parse(cls, text: str) -> "FaultKind":
        for k in cls:
            if k.value == text:
                return k
        raise ValueError(f"unknown fault kind {text!r}")


@dataclass(frozen=True)
class DramGeometry:
    """DRAM chip organization: banks / subarrays / rows / columns."""

    banks: int
    subarrays: int
    rows: int
    columns: int
    word_width: int = 8

    def __post_init__(self):
        for name in ("banks", "subarrays", "rows", "columns", "word_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"DramGeometry.{name} must be >= 1")

    @property
    def words(self) -> int:
        return self.banks * self.subarrays * self.rows * self.columns

    @property
    def capacity_bits(self) -> int:
        return self.words * self.word_width

    def linear_address(self, ba, su, ro, co):
        """Linear word address of (ba, su, ro, co); bank-major layout."""
        return ((ba * self.subarrays + su) * self.rows + ro) * self.columns + co

    def address_fields(self, addr):
        """Inverse of linear_address; returns (ba, su, ro, co)."""
        co = addr % self.columns
        rest = addr // self.columns
        ro = rest % self.rows
        rest //= self.rows
        su = rest % self.subarrays
        ba = rest // self.subarrays
        return ba, su, ro, co

    def check_capacity(self, expected_bits: int) -> None:
        if self.capacity_bits != expected_bits:
            raise ValueError(
                f"geometry capacity {self.capacity_bits} bits != declared "
                f"{expected_bits} bits"
            )


@dataclass(frozen=True)
class SramGeometry:
    """SRAM buffer organization: banks x rows, one word per row."""

    banks: int
    rows: int
    word_width: int = 8

    def __post_init__(self):
        for name in ("banks", "rows", "word_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"SramGeometry.{name} must be >= 1")

    @property
    def words(self) -> int:
        return self.banks * self.rows

    @property
    def capacity_bits(self) -> int:
        return self.words * self.word_width

    def linear_address(self, ba, ro):
        return ba * self.rows + ro

    def address_fields(self, addr):
        return addr // self.rows, addr % self.rows

    def check_capacity(self, expected_bits: int) -> None:
        if self.capacity_bits != expected_bits:
            raise ValueError(
                f"geometry capacity {self.capacity_bits} bits != declared "
                f"{expected_bits} bits"
            )


Geometry = DramGeometry | SramGeometry


def default_dram_geometry() -> DramGeometry:
    """2 Gb chip as 8 banks x 16 subarrays, 8-bit column words."""
    g = DramGeometry(banks=8, subarrays=16, rows=2048, columns=1024, word_width=8)
    g.check_capacity(2 * 1024**3)
    return g


def default_sram_geometry() -> SramGeometry:
    """32 KB weight buffer as 8 banks x 4096 rows of 8-bit words."""
    g = SramGeometry(banks=8, rows=4096, word_width=8)
    g.check_capacity(32 * 1024 * 8)
    return g


@dataclass(frozen=True)
class FaultSpec:
    """Per-cell fault probability, fault kind and stream seed."""

    bit_fault_rate: float
    fault_kind: FaultKind = FaultKind.FLIP
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.bit_fault_rate <= 1.0:
            raise ValueError(
                f"bit_fault_rate must be in [0, 1], got {self.bit_fault_rate}"
            )


class FaultMap:
    """Bit-granular fault set over a geometry, one fault kind per map.

    Backed either by an explicit cell array (loaded from a file or small
    enough to enumerate) or procedurally by (seed, rate): the procedural
    form answers mask queries for arbitrary word subsets without ever
    enumerating the full geometry.
    """

    def __init__(
        self,
        geometry: Geometry,
        kind: FaultKind,
        cells: np.ndarray | None = None,
        spec: FaultSpec | None = None,
    ):
        if (cells is None) == (spec is None):
            raise ValueError("exactly one of cells/spec must be given")
        self.geometry = geometry
        self.kind = kind
        self._spec = spec
        if cells is not None:
            cells = np.unique(np.asarray(cells, dtype=np.int64))
            if cells.size and (cells[0] < 0 or cells[-1] >= geometry.capacity_bits):
                raise ValueError("fault cell index out of geometry bounds")
            self._cells = cells
        else:
            self._cells = None

    # -- construction -----------------------------------------------------

    @classmethod
    def empty(cls, geometry: Geometry) -> "FaultMap":
        return cls(geometry, FaultKind.FLIP, cells=np.empty(0, dtype=np.int64))

    @property
    def is_procedural(self) -> bool:
        return self._cells is None

    @property
    def rate(self) -> float:
        return self._spec.bit_fault_rate if self._spec is not None else float("nan")

    # -- queries -----------------------------------------------------------

    def cells(self) -> np.ndarray:
        """All faulty cell indices, sorted.  Materializes procedural maps."""
        if self._cells is not None:
            return self._cells
        n = self.geometry.capacity_bits
        if n > MATERIALIZE_CELL_LIMIT:
            raise ValueError(f"refusing to materialize {n} cells")
        rate = self._spec.bit_fault_rate
        out = []
        for lo in range(0, n, rng.CELL_CHUNK):
            hi = min(lo + rng.CELL_CHUNK, n)
            u = rng.cell_uniforms(self._spec.rng_seed, lo, hi)
            hits = np.flatnonzero(u < rate)
            if hits.size:
                out.append(hits.astype(np.int64) + lo)
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(out)

    def fault_count(self) -> int:
        return int(self.cells().size)

    def word_int_masks(self, words: np.ndarray) -> np.ndarray:
        """Integer-space fault masks for the given word addresses.

        Bit j of mask ⇔ faulty cell at physical position (W-1-j), i.e. the
        mask aligns with the bit an encoded integer stores at that cell.
        """
        words = np.asarray(words, dtype=np.int64)
        w = self.geometry.word_width
        if words.size and (words.min() < 0 or words.max() >= self.geometry.words):
            raise ValueError("word address out of geometry bounds")
        if self._cells is not None:
            return _masks_from_cells(self._cells, words, w)
        rate = self._spec.bit_fault_rate
        cells = (words[:, None] * w + np.arange(w, dtype=np.int64)[None, :]).ravel()
        u = rng.cell_uniforms_at(self._spec.rng_seed, cells)
        faulty = (u < rate).reshape(words.size, w)
        weights = (np.uint64(1) << np.arange(w - 1, -1, -1, dtype=np.uint64))[None, :]
        return (faulty.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)

    # -- serialization -----------------------------------------------------

    def dump(self, fp) -> None:
        g = self.geometry
        if isinstance(g, DramGeometry):
            fp.write(
                f"geometry dram {g.banks} {g.subarrays} {g.rows} {g.columns} "
                f"wordwidth {g.word_width}\n"
            )
        else:
            fp.write(f"geometry sram {g.banks} {g.rows} wordwidth {g.word_width}\n")
        w = g.word_width
        for c in self.cells():
            fp.write(f"addr {c // w} bit {c % w} kind {self.kind.value}\n")

    @classmethod
    def load(cls, fp) -> "FaultMap":
        header = fp.readline().split()
        if not header or header[0] != "geometry":
            raise ValueError("fault map file must start with a geometry line")
        if header[1] == "dram":
            ba, su, ro, co = map(int, header[2:6])
            if header[6] != "wordwidth":
                raise ValueError("malformed geometry line")
            geom: Geometry = DramGeometry(ba, su, ro, co, int(header[7]))
        elif header[1] == "sram":
            ba, ro = map(int, header[2:4])
            if header[4] != "wordwidth":
                raise ValueError("malformed geometry line")
            geom = SramGeometry(ba, ro, int(header[5]))
        else:
            raise ValueError(f"unknown geometry kind {header[1]!r}")
        cells = []
        kind = None
        for line in fp:
            parts = line.split()
            if not parts:
                continue
            if parts[0] != "addr" or parts[2] != "bit" or parts[4] != "kind":
                raise ValueError(f"malformed fault line: {line!r}")
            addr, bit = int(parts[1]), int(parts[3])
            if not 0 <= bit < geom.word_width:
                raise ValueError(f"bit position {bit} out of word width")
            k = FaultKind.parse(parts[5])
            if kind is None:
                kind = k
            elif kind is not k:
                raise ValueError("mixed fault kinds in one map file")
            cells.append(addr * geom.word_width + bit)
        return cls(geom, kind or FaultKind.FLIP, cells=np.array(cells, dtype=np.int64))


def generate_fault_map(geometry: Geometry, spec: FaultSpec) -> FaultMap:
    """Uniform random fault map; each cell faulty independently at the spec rate.

    Pure function of (geometry, spec): identical inputs give identical maps
    regardless of how (or in what order) the map is later queried.
    """
    return FaultMap(geometry, spec.fault_kind, spec=spec)


def union_maps(a: FaultMap, b: FaultMap) -> FaultMap:
    """Union of two same-kind, same-geometry maps (materializes both)."""
    if a.kind is not b.kind:
        raise ValueError("cannot union maps of different fault kinds")
    if a.geometry != b.geometry:
        raise ValueError("cannot union maps over different geometries")
    return FaultMap(
        a.geometry, a.kind, cells=np.union1d(a.cells(), b.cells())
    )


def _masks_from_cells(cells: np.ndarray, words: np.ndarray, width: int) -> np.ndarray:
    """OR-fold sorted cell indices into per-word integer-space masks."""
    masks = np.zeros(words.size, dtype=np.uint64)
    if cells.size == 0 or words.size == 0:
        return masks
    lo = np.searchsorted(cells, words * width, side="left")
    hi = np.searchsorted(cells, (words + 1) * width, side="left")
    counts = hi - lo
    hit = np.flatnonzero(counts)
    if hit.size == 0:
        return masks
    # expand each hit word's cell slice and OR bit weights group-wise
    idx = np.concatenate([np.arange(lo[i], hi[i]) for i in hit])
    owner = np.repeat(hit, counts[hit])
    pos = cells[idx] % width
    bits = np.uint64(1) << (width - 1 - pos).astype(np.uint64)
    np.bitwise_or.at(masks, owner, bits)
    return masks


def yield_of(p_cell: float, m_bits: int) -> float:
    """Fraction of fault-free chips: (1 - p_cell) ** m_bits.

    Evaluated as exp(m * log1p(-p)) in extended precision so results match
    an arbitrary-precision reference to a few ulp even for large m.
    """
    if not 0.0 <= p_cell <= 1.0:
        raise ValueError("p_cell must be in [0, 1]")
    if m_bits < 0:
        raise ValueError("m_bits must be >= 0")
    if m_bits == 0:
        return 1.0
    if p_cell == 1.0:
        return 0.0
    ld = np.longdouble
    return float(np.exp(ld(m_bits) * np.log1p(-ld(p_cell))))


@dataclass(frozen=True)
class VoltageFaultTable:
    """Ordered (voltage, fault-rate) pairs for one memory kind.

    Lower voltage must never mean a lower fault rate (monotone reliability
    degradation).  Lookups interpolate linearly inside the covered span.
    """

    points: tuple[tuple[float, float], ...]
    label: str = ""

    def __post_init__(self):
        if len(self.points) < 1:
            raise ValueError("voltage table needs at least one point")
        volts = [v for v, _ in self.points]
        rates = [r for _, r in self.points]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("rates must be in [0, 1]")
        order = sorted(range(len(volts)), key=lambda i: -volts[i])
        sv = [volts[i] for i in order]
        sr = [rates[i] for i in order]
        if len(set(sv)) != len(sv):
            raise ValueError("duplicate voltage points")
        for i in range(len(sv) - 1):
            if sr[i + 1] < sr[i]:
                raise ValueError("rates must be non-decreasing as voltage drops")
        object.__setattr__(self, "points", tuple(zip(sv, sr)))

    @property
    def v_max(self) -> float:
        return self.points[0][0]

    @property
    def v_min(self) -> float:
        return self.points[-1][0]

    def rate_at(self, voltage: float) -> float:
        if voltage > self.v_max or voltage < self.v_min:
            raise ValueError(
                f"voltage {voltage} V outside table span "
                f"[{self.v_min}, {self.v_max}] V"
            )
        volts = np.array([v for v, _ in self.points])
        rates = np.array([r for _, r in self.points])
        # exact points return stored rates; np.interp wants ascending x
        return float(np.interp(voltage, volts[::-1], rates[::-1]))

    def dump(self, fp) -> None:
        for v, r in self.points:
            fp.write(f"{v!r} {r!r}\n")

    @classmethod
    def load(cls, fp, label: str = "") -> "VoltageFaultTable":
        pts = []
        for line in fp:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise ValueError(f"voltage table line needs 2 columns: {line!r}")
            pts.append((float(parts[0]), float(parts[1])))
        return cls(tuple(pts), label=label)


def rate_at_voltage(table: VoltageFaultTable, voltage: float) -> float:
    return table.rate_at(voltage)


# Approximate reduced-voltage curves, figure-read from published studies of
# real devices.  Editable user configuration, not ground truth.
EXAMPLE_DRAM_VOLTAGE_TABLE = VoltageFaultTable(
    points=(
        (1.35, 0.0),
        (1.25, 1e-9),
        (1.15, 1e-7),
        (1.05, 1e-5),
        (1.00, 1e-4),
    ),
    label="dram-approx",
)

EXAMPLE_SRAM_VOLTAGE_TABLE = VoltageFaultTable(
    points=(
        (0.90, 1e-9),
        (0.80, 1e-7),
        (0.70, 1e-5),
        (0.60, 1e-3),
        (0.55, 1e-2),
    ),
    label="sram-approx",
)
