"""Fault-tolerance analysis: (DRAM rate x buffer rate) sweeps and regions.

A sweep evaluates the trained network's accuracy for every combination of
fault rates over several fault-map seeds, aggregates mean/std, and
classifies each cell as acceptable (region A) or degraded (region B)
against an accuracy floor.  Spike trains for evaluation come from a fixed
coding substream, so every cell of a sweep (and the fault-free reference)
sees identical inputs and differs only by the injected faults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng, snn_engine
from .errors import CapacityError, ConfigError, DataError
from .memory_model import FaultKind, FaultMap, FaultSpec, Geometry, generate_fault_map
from .memory_sim import (
    STRATEGIES,
    PlacementConfig,
    build_hierarchy_mapping,
    simulate_hierarchy,
)
from .snn_engine import EncodingParams, QuantizedWeightStore, SnnModel

# leading tag separating evaluation fault maps from training-time maps
EVAL_FAULT_TAG = 0
FATM_FAULT_TAG = 1


@dataclass(frozen=True)
class SweepGrid:
    dram_rates: tuple[float, ...]
    sram_rates: tuple[float, ...]
    seeds: tuple[int, ...]
    strategy: str = "baseline"

    def __post_init__(self):
        for name in ("dram_rates", "sram_rates"):
            rates = getattr(self, name)
            object.__setattr__(self, name, tuple(float(r) for r in rates))
            rates = getattr(self, name)
            if any(not 0.0 <= r <= 1.0 for r in rates):
                raise ConfigError(f"{name} must lie in [0, 1]")
            if list(rates) != sorted(rates):
                raise ConfigError(f"{name} must be sorted ascending")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if len(self.seeds) < 1:
            raise ConfigError("sweep needs at least one seed")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")


@dataclass
class CellStats:
    dram_rate: float
    sram_rate: float
    strategy: str
    accuracies: list[float] = field(default_factory=list)
    unplaceable: bool = False
    region: str = ""

    @property
    def n(self) -> int:
        return len(self.accuracies)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if self.n > 1 else 0.0


@dataclass
class SweepReport:
    grid: SweepGrid
    cells: list[CellStats]
    accuracy_floor: float | None = None

    def cell(self, dram_rate: float, sram_rate: float) -> CellStats:
        for c in self.cells:
            if c.dram_rate == dram_rate and c.sram_rate == sram_rate:
                return c
        raise KeyError((dram_rate, sram_rate))

    def to_csv(self, fp) -> None:
        fp.write("dram_rate,sram_rate,strategy,mean_acc,std_acc,n,region\n")
        for c in self.cells:
            mean = "nan" if math.isnan(c.mean) else f"{c.mean:.6f}"
            fp.write(
                f"{c.dram_rate:.10g},{c.sram_rate:.10g},{c.strategy},"
                f"{mean},{c.std:.6f},{c.n},{c.region or 'unclassified'}\n"
            )

    def to_grid_csv(self, fp) -> None:
        """Mean-accuracy matrix (rows: DRAM rates, cols: buffer rates)."""
        fp.write(
            "dram_rate\\sram_rate,"
            + ",".join(f"{r:.10g}" for r in self.grid.sram_rates)
            + "\n"
        )
        for d in self.grid.dram_rates:
            row = [f"{d:.10g}"]
            for s in self.grid.sram_rates:
                c = self.cell(d, s)
                row.append("nan" if math.isnan(c.mean) else f"{c.mean:.6f}")
            fp.write(",".join(row) + "\n")


class EvalContext:
    """Everything needed to score one (strategy, rates, seed) combination."""

    def __init__(
        self,
        model: SnnModel,
        dram_geometry: Geometry,
        sram_geometry: Geometry,
        placement: PlacementConfig,
        eval_images: np.ndarray,
        eval_labels: np.ndarray,
        enc: EncodingParams,
        master_seed: int,
        fault_kind: FaultKind = FaultKind.FLIP,
        batch_size: int = 1000,
    ):
        self.model = model
        self.store = snn_engine.quantize_weights(
            model.weights, model.w_max, model.weight_bits
        )
        self.dram_geometry = dram_geometry
        self.sram_geometry = sram_geometry
        self.placement = placement
        self.eval_images = eval_images
        self.eval_labels = eval_labels
        self.enc = enc
        self.master_seed = master_seed
        self.fault_kind = fault_kind
        self.batch_size = batch_size
        self._ff_acc: float | None = None

    def fault_maps(
        self, dram_rate: float, sram_rate: float, seed_index: int, tag: int = EVAL_FAULT_TAG
    ) -> tuple[FaultMap, FaultMap]:
        dmap = self._map(self.dram_geometry, dram_rate, tag, seed_index, 0)
        smap = self._map(self.sram_geometry, sram_rate, tag, seed_index, 1)
        return dmap, smap

    def _map(self, geometry, rate, *idx) -> FaultMap:
        if rate == 0.0:
            return FaultMap.empty(geometry)
        seed = rng.substream_seed(self.master_seed, "faults", *idx)
        return generate_fault_map(geometry, FaultSpec(rate, self.fault_kind, seed))

    def effective_weights(
        self, strategy: str, dram_map: FaultMap, sram_map: FaultMap
    ):
        """Fault-perturbed dequantized weights plus the access ledger."""
        mapping = build_hierarchy_mapping(
            strategy, len(self.store), dram_map, sram_map, self.placement
        )
        words, ledger = simulate_hierarchy(
            self.store.words, mapping, dram_map, sram_map
        )
        store = QuantizedWeightStore(
            words.astype(self.store.words.dtype),
            self.store.width,
            self.store.w_max,
            self.store.shape,
        )
        return snn_engine.dequantize_weights(store), ledger

    def accuracy_with_weights(self, weights: np.ndarray) -> float:
        return snn_engine.evaluate_accuracy(
            self.model,
            self.eval_images,
            self.eval_labels,
            self.enc,
            self.master_seed,
            weights_override=weights,
            batch_size=self.batch_size,
        )

    def evaluate_strategy(
        self, strategy: str, dram_rate: float, sram_rate: float, seed_index: int
    ) -> float | None:
        """Accuracy at one grid point, or None if placement ran out of slots."""
        dmap, smap = self.fault_maps(dram_rate, sram_rate, seed_index)
        try:
            weights, _ = self.effective_weights(strategy, dmap, smap)
        except CapacityError:
            return None
        return self.accuracy_with_weights(weights)

    def fault_free_accuracy(self) -> float:
        if self._ff_acc is None:
            self._ff_acc = self.accuracy_with_weights(
                snn_engine.dequantize_weights(self.store)
            )
        return self._ff_acc


def _eval_cell_job(args):
    ctx, strategy, d, s, seeds = args
    out = []
    for k in seeds:
        out.append(ctx.evaluate_strategy(strategy, d, s, k))
    return out


def _limit_worker_threads():
    import os

    os.environ["OMP_NUM_THREADS"] = "1"
    os.environ["OPENBLAS_NUM_THREADS"] = "1"


def run_sweep(
    ctx: EvalContext, grid: SweepGrid, progress=None, jobs: int = 1
) -> SweepReport:
    """Evaluate every grid cell over all seeds; capacity failures are recorded
    per cell, not fatal.  Cells are independent jobs; jobs > 1 runs them in a
    process pool (results are assembled in grid order either way)."""
    points = [(d, s) for d in grid.dram_rates for s in grid.sram_rates]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_limit_worker_threads
        ) as pool:
            results = list(
                pool.map(
                    _eval_cell_job,
                    [(ctx, grid.strategy, d, s, grid.seeds) for d, s in points],
                )
            )
    else:
        results = [
            _eval_cell_job((ctx, grid.strategy, d, s, grid.seeds))
            for d, s in points
        ]
    cells = []
    for (d, s), accs in zip(points, results):
        cell = CellStats(d, s, grid.strategy)
        for acc in accs:
            if acc is None:
                cell.unplaceable = True
            else:
                cell.accuracies.append(acc)
        cells.append(cell)
        if progress is not None:
            progress(cell)
    return SweepReport(grid, cells)


def classify_regions(report: SweepReport, accuracy_floor: float) -> SweepReport:
    """Tag cells acceptable (region A) or degraded (region B) against the floor."""
    for c in report.cells:
        if c.n == 0:
            c.region = "unplaceable"
        else:
            c.region = "acceptable" if c.mean >= accuracy_floor else "degraded"
    report.accuracy_floor = accuracy_floor
    return report


def boundary_rates(
    report: SweepReport, accuracy_floor: float | None = None
) -> list[tuple[float, float]]:
    """Per DRAM rate, the largest buffer rate still acceptable."""
    if accuracy_floor is not None:
        classify_regions(report, accuracy_floor)
    elif report.accuracy_floor is None:
        raise ConfigError("classify_regions first or pass accuracy_floor")
    out = []
    for d in report.grid.dram_rates:
        best = None
        for s in report.grid.sram_rates:
            if report.cell(d, s).region == "acceptable":
                best = s
        if best is not None:
            out.append((d, best))
    if not out:
        raise DataError("no acceptable grid cell; boundary is empty")
    return out
