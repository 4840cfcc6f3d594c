"""Fault-aware training on top of fault-aware mapping (progressive rates).

Training starts at the region-A edge rates and walks into region B by a
fixed factor per stage.  Each epoch samples fresh fault maps at the stage
rates, runs STDP with the membrane dynamics driven by the fault-perturbed
effective weights while updates accumulate in the clean weights, and
validates on a held-out split under the schedule's final (highest) rates.
Training stops on validation saturation and the best prior checkpoint wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import snn_engine
from .errors import CapacityError, ConfigError, DataError
from .config import LABEL_KEY_OFFSET, VAL_KEY_OFFSET
from .resilience_analysis import FATM_FAULT_TAG, EvalContext
from .snn_engine import SnnModel, StdpParams


@dataclass(frozen=True)
class FatStage:
    dram_rate: float
    sram_rate: float
    epochs: int


@dataclass(frozen=True)
class FatSchedule:
    stages: tuple[FatStage, ...]
    patience: int = 2
    min_delta: float = 0.002

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("schedule needs at least one stage")
        prev = (0.0, 0.0)
        for st in self.stages:
            if st.epochs < 1:
                raise ConfigError("stage epochs must be >= 1")
            if st.dram_rate < prev[0] or st.sram_rate < prev[1]:
                raise ConfigError("stage rates must be non-decreasing")
            prev = (st.dram_rate, st.sram_rate)

    @property
    def final_rates(self) -> tuple[float, float]:
        last = self.stages[-1]
        return last.dram_rate, last.sram_rate


def pick_boundary_edge(boundary: list[tuple[float, float]]) -> tuple[float, float]:
    """Starting rates: the boundary pair with the largest dram*sram product
    (ties to the larger DRAM rate)."""
    if not boundary:
        raise DataError("empty region boundary")
    return max(boundary, key=lambda p: (p[0] * p[1], p[0]))


def build_schedule(
    start_rates: tuple[float, float],
    factor: float = 2.0,
    n_stages: int = 3,
    epochs_per_stage: int = 2,
    patience: int = 2,
    min_delta: float = 0.002,
) -> FatSchedule:
    """Geometric rate progression from the region-A edge into region B."""
    if factor < 1.0:
        raise ConfigError("rate increment factor must be >= 1")
    if n_stages < 1:
        raise ConfigError("need at least one stage")
    d0, s0 = start_rates
    stages = tuple(
        FatStage(min(d0 * factor**i, 1.0), min(s0 * factor**i, 1.0), epochs_per_stage)
        for i in range(n_stages)
    )
    return FatSchedule(stages, patience=patience, min_delta=min_delta)


@dataclass
class Checkpoint:
    model: SnnModel
    stage: int
    epoch: int
    val_acc: float


@dataclass
class FatmResult:
    best: Checkpoint
    log: list[tuple[int, int, float, float, float]]  # stage, epoch, d, s, val
    warnings: list[str] = field(default_factory=list)

    def dump_log(self, fp) -> None:
        fp.write("stage,epoch,dram_rate,sram_rate,val_acc\n")
        for stage, epoch, d, s, acc in self.log:
            fp.write(f"{stage},{epoch},{d:.10g},{s:.10g},{acc:.6f}\n")


def train_fatm(
    ctx: EvalContext,
    schedule: FatSchedule,
    strategy: str,
    train_images: np.ndarray,
    label_images: np.ndarray,
    label_labels: np.ndarray,
    val_images: np.ndarray,
    val_labels: np.ndarray,
    stdp: StdpParams | None = None,
    samples_per_epoch: int = 2000,
    run_tag: int = 0,
    validate_fn=None,
    epoch_label_count: int | None = None,
) -> FatmResult:
    """Progressive fault-injected STDP; returns the best validation checkpoint.

    ``ctx`` supplies the starting model, geometries, budgets and encoding.
    ``validate_fn(model) -> float`` can replace the built-in validator (used
    by tests); the default scores ``val_images`` under the schedule's final
    rates with a fixed validation fault map.
    """
    if strategy not in ("baseline", "FAM1", "FAM2"):
        raise ConfigError(f"unknown strategy {strategy!r}")
    stdp = stdp or StdpParams()
    model = ctx.model.copy()
    enc = ctx.enc
    seed = ctx.master_seed

    fin_d, fin_s = schedule.final_rates
    if validate_fn is None:
        val_dmap = ctx._map(ctx.dram_geometry, fin_d, FATM_FAULT_TAG, run_tag, 900, 0)
        val_smap = ctx._map(ctx.sram_geometry, fin_s, FATM_FAULT_TAG, run_tag, 900, 1)
        val_keys = np.arange(val_images.shape[0], dtype=np.int64) + VAL_KEY_OFFSET
        val_fn = _pipeline(ctx, strategy, val_dmap, val_smap)

        def validate_fn(m: SnnModel) -> float:
            vctx_weights = val_fn(m)
            counts = snn_engine.batch_counts(
                m, val_images, val_keys, enc, seed, vctx_weights, ctx.batch_size
            )
            pred = snn_engine.classify(counts, m.labels, m.n_classes)
            return float(np.mean(pred == val_labels))

    best: Checkpoint | None = None
    log: list[tuple[int, int, float, float, float]] = []
    warnings: list[str] = []
    stale = 0
    global_epoch = 0
    stop = False
    for stage_idx, stage in enumerate(schedule.stages):
        if stop:
            break
        faulted = stage.dram_rate > 0 or stage.sram_rate > 0
        for _ in range(stage.epochs):
            lo = (global_epoch * samples_per_epoch) % max(train_images.shape[0], 1)
            sel = np.arange(lo, lo + samples_per_epoch) % train_images.shape[0]
            epoch_images = train_images[sel]
            if faulted:
                dmap = ctx._map(
                    ctx.dram_geometry, stage.dram_rate, FATM_FAULT_TAG, run_tag,
                    global_epoch, 0,
                )
                smap = ctx._map(
                    ctx.sram_geometry, stage.sram_rate, FATM_FAULT_TAG, run_tag,
                    global_epoch, 1,
                )
                try:
                    refresh = _pipeline(ctx, strategy, dmap, smap)
                except CapacityError as exc:
                    warnings.append(
                        f"stage {stage_idx} skipped: {exc} "
                        f"(rates {stage.dram_rate:g}/{stage.sram_rate:g})"
                    )
                    break
                probe = model.copy()

                def refresh_w(w, _p=probe, _fn=refresh):
                    _p.weights = w
                    return _fn(_p)

                model = snn_engine.train_stdp(
                    model,
                    epoch_images,
                    seed,
                    enc,
                    stdp,
                    forward_weights=refresh_w(model.weights),
                    forward_refresh=refresh_w,
                    epoch_tag=1 + global_epoch,
                )
            else:
                # fault-free stage reduces to plain STDP on the clean weights
                model = snn_engine.train_stdp(
                    model, epoch_images, seed, enc, stdp, epoch_tag=1 + global_epoch
                )
            k = epoch_label_count or label_images.shape[0]
            _relabel(ctx, model, label_images[:k], label_labels[:k])
            val = validate_fn(model)
            log.append(
                (stage_idx, global_epoch, stage.dram_rate, stage.sram_rate, val)
            )
            prev_best = best.val_acc if best is not None else -np.inf
            if best is None or val > best.val_acc:
                best = Checkpoint(model.copy(), stage_idx, global_epoch, val)
            if val > prev_best + schedule.min_delta:
                stale = 0
            else:
                stale += 1
            global_epoch += 1
            if stale >= schedule.patience:
                stop = True
                break
    if best is None:
        raise CapacityError("every scheduled stage failed placement")
    if epoch_label_count is not None:
        # epochs relabel on a subset for speed; the returned model gets the
        # full labeling pass
        _relabel(ctx, best.model, label_images, label_labels)
    return FatmResult(best, log, warnings)


def _pipeline(ctx: EvalContext, strategy: str, dmap, smap):
    """model -> effective dequantized weights, with masks computed once."""
    from .memory_sim import build_hierarchy_mapping, make_effective_fn

    n_words = ctx.model.n_inputs * ctx.model.n_neurons
    mapping = build_hierarchy_mapping(strategy, n_words, dmap, smap, ctx.placement)
    fn = make_effective_fn(mapping, dmap, smap)

    def effective(model: SnnModel) -> np.ndarray:
        store = snn_engine.quantize_weights(
            model.weights, model.w_max, model.weight_bits
        )
        words = fn(store.words)
        eff = snn_engine.QuantizedWeightStore(
            words.astype(store.words.dtype), store.width, store.w_max, store.shape
        )
        return snn_engine.dequantize_weights(eff)

    return effective


def _relabel(ctx: EvalContext, model: SnnModel, images, labels) -> None:
    keys = np.arange(images.shape[0], dtype=np.int64) + LABEL_KEY_OFFSET
    counts = snn_engine.batch_counts(
        model, images, keys, ctx.enc, ctx.master_seed, batch_size=ctx.batch_size
    )
    model.labels = snn_engine.assign_labels(counts, labels, model.n_classes)
