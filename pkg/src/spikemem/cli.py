"""Command-line entry point wiring all modules together.

Subcommands: train, genfaults, map, eval, sweep, fatm.  Outputs land under
--out DIR with fixed names (model.snn, faults.dram.txt, faults.sram.txt,
pattern.dram.txt, pattern.sram.txt, eval.csv, sweep.csv, sweep.grid.csv,
fatm.log, fatm.snn).  Exit codes: 0 success, 2 config error, 3 capacity or
placement failure, 4 data error.  Identical config plus seed reproduces
every output byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import datasets, fatm_trainer, rng, snn_engine
from .config import LABEL_KEY_OFFSET, ExperimentConfig
from .errors import CapacityError, ConfigError, DataError
from .memory_model import FaultMap, FaultSpec, generate_fault_map
from .memory_sim import build_hierarchy_mapping
from .resilience_analysis import (
    EVAL_FAULT_TAG,
    EvalContext,
    SweepGrid,
    classify_regions,
    run_sweep,
)


def _load_data(cfg: ExperimentConfig):
    data_dir = cfg.require_dataset()
    return datasets.load_mnist(
        data_dir, cfg["dataset.train"], cfg["dataset.test"]
    )


def _label_model(model, images, labels, enc, seed, batch_size):
    keys = np.arange(images.shape[0], dtype=np.int64) + LABEL_KEY_OFFSET
    counts = snn_engine.batch_counts(
        model, images, keys, enc, seed, batch_size=batch_size
    )
    model.labels = snn_engine.assign_labels(counts, labels, model.n_classes)
    return model


def train_model(cfg: ExperimentConfig):
    """Plain STDP training plus labeling; the baseline model producer."""
    train_x, train_y, _, _ = _load_data(cfg)
    seed = cfg["seed"]
    model = snn_engine.new_model(
        train_x.shape[1],
        cfg["snn.neurons"],
        seed,
        lif=cfg.lif(),
        w_max=cfg["snn.w_max"],
        n_classes=cfg["snn.classes"],
    )
    model.weight_bits = cfg["snn.weight_bits"]
    model = snn_engine.train_stdp(
        model, train_x, seed, cfg.encoding(), cfg.stdp(), epoch_tag=0
    )
    n_label = min(cfg["dataset.label"], train_x.shape[0])
    return _label_model(
        model, train_x[:n_label], train_y[:n_label], cfg.encoding(), seed,
        cfg["eval.batch"],
    )


def cmd_train(cfg: ExperimentConfig, out: Path) -> int:
    model = train_model(cfg)
    snn_engine.save_model(model, out / "model.snn")
    print(f"wrote {out / 'model.snn'}")
    return 0


def make_fault_maps(cfg: ExperimentConfig, seed_index: int = 0):
    seed = cfg["seed"]
    kind = cfg.fault_kind()
    maps = []
    for geometry, rate, mem in (
        (cfg.dram_geometry(), cfg.fault_rate("dram"), 0),
        (cfg.sram_geometry(), cfg.fault_rate("sram"), 1),
    ):
        if rate == 0.0:
            maps.append(FaultMap.empty(geometry))
        else:
            s = rng.substream_seed(seed, "faults", EVAL_FAULT_TAG, seed_index, mem)
            maps.append(generate_fault_map(geometry, FaultSpec(rate, kind, s)))
    return maps[0], maps[1]


def cmd_genfaults(cfg: ExperimentConfig, out: Path) -> int:
    dmap, smap = make_fault_maps(cfg)
    for name, fmap in (("faults.dram.txt", dmap), ("faults.sram.txt", smap)):
        with open(out / name, "w") as f:
            fmap.dump(f)
        print(f"wrote {out / name}")
    return 0


def _load_map_or_generate(path: Path | None, fallback: FaultMap) -> FaultMap:
    if path is None:
        return fallback
    with open(path) as f:
        return FaultMap.load(f)


def cmd_map(cfg: ExperimentConfig, out: Path, model_path: Path | None,
            dram_faults: Path | None, sram_faults: Path | None) -> int:
    model = (
        snn_engine.load_model(model_path)
        if model_path is not None
        else train_model(cfg)
    )
    n_words = model.n_inputs * model.n_neurons
    gen_d, gen_s = make_fault_maps(cfg)
    dmap = _load_map_or_generate(dram_faults, gen_d)
    smap = _load_map_or_generate(sram_faults, gen_s)
    mapping = build_hierarchy_mapping(
        cfg["strategy"], n_words, dmap, smap, cfg.placement()
    )
    for name, pat in (
        ("pattern.dram.txt", mapping.dram_pattern),
        ("pattern.sram.txt", mapping.sram_pattern),
    ):
        with open(out / name, "w") as f:
            pat.dump(f)
        print(f"wrote {out / name}")
    unplaceable = mapping.dram_pattern.unplaceable + mapping.sram_pattern.unplaceable
    print(f"unplaceable words: {unplaceable}")
    return 0


def build_context(cfg: ExperimentConfig, model) -> EvalContext:
    _, _, test_x, test_y = _load_data(cfg)
    return EvalContext(
        model,
        cfg.dram_geometry(),
        cfg.sram_geometry(),
        cfg.placement(),
        test_x,
        test_y,
        cfg.encoding(),
        cfg["seed"],
        cfg.fault_kind(),
        cfg["eval.batch"],
    )


def cmd_eval(cfg: ExperimentConfig, out: Path, model_path: Path | None,
             dram_faults: Path | None, sram_faults: Path | None) -> int:
    model = (
        snn_engine.load_model(model_path)
        if model_path is not None
        else train_model(cfg)
    )
    ctx = build_context(cfg, model)
    gen_d, gen_s = make_fault_maps(cfg)
    dmap = _load_map_or_generate(dram_faults, gen_d)
    smap = _load_map_or_generate(sram_faults, gen_s)
    strategy = cfg["strategy"]
    weights, ledger = ctx.effective_weights(strategy, dmap, smap)
    acc = ctx.accuracy_with_weights(weights)
    with open(out / "eval.csv", "w") as f:
        f.write(
            "dram_rate,sram_rate,strategy,accuracy,"
            "dram_row_activations,dram_row_buffer_hits,dram_reads,"
            "sram_reads,sram_writes\n"
        )
        f.write(
            f"{cfg.fault_rate('dram'):.10g},{cfg.fault_rate('sram'):.10g},"
            f"{strategy},{acc:.6f},{ledger.csv_row()}\n"
        )
    print(f"accuracy {acc:.4f}; wrote {out / 'eval.csv'}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, out: Path, model_path: Path | None) -> int:
    model = (
        snn_engine.load_model(model_path)
        if model_path is not None
        else train_model(cfg)
    )
    ctx = build_context(cfg, model)
    grid = SweepGrid(
        cfg.rate_list("sweep.dram_rates"),
        cfg.rate_list("sweep.sram_rates"),
        cfg.seed_list(),
        cfg["strategy"],
    )
    report = run_sweep(ctx, grid)
    floor = ctx.fault_free_accuracy() - cfg["sweep.floor_drop"]
    classify_regions(report, floor)
    with open(out / "sweep.csv", "w") as f:
        report.to_csv(f)
    with open(out / "sweep.grid.csv", "w") as f:
        report.to_grid_csv(f)
    print(f"wrote {out / 'sweep.csv'} (floor {floor:.4f})")
    return 0


def cmd_fatm(cfg: ExperimentConfig, out: Path, model_path: Path | None) -> int:
    model = (
        snn_engine.load_model(model_path)
        if model_path is not None
        else train_model(cfg)
    )
    train_x, train_y, _, _ = _load_data(cfg)
    ctx = build_context(cfg, model)
    start_d = cfg["fatm.start_dram"] or cfg.fault_rate("dram")
    start_s = cfg["fatm.start_sram"] or cfg.fault_rate("sram")
    if start_d == 0.0 and start_s == 0.0:
        raise ConfigError(
            "config field 'fatm.start_dram'/'fatm.start_sram': FATM needs "
            "nonzero starting rates (or set faults.*_rate)"
        )
    schedule = fatm_trainer.build_schedule(
        (start_d, start_s),
        cfg["fatm.factor"],
        cfg["fatm.stages"],
        cfg["fatm.epochs"],
        cfg["fatm.patience"],
        cfg["fatm.min_delta"],
    )
    n_label = min(cfg["dataset.label"], train_x.shape[0])
    n_val = min(cfg["dataset.val"], train_x.shape[0])
    result = fatm_trainer.train_fatm(
        ctx,
        schedule,
        cfg["strategy"],
        train_x,
        train_x[:n_label],
        train_y[:n_label],
        train_x[-n_val:],
        train_y[-n_val:],
        stdp=cfg.stdp(),
        samples_per_epoch=cfg["fatm.samples_per_epoch"],
    )
    snn_engine.save_model(result.best.model, out / "fatm.snn")
    with open(out / "fatm.log", "w") as f:
        result.dump_log(f)
    for w in result.warnings:
        print(f"warning: {w}")
    print(
        f"best checkpoint stage {result.best.stage} epoch {result.best.epoch} "
        f"val_acc {result.best.val_acc:.4f}; wrote {out / 'fatm.snn'}"
    )
    return 0


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config field (repeatable)",
    )
    parser = argparse.ArgumentParser(
        prog="spikemem",
        description="fault-aware weight-memory simulation for spiking networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "genfaults"):
        sub.add_parser(name, parents=[common])
    for name in ("map", "eval"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--model", type=Path, help="model container to load")
        p.add_argument("--dram-faults", type=Path, help="fault map file")
        p.add_argument("--sram-faults", type=Path, help="fault map file")
    for name in ("sweep", "fatm"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--model", type=Path, help="model container to load")
    args = parser.parse_args(argv)

    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value.strip()
        cfg = ExperimentConfig.from_sources(args.config, overrides, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "train":
            return cmd_train(cfg, out)
        if args.command == "genfaults":
            return cmd_genfaults(cfg, out)
        if args.command == "map":
            return cmd_map(cfg, out, args.model, args.dram_faults, args.sram_faults)
        if args.command == "eval":
            return cmd_eval(cfg, out, args.model, args.dram_faults, args.sram_faults)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.model)
        if args.command == "fatm":
            return cmd_fatm(cfg, out, args.model)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
