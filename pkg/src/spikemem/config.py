"""Experiment configuration: plain-text key=value files with dotted keys.

Flags override file values and ``--seed`` overrides everything.  Every
value is validated with a field-precise message before any work starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .memory_model import DramGeometry, FaultKind, SramGeometry
from .memory_sim import STRATEGIES, PlacementConfig
from .snn_engine import EncodingParams, LifParams, StdpParams

# labeling/validation spike-train key namespaces (offsets into the coding
# substream), kept distinct from test-set evaluation keys
VAL_KEY_OFFSET = 1_000_000
LABEL_KEY_OFFSET = 2_000_000

DEFAULTS = {
    "seed": 42,
    "jobs": 1,
    "strategy": "FAM1",
    "dataset.dir": "data/mnist",
    "dataset.train": 10000,
    "dataset.test": 2000,
    "dataset.label": 10000,
    "dataset.val": 1000,
    "snn.neurons": 100,
    "snn.classes": 10,
    "snn.w_max": 1.0,
    "snn.weight_bits": 8,
    "snn.allow_nonsquare": False,
    "snn.duration_ms": 450.0,
    "snn.timestep_ms": 1.0,
    "snn.max_rate_hz": 63.75,
    "snn.min_output_spikes": 5,
    "snn.intensity_boost": 0.5,
    "snn.max_boosts": 4,
    "snn.eta": 0.01,
    "snn.trace_tau_ms": 20.0,
    "snn.trace_offset": 0.25,
    "snn.norm_target": 40.0,
    "lif.v_threshold": -52.0,
    "lif.v_reset": -65.0,
    "lif.v_rest": -65.0,
    "lif.membrane_time_constant": 100.0,
    "lif.refractory_period": 5.0,
    "lif.adaptive_theta_increment": 0.02,
    "lif.theta_decay_constant": 1e7,
    "lif.v_inhibit": -75.0,
    "lif.inhibition_window": 3.0,
    "dram.banks": 8,
    "dram.subarrays": 16,
    "dram.rows": 2048,
    "dram.columns": 1024,
    "dram.word_width": 8,
    "dram.capacity_bits": 0,  # 0 = no declared capacity check
    "sram.banks": 8,
    "sram.rows": 4096,
    "sram.word_width": 8,
    "sram.capacity_bits": 0,
    "faults.dram_rate": 0.0,
    "faults.sram_rate": 0.0,
    "faults.kind": "flip",
    # reduced-voltage operation: a voltage plus a two-column table file
    # (or 'example' for the built-in approximate curves) overrides the rate
    "faults.dram_voltage": 0.0,  # 0 = use the configured rate
    "faults.sram_voltage": 0.0,
    "faults.dram_voltage_table": "example",
    "faults.sram_voltage_table": "example",
    "budget.dram": 2,
    "budget.sram": 2,
    "eval.batch": 1000,
    "sweep.dram_rates": "0,1e-6,1e-5,1e-4,1e-3,1e-2,5e-2",
    "sweep.sram_rates": "0,1e-6,1e-5,1e-4,1e-3,1e-2,5e-2",
    "sweep.seeds": "0,1,2,3,4",
    "sweep.floor_drop": 0.05,
    "fatm.start_dram": 0.0,  # 0 = take the configured fault rate
    "fatm.start_sram": 0.0,
    "fatm.factor": 2.0,
    "fatm.stages": 2,
    "fatm.epochs": 2,
    "fatm.samples_per_epoch": 2000,
    "fatm.patience": 2,
    "fatm.min_delta": 0.002,
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw, template) -> object:
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(template, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError("expected a boolean")
        if isinstance(template, int):
            return int(str(raw), 0)
        if isinstance(template, float):
            v = float(raw)
            if math.isnan(v) or math.isinf(v):
                raise ValueError("must be finite")
            return v
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"config field {key!r}: {exc} (got {raw!r})") from None


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def from_sources(
        cls, path: str | None = None, overrides: dict | None = None,
        seed: int | None = None,
    ) -> "ExperimentConfig":
        values = dict(DEFAULTS)
        if path is not None:
            for key, raw in _parse_file(path):
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown config field {key!r}")
                values[key] = _coerce(key, raw, DEFAULTS[key])
        for key, raw in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config field {key!r}")
            values[key] = _coerce(key, raw, DEFAULTS[key])
        if seed is not None:
            values["seed"] = int(seed)
        cfg = cls(values)
        cfg.validate()
        return cfg

    def __getitem__(self, key: str):
        return self.values[key]

    # -- assembled objects --------------------------------------------------

    def dram_geometry(self) -> DramGeometry:
        g = DramGeometry(
            self["dram.banks"],
            self["dram.subarrays"],
            self["dram.rows"],
            self["dram.columns"],
            self["dram.word_width"],
        )
        if self["dram.capacity_bits"]:
            g.check_capacity(self["dram.capacity_bits"])
        return g

    def sram_geometry(self) -> SramGeometry:
        g = SramGeometry(
            self["sram.banks"], self["sram.rows"], self["sram.word_width"]
        )
        if self["sram.capacity_bits"]:
            g.check_capacity(self["sram.capacity_bits"])
        return g

    def placement(self) -> PlacementConfig:
        return PlacementConfig(
            self["budget.dram"], self["budget.sram"], self["dram.word_width"]
        )

    def lif(self) -> LifParams:
        return LifParams(
            v_threshold=self["lif.v_threshold"],
            v_reset=self["lif.v_reset"],
            v_rest=self["lif.v_rest"],
            membrane_time_constant=self["lif.membrane_time_constant"],
            refractory_period=self["lif.refractory_period"],
            adaptive_theta_increment=self["lif.adaptive_theta_increment"],
            theta_decay_constant=self["lif.theta_decay_constant"],
            v_inhibit=self["lif.v_inhibit"],
            inhibition_window=self["lif.inhibition_window"],
        )

    def encoding(self) -> EncodingParams:
        return EncodingParams(
            duration_ms=self["snn.duration_ms"],
            timestep_ms=self["snn.timestep_ms"],
            max_rate_hz=self["snn.max_rate_hz"],
            min_output_spikes=self["snn.min_output_spikes"],
            intensity_boost=self["snn.intensity_boost"],
            max_boosts=self["snn.max_boosts"],
        )

    def stdp(self) -> StdpParams:
        return StdpParams(
            eta=self["snn.eta"],
            trace_tau_ms=self["snn.trace_tau_ms"],
            trace_offset=self["snn.trace_offset"],
            norm_target=self["snn.norm_target"],
        )

    def fault_kind(self) -> FaultKind:
        return FaultKind.parse(self["faults.kind"])

    def fault_rate(self, memory: str) -> float:
        """Configured bit-fault rate; a nonzero voltage overrides via table."""
        from .memory_model import (
            EXAMPLE_DRAM_VOLTAGE_TABLE,
            EXAMPLE_SRAM_VOLTAGE_TABLE,
            VoltageFaultTable,
            rate_at_voltage,
        )

        voltage = self[f"faults.{memory}_voltage"]
        if voltage == 0.0:
            return self[f"faults.{memory}_rate"]
        source = self[f"faults.{memory}_voltage_table"]
        if source == "example":
            table = (
                EXAMPLE_DRAM_VOLTAGE_TABLE
                if memory == "dram"
                else EXAMPLE_SRAM_VOLTAGE_TABLE
            )
        else:
            with open(source) as f:
                table = VoltageFaultTable.load(f, label=source)
        try:
            return rate_at_voltage(table, voltage)
        except ValueError as exc:
            raise ConfigError(f"config field 'faults.{memory}_voltage': {exc}")

    def rate_list(self, key: str) -> tuple[float, ...]:
        out = []
        for part in str(self[key]).split(","):
            part = part.strip()
            if part:
                out.append(float(part))
        return tuple(out)

    def seed_list(self, key: str = "sweep.seeds") -> tuple[int, ...]:
        return tuple(int(p) for p in str(self[key]).split(",") if p.strip())

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        v = self.values
        for key in (
            "dram.banks", "dram.subarrays", "dram.rows", "dram.columns",
            "dram.word_width", "sram.banks", "sram.rows", "sram.word_width",
        ):
            if v[key] < 1:
                raise ConfigError(f"config field {key!r}: must be >= 1, got {v[key]}")
        for key in ("faults.dram_rate", "faults.sram_rate"):
            if not 0.0 <= v[key] <= 1.0:
                raise ConfigError(
                    f"config field {key!r}: probability must be in [0, 1], "
                    f"got {v[key]}"
                )
        for key, width_key in (
            ("budget.dram", "dram.word_width"),
            ("budget.sram", "sram.word_width"),
        ):
            if not 0 <= v[key] <= v[width_key]:
                raise ConfigError(
                    f"config field {key!r}: budget must be in [0, {v[width_key]}], "
                    f"got {v[key]}"
                )
        if v["strategy"] not in STRATEGIES:
            raise ConfigError(
                f"config field 'strategy': must be one of {STRATEGIES}, "
                f"got {v['strategy']!r}"
            )
        try:
            FaultKind.parse(v["faults.kind"])
        except ValueError as exc:
            raise ConfigError(f"config field 'faults.kind': {exc}") from None
        n = v["snn.neurons"]
        if n < 1:
            raise ConfigError(f"config field 'snn.neurons': must be >= 1, got {n}")
        if not v["snn.allow_nonsquare"] and int(math.isqrt(n)) ** 2 != n:
            raise ConfigError(
                f"config field 'snn.neurons': {n} is not a perfect square "
                "(set snn.allow_nonsquare = true to override)"
            )
        for key in ("dataset.train", "dataset.test", "dataset.label", "dataset.val"):
            if v[key] < 1:
                raise ConfigError(f"config field {key!r}: must be >= 1, got {v[key]}")
        for key in ("sweep.dram_rates", "sweep.sram_rates"):
            rates = self.rate_list(key)
            if any(not 0.0 <= r <= 1.0 for r in rates):
                raise ConfigError(
                    f"config field {key!r}: probabilities must be in [0, 1]"
                )
            if list(rates) != sorted(rates):
                raise ConfigError(f"config field {key!r}: must be sorted ascending")
        if v["fatm.factor"] < 1.0:
            raise ConfigError(
                f"config field 'fatm.factor': must be >= 1, got {v['fatm.factor']}"
            )
        # constructor validation for the composite parameter blocks
        self.lif()
        self.encoding()
        self.stdp()
        self.placement()

    def require_dataset(self) -> Path:
        d = Path(self["dataset.dir"])
        if not d.exists():
            raise ConfigError(
                f"config field 'dataset.dir': path {d} does not exist"
            )
        return d


def _parse_file(path: str):
    pairs = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {stripped!r}"
                )
            key, _, raw = stripped.partition("=")
            pairs.append((key.strip(), raw.strip()))
    return pairs
