"""Rate-coded single-layer spiking network with LIF neurons and STDP.

Dynamics: discrete-time leaky integrate-and-fire with direct charge
injection per presynaptic spike, per-neuron adaptive threshold offsets
(homeostasis), and winner-take-all lateral inhibition: when one or more
neurons cross threshold in a step, the one with the largest margin spikes
(ties to the lowest index) and every other neuron is clamped to the
inhibition level for the inhibition window.

Learning is pair-based STDP driven by exponential presynaptic traces: each
postsynaptic spike moves the spiking neuron's weights by eta*(trace -
offset), clipped to [0, w_max].  Inference never mutates the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class LifParams:
    v_threshold: float = -52.0
    v_reset: float = -65.0
    v_rest: float = -65.0
    membrane_time_constant: float = 100.0
    refractory_period: float = 5.0
    adaptive_theta_increment: float = 0.02
    theta_decay_constant: float = 1e7
    v_inhibit: float = -75.0
    inhibition_window: float = 3.0

    def __post_init__(self):
        if not self.v_reset <= self.v_rest < self.v_threshold:
            raise ConfigError("require v_reset <= v_rest < v_threshold")
        if self.membrane_time_constant <= 0 or self.theta_decay_constant <= 0:
            raise ConfigError("time constants must be > 0")
        if self.refractory_period < 0 or self.inhibition_window < 0:
            raise ConfigError("refractory/inhibition periods must be >= 0")


@dataclass(frozen=True)
class EncodingParams:
    duration_ms: float = 450.0
    timestep_ms: float = 1.0
    max_rate_hz: float = 63.75
    # weak inputs are re-presented at boosted intensity until they evoke
    # at least min_output_spikes (or boosts run out)
    min_output_spikes: int = 5
    intensity_boost: float = 0.5
    max_boosts: int = 4

    def __post_init__(self):
        if self.duration_ms <= 0 or self.timestep_ms <= 0:
            raise ConfigError("duration and timestep must be > 0")
        p = self.max_rate_hz * self.timestep_ms / 1000.0
        if p * (1.0 + self.intensity_boost) ** self.max_boosts > 1.0:
            raise ConfigError(
                "spike probability per step exceeds 1 at maximum boost"
            )

    @property
    def steps(self) -> int:
        return int(round(self.duration_ms / self.timestep_ms))


@dataclass(frozen=True)
class StdpParams:
    eta: float = 0.01
    trace_tau_ms: float = 20.0
    trace_offset: float = 0.25
    # divisive per-neuron weight-sum normalization (0 disables)
    norm_target: float = 40.0

    def __post_init__(self):
        if self.eta < 0 or self.trace_tau_ms <= 0:
            raise ConfigError("eta must be >= 0 and trace tau > 0")


@dataclass
class SpikeTrain:
    duration_ms: float
    timestep_ms: float
    events: np.ndarray  # (steps, n_inputs) bool

    @property
    def steps(self) -> int:
        return self.events.shape[0]


@dataclass
class SnnModel:
    """Weights, adaptive thresholds, class labels and neuron parameters."""

    weights: np.ndarray  # (n_inputs, n_neurons) float64 in [0, w_max]
    theta: np.ndarray  # (n_neurons,) threshold offsets
    labels: np.ndarray  # (n_neurons,) int16, -1 = unassigned
    lif: LifParams = field(default_factory=LifParams)
    w_max: float = 1.0
    weight_bits: int = 8
    n_classes: int = 10

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int16)

    @property
    def n_inputs(self) -> int:
        return self.weights.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "SnnModel":
        return SnnModel(
            self.weights.copy(),
            self.theta.copy(),
            self.labels.copy(),
            self.lif,
            self.w_max,
            self.weight_bits,
            self.n_classes,
        )


def new_model(
    n_inputs: int,
    n_neurons: int,
    seed: int,
    lif: LifParams | None = None,
    w_max: float = 1.0,
    n_classes: int = 10,
) -> SnnModel:
    g = rng.generator(seed, "init")
    weights = g.uniform(0.0, 0.3 * w_max, size=(n_inputs, n_neurons))
    return SnnModel(
        weights=weights,
        theta=np.zeros(n_neurons),
        labels=np.full(n_neurons, -1, dtype=np.int16),
        lif=lif or LifParams(),
        w_max=w_max,
        n_classes=n_classes,
    )


# -- quantized storage --------------------------------------------------------


@dataclass
class QuantizedWeightStore:
    """Fixed-width unsigned weight words plus the affine dequantization scale."""

    words: np.ndarray  # flat, row-major over (n_inputs, n_neurons)
    width: int
    w_max: float
    shape: tuple[int, int]

    @property
    def levels(self) -> int:
        return (1 << self.width) - 1

    @property
    def scale(self) -> float:
        return self.w_max / self.levels

    def __len__(self) -> int:
        return int(self.words.size)


def quantize_weights(
    weights: np.ndarray, w_max: float, width: int = 8
) -> QuantizedWeightStore:
    """w -> round-half-up(w / w_max * (2^width - 1)) as unsigned words."""
    w = np.asarray(weights, dtype=np.float64)
    levels = (1 << width) - 1
    q = np.floor(w / w_max * levels + 0.5)
    q = np.clip(q, 0, levels)
    dtype = np.uint8 if width <= 8 else np.uint16 if width <= 16 else np.uint64
    return QuantizedWeightStore(
        words=q.astype(dtype).ravel(), width=width, w_max=w_max, shape=w.shape
    )


def dequantize_weights(store: QuantizedWeightStore) -> np.ndarray:
    return store.words.reshape(store.shape).astype(np.float64) * store.scale


# -- rate coding --------------------------------------------------------------


def rate_encode(
    image: np.ndarray,
    duration_ms: float,
    timestep_ms: float,
    max_rate_hz: float,
    seed: int,
) -> SpikeTrain:
    """Bernoulli spikes per step with probability pixel*rate*dt (Poisson approx)."""
    image = np.asarray(image, dtype=np.float64)
    if image.min() < 0.0 or image.max() > 1.0:
        raise ConfigError("pixels must be normalized to [0, 1]")
    p_max = max_rate_hz * timestep_ms / 1000.0
    if p_max > 1.0:
        raise ConfigError("max_rate * timestep exceeds probability 1")
    steps = int(round(duration_ms / timestep_ms))
    g = np.random.Generator(np.random.PCG64(seed))
    events = g.random((steps, image.size)) < (image * p_max)[None, :]
    return SpikeTrain(duration_ms, timestep_ms, events)


def _packed_trains(
    images: np.ndarray,
    keys: np.ndarray,
    enc: EncodingParams,
    coding_seed: int,
    boost: int = 0,
) -> np.ndarray:
    """Bit-packed spike trains, (steps, batch, ceil(inputs/8)) uint8.

    Image i's train equals rate_encode at the boosted rate with the seed
    derived from (coding_seed, key_i, boost).
    """
    steps = enc.steps
    n = images.shape[0]
    d = images.shape[1]
    scale = (1.0 + enc.intensity_boost) ** boost
    p = images * min(enc.max_rate_hz * scale * enc.timestep_ms / 1000.0, 1.0)
    packed = np.empty((steps, n, (d + 7) // 8), dtype=np.uint8)
    for i in range(n):
        seed = rng.substream_seed(coding_seed, "coding", int(keys[i]), boost)
        g = np.random.Generator(np.random.PCG64(seed))
        ev = g.random((steps, d)) < p[i][None, :]
        packed[:, i, :] = np.packbits(ev, axis=1)
    return packed


# -- forward dynamics ---------------------------------------------------------


def _step_constants(lif: LifParams, dt: float):
    leak = float(np.exp(-dt / lif.membrane_time_constant))
    theta_decay = float(np.exp(-dt / lif.theta_decay_constant))
    refrac_steps = int(round(lif.refractory_period / dt))
    inh_steps = int(round(lif.inhibition_window / dt))
    return leak, theta_decay, refrac_steps, inh_steps


def forward_counts_batch(
    weights_f32: np.ndarray,
    theta: np.ndarray,
    lif: LifParams,
    packed: np.ndarray,
    n_inputs: int,
    dt: float,
    inhibition: bool = True,
) -> np.ndarray:
    """Spike counts for a batch of pre-encoded inputs; model is read-only."""
    steps, batch, _ = packed.shape
    n_neurons = weights_f32.shape[1]
    leak, _, refrac_steps, inh_steps = _step_constants(lif, dt)
    v = np.full((batch, n_neurons), lif.v_rest, dtype=np.float32)
    refrac = np.zeros((batch, n_neurons), dtype=np.int16)
    inh = np.zeros((batch, n_neurons), dtype=np.int16)
    counts = np.zeros((batch, n_neurons), dtype=np.int32)
    theta32 = theta.astype(np.float32)
    thresh = np.float32(lif.v_threshold) + theta32[None, :]
    v_rest = np.float32(lif.v_rest)
    v_reset = np.float32(lif.v_reset)
    v_inhibit = np.float32(lif.v_inhibit)
    leak32 = np.float32(leak)
    for t in range(steps):
        spikes = np.unpackbits(packed[t], axis=1, count=n_inputs).astype(np.float32)
        current = spikes @ weights_f32
        can = (refrac == 0) & (inh == 0)
        v = np.where(can, v_rest + (v - v_rest) * leak32 + current, v)
        crossed = can & (v >= thresh)
        # timers tick before this step's spikes arm new ones, so a period of
        # R blocks integration for exactly R steps after the spike step
        np.maximum(refrac - 1, 0, out=refrac)
        np.maximum(inh - 1, 0, out=inh)
        if inhibition:
            rows = crossed.any(axis=1)
            if rows.any():
                b_idx = np.flatnonzero(rows)
                margin = np.where(crossed[b_idx], v[b_idx] - theta32[None, :], -np.inf)
                w_idx = np.argmax(margin, axis=1)
                counts[b_idx, w_idx] += 1
                v[b_idx, :] = v_inhibit
                v[b_idx, w_idx] = v_reset
                if inh_steps > 0:
                    inh[b_idx, :] = inh_steps
                    inh[b_idx, w_idx] = 0
                if refrac_steps > 0:
                    refrac[b_idx, w_idx] = refrac_steps
        else:
            if crossed.any():
                b_idx, w_idx = np.nonzero(crossed)
                counts[b_idx, w_idx] += 1
                v[b_idx, w_idx] = v_reset
                if refrac_steps > 0:
                    refrac[b_idx, w_idx] = refrac_steps
    return counts


def simulate_forward(
    model: SnnModel, train: SpikeTrain, inhibition: bool = True
) -> np.ndarray:
    """Per-neuron output spike counts for one input train (deterministic)."""
    if train.events.shape[1] != model.n_inputs:
        raise ConfigError("spike train width does not match model inputs")
    packed = np.packbits(train.events, axis=1)[:, None, :]
    counts = forward_counts_batch(
        model.weights.astype(np.float32),
        model.theta,
        model.lif,
        packed,
        model.n_inputs,
        train.timestep_ms,
        inhibition=inhibition,
    )
    return counts[0]


def batch_counts(
    model: SnnModel,
    images: np.ndarray,
    keys: np.ndarray,
    enc: EncodingParams,
    coding_seed: int,
    weights_override: np.ndarray | None = None,
    batch_size: int = 1000,
) -> np.ndarray:
    """Spike counts over an image set, with weak-response intensity retries."""
    weights = (
        weights_override if weights_override is not None else model.weights
    ).astype(np.float32)
    n = images.shape[0]
    out = np.zeros((n, model.n_neurons), dtype=np.int32)
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        sub = images[lo:hi]
        sub_keys = keys[lo:hi]
        packed = _packed_trains(sub, sub_keys, enc, coding_seed, boost=0)
        counts = forward_counts_batch(
            weights, model.theta, model.lif, packed, model.n_inputs, enc.timestep_ms
        )
        boost = 0
        weak = np.flatnonzero(counts.sum(axis=1) < enc.min_output_spikes)
        while weak.size and boost < enc.max_boosts:
            boost += 1
            packed = _packed_trains(sub[weak], sub_keys[weak], enc, coding_seed, boost)
            counts[weak] = forward_counts_batch(
                weights,
                model.theta,
                model.lif,
                packed,
                model.n_inputs,
                enc.timestep_ms,
            )
            weak = weak[counts[weak].sum(axis=1) < enc.min_output_spikes]
        out[lo:hi] = counts
    return out


# -- learning -----------------------------------------------------------------


def stdp_update(
    weights: np.ndarray,
    trace: np.ndarray,
    post_spikes: np.ndarray,
    eta: float,
    offset: float,
    w_max: float,
) -> np.ndarray:
    """Pure pair-based STDP step: dw = eta*(trace - offset) per post spike."""
    w = np.array(weights, dtype=np.float64, copy=True)
    for n in np.flatnonzero(post_spikes):
        w[:, n] = np.clip(w[:, n] + eta * (trace - offset), 0.0, w_max)
    return w


def train_stdp(
    model: SnnModel,
    images: np.ndarray,
    training_seed: int,
    enc: EncodingParams | None = None,
    stdp: StdpParams | None = None,
    forward_weights: np.ndarray | None = None,
    forward_refresh=None,
    epoch_tag: int = 0,
) -> SnnModel:
    """One sequential STDP pass over the images; returns the updated model.

    ``forward_weights`` lets the membrane dynamics run on a perturbed copy
    of the weights while STDP updates accumulate in the clean model
    (fault-aware training); ``forward_refresh(weights) -> perturbed`` is
    then called after every image to re-derive the perturbed copy.
    """
    enc = enc or EncodingParams()
    stdp = stdp or StdpParams()
    model = model.copy()
    lif = model.lif
    dt = enc.timestep_ms
    leak, theta_decay, refrac_steps, inh_steps = _step_constants(lif, dt)
    steps = enc.steps
    n_inputs, n_neurons = model.weights.shape
    w = model.weights
    theta = model.theta
    fwd = w if forward_weights is None else np.asarray(forward_weights, np.float64)
    trace_decay = float(np.exp(-dt / stdp.trace_tau_ms))
    p_base = enc.max_rate_hz * dt / 1000.0

    if stdp.norm_target > 0:
        _normalize_columns(w, stdp.norm_target, model.w_max)

    for i in range(images.shape[0]):
        pixels = images[i]
        total = 0
        for boost in range(enc.max_boosts + 1):
            seed = rng.substream_seed(training_seed, "training", epoch_tag, i, boost)
            g = np.random.Generator(np.random.PCG64(seed))
            p = pixels * min(p_base * (1.0 + enc.intensity_boost) ** boost, 1.0)
            events = g.random((steps, n_inputs)) < p[None, :]
            step_idx, input_idx = np.nonzero(events)
            bounds = np.searchsorted(step_idx, np.arange(steps + 1))

            v = np.full(n_neurons, lif.v_rest)
            refrac = np.zeros(n_neurons, dtype=np.int32)
            inh = np.zeros(n_neurons, dtype=np.int32)
            trace = np.zeros(n_inputs)
            total = 0
            for t in range(steps):
                trace *= trace_decay
                active = input_idx[bounds[t] : bounds[t + 1]]
                if active.size:
                    np.add.at(trace, active, 1.0)
                    current = fwd[active, :].sum(axis=0)
                else:
                    current = 0.0
                can = (refrac == 0) & (inh == 0)
                v = np.where(can, lif.v_rest + (v - lif.v_rest) * leak + current, v)
                crossed = can & (v >= lif.v_threshold + theta)
                np.maximum(refrac - 1, 0, out=refrac)
                np.maximum(inh - 1, 0, out=inh)
                if crossed.any():
                    margin = np.where(crossed, v - theta, -np.inf)
                    win = int(np.argmax(margin))
                    total += 1
                    v[:] = lif.v_inhibit
                    v[win] = lif.v_reset
                    if inh_steps > 0:
                        inh[:] = inh_steps
                        inh[win] = 0
                    if refrac_steps > 0:
                        refrac[win] = refrac_steps
                    w[:, win] = np.clip(
                        w[:, win] + stdp.eta * (trace - stdp.trace_offset),
                        0.0,
                        model.w_max,
                    )
                    theta[win] += lif.adaptive_theta_increment
                theta *= theta_decay
            if total >= enc.min_output_spikes:
                break
        if stdp.norm_target > 0:
            _normalize_columns(w, stdp.norm_target, model.w_max)
        if forward_weights is not None and forward_refresh is not None:
            fwd = np.asarray(forward_refresh(w), dtype=np.float64)
    return model


def _normalize_columns(w: np.ndarray, target: float, w_max: float) -> None:
    sums = w.sum(axis=0)
    nz = sums > 0
    w[:, nz] *= target / sums[nz]
    np.clip(w, 0.0, w_max, out=w)


# -- labeling and evaluation ---------------------------------------------------


def assign_labels(
    counts: np.ndarray, sample_labels: np.ndarray, n_classes: int
) -> np.ndarray:
    """Label each neuron with the class it spiked for most (ties: lowest class).

    Neurons that never spiked stay unassigned (-1).
    """
    if counts.shape[0] == 0:
        raise DataError("labeling sample set is empty")
    response = np.zeros((counts.shape[1], n_classes), dtype=np.int64)
    for c in range(n_classes):
        sel = sample_labels == c
        if sel.any():
            response[:, c] = counts[sel].sum(axis=0)
    labels = np.argmax(response, axis=1).astype(np.int16)
    labels[response.sum(axis=1) == 0] = -1
    return labels


def classify(counts: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Predicted class per sample: argmax of summed spike counts per label."""
    if not (labels >= 0).any():
        raise DataError("all neurons unassigned; cannot classify")
    onehot = np.zeros((labels.size, n_classes), dtype=np.int64)
    assigned = labels >= 0
    onehot[np.flatnonzero(assigned), labels[assigned]] = 1
    scores = counts @ onehot
    return np.argmax(scores, axis=1)


def evaluate_accuracy(
    model: SnnModel,
    images: np.ndarray,
    true_labels: np.ndarray,
    enc: EncodingParams,
    coding_seed: int,
    weights_override: np.ndarray | None = None,
    keys: np.ndarray | None = None,
    batch_size: int = 1000,
) -> float:
    """Fraction of samples classified correctly under the model's labels."""
    if keys is None:
        keys = np.arange(images.shape[0], dtype=np.int64)
    counts = batch_counts(
        model, images, keys, enc, coding_seed, weights_override, batch_size
    )
    pred = classify(counts, model.labels, model.n_classes)
    return float(np.mean(pred == true_labels))


# -- model container -----------------------------------------------------------

_MAGIC = b"SNNMODEL"
_LIF_FIELDS = (
    "v_threshold",
    "v_reset",
    "v_rest",
    "membrane_time_constant",
    "refractory_period",
    "adaptive_theta_increment",
    "theta_decay_constant",
    "v_inhibit",
    "inhibition_window",
)


def save_model(model: SnnModel, path) -> None:
    """Self-describing binary container; weights stored as quantized words."""
    import struct

    store = quantize_weights(model.weights, model.w_max, model.weight_bits)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(
            struct.pack(
                "<IIIII",
                1,
                model.n_inputs,
                model.n_neurons,
                model.n_classes,
                model.weight_bits,
            )
        )
        f.write(struct.pack("<d", model.w_max))
        f.write(struct.pack("<9d", *[getattr(model.lif, n) for n in _LIF_FIELDS]))
        f.write(model.theta.astype("<f8").tobytes())
        f.write(model.labels.astype("<i2").tobytes())
        f.write(store.words.astype(np.uint8).tobytes())


def load_model(path) -> SnnModel:
    import struct

    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise DataError(f"not a model container: {path}")
        version, n_inputs, n_neurons, n_classes, bits = struct.unpack(
            "<IIIII", f.read(20)
        )
        if version != 1:
            raise DataError(f"unsupported model version {version}")
        (w_max,) = struct.unpack("<d", f.read(8))
        lif_vals = struct.unpack("<9d", f.read(72))
        theta = np.frombuffer(f.read(8 * n_neurons), dtype="<f8").copy()
        labels = np.frombuffer(f.read(2 * n_neurons), dtype="<i2").copy()
        words = np.frombuffer(f.read(n_inputs * n_neurons), dtype=np.uint8).copy()
    lif = LifParams(**dict(zip(_LIF_FIELDS, lif_vals)))
    store = QuantizedWeightStore(words, bits, w_max, (n_inputs, n_neurons))
    return SnnModel(
        weights=dequantize_weights(store),
        theta=theta,
        labels=labels,
        lif=lif,
        w_max=w_max,
        weight_bits=bits,
        n_classes=n_classes,
    )
