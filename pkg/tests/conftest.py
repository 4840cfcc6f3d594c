import numpy as np
import pytest

from spikemem.memory_model import DramGeometry, SramGeometry
from spikemem.memory_sim import PlacementConfig
from spikemem.resilience_analysis import EvalContext
from spikemem.snn_engine import (
    EncodingParams,
    LifParams,
    StdpParams,
    assign_labels,
    batch_counts,
    new_model,
    train_stdp,
)

TOY_CLASSES = 4


def toy_dataset(n: int, seed: int, dim: int = 16):
    """Synthetic 4-class stripe patterns with pixel noise; fast stand-in for
    image data in orchestration tests."""
    g = np.random.Generator(np.random.PCG64(seed))
    prototypes = np.zeros((TOY_CLASSES, dim))
    for c in range(TOY_CLASSES):
        prototypes[c, c * dim // TOY_CLASSES : (c + 1) * dim // TOY_CLASSES] = 0.9
    labels = g.integers(0, TOY_CLASSES, n)
    images = np.clip(prototypes[labels] + g.uniform(-0.15, 0.15, (n, dim)), 0, 1)
    return images.astype(np.float32), labels


def toy_trained_context(
    master_seed: int = 7,
    n_train: int = 120,
    n_eval: int = 80,
    neurons: int = 8,
    dram=None,
    sram=None,
    placement=None,
):
    """A small trained-and-labeled model wrapped in an EvalContext."""
    dim = 16
    enc = EncodingParams(
        duration_ms=120, max_rate_hz=200.0, min_output_spikes=1, max_boosts=2
    )
    lif = LifParams(adaptive_theta_increment=0.3)
    stdp = StdpParams(eta=0.05, norm_target=3.0)
    train_x, train_y = toy_dataset(n_train, master_seed)
    eval_x, eval_y = toy_dataset(n_eval, master_seed + 1)
    model = new_model(dim, neurons, master_seed, lif=lif, n_classes=TOY_CLASSES)
    model = train_stdp(model, train_x, master_seed, enc, stdp)
    keys = np.arange(n_train, dtype=np.int64) + 2_000_000
    counts = batch_counts(model, train_x, keys, enc, master_seed, batch_size=64)
    model.labels = assign_labels(counts, train_y, TOY_CLASSES)
    ctx = EvalContext(
        model,
        dram or DramGeometry(2, 2, 8, 16, 8),
        sram or SramGeometry(4, 32, 8),
        placement or PlacementConfig(),
        eval_x,
        eval_y,
        enc,
        master_seed,
        batch_size=64,
    )
    return ctx, (train_x, train_y)


@pytest.fixture(scope="session")
def toy_ctx():
    return toy_trained_context()[0]


@pytest.fixture(scope="session")
def toy_ctx_with_data():
    return toy_trained_context()
