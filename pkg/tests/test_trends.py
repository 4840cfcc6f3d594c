"""Statistical trend invariants on the desk-scale experiments.

These share the cached artifacts of the acceptance suite (first run is
slow, later runs are instant).
"""

import numpy as np
import pytest

import acceptance_lib as lib

pytestmark = pytest.mark.acceptance

# frozen regression value of the default-profile fault-free run (seed 42,
# Net100, 10k train / 2k eval); the band is a sanity gate on retraining
GOLDEN_FAULT_FREE = 0.715


@pytest.fixture(scope="module")
def ctx():
    return lib.context()


class TestGoldenAccuracy:
    def test_fault_free_matches_frozen_golden_value(self, ctx):
        ff = lib.fault_free_accuracy(ctx)
        assert ff == pytest.approx(GOLDEN_FAULT_FREE, abs=1e-12)

    def test_fault_free_in_expected_band(self, ctx):
        assert 0.70 <= lib.fault_free_accuracy(ctx) <= 0.85


class TestCapacityTrend:
    def test_net400_at_least_net100_minus_2pp_over_5_seeds(self):
        res = lib.capacity_accuracies(range(5))
        mean100 = float(np.mean(res["100"]))
        mean400 = float(np.mean(res["400"]))
        assert mean400 >= mean100 - 0.02, (mean100, mean400)


class TestFam1CellDominance:
    RATES = (0.0, 1e-4, 1e-3, 1e-2, 5e-2)

    def test_fam1_at_least_baseline_within_1_se_at_damaging_cells(self, ctx):
        base = {
            (c["d"], c["s"]): c["accs"]
            for c in lib.sweep_report(ctx, self.RATES, range(5), "baseline")
        }
        fam1 = {
            (c["d"], c["s"]): c["accs"]
            for c in lib.sweep_report(ctx, self.RATES, range(5), "FAM1")
        }
        for key in base:
            if max(key) < 1e-3:
                continue
            a = np.array(base[key])
            b = np.array(fam1[key])
            se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
            assert b.mean() >= a.mean() - se, (key, a.mean(), b.mean(), se)
