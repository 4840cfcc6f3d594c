import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikemem.fam_codec import (
    MappingPattern,
    Rotation,
    WordFaultMask,
    apply_fault_mask,
    decode_word,
    encode_word,
    exposure,
    longest_circular_run,
    select_rotation,
    select_rotations,
    word_fault_budget_ok,
)
from spikemem.memory_model import FaultKind


def brute_force_exposure(width: int, positions: set[int], r: int) -> int:
    """Independent oracle: the spec formula summed position by position."""
    return sum(2 ** (width - 1 - ((p - r) % width)) for p in positions)


def brute_force_best_rotation(width: int, positions: set[int]) -> tuple[int, int]:
    best_r, best_e = 0, brute_force_exposure(width, positions, 0)
    for r in range(1, width):
        e = brute_force_exposure(width, positions, r)
        if e < best_e:
            best_r, best_e = r, e
    return best_r, best_e


class TestBudget:
    def test_empty_mask_ok(self):
        assert word_fault_budget_ok(WordFaultMask(8), 2)

    def test_three_faults_exceed_budget_two(self):
        assert not word_fault_budget_ok(WordFaultMask(8, {0, 3, 7}), 2)

    def test_boundary_equality(self):
        assert word_fault_budget_ok(WordFaultMask(8, {0, 3}), 2)


class TestLongestRun:
    def test_wraparound(self):
        assert longest_circular_run(WordFaultMask(8, {3})) == (4, 7)

    def test_empty_mask_full_width(self):
        assert longest_circular_run(WordFaultMask(8)) == (0, 8)

    def test_tie_breaks_to_smallest_start(self):
        # runs 1..3 and 5..7 both have length 3
        assert longest_circular_run(WordFaultMask(8, {0, 4})) == (1, 3)

    def test_fully_faulty_degenerate(self):
        assert longest_circular_run(WordFaultMask(4, {0, 1, 2, 3})) == (0, 0)

    def test_exhaustive_against_scan_oracle(self):
        # oracle: longest all-clear window over every (start, length)
        for bits in range(256):
            positions = {p for p in range(8) if (bits >> p) & 1}
            mask = WordFaultMask(8, positions)
            best = (0, 0)
            for length in range(8, 0, -1):
                starts = [
                    s
                    for s in range(8)
                    if all((s + k) % 8 not in positions for k in range(length))
                ]
                if starts:
                    best = (min(starts), length)
                    break
            if len(positions) == 0:
                best = (0, 8)
            assert longest_circular_run(mask) == best, positions


class TestSelectRotation:
    def test_empty_mask_rotation_zero(self):
        assert select_rotation(WordFaultMask(8)).amount == 0

    def test_single_fault_goes_to_lsb(self):
        assert select_rotation(WordFaultMask(8, {3})).amount == 4

    def test_two_fault_tie_breaks_to_smallest(self):
        mask = WordFaultMask(8, {0, 4})
        r = select_rotation(mask)
        assert r.amount == 1
        assert exposure(mask, 1) == 17
        assert exposure(mask, 5) == 17

    def test_exhaustive_oracle_optimality_w8(self):
        # acceptance criterion 1: all 256 masks, exact argmin + tie-break
        for bits in range(256):
            positions = {p for p in range(8) if (bits >> p) & 1}
            mask = WordFaultMask(8, positions)
            got = select_rotation(mask).amount
            best_r, best_e = brute_force_best_rotation(8, positions)
            assert exposure(mask, got) == best_e, positions
            assert got == best_r, positions

    @settings(max_examples=200, deadline=None)
    @given(
        width=st.integers(2, 16),
        bits=st.integers(0, 2**16 - 1),
    )
    def test_rotation_optimality_random_widths(self, width, bits):
        positions = {p for p in range(width) if (bits >> p) & 1}
        mask = WordFaultMask(width, positions)
        got = select_rotation(mask).amount
        best_r, best_e = brute_force_best_rotation(width, positions)
        assert got == best_r and exposure(mask, got) == best_e

    def test_run_alignment_alternative(self):
        mask = WordFaultMask(8, {3})
        assert select_rotation(mask, align_to_run=True).amount == 4
        # faults spanning a window: both policies drop them below the budget
        mask2 = WordFaultMask(8, {0, 1})
        assert select_rotation(mask2, align_to_run=True).amount == 2
        assert select_rotation(mask2).amount == 2

    def test_protected_significances_when_run_is_long(self):
        # if faults fit in <= F consecutive cells, no significance >= F is exposed
        F = 2
        for bits in range(256):
            positions = {p for p in range(8) if (bits >> p) & 1}
            if not positions or len(positions) > F:
                continue
            _, run = longest_circular_run(WordFaultMask(8, positions))
            if run < 8 - F:
                continue
            r = select_rotation(WordFaultMask(8, positions)).amount
            exposed = {(p - r) % 8 for p in positions}
            significances = {8 - 1 - k for k in exposed}
            assert max(significances) < F, positions


class TestEncodeDecode:
    def test_identity_rotation(self):
        assert encode_word(0b10000000, Rotation(0, 8)) == 0b10000000

    def test_single_bit_tracer(self):
        # MSB moves to physical position 1 under r=1
        assert encode_word(0b10000000, Rotation(1, 8)) == 0b01000000

    def test_exhaustive_round_trip_w8(self):
        for word, r in itertools.product(range(256), range(8)):
            rot = Rotation(r, 8)
            assert decode_word(encode_word(word, rot), rot) == word

    def test_decode_r0_is_identity(self):
        for p in (0, 1, 0x5A, 0xFF):
            assert decode_word(p, Rotation(0, 8)) == p

    def test_all_zeros(self):
        for r in range(8):
            assert decode_word(0, Rotation(r, 8)) == 0

    @settings(max_examples=200, deadline=None)
    @given(width=st.integers(1, 64), data=st.data())
    def test_round_trip_any_width(self, width, data):
        word = data.draw(st.integers(0, 2**width - 1))
        r = data.draw(st.integers(0, width - 1))
        rot = Rotation(r, width)
        assert decode_word(encode_word(word, rot), rot) == word

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            encode_word(256, Rotation(0, 8))
        with pytest.raises(ValueError):
            Rotation(8, 8)


class TestMonotoneProtection:
    @pytest.mark.parametrize("kind", [FaultKind.STUCK_AT_0, FaultKind.STUCK_AT_1])
    def test_worst_case_error_no_worse_than_unrotated(self, kind):
        # exhaustive at W=8, |mask| <= 2
        values = np.arange(256, dtype=np.uint64)
        for positions in itertools.chain(
            ({p} for p in range(8)),
            (set(c) for c in itertools.combinations(range(8), 2)),
        ):
            mask = WordFaultMask(8, positions)
            m = np.uint64(mask.int_mask)
            star = select_rotation(mask).amount

            def worst(r):
                from spikemem.fam_codec import rol, ror

                stored = ror(values, np.uint64(r), 8)
                faulty = apply_fault_mask(stored, m, kind)
                back = rol(faulty, np.uint64(r), 8)
                return int(
                    np.max(np.abs(back.astype(np.int64) - values.astype(np.int64)))
                )

            assert worst(star) <= worst(0), positions

    def test_flip_roundtrip_restores(self):
        values = np.arange(256, dtype=np.uint64)
        m = np.uint64(0b10010001)
        once = apply_fault_mask(values, m, FaultKind.FLIP)
        twice = apply_fault_mask(once, m, FaultKind.FLIP)
        assert np.array_equal(twice, values)


class TestVectorizedAgreement:
    def test_select_rotations_matches_scalar(self):
        masks = np.arange(256, dtype=np.uint64)
        rots = select_rotations(masks, 8)
        for bits in range(256):
            mask = WordFaultMask.from_int_mask(8, bits)
            assert int(rots[bits]) == select_rotation(mask).amount

    def test_int_mask_round_trip(self):
        for bits in range(256):
            mask = WordFaultMask.from_int_mask(8, bits)
            assert mask.int_mask == bits


class TestMappingPattern:
    def test_serialization_round_trip(self):
        pat = MappingPattern(
            "FAM1-DRAM", 8, np.array([5, 2, 9]), np.array([0, 3, 7])
        )
        buf = io.StringIO()
        pat.dump(buf)
        buf.seek(0)
        loaded = MappingPattern.load(buf)
        assert loaded.strategy == "FAM1-DRAM"
        assert loaded.word_width == 8
        assert np.array_equal(loaded.addresses, pat.addresses)
        assert np.array_equal(loaded.rotations, pat.rotations)

    def test_unique_address_validation(self):
        pat = MappingPattern("FAM2", 8, np.array([1, 1]), np.array([0, 0]))
        with pytest.raises(ValueError):
            pat.validate_unique_addresses()

    def test_rotation_bound_validation(self):
        with pytest.raises(ValueError):
            MappingPattern("FAM2", 8, np.array([1]), np.array([8]))
