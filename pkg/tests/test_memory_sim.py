import itertools

import numpy as np
import pytest

from spikemem.errors import CapacityError
from spikemem.fam_codec import exposure, rol, WordFaultMask
from spikemem.memory_model import (
    DramGeometry,
    FaultKind,
    FaultMap,
    FaultSpec,
    SramGeometry,
    generate_fault_map,
)
from spikemem.memory_sim import (
    AccessLedger,
    PlacementConfig,
    build_hierarchy_mapping,
    count_dram_ledger,
    dram_scan_addresses,
    place_fam2,
    place_in_dram,
    place_in_sram,
    place_in_sram_stream,
    read_back,
    simulate_hierarchy,
    sram_scan_addresses,
    tile_residency,
    usable_sram_slots,
)

TOY_DRAM = DramGeometry(banks=2, subarrays=2, rows=2, columns=4, word_width=8)
TOY_SRAM = SramGeometry(banks=4, rows=4, word_width=8)
CONFIG = PlacementConfig(2, 2, 8)


def cells_for(geometry, word_addr, positions):
    return [word_addr * geometry.word_width + p for p in positions]


def toy_map(geometry, faulty: dict[int, set[int]], kind=FaultKind.FLIP) -> FaultMap:
    cells = [c for addr, pos in faulty.items() for c in cells_for(geometry, addr, pos)]
    return FaultMap(geometry, kind, cells=np.array(cells, dtype=np.int64))


def hand_scan_order(g: DramGeometry):
    """Independent oracle for the DRAM scan: explicit nested loops."""
    out = []
    for ro in range(g.rows):
        for su in range(g.subarrays):
            for ba in range(g.banks):
                for co in range(g.columns):
                    out.append(g.linear_address(ba, su, ro, co))
    return np.array(out)


class TestScanOrder:
    def test_dram_scan_matches_nested_loop_oracle(self):
        got = dram_scan_addresses(TOY_DRAM, 0, TOY_DRAM.words)
        assert np.array_equal(got, hand_scan_order(TOY_DRAM))

    def test_dram_scan_windows_agree(self):
        full = dram_scan_addresses(TOY_DRAM, 0, 32)
        assert np.array_equal(dram_scan_addresses(TOY_DRAM, 5, 17), full[5:17])

    def test_sram_scan_matches_nested_loop_oracle(self):
        out = []
        for ro in range(TOY_SRAM.rows):
            for ba in range(TOY_SRAM.banks):
                out.append(TOY_SRAM.linear_address(ba, ro))
        assert np.array_equal(
            sram_scan_addresses(TOY_SRAM, 0, TOY_SRAM.words), np.array(out)
        )


class TestDramPlacement:
    def test_fault_free_takes_first_slots_in_scan_order(self):
        pat = place_in_dram(10, TOY_DRAM, FaultMap.empty(TOY_DRAM), CONFIG, "FAM1")
        assert np.array_equal(pat.addresses, hand_scan_order(TOY_DRAM)[:10])
        assert np.all(pat.rotations == 0)

    def test_skip_and_shift(self):
        # hand-simulated: scan slot k=2 (address 2) carries 3 faults with
        # budget 2, so word 2 shifts to slot 3 and successors shift by one
        fmap = toy_map(TOY_DRAM, {2: {0, 3, 7}})
        pat = place_in_dram(10, TOY_DRAM, fmap, CONFIG, "FAM1")
        expected = [0, 1, 3, 16, 17, 18, 19, 8, 9, 10]
        assert pat.addresses.tolist() == expected

    def test_two_fault_word_is_kept_and_rotated(self):
        fmap = toy_map(TOY_DRAM, {0: {3, 4}})
        pat = place_in_dram(4, TOY_DRAM, fmap, CONFIG, "FAM1")
        assert pat.addresses[0] == 0
        expected_rot = 5  # faults at 3,4 land on significances 1,0
        mask = WordFaultMask(8, {3, 4})
        assert exposure(mask, int(pat.rotations[0])) == min(
            exposure(mask, r) for r in range(8)
        )
        assert pat.rotations[0] == expected_rot

    def test_all_columns_over_budget_capacity_error(self):
        cells = []
        for addr in range(TOY_DRAM.words):
            cells.extend(cells_for(TOY_DRAM, addr, {0, 1, 2}))
        fmap = FaultMap(TOY_DRAM, FaultKind.FLIP, cells=np.array(cells))
        with pytest.raises(CapacityError) as exc:
            place_in_dram(5, TOY_DRAM, fmap, CONFIG, "FAM1")
        assert exc.value.unplaceable == 5

    def test_baseline_never_skips(self):
        fmap = toy_map(TOY_DRAM, {0: {0, 1, 2, 3, 4}})
        pat = place_in_dram(4, TOY_DRAM, fmap, CONFIG, "baseline")
        assert pat.addresses.tolist() == [0, 1, 2, 3]
        assert np.all(pat.rotations == 0)

    def test_fully_faulty_word_always_skipped(self):
        fmap = toy_map(TOY_DRAM, {0: set(range(8))})
        pat = place_in_dram(2, TOY_DRAM, fmap, PlacementConfig(8, 8, 8), "FAM1")
        assert pat.addresses.tolist() == [1, 2]

    def test_empty_store_rejected(self):
        with pytest.raises(ValueError):
            place_in_dram(0, TOY_DRAM, FaultMap.empty(TOY_DRAM), CONFIG, "FAM1")


class TestSramPlacement:
    def test_fault_free_row_bank_order(self):
        pat = place_in_sram(6, TOY_SRAM, FaultMap.empty(TOY_SRAM), CONFIG, "FAM1")
        # (ro0, ba0..3) then (ro1, ba0..1); address = ba*rows + ro
        assert pat.addresses.tolist() == [0, 4, 8, 12, 1, 5]

    def test_row_skip_and_shift(self):
        # (ro=0, ba=1) over budget: its word moves to (ro=0, ba=2)
        over = TOY_SRAM.linear_address(1, 0)
        fmap = toy_map(TOY_SRAM, {over: {1, 4, 6}})
        pat = place_in_sram(6, TOY_SRAM, fmap, CONFIG, "FAM1")
        assert pat.addresses.tolist() == [0, 8, 12, 1, 5, 9]

    def test_budget_equal_width_keeps_partial_rows(self):
        fmap = toy_map(TOY_SRAM, {0: {0, 1, 2, 3, 4, 5, 6}})  # 7 of 8 faulty
        cfg = PlacementConfig(8, 8, 8)
        pat = place_in_sram(4, TOY_SRAM, fmap, cfg, "FAM1")
        assert pat.addresses.tolist() == [0, 4, 8, 12]

    def test_tile_overflow(self):
        with pytest.raises(CapacityError):
            place_in_sram(17, TOY_SRAM, FaultMap.empty(TOY_SRAM), CONFIG, "FAM1")

    def test_unique_addresses_within_tile(self):
        pat = place_in_sram(16, TOY_SRAM, FaultMap.empty(TOY_SRAM), CONFIG, "FAM1")
        pat.validate_unique_addresses()


class TestTileResidency:
    def test_identity_when_model_fits(self):
        assert tile_residency(8, 16).tolist() == list(range(8))

    def test_wraparound_shares_slots(self):
        res = tile_residency(10, 4)
        assert res.tolist() == [0, 1, 2, 3, 0, 1, 2, 3, 0, 1]

    def test_residency_skips_same_rows_as_placement(self):
        over = TOY_SRAM.linear_address(1, 0)
        fmap = toy_map(TOY_SRAM, {over: {1, 4, 6}})
        stream = place_in_sram_stream(20, TOY_SRAM, fmap, CONFIG, "FAM1")
        usable = usable_sram_slots(TOY_SRAM, fmap, CONFIG, "FAM1")
        assert over not in usable
        assert np.array_equal(stream.addresses, usable[np.arange(20) % usable.size])

    def test_invalid_capacities(self):
        with pytest.raises(ValueError):
            tile_residency(0, 4)
        with pytest.raises(ValueError):
            tile_residency(4, 0)


class TestReadBack:
    def test_fault_free_bit_exact(self):
        words = np.arange(16, dtype=np.uint64)
        pat = place_in_dram(16, TOY_DRAM, FaultMap.empty(TOY_DRAM), CONFIG, "FAM1")
        stored = rol(words, pat.rotations, 8)  # not used; encode path below
        from spikemem.memory_sim import encode_store

        stored = encode_store(words, pat)
        got = read_back(pat, FaultMap.empty(TOY_DRAM), stored)
        assert np.array_equal(got, words)

    def test_stuck_at_1_on_lsb_cell(self):
        # rotation 0: the LSB sits at physical position 7 of address 0
        fmap = toy_map(TOY_DRAM, {0: {7}}, FaultKind.STUCK_AT_1)
        pat = place_in_dram(1, TOY_DRAM, FaultMap.empty(TOY_DRAM), CONFIG, "baseline")
        from spikemem.memory_sim import encode_store

        stored = encode_store(np.array([0x00], dtype=np.uint64), pat)
        got = read_back(pat, fmap, stored)
        assert got.tolist() == [0x01]

    def test_flip_applied_twice_restores(self):
        g = SramGeometry(2, 8, 8)
        fmap = generate_fault_map(g, FaultSpec(0.3, FaultKind.FLIP, rng_seed=3))
        pat = place_in_sram(16, g, FaultMap.empty(g), CONFIG, "baseline")
        words = np.arange(16, dtype=np.uint64) * 7 % 256
        from spikemem.memory_sim import encode_store

        stored = encode_store(words, pat)
        once = read_back(pat, fmap, stored)
        again = read_back(pat, fmap, once)  # rot 0: decode(x) == x
        assert np.array_equal(again, words)

    def test_per_read_probabilistic_mode(self):
        g = SramGeometry(2, 8, 8)
        fmap = generate_fault_map(g, FaultSpec(1.0, FaultKind.FLIP, rng_seed=3))
        pat = place_in_sram(16, g, FaultMap.empty(g), CONFIG, "baseline")
        words = np.zeros(16, dtype=np.uint64)
        from spikemem.memory_sim import encode_store

        stored = encode_store(words, pat)
        rng1 = np.random.Generator(np.random.PCG64(9))
        rng2 = np.random.Generator(np.random.PCG64(9))
        a = read_back(pat, fmap, stored, flip_probability=0.5, rng=rng1)
        b = read_back(pat, fmap, stored, flip_probability=0.5, rng=rng2)
        assert np.array_equal(a, b)
        full = read_back(pat, fmap, stored)
        assert (a != full).any()  # some cells did not fire
        with pytest.raises(ValueError):
            read_back(pat, fmap, stored, flip_probability=0.5)


class TestHierarchy:
    def words(self, n=32):
        return (np.arange(n, dtype=np.uint64) * 37 + 5) % 256

    def test_fault_free_transparency_all_strategies(self):
        words = self.words()
        for strategy in ("baseline", "FAM1", "FAM2"):
            mapping = build_hierarchy_mapping(
                strategy, 32, FaultMap.empty(TOY_DRAM), FaultMap.empty(TOY_SRAM),
                CONFIG,
            )
            eff, ledger = simulate_hierarchy(
                words, mapping, FaultMap.empty(TOY_DRAM), FaultMap.empty(TOY_SRAM)
            )
            assert np.array_equal(eff, words), strategy
            assert ledger.dram_row_buffer_hits == ledger.dram_reads - ledger.dram_row_activations

    def test_dram_only_faults_collapse_to_read_back(self):
        words = self.words()
        dmap = generate_fault_map(TOY_DRAM, FaultSpec(0.05, rng_seed=8))
        mapping = build_hierarchy_mapping(
            "FAM1", 32, dmap, FaultMap.empty(TOY_SRAM), CONFIG
        )
        eff, _ = simulate_hierarchy(words, mapping, dmap, FaultMap.empty(TOY_SRAM))
        from spikemem.memory_sim import encode_store

        direct = read_back(mapping.dram_pattern, dmap, encode_store(words, mapping.dram_pattern))
        assert np.array_equal(eff, direct)

    def test_ledger_one_row_eight_words(self):
        g = DramGeometry(banks=2, subarrays=2, rows=2, columns=8, word_width=8)
        pat = place_in_dram(8, g, FaultMap.empty(g), CONFIG, "baseline")
        ledger = count_dram_ledger(g, pat.addresses)
        assert ledger.dram_row_activations == 1
        assert ledger.dram_row_buffer_hits == 7
        assert ledger.dram_reads == 8

    def test_ledger_row_changes(self):
        g = DramGeometry(banks=2, subarrays=1, rows=2, columns=4, word_width=8)
        pat = place_in_dram(12, g, FaultMap.empty(g), CONFIG, "baseline")
        ledger = count_dram_ledger(g, pat.addresses)
        # 12 words cross (ro0,su0,ba0) cols, (ro0,su0,ba1) cols, (ro1,su0,ba0)
        assert ledger.dram_row_activations == 3
        assert ledger.dram_row_buffer_hits == 9

    def test_ledger_validation(self):
        bad = AccessLedger(dram_row_activations=5, dram_reads=4)
        with pytest.raises(ValueError):
            bad.validate()

    def test_fam1_dominance_per_memory(self):
        dmap = generate_fault_map(TOY_DRAM, FaultSpec(0.08, rng_seed=4))
        smap = generate_fault_map(TOY_SRAM, FaultSpec(0.08, rng_seed=5))
        mapping = build_hierarchy_mapping("FAM1", 16, dmap, smap, CONFIG)
        for pat, fmap in (
            (mapping.dram_pattern, dmap),
            (mapping.sram_pattern, smap),
        ):
            masks = fmap.word_int_masks(pat.addresses)
            e_chosen = rol(masks, pat.rotations, 8)
            e_zero = masks
            assert np.all(e_chosen.astype(np.uint64) <= e_zero.astype(np.uint64))

    def test_stuck_at_exposure_dominance_exhaustive(self):
        # every <=2-fault mask: FAM1 rotation never exposes more significance
        # than rotation 0 (memory-level restatement of codec optimality)
        for positions in itertools.chain(
            ({p} for p in range(8)),
            (set(c) for c in itertools.combinations(range(8), 2)),
        ):
            mask = WordFaultMask(8, positions)
            from spikemem.fam_codec import select_rotation

            r = select_rotation(mask).amount
            assert exposure(mask, r) <= exposure(mask, 0)


class TestFam2:
    def test_union_rotation_from_merged_masks(self):
        # DRAM slot 0 faulty at {3}, buffer slot for word 0 faulty at {6}
        dmap = toy_map(TOY_DRAM, {0: {3}})
        smap = toy_map(TOY_SRAM, {0: {6}})
        dram_pat, sram_pat = place_fam2(4, dmap, smap, CONFIG)
        union = WordFaultMask(8, {3, 6})
        best = min(range(8), key=lambda r: (exposure(union, r), r))
        assert dram_pat.rotations[0] == best
        assert sram_pat.rotations[0] == best
        assert dram_pat.rotations[0] == sram_pat.rotations[0]

    def test_union_over_budget_skips_slot(self):
        # each memory alone passes (2 faults), union has 4 distinct faults
        dmap = toy_map(TOY_DRAM, {0: {0, 1}})
        smap = toy_map(TOY_SRAM, {0: {4, 5}})
        dram_pat, _ = place_fam2(4, dmap, smap, CONFIG)
        assert dram_pat.addresses[0] != 0  # word 0 skipped DRAM slot 0
        assert dram_pat.addresses[0] == 1

    def test_matches_fam1_when_buffer_clean(self):
        dmap = generate_fault_map(TOY_DRAM, FaultSpec(0.1, rng_seed=2))
        fam2_d, fam2_s = place_fam2(8, dmap, FaultMap.empty(TOY_SRAM), CONFIG)
        fam1_d = place_in_dram(8, TOY_DRAM, dmap, CONFIG, "FAM1")
        assert np.array_equal(fam2_d.addresses, fam1_d.addresses)
        assert np.array_equal(fam2_d.rotations, fam1_d.rotations)
        assert np.array_equal(fam2_s.rotations, fam1_d.rotations)

    def test_matches_fam1_sram_when_dram_clean(self):
        smap = generate_fault_map(TOY_SRAM, FaultSpec(0.1, rng_seed=6))
        fam2_d, fam2_s = place_fam2(8, FaultMap.empty(TOY_DRAM), smap, CONFIG)
        fam1_s = place_in_sram_stream(8, TOY_SRAM, smap, CONFIG, "FAM1")
        assert np.array_equal(fam2_s.addresses, fam1_s.addresses)
        assert np.array_equal(fam2_s.rotations, fam1_s.rotations)

    def test_baseline_equivalence_explicit_composition(self):
        # baseline = rotation 0 everywhere, no skipping: effective word is
        # exactly apply(sram, apply(dram, word))
        words = (np.arange(32, dtype=np.uint64) * 11 + 3) % 256
        dmap = generate_fault_map(TOY_DRAM, FaultSpec(0.08, rng_seed=1))
        smap = generate_fault_map(TOY_SRAM, FaultSpec(0.08, rng_seed=2))
        mapping = build_hierarchy_mapping("baseline", 32, dmap, smap, CONFIG)
        eff, _ = simulate_hierarchy(words, mapping, dmap, smap)
        from spikemem.fam_codec import apply_fault_mask

        d_masks = dmap.word_int_masks(mapping.dram_pattern.addresses)
        s_masks = smap.word_int_masks(mapping.sram_pattern.addresses)
        manual = apply_fault_mask(
            apply_fault_mask(words, d_masks, dmap.kind), s_masks, smap.kind
        )
        assert np.array_equal(eff, manual)


class TestDeriveWrappers:
    # the spec-level entry points compose placement + rotation selection
    def test_fam1_fault_free_identity(self):
        from spikemem.fam_codec import derive_fam1_patterns

        dram_pat, sram_pat = derive_fam1_patterns(
            FaultMap.empty(TOY_DRAM), FaultMap.empty(TOY_SRAM), 8, CONFIG
        )
        assert np.all(dram_pat.rotations == 0)
        assert np.all(sram_pat.rotations == 0)
        words = (np.arange(8, dtype=np.uint64) * 31) % 256
        from spikemem.memory_sim import HierarchyMapping

        mapping = HierarchyMapping("FAM1", dram_pat, sram_pat)
        eff, _ = simulate_hierarchy(
            words, mapping, FaultMap.empty(TOY_DRAM), FaultMap.empty(TOY_SRAM)
        )
        assert np.array_equal(eff, words)

    def test_fam1_rotations_are_per_memory(self):
        # DRAM word 0 faulty at {3} (rotation 4), its buffer slot clean
        dmap = toy_map(TOY_DRAM, {0: {3}})
        smap = toy_map(TOY_SRAM, {TOY_SRAM.linear_address(1, 0): {6}})
        from spikemem.fam_codec import derive_fam1_patterns

        dram_pat, sram_pat = derive_fam1_patterns(dmap, smap, 4, CONFIG)
        assert dram_pat.rotations[0] == 4
        assert sram_pat.rotations[0] == 0  # slot (ba0, ro0) is clean
        # word 1 sits in buffer slot (ba1, ro0) with fault at position 6
        expected = WordFaultMask(8, {6})
        best = min(range(8), key=lambda r: (exposure(expected, r), r))
        assert sram_pat.rotations[1] == best
        assert dram_pat.rotations[1] == 0
        # same word faulty in both memories: two distinct rotations
        dmap2 = toy_map(TOY_DRAM, {0: {3}})
        smap2 = toy_map(TOY_SRAM, {0: {6}})
        d2, s2 = derive_fam1_patterns(dmap2, smap2, 4, CONFIG)
        assert d2.rotations[0] == 4
        assert s2.rotations[0] == best
        assert d2.rotations[0] != s2.rotations[0]

    def test_fam2_single_pattern_from_union(self):
        from spikemem.fam_codec import derive_fam2_pattern

        dmap = toy_map(TOY_DRAM, {0: {3}})
        smap = toy_map(TOY_SRAM, {0: {6}})
        pat = derive_fam2_pattern(dmap, smap, 4, CONFIG)
        union = WordFaultMask(8, {3, 6})
        best = min(range(8), key=lambda r: (exposure(union, r), r))
        assert pat.strategy == "FAM2"
        assert pat.rotations[0] == best
