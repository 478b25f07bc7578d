"""Patch application, mask algebra, placement-error simulation, corpus IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosspatch.compose import (
    CoverModel,
    ScenePair,
    apply_patch,
    erode_fraction,
    load_corpus,
    save_corpus,
    translate_mask,
    union_masks,
)
from crosspatch.geometry import BinaryMask


def make_pair(h=20, w=16, seed=0):
    rng = np.random.default_rng(seed)
    return ScenePair(
        id="t0",
        visible=rng.integers(0, 200, size=(h, w, 3)).astype(np.uint8),
        infrared=rng.integers(0, 200, size=(h, w)).astype(np.uint8),
        gt_box=(2.0, 2.0, 14.0, 18.0),
    )


def square_mask(h, w, r0, c0, size):
    bits = np.zeros((h, w), dtype=np.uint8)
    bits[r0 : r0 + size, c0 : c0 + size] = 1
    return BinaryMask(bits)


COVER = CoverModel((255, 255, 255), 32)


class TestCoverModel:
    def test_rejects_out_of_range_values(self):
        with pytest.raises(ValueError):
            CoverModel((255, 255, 300), 32)
        with pytest.raises(ValueError):
            CoverModel((255, 255, 255), -1)


class TestApplyPatch:
    def test_zero_mask_is_identity(self):
        pair = make_pair()
        out = apply_patch(pair, BinaryMask(np.zeros((20, 16), np.uint8)), COVER)
        assert np.array_equal(out.visible, pair.visible)
        assert np.array_equal(out.infrared, pair.infrared)

    def test_full_mask_is_uniform_cover(self):
        pair = make_pair()
        out = apply_patch(pair, BinaryMask(np.ones((20, 16), np.uint8)), COVER)
        assert np.all(out.visible == np.array([255, 255, 255]))
        assert np.all(out.infrared == 32)

    def test_square_mask_pixel_exact(self):
        pair = make_pair()
        mask = square_mask(20, 16, 4, 5, 6)
        out = apply_patch(pair, mask, COVER)
        # reference loop
        for r in range(20):
            for c in range(16):
                if 4 <= r < 10 and 5 <= c < 11:
                    assert tuple(out.visible[r, c]) == (255, 255, 255)
                    assert out.infrared[r, c] == 32
                else:
                    assert np.array_equal(out.visible[r, c], pair.visible[r, c])
                    assert out.infrared[r, c] == pair.infrared[r, c]

    def test_idempotent(self):
        pair = make_pair()
        mask = square_mask(20, 16, 3, 3, 8)
        once = apply_patch(pair, mask, COVER)
        twice = apply_patch(once, mask, COVER)
        assert np.array_equal(once.visible, twice.visible)
        assert np.array_equal(once.infrared, twice.infrared)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            apply_patch(make_pair(), square_mask(10, 10, 0, 0, 2), COVER)


class TestUnionMasks:
    def test_union_with_empty_is_identity(self):
        m = square_mask(12, 12, 2, 2, 4)
        empty = BinaryMask(np.zeros((12, 12), np.uint8))
        assert union_masks([m, empty]) == m

    def test_disjoint_areas_add(self):
        a = square_mask(12, 12, 0, 0, 3)
        b = square_mask(12, 12, 6, 6, 3)
        assert union_masks([a, b]).area() == a.area() + b.area()

    def test_overlap_inclusion_exclusion(self):
        a = square_mask(12, 12, 2, 2, 5)
        b = square_mask(12, 12, 4, 4, 5)
        overlap = np.logical_and(a.bits, b.bits).sum()
        assert union_masks([a, b]).area() == a.area() + b.area() - overlap

    @given(st.integers(0, 6), st.integers(0, 6), st.integers(1, 5), st.integers(1, 5))
    @settings(max_examples=30, deadline=None)
    def test_commutative_idempotent(self, r0, c0, s1, s2):
        a = square_mask(12, 12, r0, c0, s1)
        b = square_mask(12, 12, c0, r0, s2)
        assert union_masks([a, b]) == union_masks([b, a])
        assert union_masks([a, a]) == a

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            union_masks([square_mask(8, 8, 0, 0, 2), square_mask(9, 8, 0, 0, 2)])


class TestTranslateMask:
    def test_zero_shift_identity(self):
        m = square_mask(12, 12, 3, 3, 4)
        assert translate_mask(m, 0, 0) == m

    def test_shift_out_of_frame_empties(self):
        m = square_mask(12, 12, 3, 3, 4)
        assert translate_mask(m, 40, 0).area() == 0

    def test_interior_shift_preserves_area(self):
        m = square_mask(12, 12, 3, 3, 4)
        out = translate_mask(m, 3, 2)
        assert out.area() == m.area()
        assert np.array_equal(out.bits[5:9, 6:10], np.ones((4, 4), np.uint8))

    def test_round_trip_on_shared_support(self):
        m = square_mask(12, 12, 1, 1, 6)
        back = translate_mask(translate_mask(m, 4, 3), -4, -3)
        kept = np.logical_and(m.bits, back.bits)
        assert np.array_equal(back.bits, kept)  # only in-frame content survives


class TestErodeFraction:
    def test_zero_fraction_identity(self):
        m = square_mask(16, 16, 4, 4, 8)
        rng = np.random.default_rng(0)
        assert erode_fraction(m, 0.0, rng) == m

    def test_exact_cell_count(self):
        m = square_mask(20, 20, 2, 2, 15)  # 225 cells
        rng = np.random.default_rng(1)
        out = erode_fraction(m, 0.10, rng)
        assert out.area() == 225 - int(np.ceil(0.10 * 225))

    def test_peels_boundary_before_interior(self):
        bits = square_mask(20, 20, 4, 4, 10).bits
        rng = np.random.default_rng(2)
        removed_total = int(np.ceil(0.2 * bits.sum()))
        out = erode_fraction(BinaryMask(bits), 0.2, rng)
        removed = np.argwhere(bits.astype(bool) & ~out.bits.astype(bool))
        assert len(removed) == removed_total
        # interior of the eroded-by-removal square (cells with all 4 neighbors
        # still present in the ORIGINAL mask and not at the original boundary)
        # may only be removed after the full original boundary is gone.
        from scipy import ndimage

        cross = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool)
        first_boundary = bits.astype(bool) & ~ndimage.binary_erosion(bits.astype(bool), cross, border_value=0)
        n_boundary = first_boundary.sum()
        if removed_total <= n_boundary:
            assert all(first_boundary[r, c] for r, c in removed)

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError):
            erode_fraction(square_mask(8, 8, 1, 1, 3), 1.0, np.random.default_rng(0))

    def test_deterministic_given_rng_seed(self):
        m = square_mask(16, 16, 3, 3, 9)
        a = erode_fraction(m, 0.15, np.random.default_rng(77))
        b = erode_fraction(m, 0.15, np.random.default_rng(77))
        assert a == b


class TestCorpusIO:
    def test_round_trip(self, tmp_path):
        scenes = [make_pair(seed=3), make_pair(seed=4)]
        scenes[1] = ScenePair(id="t1", visible=scenes[1].visible, infrared=scenes[1].infrared, gt_box=scenes[1].gt_box)
        save_corpus(tmp_path, scenes)
        back = load_corpus(tmp_path)
        assert [s.id for s in back] == ["t0", "t1"]
        for orig, loaded in zip(scenes, back):
            assert np.array_equal(orig.visible, loaded.visible)
            assert np.array_equal(orig.infrared, loaded.infrared)
            assert orig.gt_box == loaded.gt_box

    def test_missing_annotations_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path)

    def test_gt_box_validation(self):
        with pytest.raises(ValueError):
            ScenePair(
                id="bad",
                visible=np.zeros((8, 8, 3), np.uint8),
                infrared=np.zeros((8, 8), np.uint8),
                gt_box=(0.0, 0.0, 20.0, 20.0),
            )
