import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from freqforge import freq
from freqforge.freq import (
    BLOCK,
    N_BANDS,
    ZIGZAG_ORDER,
    ZIGZAG_RANK,
    ChannelSet,
    band_to_uv,
    block_dct,
    block_idct,
    crop_to,
    pad_to_blocks,
    reconstruct_from_channels,
    uv_to_band,
)

from conftest import rel_err


def dct2_reference(block: np.ndarray) -> np.ndarray:
    """Direct O(64^2) orthonormal DCT-II sum, the independent oracle."""
    out = np.zeros((BLOCK, BLOCK))
    for u in range(BLOCK):
        for v in range(BLOCK):
            au = math.sqrt(1.0 / BLOCK) if u == 0 else math.sqrt(2.0 / BLOCK)
            av = math.sqrt(1.0 / BLOCK) if v == 0 else math.sqrt(2.0 / BLOCK)
            acc = 0.0
            for i in range(BLOCK):
                for j in range(BLOCK):
                    acc += (
                        block[i, j]
                        * math.cos(math.pi * (2 * i + 1) * u / (2 * BLOCK))
                        * math.cos(math.pi * (2 * j + 1) * v / (2 * BLOCK))
                    )
            out[u, v] = au * av * acc
    return out


def random_image(rng, c=1, h=16, w=16):
    return torch.from_numpy(rng.random((c, h, w)))


class TestBlockDct:
    def test_constant_image_dc_only(self):
        img = torch.full((1, 8, 8), 0.5, dtype=torch.float64)
        coeffs = block_dct(img)
        assert coeffs.shape == (1, N_BANDS, 1, 1)
        assert coeffs[0, 0, 0, 0].item() == pytest.approx(4.0, abs=1e-12)
        assert coeffs[0, 1:].abs().max().item() < 1e-12

    def test_round_trip(self, rng):
        x = random_image(rng, c=3, h=32, w=24)
        assert (block_idct(block_dct(x)) - x).abs().max().item() < 1e-5

    def test_single_basis_tile(self, rng):
        # image equal to the (0, 1) orthonormal cosine basis tile
        mat = freq.dct_matrix().numpy()
        tile = np.outer(mat[0], mat[1])
        coeffs = block_dct(torch.from_numpy(tile[None]))
        expected = dct2_reference(tile)
        assert rel_err(coeffs[0, :, 0, 0].numpy(), expected.ravel()) < 1e-12
        hot = coeffs[0, :, 0, 0].abs() > 1e-10
        assert hot.sum().item() == 1
        assert int(hot.nonzero()) == uv_to_band(0, 1) == 1

    def test_matches_reference_dct_per_block(self, rng):
        x = rng.random((1, 16, 16))
        coeffs = block_dct(torch.from_numpy(x))
        for bi in range(2):
            for bj in range(2):
                blk = x[0, 8 * bi : 8 * bi + 8, 8 * bj : 8 * bj + 8]
                ref = dct2_reference(blk)
                got = coeffs[0, :, bi, bj].numpy().reshape(8, 8)
                assert np.abs(got - ref).max() < 1e-12

    def test_rejects_non_divisible(self):
        with pytest.raises(ValueError, match="divisible"):
            block_dct(torch.zeros(1, 12, 16, dtype=torch.float64))

    def test_batched_matches_per_image(self, rng):
        batch = torch.from_numpy(rng.random((4, 3, 16, 16)))
        together = block_dct(batch)
        for i in range(4):
            assert torch.equal(together[i], block_dct(batch[i]))


class TestBlockIdct:
    def test_zero_coefficients(self):
        assert block_idct(torch.zeros(1, 64, 2, 2, dtype=torch.float64)).abs().max() == 0

    def test_round_trip_on_textured_image(self, rng):
        x = torch.from_numpy(
            np.clip(rng.normal(0.5, 0.2, size=(3, 40, 40)), 0, 1)
        )
        assert (block_idct(block_dct(x)) - x).abs().max().item() < 1e-5

    def test_linearity(self, rng):
        f1 = torch.from_numpy(rng.normal(size=(1, 64, 3, 3)))
        f2 = torch.from_numpy(rng.normal(size=(1, 64, 3, 3)))
        a, b = 2.5, -1.25
        lhs = block_idct(a * f1 + b * f2)
        rhs = a * block_idct(f1) + b * block_idct(f2)
        assert rel_err(lhs.numpy(), rhs.numpy()) < 1e-6

    def test_rejects_bad_band_axis(self):
        with pytest.raises(ValueError, match="bands"):
            block_idct(torch.zeros(1, 32, 2, 2, dtype=torch.float64))


class TestReconstructFromChannels:
    def test_all_bands_is_idct(self, rng):
        f = block_dct(random_image(rng))
        full = reconstruct_from_channels(f, ChannelSet.all_bands())
        assert torch.equal(full, block_idct(f)) or rel_err(
            full.numpy(), block_idct(f).numpy()
        ) < 1e-12

    def test_disjoint_sets_sum_to_union(self, rng):
        f = block_dct(random_image(rng, c=3))
        s1 = ChannelSet(range(0, 20))
        s2 = ChannelSet(range(20, 64))
        lhs = reconstruct_from_channels(f, s1) + reconstruct_from_channels(f, s2)
        rhs = reconstruct_from_channels(f, s1.union(s2))
        assert rel_err(lhs.numpy(), rhs.numpy()) < 1e-6

    def test_constant_image_needs_only_dc(self):
        img = torch.full((1, 16, 16), 0.37, dtype=torch.float64)
        recon = reconstruct_from_channels(block_dct(img), ChannelSet([0]))
        assert (recon - img).abs().max().item() < 1e-12

    def test_empty_set_rejected(self, rng):
        f = block_dct(random_image(rng))
        with pytest.raises(ValueError, match="empty channel set"):
            reconstruct_from_channels(f, ChannelSet([]))

    def test_weights_scale_kept_bands(self, rng):
        f = block_dct(random_image(rng))
        weights = torch.full((64,), 2.0, dtype=torch.float64)
        plain = reconstruct_from_channels(f, ChannelSet([0, 5, 9]))
        scaled = reconstruct_from_channels(f, ChannelSet([0, 5, 9]), weights)
        assert rel_err(scaled.numpy(), (2 * plain).numpy()) < 1e-12

    def test_masking_idempotent(self, rng):
        f = block_dct(random_image(rng, c=1, h=24, w=24))
        kept = ChannelSet([0, 1, 8, 13, 44])
        once = block_dct(reconstruct_from_channels(f, kept))
        again = block_dct(reconstruct_from_channels(once, kept))
        assert rel_err(again.numpy(), once.numpy()) < 1e-6


class TestInvariants:
    def test_round_trip_and_parseval_bulk(self, rng):
        x = torch.from_numpy(rng.random((1000, 8, 8)))
        f = block_dct(x)
        assert (block_idct(f) - x).abs().max().item() < 1e-5
        pix = x.square().sum(dim=(1, 2))
        spec = f.square().sum(dim=(1, 2, 3))
        assert ((spec - pix).abs() / pix).max().item() < 1e-6

    def test_band_indexing_bijection(self):
        seen = set()
        for u in range(8):
            for v in range(8):
                b = uv_to_band(u, v)
                assert band_to_uv(b) == (u, v)
                seen.add(b)
        assert seen == set(range(64))

    def test_zigzag_is_permutation(self):
        assert sorted(ZIGZAG_ORDER) == list(range(64))
        assert ZIGZAG_ORDER[:10] == (0, 1, 8, 16, 9, 2, 3, 10, 17, 24)
        for rank, band in enumerate(ZIGZAG_ORDER):
            assert ZIGZAG_RANK[band] == rank

    @given(st.integers(0, 63), st.integers(0, 63))
    def test_zigzag_rank_orders_by_diagonal(self, a, b):
        ua, va = band_to_uv(a)
        ub, vb = band_to_uv(b)
        if ua + va < ub + vb:
            assert ZIGZAG_RANK[a] < ZIGZAG_RANK[b]


class TestPadding:
    def test_pad_then_crop_round_trips(self, rng):
        img = torch.from_numpy(rng.random((3, 13, 21)))
        padded, size = pad_to_blocks(img)
        assert padded.shape[-2] % 8 == 0 and padded.shape[-1] % 8 == 0
        recon = crop_to(block_idct(block_dct(padded)), size)
        assert (recon - img).abs().max().item() < 1e-5

    def test_no_pad_when_divisible(self, rng):
        img = torch.from_numpy(rng.random((1, 16, 16)))
        padded, _ = pad_to_blocks(img)
        assert padded is img


class TestChannelSet:
    def test_sorted_in_zigzag_order(self):
        cs = ChannelSet([63, 0, 9, 8])
        assert cs.indices == (0, 8, 9, 63)
        cs2 = ChannelSet([2, 16])
        assert cs2.indices == (16, 2)  # zigzag rank of 16 is 3, of 2 is 5

    def test_rejects_duplicates_and_range(self):
        with pytest.raises(ValueError):
            ChannelSet([1, 1])
        with pytest.raises(ValueError):
            ChannelSet([64])

    @given(st.sets(st.integers(0, 63), min_size=1, max_size=64))
    @settings(max_examples=50)
    def test_order_canonical(self, bands):
        cs = ChannelSet(bands)
        ranks = [ZIGZAG_RANK[b] for b in cs.indices]
        assert ranks == sorted(ranks)
        assert set(cs.indices) == bands
