import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from freqforge.cfce import cosine_map, enhance

from conftest import rel_err


def cosine_reference(f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    """Brute-force double-loop cosine oracle."""
    c = f1.shape[0]
    s = np.zeros((c, c))
    for i in range(c):
        for j in range(c):
            a = f1[i].ravel()
            b = f2[j].ravel()
            s[i, j] = a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-8)
    return s


def enhance_reference(f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    """Independent restatement of the merge formula."""

    def softmax_rows(m):
        e = np.exp(m - m.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    s = cosine_reference(f1, f2)
    c, h, w = f1.shape
    flat1 = f1.reshape(c, -1)
    flat2 = f2.reshape(c, -1)
    cross12 = (softmax_rows(s) @ flat2).reshape(c, h, w)
    cross21 = (softmax_rows(s.T) @ flat1).reshape(c, h, w)
    return 0.5 * (f1 + cross12) + 0.5 * (f2 + cross21)


class TestCosineMap:
    def test_orthogonal_unit_channels_give_identity(self):
        f = torch.zeros(4, 2, 2, dtype=torch.float64)
        for i in range(4):
            f[i, i // 2, i % 2] = 1.0
        s = cosine_map(f, f)
        assert torch.allclose(s, torch.eye(4, dtype=torch.float64), atol=1e-7)

    def test_negated_channels_give_negative_identity(self):
        f = torch.zeros(4, 2, 2, dtype=torch.float64)
        for i in range(4):
            f[i, i // 2, i % 2] = 1.0
        s = cosine_map(f, -f)
        assert torch.allclose(s, -torch.eye(4, dtype=torch.float64), atol=1e-7)

    def test_matches_loop_oracle(self, rng):
        f1 = rng.normal(size=(6, 5, 5))
        f2 = rng.normal(size=(6, 5, 5))
        s = cosine_map(torch.from_numpy(f1), torch.from_numpy(f2))
        assert np.abs(s.numpy() - cosine_reference(f1, f2)).max() < 1e-6

    def test_entries_bounded(self, rng):
        f1 = torch.from_numpy(rng.normal(size=(8, 4, 4)))
        f2 = torch.from_numpy(rng.normal(size=(8, 4, 4)))
        s = cosine_map(f1, f2)
        assert s.abs().max().item() <= 1.0 + 1e-9

    def test_zero_channel_has_zero_cosine(self, rng):
        f1 = torch.from_numpy(rng.normal(size=(3, 4, 4)))
        f1[0] = 0.0
        f2 = torch.from_numpy(rng.normal(size=(3, 4, 4)))
        s = cosine_map(f1, f2)
        assert s[0].abs().max().item() == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="match"):
            cosine_map(torch.zeros(3, 4, 4), torch.zeros(3, 4, 5))


class TestEnhance:
    def test_identical_uniform_channels_double(self, rng):
        base = torch.from_numpy(rng.normal(size=(1, 6, 6))).repeat(5, 1, 1)
        merged = enhance(base, base)
        assert rel_err(merged.numpy(), (2 * base).numpy()) < 1e-7

    def test_zero_second_branch(self, rng):
        base = torch.from_numpy(rng.normal(size=(1, 4, 4))).repeat(4, 1, 1)
        merged = enhance(base, torch.zeros_like(base))
        assert rel_err(merged.numpy(), base.numpy()) < 1e-7

    def test_matches_reference(self, rng):
        f1 = rng.normal(size=(7, 6, 6))
        f2 = rng.normal(size=(7, 6, 6))
        merged = enhance(torch.from_numpy(f1), torch.from_numpy(f2))
        assert np.abs(merged.numpy() - enhance_reference(f1, f2)).max() < 1e-6

    def test_symmetric(self, rng):
        f1 = torch.from_numpy(rng.normal(size=(5, 4, 4)))
        f2 = torch.from_numpy(rng.normal(size=(5, 4, 4)))
        assert torch.allclose(enhance(f1, f2), enhance(f2, f1), atol=1e-12)

    def test_permutation_equivariant(self, rng):
        f1 = torch.from_numpy(rng.normal(size=(6, 4, 4)))
        f2 = torch.from_numpy(rng.normal(size=(6, 4, 4)))
        perm = torch.randperm(6)
        merged_then_perm = enhance(f1, f2)[perm]
        perm_then_merged = enhance(f1[perm], f2[perm])
        assert torch.allclose(merged_then_perm, perm_then_merged, atol=1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_bounded_by_input_peaks(self, seed):
        r = np.random.default_rng(seed)
        f1 = torch.from_numpy(r.normal(size=(4, 3, 3)))
        f2 = torch.from_numpy(r.normal(size=(4, 3, 3)))
        merged = enhance(f1, f2)
        bound = f1.abs().max() + f2.abs().max()
        assert merged.abs().max().item() <= bound.item() + 1e-9

    def test_batched_matches_single(self, rng):
        f1 = torch.from_numpy(rng.normal(size=(3, 5, 4, 4)))
        f2 = torch.from_numpy(rng.normal(size=(3, 5, 4, 4)))
        batched = enhance(f1, f2)
        for i in range(3):
            assert torch.allclose(batched[i], enhance(f1[i], f2[i]), atol=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        f1 = torch.from_numpy(rng.normal(size=(3, 3, 3))).requires_grad_(True)
        f2 = torch.from_numpy(rng.normal(size=(3, 3, 3)))
        probe = torch.from_numpy(rng.normal(size=(3, 3, 3)))
        (enhance(f1, f2) * probe).sum().backward()
        grad = f1.grad.clone()
        eps = 1e-6
        for idx in [(0, 0, 0), (1, 2, 1), (2, 0, 2)]:
            d = torch.zeros_like(f2)
            d[idx] = eps
            hi = (enhance((f1 + d).detach(), f2) * probe).sum()
            lo = (enhance((f1 - d).detach(), f2) * probe).sum()
            fd = (hi - lo).item() / (2 * eps)
            assert abs(fd - grad[idx].item()) / max(abs(fd), 1e-12) < 1e-4
