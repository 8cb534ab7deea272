import numpy as np
import pytest
import torch

from fundusgen.config import LossWeights
from fundusgen.errors import ConfigError
from fundusgen.losses import (
    MeanLatent,
    PatchDiscriminator,
    PerceptualExtractor,
    adversarial_generator_loss,
    discriminator_loss,
    l2_loss,
    lpips_loss,
    reg_loss,
    total_loss,
    update_mean_latent,
)

from grad_utils import central_diff_grad, relative_error


def _rand_img(rng, size=8):
    return torch.from_numpy(rng.uniform(-1, 1, (3, size, size)).astype(np.float32))


class TestL2:
    def test_identity(self, rng):
        x = _rand_img(rng)
        assert l2_loss(x, x).item() == 0.0

    def test_constant_offset(self):
        x = torch.zeros(3, 8, 8)
        assert l2_loss(x, torch.full_like(x, 0.5)).item() == pytest.approx(0.25)

    def test_scalar_loop_oracle(self, rng):
        x, y = _rand_img(rng), _rand_img(rng)
        acc = 0.0
        for a, b in zip(x.flatten().tolist(), y.flatten().tolist()):
            acc += (a - b) ** 2
        assert l2_loss(x, y).item() == pytest.approx(acc / x.numel(), abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            l2_loss(torch.zeros(3, 8, 8), torch.zeros(3, 4, 4))


def lpips_oracle(x, y, pe):
    """Hand-rolled distance over the extractor's stages (numpy loops)."""
    fx = [f[0].numpy().astype(np.float64) for f in pe(x.unsqueeze(0))]
    fy = [f[0].numpy().astype(np.float64) for f in pe(y.unsqueeze(0))]
    total = 0.0
    for w, fa, fb in zip(pe.stage_weights, fx, fy):
        c, h, wd = fa.shape
        acc = 0.0
        for i in range(h):
            for j in range(wd):
                va, vb = fa[:, i, j], fb[:, i, j]
                va = va / np.sqrt((va**2).sum() + 1e-8)
                vb = vb / np.sqrt((vb**2).sum() + 1e-8)
                acc += ((va - vb) ** 2).sum()
        total += w * acc / (h * wd)
    return total


@pytest.fixture(scope="module")
def pe():
    return PerceptualExtractor(profile="test", seed=0)


class TestLpips:
    def test_identity(self, pe, rng):
        x = _rand_img(rng, 16)
        assert lpips_loss(x, x, pe).item() == 0.0

    def test_symmetry(self, pe, rng):
        x, y = _rand_img(rng, 16), _rand_img(rng, 16)
        assert lpips_loss(x, y, pe).item() == pytest.approx(lpips_loss(y, x, pe).item(), abs=1e-7)

    def test_two_stage_oracle(self, rng):
        pe = PerceptualExtractor(profile="test", seed=3, num_stages=2)
        for _ in range(5):
            x, y = _rand_img(rng), _rand_img(rng)
            assert lpips_loss(x, y, pe).item() == pytest.approx(lpips_oracle(x, y, pe), abs=1e-5)

    def test_nonnegative(self, pe, rng):
        for _ in range(10):
            x, y = _rand_img(rng, 16), _rand_img(rng, 16)
            assert lpips_loss(x, y, pe).item() >= 0


class TestReg:
    @pytest.fixture()
    def ml(self, rng):
        ml = MeanLatent(decay=0.99)
        ml.update(torch.from_numpy(rng.normal(size=(2, 4, 16)).astype(np.float32)))
        return ml

    def test_identity(self, ml):
        assert reg_loss(ml.w_bar.clone(), ml).item() < 1e-6

    def test_all_ones_offset(self, ml):
        assert reg_loss(ml.w_bar + 1.0, ml).item() == pytest.approx(1.0, abs=1e-6)

    def test_flattened_norm_oracle(self, ml, rng):
        w = torch.from_numpy(rng.normal(size=(4, 16)).astype(np.float32))
        expected = float(np.linalg.norm((w - ml.w_bar).numpy().ravel())) / np.sqrt(4 * 16)
        assert reg_loss(w, ml).item() == pytest.approx(expected, abs=1e-6)

    def test_anchor_carries_no_gradient(self, ml):
        w = (ml.w_bar + 0.5).requires_grad_(True)
        reg_loss(w, ml).backward()
        assert w.grad is not None
        assert ml.w_bar.grad is None and not ml.w_bar.requires_grad


class TestMeanLatent:
    def test_first_batch_initializes_to_mean(self, rng):
        ml = MeanLatent(decay=0.9)
        batch = torch.from_numpy(rng.normal(size=(5, 4, 8)).astype(np.float32))
        ml.update(batch)
        assert torch.allclose(ml.w_bar, batch.mean(dim=0))
        assert ml.update_count == 1

    def test_geometric_convergence(self):
        ml = MeanLatent(decay=0.8)
        ml.w_bar = torch.zeros(2, 3)
        ml.update_count = 1
        target = torch.ones(1, 2, 3)
        dist0 = (ml.w_bar - 1.0).norm().item()
        for k in range(1, 6):
            ml.update(target)
            assert (ml.w_bar - 1.0).norm().item() == pytest.approx(0.8**k * dist0, rel=1e-5)

    def test_decay_zero_tracks_last_batch(self, rng):
        ml = MeanLatent(decay=0.0)
        for _ in range(3):
            batch = torch.from_numpy(rng.normal(size=(3, 2, 4)).astype(np.float32))
            update_mean_latent(ml, batch)
        assert torch.allclose(ml.w_bar, batch.mean(dim=0))


class TestTotalLoss:
    def test_pixel_only_identity(self, pe, rng):
        x = _rand_img(rng, 16)
        ml = MeanLatent().update(torch.zeros(1, 4, 8))
        rep = total_loss(x, x.clone(), torch.zeros(4, 8), ml,
                         LossWeights(reg=0, lpips=0, l2=1), pe)
        assert float(rep.total) == 0.0

    def test_reg_only_identity(self, pe, rng):
        x, y = _rand_img(rng, 16), _rand_img(rng, 16)
        ml = MeanLatent().update(torch.ones(1, 4, 8))
        rep = total_loss(x, y, torch.ones(4, 8), ml,
                         LossWeights(reg=1, lpips=0, l2=0.0001), pe)
        assert rep.reg < 1e-6

    def test_recompose_from_components(self, pe, rng):
        x, y = _rand_img(rng, 16), _rand_img(rng, 16)
        w = torch.from_numpy(rng.normal(size=(4, 8)).astype(np.float32))
        ml = MeanLatent().update(torch.zeros(1, 4, 8))
        weights = LossWeights(reg=0.005, lpips=0.8, l2=1.0)
        rep = total_loss(x, y, w, ml, weights, pe)
        expected = (0.005 * reg_loss(w, ml) + 0.8 * lpips_loss(x, y, pe)
                    + 1.0 * l2_loss(x, y))
        assert float(rep.total) == pytest.approx(float(expected), rel=1e-6)

    def test_report_serializes(self, pe, rng):
        import json
        x, y = _rand_img(rng, 16), _rand_img(rng, 16)
        ml = MeanLatent().update(torch.zeros(1, 4, 8))
        rep = total_loss(x, y, torch.zeros(4, 8), ml, LossWeights(), pe)
        doc = json.loads(rep.to_json())
        assert set(doc) == {"total", "reg", "lpips", "l2", "adv", "weights"}

    def test_adv_requires_discriminator(self, pe, rng):
        x = _rand_img(rng, 16)
        ml = MeanLatent().update(torch.zeros(1, 4, 8))
        with pytest.raises(ConfigError):
            total_loss(x, x, torch.zeros(4, 8), ml,
                       LossWeights(adv=0.1), pe)


class TestGradients:
    """Analytic gradients vs central differences (smooth extractor, 8x8)."""

    def test_l2_gradient(self, rng):
        x = _rand_img(rng)
        y = _rand_img(rng).requires_grad_(True)
        l2_loss(x, y).backward()
        fd = central_diff_grad(lambda t: l2_loss(x, t), y.detach().clone())
        assert relative_error(fd, y.grad) < 1e-3

    def test_reg_gradient(self, rng):
        ml = MeanLatent().update(torch.from_numpy(rng.normal(size=(1, 4, 16)).astype(np.float32)))
        w = torch.from_numpy(rng.normal(size=(4, 16)).astype(np.float32)).requires_grad_(True)
        reg_loss(w, ml).backward()
        fd = central_diff_grad(lambda t: reg_loss(t, ml), w.detach().clone())
        assert relative_error(fd, w.grad) < 1e-3

    def test_lpips_gradient(self, rng):
        import copy
        pe = PerceptualExtractor(profile="test", seed=0, smooth=True)
        pe64 = copy.deepcopy(pe).double()
        x = _rand_img(rng)
        y = _rand_img(rng).requires_grad_(True)
        lpips_loss(x, y, pe).backward()
        fd = central_diff_grad(lambda t: lpips_loss(x.double(), t, pe64),
                               y.detach().clone())
        assert relative_error(fd, y.grad) < 1e-3


class TestAdversarial:
    def test_generator_loss_grads_flow(self, rng):
        d = PatchDiscriminator(width=8)
        x_hat = _rand_img(rng, 16).requires_grad_(True)
        loss = adversarial_generator_loss(d, x_hat)
        loss.backward()
        assert loss.item() > 0
        assert x_hat.grad is not None and x_hat.grad.abs().sum() > 0

    def test_discriminator_step_reduces_loss(self, rng):
        torch.manual_seed(0)
        d = PatchDiscriminator(width=8)
        opt = torch.optim.Adam(d.parameters(), lr=1e-3)
        real = torch.stack([_rand_img(rng, 16) for _ in range(4)])
        fake = torch.stack([_rand_img(rng, 16) for _ in range(4)]) * 0.2
        first = discriminator_loss(d, real, fake)
        loss = first
        for _ in range(30):
            opt.zero_grad()
            loss = discriminator_loss(d, real, fake)
            loss.backward()
            opt.step()
        assert loss.item() < first.item()
