import numpy as np
import pytest
import torch

from fundusgen.config import ModelConfig, desk_config
from fundusgen.encoder import (
    FundusEncoder,
    check_pyramid,
    finite_difference_probe,
    slot_partition,
)
from fundusgen.errors import ConfigError, ResolutionError
from fundusgen.imaging import synthesize_toy_fundus


@pytest.fixture(scope="module")
def model_cfg():
    return desk_config().model


@pytest.fixture(scope="module")
def encoder(model_cfg):
    torch.manual_seed(0)
    enc = FundusEncoder(model_cfg)
    enc.eval()
    return enc


@pytest.fixture(scope="module")
def work_input(model_cfg):
    img, _ = synthesize_toy_fundus(0, 64)
    x = torch.nn.functional.interpolate(
        img.unsqueeze(0), size=(model_cfg.working_resolution,) * 2,
        mode="bilinear", align_corners=False)
    return x


class TestBackbone:
    def test_stride_arithmetic_at_working_resolution(self, encoder, work_input):
        stages = encoder.backbone_forward(work_input)
        work = work_input.shape[-1]
        assert [s.shape[-1] for s in stages] == [work // 4, work // 8, work // 16, work // 32]
        widths = encoder.cfg.backbone_widths
        assert [s.shape[1] for s in stages] == list(widths)

    def test_stride_arithmetic_64px(self, encoder):
        img, _ = synthesize_toy_fundus(1, 64)
        stages = encoder.backbone_forward(img.unsqueeze(0))
        assert [s.shape[-1] for s in stages] == [16, 8, 4, 2]

    def test_too_small_input(self, encoder):
        with pytest.raises(ResolutionError):
            encoder.backbone_forward(torch.zeros(1, 3, 16, 16))

    def test_eval_determinism(self, encoder, work_input):
        a = encoder.backbone_forward(work_input)
        b = encoder.backbone_forward(work_input)
        assert all(torch.equal(x, y) for x, y in zip(a, b))


class TestPyramid:
    def test_shape_contract(self, encoder, work_input):
        p = encoder.fpn_forward(encoder.backbone_forward(work_input))
        check_pyramid(p, encoder.cfg)  # raises on violation

    def test_finite(self, encoder, work_input):
        p = encoder.fpn_forward(encoder.backbone_forward(work_input))
        for level in p.levels():
            assert torch.isfinite(level).all()

    def test_zeroed_laterals_leave_smoothing_bias(self, model_cfg, work_input):
        torch.manual_seed(1)
        enc = FundusEncoder(model_cfg).eval()
        with torch.no_grad():
            for conv in (enc.fpn.lateral_low, enc.fpn.lateral_mid, enc.fpn.lateral_high):
                conv.weight.zero_()
                conv.bias.zero_()
        p = enc.fpn_forward(enc.backbone_forward(work_input))
        for smooth, level in zip((enc.fpn.smooth_low, enc.fpn.smooth_mid, enc.fpn.smooth_high),
                                 p.levels()):
            expected = smooth.bias.view(1, -1, 1, 1).expand_as(level)
            assert torch.allclose(level, expected, atol=1e-6)


class TestStyleMapper:
    def test_output_shape(self, encoder, work_input):
        p = encoder.fpn_forward(encoder.backbone_forward(work_input))
        w = encoder.map_to_styles(p)
        assert w.shape == (1, encoder.cfg.n_slots, encoder.cfg.latent_dim)

    @pytest.mark.parametrize("level", ["low", "mid", "high"])
    def test_partition_locality(self, encoder, work_input, level):
        p = encoder.fpn_forward(encoder.backbone_forward(work_input))
        w0 = encoder.map_to_styles(p)
        setattr(p, level, getattr(p, level) + 0.3)
        w1 = encoder.map_to_styles(p)
        owned = slot_partition(encoder.cfg)[level]
        changed = {i for i in range(w0.shape[1])
                   if not torch.allclose(w0[0, i], w1[0, i])}
        assert changed == set(owned)


class TestBaseFeature:
    def test_shape(self, encoder, work_input):
        p = encoder.fpn_forward(encoder.backbone_forward(work_input))
        f = encoder.base_feature(p)
        r0 = encoder.cfg.base_resolution
        assert f.shape == (1, encoder.cfg.channels_at(r0), r0, r0)

    def test_small_pyramid_guard(self, encoder):
        # a raw 64px image gives a 4px mid level -> 2px base feature: rejected
        img, _ = synthesize_toy_fundus(2, 64)
        p = encoder.fpn_forward(encoder.backbone_forward(img.unsqueeze(0)))
        with pytest.raises(ResolutionError):
            encoder.base_feature(p)

    def test_zero_mid_level_leaves_bias(self, encoder, work_input):
        p = encoder.fpn_forward(encoder.backbone_forward(work_input))
        p.mid = torch.zeros_like(p.mid)
        p.high = torch.zeros_like(p.high)
        f = encoder.base_feature(p)
        expected = encoder.base_head.conv.bias.view(1, -1, 1, 1).expand_as(f)
        assert torch.allclose(f, expected, atol=1e-6)


class TestEncode:
    def test_no_skips(self, encoder):
        img, _ = synthesize_toy_fundus(3, 64)
        code = encoder.encode(img, 0)
        assert code.skips == []

    def test_three_skips_coarse_to_fine(self, encoder):
        img, _ = synthesize_toy_fundus(3, 64)
        code = encoder.encode(img, 3)
        r0 = encoder.cfg.base_resolution
        assert [res for res, _ in code.skips] == [r0, 2 * r0, 4 * r0]
        for res, feat in code.skips:
            assert feat.shape[-1] == res
            assert feat.shape[1] == encoder.cfg.channels_at(res)

    def test_deterministic(self, encoder):
        img, _ = synthesize_toy_fundus(4, 64)
        a = encoder.encode(img, 2)
        b = encoder.encode(img, 2)
        assert torch.equal(a.w_plus, b.w_plus)
        assert torch.equal(a.f, b.f)
        assert all(torch.equal(x[1], y[1]) for x, y in zip(a.skips, b.skips))

    def test_skip_count_out_of_range(self, encoder):
        img, _ = synthesize_toy_fundus(5, 64)
        with pytest.raises(ConfigError):
            encoder.encode(img, 4)


class TestDifferentiability:
    def test_directional_gradient_matches(self):
        torch.manual_seed(7)
        cfg = ModelConfig(image_size=64, base_resolution=4, latent_dim=32,
                          pyramid_channels=16, backbone_widths=(8, 8, 16, 16),
                          head_width=16, channel_base=256, channel_max=64,
                          dilation_schedule=(2, 2, 1, 1, 1, 1, 1))
        enc = FundusEncoder(cfg, smooth=True).eval()
        img, _ = synthesize_toy_fundus(0, 64)
        rng = np.random.default_rng(0)
        direction = torch.from_numpy(rng.normal(size=img.shape).astype(np.float32))
        fd, analytic = finite_difference_probe(enc, img, direction)
        assert abs(fd - analytic) / max(abs(analytic), 1e-12) < 1e-3
