import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from forgetrace.datagen import gen_bonafide
from forgetrace.errors import InvalidInput
from forgetrace.frontend import patchify
from forgetrace.model import (
    Detector,
    GatedFusion,
    GlobalStream,
    LocalStream,
    ModelConfig,
    SequenceNorm,
    default_probe_layers,
    discrepancy_weights,
    forward_full,
    mask_patches,
    sample_visible,
)

from conftest import fd_rel_errors, projected


def zero_(module):
    for p in module.parameters():
        torch.nn.init.zeros_(p)


def test_mask_ratio_zero_keeps_everything():
    p = patchify(np.zeros((128, 1024)))
    assert not mask_patches(p, 0.0, seed=1).mask.any()


def test_mask_count_and_determinism():
    p = patchify(np.zeros((128, 1024)))
    a, b = mask_patches(p, 0.8, seed=5), mask_patches(p, 0.8, seed=5)
    assert (~a.mask).sum() == 102 == 512 - round(409.6)
    assert np.array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, mask_patches(p, 0.8, seed=6).mask)
    assert np.array_equal(a.visible_indices(), sample_visible(512, 0.8, 5))


@pytest.mark.parametrize("ratio", [-0.1, 1.0, 1.5])
def test_mask_ratio_out_of_range(ratio):
    with pytest.raises(InvalidInput):
        sample_visible(512, ratio, 0)


def test_probe_placement():
    assert default_probe_layers(16) == (4, 8, 12, 16)
    assert default_probe_layers(4) == (1, 2, 3, 4)
    assert default_probe_layers(8) == (2, 4, 6, 8)
    assert ModelConfig(decoder_layers=16).probe_layers == (4, 8, 12, 16)


@pytest.mark.parametrize(
    "kwargs",
    [dict(embed_dim=30, heads=4), dict(mask_ratio=1.0), dict(probe_layers=(0,)), dict(probe_layers=(5,)), dict(probe_layers=())],
)
def test_config_validation(kwargs):
    with pytest.raises(InvalidInput):
        ModelConfig(**kwargs)


def test_encode_decode_shapes_default_config():
    torch.manual_seed(0)
    model = Detector(ModelConfig()).eval()
    x = torch.randn(1, 512, 256)
    vis = torch.from_numpy(sample_visible(512, 0.8, 0))[None]
    with torch.no_grad():
        enc = model.encode(x, vis)
        assert enc.shape == (1, 102, 64)
        assert torch.equal(enc, model.encode(x, vis))
        recon, probes = model.decode(enc, vis)
    assert recon.shape == (1, 512, 256)
    assert sorted(probes) == [1, 2, 3, 4]
    assert all(v.shape == (1, 64) for v in probes.values())


def test_zero_visible_rejected(tiny_config):
    model = Detector(tiny_config)
    with pytest.raises(InvalidInput):
        model.encode(torch.randn(1, 8, 256), torch.zeros(1, 0, dtype=torch.long))


def test_overlapping_coordinates_rejected(tiny_config):
    model = Detector(tiny_config)
    with pytest.raises(InvalidInput):
        model.decode(torch.randn(1, 3, 16), torch.tensor([[0, 2, 2]]))


def test_gate_zero_gives_mean():
    fuse = GatedFusion(8).double()
    zero_(fuse)
    g, l = torch.randn(2, 5, 8, dtype=torch.float64), torch.randn(2, 5, 8, dtype=torch.float64)
    assert torch.allclose(fuse(g, l), (g + l) / 2, atol=0)


def test_equal_streams_pass_through():
    fuse = GatedFusion(8).double()
    g = torch.randn(2, 5, 8, dtype=torch.float64)
    assert torch.allclose(fuse(g, g.clone()), g, atol=1e-15)


def test_gate_saturation():
    fuse = GatedFusion(8).double()
    zero_(fuse)
    with torch.no_grad():
        fuse.gate.bias.fill_(20.0)
    g, l = torch.randn(2, 5, 8, dtype=torch.float64), torch.randn(2, 5, 8, dtype=torch.float64)
    assert (fuse(g, l) - g).abs().max() <= 1e-8


def test_fusion_shape_mismatch():
    with pytest.raises(InvalidInput):
        GatedFusion(8)(torch.zeros(1, 4, 8), torch.zeros(1, 5, 8))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_fusion_is_elementwise_between_streams(seed):
    torch.manual_seed(seed)
    fuse = GatedFusion(6).double()
    g, l = torch.randn(3, 4, 6, dtype=torch.float64) * 3, torch.randn(3, 4, 6, dtype=torch.float64) * 3
    out = fuse(g, l)
    alpha = torch.sigmoid(fuse.gate(torch.cat([g, l], -1)))
    assert ((alpha > 0) & (alpha < 1)).all()
    assert (out >= torch.minimum(g, l) - 1e-12).all() and (out <= torch.maximum(g, l) + 1e-12).all()


def test_local_stream_scale_zero():
    x = torch.randn(2, 8, 16)
    assert torch.equal(LocalStream(16, scale=0.0)(x), torch.zeros_like(x))
    assert LocalStream(16)(x).shape == x.shape


def test_global_stream_zero_in_zero_out():
    gs = GlobalStream(16, 2, (2, 4))
    for name, p in gs.named_parameters():
        if name.endswith("bias"):
            torch.nn.init.zeros_(p)
    assert torch.equal(gs(torch.zeros(2, 8, 16)), torch.zeros(2, 8, 16))


def test_global_stream_identity_when_branches_frozen():
    gs = GlobalStream(16, 2, (4, 6)).double()
    zero_(gs.band_attn.proj)
    zero_(gs.spatial_attn.proj)
    zero_(gs.ffn[2])
    x = torch.randn(3, 24, 16, dtype=torch.float64)
    out = gs(x)
    assert out.shape == x.shape
    assert torch.allclose(out, x, atol=1e-12)


def test_global_stream_rejects_wrong_patch_count():
    with pytest.raises(InvalidInput):
        GlobalStream(16, 2, (2, 4))(torch.zeros(1, 10, 16))


def test_ftfa_uniform_weights():
    x = torch.zeros(1, 7, 256, dtype=torch.float64)
    w, e = discrepancy_weights(x, x + 0.3)
    assert torch.allclose(w, torch.full_like(w, 1 / 7), atol=1e-9, rtol=0)


def test_ftfa_two_patch_softmax():
    x = torch.zeros(1, 2, 256, dtype=torch.float64)
    xt = torch.stack([torch.full((256,), 1.0), torch.full((256,), -2.0)]).double()[None]
    w, e = discrepancy_weights(x, xt)
    assert torch.allclose(e, torch.tensor([[1.0, 2.0]], dtype=torch.float64))
    ref = np.exp([1.0, 2.0]) / np.exp([1.0, 2.0]).sum()
    assert np.allclose(w.numpy()[0], ref, atol=1e-12)
    assert np.allclose(ref, [0.2689, 0.7311], atol=1e-4)


def test_ftfa_rejects_misaligned(tiny_config):
    m = Detector(tiny_config)
    with pytest.raises(InvalidInput):
        m.ftfa(torch.zeros(1, 3, 256), torch.zeros(1, 4, 256), torch.zeros(1, 3, 16))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_ftfa_weights_are_distribution(seed):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(3, 9, 256, generator=g) * 5
    w, _ = discrepancy_weights(x, torch.randn(3, 9, 256, generator=g))
    assert (w >= 0).all()
    assert torch.allclose(w.sum(-1), torch.ones(3), atol=1e-6)


def test_forward_full_ten_seconds():
    torch.manual_seed(0)
    model = Detector(ModelConfig()).eval()
    waves = [gen_bonafide(1, 10.0), gen_bonafide(2, 10.0)]
    with torch.no_grad():
        out = forward_full(model, waves, "infer")
        again = forward_full(model, waves, "infer")
        train = forward_full(model, waves, "train", seed=3)
    assert out.logits.shape == (2, 2)
    assert out.reconstructed.shape == (2, 512, 256)
    assert len(out.probe_embeddings) == len(model.config.probe_layers)
    assert out.visible.shape == (2, 512) and not out.masked().any()
    assert out.ftfa_weights.shape == (2, 512)
    assert torch.equal(out.scores, again.scores)
    assert train.visible.shape == (2, 102)
    assert train.ftfa_weights.shape == (2, 102)
    assert torch.allclose(train.ftfa_weights.sum(-1), torch.ones(2), atol=1e-6)


def test_forward_full_rejects_mixed_durations(tiny_config):
    with pytest.raises(InvalidInput):
        forward_full(Detector(tiny_config), [gen_bonafide(1, 0.6), gen_bonafide(2, 0.5)])


@pytest.mark.parametrize("which", ["local", "fusion"])
def test_small_gradient_checks(which):
    torch.manual_seed(1)
    x = torch.randn(2, 8, 16, dtype=torch.float64)
    if which == "local":
        mod = LocalStream(16).double()
        fn = lambda: projected(mod(x))
        param = mod.depthwise.weight
    else:
        mod = GatedFusion(16).double()
        y = torch.randn(2, 8, 16, dtype=torch.float64)
        fn = lambda: projected(mod(x, y))
        param = mod.gate.weight
    assert fd_rel_errors(fn, param).max() <= 1e-5


def test_sequence_norm_statistics():
    x = torch.randn(3, 10, 8, dtype=torch.float64) * 4 + 2
    y = SequenceNorm(8).double()(x)
    assert torch.allclose(y.mean(dim=(1, 2)), torch.zeros(3, dtype=torch.float64), atol=1e-12)
    assert torch.allclose(y.var(dim=(1, 2), unbiased=False), torch.ones(3, dtype=torch.float64), atol=1e-4)


def test_ftfa_reweighting_reaches_output(tiny_config):
    # a token-wise LayerNorm would cancel the (1 + w_i) factor; the sequence norm keeps it
    m = Detector(tiny_config).double()
    enc = torch.randn(1, 6, 16, dtype=torch.float64)
    x = torch.zeros(1, 6, 256, dtype=torch.float64)
    flat, _, _ = m.ftfa(x, x + 0.5, enc)
    peaked = (x + 0.5).clone()
    peaked[0, 2] += 4.0
    out, w, _ = m.ftfa(x, peaked, enc)
    assert w[0].argmax() == 2
    assert (out - flat).abs().max() > 1e-3
    token_ln = torch.nn.functional.layer_norm
    cancelled = token_ln(enc + w.unsqueeze(-1) * enc, (16,)) - token_ln(enc, (16,))
    assert cancelled.abs().max() < 1e-4
