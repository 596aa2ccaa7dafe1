"""Masked patch encoder-decoder with dual-stream perception blocks,
discrepancy-driven reweighting of encoder features, and a small classifier head.

Shapes used throughout: B batch, N = F*T patches in row-major (band, time)
order, n visible patches, d embedding width, C = 256 patch values.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidInput
from .frontend import PATCH, PatchSet, Waveform, compute_fbank, patchify
from .wavelet import SubbandSet, dwt2, idwt2

REAL = 1  # class index of bonafide audio in the logits
FAKE = 0


def default_probe_layers(depth: int) -> tuple[int, ...]:
    """Quarter points of the decoder: {D/4, D/2, 3D/4, D} when D divides by 4."""
    return tuple(sorted({max(1, int(round(k * depth / 4))) for k in range(1, 5)}))


@dataclass
class ModelConfig:
    embed_dim: int = 64
    encoder_layers: int = 4
    decoder_layers: int = 4
    heads: int = 4
    patch_dim: int = PATCH * PATCH
    mask_ratio: float = 0.8
    local_scale: float = 1.0
    probe_layers: tuple[int, ...] | None = None
    mel_bins: int = 128
    target_frames: int = 1024
    mlp_ratio: int = 4
    local_kernel: int = 3

    def __post_init__(self):
        if self.probe_layers is None:
            self.probe_layers = default_probe_layers(self.decoder_layers)
        self.probe_layers = tuple(sorted(int(p) for p in self.probe_layers))
        if self.embed_dim % self.heads:
            raise InvalidInput("embed_dim must be divisible by heads")
        if self.embed_dim % 4:
            raise InvalidInput("embed_dim must be divisible by 4")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise InvalidInput(f"mask_ratio must lie in [0, 1), got {self.mask_ratio}")
        if not self.probe_layers or not set(self.probe_layers) <= set(range(1, self.decoder_layers + 1)):
            raise InvalidInput(f"probe_layers {self.probe_layers} not within 1..{self.decoder_layers}")
        if self.patch_dim != PATCH * PATCH:
            raise InvalidInput(f"patch_dim must be {PATCH * PATCH}")
        if self.mel_bins % PATCH or self.target_frames % PATCH:
            raise InvalidInput("mel_bins and target_frames must be multiples of 16")
        if self.grid[0] % 2 or self.grid[1] % 2:
            raise InvalidInput(f"patch grid {self.grid} must have even sides for the wavelet stream")

    @property
    def grid(self) -> tuple[int, int]:
        return self.mel_bins // PATCH, self.target_frames // PATCH

    @property
    def num_patches(self) -> int:
        f, t = self.grid
        return f * t

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probe_layers"] = list(self.probe_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("probe_layers") is not None:
            d["probe_layers"] = tuple(d["probe_layers"])
        return cls(**d)


def sincos_2d(F_: int, T: int, dim: int) -> torch.Tensor:
    """Fixed position code for a (band, time) grid, shape (F*T, dim).
    First half of the channels encodes the band index, second half the time index."""
    def one_axis(n, width):
        pos = np.arange(n, dtype=np.float64)[:, None]
        freq = 1.0 / 10000 ** (np.arange(width // 2, dtype=np.float64) / (width // 2))
        ang = pos * freq[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    half = dim // 2
    ef, et = one_axis(F_, half), one_axis(T, half)
    code = np.concatenate([np.repeat(ef, T, axis=0), np.tile(et, (F_, 1))], axis=1)
    return torch.from_numpy(code).float()


def sample_visible(n_patches: int, ratio: float, seed) -> np.ndarray:
    """Ascending indices of the patches left visible; N - round(ratio*N) of them."""
    if not 0.0 <= ratio < 1.0:
        raise InvalidInput(f"mask ratio must lie in [0, 1), got {ratio}")
    n_masked = int(math.floor(ratio * n_patches + 0.5))
    rng = np.random.default_rng(seed)
    return np.sort(rng.permutation(n_patches)[: n_patches - n_masked])


def mask_patches(p: PatchSet, ratio: float, seed) -> PatchSet:
    visible = sample_visible(p.N, ratio, seed)
    flat = p.coords[:, 0] * p.T + p.coords[:, 1]
    return PatchSet(patches=p.patches, coords=p.coords, F=p.F, T=p.T, mask=~np.isin(flat, visible))


class SelfAttention(nn.Module):
    """Multi-head self-attention over the second-to-last axis; any leading dims."""

    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        *lead, L, d = x.shape
        hd = d // self.heads
        q, k, v = self.qkv(x).reshape(*lead, L, 3, self.heads, hd).unbind(-3)
        q, k, v = (t.transpose(-2, -3) for t in (q, k, v))
        out = F.scaled_dot_product_attention(q, k, v).transpose(-2, -3).reshape(*lead, L, d)
        return self.proj(out)


class FeedForward(nn.Sequential):
    def __init__(self, dim, ratio=4):
        super().__init__(nn.Linear(dim, ratio * dim), nn.GELU(), nn.Linear(ratio * dim, dim))


class TransformerBlock(nn.Module):
    """Pre-norm block: x + attn(norm(x)), then x + ffn(norm(x))."""

    def __init__(self, dim, heads, mlp_ratio=4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, mlp_ratio)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class GlobalStream(nn.Module):
    """Wavelet-domain stream: DWT on the (F, T) patch grid per channel, attention
    across the four subbands at each location, attention across locations within
    each subband, a feed-forward refinement, then the inverse DWT.

    Each refinement is a pre-norm residual branch, so zeroing the branch outputs
    reduces the stream to idwt2(dwt2(x)) = x.
    """

    def __init__(self, dim, heads, grid, mlp_ratio=4):
        super().__init__()
        self.grid = grid
        self.band_norm = nn.LayerNorm(dim)
        self.band_attn = SelfAttention(dim, heads)
        self.spatial_norm = nn.LayerNorm(dim)
        self.spatial_attn = SelfAttention(dim, heads)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, mlp_ratio)

    def forward(self, x):
        B, N, d = x.shape
        F_, T = self.grid
        if N != F_ * T:
            raise InvalidInput(f"{N} patches do not reshape to the {F_}x{T} grid")
        sub = dwt2(x.transpose(1, 2).reshape(B, d, F_, T))
        P = (F_ // 2) * (T // 2)
        # (B, 4 bands, P locations, d)
        h = torch.stack(sub.bands(), dim=1).reshape(B, 4, d, P).transpose(-1, -2)
        hb = h.transpose(1, 2)  # (B, P, 4, d): attend across bands
        hb = hb + self.band_attn(self.band_norm(hb))
        h = hb.transpose(1, 2)
        h = h + self.spatial_attn(self.spatial_norm(h))
        h = h + self.ffn(self.ffn_norm(h))
        bands = h.transpose(-1, -2).reshape(B, 4, d, F_ // 2, T // 2).unbind(1)
        out = idwt2(SubbandSet(*bands, source_shape=(F_, T)))
        return out.reshape(B, d, N).transpose(1, 2)


class LocalStream(nn.Module):
    """Bottleneck adapter: d -> d/4, depthwise conv along the patch axis, d/4 -> d,
    GELU, then a fixed scale."""

    def __init__(self, dim, scale=1.0, kernel=3):
        super().__init__()
        hidden = dim // 4
        self.scale = float(scale)
        self.down = nn.Linear(dim, hidden)
        self.depthwise = nn.Conv1d(hidden, hidden, kernel, padding=kernel // 2, groups=hidden)
        self.up = nn.Linear(hidden, dim)

    def forward(self, x):
        h = self.depthwise(self.down(x).transpose(1, 2)).transpose(1, 2)
        return self.scale * F.gelu(self.up(h))


class GatedFusion(nn.Module):
    """Per-position sigmoid gate over the concatenated streams."""

    def __init__(self, dim):
        super().__init__()
        self.gate = nn.Linear(2 * dim, 1)

    def forward(self, g_global, g_local):
        if g_global.shape != g_local.shape:
            raise InvalidInput(f"stream shapes differ: {tuple(g_global.shape)} vs {tuple(g_local.shape)}")
        alpha = torch.sigmoid(self.gate(torch.cat([g_global, g_local], dim=-1)))
        return alpha * g_global + (1 - alpha) * g_local


class PerceptionBlock(nn.Module):
    """Global wavelet stream and local conv stream merged by a learned gate."""

    def __init__(self, dim, heads, grid, local_scale=1.0, mlp_ratio=4, kernel=3):
        super().__init__()
        self.global_stream = GlobalStream(dim, heads, grid, mlp_ratio)
        self.local_stream = LocalStream(dim, local_scale, kernel)
        self.fusion = GatedFusion(dim)

    def forward(self, x):
        return self.fusion(self.global_stream(x), self.local_stream(x))


class DecoderLayer(nn.Module):
    def __init__(self, dim, heads, grid, local_scale=1.0, mlp_ratio=4, kernel=3):
        super().__init__()
        self.block = TransformerBlock(dim, heads, mlp_ratio)
        self.perception = PerceptionBlock(dim, heads, grid, local_scale, mlp_ratio, kernel)

    def forward(self, x):
        return self.perception(self.block(x))


class ClassifierHead(nn.Module):
    """Learned-query attention pooling over patches, then a 2-layer MLP to 2 logits."""

    def __init__(self, dim):
        super().__init__()
        self.query = nn.Parameter(torch.randn(dim) * 0.02)
        self.key = nn.Linear(dim, dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.GELU(), nn.Linear(dim, 2))

    def forward(self, x):
        scores = self.key(x) @ self.query / math.sqrt(x.shape[-1])
        pooled = (torch.softmax(scores, dim=-1).unsqueeze(-1) * x).sum(dim=1)
        return self.mlp(pooled)


class SequenceNorm(nn.Module):
    """Layer normalization over a sample's whole (n, d) patch sequence with a
    per-channel affine.

    Per-patch statistics would divide out any per-patch scale factor, so a
    patch reweighting followed by an ordinary token-wise LayerNorm would be a
    no-op; pooling the statistics over the sequence keeps the relative weights.
    """

    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        return F.layer_norm(x, x.shape[-2:], eps=self.eps) * self.weight + self.bias


def discrepancy_weights(original, reconstructed):
    """Softmax over patches of the per-patch mean absolute reconstruction error.

    Returns (weights, errors), both (B, n).
    """
    errors = (original - reconstructed).abs().mean(dim=-1)
    return torch.softmax(errors, dim=-1), errors


@dataclass
class ForwardOutput:
    logits: torch.Tensor  # (B, 2)
    reconstructed: torch.Tensor  # (B, N, C), all grid positions
    probe_embeddings: dict[int, torch.Tensor]  # layer -> (B, d)
    ftfa_weights: torch.Tensor  # (B, n)
    encoded: torch.Tensor  # (B, n, d)
    visible: torch.Tensor  # (B, n) flat grid indices fed to the encoder
    patch_errors: torch.Tensor = field(default=None)  # (B, n) per-patch mean |x - x~|

    @property
    def scores(self) -> torch.Tensor:
        """Real-ness score: logit(real) - logit(fake)."""
        return self.logits[:, REAL] - self.logits[:, FAKE]

    def masked(self) -> torch.Tensor:
        """(B, N) bool, True at positions hidden from the encoder."""
        B, N = self.reconstructed.shape[:2]
        m = torch.ones(B, N, dtype=torch.bool, device=self.visible.device)
        return m.scatter(1, self.visible, False)


class Detector(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = cfg = config or ModelConfig()
        d, grid = cfg.embed_dim, cfg.grid
        self.patch_embed = nn.Linear(cfg.patch_dim, d)
        self.register_buffer("pos", sincos_2d(*grid, d), persistent=False)
        self.encoder = nn.ModuleList(TransformerBlock(d, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.encoder_layers))
        self.encoder_norm = nn.LayerNorm(d)
        self.mask_token = nn.Parameter(torch.randn(d) * 0.02)
        self.decoder = nn.ModuleList(
            DecoderLayer(d, cfg.heads, grid, cfg.local_scale, cfg.mlp_ratio, cfg.local_kernel)
            for _ in range(cfg.decoder_layers)
        )
        self.decoder_norm = nn.LayerNorm(d)
        self.reconstruct = nn.Linear(d, cfg.patch_dim)
        self.ftfa_norm = SequenceNorm(d)
        self.head = ClassifierHead(d)

    def _check_visible(self, visible):
        N = self.config.num_patches
        if visible.shape[1] == 0:
            raise InvalidInput("at least one visible patch per sample is required")
        if visible.min() < 0 or visible.max() >= N:
            raise InvalidInput("visible index outside the patch grid")
        srt = visible.sort(dim=1).values
        if (srt[:, 1:] == srt[:, :-1]).any():
            raise InvalidInput("visible and masked coordinates overlap (duplicate index)")

    def all_visible(self, batch: int) -> torch.Tensor:
        return torch.arange(self.config.num_patches, device=self.pos.device).expand(batch, -1)

    def encode(self, patches, visible):
        """Embed and encode the visible patches of (B, N, C) -> (B, n, d)."""
        self._check_visible(visible)
        x = patches.gather(1, visible.unsqueeze(-1).expand(-1, -1, patches.shape[-1]))
        x = self.patch_embed(x) + self.pos.to(x.dtype)[visible]
        for blk in self.encoder:
            x = blk(x)
        return self.encoder_norm(x)

    def decode(self, encoded, visible):
        """Fill hidden positions with the mask token and run the decoder stack.

        Returns (reconstructed (B, N, C), {probe layer: (B, d)}).
        """
        self._check_visible(visible)
        B, _, d = encoded.shape
        N = self.config.num_patches
        x = self.mask_token.to(encoded.dtype).expand(B, N, d)
        x = x.scatter(1, visible.unsqueeze(-1).expand(-1, -1, d), encoded)
        x = x + self.pos.to(x.dtype)
        probes = {}
        for i, layer in enumerate(self.decoder, start=1):
            x = layer(x)
            if i in self.config.probe_layers:
                probes[i] = x.mean(dim=1)
        return self.reconstruct(self.decoder_norm(x)), probes

    def ftfa(self, original, reconstructed, encoded):
        """Reweight encoder features by softmax-normalized reconstruction error.

        ``original`` and ``reconstructed`` are the (B, n, C) patches aligned with
        ``encoded`` (B, n, d). Returns (features, weights, errors).
        """
        if original.shape != reconstructed.shape or original.shape[:2] != encoded.shape[:2]:
            raise InvalidInput("original, reconstructed and encoded patch sets are not aligned")
        w, e = discrepancy_weights(original, reconstructed)
        return self.ftfa_norm(encoded + w.unsqueeze(-1) * encoded), w, e

    def classify(self, features):
        return self.head(features)

    def forward(self, patches, visible=None) -> ForwardOutput:
        """``patches`` (B, N, C) in grid order; ``visible`` (B, n) indices or None for no masking."""
        if visible is None:
            visible = self.all_visible(patches.shape[0])
        encoded = self.encode(patches, visible)
        recon, probes = self.decode(encoded, visible)
        idx = visible.unsqueeze(-1).expand(-1, -1, patches.shape[-1])
        feats, w, e = self.ftfa(patches.gather(1, idx), recon.gather(1, idx), encoded)
        return ForwardOutput(
            logits=self.classify(feats),
            reconstructed=recon,
            probe_embeddings=probes,
            ftfa_weights=w,
            encoded=encoded,
            visible=visible,
            patch_errors=e,
        )


def waveforms_to_patches(waves, config: ModelConfig) -> np.ndarray:
    """Front end for a batch of waveforms: (B, N, C) float32 array."""
    lengths = {len(w.samples) for w in waves}
    if len(lengths) != 1:
        raise InvalidInput("all waveforms in a batch must have the same duration")
    out = [
        patchify(compute_fbank(w, mel_bins=config.mel_bins, target_frames=config.target_frames)).patches
        for w in waves
    ]
    return np.stack(out).astype(np.float32)


def forward_full(model: Detector, waves: list[Waveform], mode: str = "infer", seed=0) -> ForwardOutput:
    """Waveforms to ForwardOutput. ``mode="train"`` masks patches with per-sample
    streams derived from ``seed``; ``mode="infer"`` keeps every patch visible."""
    if mode not in ("train", "infer"):
        raise InvalidInput(f"mode must be 'train' or 'infer', got {mode!r}")
    cfg = model.config
    dtype = next(model.parameters()).dtype
    patches = torch.from_numpy(waveforms_to_patches(waves, cfg)).to(dtype)
    visible = None
    if mode == "train":
        seeds = np.random.SeedSequence(seed).spawn(len(waves))
        visible = torch.from_numpy(np.stack([sample_visible(cfg.num_patches, cfg.mask_ratio, s) for s in seeds]))
    return model(patches, visible)
