"""Optimization loop: decoupled-weight-decay Adam, per-step cosine schedule,
epoch loop with dev-EER checkpointing."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses, metrics
from .checkpoint import save_checkpoint
from .datagen import read_manifest
from .errors import InvalidInput, TrainingDiverged
from .frontend import compute_fbank, patchify, read_wav
from .model import REAL, Detector, ModelConfig, sample_visible

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 5e-6
    lr_min: float = 0.0
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = None
    loss: losses.LossWeights = field(default_factory=losses.LossWeights)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = losses.LossWeights(**self.loss)
        if not self.lr0 >= self.lr_min >= 0:
            raise InvalidInput("need lr0 >= lr_min >= 0")
        if self.batch_size < 2:
            raise InvalidInput("batch_size must be at least 2 for pairwise losses")
        if self.epochs < 1:
            raise InvalidInput("epochs must be positive")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise InvalidInput("grad_clip must be positive or None")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerState:
    exp_avg: list = field(default_factory=list)
    exp_avg_sq: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params) -> "OptimizerState":
        params = list(params)
        return cls([torch.zeros_like(p) for p in params], [torch.zeros_like(p) for p in params], 0)


@torch.no_grad()
def optimizer_step(params, grads, state: OptimizerState, lr: float, config: TrainConfig) -> None:
    """In-place AdamW update: p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p."""
    params, grads = list(params), list(grads)
    for g in grads:
        if not torch.isfinite(g).all():
            raise TrainingDiverged("non-finite gradient")
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1, c2 = 1 - b1**state.step, 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        if m.shape != p.shape or g.shape != p.shape:
            raise InvalidInput("parameter, gradient and moment shapes differ")
        m.mul_(b1).add_(g, alpha=1 - b1)
        v.mul_(b2).addcmul_(g, g, value=1 - b2)
        update = (m / c1) / ((v / c2).sqrt() + config.eps)
        p.sub_(lr * update + lr * config.weight_decay * p)


@torch.no_grad()
def clip_gradients(grads, max_norm: float | None) -> float:
    """Rescale ``grads`` in place so their global L2 norm is at most ``max_norm``.
    Returns the norm before clipping."""
    norm = torch.sqrt(sum(g.pow(2).sum() for g in grads)).item()
    if max_norm is not None and norm > max_norm:
        for g in grads:
            g.mul_(max_norm / norm)
    return norm


def cosine_lr(step: int, total_steps: int, lr0: float, lr_min: float = 0.0) -> float:
    if step >= total_steps:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1 + math.cos(math.pi * step / total_steps))


@dataclass
class FeatureSet:
    """Pre-computed patch grids for a corpus: patches (M, N, C), labels (M,) with 1 = bonafide."""

    patches: np.ndarray
    labels: np.ndarray
    utt_ids: list

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_manifest(cls, manifest, config: ModelConfig) -> "FeatureSet":
        rows = read_manifest(manifest)
        if not rows:
            raise InvalidInput(f"{manifest} lists no utterances")
        base = Path(manifest).parent
        patches = np.stack(
            [
                patchify(compute_fbank(read_wav(p), config.mel_bins, target_frames=config.target_frames)).patches
                for p, _ in rows
            ]
        ).astype(np.float32)
        labels = np.array([REAL if lab == metrics.BONAFIDE else 1 - REAL for _, lab in rows])
        ids = [str(p.relative_to(base)) if p.is_relative_to(base) else str(p) for p, _ in rows]
        return cls(patches, labels, ids)

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureSet(self.patches[idx], self.labels[idx], [self.utt_ids[i] for i in idx])


@dataclass
class EpochStats:
    epoch: int
    lr: float
    total: float
    ce: float
    garl: float
    mdel: float
    grad_norm: float
    dev_eer: float | None = None

    def log_line(self) -> str:
        dev = "nan" if self.dev_eer is None else repr(self.dev_eer)
        return (
            f"epoch={self.epoch} lr={self.lr!r} total={self.total!r} ce={self.ce!r} "
            f"garl={self.garl!r} mdel={self.mdel!r} grad_norm={self.grad_norm!r} dev_eer={dev}"
        )


def batch_losses(model: Detector, patches, labels, visible, weights: losses.LossWeights, warn=False):
    out = model(patches, visible)
    is_real = labels == REAL
    masked = out.masked() if visible is not None else None
    ce = losses.cross_entropy(out.logits, labels)
    garl = losses.garl(patches, out.reconstructed, is_real, masked)
    mdel = losses.mdel(out.probe_embeddings, is_real, weights.margin, warn=warn)
    return losses.total_loss(ce, garl, mdel, weights), ce, garl, mdel


def train_epoch(
    model: Detector,
    data: FeatureSet,
    config: TrainConfig,
    state: OptimizerState,
    epoch: int,
    total_steps: int,
) -> EpochStats:
    if len(data) == 0:
        raise InvalidInput("empty training set")
    model.train()
    cfg = model.config
    dtype = next(model.parameters()).dtype
    params = [p for p in model.parameters() if p.requires_grad]
    order = np.random.default_rng([config.seed, epoch]).permutation(len(data))
    sums = np.zeros(5)
    n_batches = 0
    lr_start = cosine_lr(state.step, total_steps, config.lr0, config.lr_min)
    for b, start in enumerate(range(0, len(order), config.batch_size)):
        idx = order[start : start + config.batch_size]
        if len(idx) < 2:
            continue
        patches = torch.from_numpy(data.patches[idx]).to(dtype)
        labels = torch.from_numpy(data.labels[idx]).long()
        seeds = np.random.SeedSequence([config.seed, epoch, b]).spawn(len(idx))
        visible = torch.from_numpy(np.stack([sample_visible(cfg.num_patches, cfg.mask_ratio, s) for s in seeds]))
        try:
            total, ce, garl, mdel = batch_losses(model, patches, labels, visible, config.loss, warn=True)
            model.zero_grad(set_to_none=False)
            total.backward()
            grads = [p.grad for p in params]
            gnorm = clip_gradients(grads, config.grad_clip)
            lr = cosine_lr(state.step, total_steps, config.lr0, config.lr_min)
            optimizer_step(params, grads, state, lr, config)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"epoch {epoch} batch {b}: {exc}") from exc
        sums += [total.item(), ce.item(), garl.item(), mdel.item(), gnorm]
        n_batches += 1
    mean = sums / max(n_batches, 1)
    return EpochStats(epoch, lr_start, *(float(v) for v in mean))


@torch.no_grad()
def score(model: Detector, data: FeatureSet, batch_size: int = 16) -> list[metrics.ScoreRecord]:
    """Unmasked forward over every utterance; one record each."""
    if len(data) == 0:
        raise InvalidInput("empty evaluation set")
    model.eval()
    dtype = next(model.parameters()).dtype
    records = []
    for start in range(0, len(data), batch_size):
        patches = torch.from_numpy(data.patches[start : start + batch_size]).to(dtype)
        s = model(patches).scores.double().numpy()
        for i, value in enumerate(s, start):
            label = metrics.BONAFIDE if data.labels[i] == REAL else metrics.SPOOF
            records.append(metrics.ScoreRecord(data.utt_ids[i], label, float(value)))
    return records


def evaluate(model: Detector, data: FeatureSet, costs: metrics.TdcfCosts | None = None, batch_size: int = 16):
    """(records, metrics dict)."""
    records = score(model, data, batch_size)
    return records, metrics.summarize(records, costs)


def fit(
    model: Detector,
    train: FeatureSet,
    config: TrainConfig,
    dev: FeatureSet | None = None,
    out_dir=None,
    on_epoch=None,
) -> list[EpochStats]:
    """Run ``config.epochs`` epochs. With ``out_dir``, writes ``train.log`` (one line
    per epoch), ``last.ckpt`` every epoch and ``best.ckpt`` at the lowest dev EER."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "train.log").write_text("")
    state = OptimizerState.for_params(p for p in model.parameters() if p.requires_grad)
    per_epoch = sum(1 for s in range(0, len(train), config.batch_size) if len(train) - s >= 2)
    total_steps = config.epochs * per_epoch
    history, best = [], math.inf
    with warnings.catch_warnings():
        if out is None:
            warnings.simplefilter("ignore")
        for epoch in range(1, config.epochs + 1):
            stats = train_epoch(model, train, config, state, epoch, total_steps)
            if dev is not None:
                stats.dev_eer = metrics.eer(score(model, dev, config.batch_size))[0]
            history.append(stats)
            log.info(stats.log_line())
            if out is not None:
                with open(out / "train.log", "a") as fh:
                    fh.write(stats.log_line() + "\n")
                meta = {"epoch": epoch, "train": config.to_dict()}
                save_checkpoint(out / "last.ckpt", model, meta)
                key = stats.dev_eer if stats.dev_eer is not None else stats.total
                if key < best:
                    best = key
                    save_checkpoint(out / "best.ckpt", model, meta)
            if on_epoch is not None:
                on_epoch(stats)
    return history


def build_model(config: ModelConfig, seed: int) -> Detector:
    torch.manual_seed(seed)
    return Detector(config)
