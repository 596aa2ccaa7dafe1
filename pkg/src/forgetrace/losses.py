"""Training objectives: genuine-only reconstruction, margin dispersal over probe
layers, cross-entropy, and their weighted sum."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import torch

from .errors import InvalidInput, TrainingDiverged


@dataclass
class LossWeights:
    garl: float = 0.01  # lambda_1
    mdel: float = 0.1  # lambda_2
    margin: float = 1.0

    def __post_init__(self):
        if self.garl < 0 or self.mdel < 0:
            raise InvalidInput("loss weights must be non-negative")
        if self.margin <= 0:
            raise InvalidInput("margin must be positive")


def garl(original, reconstructed, is_real, positions=None):
    """Genuine-only reconstruction loss.

    Per-sample MSE over the selected patch elements, averaged over the real
    samples in the batch. ``original``/``reconstructed`` are (B, N, C);
    ``positions`` is an optional (B, N) bool selecting patches (the masked ones
    during training). Returns 0 when the batch holds no real sample.
    """
    is_real = torch.as_tensor(is_real, dtype=torch.bool, device=original.device)
    sq = (original - reconstructed).pow(2)
    if positions is None:
        per_sample = sq.flatten(1).mean(dim=1)
    else:
        sel = positions.unsqueeze(-1).to(sq.dtype)
        count = sel.sum(dim=(1, 2)) * sq.shape[-1]
        per_sample = (sq * sel).sum(dim=(1, 2)) / count.clamp_min(1)
    if not is_real.any():
        return sq.sum() * 0.0
    return per_sample[is_real].mean()


def _pairwise_distances(a, b):
    # explicit difference keeps the gradient exact; cdist uses a matmul shortcut
    return (a.unsqueeze(1) - b.unsqueeze(0)).pow(2).sum(-1).sqrt()


def dispersal_loss(embeddings, is_real, margin=1.0, warn=False):
    """Real-real mean distance plus mean real-fake hinge ``max(0, m - dist)``.

    ``embeddings`` is (B, d). Real-real pairs are unordered (|R|(|R|-1)/2 of
    them). Either term is 0 when its pair set is empty.
    """
    is_real = torch.as_tensor(is_real, dtype=torch.bool, device=embeddings.device)
    real, fake = embeddings[is_real], embeddings[~is_real]
    loss = embeddings.sum() * 0.0
    nr, nf = len(real), len(fake)
    if nr >= 2:
        iu = torch.triu_indices(nr, nr, offset=1, device=embeddings.device)
        diff = real[iu[0]] - real[iu[1]]
        loss = loss + diff.pow(2).sum(-1).sqrt().mean()
    if nr and nf:
        loss = loss + torch.relu(margin - _pairwise_distances(real, fake)).mean()
    if warn and (nr < 2 or nf == 0):
        warnings.warn(f"degenerate batch for dispersal loss: {nr} real, {nf} fake", stacklevel=2)
    return loss


def mdel(probe_embeddings, is_real, margin=1.0, warn=False):
    """Mean of :func:`dispersal_loss` over probe layers (dict or sequence)."""
    layers = list(probe_embeddings.values()) if isinstance(probe_embeddings, dict) else list(probe_embeddings)
    if not layers:
        raise InvalidInput("at least one probe layer is required")
    return sum(dispersal_loss(e, is_real, margin, warn=warn and i == 0) for i, e in enumerate(layers)) / len(layers)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of the true class, via log-sum-exp."""
    labels = torch.as_tensor(labels, dtype=torch.long, device=logits.device)
    log_probs = logits - torch.logsumexp(logits, dim=-1, keepdim=True)
    return -log_probs.gather(1, labels.unsqueeze(1)).mean()


def total_loss(ce, garl_value, mdel_value, weights: LossWeights):
    total = ce + weights.garl * garl_value + weights.mdel * mdel_value
    for name, v in (("ce", ce), ("garl", garl_value), ("mdel", mdel_value)):
        value = float(v.detach()) if torch.is_tensor(v) else float(v)
        if not math.isfinite(value):
            raise TrainingDiverged(f"non-finite {name} loss: {value}")
    return total
