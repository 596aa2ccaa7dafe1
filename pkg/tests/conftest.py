import numpy as np
import pytest
import torch

from forgetrace.model import ModelConfig


def fd_rel_errors(loss_fn, tensor, n_coords=20, eps=1e-5, seed=0, floor=1e-6):
    """Central finite differences vs autograd on ``n_coords`` random entries of ``tensor``.

    Relative error is |a - fd| / max(|a|, |fd|, floor); the floor keeps
    near-zero gradient entries from dominating.
    """
    if tensor.grad is not None:
        tensor.grad = None
    loss_fn().backward()
    analytic = tensor.grad.detach().flatten().clone()
    rng = np.random.default_rng(seed)
    coords = rng.choice(tensor.numel(), size=min(n_coords, tensor.numel()), replace=False)
    flat = tensor.data.view(-1)
    errs = []
    with torch.no_grad():
        for c in coords:
            orig = flat[c].item()
            flat[c] = orig + eps
            up = loss_fn().item()
            flat[c] = orig - eps
            down = loss_fn().item()
            flat[c] = orig
            fd = (up - down) / (2 * eps)
            a = analytic[c].item()
            errs.append(abs(a - fd) / max(abs(a), abs(fd), floor))
    return np.array(errs)


def projected(out, seed=1):
    """Scalar loss <out, R> with a fixed random R, so every output entry matters."""
    g = torch.Generator().manual_seed(seed)
    r = torch.randn(out.shape, generator=g, dtype=out.dtype)
    return (out * r).sum()


@pytest.fixture
def tiny_config():
    return ModelConfig(
        embed_dim=16, encoder_layers=1, decoder_layers=2, heads=2, mask_ratio=0.5,
        mel_bins=32, target_frames=64,
    )


def tiny_wave_samples(duration_s=0.65):
    return int(round(duration_s * 16000))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
