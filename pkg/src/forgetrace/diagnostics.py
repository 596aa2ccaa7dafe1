"""Inspection helpers: per-patch heatmaps, reconstruction-error distributions,
probe-layer embeddings and their class dispersion."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .errors import InvalidInput
from .model import REAL, Detector
from .training import FeatureSet


@torch.no_grad()
def _infer(model: Detector, patches: np.ndarray, batch_size: int = 16):
    model.eval()
    dtype = next(model.parameters()).dtype
    for start in range(0, len(patches), batch_size):
        x = torch.from_numpy(patches[start : start + batch_size]).to(dtype)
        yield x, model(x)


def reconstruction_errors(model: Detector, data: FeatureSet, batch_size: int = 16) -> np.ndarray:
    """Mean |X - X~| over every patch value of each utterance, no masking."""
    out = [(x - o.reconstructed).abs().flatten(1).mean(1).double().numpy() for x, o in _infer(model, data.patches, batch_size)]
    return np.concatenate(out)


def probe_embeddings(model: Detector, data: FeatureSet, layer: int, batch_size: int = 16) -> np.ndarray:
    if layer not in model.config.probe_layers:
        raise InvalidInput(f"layer {layer} is not a probe layer {model.config.probe_layers}")
    return np.concatenate([o.probe_embeddings[layer].double().numpy() for _, o in _infer(model, data.patches, batch_size)])


def dispersion_ratio(embeddings: np.ndarray, labels: np.ndarray) -> float:
    """Mean real-fake distance divided by mean real-real (unordered pair) distance."""
    real, fake = embeddings[labels == REAL], embeddings[labels != REAL]
    if len(real) < 2 or len(fake) < 1:
        raise InvalidInput("need at least two real and one fake embedding")
    rr = np.linalg.norm(real[:, None] - real[None], axis=-1)[np.triu_indices(len(real), 1)].mean()
    rf = np.linalg.norm(real[:, None] - fake[None], axis=-1).mean()
    return float(rf / rr)


def patch_maps(model: Detector, patches: np.ndarray) -> dict[str, np.ndarray]:
    """Discrepancy weights and per-patch mean |X - X~| for one utterance, each (F, T)."""
    (_, out), = list(_infer(model, patches[None], 1))
    F_, T = model.config.grid
    return {
        "weights": out.ftfa_weights[0].double().numpy().reshape(F_, T),
        "errors": out.patch_errors[0].double().numpy().reshape(F_, T),
    }


def write_csv(path, matrix: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv(path) -> np.ndarray:
    return np.array([[float(v) for v in line.split(",")] for line in Path(path).read_text().splitlines() if line])


def write_pgm(path, matrix: np.ndarray) -> None:
    """Binary 8-bit greyscale, min-max scaled; a constant matrix maps to 0."""
    lo, hi = float(matrix.min()), float(matrix.max())
    scaled = np.zeros_like(matrix) if hi == lo else (matrix - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, dims, maxval, rest = raw.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise InvalidInput(f"{path} is not an 8-bit binary PGM")
    w, h = map(int, dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w)
