"""Single-level orthonormal 2-D Haar transform.

Works on the last two axes of either a numpy array or a torch tensor, so the
same code serves the numeric tests and the differentiable model path.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InvalidInput

try:  # torch is optional for the pure-numpy path
    import torch
except ImportError:  # pragma: no cover
    torch = None


def _stack(arrays, axis):
    if torch is not None and isinstance(arrays[0], torch.Tensor):
        return torch.stack(arrays, dim=axis)
    return np.stack(arrays, axis=axis)


@dataclass
class SubbandSet:
    """Four Haar subbands of a grid; each is (H/2, W/2) over the trailing axes."""

    LL: Any
    LH: Any
    HL: Any
    HH: Any
    source_shape: tuple[int, int]

    def bands(self) -> tuple:
        return (self.LL, self.LH, self.HL, self.HH)

    def energy(self) -> float:
        return float(sum((b**2).sum() for b in self.bands()))


def dwt2(grid) -> SubbandSet:
    """Forward transform. Each 2x2 block [[a, b], [c, d]] maps to
    LL=(a+b+c+d)/2, HL=(a-b+c-d)/2, LH=(a+b-c-d)/2, HH=(a-b-c+d)/2."""
    h, w = grid.shape[-2], grid.shape[-1]
    if h % 2 or w % 2:
        raise InvalidInput(f"grid dimensions must be even, got {h}x{w}")
    a = grid[..., 0::2, 0::2]
    b = grid[..., 0::2, 1::2]
    c = grid[..., 1::2, 0::2]
    d = grid[..., 1::2, 1::2]
    return SubbandSet(
        LL=(a + b + c + d) / 2,
        LH=(a + b - c - d) / 2,
        HL=(a - b + c - d) / 2,
        HH=(a - b - c + d) / 2,
        source_shape=(h, w),
    )


def idwt2(s: SubbandSet):
    """Exact inverse of :func:`dwt2` (the Haar matrix is its own inverse)."""
    shapes = {tuple(band.shape) for band in s.bands()}
    if len(shapes) != 1:
        raise InvalidInput(f"subband shapes disagree: {sorted(shapes)}")
    LL, LH, HL, HH = s.bands()
    a = (LL + HL + LH + HH) / 2
    b = (LL - HL + LH - HH) / 2
    c = (LL + HL - LH - HH) / 2
    d = (LL - HL - LH + HH) / 2
    lead = tuple(LL.shape[:-2])
    h, w = LL.shape[-2], LL.shape[-1]
    top = _stack([a, b], -1).reshape(lead + (h, 2 * w))
    bottom = _stack([c, d], -1).reshape(lead + (h, 2 * w))
    return _stack([top, bottom], -2).reshape(lead + (2 * h, 2 * w))
