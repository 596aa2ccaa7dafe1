"""Waveform to log-mel grid to 16x16 patch sequence.

Framing follows a 25 ms Hann window and 10 ms hop at 16 kHz, zero-padded to a
512-point FFT, with HTK-style triangular mel filters. Grids are standardized
per utterance and then padded or centre-cropped to a fixed frame count.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InvalidInput

SAMPLE_RATE = 16000
PATCH = 16
N_FFT = 512
LOG_FLOOR = 1e-10
VARIANCE_FLOOR = 1e-12


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise InvalidInput("sample_rate must be positive")
        if self.samples.ndim != 1:
            raise InvalidInput("waveform must be mono (1-D)")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInput("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FbankGrid:
    values: np.ndarray  # (mel_bins, frames)
    frame_hop_ms: float = 10.0
    frame_window_ms: float = 25.0
    raw_frames: int | None = None

    @property
    def mel_bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class PatchSet:
    """Flattened patches with their (band, time) grid coordinates.

    ``mask`` is True where a patch is hidden from the encoder.
    """

    patches: np.ndarray  # (N, 256)
    coords: np.ndarray  # (N, 2) int, (f, t)
    F: int
    T: int
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.patches = np.asarray(self.patches)
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        if self.mask is None:
            self.mask = np.zeros(len(self.patches), dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.patches.ndim != 2 or self.patches.shape[1] != PATCH * PATCH:
            raise InvalidInput(f"patches must be (N, {PATCH * PATCH}), got {self.patches.shape}")
        if len(self.coords) != len(self.patches) or len(self.mask) != len(self.patches):
            raise InvalidInput("patches, coords and mask lengths differ")

    @property
    def N(self) -> int:
        return len(self.patches)

    def visible_indices(self) -> np.ndarray:
        """Flat grid indices (f*T + t) of unmasked patches, ascending."""
        flat = self.coords[:, 0] * self.T + self.coords[:, 1]
        return np.sort(flat[~self.mask])


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(mel_bins: int = 128, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), mel_bins + 2))
    return edges[1:-1]


@lru_cache(maxsize=8)
def mel_filterbank(mel_bins: int = 128, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters, shape (mel_bins, n_fft // 2 + 1), unit peak height."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), mel_bins + 2))
    freqs = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def frame_count(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 1
    return 1 + (n_samples - window) // hop


def compute_fbank(
    w: Waveform,
    mel_bins: int = 128,
    window_ms: float = 25.0,
    hop_ms: float = 10.0,
    target_frames: int | None = 1024,
) -> FbankGrid:
    """Log-mel filterbank grid of ``w``, standardized over the whole grid.

    ``target_frames=None`` keeps the raw frame count.
    """
    if w.sample_rate != SAMPLE_RATE:
        raise InvalidInput(f"only {SAMPLE_RATE} Hz audio is accepted, got {w.sample_rate}")
    if len(w.samples) == 0:
        raise InvalidInput("empty waveform")
    if window_ms < hop_ms:
        raise InvalidInput("window must be at least as long as the hop")
    if target_frames is not None and target_frames % PATCH:
        raise InvalidInput(f"target_frames must be a multiple of {PATCH}")
    win = int(round(window_ms * w.sample_rate / 1000))
    hop = int(round(hop_ms * w.sample_rate / 1000))
    if win > N_FFT:
        raise InvalidInput(f"window of {win} samples exceeds the {N_FFT}-point FFT")

    x = w.samples
    if len(x) < win:
        x = np.pad(x, (0, win - len(x)))
    n_frames = frame_count(len(x), win, hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]
    spec = np.abs(np.fft.rfft(frames * np.hanning(win + 2)[1:-1], n=N_FFT, axis=1))
    mel = mel_filterbank(mel_bins, N_FFT, w.sample_rate) @ spec.T
    logmel = np.log(np.maximum(mel, LOG_FLOOR))

    var = logmel.var()
    if var < VARIANCE_FLOOR:
        logmel = np.zeros_like(logmel)
    else:
        logmel = (logmel - logmel.mean()) / np.sqrt(var)

    if target_frames is not None:
        if n_frames < target_frames:
            logmel = np.pad(logmel, ((0, 0), (0, target_frames - n_frames)))
        elif n_frames > target_frames:
            start = (n_frames - target_frames) // 2
            logmel = logmel[:, start : start + target_frames]
    return FbankGrid(values=logmel, frame_hop_ms=hop_ms, frame_window_ms=window_ms, raw_frames=n_frames)


def patchify(g: FbankGrid | np.ndarray) -> PatchSet:
    values = g.values if isinstance(g, FbankGrid) else np.asarray(g)
    H, W = values.shape
    if H % PATCH or W % PATCH:
        raise InvalidInput(f"grid {H}x{W} is not divisible into {PATCH}x{PATCH} patches")
    F, T = H // PATCH, W // PATCH
    patches = values.reshape(F, PATCH, T, PATCH).transpose(0, 2, 1, 3).reshape(F * T, PATCH * PATCH)
    ff, tt = np.meshgrid(np.arange(F), np.arange(T), indexing="ij")
    coords = np.stack([ff.ravel(), tt.ravel()], axis=1)
    return PatchSet(patches=patches, coords=coords, F=F, T=T)


def unpatchify(p: PatchSet) -> FbankGrid:
    F, T = p.F, p.T
    flat = p.coords[:, 0] * T + p.coords[:, 1]
    in_range = (p.coords >= 0).all(axis=1) & (p.coords[:, 0] < F) & (p.coords[:, 1] < T)
    if p.N != F * T or not in_range.all() or len(np.unique(flat)) != F * T:
        raise InvalidInput("patch coordinates do not cover the full F x T grid")
    ordered = np.empty_like(p.patches)
    ordered[flat] = p.patches
    values = ordered.reshape(F, T, PATCH, PATCH).transpose(0, 2, 1, 3).reshape(F * PATCH, T * PATCH)
    return FbankGrid(values=values)


def read_wav(path: str | Path) -> Waveform:
    """Read a mono 16-bit PCM WAV at 16 kHz."""
    try:
        wf = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise InvalidInput(f"{path}: not a readable WAV file ({exc})") from exc
    with wf:
        if wf.getnchannels() != 1:
            raise InvalidInput(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise InvalidInput(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit samples")
        if wf.getframerate() != SAMPLE_RATE:
            raise InvalidInput(f"{path}: expected {SAMPLE_RATE} Hz, got {wf.getframerate()} Hz")
        if wf.getcomptype() != "NONE":
            raise InvalidInput(f"{path}: compressed WAV is not supported")
        raw = wf.readframes(wf.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=data, sample_rate=SAMPLE_RATE)


def write_wav(path: str | Path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())
