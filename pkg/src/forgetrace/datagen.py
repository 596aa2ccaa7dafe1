"""Synthetic bonafide/spoof corpus.

Bonafide items are enveloped harmonic tones with a little broadband noise.
Spoofs are independent bonafide draws passed through a channel of coarse
requantization, band-limiting and STFT phase jitter.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import InvalidInput, StorageError
from .frontend import SAMPLE_RATE, Waveform, write_wav

PEAK = 0.9
NOISE_SNR_DB = 35.0

_BONAFIDE, _SPOOF_SOURCE, _SPOOF_CHANNEL = 0, 1, 2


@dataclass
class ArtifactConfig:
    quantization_bits: int | None = 6
    band_cut_hz: float | None = 4000.0
    phase_jitter_rad: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        if not self.intensity > 0:
            raise InvalidInput("intensity must be positive")
        if self.quantization_bits is not None and self.quantization_bits < 1:
            raise InvalidInput("quantization_bits must be >= 1")
        if self.band_cut_hz is not None and not 0 < self.band_cut_hz < SAMPLE_RATE / 2:
            raise InvalidInput("band_cut_hz must lie inside (0, Nyquist)")
        if self.quantization_bits is None and self.band_cut_hz is None and self.phase_jitter_rad <= 0:
            raise InvalidInput("at least one artifact must be enabled")


def _envelope(rng, n, sr):
    """Sum of attack/decay bursts, floored so the tone never fully vanishes."""
    env = np.zeros(n)
    t = np.arange(n) / sr
    n_bursts = int(rng.integers(3, 8))
    starts = np.sort(rng.uniform(0, n / sr * 0.9, n_bursts))
    for s in starts:
        attack = rng.uniform(0.01, 0.08)
        decay = rng.uniform(0.15, 0.8)
        dt = t - s
        rise = np.clip(dt / attack, 0, 1)
        fall = np.exp(-np.clip(dt - attack, 0, None) / decay)
        env += rng.uniform(0.5, 1.0) * np.where(dt >= 0, rise * fall, 0.0)
    return env + 0.05


def gen_bonafide(seed, duration_s: float = 10.0, sample_rate: int = SAMPLE_RATE) -> Waveform:
    if duration_s <= 0:
        raise InvalidInput("duration must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(100.0, 300.0)
    glide = rng.uniform(-0.1, 0.1) * f0 * np.sin(2 * np.pi * rng.uniform(0.1, 0.5) * t)
    phase = 2 * np.pi * np.cumsum(f0 + glide) / sample_rate
    tone = np.zeros(n)
    for k in range(1, int(rng.integers(3, 7)) + 1):
        tone += rng.uniform(0.3, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    x = tone * _envelope(rng, n, sample_rate)
    noise = rng.standard_normal(n)
    noise *= np.sqrt(np.mean(x**2) / np.mean(noise**2) * 10 ** (-NOISE_SNR_DB / 10))
    x = x + noise
    return Waveform(samples=PEAK * x / np.max(np.abs(x)), sample_rate=sample_rate)


def requantize(x: np.ndarray, bits: int) -> np.ndarray:
    """Round onto 2**bits uniform levels spanning [-1, 1]."""
    step = 2.0 / (2**bits - 1)
    return np.clip(-1.0 + np.round((x + 1.0) / step) * step, -1.0, 1.0)


def band_limit(x: np.ndarray, cut_hz: float, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), 1.0 / sample_rate)
    spec[freqs > cut_hz] = 0.0
    return np.fft.irfft(spec, n=len(x))


def phase_jitter(x: np.ndarray, max_rad: float, rng, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    _, _, Z = signal.stft(x, fs=sample_rate, nperseg=512, noverlap=384)
    Z = Z * np.exp(1j * rng.uniform(-max_rad, max_rad, Z.shape))
    _, y = signal.istft(Z, fs=sample_rate, nperseg=512, noverlap=384)
    y = y[: len(x)]
    return np.pad(y, (0, len(x) - len(y)))


def gen_spoof(bonafide: Waveform, a: ArtifactConfig, seed) -> Waveform:
    """Apply jitter, then band-limiting, then requantization, each blended
    with its input by ``a.intensity``."""
    rng = np.random.default_rng(seed)
    x = bonafide.samples.copy()
    lam = a.intensity
    if a.phase_jitter_rad > 0:
        x = x + lam * (phase_jitter(x, a.phase_jitter_rad, rng, bonafide.sample_rate) - x)
    if a.band_cut_hz is not None:
        x = x + lam * (band_limit(x, a.band_cut_hz, bonafide.sample_rate) - x)
    if a.quantization_bits is not None:
        x = x + lam * (requantize(x, a.quantization_bits) - x)
    return Waveform(samples=np.clip(x, -1.0, 1.0), sample_rate=bonafide.sample_rate)


def random_channel(rng) -> ArtifactConfig:
    """One of four spoofing channels, each with at least one magnitude-visible artifact."""
    kind = int(rng.integers(4))
    if kind == 0:
        return ArtifactConfig(quantization_bits=None, band_cut_hz=float(rng.uniform(3000, 5500)))
    if kind == 1:
        return ArtifactConfig(quantization_bits=int(rng.integers(5, 8)), band_cut_hz=None)
    if kind == 2:
        return ArtifactConfig(
            quantization_bits=None,
            band_cut_hz=float(rng.uniform(5000, 7000)),
            phase_jitter_rad=float(rng.uniform(0.5, 1.5)),
        )
    return ArtifactConfig(
        quantization_bits=int(rng.integers(6, 9)),
        band_cut_hz=float(rng.uniform(4000, 7000)),
        phase_jitter_rad=float(rng.uniform(0.3, 1.0)),
    )


def item_seed(corpus_seed: int, stream: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([corpus_seed, stream, index])


def make_item(corpus_seed: int, label: str, index: int, duration_s: float) -> Waveform:
    if label == "bonafide":
        return gen_bonafide(item_seed(corpus_seed, _BONAFIDE, index), duration_s)
    source = gen_bonafide(item_seed(corpus_seed, _SPOOF_SOURCE, index), duration_s)
    rng = np.random.default_rng(item_seed(corpus_seed, _SPOOF_CHANNEL, index))
    return gen_spoof(source, random_channel(rng), rng)


def _write_item(args):
    path, corpus_seed, label, index, duration_s = args
    write_wav(path, make_item(corpus_seed, label, index, duration_s))


def build_corpus(
    n_real: int,
    n_fake: int,
    seed: int,
    out_dir,
    duration_s: float = 10.0,
    workers: int = 1,
) -> Path:
    """Write WAVs plus ``manifest.tsv`` (relative path, label) and return the manifest path."""
    if n_real < 1 or n_fake < 1:
        raise InvalidInput("both counts must be at least 1")
    out = Path(out_dir)
    try:
        (out / "wav").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create {out}: {exc}") from exc

    jobs, rows = [], []
    for label, count in (("bonafide", n_real), ("spoof", n_fake)):
        for i in range(count):
            rel = f"wav/{label}_{i:05d}.wav"
            jobs.append((out / rel, seed, label, i, duration_s))
            rows.append(f"{rel}\t{label}\n")
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                list(pool.map(_write_item, jobs, chunksize=8))
        else:
            for job in jobs:
                _write_item(job)
        manifest = out / "manifest.tsv"
        manifest.write_text("".join(rows))
    except OSError as exc:
        raise StorageError(f"cannot write corpus under {out}: {exc}") from exc
    return manifest


def read_manifest(path) -> list[tuple[Path, str]]:
    """Rows of (absolute wav path, label); relative paths resolve against the manifest."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in ("bonafide", "spoof"):
            raise InvalidInput(f"{path}:{lineno}: expected 'path<TAB>bonafide|spoof'")
        wav = Path(parts[0])
        rows.append((wav if wav.is_absolute() else path.parent / wav, parts[1]))
    return rows
