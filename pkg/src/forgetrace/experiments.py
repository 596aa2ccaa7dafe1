"""Scaled-down behavioural runs shared by the scripts and the acceptance suite.

``smoke_run`` trains a detector on a synthetic train corpus, scores the eval
corpus and measures the reconstruction-error gap and the probe-layer class
dispersion of the trained model.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics, metrics
from .checkpoint import save_checkpoint
from .datagen import build_corpus, gen_bonafide, gen_spoof, random_channel
from .frontend import compute_fbank, patchify
from .model import REAL, Detector, ModelConfig
from .training import EpochStats, FeatureSet, TrainConfig, build_model, evaluate, fit

# desk settings for the synthetic smoke run; see configs/smoke.json
SMOKE_LR0 = 2e-4
SMOKE_EPOCHS = 8
SMOKE_GRAD_CLIP = 1.0


@dataclass
class SmokeResult:
    history: list[EpochStats]
    eval_metrics: dict
    recon_bonafide: float
    recon_spoof: float
    dispersion: float
    probe_layer: int
    seconds: float
    out_dir: Path | None = None
    records: list = field(default_factory=list)
    model: Detector | None = None

    @property
    def recon_gap(self) -> float:
        """Relative excess of spoof over bonafide mean reconstruction error."""
        return self.recon_spoof / self.recon_bonafide - 1.0

    @property
    def losses(self) -> list[float]:
        return [s.total for s in self.history]

    def summary(self) -> dict:
        return {
            "eer": self.eval_metrics["eer"],
            "min_tdcf": self.eval_metrics["min_tdcf"],
            "recon_bonafide": self.recon_bonafide,
            "recon_spoof": self.recon_spoof,
            "recon_gap": self.recon_gap,
            "dispersion": self.dispersion,
            "probe_layer": self.probe_layer,
            "seconds": self.seconds,
        }


def smoke_corpora(root, seed: int = 0, n_train: int = 200, n_eval: int = 50, duration_s: float = 10.0, workers: int = 1):
    """Write (or reuse) train and eval corpora under ``root``; returns both manifests."""
    root = Path(root)
    out = []
    for name, n, s in (("train", n_train, seed), ("eval", n_eval, seed + 1)):
        manifest = root / name / "manifest.tsv"
        if not manifest.exists():
            build_corpus(n, n, s, root / name, duration_s, workers)
        out.append(manifest)
    return tuple(out)


def smoke_run(
    train: FeatureSet,
    evalset: FeatureSet,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    seed: int = 0,
    out_dir=None,
    on_epoch=None,
) -> SmokeResult:
    model_config = model_config or ModelConfig()
    train_config = train_config or TrainConfig(lr0=SMOKE_LR0, epochs=SMOKE_EPOCHS, grad_clip=SMOKE_GRAD_CLIP, seed=seed)
    t0 = time.perf_counter()
    model = build_model(model_config, seed)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        save_checkpoint(Path(out_dir) / "init.ckpt", model, {"epoch": 0})
    history = fit(model, train, train_config, out_dir=out_dir, on_epoch=on_epoch)
    records, report = evaluate(model, evalset)
    errors = diagnostics.reconstruction_errors(model, evalset)
    real = evalset.labels == REAL
    layer = model_config.probe_layers[-1]
    emb = diagnostics.probe_embeddings(model, evalset, layer)
    if out_dir is not None:
        metrics.write_scores(Path(out_dir) / "scores.tsv", records)
        metrics.write_report(Path(out_dir) / "report.txt", report)
    return SmokeResult(
        history=history,
        eval_metrics=report,
        recon_bonafide=float(errors[real].mean()),
        recon_spoof=float(errors[~real].mean()),
        dispersion=diagnostics.dispersion_ratio(emb, evalset.labels),
        probe_layer=layer,
        seconds=time.perf_counter() - t0,
        out_dir=Path(out_dir) if out_dir is not None else None,
        records=records,
        model=model,
    )


def paired_errors(model: Detector, n: int, seed: int = 1000, duration_s: float = 10.0):
    """Mean |X - X~| for n fresh bonafide utterances and for a spoofed copy of each.

    Returns (bonafide errors, spoof errors), index-aligned by source.
    """
    c = model.config
    grids = []
    for i in range(n):
        ss = np.random.SeedSequence([seed, i])
        src_seed, chan_seed = ss.spawn(2)
        bona = gen_bonafide(src_seed, duration_s)
        rng = np.random.default_rng(chan_seed)
        spoof = gen_spoof(bona, random_channel(rng), rng)
        for w in (bona, spoof):
            grids.append(patchify(compute_fbank(w, c.mel_bins, target_frames=c.target_frames)).patches)
    labels = np.tile([REAL, 1 - REAL], n)
    data = FeatureSet(np.stack(grids).astype(np.float32), labels, [str(i) for i in range(2 * n)])
    err = diagnostics.reconstruction_errors(model, data)
    return err[0::2], err[1::2]


def strictly_decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))
