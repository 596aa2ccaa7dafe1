"""Command-line entry point: ``forgetrace {datagen,train,eval,trace,embed-dump}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as configmod
from . import diagnostics, metrics
from .checkpoint import load_checkpoint, save_checkpoint
from .datagen import build_corpus
from .errors import InvalidInput, TrainingDiverged
from .frontend import compute_fbank, patchify, read_wav
from .training import FeatureSet, build_model, evaluate, fit

log = logging.getLogger("forgetrace")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forgetrace", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("datagen", help="write a synthetic corpus and manifest")
    _common(p)
    p.add_argument("--n-real", type=int)
    p.add_argument("--n-fake", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("train", help="train a detector")
    _common(p)
    p.add_argument("--train-manifest")
    p.add_argument("--dev-manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lambda-garl", type=float)
    p.add_argument("--lambda-mdel", type=float)
    p.add_argument("--margin", type=float)

    p = sub.add_parser("eval", help="score a manifest and report metrics")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.add_argument("--costs", help="JSON file of t-DCF constants")

    p = sub.add_parser("trace", help="per-patch attention and error maps for one WAV")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)

    p = sub.add_parser("embed-dump", help="probe-layer embeddings for a manifest")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.add_argument("--layer", type=int)
    return parser


def _run_config(args) -> configmod.RunConfig:
    o = {"seed": args.seed, "out": args.out}
    if args.seed is not None:
        o["train.seed"] = args.seed
    g = vars(args).get
    o.update(
        {
            "data.n_real": g("n_real"),
            "data.n_fake": g("n_fake"),
            "data.duration_s": g("duration"),
            "data.workers": g("workers"),
            "data.train_manifest": g("train_manifest"),
            "data.dev_manifest": g("dev_manifest"),
            "train.epochs": g("epochs"),
            "train.lr0": g("lr0"),
            "train.batch_size": g("batch_size"),
            "train.loss.garl": g("lambda_garl"),
            "train.loss.mdel": g("lambda_mdel"),
            "train.loss.margin": g("margin"),
        }
    )
    return configmod.load(args.config, o)


def cmd_datagen(cfg: configmod.RunConfig) -> Path:
    d = cfg.data
    manifest = build_corpus(d.n_real, d.n_fake, cfg.seed, cfg.out, d.duration_s, d.workers)
    print(manifest)
    return manifest


def cmd_train(cfg: configmod.RunConfig) -> Path:
    cfg.check_paths()
    if cfg.data.train_manifest is None:
        raise UsageError("train requires --train-manifest or data.train_manifest")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    configmod.save(out / "config.json", cfg)
    train = FeatureSet.from_manifest(cfg.data.train_manifest, cfg.model)
    dev = FeatureSet.from_manifest(cfg.data.dev_manifest, cfg.model) if cfg.data.dev_manifest else None
    model = build_model(cfg.model, cfg.train.seed)
    save_checkpoint(out / "init.ckpt", model, {"epoch": 0})
    fit(model, train, cfg.train, dev=dev, out_dir=out, on_epoch=lambda s: print(s.log_line(), flush=True))
    return out / "best.ckpt"


def cmd_eval(cfg: configmod.RunConfig, checkpoint, manifest, costs_path=None) -> dict:
    manifest = manifest or cfg.data.eval_manifest
    if manifest is None:
        raise UsageError("eval requires --manifest")
    model, _ = load_checkpoint(checkpoint)
    costs = metrics.TdcfCosts.from_file(costs_path) if costs_path else cfg.tdcf
    data = FeatureSet.from_manifest(manifest, model.config)
    records, report = evaluate(model, data, costs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_scores(out / "scores.tsv", records)
    metrics.write_report(out / "report.txt", report)
    for k, v in report.items():
        print(f"{k}={v}")
    return report


def cmd_trace(cfg: configmod.RunConfig, checkpoint, wav) -> float:
    model, _ = load_checkpoint(checkpoint)
    c = model.config
    patches = patchify(compute_fbank(read_wav(wav), c.mel_bins, target_frames=c.target_frames)).patches
    maps = diagnostics.patch_maps(model, patches.astype(np.float32))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, matrix in maps.items():
        diagnostics.write_csv(out / f"{name}.csv", matrix)
        diagnostics.write_pgm(out / f"{name}.pgm", matrix)
    value = float(maps["errors"].mean())
    print(f"mean_reconstruction_error={value!r}")
    return value


def cmd_embed_dump(cfg: configmod.RunConfig, checkpoint, manifest, layer=None) -> Path:
    manifest = manifest or cfg.data.eval_manifest
    if manifest is None:
        raise UsageError("embed-dump requires --manifest")
    model, _ = load_checkpoint(checkpoint)
    layer = model.config.probe_layers[-1] if layer is None else layer
    data = FeatureSet.from_manifest(manifest, model.config)
    emb = diagnostics.probe_embeddings(model, data, layer)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"embeddings_layer{layer}.tsv"
    with open(path, "w") as fh:
        for uid, lab, vec in zip(data.utt_ids, data.labels, emb):
            label = metrics.BONAFIDE if lab == 1 else metrics.SPOOF
            fh.write("\t".join([uid, label, *(repr(float(v)) for v in vec)]) + "\n")
    print(path)
    return path


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _run_config(args)
        if args.command == "datagen":
            cmd_datagen(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, args.checkpoint, args.manifest, args.costs)
        elif args.command == "trace":
            cmd_trace(cfg, args.checkpoint, args.wav)
        elif args.command == "embed-dump":
            cmd_embed_dump(cfg, args.checkpoint, args.manifest, args.layer)
    except UsageError as exc:
        print(f"forgetrace: {exc}", file=sys.stderr)
        return 1
    except (InvalidInput, TrainingDiverged, OSError, ValueError) as exc:
        print(f"forgetrace: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
