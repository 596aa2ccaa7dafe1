"""Reconstruction-error distributions of a trained detector.

    python scripts/separation.py --checkpoint runs/smoke/main/last.ckpt --manifest runs/smoke/data/eval/manifest.tsv

Prints per-class summary statistics and writes ``recon_errors.tsv``
(utt_id, label, error) for external histogramming. With ``--pairs N`` it
also scores N fresh bonafide utterances against spoofed copies of the same
source.
"""
import argparse
from pathlib import Path

import numpy as np

from forgetrace import diagnostics
from forgetrace.checkpoint import load_checkpoint
from forgetrace.experiments import paired_errors
from forgetrace.model import REAL
from forgetrace.training import FeatureSet


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--pairs", type=int, default=0)
    args = p.parse_args()

    model, _ = load_checkpoint(args.checkpoint)
    data = FeatureSet.from_manifest(args.manifest, model.config)
    err = diagnostics.reconstruction_errors(model, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "recon_errors.tsv", "w") as fh:
        for uid, lab, e in zip(data.utt_ids, data.labels, err):
            fh.write(f"{uid}\t{'bonafide' if lab == REAL else 'spoof'}\t{float(e)!r}\n")
    real = data.labels == REAL
    for name, mask in (("bonafide", real), ("spoof", ~real)):
        e = err[mask]
        print(f"{name}: n={len(e)} mean={e.mean():.4f} std={e.std():.4f} median={np.median(e):.4f}")
    print(f"relative gap={err[~real].mean() / err[real].mean() - 1:.3f}")
    if args.pairs:
        bona, spoof = paired_errors(model, args.pairs)
        print(f"paired: spoof > source in {(spoof > bona).sum()}/{args.pairs}, mean {bona.mean():.4f} -> {spoof.mean():.4f}")


if __name__ == "__main__":
    main()
