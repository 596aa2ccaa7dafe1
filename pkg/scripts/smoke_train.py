"""Desk-scale smoke train on the synthetic corpus, optionally with a no-MDEL ablation.

    python scripts/smoke_train.py --root runs/smoke [--ablate] [--epochs 6] [--lr0 5e-4]

Writes corpora under ROOT/data, a run directory per variant, and prints
eval EER, the spoof/bonafide reconstruction-error gap and the probe-layer
dispersion ratio.
"""
import argparse
import json
from pathlib import Path

from forgetrace import experiments
from forgetrace.config import load
from forgetrace.training import FeatureSet


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--root", default="runs/smoke")
    p.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "smoke.json"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--ablate", action="store_true", help="also run with the MDEL weight set to 0")
    args = p.parse_args()

    cfg = load(args.config, {"train.epochs": args.epochs, "train.lr0": args.lr0, "seed": args.seed, "train.seed": args.seed})
    root = Path(args.root)
    train_m, eval_m = experiments.smoke_corpora(root / "data", cfg.seed, cfg.data.n_real, 50, cfg.data.duration_s, cfg.data.workers)
    train = FeatureSet.from_manifest(train_m, cfg.model)
    evalset = FeatureSet.from_manifest(eval_m, cfg.model)

    variants = {"main": cfg.train.loss.mdel}
    if args.ablate:
        variants["no_mdel"] = 0.0
    results = {}
    for name, lam in variants.items():
        cfg.train.loss.mdel = lam
        res = experiments.smoke_run(
            train, evalset, cfg.model, cfg.train, cfg.seed, root / name, on_epoch=lambda s: print(s.log_line(), flush=True)
        )
        results[name] = res.summary() | {"losses": res.losses}
        print(name, json.dumps(res.summary()), flush=True)
    (root / "summary.json").write_text(json.dumps(results, indent=2) + "\n")


if __name__ == "__main__":
    main()
