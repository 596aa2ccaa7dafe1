"""Run configuration: one JSON file holding every hyperparameter.

Schema (all sections optional, unknown keys rejected)::

    {
      "seed": 0,
      "out": "runs/default",
      "model": {ModelConfig fields},
      "train": {TrainConfig fields, "loss": {"garl", "mdel", "margin"}},
      "tdcf":  {TdcfCosts fields},
      "data":  {"train_manifest", "dev_manifest", "eval_manifest",
                "n_real", "n_fake", "duration_s", "workers"}
    }
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import InvalidInput
from .losses import LossWeights
from .metrics import TdcfCosts
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    train_manifest: str | None = None
    dev_manifest: str | None = None
    eval_manifest: str | None = None
    n_real: int = 200
    n_fake: int = 200
    duration_s: float = 10.0
    workers: int = 1


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tdcf: TdcfCosts = field(default_factory=TdcfCosts)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out": self.out,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "tdcf": self.tdcf.to_dict(),
            "data": asdict(self.data),
        }

    def check_paths(self) -> None:
        for name in ("train_manifest", "dev_manifest", "eval_manifest"):
            p = getattr(self.data, name)
            if p is not None and not Path(p).exists():
                raise InvalidInput(f"data.{name} does not exist: {p}")


def _checked(cls, values: dict, section: str) -> dict:
    known = {f.name for f in fields(cls)}
    extra = set(values) - known
    if extra:
        raise InvalidInput(f"unknown keys in '{section}': {sorted(extra)}")
    return values


def from_dict(raw: dict) -> RunConfig:
    _checked(RunConfig, raw, "top level")
    train = dict(raw.get("train", {}))
    train.setdefault("seed", int(raw.get("seed", 0)))
    loss = LossWeights(**_checked(LossWeights, train.pop("loss", {}), "train.loss"))
    model = dict(raw.get("model", {}))
    if model.get("probe_layers") is not None:
        model["probe_layers"] = tuple(model["probe_layers"])
    try:
        return RunConfig(
            seed=int(raw.get("seed", 0)),
            out=str(raw.get("out", "runs/default")),
            model=ModelConfig(**_checked(ModelConfig, model, "model")),
            train=TrainConfig(loss=loss, **_checked(TrainConfig, train, "train")),
            tdcf=TdcfCosts(**_checked(TdcfCosts, raw.get("tdcf", {}), "tdcf")),
            data=DataConfig(**_checked(DataConfig, raw.get("data", {}), "data")),
        )
    except TypeError as exc:
        raise InvalidInput(str(exc)) from exc


def load(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (if given) and apply dotted-key ``overrides`` such as
    ``{"train.lr0": 0.0}``; overrides win over file values."""
    raw = json.loads(Path(path).read_text()) if path else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return from_dict(raw)


def save(path, cfg: RunConfig) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
