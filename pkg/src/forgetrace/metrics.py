"""Countermeasure metrics: EER, normalized minimum t-DCF, accuracy.

Scores are real-ness scores (higher means more bonafide). A record is accepted
as bonafide at threshold t when ``score >= t``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInput

BONAFIDE = "bonafide"
SPOOF = "spoof"


@dataclass(frozen=True)
class ScoreRecord:
    utt_id: str
    label: str
    score: float

    def __post_init__(self):
        if self.label not in (BONAFIDE, SPOOF):
            raise InvalidInput(f"label must be bonafide or spoof, got {self.label!r}")
        object.__setattr__(self, "score", float(self.score))
        if not np.isfinite(self.score):
            raise InvalidInput(f"non-finite score for {self.utt_id}")


@dataclass
class TdcfCosts:
    """Tandem cost model. ASV error rates are inputs at the ASV operating point."""

    p_target: float = 0.9405  # (1 - p_spoof) * 0.99
    p_nontarget: float = 0.0095  # (1 - p_spoof) * 0.01
    p_spoof: float = 0.05
    c_miss_asv: float = 1.0
    c_fa_asv: float = 10.0
    c_miss_cm: float = 1.0
    c_fa_cm: float = 10.0
    p_miss_asv: float = 0.0243
    p_fa_asv: float = 0.0243
    p_miss_spoof_asv: float = 0.2836

    def validate(self) -> None:
        for name in ("p_target", "p_nontarget", "p_spoof", "p_miss_asv", "p_fa_asv", "p_miss_spoof_asv"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInput(f"{name}={v} is not a probability")
        for name in ("c_miss_asv", "c_fa_asv", "c_miss_cm", "c_fa_cm"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"{name} must be positive")
        if abs(self.p_target + self.p_nontarget + self.p_spoof - 1.0) > 1e-9:
            raise InvalidInput("priors must sum to 1")
        c1, c2 = self.coefficients()
        if c1 <= 0 or c2 <= 0:
            raise InvalidInput(f"cost model gives non-positive coefficients C1={c1}, C2={c2}")

    def coefficients(self) -> tuple[float, float]:
        """(C1, C2) weighting CM miss rate and CM false-alarm rate."""
        c1 = self.p_target * (self.c_miss_cm - self.c_miss_asv * self.p_miss_asv) - self.p_nontarget * self.c_fa_asv * self.p_fa_asv
        c2 = self.c_fa_cm * self.p_spoof * (1.0 - self.p_miss_spoof_asv)
        return c1, c2

    @classmethod
    def from_file(cls, path) -> "TdcfCosts":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


def split_scores(records) -> tuple[np.ndarray, np.ndarray]:
    bona = np.array([r.score for r in records if r.label == BONAFIDE], dtype=np.float64)
    spoof = np.array([r.score for r in records if r.label == SPOOF], dtype=np.float64)
    if len(bona) == 0 or len(spoof) == 0:
        raise InvalidInput("both bonafide and spoof records are required")
    return bona, spoof


def error_rates(bona: np.ndarray, spoof: np.ndarray):
    """Sweep every distinct score plus one threshold above them all.

    Returns (thresholds, far, frr) where far = P(spoof >= t), frr = P(bona < t).
    """
    distinct = np.unique(np.concatenate([bona, spoof]))
    thresholds = np.append(distinct, np.nextafter(distinct[-1], np.inf))
    bs, ss = np.sort(bona), np.sort(spoof)
    frr = np.searchsorted(bs, thresholds, side="left") / len(bs)
    far = 1.0 - np.searchsorted(ss, thresholds, side="left") / len(ss)
    return thresholds, far, frr


def crossing(thresholds, far, frr) -> tuple[float, float]:
    """Linear interpolation of the first point where far - frr goes from > 0 to <= 0."""
    diff = far - frr
    k = int(np.argmax(diff <= 0))  # diff[-1] = -1 always, so a crossing exists
    if diff[k] == 0 or k == 0:
        return float(far[k]), float(thresholds[k])
    s = diff[k - 1] / (diff[k - 1] - diff[k])
    value = far[k - 1] + s * (far[k] - far[k - 1])
    return float(value), float(thresholds[k - 1] + s * (thresholds[k] - thresholds[k - 1]))


def eer(records) -> tuple[float, float]:
    """(equal error rate, threshold at the crossing)."""
    bona, spoof = split_scores(records)
    return crossing(*error_rates(bona, spoof))


def min_tdcf(records, costs: TdcfCosts | None = None) -> float:
    """Normalized minimum tandem detection cost over all CM thresholds."""
    costs = costs or TdcfCosts()
    costs.validate()
    bona, spoof = split_scores(records)
    _, far, frr = error_rates(bona, spoof)
    c1, c2 = costs.coefficients()
    return float(np.min(c1 * frr + c2 * far) / min(c1, c2))


def accuracy(records, threshold: float = 0.0) -> float:
    if not records:
        raise InvalidInput("no records")
    hits = sum((r.score >= threshold) == (r.label == BONAFIDE) for r in records)
    return hits / len(records)


def summarize(records, costs: TdcfCosts | None = None, threshold: float = 0.0) -> dict:
    value, thr = eer(records)
    return {
        "n": len(records),
        "eer": value,
        "eer_threshold": thr,
        "min_tdcf": min_tdcf(records, costs),
        "accuracy": accuracy(records, threshold),
    }


def write_scores(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(f"{r.utt_id}\t{r.label}\t{r.score!r}\n")


def read_scores(path) -> list[ScoreRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise InvalidInput(f"{path}:{lineno}: expected 3 tab-separated fields")
            out.append(ScoreRecord(parts[0], parts[1], float(parts[2])))
    return out


def write_report(path, metrics: dict) -> None:
    lines = (f"{k}={v}" if isinstance(v, int) else f"{k}={float(v)!r}" for k, v in metrics.items())
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            out[k] = int(v) if v.isdigit() else float(v)
    return out
