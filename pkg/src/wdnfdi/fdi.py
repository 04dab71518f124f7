"""Fault detection and isolation harness: pre-train, online train, online test, score."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .dictlearn import Hyper, classify, lcksvd_pretrain, toddler_update
from .errors import ValidationError


@dataclass
class SplitSpec:
    pretrain: np.ndarray
    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.pretrain, self.train, self.test = (
            np.asarray(a, dtype=np.int64).ravel() for a in (self.pretrain, self.train, self.test))
        sets = [set(a.tolist()) for a in (self.pretrain, self.train, self.test)]
        if any(len(s) != len(a) for s, a in zip(sets, (self.pretrain, self.train, self.test))):
            raise ValidationError("split contains a repeated column")
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValidationError("pre-train, train and test index sets overlap")

    @classmethod
    def from_tags(cls, split_codes) -> "SplitSpec":
        codes = np.asarray(split_codes)
        return cls(*(np.flatnonzero(codes == k) for k in range(3)))

    @classmethod
    def by_ratio(cls, labels, ratios=(0.25, 0.25, 0.5), seed: int = 0) -> "SplitSpec":
        """Stratified split so every class lands in the pre-train part."""
        labels = np.asarray(labels)
        rng = np.random.default_rng([seed, 0x53504C54])
        parts = ([], [], [])
        for c in np.unique(labels):
            idx = rng.permutation(np.flatnonzero(labels == c))
            n_pt = max(1, int(round(ratios[0] * idx.size)))
            n_tr = int(round(ratios[1] * idx.size))
            parts[0].extend(idx[:n_pt])
            parts[1].extend(idx[n_pt:n_pt + n_tr])
            parts[2].extend(idx[n_pt + n_tr:])
        return cls(*(np.sort(np.array(p, dtype=np.int64)) for p in parts))


def score(pred, truth, hops, communities=None) -> dict:
    """Success rates in percent: exact, within 1 and 2 hops, same community."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValidationError("prediction and truth lengths differ")
    if pred.size == 0:
        raise ValidationError("nothing to score")
    d = np.asarray(hops)[truth, pred]
    out = {
        "S1": 100.0 * float(np.mean(d == 0)),
        "S2": 100.0 * float(np.mean(d <= 1)),
        "S3": 100.0 * float(np.mean(d <= 2)),
    }
    if communities is not None:
        comm = np.asarray(communities)
        if comm.shape[0] < hops.shape[0] or np.any(comm[np.concatenate([pred, truth])] <= 0):
            raise ValidationError("community map does not cover every scored node")
        out["S4"] = 100.0 * float(np.mean(comm[pred] == comm[truth]))
    return out


@dataclass
class FDIReport:
    rates: dict
    records: list = field(default_factory=list)
    confusion: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        """Deterministic machine-readable form (timings are kept out of it)."""
        return {"summary": {"rates": self.rates, "confusion": self.confusion,
                            "provenance": self.provenance},
                "records": self.records}

    def dumps(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=1) + "\n"

    def table(self) -> str:
        prov = self.provenance
        lines = [f"method {prov.get('method', '?')}  sensors {prov.get('sensors', '?')}  "
                 f"test signals {len(self.records)}"]
        for k in ("S1", "S2", "S3", "S4"):
            if k in self.rates:
                lines.append(f"  {k}  {self.rates[k]:7.2f} %")
        for k, v in sorted(self.timings.items()):
            lines.append(f"  time {k:<10} {v:8.3f} s")
        return "\n".join(lines) + "\n"


def run_fdi(R_sel, labels, split: SplitSpec, n_classes: int, hyper: Hyper | None = None,
            hops=None, communities=None, provenance: dict | None = None):
    """Run the full online FDI loop on sensor rows ``R_sel`` (s x D).

    Returns ``(model, report)``. Test signals are first used for an
    unlabelled online update and then classified by the updated model.
    """
    hp = hyper or Hyper()
    R_sel = np.atleast_2d(np.asarray(R_sel, float))
    labels = np.asarray(labels, dtype=np.int64)
    if R_sel.shape[0] < 1:
        raise ValidationError("need at least one sensor row")
    if split.test.size and labels[split.test].max() >= n_classes:
        raise ValidationError("test labels contain an unknown class")
    if hops is None:
        hops = np.where(np.eye(n_classes) > 0, 0.0, np.inf)
    timings = {}

    t0 = time.perf_counter()
    model, _ = lcksvd_pretrain(R_sel[:, split.pretrain], labels[split.pretrain], n_classes, hp)
    timings["pretrain"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    for k in split.train:
        toddler_update(model, R_sel[:, k], int(labels[k]))
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    preds, records = [], []
    for k in split.test:
        y = R_sel[:, k]
        toddler_update(model, y)
        res = classify(model, y)
        preds.append(res.label)
        top = np.sort(res.scores)[::-1][:2]
        truth = int(labels[k])
        records.append({
            "column": int(k) + 1,
            "true": truth + 1,
            "pred": res.label + 1,
            "top2": [float(v) for v in top],
            "hops": None if not np.isfinite(hops[truth, res.label]) else int(hops[truth, res.label]),
        })
    timings["test"] = time.perf_counter() - t0

    truth = labels[split.test]
    rates = score(np.array(preds, dtype=np.int64), truth, hops, communities) if preds else {}
    confusion = {}
    for c in np.unique(truth):
        mask = truth == c
        confusion[str(int(c) + 1)] = {"n": int(mask.sum()),
                                      "correct": int(np.sum(np.array(preds)[mask] == c))}
    report = FDIReport(rates, records, confusion, dict(provenance or {}), timings)
    return model, report
