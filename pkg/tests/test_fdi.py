import json

import numpy as np
import pytest

from wdnfdi.dictlearn import Hyper
from wdnfdi.errors import ValidationError
from wdnfdi.fdi import SplitSpec, run_fdi, score

HYPER = Hyper(s0=1, iters_block=5, iters_full=5)


def toy(seed=0, n_classes=5, per=20):
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((8, n_classes))
    labels = np.tile(np.arange(n_classes), per)
    R = centers[:, labels] * rng.uniform(0.5, 2.0, labels.size) + 0.01 * rng.standard_normal((8, labels.size))
    return R, labels


def path_hops(n):
    idx = np.arange(n)
    return np.abs(np.subtract.outer(idx, idx)).astype(float)


def test_split_overlap_and_repeat():
    with pytest.raises(ValidationError, match="overlap"):
        SplitSpec([0, 1], [1, 2], [3])
    with pytest.raises(ValidationError, match="repeated"):
        SplitSpec([0, 0], [1], [2])


def test_split_from_tags_and_ratio():
    sp = SplitSpec.from_tags([0, 2, 1, 0, 2])
    assert sp.pretrain.tolist() == [0, 3] and sp.train.tolist() == [2] and sp.test.tolist() == [1, 4]
    labels = np.repeat(np.arange(4), 8)
    sp = SplitSpec.by_ratio(labels, seed=2)
    assert set(labels[sp.pretrain]) == set(range(4))
    assert sp.pretrain.size + sp.train.size + sp.test.size == labels.size
    assert SplitSpec.by_ratio(labels, seed=2).test.tolist() == sp.test.tolist()


def test_score_nesting_and_values():
    hops = path_hops(6)
    truth = np.array([0, 1, 2, 3, 4, 5])
    pred = np.array([0, 2, 4, 0, 4, 5])
    s = score(pred, truth, hops)
    assert s["S1"] == pytest.approx(50.0)
    assert s["S2"] == pytest.approx(100 * 4 / 6)
    assert s["S3"] == pytest.approx(100 * 5 / 6)
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = score(rng.integers(0, 6, 30), rng.integers(0, 6, 30), hops)
        assert s["S1"] <= s["S2"] <= s["S3"]


def test_score_communities():
    hops = path_hops(4)
    comm = np.array([1, 1, 2, 2])
    s = score([1, 2], [0, 3], hops, comm)
    assert s["S4"] == 100.0
    with pytest.raises(ValidationError, match="community"):
        score([1, 2], [0, 3], hops, np.array([1, 0, 2, 2]))
    with pytest.raises(ValidationError):
        score([1], [0, 1], hops)


def test_separable_toy_is_perfect():
    R, labels = toy()
    sp = SplitSpec(np.arange(0, 50), np.arange(50, 70), np.arange(70, 100))
    _, rep = run_fdi(R, labels, sp, 5, HYPER, hops=path_hops(5))
    assert rep.rates["S1"] == 100.0
    assert sum(v["n"] for v in rep.confusion.values()) == 30
    assert all(r["hops"] == 0 for r in rep.records)


def test_report_is_deterministic_without_timings():
    R, labels = toy(1)
    sp = SplitSpec.by_ratio(labels, seed=1)
    a = run_fdi(R, labels, sp, 5, HYPER, provenance={"method": "x", "sensors": 8})[1]
    b = run_fdi(R, labels, sp, 5, HYPER, provenance={"method": "x", "sensors": 8})[1]
    assert a.dumps() == b.dumps()
    rec = json.loads(a.dumps())
    assert "timings" not in json.dumps(rec) and rec["records"][0]["column"] >= 1
    assert "time pretrain" in a.table() and "S1" in a.table()


def test_unknown_test_class():
    R, labels = toy()
    labels = labels.copy()
    labels[-1] = 9
    sp = SplitSpec(np.arange(0, 50), np.arange(50, 70), np.arange(70, 100))
    with pytest.raises(ValidationError, match="unknown class"):
        run_fdi(R, labels, sp, 5, HYPER)
