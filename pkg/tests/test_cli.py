import csv
import json

import pytest

from wdnfdi.cli import main, parse_range
from wdnfdi.errors import ConfigError

FILES = ("network.net", "dataset.wds", "selection.txt", "report-graph-gs-s4.json", "model-graph-gs-s4.dlm")


def run_demo(root, fmt="text"):
    assert main(["generate", "--preset", "demo", "--format", fmt, "--out", str(root)]) == 0
    assert main(["place", "--preset", "demo", "--dataset", str(root / "dataset.wds"),
                 "--out", str(root / "selection.txt")]) == 0
    assert main(["train-eval", "--preset", "demo", "--dataset", str(root / "dataset.wds"),
                 "--selection", str(root / "selection.txt"), "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    return run_demo(tmp_path_factory.mktemp("demo"))


def test_demo_outputs(demo):
    for name in FILES + ("generate.json", "timing-graph-gs-s4.json"):
        assert (demo / name).is_file()
    meta = json.loads((demo / "generate.json").read_text())
    assert meta["network"]["junctions"] == 10 and meta["dataset"]["columns"]["test"] == 100
    rep = json.loads((demo / "report-graph-gs-s4.json").read_text())
    assert rep["summary"]["provenance"]["sensors"] == 4
    assert rep["summary"]["provenance"]["config_hash"] == meta["config_hash"]
    assert 0 <= rep["summary"]["rates"]["S1"] <= 100
    assert (demo / "selection.txt").read_text().startswith("#wdnfdi-selection 1")


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_demo_rerun_is_byte_identical(demo, tmp_path, fmt):
    other = run_demo(tmp_path, fmt)
    ref = demo if fmt == "text" else run_demo(tmp_path / "again", fmt)
    for name in FILES:
        assert (other / name).read_bytes() == (ref / name).read_bytes(), name


def test_threads_do_not_change_dataset(demo, tmp_path):
    assert main(["generate", "--preset", "demo", "--threads", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "dataset.wds").read_bytes() == (demo / "dataset.wds").read_bytes()


def test_sweep_and_report(demo, tmp_path, capsys):
    assert main(["train-eval", "--preset", "demo", "--dataset", str(demo / "dataset.wds"),
                 "--selection", str(demo / "selection.txt"), "--sweep", "2-3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "S1" in out and "s=2" in out
    reports = sorted(str(p) for p in tmp_path.glob("report-*.json"))
    assert len(reports) == 2
    series = tmp_path / "series.csv"
    assert main(["report", *reports, "--series", str(series)]) == 0
    rows = list(csv.DictReader(series.open()))
    assert [r["sensors"] for r in rows] == ["2", "3"]
    assert all(r["dataset_mismatch"] == "0" for r in rows)


def test_report_flags_dataset_mismatch(demo, tmp_path, capsys, caplog):
    rec = json.loads((demo / "report-graph-gs-s4.json").read_text())
    rec["summary"]["provenance"]["dataset"] = "other"
    rec["summary"]["provenance"]["sensors"] = 9
    alien = tmp_path / "report-x.json"
    alien.write_text(json.dumps(rec))
    assert main(["report", str(demo / "report-graph-gs-s4.json"), str(alien)]) == 0
    captured = capsys.readouterr()
    assert captured.out.splitlines()[-1].endswith("!")
    assert "differs" in caplog.text


def test_exit_codes(demo, tmp_path, capsys):
    ds = str(demo / "dataset.wds")
    assert main(["place", "--preset", "demo", "--dataset", str(tmp_path / "none.wds")]) == 4
    assert main(["place", "--preset", "demo", "--dataset", ds, "-s", "99"]) == 2
    assert main(["generate", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path)]) == 4
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nmagnitudes = 0.1\n[oops]\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["report", str(bad)]) == 2
    (tmp_path / "junk.wds").write_text("nonsense\n")
    assert main(["place", "--preset", "demo", "--dataset", str(tmp_path / "junk.wds"),
                 "--network", str(demo / "network.net")]) == 2
    err = capsys.readouterr().err
    assert "load:" in err and "placement:" in err


def test_parse_range():
    assert parse_range("5-7,9") == [5, 6, 7, 9]
    with pytest.raises(ConfigError):
        parse_range("0-2")


def test_inp_network_and_missing_network(demo, tmp_path):
    from wdnfdi.network import parse_network
    net = parse_network(demo / "network.net")
    lines = ["[JUNCTIONS]"] + [f"{j.id} {j.elevation} {j.base_demand!r}" for j in net.junctions]
    lines += ["[RESERVOIRS]"] + [f"{t.id} {t.head}" for t in net.tanks]
    lines += ["[PIPES]"] + [f"{p.id} {p.start} {p.end} {p.length} {p.diameter * 1000} {p.roughness}"
                            for p in net.pipes]
    inp = tmp_path / "net.inp"
    inp.write_text("\n".join(lines) + "\n")
    args = ["place", "--preset", "demo", "--dataset", str(demo / "dataset.wds"), "--network"]
    assert main(args + [str(inp)]) == 0
    assert main(args + [str(tmp_path / "absent.net")]) == 4
