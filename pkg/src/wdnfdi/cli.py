"""Command line entry point: ``wdnfdi generate | place | train-eval | report``.

Exit codes: 0 success, 2 invalid input or config, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from . import __version__
from .config import PRESETS, load_config
from .dictlearn import dumps_model
from .errors import ConfigError, WdnError
from .network import dumps_native, parse_network
from .pipeline import (METHODS, build_dataset, build_network, digest_text, dumps_selection,
                       load_communities, loads_selection, place, train_eval, trend_summary)
from .residuals import SPLITS, dumps_dataset, load_dataset

log = logging.getLogger("wdnfdi")

EXIT_IO = 4


@contextmanager
def stage(name: str):
    """Prefix library errors with the pipeline stage they came from."""
    try:
        yield
    except WdnError as exc:
        err = type(exc)(f"{name}: {exc}")
        raise err from exc


def _write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        path.write_text(data)
    else:
        path.write_bytes(data)


def _config(args):
    spec = args.config
    if args.preset:
        if spec:
            raise ConfigError("give either --config or --preset, not both")
        spec = f"preset:{args.preset}"
    return load_config(spec, seed=args.seed)


def _network_for(args, dataset: Path):
    path = Path(args.network) if args.network else dataset.parent / "network.net"
    return parse_network(path, format="inp" if path.suffix.lower() == ".inp" else "native")


def parse_range(text: str) -> list[int]:
    """``"5-10"`` or ``"5,8,12"`` -> sorted sensor counts."""
    out = set()
    try:
        for part in text.split(","):
            if "-" in part:
                a, b = (int(v) for v in part.split("-"))
                out.update(range(a, b + 1))
            elif part.strip():
                out.add(int(part))
    except ValueError:
        raise ConfigError(f"bad sensor range {text!r}") from None
    if not out or min(out) < 1:
        raise ConfigError(f"bad sensor range {text!r}")
    return sorted(out)


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    with stage("network"):
        net = build_network(cfg)
    t0 = time.perf_counter()
    with stage("dataset"):
        ds = build_dataset(cfg, net, threads=args.threads)
    elapsed = time.perf_counter() - t0
    net_text = dumps_native(net)
    data = dumps_dataset(ds, args.format)
    _write(out / "network.net", net_text)
    _write(out / "dataset.wds", data)
    counts = {name: int(ds.split_indices(name).size) for name in SPLITS}
    meta = {
        "seed": cfg.scenario.seed,
        "config_hash": cfg.digest(),
        "network": {"file": "network.net", "sha256": digest_text(net_text),
                    "junctions": net.n_junctions, "pipes": net.n_pipes},
        "dataset": {"file": "dataset.wds", "sha256": digest_text(data), "digest": ds.digest(),
                    "encoding": args.format, "columns": counts, "dropped": len(ds.dropped)},
    }
    _write(out / "generate.json", json.dumps(meta, sort_keys=True, indent=1) + "\n")
    print(f"network  {out / 'network.net'}  ({net.n_junctions} junctions, {net.n_pipes} pipes)")
    print(f"dataset  {out / 'dataset.wds'}  "
          + " / ".join(f"{k} {v}" for k, v in counts.items())
          + f"  dropped {len(ds.dropped)}  [{elapsed:.1f} s]")
    return 0


def cmd_place(args) -> int:
    cfg = _config(args)
    pc = cfg.placement
    dataset = Path(args.dataset)
    with stage("load"):
        ds = load_dataset(dataset)
        net = _network_for(args, dataset)
    method = args.method or pc.method
    s = args.sensors or pc.sensors
    lam = pc.lam if args.lam is None else args.lam
    tau = pc.tau if args.tau is None else args.tau
    with stage("placement"):
        sel = place(ds, net, method, s, lam=lam, tau=tau, policy=args.policy or pc.policy,
                    weight=args.weight or pc.weight,
                    mtc_semantics=args.mtc_semantics or pc.mtc_semantics)
    prov = {"dataset": ds.digest(), "config_hash": ds.config_hash}
    text = dumps_selection(sel, prov)
    if args.out:
        _write(Path(args.out), text)
    ids = [net.junctions[i].id for i in sel.indices]
    print(f"{method} s={s}: sensors " + " ".join(str(i + 1) for i in sel.indices)
          + f"  (node ids {' '.join(ids)})")
    if sel.uncovered:
        print(f"  {len(sel.uncovered)} fault(s) not covered")
    return 0


def cmd_train_eval(args) -> int:
    cfg = _config(args)
    dataset = Path(args.dataset)
    with stage("load"):
        ds = load_dataset(dataset)
        net = _network_for(args, dataset)
        sel, sel_params = loads_selection(Path(args.selection).read_text())
        comm = load_communities(args.communities, net) if args.communities else None
    if args.sweep:
        counts = parse_range(args.sweep)
    else:
        counts = [args.sensors or len(sel.indices)]
    out = Path(args.out)
    results = []
    for s in counts:
        with stage(f"train-eval s={s}"):
            res = train_eval(ds, net, sel, cfg.hyper, s, comm,
                             {"selection_file": digest_text(Path(args.selection).read_text())})
        stem = f"report-{sel.method}-s{s}"
        _write(out / f"{stem}.json", res.report.dumps())
        _write(out / f"timing-{sel.method}-s{s}.json",
               json.dumps(res.report.timings, sort_keys=True, indent=1) + "\n")
        _write(out / f"model-{sel.method}-s{s}.dlm", dumps_model(res.model))
        sys.stdout.write(res.report.table())
        results.append(res)
    if len(results) > 1:
        print(trend_summary(results))
    return 0


def _load_report(path: Path) -> dict:
    try:
        rec = json.loads(path.read_text())
        summ = rec["summary"]
        return {"file": str(path), "rates": summ["rates"], "prov": summ["provenance"]}
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a report file ({exc})") from None


def cmd_report(args) -> int:
    reports = [_load_report(Path(p)) for p in args.reports]
    ref = reports[0]["prov"].get("dataset")
    rows = []
    for r in reports:
        prov = r["prov"]
        flag = "" if prov.get("dataset") == ref else "!"
        if flag:
            log.warning("%s: dataset %s differs from %s; merged with a flag",
                        r["file"], prov.get("dataset"), ref)
        rows.append((prov.get("method", "?"), int(prov.get("sensors", 0)),
                     [r["rates"].get(k) for k in ("S1", "S2", "S3", "S4")], flag))
    rows.sort(key=lambda t: (t[0], t[1]))

    def fmt(v):
        return "-" if v is None else f"{v:.2f}"

    lines = [f"{'method':<10} {'s':>3} {'S1':>7} {'S2':>7} {'S3':>7} {'S4':>7}"]
    for method, s, vals, flag in rows:
        lines.append(f"{method:<10} {s:>3} " + " ".join(f"{fmt(v):>7}" for v in vals) + f" {flag}".rstrip())
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out:
        _write(Path(args.out), table)
    if args.series:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "sensors", "S1", "S2", "S3", "S4", "dataset_mismatch"])
        for method, s, vals, flag in rows:
            w.writerow([method, s, *("" if v is None else repr(v) for v in vals), int(bool(flag))])
        _write(Path(args.series), buf.getvalue())
    return 0


# ---------------------------------------------------------------- parser

def _global_options(parser, suppress: bool) -> None:
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    g = parser.add_argument_group("global options")
    g.add_argument("--config", metavar="FILE", help="pipeline config file", **kw)
    g.add_argument("--preset", choices=PRESETS, help="bundled config preset", **kw)
    g.add_argument("--seed", type=int, help="override the master seed", **kw)
    g.add_argument("--threads", type=int, metavar="N", help="worker threads for simulation", **kw)
    g.add_argument("--format", choices=("text", "binary"), help="dataset encoding", **kw)
    g.add_argument("-v", "--verbose", action="count", help="more logging", **kw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wdnfdi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(p, suppress=False)
    p.set_defaults(config=None, preset=None, seed=None, threads=1, format="text", verbose=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build the network and the residual dataset")
    _global_options(g, suppress=True)
    g.add_argument("--out", default="run", metavar="DIR", help="output directory [run]")
    g.set_defaults(func=cmd_generate)

    pl = sub.add_parser("place", help="select sensor nodes from a dataset")
    _global_options(pl, suppress=True)
    pl.add_argument("--dataset", required=True)
    pl.add_argument("--network", help="network file [dataset dir/network.net]")
    pl.add_argument("--method", choices=METHODS)
    pl.add_argument("-s", "--sensors", type=int)
    pl.add_argument("--lambda", dest="lam", type=float, help="graph-gs distance penalty")
    pl.add_argument("--tau", type=float, help="signature threshold (m)")
    pl.add_argument("--policy", choices=("any", "all", "majority"))
    pl.add_argument("--weight", choices=("length", "unit"), help="graph distance weights")
    pl.add_argument("--mtc-semantics", choices=("xor", "product"))
    pl.add_argument("--out", metavar="FILE", help="selection file to write")
    pl.set_defaults(func=cmd_place)

    te = sub.add_parser("train-eval", help="pre-train, run online training and test")
    _global_options(te, suppress=True)
    te.add_argument("--dataset", required=True)
    te.add_argument("--network")
    te.add_argument("--selection", required=True)
    te.add_argument("-s", "--sensors", type=int, help="use the first N selected sensors")
    te.add_argument("--sweep", metavar="RANGE", help="sensor counts, e.g. 5-10")
    te.add_argument("--communities", metavar="FILE", help="node -> community map (enables S4)")
    te.add_argument("--out", default="run", metavar="DIR")
    te.set_defaults(func=cmd_train_eval)

    rp = sub.add_parser("report", help="merge report files into a table and data series")
    _global_options(rp, suppress=True)
    rp.add_argument("reports", nargs="+")
    rp.add_argument("--out", metavar="FILE", help="write the table here too")
    rp.add_argument("--series", metavar="FILE", help="CSV series for plotting")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose or 0, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WdnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
