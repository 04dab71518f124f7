"""End-to-end stages shared by the command line and the acceptance harness.

Each stage takes the outputs of the previous one plus a ``PipelineConfig``
and is deterministic for a fixed config and seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .dictlearn import Hyper
from .errors import ConfigError, ParseError, ValidationError
from .fdi import FDIReport, SplitSpec, run_fdi
from .hydraulics import ProfileBank
from .netgen import generate_network, generate_profiles, hanoi_network
from .network import Network, hop_distances, parse_communities, parse_network, shortest_paths
from .placement import SensorSelection, graph_gs_place, greedy_cover, mtc_matrix
from .residuals import ResidualMatrix, binarize, build_residual_matrix

SELECTION_MAGIC = "#wdnfdi-selection 1"
METHODS = ("graph-gs", "msc", "mtc")


def _resolve(cfg: PipelineConfig, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else cfg.base_dir / p


def build_network(cfg: PipelineConfig) -> Network:
    if cfg.network_source == "hanoi":
        return hanoi_network()
    if cfg.network_source == "generate":
        return generate_network(cfg.netgen)
    if not cfg.network_path:
        raise ConfigError("network source 'file' needs a 'path'")
    return parse_network(_resolve(cfg, cfg.network_path), format=cfg.network_format)


def build_profiles(cfg: PipelineConfig) -> ProfileBank:
    return generate_profiles(cfg.n_profiles, cfg.beta_noise, cfg.profile_seed,
                             samples_per_day=cfg.samples_per_day)


def build_dataset(cfg: PipelineConfig, net: Network, threads: int = 1) -> ResidualMatrix:
    return build_residual_matrix(net, build_profiles(cfg), cfg.scenario, threads=threads,
                                 config_hash=cfg.digest())


def _placement_columns(ds: ResidualMatrix) -> np.ndarray:
    cols = ds.split_indices("pretrain")
    return cols if cols.size else np.arange(ds.n_columns)


def place(ds: ResidualMatrix, net: Network, method: str, sensors: int, lam: float = 0.0,
          tau: float = 3.0, policy: str = "any", weight: str = "length",
          mtc_semantics: str = "xor") -> SensorSelection:
    """Select sensors from the pre-train residuals (all columns if there are none)."""
    if ds.n_nodes != net.n_junctions:
        raise ValidationError(f"dataset has {ds.n_nodes} nodes, network has {net.n_junctions}")
    cols = _placement_columns(ds)
    R, labels = ds.R[:, cols], ds.labels[cols]
    if method == "graph-gs":
        sel = graph_gs_place(R, shortest_paths(net, weight=weight), sensors, lam)
        sel.params["weight"] = weight
    elif method in ("msc", "mtc"):
        M = binarize(R, labels, tau, policy, n_faults=ds.n_nodes).M
        if method == "mtc":
            M = mtc_matrix(M, mtc_semantics)
        sel = greedy_cover(M, sensors)
        sel.method = method
        sel.params.update(tau=tau, policy=policy)
        if method == "mtc":
            sel.params["semantics"] = mtc_semantics
    else:
        raise ConfigError(f"unknown placement method {method!r}; choose from {', '.join(METHODS)}")
    return sel


# ---------------------------------------------------------------- selection files

def dumps_selection(sel: SensorSelection, provenance: dict | None = None) -> str:
    lines = [SELECTION_MAGIC, f"method {sel.method}"]
    for k, v in sorted({**sel.params, **(provenance or {})}.items()):
        lines.append(f"param {k} {json.dumps(v)}")
    lines.append("uncovered " + " ".join(str(i + 1) for i in sel.uncovered))
    lines.append("sensors " + " ".join(str(i + 1) for i in sel.indices))
    return "\n".join(lines) + "\n"


def loads_selection(text: str) -> tuple[SensorSelection, dict]:
    lines = text.splitlines()
    if not lines or lines[0] != SELECTION_MAGIC:
        raise ParseError("line 1: not a wdnfdi selection file")
    method, params, uncovered, sensors = None, {}, [], None
    for no, line in enumerate(lines[1:], start=2):
        key, _, rest = line.partition(" ")
        try:
            if key == "method":
                method = rest
            elif key == "param":
                name, _, val = rest.partition(" ")
                params[name] = json.loads(val)
            elif key == "uncovered":
                uncovered = [int(v) - 1 for v in rest.split()]
            elif key == "sensors":
                sensors = [int(v) - 1 for v in rest.split()]
            elif line.strip():
                raise ParseError(f"line {no}: unknown key {key!r}")
        except ValueError as exc:
            raise ParseError(f"line {no}: {exc}") from None
    if method is None or sensors is None:
        raise ParseError("selection file lacks 'method' or 'sensors'")
    if any(i < 0 for i in sensors):
        raise ParseError("sensor indices are 1-based")
    return SensorSelection(sensors, method, params, uncovered), params


# ---------------------------------------------------------------- train / evaluate

@dataclass
class EvalResult:
    sensors: int
    report: FDIReport
    model: object


def train_eval(ds: ResidualMatrix, net: Network, sel: SensorSelection, hyper: Hyper,
               sensors: int | None = None, communities=None, provenance: dict | None = None
               ) -> EvalResult:
    """Run the online FDI loop on the first ``sensors`` selected nodes."""
    s = len(sel.indices) if sensors is None else sensors
    if not 1 <= s <= len(sel.indices):
        raise ConfigError(f"selection holds {len(sel.indices)} sensors, {s} requested")
    if max(sel.indices) >= ds.n_nodes:
        raise ValidationError("selection names a node outside the dataset")
    rows = sel.indices[:s]
    split = SplitSpec.from_tags(ds.split)
    if split.test.size == 0:
        raise ValidationError("dataset has no test columns")
    prov = {
        "method": sel.method,
        "sensors": s,
        "selection": [i + 1 for i in rows],
        "dataset": ds.digest(),
        "config_hash": ds.config_hash,
        "hyper": vars(hyper),
        **(provenance or {}),
    }
    model, report = run_fdi(ds.R[rows], ds.labels, split, ds.n_nodes, hyper,
                            hop_distances(net), communities, prov)
    return EvalResult(s, report, model)


def load_communities(path, net: Network):
    return parse_communities(path, net)


def trend_summary(results: list[EvalResult], key: str = "S1") -> str:
    """One-line verdict on whether ``key`` is nondecreasing in the sensor count."""
    vals = [(r.sensors, r.report.rates[key]) for r in sorted(results, key=lambda r: r.sensors)]
    drops = [(a, b) for (a, va), (b, vb) in zip(vals, vals[1:]) if vb < va]
    series = ", ".join(f"s={s}: {v:.2f}" for s, v in vals)
    verdict = "nondecreasing" if not drops else "drops at " + ", ".join(f"{a}->{b}" for a, b in drops)
    return f"{key} trend {verdict} ({series})"


def digest_text(text: str | bytes) -> str:
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()[:16]
