"""Pipeline configuration: INI-style ``key = value`` files with one section per stage.

Recognised sections (all optional, defaults in brackets)::

    [network]    source = hanoi | generate | file, path, format = native | inp
    [netgen]     n_junctions, n_pipes, seed, length_min/max, diameters, ...
    [profiles]   count [10], beta_noise [0.025], samples_per_day [96], seed
    [scenario]   seed, magnitudes, window [13-19], mode [absolute], node_noise
    [split.pretrain] / [split.train] / [split.test]
                 kind = grid | per_node | random, count, profiles, magnitudes
    [placement]  method [graph-gs], sensors [5], lambda [0], tau [3], policy [any],
                 weight [length], mtc_semantics [xor]
    [dictlearn]  alpha, beta, lam_init, lam_schedule, atoms_per_class, shared_atoms,
                 s0, iters_block, iters_full, renorm_every, rls_ridge
    [fdi]        communities (path)

Index lists (profiles, magnitudes, window) are 1-based in the file and use
``a-b`` ranges, ``a-b:step`` strides or comma lists; ``all`` means no restriction.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dictlearn import Hyper
from .errors import ConfigError
from .netgen import GenSpec
from .residuals import SPLITS, ScenarioPlan, SplitPlan

PRESETS = ("demo", "hanoi", "large", "medium")


def parse_index_list(text: str) -> list[int] | None:
    """``"1-5, 8, 10-20:2"`` -> 0-based sorted unique indices; ``all`` -> None."""
    text = text.strip()
    if text.lower() == "all":
        return None
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            step = 1
            if ":" in part:
                part, st = part.split(":")
                step = int(st)
            if "-" in part:
                a, b = (int(v) for v in part.split("-"))
                out.extend(range(a, b + 1, step))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"bad index list {text!r}") from None
    if not out or min(out) < 1:
        raise ConfigError(f"index list {text!r} must name indices >= 1")
    return sorted({v - 1 for v in out})


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


@dataclass
class PlacementConfig:
    method: str = "graph-gs"
    sensors: int = 5
    lam: float = 0.0
    tau: float = 3.0
    policy: str = "any"
    weight: str = "length"
    mtc_semantics: str = "xor"


@dataclass
class PipelineConfig:
    network_source: str = "hanoi"
    network_path: str | None = None
    network_format: str = "native"
    netgen: GenSpec | None = None
    n_profiles: int = 10
    beta_noise: float = 0.025
    samples_per_day: int = 96
    profile_seed: int = 1
    scenario: ScenarioPlan = None
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    hyper: Hyper = field(default_factory=Hyper)
    communities: str | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    def digest(self) -> str:
        """Stable hash of every setting that affects outputs."""
        doc = {
            "network": [self.network_source, self.network_path, self.network_format],
            "netgen": None if self.netgen is None else vars(self.netgen),
            "profiles": [self.n_profiles, self.beta_noise, self.samples_per_day, self.profile_seed],
            "scenario": {**vars(self.scenario), "splits": [vars(s) for s in self.scenario.splits]},
            "placement": vars(self.placement),
            "hyper": vars(self.hyper),
        }
        blob = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("wdnfdi.presets").joinpath(f"{name}.ini").read_text()


def load_config(path_or_preset: str | None = None, seed: int | None = None) -> PipelineConfig:
    """Load a config file, or a bundled preset via ``preset:<name>`` (default: hanoi)."""
    spec = path_or_preset or "preset:hanoi"
    if spec.startswith("preset:"):
        return parse_config(preset_text(spec.split(":", 1)[1]), seed=seed)
    path = Path(spec)
    text = path.read_text()
    return parse_config(text, seed=seed, base_dir=path.parent)


def parse_config(text: str, seed: int | None = None, base_dir: Path | None = None) -> PipelineConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    known = {"network", "netgen", "profiles", "scenario", "placement", "dictlearn", "fdi"}
    known |= {f"split.{s}" for s in SPLITS}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    cfg = PipelineConfig(base_dir=base_dir or Path.cwd())
    try:
        _fill(cfg, cp, seed)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config: {exc}") from None
    return cfg


def _fill(cfg: PipelineConfig, cp: configparser.ConfigParser, seed: int | None) -> None:
    sec = cp["network"] if cp.has_section("network") else {}
    cfg.network_source = sec.get("source", "hanoi")
    cfg.network_path = sec.get("path")
    cfg.network_format = sec.get("format", "native")
    if cfg.network_source not in ("hanoi", "generate", "file"):
        raise ConfigError(f"unknown network source {cfg.network_source!r}")

    if cp.has_section("netgen"):
        g = cp["netgen"]
        kw = dict(n_junctions=g.getint("n_junctions"), n_pipes=g.getint("n_pipes"),
                  seed=g.getint("seed", 1))
        if "length_min" in g or "length_max" in g:
            kw["length_range"] = (g.getfloat("length_min", 100.0), g.getfloat("length_max", 1000.0))
        if "diameters" in g:
            kw["diameters"] = tuple(_floats(g["diameters"]))
        if "roughness_min" in g:
            kw["roughness_range"] = (g.getfloat("roughness_min"), g.getfloat("roughness_max"))
        if "demand_min" in g:
            kw["demand_range"] = (g.getfloat("demand_min"), g.getfloat("demand_max"))
        if "elevation_min" in g:
            kw["elevation_range"] = (g.getfloat("elevation_min"), g.getfloat("elevation_max"))
        for key in ("tank_head", "max_velocity"):
            if key in g:
                kw[key] = g.getfloat(key)
        cfg.netgen = GenSpec(**kw)
    elif cfg.network_source == "generate":
        raise ConfigError("network source 'generate' needs a [netgen] section")

    master = None
    if cp.has_section("scenario"):
        master = cp["scenario"].getint("seed", None)
    if seed is not None:
        master = seed
    master = 1 if master is None else master

    p = cp["profiles"] if cp.has_section("profiles") else {}
    cfg.n_profiles = int(p.get("count", 10))
    cfg.beta_noise = float(p.get("beta_noise", 0.025))
    cfg.samples_per_day = int(p.get("samples_per_day", 96))
    cfg.profile_seed = int(p.get("seed", master))
    if seed is not None:
        cfg.profile_seed = seed

    s = cp["scenario"] if cp.has_section("scenario") else {}
    if "magnitudes" not in s:
        raise ConfigError("[scenario] needs 'magnitudes'")
    mags = _floats(s["magnitudes"])
    window = parse_index_list(s.get("window", "13-19"))
    # window samples are listed 1-based like every other index in the file
    node_noise = s.get("node_noise")
    splits = []
    for name in SPLITS:
        key = f"split.{name}"
        if not cp.has_section(key):
            continue
        sp = cp[key]
        splits.append(SplitPlan(
            name, sp.get("kind", "grid"), sp.getint("count", 0),
            parse_index_list(sp.get("profiles", "all")),
            parse_index_list(sp.get("magnitudes", "all")),
        ))
    if not splits:
        splits = [SplitPlan("pretrain", "grid")]
    cfg.scenario = ScenarioPlan(master, mags, window, splits, s.get("mode", "absolute"),
                                None, None if node_noise is None else float(node_noise))
    if cfg.scenario.mode not in ("absolute", "relative"):
        raise ConfigError(f"unknown residual mode {cfg.scenario.mode!r}")

    if cp.has_section("placement"):
        pl = cp["placement"]
        cfg.placement = PlacementConfig(
            pl.get("method", "graph-gs"), pl.getint("sensors", 5), pl.getfloat("lambda", 0.0),
            pl.getfloat("tau", 3.0), pl.get("policy", "any"), pl.get("weight", "length"),
            pl.get("mtc_semantics", "xor"))

    hp = Hyper(seed=master)
    if cp.has_section("dictlearn"):
        d = cp["dictlearn"]
        for name, typ in (("alpha", float), ("beta", float), ("lam_init", float),
                          ("lam_schedule", str), ("atoms_per_class", int), ("shared_atoms", int),
                          ("s0", int), ("iters_block", int), ("iters_full", int),
                          ("renorm_every", int), ("rls_ridge", float)):
            if name in d:
                setattr(hp, name, typ(d[name]))
    cfg.hyper = hp
    if cp.has_section("fdi"):
        cfg.communities = cp["fdi"].get("communities")
