"""Residual datasets and fault signature matrices.

A dataset stores one residual column per simulated leak scenario together
with its labels (leaking junction, magnitude index, profile index, split).
All indices are 0-based in memory and 1-based in files.
"""

from __future__ import annotations

import hashlib
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError, ParseError, ValidationError
from .hydraulics import ProfileBank, Solver, draw_noise, window_demands
from .network import Network

log = logging.getLogger(__name__)

SPLITS = ("pretrain", "train", "test")
EPS_DIV = 1e-9
MAGIC = "#wdnfdi-dataset 1"


def residual(nominal, measured, mode: str = "absolute") -> np.ndarray:
    nominal = np.asarray(nominal, float)
    measured = np.asarray(measured, float)
    if nominal.shape != measured.shape:
        raise ValidationError("nominal and measured heads differ in length")
    diff = measured - nominal
    if mode == "absolute":
        return diff
    if mode == "relative":
        small = np.flatnonzero(np.abs(nominal) <= EPS_DIV)
        if small.size:
            raise ValidationError(f"relative residual undefined: nominal head ~0 at node {small[0] + 1}")
        return diff / nominal
    raise ValueError(f"unknown residual mode {mode!r}")


# ---------------------------------------------------------------- scenario plans

@dataclass
class SplitPlan:
    """How to draw the scenarios of one split.

    ``kind``: ``grid`` (every node x magnitude x profile, grouped by node),
    ``per_node`` (``count`` random profile/magnitude draws per node) or
    ``random`` (``count`` random node/profile/magnitude triples).
    ``profiles`` / ``magnitudes`` restrict the allowed 0-based indices.
    """

    name: str
    kind: str = "grid"
    count: int = 0
    profiles: list[int] | None = None
    magnitudes: list[int] | None = None

    def __post_init__(self):
        if self.name not in SPLITS:
            raise ConfigError(f"unknown split {self.name!r}")
        if self.kind not in ("grid", "per_node", "random"):
            raise ConfigError(f"unknown split kind {self.kind!r}")
        if self.kind != "grid" and self.count < 1:
            raise ConfigError(f"split {self.name}: count must be >= 1")


@dataclass
class ScenarioPlan:
    seed: int
    magnitudes: list[float]
    window: list[int]
    splits: list[SplitPlan]
    mode: str = "absolute"
    nodes: list[int] | None = None
    node_noise: float | None = None  # per-node demand noise bound; None -> profile beta

    def enumerate(self, n_nodes: int, n_profiles: int) -> np.ndarray:
        """Scenario table (S x 4): node, magnitude idx, profile idx, split code."""
        nodes = list(range(n_nodes)) if self.nodes is None else list(self.nodes)
        rng = np.random.default_rng([self.seed, 0x5343454E])
        rows = []
        for plan in self.splits:
            profs = list(range(n_profiles)) if plan.profiles is None else plan.profiles
            mags = list(range(len(self.magnitudes))) if plan.magnitudes is None else plan.magnitudes
            if max(profs) >= n_profiles or max(mags) >= len(self.magnitudes):
                raise ConfigError(f"split {plan.name}: profile/magnitude index out of range")
            code = SPLITS.index(plan.name)
            if plan.kind == "grid":
                for v in nodes:
                    for p in profs:
                        for m in mags:
                            rows.append((v, m, p, code))
            elif plan.kind == "per_node":
                for v in nodes:
                    ps = rng.choice(profs, size=plan.count)
                    ms = rng.choice(mags, size=plan.count)
                    rows.extend((v, int(m), int(p), code) for p, m in zip(ps, ms))
            else:
                vs = rng.choice(nodes, size=plan.count)
                ps = rng.choice(profs, size=plan.count)
                ms = rng.choice(mags, size=plan.count)
                rows.extend((int(v), int(m), int(p), code) for v, p, m in zip(vs, ps, ms))
        return np.array(rows, dtype=np.int64).reshape(-1, 4)


# ---------------------------------------------------------------- residual matrix

@dataclass
class ResidualMatrix:
    R: np.ndarray  # N x D
    labels: np.ndarray  # D, 0-based junction
    magnitude_index: np.ndarray
    profile_index: np.ndarray
    split: np.ndarray  # D, codes into SPLITS
    mode: str = "absolute"
    seed: int = 0
    config_hash: str = ""
    nominal: np.ndarray | None = None
    dropped: list[tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return self.R.shape[0]

    @property
    def n_columns(self) -> int:
        return self.R.shape[1]

    def split_indices(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.split == SPLITS.index(name))

    def subset(self, cols) -> "ResidualMatrix":
        cols = np.asarray(cols)
        return ResidualMatrix(self.R[:, cols], self.labels[cols], self.magnitude_index[cols],
                              self.profile_index[cols], self.split[cols], self.mode, self.seed,
                              self.config_hash, self.nominal, list(self.dropped))

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.R, self.labels, self.magnitude_index, self.profile_index, self.split):
            h.update(np.ascontiguousarray(a).astype("<f8" if a.dtype.kind == "f" else "<i8").tobytes())
        return h.hexdigest()[:16]


def nominal_heads(net: Network, bank: ProfileBank, window, solver: Solver | None = None) -> np.ndarray:
    solver = solver or Solver(net)
    res = solver.solve_batch(window_demands(net, bank, 0, window))
    if not res.converged.all():
        raise NumericalError("nominal hydraulic solve did not converge")
    return res.heads.mean(axis=0)


def build_residual_matrix(net: Network, bank: ProfileBank, plan: ScenarioPlan,
                          solver: Solver | None = None, threads: int = 1,
                          chunk: int = 256, config_hash: str = "") -> ResidualMatrix:
    """Simulate every planned scenario and return the labelled residual matrix.

    Each scenario gets its own noise stream seeded by ``(seed, scenario id)``
    so chunking and threading do not change the result.
    """
    solver = solver or Solver(net)
    window = np.asarray(plan.window, dtype=np.int64)
    h_bar = nominal_heads(net, bank, window, solver)
    table = plan.enumerate(net.n_junctions, bank.n_profiles)
    S, K = len(table), len(window)
    mags = np.asarray(plan.magnitudes, float)
    beta = bank.beta_noise if plan.node_noise is None else plan.node_noise
    level = float(bank.scale(0, window).mean())

    def run(lo: int, hi: int):
        C = np.empty(((hi - lo) * K, net.n_junctions))
        for s in range(lo, hi):
            node, m, p, _ = table[s]
            noise = draw_noise(net, beta, np.random.default_rng([plan.seed, s]), level)
            C[(s - lo) * K:(s - lo + 1) * K] = window_demands(
                net, bank, int(p), window, noise, (int(node), mags[m]))
        res = solver.solve_batch(C)
        heads = res.heads.reshape(hi - lo, K, -1).mean(axis=1)
        ok = res.converged.reshape(hi - lo, K).all(axis=1)
        return heads, ok

    bounds = [(lo, min(lo + chunk, S)) for lo in range(0, S, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: run(*b), bounds))
    else:
        parts = [run(*b) for b in bounds]
    heads = np.concatenate([h for h, _ in parts]) if parts else np.empty((0, net.n_junctions))
    ok = np.concatenate([o for _, o in parts]) if parts else np.empty(0, bool)

    dropped = [tuple(int(v) for v in table[s]) for s in np.flatnonzero(~ok)]
    for d in dropped:
        log.warning("scenario node=%d mag=%d profile=%d dropped: solver did not converge",
                    d[0] + 1, d[1] + 1, d[2] + 1)
    keep = np.flatnonzero(ok)
    R = np.stack([residual(h_bar, heads[s], plan.mode) for s in keep], axis=1) if keep.size else (
        np.empty((net.n_junctions, 0)))
    return ResidualMatrix(R, table[keep, 0], table[keep, 1], table[keep, 2], table[keep, 3],
                          plan.mode, plan.seed, config_hash, h_bar, dropped)


# ---------------------------------------------------------------- signature matrices

@dataclass
class SignatureMatrix:
    M: np.ndarray  # nodes x faults, {0,1}
    tau: float
    policy: str


def binarize(R: np.ndarray, labels, tau: float = 3.0, policy: str = "any",
             n_faults: int | None = None) -> SignatureMatrix:
    """Node i detects fault j if any/all/most columns of class j reach ``|R| >= tau``."""
    if not tau > 0:
        raise ConfigError("tau must be positive")
    R = np.asarray(R, float)
    labels = np.asarray(labels)
    n_faults = R.shape[0] if n_faults is None else n_faults
    hit = np.abs(R) >= tau
    M = np.zeros((R.shape[0], n_faults), dtype=np.int8)
    for j in range(n_faults):
        cols = hit[:, labels == j]
        if cols.shape[1] == 0:
            continue
        if policy == "any":
            M[:, j] = cols.any(axis=1)
        elif policy == "all":
            M[:, j] = cols.all(axis=1)
        elif policy == "majority":
            M[:, j] = 2 * cols.sum(axis=1) > cols.shape[1]
        else:
            raise ValueError(f"unknown policy {policy!r}")
    return SignatureMatrix(M, tau, policy)


# ---------------------------------------------------------------- dataset files

def save_dataset(ds: ResidualMatrix, path, encoding: str = "text") -> None:
    Path(path).write_bytes(dumps_dataset(ds, encoding))


def dumps_dataset(ds: ResidualMatrix, encoding: str = "text") -> bytes:
    if encoding not in ("text", "binary"):
        raise ValueError(f"unknown encoding {encoding!r}")
    N, D = ds.R.shape
    head = [MAGIC, f"N {N}", f"D {D}", f"mode {ds.mode}", f"seed {ds.seed}",
            f"config_hash {ds.config_hash or '-'}", f"encoding {encoding}",
            f"dropped {len(ds.dropped)}"]
    head += ["drop " + " ".join(str(v + 1) for v in d[:3]) + f" {SPLITS[d[3]]}" for d in ds.dropped]
    nominal = ds.nominal if ds.nominal is not None else np.full(N, np.nan)
    if encoding == "text":
        head.append("nominal " + " ".join(repr(float(v)) for v in nominal))
        head.append("columns")
        for k in range(D):
            vals = " ".join(repr(float(v)) for v in ds.R[:, k])
            head.append(f"{ds.labels[k] + 1} {ds.magnitude_index[k] + 1} {ds.profile_index[k] + 1} "
                        f"{SPLITS[ds.split[k]]} {vals}")
        return ("\n".join(head) + "\n").encode()
    head.append("payload")
    buf = io.BytesIO()
    buf.write(("\n".join(head) + "\n").encode())
    buf.write(np.asarray(nominal, "<f8").tobytes())
    for a in (ds.labels, ds.magnitude_index, ds.profile_index, ds.split):
        buf.write(np.asarray(a, "<i4").tobytes())
    buf.write(np.ascontiguousarray(ds.R.T, "<f8").tobytes())
    return buf.getvalue()


def load_dataset(path) -> ResidualMatrix:
    data = Path(path).read_bytes()
    return loads_dataset(data)


def loads_dataset(data: bytes) -> ResidualMatrix:
    pos = 0
    lineno = 0

    def readline():
        nonlocal pos, lineno
        end = data.find(b"\n", pos)
        if end < 0:
            raise ParseError(f"line {lineno + 1}: unexpected end of dataset file")
        line = data[pos:end].decode()
        pos = end + 1
        lineno += 1
        return line

    def field_(key):
        line = readline()
        tok = line.split(" ", 1)
        if tok[0] != key or len(tok) != 2:
            raise ParseError(f"line {lineno}: expected '{key} ...', got {line[:40]!r}")
        return tok[1]

    if readline() != MAGIC:
        raise ParseError("line 1: not a wdnfdi dataset file")
    try:
        N, D = int(field_("N")), int(field_("D"))
        mode, seed = field_("mode"), int(field_("seed"))
        config_hash = field_("config_hash")
        encoding = field_("encoding")
        dropped = []
        for _ in range(int(field_("dropped"))):
            tok = field_("drop").split()
            dropped.append((int(tok[0]) - 1, int(tok[1]) - 1, int(tok[2]) - 1, SPLITS.index(tok[3])))
    except ValueError as exc:
        raise ParseError(f"line {lineno}: {exc}") from None
    config_hash = "" if config_hash == "-" else config_hash
    if encoding == "text":
        nominal = np.array([float(v) for v in field_("nominal").split()])
        if readline() != "columns":
            raise ParseError(f"line {lineno}: expected 'columns'")
        R = np.empty((N, D))
        meta = np.empty((4, D), dtype=np.int64)
        for k in range(D):
            tok = readline().split()
            if len(tok) != N + 4:
                raise ParseError(f"line {lineno}: expected {N + 4} fields, got {len(tok)}")
            try:
                meta[:, k] = [int(tok[0]) - 1, int(tok[1]) - 1, int(tok[2]) - 1, SPLITS.index(tok[3])]
                R[:, k] = [float(v) for v in tok[4:]]
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
    elif encoding == "binary":
        if readline() != "payload":
            raise ParseError(f"line {lineno}: expected 'payload'")
        need = 8 * N + 4 * 4 * D + 8 * N * D
        if len(data) - pos != need:
            raise ParseError(f"binary payload has {len(data) - pos} bytes, expected {need}")
        nominal = np.frombuffer(data, "<f8", N, pos).astype(float)
        pos += 8 * N
        meta = np.frombuffer(data, "<i4", 4 * D, pos).reshape(4, D).astype(np.int64)
        pos += 16 * D
        R = np.frombuffer(data, "<f8", N * D, pos).reshape(D, N).T.astype(float)
    else:
        raise ParseError(f"unknown encoding {encoding!r}")
    if np.all(np.isnan(nominal)):
        nominal = None
    return ResidualMatrix(R, meta[0], meta[1], meta[2], meta[3], mode, seed, config_hash,
                          nominal, dropped)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]

