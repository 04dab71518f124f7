"""Water network data model, file ingestion and graph algorithms.

Nodes are split into junctions (indexed 1..N in file order) and tanks
(fixed-head nodes, indexed 1..n_tanks). Internally everything is 0-based;
the 1-based indices only appear at the file / CLI boundary.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

UNREACHABLE = np.inf


@dataclass(frozen=True)
class Junction:
    id: str
    elevation: float
    base_demand: float


@dataclass(frozen=True)
class Tank:
    id: str
    head: float


@dataclass(frozen=True)
class Pipe:
    id: str
    start: str
    end: str
    length: float
    diameter: float
    roughness: float


@dataclass(frozen=True)
class Network:
    junctions: tuple[Junction, ...]
    tanks: tuple[Tank, ...]
    pipes: tuple[Pipe, ...]
    name: str = "network"
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for k, j in enumerate(self.junctions):
            index[j.id] = ("J", k)
        for k, t in enumerate(self.tanks):
            if t.id in index:
                raise ValidationError(f"duplicate node id {t.id!r}")
            index[t.id] = ("T", k)
        if len(index) != len(self.junctions) + len(self.tanks):
            raise ValidationError("duplicate junction ids")
        object.__setattr__(self, "_index", index)
        validate(self)

    @property
    def n_junctions(self) -> int:
        return len(self.junctions)

    @property
    def n_tanks(self) -> int:
        return len(self.tanks)

    @property
    def n_pipes(self) -> int:
        return len(self.pipes)

    def node(self, node_id: str) -> tuple[str, int]:
        """Return ``("J", k)`` or ``("T", k)`` for a node id (0-based k)."""
        try:
            return self._index[node_id]
        except KeyError:
            raise ValidationError(f"unknown node {node_id!r}") from None

    def junction_index(self, node_id: str) -> int:
        kind, k = self.node(node_id)
        if kind != "J":
            raise ValidationError(f"node {node_id!r} is a tank, not a junction")
        return k

    @property
    def base_demands(self) -> np.ndarray:
        return np.array([j.base_demand for j in self.junctions], dtype=float)

    @property
    def tank_heads(self) -> np.ndarray:
        return np.array([t.head for t in self.tanks], dtype=float)

    def pipe_arrays(self):
        """Lengths, diameters and roughness as float arrays (pipe order)."""
        L = np.array([p.length for p in self.pipes], dtype=float)
        D = np.array([p.diameter for p in self.pipes], dtype=float)
        C = np.array([p.roughness for p in self.pipes], dtype=float)
        return L, D, C

    def _graph_index(self, node_id: str) -> int:
        # junctions first, tanks after: 0..N-1, N..N+T-1
        kind, k = self._index[node_id]
        return k if kind == "J" else self.n_junctions + k

    def edges(self) -> np.ndarray:
        """(n_pipes, 2) array of graph node indices, tanks offset by N."""
        return np.array(
            [[self._graph_index(p.start), self._graph_index(p.end)] for p in self.pipes],
            dtype=np.int64,
        ).reshape(-1, 2)


def validate(net: Network) -> None:
    if not net.tanks:
        raise ValidationError("network has no tank")
    for p in net.pipes:
        for end in (p.start, p.end):
            if end not in net._index:
                raise ValidationError(f"pipe {p.id!r} references unknown node {end!r}")
        if p.start == p.end:
            raise ValidationError(f"pipe {p.id!r} is a self-loop")
        if not (p.length > 0 and p.diameter > 0 and p.roughness > 0):
            raise ValidationError(f"pipe {p.id!r} needs positive length, diameter and roughness")
    n = net.n_junctions + net.n_tanks
    seen = np.zeros(n, dtype=bool)
    adj = _adjacency_lists(net)
    queue = deque([0])
    seen[0] = True
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    if not seen.all():
        k = int(np.flatnonzero(~seen)[0])
        node_id = net.junctions[k].id if k < net.n_junctions else net.tanks[k - net.n_junctions].id
        raise ValidationError(f"network is disconnected: node {node_id!r} is unreachable")


def _adjacency_lists(net: Network) -> list[list[int]]:
    n = net.n_junctions + net.n_tanks
    adj: list[list[int]] = [[] for _ in range(n)]
    for p in net.pipes:
        a, b = net._graph_index(p.start), net._graph_index(p.end)
        adj[a].append(b)
        adj[b].append(a)
    return adj


# ---------------------------------------------------------------- file formats

_NATIVE_SECTIONS = {"[TANKS]": 2, "[JUNCTIONS]": 3, "[PIPES]": 6}


def parse_network(path, format: str = "native") -> Network:
    """Read a network file in the native format or the INP subset."""
    path = Path(path)
    text = path.read_text()
    if format == "native":
        return loads_native(text, name=path.stem)
    if format in ("inp", "inp-subset"):
        return loads_inp(text, name=path.stem)
    raise ValueError(f"unknown network format {format!r}")


def _float(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: expected a number, got {tok!r}") from None


def loads_native(text: str, name: str = "network") -> Network:
    junctions, tanks, pipes = [], [], []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.upper()
            if section not in _NATIVE_SECTIONS:
                raise ParseError(f"line {lineno}: unknown section {line}")
            continue
        if section is None:
            raise ParseError(f"line {lineno}: data outside of a section")
        tok = line.split()
        if len(tok) != _NATIVE_SECTIONS[section]:
            raise ParseError(
                f"line {lineno}: {section} expects {_NATIVE_SECTIONS[section]} fields, got {len(tok)}"
            )
        if section == "[TANKS]":
            tanks.append(Tank(tok[0], _float(tok[1], lineno)))
        elif section == "[JUNCTIONS]":
            junctions.append(Junction(tok[0], _float(tok[1], lineno), _float(tok[2], lineno)))
        else:
            pipes.append(Pipe(tok[0], tok[1], tok[2], *(_float(t, lineno) for t in tok[3:])))
    return Network(tuple(junctions), tuple(tanks), tuple(pipes), name=name)


def dumps_native(net: Network) -> str:
    out = [f"# network {net.name}", "[TANKS]"]
    out += [f"{t.id} {t.head!r}" for t in net.tanks]
    out.append("[JUNCTIONS]")
    out += [f"{j.id} {j.elevation!r} {j.base_demand!r}" for j in net.junctions]
    out.append("[PIPES]")
    out += [
        f"{p.id} {p.start} {p.end} {p.length!r} {p.diameter!r} {p.roughness!r}"
        for p in net.pipes
    ]
    return "\n".join(out) + "\n"


def write_network(net: Network, path) -> None:
    Path(path).write_text(dumps_native(net))


def loads_inp(text: str, name: str = "network") -> Network:
    """EPANET INP subset: [JUNCTIONS], [RESERVOIRS] and [PIPES] only.

    INP flow units are taken as SI (m, m3/s); demands given in other units
    have to be converted beforehand.
    """
    junctions, tanks, pipes = [], [], []
    section = None
    ignored = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.upper()
            if section not in ("[JUNCTIONS]", "[RESERVOIRS]", "[PIPES]") and section != "[END]":
                ignored.add(section)
            continue
        tok = line.split()
        if section == "[JUNCTIONS]":
            if len(tok) < 2:
                raise ParseError(f"line {lineno}: junction needs id and elevation")
            demand = _float(tok[2], lineno) if len(tok) > 2 else 0.0
            junctions.append(Junction(tok[0], _float(tok[1], lineno), demand))
        elif section == "[RESERVOIRS]":
            if len(tok) < 2:
                raise ParseError(f"line {lineno}: reservoir needs id and head")
            tanks.append(Tank(tok[0], _float(tok[1], lineno)))
        elif section == "[PIPES]":
            if len(tok) < 6:
                raise ParseError(f"line {lineno}: pipe needs id, nodes, length, diameter, roughness")
            if len(tok) > 7 and tok[7].upper() == "CLOSED":
                log.warning("line %d: closed pipe %s ignored", lineno, tok[0])
                continue
            # INP diameters are in mm for SI units
            pipes.append(Pipe(tok[0], tok[1], tok[2], _float(tok[3], lineno),
                              _float(tok[4], lineno) / 1000.0, _float(tok[5], lineno)))
    for sec in sorted(ignored):
        log.warning("INP section %s ignored", sec)
    return Network(tuple(junctions), tuple(tanks), tuple(pipes), name=name)


def parse_communities(path, net: Network) -> np.ndarray:
    """Read ``node_id community_id`` lines; returns a 0-based-junction -> id array."""
    comm = np.zeros(net.n_junctions, dtype=np.int64)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 2:
            raise ParseError(f"line {lineno}: expected 'node_id community_id'")
        try:
            cid = int(tok[1])
        except ValueError:
            raise ParseError(f"line {lineno}: community id must be an integer") from None
        if cid < 1:
            raise ParseError(f"line {lineno}: community ids start at 1")
        comm[net.junction_index(tok[0])] = cid
    missing = np.flatnonzero(comm == 0)
    if missing.size:
        raise ValidationError(f"no community for node {net.junctions[missing[0]].id!r}")
    return comm


# ---------------------------------------------------------------- graph algorithms

def incidence(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """Signed incidence matrices ``(B, B_f)``.

    Entry is +1 where the pipe enters the node (its ``end``), -1 where it
    leaves (its ``start``). ``B`` has junction rows, ``B_f`` tank rows.
    """
    n, t = net.n_junctions, net.n_tanks
    full = np.zeros((n + t, net.n_pipes))
    e = net.edges()
    cols = np.arange(net.n_pipes)
    full[e[:, 0], cols] = -1.0
    full[e[:, 1], cols] = 1.0
    return full[:n], full[n:]


def _weighted_graph(net: Network, weight: str) -> csr_matrix:
    e = net.edges()
    if weight in ("length", "pipe-length"):
        w = np.array([p.length for p in net.pipes], dtype=float)
    elif weight in ("unit", "hops"):
        w = np.ones(net.n_pipes)
    else:
        raise ValueError(f"unknown weight {weight!r}")
    n = net.n_junctions + net.n_tanks
    # parallel pipes: keep the cheaper one
    best: dict[tuple[int, int], float] = {}
    for (a, b), wk in zip(e.tolist(), w.tolist()):
        key = (min(a, b), max(a, b))
        best[key] = min(wk, best.get(key, np.inf))
    rows = [a for a, _ in best] + [b for _, b in best]
    cols = [b for _, b in best] + [a for a, _ in best]
    vals = list(best.values()) * 2
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


def shortest_paths(net: Network, weight: str = "length") -> np.ndarray:
    """All-pairs junction distances (N x N); tanks are traversable.

    Unreachable pairs get ``UNREACHABLE`` (inf).
    """
    dist = dijkstra(_weighted_graph(net, weight), directed=False)
    n = net.n_junctions
    return np.ascontiguousarray(dist[:n, :n])


def hop_distances(net: Network) -> np.ndarray:
    """Unweighted all-pairs hop counts between junctions (BFS)."""
    adj = _adjacency_lists(net)
    n = net.n_junctions
    out = np.full((n, n), UNREACHABLE)
    for src in range(n):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        for v, d in dist.items():
            if v < n:
                out[src, v] = d
    return out


def k_hop_neighbors(net: Network, i: int, k: int) -> set[int]:
    """Junctions (0-based) within ``k`` pipes of junction ``i``, including ``i``."""
    if not 0 <= i < net.n_junctions:
        raise ValidationError(f"junction index {i} out of range")
    adj = _adjacency_lists(net)
    dist = {i: 0}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return {v for v in dist if v < net.n_junctions}
