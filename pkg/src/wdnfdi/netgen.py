"""Synthetic networks and demand profiles.

Generated networks are a Euclidean minimum spanning tree over random points
plus short chords, so they form a single looped cluster. Tree pipes are
sized for the demand they carry downstream of the tank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree
from scipy.spatial.distance import cdist

from .errors import ConfigError
from .hydraulics import ProfileBank
from .network import Junction, Network, Pipe, Tank


@dataclass
class GenSpec:
    n_junctions: int
    n_pipes: int
    seed: int = 1
    length_range: tuple[float, float] = (100.0, 1000.0)
    diameters: tuple[float, ...] = (0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6)
    roughness_range: tuple[float, float] = (100.0, 130.0)
    demand_range: tuple[float, float] = (0.001, 0.004)
    elevation_range: tuple[float, float] = (0.0, 20.0)
    tank_head: float = 100.0
    max_velocity: float = 1.0

    def check(self):
        if self.n_junctions < 1:
            raise ConfigError("need at least one junction")
        if self.n_pipes < self.n_junctions:
            raise ConfigError(
                f"n_pipes={self.n_pipes} < n_junctions={self.n_junctions}: cannot connect every junction"
            )
        max_pipes = (self.n_junctions + 1) * self.n_junctions // 2
        if self.n_pipes > max_pipes:
            raise ConfigError(f"n_pipes={self.n_pipes} exceeds a simple graph on {self.n_junctions + 1} nodes")
        for name in ("length_range", "roughness_range", "demand_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must be positive and ordered")
        if not self.diameters or min(self.diameters) <= 0:
            raise ConfigError("diameter set must be nonempty and positive")


def generate_network(spec: GenSpec) -> Network:
    spec.check()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_junctions + 1  # node 0 is the tank
    lo, hi = spec.length_range
    side = np.sqrt(n) * 0.5 * (lo + hi)
    pts = rng.uniform(0.0, side, size=(n, 2))
    dist = cdist(pts, pts)

    tree = minimum_spanning_tree(dist + 1e-9 * (dist > 0)).tocoo()
    edges = {(min(a, b), max(a, b)) for a, b in zip(tree.row.tolist(), tree.col.tolist())}
    n_chords = spec.n_pipes - len(edges)
    if n_chords > 0:
        order = np.argsort(dist, axis=1, kind="stable")
        k = 4
        while True:
            cand = sorted({
                (min(a, int(b)), max(a, int(b)))
                for a in range(n) for b in order[a, 1:k + 1]
            } - edges)
            if len(cand) >= n_chords or k >= n - 1:
                break
            k += 2
        cand.sort(key=lambda e: dist[e])
        # prefer short chords, with some randomness in which ones
        pool = cand[: max(n_chords, min(len(cand), 2 * n_chords))]
        pick = rng.choice(len(pool), size=n_chords, replace=False)
        edges |= {pool[i] for i in sorted(pick)}
    edge_list = sorted(edges)

    demands = rng.uniform(*spec.demand_range, size=n - 1)
    elevations = rng.uniform(*spec.elevation_range, size=n - 1)
    roughness = rng.uniform(*spec.roughness_range, size=len(edge_list))

    # size tree pipes by downstream demand; chords get the smallest diameter
    parent = _tree_parents(tree, n)
    carried = np.zeros(n)
    carried[1:] = demands
    for v in _postorder(parent):
        if parent[v] >= 0:
            carried[parent[v]] += carried[v]
    diam_set = np.sort(np.asarray(spec.diameters, float))
    tree_edges = {(min(v, p), max(v, p)): v for v, p in enumerate(parent) if p >= 0}

    junctions = tuple(
        Junction(f"J{k}", float(elevations[k - 1]), float(demands[k - 1])) for k in range(1, n)
    )
    tanks = (Tank("T1", float(spec.tank_head)),)
    pipes = []
    for m, (a, b) in enumerate(edge_list, start=1):
        if (a, b) in tree_edges:
            q = carried[tree_edges[(a, b)]]
            ok = diam_set[4 * q / (np.pi * diam_set**2) <= spec.max_velocity]
            d = ok[0] if ok.size else diam_set[-1]
        else:
            d = diam_set[0]
        length = float(np.clip(dist[a, b], lo, hi))
        name = lambda v: "T1" if v == 0 else f"J{v}"  # noqa: E731
        pipes.append(Pipe(f"P{m}", name(a), name(b), length, float(d), float(roughness[m - 1])))
    return Network(junctions, tanks, tuple(pipes), name=f"gen{spec.n_junctions}_s{spec.seed}")


def _tree_parents(tree, n):
    sym = tree + tree.T
    _, pred = breadth_first_order(sym, 0, directed=False, return_predecessors=True)
    pred = np.asarray(pred, dtype=np.int64)
    pred[pred < 0] = -1
    return pred


def _postorder(parent):
    n = len(parent)
    children = [[] for _ in range(n)]
    for v, p in enumerate(parent):
        if p >= 0:
            children[p].append(v)
    out, stack = [], [0]
    while stack:
        v = stack.pop()
        out.append(v)
        stack.extend(children[v])
    return out[::-1]


# ---------------------------------------------------------------- profiles

def base_daily_curve(samples_per_day: int = 96) -> np.ndarray:
    """Daily demand multiplier with a flat night minimum around 3-4 AM.

    Mean is roughly one; morning and evening peaks are Gaussian bumps in
    wrapped hour distance so the curve is periodic.
    """
    hours = np.arange(samples_per_day) * 24.0 / samples_per_day

    def bump(center, width):
        d = np.abs(hours - center)
        d = np.minimum(d, 24.0 - d)
        return np.exp(-((d / width) ** 2))

    return 0.5 + 0.7 * bump(8.0, 1.5) + 0.45 * bump(13.0, 2.5) + 0.8 * bump(19.5, 2.0)


def generate_profiles(P: int, beta_noise: float, seed: int, base_curve=None,
                      samples_per_day: int = 96) -> ProfileBank:
    """Profile 1 is the base curve; the others perturb it per sample by ``+-beta_noise``."""
    if P < 1:
        raise ConfigError("need at least one profile")
    base = base_daily_curve(samples_per_day) if base_curve is None else np.asarray(base_curve, float)
    rng = np.random.default_rng([seed, 0x50524F46])
    rows = [base]
    for _ in range(P - 1):
        rows.append(base * (1.0 + rng.uniform(-beta_noise, beta_noise, size=base.shape)))
    return ProfileBank(np.array(rows), beta_noise)


# ---------------------------------------------------------------- Hanoi-like preset

# node: base demand (m3/h), from the public Hanoi benchmark; node 1 is the reservoir
_HANOI_DEMANDS = [
    890, 850, 130, 725, 1005, 1350, 550, 525, 525, 500, 560, 940, 615, 280, 310, 865,
    1345, 60, 1275, 930, 485, 1045, 820, 170, 900, 370, 290, 360, 360, 105, 805,
]
# (from, to, length m, diameter inch)
_HANOI_PIPES = [
    (1, 2, 100, 40), (2, 3, 1350, 40), (3, 4, 900, 40), (4, 5, 1150, 40), (5, 6, 1450, 40),
    (6, 7, 450, 40), (7, 8, 850, 40), (8, 9, 850, 40), (9, 10, 800, 40), (10, 11, 950, 30),
    (11, 12, 1200, 24), (12, 13, 3500, 24), (10, 14, 800, 20), (14, 15, 500, 16),
    (15, 16, 550, 12), (16, 17, 2730, 12), (17, 18, 1750, 16), (18, 19, 800, 20),
    (19, 3, 400, 20), (3, 20, 2200, 40), (20, 21, 1500, 20), (21, 22, 500, 12),
    (20, 23, 2650, 40), (23, 24, 1230, 30), (24, 25, 1300, 30), (25, 26, 850, 24),
    (26, 27, 300, 20), (27, 16, 750, 12), (23, 28, 1500, 16), (28, 29, 2000, 12),
    (29, 30, 1600, 12), (30, 31, 150, 16), (31, 32, 860, 16), (32, 25, 950, 24),
]


def hanoi_network() -> Network:
    """Hanoi-like network: 1 reservoir (100 m), 31 junctions, 34 pipes, C=130.

    Lengths and demands follow the public benchmark; diameters are one
    feasible design from the literature. Junction ``k`` (1-based) is
    benchmark node ``k+1``.
    """
    junctions = tuple(Junction(str(k + 2), 0.0, d / 3600.0) for k, d in enumerate(_HANOI_DEMANDS))
    tanks = (Tank("1", 100.0),)
    pipes = tuple(
        Pipe(str(m), str(a), str(b), float(L), d * 0.0254, 130.0)
        for m, (a, b, L, d) in enumerate(_HANOI_PIPES, start=1)
    )
    return Network(junctions, tanks, pipes, name="hanoi")
