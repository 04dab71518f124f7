"""Steady-state hydraulics: Hazen-Williams pipes, nodal Newton solver, demand model.

Heads are the unknowns. For pipe ``l`` going from node ``a`` to ``b`` the
head drop is ``dh = h_a - h_b`` and the flow follows the (regularized)
inverse Hazen-Williams law. The nodal balance ``B q(h) = c`` is solved by
Newton's method with a halving line search; many demand vectors can be
solved at once (``Solver.solve_batch``), which is how datasets are built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigError, NumericalError, ValidationError
from .network import Network, incidence

HW_COEF = 10.67
HW_Q_EXP = 1.852
HW_D_EXP = 4.87
# exact inverse of the q-exponent; 0.54 / 0.46 are its rounded forms
FLOW_EXP = 1.0 / HW_Q_EXP


def conductance(length, diameter, roughness):
    """Pipe conductivity ``C^1.852 D^4.87 / (10.67 L)`` (inverse resistance)."""
    return np.asarray(roughness, float) ** HW_Q_EXP * np.asarray(diameter, float) ** HW_D_EXP / (
        HW_COEF * np.asarray(length, float)
    )


def headloss(q, length, diameter, roughness):
    """Hazen-Williams head drop (m) along a pipe carrying flow ``q`` (m3/s)."""
    q = np.asarray(q, float)
    return q * np.abs(q) ** (HW_Q_EXP - 1.0) / conductance(length, diameter, roughness)


def flow_from_headloss(G, dh, eps=1e-6):
    """Flow for a head drop ``dh``; ``eps`` smooths the kink at zero."""
    dh = np.asarray(dh, float)
    return np.asarray(G, float) ** FLOW_EXP * dh * (dh * dh + eps * eps) ** ((FLOW_EXP - 1.0) / 2)


def _flow_derivative(Ga, dh, eps):
    s = dh * dh + eps * eps
    b = (FLOW_EXP - 1.0) / 2
    return Ga * s**b * (1.0 + 2 * b * dh * dh / s)


@dataclass
class SolverOptions:
    eps: float = 1e-6
    rel_tol: float = 1e-8
    max_iter: int = 200
    max_halvings: int = 30
    init_offset: float = 5.0
    step_tol: float = 1e-9  # m; the last head correction must also be this small


@dataclass
class HydraulicState:
    heads: np.ndarray
    flows: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float


@dataclass
class BatchResult:
    heads: np.ndarray  # (S, N)
    flows: np.ndarray  # (S, n_pipes)
    converged: np.ndarray
    iterations: np.ndarray
    residual_norm: np.ndarray


class Solver:
    """Newton solver bound to one network; reusable across demand vectors."""

    def __init__(self, net: Network, opts: SolverOptions | None = None):
        self.net = net
        self.opts = opts or SolverOptions()
        self.B, self.Bf = incidence(net)
        L, D, C = net.pipe_arrays()
        self.G = conductance(L, D, C)
        self._Ga = self.G**FLOW_EXP
        self.n = net.n_junctions
        e = net.edges()
        self._start, self._end = e[:, 0], e[:, 1]
        self.tank_heads = net.tank_heads
        # maps per-pipe derivative vector onto the flattened (N*N) Jacobian
        n = self.n
        rows, cols, vals = [], [], []
        for p, (a, b) in enumerate(e.tolist()):
            for u, v, s in ((a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)):
                if u < n and v < n:
                    rows.append(u * n + v)
                    cols.append(p)
                    vals.append(s)
        self._jac_map = sparse.csr_matrix((vals, (rows, cols)), shape=(n * n, net.n_pipes))
        self._BT = np.ascontiguousarray(self.B.T)

    def head_drops(self, H: np.ndarray) -> np.ndarray:
        ext = np.concatenate([H, np.broadcast_to(self.tank_heads, (H.shape[0], self.net.n_tanks))], axis=1)
        return ext[:, self._start] - ext[:, self._end]

    def flows(self, H: np.ndarray) -> np.ndarray:
        return flow_from_headloss(self.G, self.head_drops(H), self.opts.eps)

    def balance(self, H: np.ndarray, C: np.ndarray) -> np.ndarray:
        """Nodal mass-balance residual ``B q(h) - c`` (row per scenario)."""
        return self.flows(H) @ self._BT - C

    def solve(self, c) -> HydraulicState:
        res = self.solve_batch(np.atleast_2d(np.asarray(c, float)))
        return HydraulicState(res.heads[0], res.flows[0], bool(res.converged[0]),
                              int(res.iterations[0]), float(res.residual_norm[0]))

    def solve_batch(self, C: np.ndarray) -> BatchResult:
        opts = self.opts
        C = np.asarray(C, float)
        if C.ndim != 2 or C.shape[1] != self.n:
            raise ValidationError(f"demand array must be (S, {self.n})")
        S, n = C.shape
        tol = opts.rel_tol * np.maximum(1.0, np.abs(C).max(axis=1))
        H = np.full((S, n), self.tank_heads.max() - opts.init_offset)
        F = self.balance(H, C)
        fnorm = np.linalg.norm(F, axis=1)
        iters = np.zeros(S, dtype=np.int64)
        done = np.abs(F).max(axis=1) <= tol
        for _ in range(opts.max_iter):
            act = np.flatnonzero(~done)
            if act.size == 0:
                break
            Ha, Fa = H[act], F[act]
            dh = self.head_drops(Ha)
            dq = _flow_derivative(self._Ga, dh, opts.eps)
            if not np.all(np.isfinite(dq)):
                raise NumericalError("non-finite Jacobian entry in hydraulic solve")
            # J = -B diag(dq) B^T; the Newton step solves (B diag(dq) B^T) step = F
            K = (self._jac_map @ dq.T).T.reshape(-1, n, n)
            step = np.linalg.solve(K, Fa[:, :, None])[:, :, 0]
            t = np.ones(act.size)
            Hn = Ha + step
            Fn = self.balance(Hn, C[act])
            nn = np.linalg.norm(Fn, axis=1)
            bad = ~(nn < fnorm[act] * (1 - 1e-4 * t))
            for _h in range(opts.max_halvings):
                if not bad.any():
                    break
                t[bad] *= 0.5
                Hn[bad] = Ha[bad] + t[bad, None] * step[bad]
                Fn[bad] = self.balance(Hn[bad], C[act[bad]])
                nn[bad] = np.linalg.norm(Fn[bad], axis=1)
                bad = ~(nn < fnorm[act] * (1 - 1e-4 * t))
            H[act], F[act], fnorm[act] = Hn, Fn, nn
            iters[act] += 1
            moved = np.abs(t[:, None] * step).max(axis=1)
            done[act] = (np.abs(Fn).max(axis=1) <= tol[act]) & (moved <= opts.step_tol)
        resid = np.abs(F).max(axis=1)
        return BatchResult(H, self.flows(H), resid <= tol, iters, resid)


def solve_steady_state(net: Network, c, opts: SolverOptions | None = None) -> HydraulicState:
    return Solver(net, opts).solve(c)


# ---------------------------------------------------------------- demand model

@dataclass
class ProfileBank:
    """``P`` demand-scale profiles sampled on a common time grid (P x T)."""

    profiles: np.ndarray
    beta_noise: float = 0.025

    def __post_init__(self):
        self.profiles = np.atleast_2d(np.asarray(self.profiles, float))
        if self.profiles.shape[0] < 1 or np.any(self.profiles <= 0):
            raise ConfigError("profile bank needs >= 1 profile with positive scale factors")

    @property
    def n_profiles(self) -> int:
        return self.profiles.shape[0]

    @property
    def n_samples(self) -> int:
        return self.profiles.shape[1]

    def scale(self, profile: int, t) -> np.ndarray:
        """Scale factor(s) of ``profile`` (0-based) at sample(s) ``t`` (periodic)."""
        return self.profiles[profile, np.asarray(t) % self.n_samples]


@dataclass
class DemandSpec:
    """One demand evaluation; ``fault`` is ``(junction, magnitude)`` with 0-based junction."""

    scale: float
    total_inflow: float | None = None
    noise: np.ndarray | None = None
    fault: tuple[int, float] | None = None
    profile: int = 0
    time_index: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("profile scale must be positive")
        if self.fault is not None and self.fault[1] < 0:
            raise ConfigError("fault magnitude must be nonnegative")


def demand_vector(net: Network, spec: DemandSpec) -> np.ndarray:
    """Nodal consumption: base-demand share of ``p(t) q_in(t)`` plus noise and leak."""
    base = net.base_demands
    total = base.sum()
    if total == 0:
        raise ConfigError("sum of base demands is zero; demand shares undefined")
    q_in = total if spec.total_inflow is None else spec.total_inflow
    c = base / total * spec.scale * q_in
    if spec.noise is not None:
        c = c + spec.noise
    if spec.fault is not None:
        node, mag = spec.fault
        c[node] += mag
    return c


def draw_noise(net: Network, beta: float, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Uniform nodal demand noise within ``+-beta`` of each nominal demand.

    ``scale`` is the nominal profile level the demands are taken at.
    """
    base = net.base_demands * scale
    return rng.uniform(-beta, beta, size=base.shape) * base


@dataclass
class ScenarioResult:
    mean_heads: np.ndarray
    sample_heads: np.ndarray = field(repr=False)
    valid: bool = True


def window_demands(net: Network, bank: ProfileBank, profile: int, window, noise=None,
                   fault=None, total_inflow=None) -> np.ndarray:
    """Demand vectors (|K| x N) for one scenario over the averaging window."""
    window = np.atleast_1d(np.asarray(window))
    if window.size < 1:
        raise ConfigError("averaging window must contain at least one sample")
    base = net.base_demands
    total = base.sum()
    if total == 0:
        raise ConfigError("sum of base demands is zero; demand shares undefined")
    q_in = total if total_inflow is None else total_inflow
    p = bank.scale(profile, window)
    C = np.outer(p, base / total * q_in)
    if noise is not None:
        C += noise
    if fault is not None:
        C[:, fault[0]] += fault[1]
    return C


def simulate_scenario(net: Network, bank: ProfileBank, profile: int, window, noise=None,
                      fault=None, solver: Solver | None = None) -> ScenarioResult:
    """Average steady-state heads over the window samples of one scenario."""
    solver = solver or Solver(net)
    res = solver.solve_batch(window_demands(net, bank, profile, window, noise, fault))
    return ScenarioResult(res.heads.mean(axis=0), res.heads, bool(res.converged.all()))
