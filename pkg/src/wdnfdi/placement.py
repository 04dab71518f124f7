"""Sensor placement: greedy set/test cover and graph-penalized Gram-Schmidt."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ConfigError, ValidationError

RANK_TOL = 1e-12


@dataclass
class SensorSelection:
    indices: list[int]  # 0-based, selection order
    method: str
    params: dict = field(default_factory=dict)
    uncovered: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValidationError("duplicate sensor index in selection")

    def prefix(self, s: int) -> "SensorSelection":
        return SensorSelection(self.indices[:s], self.method, {**self.params, "s": s})


def greedy_cover(M, s: int) -> SensorSelection:
    """Greedy maximum coverage over the columns (faults) of a signature matrix.

    Each step takes the row covering most still-uncovered columns (lowest
    index on ties); stops after ``s`` rows or once nothing more can be
    covered. ``uncovered`` lists the faults no chosen row detects.
    """
    if s < 1:
        raise ConfigError("need at least one sensor")
    M = np.asarray(M, dtype=bool)
    uncovered = np.ones(M.shape[1], dtype=bool)
    chosen: list[int] = []
    for _ in range(min(s, M.shape[0])):
        gain = (M & uncovered).sum(axis=1)
        gain[chosen] = -1
        best = int(np.argmax(gain))
        if gain[best] <= 0:
            break
        chosen.append(best)
        uncovered &= ~M[best]
    return SensorSelection(chosen, "greedy-cover", {"s": s}, np.flatnonzero(uncovered).tolist())


def coverage(M, rows) -> int:
    M = np.asarray(M, dtype=bool)
    if len(rows) == 0:
        return 0
    return int(M[list(rows)].any(axis=0).sum())


def fault_pairs(n_faults: int) -> list[tuple[int, int]]:
    """Unordered fault pairs in lexicographic order."""
    return list(combinations(range(n_faults), 2))


def mtc_matrix(M, semantics: str = "xor") -> np.ndarray:
    """Pairwise-isolation matrix: column per fault pair (lexicographic).

    ``xor``: node detects exactly one of the two faults (separates them).
    ``product``: node detects both, the literal product form.
    """
    M = np.asarray(M, dtype=bool)
    if M.shape[1] < 2:
        raise ConfigError("test cover needs at least two faults")
    a, b = np.triu_indices(M.shape[1], k=1)
    if semantics == "xor":
        out = M[:, a] ^ M[:, b]
    elif semantics == "product":
        out = M[:, a] & M[:, b]
    else:
        raise ValueError(f"unknown mtc semantics {semantics!r}")
    return out.astype(np.int8)


def graph_gs_place(R, dist, s: int, lam: float = 0.0, return_basis: bool = False):
    """Greedy Gram-Schmidt row selection with an inverse-distance spread penalty.

    ``R`` is nodes x samples (training residuals); ``dist`` the node distance
    matrix (inf where unreachable, which adds no penalty). The first pick is
    the largest-norm row; each next pick minimizes the norm of its projection
    onto the span of the picked rows plus ``lam * sum(1/dist)`` to the picked
    nodes. Ties go to the lowest index.
    """
    R = np.asarray(R, float)
    N = R.shape[0]
    if lam < 0:
        raise ConfigError("distance penalty lambda must be nonnegative")
    if not 1 <= s <= N:
        raise ConfigError(f"cannot place {s} sensors on {N} nodes")
    norms = np.linalg.norm(R, axis=1)
    if not np.any(norms > 0):
        raise ValidationError("residual matrix is zero; no information for placement")
    with np.errstate(divide="ignore"):
        inv = np.where(np.isfinite(dist) & (dist > 0), 1.0 / np.asarray(dist, float), 0.0)

    first = int(np.argmax(norms))
    chosen = [first]
    U = (R[first] / norms[first])[None, :]
    penalty = inv[first].copy()
    for _ in range(1, s):
        coef = R @ U.T  # projections onto the orthonormal basis
        score = np.linalg.norm(coef, axis=1) + lam * penalty
        # zero rows go last, in index order
        score = np.where(norms > 0, score, np.inf)
        score[chosen] = np.nan
        cand = np.flatnonzero(~np.isnan(score))
        finite = cand[np.isfinite(score[cand])]
        pick = int(finite[np.argmin(score[finite])]) if finite.size else int(cand[0])
        chosen.append(pick)
        penalty += inv[pick]
        u = R[pick] - coef[pick] @ U
        u -= (U @ u) @ U  # second pass keeps U orthonormal to rounding
        un = np.linalg.norm(u)
        if un > RANK_TOL * max(norms[pick], np.finfo(float).tiny):
            U = np.vstack([U, u / un])
    sel = SensorSelection(chosen, "graph-gs", {"s": s, "lambda": lam})
    return (sel, U) if return_basis else sel
