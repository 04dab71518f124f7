"""Sparse coding and discriminative dictionary learning.

Pieces:

* ``omp`` / ``omp_batch``: orthogonal matching pursuit (batched over signals).
* ``aksvd_atom_update`` / ``aksvd_sweep``: approximate K-SVD refinement.
* ``lcksvd_pretrain``: label-consistent pre-training of ``D, W, A`` on the
  stacked problem ``[Y; sqrt(a) H; sqrt(b) Q] ~ [D; sqrt(a) W; sqrt(b) A] X``.
* ``toddler_update``: one online step. ``D`` follows a recursive least
  squares recursion on the inverse Gram matrix; ``W`` and ``A`` are ridge
  tempered towards their previous values.
* ``classify``: sparse code on ``D`` then argmax of ``W x``.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelStateError, ParseError, ValidationError

SHARED = -1
MODEL_MAGIC = b"WDNDLM01"


# ---------------------------------------------------------------- sparse coding

def omp_batch(D, Y, s0: int, tol: float = 1e-12) -> np.ndarray:
    """OMP for every column of ``Y``; returns the (B x n) code matrix.

    Atoms need not be unit norm: selection uses normalized correlations and
    the coefficients are least squares on the raw atoms. A signal stops early
    once no atom correlates with its residual (relative ``tol``).
    """
    D = np.asarray(D, float)
    Y = np.asarray(Y, float)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    m, B = D.shape
    n = Y.shape[1]
    if not 1 <= s0 <= B:
        raise ConfigError(f"sparsity s0={s0} must be in 1..{B}")
    dn = np.linalg.norm(D, axis=0)
    usable = dn > 0
    Dn = np.where(usable, D / np.where(usable, dn, 1.0), 0.0)
    ynorm = np.linalg.norm(Y, axis=0)
    cols = np.arange(n)

    support = np.zeros((n, s0), dtype=np.int64)
    live = np.zeros((n, s0), dtype=bool)
    active = ynorm > 0
    coef = np.zeros((n, 0))
    Rres = Y.copy()
    for k in range(s0):
        corr = np.abs(Dn.T @ Rres)
        if k:
            corr[support[:, :k], cols[:, None]] = -1.0
        j = np.argmax(corr, axis=0)
        best = corr[j, cols]
        active &= best > tol * np.maximum(ynorm, 1e-300)
        if not active.any():
            break
        support[:, k] = j
        live[:, k] = active
        Ds = D[:, support[:, :k + 1]].transpose(1, 0, 2) * live[:, None, :k + 1]
        gram = Ds.transpose(0, 2, 1) @ Ds
        dead = ~live[:, :k + 1]
        gram[dead, :] = 0.0
        gram.transpose(0, 2, 1)[dead, :] = 0.0
        idx = np.nonzero(dead)
        gram[idx[0], idx[1], idx[1]] = 1.0
        rhs = np.einsum("nmk,mn->nk", Ds, Y)
        coef = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
        Rres = Y - np.einsum("nmk,nk->mn", Ds, coef)
    X = np.zeros((B, n))
    k = coef.shape[1]
    if k:
        np.add.at(X, (support[:, :k], np.broadcast_to(cols[:, None], (n, k))), coef * live[:, :k])
    return X[:, 0] if squeeze else X


def omp(D, y, s0: int) -> np.ndarray:
    return omp_batch(D, np.asarray(y, float).ravel(), s0)


# ---------------------------------------------------------------- AK-SVD

def aksvd_atom_update(D, X, Y, j: int, n_inner: int = 1, E=None):
    """Refine atom ``j`` and its coefficient row in place.

    ``E`` (the residual ``Y - D X``) is used and kept current if given.
    An unused atom is replaced by the normalized worst-represented signal.
    Returns ``(atom, row)``.
    """
    I = np.flatnonzero(X[j])
    own_E = E is None
    if own_E:
        E = Y - D @ X
    if I.size == 0:
        err = np.einsum("ij,ij->j", E, E)
        worst = int(np.argmax(err)) if err.size else 0
        if err.size and err[worst] > 0:
            D[:, j] = E[:, worst] / np.sqrt(err[worst])
        return D[:, j], X[j]
    g = X[j, I]
    Ej = E[:, I] + np.outer(D[:, j], g)
    d = D[:, j]
    for _ in range(n_inner):
        d = Ej @ g
        dnorm = np.linalg.norm(d)
        if dnorm == 0:
            d = D[:, j]
            break
        d = d / dnorm
        g = Ej.T @ d
    D[:, j] = d
    X[j, I] = g
    E[:, I] = Ej - np.outer(d, g)
    return D[:, j], X[j]


def aksvd_sweep(D, X, Y, n_inner: int = 1) -> None:
    """One pass of atom updates over the whole dictionary (in place)."""
    E = Y - D @ X
    for j in range(D.shape[1]):
        aksvd_atom_update(D, X, Y, j, n_inner, E)


def train_dictionary(D, Y, s0: int, iters: int) -> np.ndarray:
    """Alternate OMP and AK-SVD sweeps; returns the final codes."""
    X = omp_batch(D, Y, s0)
    for _ in range(iters):
        aksvd_sweep(D, X, Y)
        X = omp_batch(D, Y, s0)
    return X


# ---------------------------------------------------------------- LC-KSVD

@dataclass
class Hyper:
    alpha: float = 4.0
    beta: float = 16.0
    lam_init: float = 8.0
    lam_schedule: str = "gram"  # "gram": lam = ||G||_2 after the first update; "fixed"
    atoms_per_class: int = 3
    shared_atoms: int = 3
    s0: int = 5
    iters_block: int = 20
    iters_full: int = 50
    renorm_every: int = 100
    rls_ridge: float = 1e-8
    seed: int = 0


def build_label_matrices(labels, n_classes: int, atoms_per_class: int, shared_atoms: int = 0):
    """One-hot ``H`` (c x n), atom-assignment ``Q`` (B x n) and the atom->class map."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError("labels must lie in 0..n_classes-1")
    atom_class = np.concatenate([np.repeat(np.arange(n_classes), atoms_per_class),
                                 np.full(shared_atoms, SHARED)])
    H = np.zeros((n_classes, labels.size))
    H[labels, np.arange(labels.size)] = 1.0
    Q = ((atom_class[:, None] == labels[None, :]) | (atom_class[:, None] == SHARED)).astype(float)
    return H, Q, atom_class


def lcksvd_objective(Y, H, Q, D, W, A, X, alpha, beta) -> float:
    return float(np.sum((Y - D @ X) ** 2) + alpha * np.sum((H - W @ X) ** 2)
                 + beta * np.sum((Q - A @ X) ** 2))


def stack(Y, H, Q, alpha, beta):
    return np.vstack([Y, np.sqrt(alpha) * H, np.sqrt(beta) * Q])


def stacked_objective(Y, H, Q, D, W, A, X, alpha, beta) -> float:
    return float(np.sum((stack(Y, H, Q, alpha, beta) - stack(D, W, A, alpha, beta) @ X) ** 2))


def _ridge(T, X):
    # T X^T (X X^T + I)^-1
    G = X @ X.T + np.eye(X.shape[0])
    return np.linalg.solve(G, X @ T.T).T


def _init_block(Yk, n_atoms, rng):
    norms = np.linalg.norm(Yk, axis=0)
    order = np.argsort(-norms, kind="stable")
    atoms = [Yk[:, i] / norms[i] for i in order[:n_atoms] if norms[i] > 0]
    while len(atoms) < n_atoms:
        v = rng.standard_normal(Yk.shape[0])
        atoms.append(v / np.linalg.norm(v))
    return np.stack(atoms, axis=1)


@dataclass
class DLModel:
    D: np.ndarray
    W: np.ndarray
    A: np.ndarray
    G: np.ndarray
    Ginv: np.ndarray
    atom_class: np.ndarray
    hyper: Hyper = field(default_factory=Hyper)
    n_online: int = 0
    lam: float = 8.0
    power_vec: np.ndarray | None = None

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.D.shape[1]

    def snapshot(self) -> "DLModel":
        return copy.deepcopy(self)

    def class_indicator(self, cls: int) -> np.ndarray:
        return ((self.atom_class == cls) | (self.atom_class == SHARED)).astype(float)

    def stacked_dictionary(self) -> np.ndarray:
        return stack(self.D, self.W, self.A, self.hyper.alpha, self.hyper.beta)

    def renormalize(self) -> None:
        """Unit-norm atoms; W, A, G and the inverse Gram absorb the scaling."""
        n = np.linalg.norm(self.D, axis=0)
        n = np.where(n > 0, n, 1.0)
        self.D /= n
        self.W /= n
        self.A /= n
        self.G *= np.outer(n, n)
        self.Ginv /= np.outer(n, n)


def lcksvd_pretrain(Y, labels, n_classes: int, hyper: Hyper | None = None):
    """Label-consistent pre-training; returns ``(model, X)``.

    Per-class atom blocks (and the shared block, on all signals) are first
    trained separately for ``iters_block`` iterations, ``W`` and ``A`` are
    initialised by ridge regression, then ``iters_full`` OMP + AK-SVD passes
    run on the stacked problem.
    """
    hp = hyper or Hyper()
    Y = np.asarray(Y, float)
    labels = np.asarray(labels, dtype=np.int64)
    missing = sorted(set(range(n_classes)) - set(labels.tolist()))
    if missing:
        raise ValidationError("no pre-train signal for class(es): " + ", ".join(str(c + 1) for c in missing))
    rng = np.random.default_rng([hp.seed, 0x4C43])
    H, Q, atom_class = build_label_matrices(labels, n_classes, hp.atoms_per_class, hp.shared_atoms)
    m, B = Y.shape[0], atom_class.size

    D = np.zeros((m, B))
    for c in list(range(n_classes)) + [SHARED]:
        block = np.flatnonzero(atom_class == c)
        if block.size == 0:
            continue
        Yc = Y if c == SHARED else Y[:, labels == c]
        Dc = _init_block(Yc, block.size, rng)
        train_dictionary(Dc, Yc, min(hp.s0, block.size), hp.iters_block)
        D[:, block] = Dc

    s0 = min(hp.s0, B)
    X = omp_batch(D, Y, s0)
    W = _ridge(H, X)
    A = _ridge(Q, X)
    Ys = stack(Y, H, Q, hp.alpha, hp.beta)
    Ds = stack(D, W, A, hp.alpha, hp.beta)
    Ds /= np.where((nd := np.linalg.norm(Ds, axis=0)) > 0, nd, 1.0)
    X = omp_batch(Ds, Ys, s0)
    for _ in range(hp.iters_full):
        aksvd_sweep(Ds, X, Ys)
        X = omp_batch(Ds, Ys, s0)

    D = Ds[:m].copy()
    W = Ds[m:m + n_classes] / np.sqrt(hp.alpha) if hp.alpha > 0 else _ridge(H, X)
    A = Ds[m + n_classes:] / np.sqrt(hp.beta) if hp.beta > 0 else _ridge(Q, X)
    n = np.linalg.norm(D, axis=0)
    n = np.where(n > 0, n, 1.0)
    D /= n
    if hp.alpha > 0:
        W = W / n
    if hp.beta > 0:
        A = A / n
    X = X * n[:, None]
    G = X @ X.T
    model = DLModel(D, W, A, G, _inverse_gram(G, hp.rls_ridge), atom_class, hp, lam=hp.lam_init)
    return model, X


def _inverse_gram(G, ridge):
    scale = max(float(np.linalg.norm(G, 2)), 1.0)
    return np.linalg.inv(G + ridge * scale * np.eye(G.shape[0]))


# ---------------------------------------------------------------- online updates

def rls_dictionary_update(D, Ginv, y, x):
    """Rank-one RLS step: ``D`` stays the least-squares fit of all seen (y, x)."""
    u = Ginv @ x
    denom = 1.0 + x @ u
    D += np.outer(y - D @ x, u) / denom
    Ginv -= np.outer(u, u) / denom
    return D, Ginv


def tempered_update(W0, target, x, lam):
    """argmin_W ||target - W x||^2 + lam ||W - W0||_F^2 (closed form)."""
    return W0 + np.outer(target - W0 @ x, x) / (lam + x @ x)


def spectral_norm(G, v0=None, iters: int = 50, rtol: float = 1e-8):
    """Largest eigenvalue of a PSD matrix by power iteration; returns ``(value, vector)``."""
    v = np.ones(G.shape[0]) if v0 is None else np.asarray(v0, float)
    nv = np.linalg.norm(v)
    if nv == 0:
        v, nv = np.ones(G.shape[0]), np.sqrt(G.shape[0])
    v = v / nv
    val = 0.0
    for _ in range(iters):
        w = G @ v
        new = np.linalg.norm(w)
        if new == 0:
            return 0.0, v
        v = w / new
        if abs(new - val) <= rtol * new:
            val = new
            break
        val = new
    return val, v


def toddler_update(model: DLModel, y, label: int | None = None, x=None) -> DLModel:
    """One online step on signal ``y`` (in place; the model is returned).

    Labelled signals are coded on the stacked dictionary with their true
    label; unlabelled ones on ``D`` alone and self-labelled by ``argmax W x``.
    ``x`` overrides the sparse code (frozen-support experiments).
    """
    if model.G is None or model.Ginv is None:
        raise ModelStateError("model has not been pre-trained")
    hp = model.hyper
    y = np.asarray(y, float)
    if y.shape != (model.D.shape[0],):
        raise ValidationError(f"signal must have {model.D.shape[0]} entries")
    if label is not None:
        if not 0 <= label < model.n_classes:
            raise ValidationError(f"unknown class {label + 1}")
        cls = label
    if x is None:
        if label is not None:
            h = np.zeros(model.n_classes)
            h[cls] = 1.0
            ys = np.concatenate([y, np.sqrt(hp.alpha) * h, np.sqrt(hp.beta) * model.class_indicator(cls)])
            x = omp(model.stacked_dictionary(), ys, hp.s0)
        else:
            x = omp(model.D, y, hp.s0)
    x = np.asarray(x, float)
    if label is None:
        cls = int(np.argmax(model.W @ x))
    h = np.zeros(model.n_classes)
    h[cls] = 1.0
    q = model.class_indicator(cls)

    lam = model.lam
    rls_dictionary_update(model.D, model.Ginv, y, x)
    model.G += np.outer(x, x)
    model.W = tempered_update(model.W, h, x, lam)
    model.A = tempered_update(model.A, q, x, lam)
    model.n_online += 1
    if hp.lam_schedule == "gram":
        model.lam, model.power_vec = spectral_norm(model.G, model.power_vec)
    if hp.renorm_every and model.n_online % hp.renorm_every == 0:
        model.renormalize()
    return model


@dataclass
class Classification:
    label: int
    scores: np.ndarray
    x: np.ndarray

    def margin(self) -> float:
        top = np.sort(self.scores)[::-1]
        return float(top[0] - top[1]) if top.size > 1 else float("inf")


def classify(model: DLModel, y) -> Classification:
    x = omp(model.D, y, model.hyper.s0)
    scores = model.W @ x
    return Classification(int(np.argmax(scores)), scores, x)


# ---------------------------------------------------------------- model file

def save_model(model: DLModel, path) -> None:
    Path(path).write_bytes(dumps_model(model))


def dumps_model(model: DLModel) -> bytes:
    header = {
        "version": 1,
        "rows": model.D.shape[0],
        "atoms": model.n_atoms,
        "classes": model.n_classes,
        "hyper": asdict(model.hyper),
        "atom_class": model.atom_class.tolist(),
        "n_online": model.n_online,
        "lam": model.lam,
        "has_power_vec": model.power_vec is not None,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    parts = [MODEL_MAGIC, struct.pack("<I", len(blob)), blob]
    for a in (model.D, model.W, model.A, model.G, model.Ginv):
        parts.append(np.ascontiguousarray(a, "<f8").tobytes())
    if model.power_vec is not None:
        parts.append(np.ascontiguousarray(model.power_vec, "<f8").tobytes())
    return b"".join(parts)


def load_model(path) -> DLModel:
    return loads_model(Path(path).read_bytes())


def loads_model(data: bytes) -> DLModel:
    if data[:8] != MODEL_MAGIC:
        raise ParseError("not a wdnfdi model file (bad magic/version tag)")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen])
    m, B, c = header["rows"], header["atoms"], header["classes"]
    pos = 12 + hlen
    shapes = [(m, B), (c, B), (B, B), (B, B), (B, B)]
    if header["has_power_vec"]:
        shapes.append((B,))
    need = 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) - pos != need:
        raise ParseError(f"model payload has {len(data) - pos} bytes, expected {need}")
    arrays = []
    for s in shapes:
        k = int(np.prod(s))
        arrays.append(np.frombuffer(data, "<f8", k, pos).reshape(s).astype(float))
        pos += 8 * k
    pv = arrays[5] if header["has_power_vec"] else None
    return DLModel(*arrays[:5], np.array(header["atom_class"], dtype=np.int64),
                   Hyper(**header["hyper"]), header["n_online"], header["lam"], pv)
