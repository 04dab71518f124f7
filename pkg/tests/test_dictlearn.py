import numpy as np
import pytest

from wdnfdi.dictlearn import (SHARED, DLModel, Hyper, aksvd_sweep, build_label_matrices, classify,
                              dumps_model, lcksvd_objective, lcksvd_pretrain, loads_model, omp,
                              omp_batch, rls_dictionary_update, spectral_norm, stacked_objective,
                              tempered_update, toddler_update)
from wdnfdi.errors import ConfigError, ModelStateError, ParseError, ValidationError


def unit_dict(rng, m, n):
    D = rng.standard_normal((m, n))
    return D / np.linalg.norm(D, axis=0)


def clustered(rng, n_classes=4, m=6, per=30, spread=0.05):
    centers = unit_dict(rng, m, n_classes) * 5
    labels = np.repeat(np.arange(n_classes), per)
    Y = centers[:, labels] * rng.uniform(0.5, 1.5, labels.size) + spread * rng.standard_normal((m, labels.size))
    return Y, labels


def test_omp_residual_orthogonal_to_support(rng):
    D = unit_dict(rng, 20, 50)
    Y = rng.standard_normal((20, 40))
    X = omp_batch(D, Y, 4)
    for k in range(40):
        sup = np.flatnonzero(X[:, k])
        assert sup.size == 4
        assert np.abs(D[:, sup].T @ (Y[:, k] - D @ X[:, k])).max() <= 1e-10


def test_omp_exact_recovery(rng):
    D = unit_dict(rng, 20, 50)
    x = np.zeros(50)
    x[[3, 17, 41]] = [1.5, -2.0, 0.7]
    np.testing.assert_allclose(omp(D, D @ x, 3), x, atol=1e-12)


def test_omp_non_unit_atoms(rng):
    D = unit_dict(rng, 10, 20)
    scale = rng.uniform(0.1, 10, 20)
    x = np.zeros(20)
    x[[2, 9]] = [1.0, -1.0]
    Ds = D * scale
    np.testing.assert_allclose(Ds @ omp(Ds, D @ x, 2), D @ x, atol=1e-10)
    assert set(np.flatnonzero(omp(Ds, D @ x, 2))) == {2, 9}


def test_omp_batch_matches_single(rng):
    D = unit_dict(rng, 8, 15)
    Y = rng.standard_normal((8, 6))
    X = omp_batch(D, Y, 3)
    for k in range(6):
        np.testing.assert_allclose(X[:, k], omp(D, Y[:, k], 3), atol=1e-12)


def test_omp_early_stop_and_zero_signal(rng):
    D = np.eye(4)
    x = omp(D, np.array([0.0, 2.0, 0.0, 0.0]), 3)
    assert np.count_nonzero(x) == 1
    assert np.all(omp(D, np.zeros(4), 2) == 0)
    with pytest.raises(ConfigError):
        omp(D, np.ones(4), 5)


def test_aksvd_sweep_does_not_increase_error(rng):
    D = unit_dict(rng, 12, 20)
    Y = rng.standard_normal((12, 60))
    X = omp_batch(D, Y, 3)
    for _ in range(5):
        before = np.sum((Y - D @ X) ** 2)
        aksvd_sweep(D, X, Y)
        assert np.sum((Y - D @ X) ** 2) <= before * (1 + 1e-9)
    np.testing.assert_allclose(np.linalg.norm(D, axis=0)[np.any(X != 0, axis=1)], 1.0)


def test_aksvd_replaces_unused_atom(rng):
    D = unit_dict(rng, 5, 3)
    Y = rng.standard_normal((5, 10))
    X = omp_batch(D, Y, 1)
    X[2] = 0.0
    old = D[:, 2].copy()
    aksvd_sweep(D, X, Y)
    assert not np.allclose(D[:, 2], old) and np.linalg.norm(D[:, 2]) == pytest.approx(1.0)


def test_label_matrices():
    H, Q, ac = build_label_matrices([0, 2, 1], 3, 2, 1)
    assert H.tolist() == [[1, 0, 0], [0, 0, 1], [0, 1, 0]]
    assert ac.tolist() == [0, 0, 1, 1, 2, 2, SHARED]
    assert Q[:, 0].tolist() == [1, 1, 0, 0, 0, 0, 1]
    with pytest.raises(ValidationError):
        build_label_matrices([3], 3, 1)


def test_stacked_objective_identity(rng):
    m, B, c, n = 6, 9, 3, 20
    Y, D, X = rng.standard_normal((m, n)), rng.standard_normal((m, B)), rng.standard_normal((B, n))
    H, Q = rng.standard_normal((c, n)), rng.standard_normal((B, n))
    W, A = rng.standard_normal((c, B)), rng.standard_normal((B, B))
    a = lcksvd_objective(Y, H, Q, D, W, A, X, 4.0, 16.0)
    b = stacked_objective(Y, H, Q, D, W, A, X, 4.0, 16.0)
    assert abs(a - b) <= 1e-10 * max(1.0, a)


def test_tempered_update_is_ridge_solution(rng):
    W0 = rng.standard_normal((5, 8))
    h, x, lam = rng.standard_normal(5), rng.standard_normal(8), 3.7
    dense = (np.outer(h, x) + lam * W0) @ np.linalg.inv(np.outer(x, x) + lam * np.eye(8))
    np.testing.assert_allclose(tempered_update(W0, h, x, lam), dense, atol=1e-10)


def test_rls_matches_batch_least_squares(rng):
    m, B = 6, 5
    X0 = rng.standard_normal((B, 20))
    Y0 = rng.standard_normal((m, 20))
    G = X0 @ X0.T
    D = Y0 @ X0.T @ np.linalg.inv(G)
    Ginv = np.linalg.inv(G)
    Xs, Ys = rng.standard_normal((B, 200)), rng.standard_normal((m, 200))
    for k in range(200):
        rls_dictionary_update(D, Ginv, Ys[:, k], Xs[:, k])
    Xa, Ya = np.hstack([X0, Xs]), np.hstack([Y0, Ys])
    ref = np.linalg.lstsq(Xa.T, Ya.T, rcond=None)[0].T
    assert np.linalg.norm(D - ref) <= 1e-6 * np.linalg.norm(ref)


def test_spectral_norm(rng):
    M = rng.standard_normal((7, 7))
    G = M @ M.T
    val, v = spectral_norm(G, iters=500, rtol=1e-14)
    assert val == pytest.approx(np.linalg.eigvalsh(G)[-1], rel=1e-8)
    warm, _ = spectral_norm(G, v, iters=3)
    assert warm == pytest.approx(val, rel=1e-6)


def test_pretrain_requires_every_class(rng):
    Y, labels = clustered(rng)
    with pytest.raises(ValidationError, match="class"):
        lcksvd_pretrain(Y, labels, 5, Hyper(s0=1, iters_block=2, iters_full=2))


def test_pretrain_and_classify_separable(rng):
    Y, labels = clustered(rng)
    model, X = lcksvd_pretrain(Y, labels, 4, Hyper(s0=1, iters_block=5, iters_full=5))
    np.testing.assert_allclose(np.linalg.norm(model.D, axis=0), 1.0)
    pred = [classify(model, Y[:, k]).label for k in range(labels.size)]
    assert np.mean(np.array(pred) == labels) == 1.0
    assert classify(model, Y[:, 0]).margin() > 0


def test_toddler_update_keeps_separable_accuracy(rng):
    Y, labels = clustered(rng)
    model, _ = lcksvd_pretrain(Y, labels, 4, Hyper(s0=1, iters_block=5, iters_full=5, renorm_every=7))
    for k in rng.permutation(labels.size):
        toddler_update(model, Y[:, k], int(labels[k]))
    for k in range(labels.size):
        toddler_update(model, Y[:, k])
    pred = [classify(model, Y[:, k]).label for k in range(labels.size)]
    assert np.mean(np.array(pred) == labels) == 1.0
    assert model.n_online == 2 * labels.size
    assert model.lam == pytest.approx(np.linalg.eigvalsh(model.G)[-1], rel=1e-3)


def test_toddler_first_update_uses_initial_lambda(rng):
    Y, labels = clustered(rng)
    model, _ = lcksvd_pretrain(Y, labels, 4, Hyper(s0=1, iters_block=2, iters_full=2))
    W0 = model.W.copy()
    x = omp(model.D, Y[:, 0], 1)
    toddler_update(model, Y[:, 0], 0, x=x)
    h = np.eye(4)[0]
    np.testing.assert_allclose(model.W, tempered_update(W0, h, x, 8.0), atol=1e-12)


def test_renormalize_preserves_scores(rng):
    Y, labels = clustered(rng)
    model, _ = lcksvd_pretrain(Y, labels, 4, Hyper(s0=2, iters_block=2, iters_full=2))
    model.D *= rng.uniform(0.5, 2.0, model.n_atoms)
    x = np.linalg.lstsq(model.D[:, :3], Y[:, 0], rcond=None)[0]
    before = model.W[:, :3] @ x
    snap = model.snapshot()
    model.renormalize()
    n = np.linalg.norm(snap.D[:, :3], axis=0)
    np.testing.assert_allclose(model.W[:, :3] @ (x * n), before, atol=1e-12)
    np.testing.assert_allclose(model.G @ model.Ginv, snap.G @ snap.Ginv, atol=1e-6)


def test_update_validation(rng):
    Y, labels = clustered(rng)
    model, _ = lcksvd_pretrain(Y, labels, 4, Hyper(s0=1, iters_block=2, iters_full=2))
    with pytest.raises(ValidationError):
        toddler_update(model, Y[:3, 0])
    with pytest.raises(ValidationError):
        toddler_update(model, Y[:, 0], 9)
    empty = DLModel(model.D, model.W, model.A, None, None, model.atom_class)
    with pytest.raises(ModelStateError):
        toddler_update(empty, Y[:, 0])


def test_model_roundtrip(rng):
    Y, labels = clustered(rng)
    model, _ = lcksvd_pretrain(Y, labels, 4, Hyper(s0=1, iters_block=2, iters_full=2))
    toddler_update(model, Y[:, 0], 0)
    toddler_update(model, Y[:, 1], 0)
    blob = dumps_model(model)
    back = loads_model(blob)
    assert dumps_model(back) == blob
    np.testing.assert_array_equal(back.D, model.D)
    assert back.hyper == model.hyper and back.lam == model.lam
    with pytest.raises(ParseError):
        loads_model(b"NOTAMODEL" + blob[8:])
    with pytest.raises(ParseError):
        loads_model(blob[:-8])
