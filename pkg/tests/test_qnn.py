"""Convex training of the quadratic network."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from observer_pi import (
    ActivationCoeffs,
    IdentifiabilityError,
    QnnTrainingProblem,
    evaluate_neurons,
    quadratic_features,
    recover_neurons,
    train_quadratic,
)
from observer_pi.qnn import (
    _nuclear_norm,
    _soft_threshold_eigs,
    independent_element_count_for_dim,
)


def _random_symmetric(rng, n, scale=1.0):
    S = scale * rng.standard_normal((n, n))
    return 0.5 * (S + S.T)


def _problem_from_H(rng, H, N, beta=0.0, act=None):
    n = H.shape[0]
    X = rng.standard_normal((N, n))
    Y = np.einsum("ki,ij,kj->k", X, H, X)
    return QnnTrainingProblem(
        inputs=X, labels=Y, beta=beta,
        activation=act or ActivationCoeffs(1.0, 0.0, 0.0),
    )


# -- features -------------------------------------------------------------

def test_quadratic_features_reproduce_form():
    rng = np.random.default_rng(0)
    H = _random_symmetric(rng, 4)
    X = rng.standard_normal((7, 4))
    h = H[np.triu_indices(4)]
    np.testing.assert_allclose(
        quadratic_features(X) @ h,
        np.einsum("ki,ij,kj->k", X, H, X),
        atol=1e-12,
    )


def test_feature_count():
    X = np.zeros((3, 5))
    assert quadratic_features(X).shape == (3, 15)
    assert independent_element_count_for_dim(5) == 15


# -- unregularized training ----------------------------------------------

@given(n=st.integers(3, 8), seed=st.integers(0, 100))
@settings(max_examples=15, deadline=None)
def test_generate_then_recover(n, seed):
    rng = np.random.default_rng(seed)
    H = _random_symmetric(rng, n)
    M = independent_element_count_for_dim(n)
    model = train_quadratic(_problem_from_H(rng, H, 5 * M))
    assert np.abs(model.H - H).max() < 1e-7
    assert model.objective < 1e-10


def test_underdetermined_raises():
    rng = np.random.default_rng(1)
    H = _random_symmetric(rng, 4)
    with pytest.raises(IdentifiabilityError, match="at least"):
        train_quadratic(_problem_from_H(rng, H, 5))


def test_rank_deficient_design_raises():
    # all samples on a 1-D subspace: features cannot separate H entries
    rng = np.random.default_rng(2)
    v = rng.standard_normal(4)
    X = np.outer(rng.standard_normal(50), v)
    Y = np.einsum("ki,kj,ij->k", X, X, np.eye(4))
    with pytest.raises(IdentifiabilityError, match="rank"):
        train_quadratic(QnnTrainingProblem(inputs=X, labels=Y))


def test_normal_equation_certificate():
    # at the least-squares optimum the gradient in feature space vanishes
    rng = np.random.default_rng(3)
    H = _random_symmetric(rng, 5)
    X = rng.standard_normal((120, 5))
    Y = np.einsum("ki,ij,kj->k", X, H, X) + 0.01 * rng.standard_normal(120)
    model = train_quadratic(QnnTrainingProblem(inputs=X, labels=Y))
    Phi = quadratic_features(X)
    h = model.H[np.triu_indices(5)]
    grad = Phi.T @ (Phi @ h - Y)
    assert np.abs(grad).max() < 1e-8 * max(1.0, np.abs(Phi.T @ Y).max())


def test_predict_matches_quadratic_form():
    rng = np.random.default_rng(4)
    H = _random_symmetric(rng, 3)
    model = train_quadratic(_problem_from_H(rng, H, 60))
    X = rng.standard_normal((9, 3))
    np.testing.assert_allclose(
        model.predict(X), np.einsum("ki,ij,kj->k", X, H, X), atol=1e-9
    )


def test_scaled_activation_rescales_mapping():
    # with activation a z^2 the learned H absorbs a; the end-to-end map and
    # the recovered neurons must still reproduce the labels
    rng = np.random.default_rng(5)
    H = _random_symmetric(rng, 3)
    act = ActivationCoeffs(a=-2.5)
    model = train_quadratic(_problem_from_H(rng, H, 60, act=act))
    np.testing.assert_allclose(model.H, H, atol=1e-9)
    X = rng.standard_normal((6, 3))
    np.testing.assert_allclose(
        evaluate_neurons(model.neurons, act, X), model.predict(X), atol=1e-9
    )


# -- neuron recovery ------------------------------------------------------

def test_recover_neurons_round_trip():
    rng = np.random.default_rng(6)
    H = _random_symmetric(rng, 5)
    act = ActivationCoeffs(1.0, 0.0, 0.0)
    neurons = recover_neurons(H, act)
    assert len(neurons) == 5
    for Wj, _ in neurons:
        assert np.linalg.norm(Wj) == pytest.approx(1.0)
    X = rng.standard_normal((20, 5))
    np.testing.assert_allclose(
        evaluate_neurons(neurons, act, X),
        np.einsum("ki,ij,kj->k", X, H, X), atol=1e-10,
    )


def test_recover_neurons_drops_null_directions():
    q = np.array([1.0, 0.0, 0.0])
    H = 2.0 * np.outer(q, q)  # rank one
    neurons = recover_neurons(H, ActivationCoeffs())
    assert len(neurons) == 1
    np.testing.assert_allclose(np.abs(neurons[0][0]), q, atol=1e-12)
    assert neurons[0][1] == pytest.approx(2.0)


def test_recover_neurons_requires_pure_square():
    with pytest.raises(ValueError, match="pure-square"):
        recover_neurons(np.eye(2), ActivationCoeffs(1.0, 0.5, 0.0))


# -- regularized training -------------------------------------------------

def test_soft_threshold_shrinks_eigenvalues():
    H = np.diag([3.0, -2.0, 0.5])
    out = _soft_threshold_eigs(H, 1.0)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(out)),
                               [-1.0, 0.0, 2.0], atol=1e-12)


def test_small_beta_approaches_least_squares():
    rng = np.random.default_rng(7)
    H = _random_symmetric(rng, 4)
    prob0 = _problem_from_H(rng, H, 80)
    model0 = train_quadratic(prob0)
    prob = QnnTrainingProblem(inputs=prob0.inputs, labels=prob0.labels,
                              beta=1e-8)
    model = train_quadratic(prob)
    assert np.abs(model.H - model0.H).max() < 1e-4


def test_beta_sweep_shrinks_and_drops_rank():
    rng = np.random.default_rng(8)
    H = _random_symmetric(rng, 4)
    prob0 = _problem_from_H(rng, H, 80)
    norms, ranks = [], []
    for beta in (0.0, 0.1, 1.0, 10.0, 1000.0):
        prob = QnnTrainingProblem(inputs=prob0.inputs, labels=prob0.labels,
                                  beta=beta)
        model = train_quadratic(prob)
        norms.append(_nuclear_norm(model.H))
        vals = np.abs(np.linalg.eigvalsh(model.H))
        ranks.append(int(np.sum(vals > 1e-8 * max(vals.max(), 1e-300))))
    assert all(a >= b - 1e-9 for a, b in zip(norms, norms[1:]))
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))
    assert norms[-1] < 1e-6  # huge beta drives H to zero


def test_fista_matches_subgradient_optimality():
    # check the optimality condition of the nuclear-norm problem: the
    # gradient of the fit must lie in -beta * subdifferential of ||H||_*
    rng = np.random.default_rng(9)
    H = _random_symmetric(rng, 3)
    prob0 = _problem_from_H(rng, H, 40)
    beta = 0.5
    model = train_quadratic(QnnTrainingProblem(
        inputs=prob0.inputs, labels=prob0.labels, beta=beta))
    X, Y = prob0.inputs, prob0.labels
    r = np.einsum("ki,ij,kj->k", X, model.H, X) - Y
    G = 2.0 * np.einsum("k,ki,kj->ij", r, X, X)
    G = 0.5 * (G + G.T)
    vals, vecs = np.linalg.eigh(model.H)
    for j, lam in enumerate(vals):
        if abs(lam) > 1e-7:
            # active eigendirections: gradient component equals -beta*sign
            gj = vecs[:, j] @ G @ vecs[:, j]
            assert gj == pytest.approx(-beta * np.sign(lam), abs=1e-4)
    # inactive directions: |component| <= beta
    assert np.abs(np.linalg.eigvalsh(G)).max() <= beta + 1e-4


# -- general activation ---------------------------------------------------

def test_affine_activation_fits_augmented_form():
    rng = np.random.default_rng(10)
    n = 3
    Z = _random_symmetric(rng, n)
    z = rng.standard_normal(n)
    act = ActivationCoeffs(a=2.0, b=1.0, c=-0.5)
    X = rng.standard_normal((200, n))
    Y = (act.a * np.einsum("ki,ij,kj->k", X, Z, X)
         + act.b * X @ z + act.c * np.trace(Z))
    model = train_quadratic(QnnTrainingProblem(inputs=X, labels=Y,
                                               activation=act))
    assert model.augmented
    assert model.H.shape == (n + 1, n + 1)
    np.testing.assert_allclose(model.predict(X), Y, atol=1e-8)


def test_affine_activation_rejects_regularization():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((50, 3))
    with pytest.raises(NotImplementedError):
        train_quadratic(QnnTrainingProblem(
            inputs=X, labels=np.zeros(50),
            activation=ActivationCoeffs(1.0, 1.0, 0.0), beta=0.1,
        ))


def test_zero_quadratic_coefficient_rejected():
    with pytest.raises(ValueError):
        ActivationCoeffs(a=0.0)
