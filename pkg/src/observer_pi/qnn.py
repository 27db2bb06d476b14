"""Convex training of the two-layer quadratic network.

For squared loss the network's training problem reduces exactly to a
regression in the symmetric matrix H of its quadratic input-output map:

* beta = 0: plain least squares over the free entries of H (solved with a
  rank-revealing factorization; underdetermined data raises);
* beta > 0: nuclear-norm-regularized least squares, solved by accelerated
  proximal gradient with eigenvalue soft-thresholding.  Splitting H into
  its positive and negative spectral parts makes the trace regularizer of
  the conic dual equal to ||H||_*, so this is the exact dual solution for
  the pure-square activation; see docs/convex_reduction.md for the
  one-page argument.

Hidden neurons are recovered from the eigendecomposition of H: unit-norm
input weights are eigenvectors, output weights the eigenvalues scaled by
the activation's quadratic coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IdentifiabilityError, TrainingConvergenceError
from .value import ValueMatrix, independent_element_count

NEURON_RANK_RTOL = 1e-10
PROX_FIXED_POINT_TOL = 1e-8
LSTSQ_RCOND = 1e-10


@dataclass(frozen=True)
class ActivationCoeffs:
    """Coefficients of the degree-two activation a*z^2 + b*z + c."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.a == 0.0:
            raise ValueError("quadratic coefficient a must be nonzero")

    @property
    def is_pure_square(self) -> bool:
        return self.b == 0.0 and self.c == 0.0


@dataclass(frozen=True)
class QnnTrainingProblem:
    """Regression data plus activation and regularization settings."""

    inputs: np.ndarray   # (N, n)
    labels: np.ndarray   # (N,)
    activation: ActivationCoeffs = ActivationCoeffs()
    beta: float = 0.0
    loss: str = "squared"

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        Y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"{X.shape[0]} inputs but {Y.shape[0]} labels"
            )
        if X.shape[0] < 1:
            raise ValueError("need at least one training pair")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.loss != "squared":
            raise ValueError(f"unsupported loss {self.loss!r}")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", Y)

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class QnnModel:
    """Trained network in its quadratic-form parameterization.

    ``H`` acts on the raw input for the pure-square activation, and on the
    augmented input [X; 1] otherwise.  ``neurons`` is the recovered
    two-layer form (unit input weights, scalar output weights); it is
    populated for the pure-square activation, where the spectral
    factorization reproduces the mapping exactly.
    """

    H: np.ndarray
    activation: ActivationCoeffs
    beta: float
    objective: float
    neurons: tuple[tuple[np.ndarray, float], ...] | None = None

    @property
    def augmented(self) -> bool:
        return not self.activation.is_pure_square

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.augmented:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        return np.einsum("ki,ij,kj->k", X, self.H, X)


def _triu_indices(n: int):
    return np.triu_indices(n)


def quadratic_features(X: np.ndarray) -> np.ndarray:
    """Monomials x_p x_q (p <= q), off-diagonal terms doubled, so that
    features @ triu(H) == x' H x for symmetric H."""
    X = np.atleast_2d(X)
    n = X.shape[1]
    rows, cols = _triu_indices(n)
    feats = X[:, rows] * X[:, cols]
    feats[:, rows != cols] *= 2.0
    return feats


def _triu_to_symmetric(h: np.ndarray, n: int) -> np.ndarray:
    H = np.zeros((n, n))
    rows, cols = _triu_indices(n)
    H[rows, cols] = h
    H[cols, rows] = h
    return H


def _lstsq_h(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact least-squares fit of a symmetric quadratic form; raises if the
    design matrix does not pin down every free entry."""
    n = X.shape[1]
    M = independent_element_count_for_dim(n)
    if X.shape[0] < M:
        raise IdentifiabilityError(
            f"{X.shape[0]} samples cannot determine the {M} free entries of "
            f"a symmetric {n}x{n} form; collect at least {M}"
        )
    Phi = quadratic_features(X)
    h, _, rank, _ = scipy.linalg.lstsq(Phi, Y, lapack_driver="gelsd",
                                       cond=LSTSQ_RCOND)
    if rank < M:
        raise IdentifiabilityError(
            f"design matrix has numeric rank {rank} < {M}; the data is not "
            f"persistently exciting"
        )
    resid = Phi @ h - Y
    return _triu_to_symmetric(h, n), float(resid @ resid)


def independent_element_count_for_dim(n: int) -> int:
    """Free entries of a symmetric n x n matrix."""
    return n * (n + 1) // 2


def _soft_threshold_eigs(H: np.ndarray, tau: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(H)
    vals = np.sign(vals) * np.maximum(np.abs(vals) - tau, 0.0)
    return (vecs * vals) @ vecs.T


def _nuclear_norm(H: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(H)).sum())


def _fista_h(
    X: np.ndarray, Y: np.ndarray, beta: float, max_iter: int = 20000
) -> tuple[np.ndarray, float]:
    """Minimize sum_i (x_i' H x_i - y_i)^2 + beta * ||H||_* over symmetric H
    by FISTA with adaptive restart; returns (H, objective)."""
    n = X.shape[1]
    # outer products as N x n^2 rows; their Gram bounds the gradient Lipschitz
    S = np.einsum("ki,kj->kij", X, X).reshape(X.shape[0], -1)
    lam = scipy.linalg.eigvalsh(S @ S.T)[-1] if S.shape[0] <= S.shape[1] else \
        scipy.linalg.eigvalsh(S.T @ S)[-1]
    step = 1.0 / (2.0 * lam)

    def fit_and_grad(H):
        r = np.einsum("ki,ij,kj->k", X, H, X) - Y
        G = 2.0 * np.einsum("k,ki,kj->ij", r, X, X)
        return float(r @ r), 0.5 * (G + G.T)

    def objective(H):
        r = np.einsum("ki,ij,kj->k", X, H, X) - Y
        return float(r @ r) + beta * _nuclear_norm(H)

    H = np.zeros((n, n))
    Z = H.copy()
    t = 1.0
    obj_prev = objective(H)
    residual = np.inf
    for _ in range(max_iter):
        _, G = fit_and_grad(Z)
        H_next = _soft_threshold_eigs(Z - step * G, step * beta)
        # fixed-point residual of the prox-gradient map at the new iterate
        _, G_next = fit_and_grad(H_next)
        fixed = _soft_threshold_eigs(H_next - step * G_next, step * beta)
        residual = np.linalg.norm(H_next - fixed, "fro") / max(
            1.0, np.linalg.norm(H_next, "fro")
        )
        obj = objective(H_next)
        if obj > obj_prev:  # adaptive restart keeps the objective monotone
            Z = H_next.copy()
            t = 1.0
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Z = H_next + ((t - 1.0) / t_next) * (H_next - H)
            t = t_next
        H = H_next
        obj_prev = min(obj_prev, obj)
        if residual < PROX_FIXED_POINT_TOL:
            return H, objective(H)
    raise TrainingConvergenceError(residual)


def _lstsq_augmented(
    X: np.ndarray, Y: np.ndarray, act: ActivationCoeffs
) -> tuple[np.ndarray, float]:
    """General-activation fit via the augmented [X; 1] embedding.

    Parameterizes the map a*x'Zx + b*x'z + c*tr(Z) and packs the solution
    into the (n+1)-dimensional augmented quadratic form."""
    n = X.shape[1]
    rows, cols = _triu_indices(n)
    Phi_quad = act.a * quadratic_features(X)
    if act.c != 0.0:
        Phi_quad = Phi_quad + act.c * (rows == cols).astype(float)
    blocks = [Phi_quad]
    if act.b != 0.0:
        blocks.append(act.b * X)
    Phi = np.hstack(blocks)
    M = Phi.shape[1]
    if X.shape[0] < M:
        raise IdentifiabilityError(
            f"{X.shape[0]} samples cannot determine {M} parameters"
        )
    theta, _, rank, _ = scipy.linalg.lstsq(Phi, Y, lapack_driver="gelsd",
                                           cond=LSTSQ_RCOND)
    if rank < M:
        raise IdentifiabilityError(
            f"design matrix has numeric rank {rank} < {M}"
        )
    n_quad = independent_element_count_for_dim(n)
    Z = _triu_to_symmetric(theta[:n_quad], n)
    z = theta[n_quad:] if act.b != 0.0 else np.zeros(n)
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = act.a * Z
    H[:n, n] = 0.5 * act.b * z
    H[n, :n] = 0.5 * act.b * z
    H[n, n] = act.c * np.trace(Z)
    resid = Phi @ theta - Y
    return H, float(resid @ resid)


def train_quadratic(problem: QnnTrainingProblem) -> QnnModel:
    """Globally solve the network training problem in H-parameterization."""
    X, Y = problem.inputs, problem.labels
    act = problem.activation
    if act.is_pure_square:
        if problem.beta == 0.0:
            H, objective = _lstsq_h(X, Y)
        else:
            # the conic-dual trace regularizer acts on H/a, so rescale beta
            H, objective = _fista_h(X, Y, problem.beta / abs(act.a))
        neurons = recover_neurons(H, act)
        return QnnModel(H=H, activation=act, beta=problem.beta,
                        objective=objective, neurons=tuple(neurons))
    if problem.beta != 0.0:
        raise NotImplementedError(
            "regularized training is only implemented for the pure-square "
            "activation (a*z^2)"
        )
    H, objective = _lstsq_augmented(X, Y, act)
    return QnnModel(H=H, activation=act, beta=problem.beta,
                    objective=objective, neurons=None)


def recover_neurons(
    H: np.ndarray, activation: ActivationCoeffs
) -> list[tuple[np.ndarray, float]]:
    """Spectral two-layer factorization of a pure-square-activation map.

    Each eigenpair (q, lam) with |lam| above the numeric-rank threshold
    yields one hidden neuron with unit input weights q and output weight
    lam / a, so that sum_j a (x'q_j)^2 v_j == x' H x."""
    if not activation.is_pure_square:
        raise ValueError("neuron recovery requires a pure-square activation")
    H = np.asarray(H, dtype=float)
    if not np.allclose(H, H.T, atol=1e-9 * max(1.0, np.abs(H).max())):
        raise ValueError("matrix must be symmetric")
    vals, vecs = np.linalg.eigh(H)
    cutoff = NEURON_RANK_RTOL * max(np.abs(vals).max(), 1e-300)
    return [
        (vecs[:, j].copy(), float(vals[j] / activation.a))
        for j in range(vals.shape[0])
        if abs(vals[j]) > cutoff
    ]


def evaluate_neurons(
    neurons, activation: ActivationCoeffs, X: np.ndarray
) -> np.ndarray:
    """Forward pass through the recovered two-layer form."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros(X.shape[0])
    a, b, c = activation.a, activation.b, activation.c
    for Wj, vj in neurons:
        z = X @ Wj
        out += (a * z * z + b * z + c) * vj
    return out


def extract_mapping(model: QnnModel, n_x: int, n_y: int) -> ValueMatrix:
    """Re-label the learned quadratic form as a value matrix over stacked
    histories (pure-square activation only, as used by the PI loop)."""
    if model.augmented:
        raise ValueError(
            "value-matrix extraction requires the pure-square activation"
        )
    expected = n_x * (n_x + n_y)
    if model.H.shape[0] != expected:
        raise ValueError(
            f"mapping dimension {model.H.shape[0]} does not equal "
            f"n_x*(n_w+n_y)={expected}"
        )
    H = 0.5 * (model.H + model.H.T)
    return ValueMatrix(H, n_x=n_x, n_y=n_y)
