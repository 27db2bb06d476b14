"""Linear design model, history-based state reconstruction, and the
discounted value-matrix (Riccati) oracle.

Conventions used throughout the package:

* the correction input has the same width as the state (w enters the
  error dynamics as ``e_{k+1} = A e_k - w_k``), so ``n_w == n_x``;
* stacked histories are newest-first: ``[v_{k-1}; v_{k-2}; ...]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConditioningError, ObservabilityError, RiccatiConvergenceError
from .value import ValueMatrix

OBSERVABILITY_RCOND = 1e-8


@dataclass(frozen=True)
class SystemModel:
    """Discrete-time linear triple (A, B, C).

    Construction fails unless (A, C) is observable: the smallest singular
    value of the observability matrix must exceed OBSERVABILITY_RCOND times
    the largest.  ``sample_time`` is carried as metadata only.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sample_time: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n or C.shape[0] < 1:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        for M in (A, B, C):
            M.setflags(write=False)

        O = observability_matrix(A, C)
        sv = np.linalg.svd(O, compute_uv=False)
        rank = int(np.sum(sv > OBSERVABILITY_RCOND * sv[0]))
        if rank < n:
            raise ObservabilityError(rank, n)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def n_w(self) -> int:
        # correction width is pinned to the state dimension
        return self.n_x


@dataclass(frozen=True)
class CostConfig:
    """Quadratic stage-cost weights and the discount factor.

    Q weighs the output error (PSD), R the correction term (PD), and
    0 <= gamma < 1 discounts future stage costs.
    """

    Q: np.ndarray
    R: np.ndarray
    gamma: float

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError(f"Q must be square, got {Q.shape}")
        if R.shape[0] != R.shape[1]:
            raise ValueError(f"R must be square, got {R.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0.0:
            raise ValueError("R must be positive definite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        Q.setflags(write=False)
        R.setflags(write=False)


@dataclass(frozen=True)
class ReconstructionMatrices:
    """Maps measured correction/output-error histories to the current
    state-estimation error: ``e_k = M_w w_hist + M_y y_hist``."""

    observability: np.ndarray     # (n_x*n_y, n_x)
    left_inverse: np.ndarray      # (n_x, n_x*n_y)
    toeplitz_T: np.ndarray        # (n_x*n_y, n_x*n_w)
    controllability_like: np.ndarray  # (n_x, n_x*n_w)
    M_w: np.ndarray               # (n_x, n_x*n_w)
    M_y: np.ndarray               # (n_x, n_x*n_y)
    n_x: int
    n_y: int

    @property
    def n_w(self) -> int:
        return self.n_x


@dataclass(frozen=True)
class RiccatiSolution:
    """Converged quadratic value matrix for the discounted error-estimation
    problem, with iteration diagnostics."""

    P: np.ndarray
    iterations: int
    residual: float


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Stack [C A^{n-1}; ...; C A; C] (newest dynamics on top, matching the
    newest-first history stacking)."""
    n = A.shape[0]
    blocks = [C @ np.linalg.matrix_power(A, n - 1 - i) for i in range(n)]
    return np.vstack(blocks)


def build_reconstruction(model: SystemModel) -> ReconstructionMatrices:
    """Construct the history-to-error-state maps for an observable model.

    Returns all intermediate matrices; M_w and M_y satisfy
    ``M_w = Ccal - A^{n_x} O^+ T`` and ``M_y = A^{n_x} O^+`` by
    construction, with ``O^+ = (O'O)^{-1}O'``.
    """
    A, C = model.A, model.C
    n_x, n_y, n_w = model.n_x, model.n_y, model.n_w

    O = observability_matrix(A, C)
    # left inverse via Cholesky of the (well-conditioned, rank-checked) Gram
    left_inv = np.linalg.solve(O.T @ O, O.T)

    powers = [np.linalg.matrix_power(A, i) for i in range(n_x + 1)]

    T = np.zeros((n_x * n_y, n_x * n_w))
    for i in range(n_x):
        for j in range(i + 1, n_x):
            T[i * n_y:(i + 1) * n_y, j * n_w:(j + 1) * n_w] = -C @ powers[j - i - 1]

    Ccal = np.hstack([-powers[i] for i in range(n_x)])

    A_n = powers[n_x]
    M_w = Ccal - A_n @ left_inv @ T
    M_y = A_n @ left_inv

    return ReconstructionMatrices(
        observability=O,
        left_inverse=left_inv,
        toeplitz_T=T,
        controllability_like=Ccal,
        M_w=M_w,
        M_y=M_y,
        n_x=n_x,
        n_y=n_y,
    )


def reconstruct_error_state(
    rec: ReconstructionMatrices, w_hist: np.ndarray, y_hist: np.ndarray
) -> np.ndarray:
    """Recover the current error state from newest-first stacked histories
    (w_{k-1} on top)."""
    w_hist = np.asarray(w_hist, dtype=float).reshape(-1)
    y_hist = np.asarray(y_hist, dtype=float).reshape(-1)
    if w_hist.shape[0] != rec.M_w.shape[1]:
        raise ValueError(
            f"w history must have length {rec.M_w.shape[1]}, got {w_hist.shape[0]}"
        )
    if y_hist.shape[0] != rec.M_y.shape[1]:
        raise ValueError(
            f"output-error history must have length {rec.M_y.shape[1]}, "
            f"got {y_hist.shape[0]}"
        )
    return rec.M_w @ w_hist + rec.M_y @ y_hist


def riccati_map(P: np.ndarray, model: SystemModel, cost: CostConfig) -> np.ndarray:
    """One application of the discounted fixed-point map."""
    A, C = model.A, model.C
    Q, R, g = cost.Q, cost.R, cost.gamma
    Qbar = C.T @ Q @ C
    PA = P @ A
    return Qbar + g * A.T @ PA - g * g * A.T @ P @ np.linalg.solve(R + g * P, PA)


def solve_discounted_riccati(
    model: SystemModel,
    cost: CostConfig,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> RiccatiSolution:
    """Solve ``P = C'QC + g A'PA - g^2 A'P(R + gP)^{-1}PA`` by fixed-point
    iteration from ``P0 = C'QC``.

    The discount g < 1 contracts the map at the scales this package
    targets; non-convergence raises with the last residual.
    """
    if cost.Q.shape[0] != model.n_y:
        raise ValueError(
            f"Q must be {model.n_y}x{model.n_y} for this model, got {cost.Q.shape}"
        )
    if cost.R.shape[0] != model.n_w:
        raise ValueError(
            f"R must be {model.n_w}x{model.n_w} for this model, got {cost.R.shape}"
        )
    P = model.C.T @ cost.Q @ model.C
    residual = np.inf
    for it in range(1, max_iter + 1):
        P_next = riccati_map(P, model, cost)
        P_next = 0.5 * (P_next + P_next.T)
        residual = float(np.linalg.norm(P_next - P, "fro"))
        P = P_next
        if residual < tol:
            return RiccatiSolution(P=P, iterations=it, residual=residual)
    raise RiccatiConvergenceError(residual, max_iter)


def closed_form_value_matrix(
    P: RiccatiSolution | np.ndarray, rec: ReconstructionMatrices
) -> ValueMatrix:
    """Lift the state-space value matrix onto stacked histories:
    ``H = [M_w M_y]' P [M_w M_y]``."""
    P_mat = P.P if isinstance(P, RiccatiSolution) else np.asarray(P, dtype=float)
    if P_mat.shape != (rec.n_x, rec.n_x):
        raise ValueError(
            f"P must be {rec.n_x}x{rec.n_x}, got {P_mat.shape}"
        )
    M = np.hstack([rec.M_w, rec.M_y])
    H = M.T @ P_mat @ M
    H = 0.5 * (H + H.T)
    return ValueMatrix(H, n_x=rec.n_x, n_y=rec.n_y)


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got {M.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


# -- JSON wire formats ----------------------------------------------------

def _matrix(data, name: str) -> np.ndarray:
    try:
        return np.atleast_2d(np.asarray(data, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"field {name!r} is not a numeric matrix") from exc


def load_model(path: str | Path) -> SystemModel:
    """Read a model file: JSON with row-major "A", "B", "C", "sample_time"."""
    with open(path) as fh:
        doc = json.load(fh)
    return SystemModel(
        A=_matrix(doc["A"], "A"),
        B=_matrix(doc["B"], "B"),
        C=_matrix(doc["C"], "C"),
        sample_time=float(doc.get("sample_time", 1.0)),
    )


def save_model(model: SystemModel, path: str | Path) -> None:
    doc = {
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "C": model.C.tolist(),
        "sample_time": model.sample_time,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_cost(path: str | Path) -> CostConfig:
    """Read a cost file: JSON with "Q", "R", "gamma"."""
    with open(path) as fh:
        doc = json.load(fh)
    return CostConfig(
        Q=_matrix(doc["Q"], "Q"),
        R=_matrix(doc["R"], "R"),
        gamma=float(doc["gamma"]),
    )


def save_cost(cost: CostConfig, path: str | Path) -> None:
    doc = {"Q": cost.Q.tolist(), "R": cost.R.tolist(), "gamma": cost.gamma}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
