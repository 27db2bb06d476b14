"""Quadratic value matrix over stacked correction/output-error histories.

The full quadratic form acts on the stacked vector

    z_k = [w_{k-1}; ...; w_{k-n_x}; ytilde_{k-1}; ...; ytilde_{k-n_x}]

(newest-first within each block).  The named partitions follow the block
layout of the shifted vector [w_k; w_{k-1..k-n_x+1}; ytilde_{k..k-n_x+1}]
used by the policy-improvement step:

    [[H11,  Hw,   Hy ],
     [Hw',  H22,  H23],
     [Hy',  H23', H33]]

with widths (n_w, (n_x-1)*n_w, n_x*n_y).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-10


def independent_element_count(n_x: int, n_y: int) -> int:
    """Number of free entries of the symmetric value matrix."""
    n = n_x * (n_x + n_y)
    return n * (n + 1) // 2


@dataclass(frozen=True)
class ValueMatrix:
    """Symmetric quadratic form over stacked histories, with the block
    accessors needed by the policy-improvement step."""

    H: np.ndarray
    n_x: int
    n_y: int

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        object.__setattr__(self, "H", H)
        n = self.n_x * (self.n_w + self.n_y)
        if H.shape != (n, n):
            raise ValueError(
                f"value matrix must be {n}x{n} for n_x={self.n_x}, "
                f"n_y={self.n_y}; got {H.shape}"
            )
        scale = max(1.0, float(np.abs(H).max()))
        if np.abs(H - H.T).max() > SYMMETRY_TOL * scale:
            raise ValueError("value matrix is not symmetric")
        H.setflags(write=False)

    @property
    def n_w(self) -> int:
        # correction width is pinned to the state dimension
        return self.n_x

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def independent_elements(self) -> int:
        return independent_element_count(self.n_x, self.n_y)

    # -- block accessors (widths n_w, (n_x-1)*n_w, n_x*n_y) ----------------
    def _splits(self) -> tuple[int, int]:
        return self.n_w, self.n_x * self.n_w

    @property
    def H11(self) -> np.ndarray:
        a, _ = self._splits()
        return self.H[:a, :a]

    @property
    def Hw(self) -> np.ndarray:
        a, b = self._splits()
        return self.H[:a, a:b]

    @property
    def Hy(self) -> np.ndarray:
        a, b = self._splits()
        return self.H[:a, b:]

    @property
    def H22(self) -> np.ndarray:
        a, b = self._splits()
        return self.H[a:b, a:b]

    @property
    def H23(self) -> np.ndarray:
        a, b = self._splits()
        return self.H[a:b, b:]

    @property
    def H33(self) -> np.ndarray:
        _, b = self._splits()
        return self.H[b:, b:]

    def quad(self, z: np.ndarray) -> float:
        """Evaluate z' H z."""
        z = np.asarray(z, dtype=float)
        return float(z @ self.H @ z)

    def frobenius_distance(self, other: "ValueMatrix | np.ndarray") -> float:
        other_H = other.H if isinstance(other, ValueMatrix) else np.asarray(other)
        return float(np.linalg.norm(self.H - other_H, "fro"))


def from_blocks(
    H11: np.ndarray,
    Hw: np.ndarray,
    Hy: np.ndarray,
    H22: np.ndarray,
    H23: np.ndarray,
    H33: np.ndarray,
    n_x: int,
    n_y: int,
) -> ValueMatrix:
    """Reassemble a ValueMatrix from its named partitions (inverse of the
    block accessors)."""
    top = np.hstack([H11, Hw, Hy])
    mid = np.hstack([np.asarray(Hw).T, H22, H23])
    bot = np.hstack([np.asarray(Hy).T, np.asarray(H23).T, H33])
    return ValueMatrix(np.vstack([top, mid, bot]), n_x=n_x, n_y=n_y)
