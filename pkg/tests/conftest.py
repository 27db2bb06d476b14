"""Shared fixtures: the reference pendulum problem and its closed-form
solution, plus small helpers used across test modules."""

from __future__ import annotations

import numpy as np
import pytest

from observer_pi import (
    CostConfig,
    ExcitationConfig,
    PendulumParams,
    SystemModel,
    build_reconstruction,
    closed_form_value_matrix,
    solve_discounted_riccati,
)


@pytest.fixture(scope="session")
def pendulum_model() -> SystemModel:
    return SystemModel(
        A=[[0.95, 0.1], [-0.98, 0.94]],
        B=[[0.005], [0.098]],
        C=[[0.0, 1.0]],
        sample_time=0.1,
    )


@pytest.fixture(scope="session")
def pendulum_cost() -> CostConfig:
    return CostConfig(Q=[[10.0]], R=np.eye(2), gamma=0.6)


@pytest.fixture(scope="session")
def pendulum_riccati(pendulum_model, pendulum_cost):
    return solve_discounted_riccati(pendulum_model, pendulum_cost)


@pytest.fixture(scope="session")
def pendulum_reconstruction(pendulum_model):
    return build_reconstruction(pendulum_model)


@pytest.fixture(scope="session")
def pendulum_H_star(pendulum_riccati, pendulum_reconstruction):
    return closed_form_value_matrix(pendulum_riccati, pendulum_reconstruction)


@pytest.fixture(scope="session")
def pendulum_params() -> PendulumParams:
    return PendulumParams()


@pytest.fixture()
def quiet_excitation() -> ExcitationConfig:
    return ExcitationConfig(noise_amplitude=0.0, seed=0)


def random_observable_model(rng: np.random.Generator, n_x: int, n_y: int
                            ) -> SystemModel:
    """Draw a stable-ish observable (A, C) pair; retries until the
    observability check passes."""
    for _ in range(100):
        A = rng.standard_normal((n_x, n_x))
        A = 0.9 * A / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-6)
        C = rng.standard_normal((n_y, n_x))
        B = rng.standard_normal((n_x, 1))
        try:
            return SystemModel(A=A, B=B, C=C)
        except Exception:
            continue
    raise RuntimeError("could not draw an observable model")
