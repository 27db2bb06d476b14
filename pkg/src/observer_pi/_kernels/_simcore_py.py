"""Pure-NumPy simulation stepping loops.

Reference implementation of the compiled core in ``_simcore.pyx``; the two
are interchangeable (selected in ``__init__``) and agree to floating-point
roundoff.  All policy logic lives here so the per-step recursion stays in
one place:

    policy kinds: 0 = zero, 1 = output-injection gain L,
                  2 = measured-data gains (Fw, Fy) with warm-up
    warm kinds:   0 = zero, 1 = output-injection gain

Both loops return the step index at which the state became unbounded, or
-1 on a clean run.
"""

from __future__ import annotations

import numpy as np

DIVERGENCE_BOUND = 1e12

BACKEND = "python"


def _policy_step(
    k,
    nx,
    ny,
    nw,
    ytilde,
    w,
    noise,
    policy_kind,
    L,
    Fw,
    Fy,
    warm_kind,
    warm_L,
):
    """Correction term at step k (including probing noise)."""
    if policy_kind == 1:
        wk = L @ ytilde[k]
    elif policy_kind == 2:
        if k < nx:
            wk = warm_L @ ytilde[k] if warm_kind == 1 else np.zeros(nw)
        else:
            w_stack = w[k - 1:k - nx:-1].reshape(-1) if nx > 1 else np.empty(0)
            y_stack = ytilde[k:k - nx:-1].reshape(-1) if k >= nx else None
            wk = Fw @ w_stack + Fy @ y_stack
    else:
        wk = np.zeros(nw)
    return wk + noise[k]


def linear_loop(A, B, C, u, noise, policy_kind, L, Fw, Fy, warm_kind, warm_L,
                x0, xh0, x, xh, y, yh, ytilde, w):
    """Plant x_{k+1} = A x_k + B u_k, observer xh_{k+1} = A xh_k + B u_k + w_k."""
    steps = u.shape[0]
    nx = A.shape[0]
    ny = C.shape[0]
    nw = nx
    x[0] = x0
    xh[0] = xh0
    for k in range(steps):
        y[k] = C @ x[k]
        yh[k] = C @ xh[k]
        ytilde[k] = y[k] - yh[k]
        w[k] = _policy_step(k, nx, ny, nw, ytilde, w, noise, policy_kind,
                            L, Fw, Fy, warm_kind, warm_L)
        if np.max(np.abs(xh[k])) > DIVERGENCE_BOUND or not np.all(
            np.isfinite(w[k])
        ):
            return k
        if k + 1 < steps:
            x[k + 1] = A @ x[k] + B @ u[k]
            xh[k + 1] = A @ xh[k] + B @ u[k] + w[k]
    return -1


def pendulum_loop(damping, gravity_term, dt, substeps, integrator,
                  A, B, C, u, noise, policy_kind, L, Fw, Fy, warm_kind, warm_L,
                  x0, xh0, x, xh, y, yh, ytilde, w):
    """Nonlinear plant th'' = u - damping*th' - gravity_term*sin(th),
    integrated per sample; observer uses the linear design model."""
    steps = u.shape[0]
    nx = A.shape[0]
    ny = C.shape[0]
    nw = nx
    h = dt / substeps
    x[0] = x0
    xh[0] = xh0
    for k in range(steps):
        y[k] = C @ x[k]
        yh[k] = C @ xh[k]
        ytilde[k] = y[k] - yh[k]
        w[k] = _policy_step(k, nx, ny, nw, ytilde, w, noise, policy_kind,
                            L, Fw, Fy, warm_kind, warm_L)
        if (
            np.max(np.abs(xh[k])) > DIVERGENCE_BOUND
            or np.max(np.abs(x[k])) > DIVERGENCE_BOUND
            or not np.all(np.isfinite(w[k]))
        ):
            return k
        if k + 1 < steps:
            th, om = x[k, 0], x[k, 1]
            uk = u[k, 0] if u.shape[1] else 0.0
            if integrator == 0:  # rk4
                for _ in range(substeps):
                    k1t = om
                    k1o = uk - damping * om - gravity_term * np.sin(th)
                    k2t = om + 0.5 * h * k1o
                    k2o = uk - damping * k2t - gravity_term * np.sin(th + 0.5 * h * k1t)
                    k3t = om + 0.5 * h * k2o
                    k3o = uk - damping * k3t - gravity_term * np.sin(th + 0.5 * h * k2t)
                    k4t = om + h * k3o
                    k4o = uk - damping * k4t - gravity_term * np.sin(th + h * k3t)
                    th = th + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
                    om = om + (h / 6.0) * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
            else:  # euler
                for _ in range(substeps):
                    dth = om
                    dom = uk - damping * om - gravity_term * np.sin(th)
                    th = th + h * dth
                    om = om + h * dom
            x[k + 1, 0] = th
            x[k + 1, 1] = om
            xh[k + 1] = A @ xh[k] + B @ u[k] + w[k]
    return -1
