# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation stepping loops.

Mirrors ``_simcore_py`` operation-for-operation; see that module for the
policy/warm-up encoding.  Selected automatically at import when built.
"""

import numpy as np

cimport cython
from libc.math cimport fabs, sin, isfinite

DIVERGENCE_BOUND = 1e12
BACKEND = "compiled"

cdef double _BOUND = 1e12


cdef int _policy_step(Py_ssize_t k, Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t nw,
                      double[:, ::1] ytilde, double[:, ::1] w, const double[:, ::1] noise,
                      int policy_kind,
                      const double[:, ::1] L, const double[:, ::1] Fw, const double[:, ::1] Fy,
                      int warm_kind, const double[:, ::1] warm_L) noexcept:
    """Write the correction term (policy output + probing noise) into w[k].
    Returns 0 on success, 1 if the result is non-finite."""
    cdef Py_ssize_t i, j, s, col
    cdef double acc
    for i in range(nw):
        acc = 0.0
        if policy_kind == 1:
            for j in range(ny):
                acc += L[i, j] * ytilde[k, j]
        elif policy_kind == 2:
            if k < nx:
                if warm_kind == 1:
                    for j in range(ny):
                        acc += warm_L[i, j] * ytilde[k, j]
            else:
                # w history newest-first: w_{k-1} .. w_{k-nx+1}
                col = 0
                for s in range(1, nx):
                    for j in range(nw):
                        acc += Fw[i, col] * w[k - s, j]
                        col += 1
                # output-error history newest-first: ytilde_k .. ytilde_{k-nx+1}
                col = 0
                for s in range(0, nx):
                    for j in range(ny):
                        acc += Fy[i, col] * ytilde[k - s, j]
                        col += 1
        w[k, i] = acc + noise[k, i]
        if not isfinite(w[k, i]):
            return 1
    return 0


def linear_loop(const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] C,
                const double[:, ::1] u, const double[:, ::1] noise,
                int policy_kind, const double[:, ::1] L,
                const double[:, ::1] Fw, const double[:, ::1] Fy,
                int warm_kind, const double[:, ::1] warm_L,
                const double[::1] x0, const double[::1] xh0,
                double[:, ::1] x, double[:, ::1] xh,
                double[:, ::1] y, double[:, ::1] yh,
                double[:, ::1] ytilde, double[:, ::1] w):
    cdef Py_ssize_t steps = u.shape[0]
    cdef Py_ssize_t nx = A.shape[0]
    cdef Py_ssize_t ny = C.shape[0]
    cdef Py_ssize_t nu = B.shape[1]
    cdef Py_ssize_t nw = nx
    cdef Py_ssize_t k, i, j
    cdef double acc, mx
    for i in range(nx):
        x[0, i] = x0[i]
        xh[0, i] = xh0[i]
    for k in range(steps):
        for i in range(ny):
            acc = 0.0
            for j in range(nx):
                acc += C[i, j] * x[k, j]
            y[k, i] = acc
            acc = 0.0
            for j in range(nx):
                acc += C[i, j] * xh[k, j]
            yh[k, i] = acc
            ytilde[k, i] = y[k, i] - yh[k, i]
        if _policy_step(k, nx, ny, nw, ytilde, w, noise, policy_kind,
                        L, Fw, Fy, warm_kind, warm_L):
            return k
        mx = 0.0
        for i in range(nx):
            if fabs(xh[k, i]) > mx:
                mx = fabs(xh[k, i])
        if mx > _BOUND:
            return k
        if k + 1 < steps:
            for i in range(nx):
                acc = 0.0
                for j in range(nx):
                    acc += A[i, j] * x[k, j]
                for j in range(nu):
                    acc += B[i, j] * u[k, j]
                x[k + 1, i] = acc
                acc = 0.0
                for j in range(nx):
                    acc += A[i, j] * xh[k, j]
                for j in range(nu):
                    acc += B[i, j] * u[k, j]
                xh[k + 1, i] = acc + w[k, i]
    return -1


def pendulum_loop(double damping, double gravity_term, double dt, int substeps,
                  int integrator,
                  const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] C,
                  const double[:, ::1] u, const double[:, ::1] noise,
                  int policy_kind, const double[:, ::1] L,
                  const double[:, ::1] Fw, const double[:, ::1] Fy,
                  int warm_kind, const double[:, ::1] warm_L,
                  const double[::1] x0, const double[::1] xh0,
                  double[:, ::1] x, double[:, ::1] xh,
                  double[:, ::1] y, double[:, ::1] yh,
                  double[:, ::1] ytilde, double[:, ::1] w):
    cdef Py_ssize_t steps = u.shape[0]
    cdef Py_ssize_t nx = A.shape[0]
    cdef Py_ssize_t ny = C.shape[0]
    cdef Py_ssize_t nu = B.shape[1]
    cdef Py_ssize_t nw = nx
    cdef Py_ssize_t k, i, j, s
    cdef double acc, mx, th, om, uk, h
    cdef double k1t, k1o, k2t, k2o, k3t, k3o, k4t, k4o, dth, dom
    h = dt / substeps
    for i in range(nx):
        x[0, i] = x0[i]
        xh[0, i] = xh0[i]
    for k in range(steps):
        for i in range(ny):
            acc = 0.0
            for j in range(nx):
                acc += C[i, j] * x[k, j]
            y[k, i] = acc
            acc = 0.0
            for j in range(nx):
                acc += C[i, j] * xh[k, j]
            yh[k, i] = acc
            ytilde[k, i] = y[k, i] - yh[k, i]
        if _policy_step(k, nx, ny, nw, ytilde, w, noise, policy_kind,
                        L, Fw, Fy, warm_kind, warm_L):
            return k
        mx = 0.0
        for i in range(nx):
            if fabs(xh[k, i]) > mx:
                mx = fabs(xh[k, i])
            if fabs(x[k, i]) > mx:
                mx = fabs(x[k, i])
        if mx > _BOUND:
            return k
        if k + 1 < steps:
            th = x[k, 0]
            om = x[k, 1]
            uk = u[k, 0] if nu > 0 else 0.0
            if integrator == 0:  # rk4
                for s in range(substeps):
                    k1t = om
                    k1o = uk - damping * om - gravity_term * sin(th)
                    k2t = om + 0.5 * h * k1o
                    k2o = uk - damping * k2t - gravity_term * sin(th + 0.5 * h * k1t)
                    k3t = om + 0.5 * h * k2o
                    k3o = uk - damping * k3t - gravity_term * sin(th + 0.5 * h * k2t)
                    k4t = om + h * k3o
                    k4o = uk - damping * k4t - gravity_term * sin(th + h * k3t)
                    th = th + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
                    om = om + (h / 6.0) * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
            else:  # euler
                for s in range(substeps):
                    dth = om
                    dom = uk - damping * om - gravity_term * sin(th)
                    th = th + h * dth
                    om = om + h * dom
            x[k + 1, 0] = th
            x[k + 1, 1] = om
            for i in range(nx):
                acc = 0.0
                for j in range(nx):
                    acc += A[i, j] * xh[k, j]
                for j in range(nu):
                    acc += B[i, j] * u[k, j]
                xh[k + 1, i] = acc + w[k, i]
    return -1
