# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled marching kernel; the hot loop of the steady-flow oracle.

Mirrors ``_numpy_impl.advance`` operation for operation (same expression
grouping, same masked-branch arithmetic) so both backends produce identical
iterates up to round-off.  See the NumPy module docstring for the scheme.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, isfinite


cdef inline void _edge_bcs(double[:, ::1] a, int[:] types, double[:, ::1] values, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j, i
    # zero-gradient copies first (left, right, bottom, top) ...
    if types[0] == 1:
        for j in range(n):
            a[j, 0] = a[j, 1]
    if types[1] == 1:
        for j in range(n):
            a[j, n - 1] = a[j, n - 2]
    if types[2] == 1:
        for i in range(n):
            a[0, i] = a[1, i]
    if types[3] == 1:
        for i in range(n):
            a[n - 1, i] = a[n - 2, i]
    # ... then Dirichlet writes in the same fixed order
    if types[0] == 0:
        for j in range(n):
            a[j, 0] = values[0, j]
    if types[1] == 0:
        for j in range(n):
            a[j, n - 1] = values[1, j]
    if types[2] == 0:
        for i in range(n):
            a[0, i] = values[2, i]
    if types[3] == 0:
        for i in range(n):
            a[n - 1, i] = values[3, i]


def advance(
    cnp.ndarray[cnp.float64_t, ndim=2] u_arr,
    cnp.ndarray[cnp.float64_t, ndim=2] v_arr,
    cnp.ndarray[cnp.float64_t, ndim=2] p_arr,
    cnp.ndarray[cnp.uint8_t, ndim=2] solid_arr,
    cnp.ndarray[cnp.int32_t, ndim=2] bc_types,
    cnp.ndarray[cnp.float64_t, ndim=3] bc_values,
    double h,
    double nu,
    double dt,
    int poisson_iters,
    int n_steps,
    double tol,
    int pin_pressure,
    int transient_source,
):
    """In-place marching; returns (steps_done, last_delta, status)."""
    cdef Py_ssize_t n = u_arr.shape[0]
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] v = v_arr
    cdef double[:, ::1] p = p_arr
    cdef unsigned char[:, ::1] solid = np.ascontiguousarray(solid_arr)
    cdef int[:, :] types = bc_types
    cdef double[:, :, ::1] values = np.ascontiguousarray(bc_values)

    un_arr = np.empty_like(u_arr)
    vn_arr = np.empty_like(u_arr)
    rhs_arr = np.zeros((n - 2, n - 2))
    pw_arr = np.empty_like(u_arr)
    cdef double[:, ::1] un = un_arr
    cdef double[:, ::1] vn = vn_arr
    cdef double[:, ::1] rhs = rhs_arr
    cdef double[:, ::1] pw = pw_arr
    cdef double[:, ::1] tmp

    cdef double h2 = h * h
    cdef double hdt = h * dt

    cdef bint has_solid = bool(np.any(solid_arr))
    cdef Py_ssize_t i, j, k, it
    cdef int swapped
    cdef double ux, uy, vx, vy, lap, conv, gx, gy
    cdef double pe, pwv, pnn, ps, pc
    cdef double delta, d, pin_val, psum, cnt
    cdef int status = 1
    cdef int nonfinite
    cdef Py_ssize_t steps_done = 0

    with nogil:
        if has_solid:
            for j in range(1, n - 1):
                for i in range(1, n - 1):
                    if solid[j, i]:
                        u[j, i] = 0.0
                        v[j, i] = 0.0

        for k in range(n_steps):
            for j in range(n):
                for i in range(n):
                    un[j, i] = u[j, i]
                    vn[j, i] = v[j, i]

            # provisional velocity: viscous + convective terms only
            for j in range(1, n - 1):
                for i in range(1, n - 1):
                    if has_solid and solid[j, i]:
                        u[j, i] = 0.0
                        v[j, i] = 0.0
                        continue
                    ux = 0.5 * (un[j, i + 1] - un[j, i - 1])
                    uy = 0.5 * (un[j + 1, i] - un[j - 1, i])
                    vx = 0.5 * (vn[j, i + 1] - vn[j, i - 1])
                    vy = 0.5 * (vn[j + 1, i] - vn[j - 1, i])
                    lap = un[j, i + 1] + un[j, i - 1] + un[j + 1, i] + un[j - 1, i] - 4.0 * un[j, i]
                    conv = un[j, i] * ux + vn[j, i] * uy
                    u[j, i] = un[j, i] + dt * (nu * lap / h2 - conv / h)
                    lap = vn[j, i + 1] + vn[j, i - 1] + vn[j + 1, i] + vn[j - 1, i] - 4.0 * vn[j, i]
                    conv = un[j, i] * vx + vn[j, i] * vy
                    v[j, i] = vn[j, i] + dt * (nu * lap / h2 - conv / h)
            _edge_bcs(u, types[0], values[0], n)
            _edge_bcs(v, types[1], values[1], n)

            if transient_source:
                for j in range(1, n - 1):
                    for i in range(1, n - 1):
                        rhs[j - 1, i - 1] = (
                            0.5 * (u[j, i + 1] - u[j, i - 1]) + 0.5 * (v[j + 1, i] - v[j - 1, i])
                        ) / hdt
            else:
                for j in range(1, n - 1):
                    for i in range(1, n - 1):
                        ux = 0.5 * (un[j, i + 1] - un[j, i - 1])
                        uy = 0.5 * (un[j + 1, i] - un[j - 1, i])
                        vx = 0.5 * (vn[j, i + 1] - vn[j, i - 1])
                        vy = 0.5 * (vn[j + 1, i] - vn[j - 1, i])
                        rhs[j - 1, i - 1] = -(ux * ux + 2.0 * uy * vx + vy * vy) / h2

            swapped = 0
            for it in range(poisson_iters):
                _edge_bcs(p, types[2], values[2], n)
                for j in range(n):
                    pw[j, 0] = p[j, 0]
                    pw[j, n - 1] = p[j, n - 1]
                for i in range(n):
                    pw[0, i] = p[0, i]
                    pw[n - 1, i] = p[n - 1, i]
                for j in range(1, n - 1):
                    for i in range(1, n - 1):
                        pc = p[j, i]
                        if has_solid and solid[j, i]:
                            pw[j, i] = pc
                            continue
                        pe = p[j, i + 1]
                        pwv = p[j, i - 1]
                        pnn = p[j + 1, i]
                        ps = p[j - 1, i]
                        if has_solid:
                            if solid[j, i + 1]:
                                pe = pc
                            if solid[j, i - 1]:
                                pwv = pc
                            if solid[j + 1, i]:
                                pnn = pc
                            if solid[j - 1, i]:
                                ps = pc
                        pw[j, i] = 0.25 * (pe + pwv + pnn + ps - h2 * rhs[j - 1, i - 1])
                tmp = p
                p = pw
                pw = tmp
                swapped = 1 - swapped
            if swapped:
                # leave the result in the caller's buffer
                for j in range(n):
                    for i in range(n):
                        pw[j, i] = p[j, i]
                tmp = p
                p = pw
                pw = tmp
            _edge_bcs(p, types[2], values[2], n)
            if pin_pressure:
                pin_val = p[0, 0]
                for j in range(n):
                    for i in range(n):
                        p[j, i] = p[j, i] - pin_val

            if has_solid:
                for j in range(1, n - 1):
                    for i in range(1, n - 1):
                        if solid[j, i]:
                            psum = 0.0
                            cnt = 0.0
                            if not solid[j, i + 1]:
                                psum = psum + p[j, i + 1]
                                cnt = cnt + 1.0
                            if not solid[j, i - 1]:
                                psum = psum + p[j, i - 1]
                                cnt = cnt + 1.0
                            if not solid[j + 1, i]:
                                psum = psum + p[j + 1, i]
                                cnt = cnt + 1.0
                            if not solid[j - 1, i]:
                                psum = psum + p[j - 1, i]
                                cnt = cnt + 1.0
                            if cnt < 1.0:
                                cnt = 1.0
                            p[j, i] = psum / cnt

            # correction by the central pressure gradient
            for j in range(1, n - 1):
                for i in range(1, n - 1):
                    if has_solid and solid[j, i]:
                        u[j, i] = 0.0
                        v[j, i] = 0.0
                        continue
                    gx = 0.5 * (p[j, i + 1] - p[j, i - 1])
                    gy = 0.5 * (p[j + 1, i] - p[j - 1, i])
                    u[j, i] = u[j, i] - dt * gx / h
                    v[j, i] = v[j, i] - dt * gy / h
            _edge_bcs(u, types[0], values[0], n)
            _edge_bcs(v, types[1], values[1], n)

            delta = 0.0
            nonfinite = 0
            for j in range(n):
                for i in range(n):
                    if not (isfinite(u[j, i]) and isfinite(v[j, i]) and isfinite(p[j, i])):
                        nonfinite = 1
                    d = fabs(u[j, i] - un[j, i])
                    if d > delta:
                        delta = d
                    d = fabs(v[j, i] - vn[j, i])
                    if d > delta:
                        delta = d
            steps_done = k + 1
            if nonfinite or not isfinite(delta):
                status = 2
                break
            if delta < tol:
                status = 0
                break

    if status == 1:
        steps_done = n_steps
    return int(steps_done), float(delta), int(status)
