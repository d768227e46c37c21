"""Vectorized NumPy backend for the pseudo-time marching loop.

Implements exactly the same update as the compiled kernel; kept as the
import-time fallback and as the reference side of the backend benchmark.

One step:

1. provisional velocity u* = u + dt * (viscous - convective) with the same
   half-central-difference / 5-point-Laplacian stencils the loss uses, then
   velocity boundary conditions;
2. pressure from ``poisson_iters`` Jacobi sweeps of the 5-point Poisson
   equation whose source is the provisional-velocity divergence over dt
   (or, with the transient term disabled, the steady source
   -((du/dx)^2 + 2 du/dy dv/dx + (dv/dy)^2)); solid-adjacent faces are
   treated as zero-gradient by mirroring the centre value;
3. correction u = u* - dt * grad_c(p), no-slip on solid nodes, boundary
   conditions re-imposed.
"""

from __future__ import annotations

import numpy as np

_C = (slice(1, -1), slice(1, -1))
_E = (slice(1, -1), slice(2, None))
_W = (slice(1, -1), slice(0, -2))
_N = (slice(2, None), slice(1, -1))
_S = (slice(0, -2), slice(1, -1))


def _apply_edge_bcs(arr: np.ndarray, types: np.ndarray, values: np.ndarray) -> None:
    # zero-gradient copies first, then Dirichlet writes; fixed edge order
    # (left, right, bottom, top) so the top edge owns shared corners.
    if types[0] == 1:
        arr[:, 0] = arr[:, 1]
    if types[1] == 1:
        arr[:, -1] = arr[:, -2]
    if types[2] == 1:
        arr[0, :] = arr[1, :]
    if types[3] == 1:
        arr[-1, :] = arr[-2, :]
    if types[0] == 0:
        arr[:, 0] = values[0]
    if types[1] == 0:
        arr[:, -1] = values[1]
    if types[2] == 0:
        arr[0, :] = values[2]
    if types[3] == 0:
        arr[-1, :] = values[3]


def advance(
    u: np.ndarray,
    v: np.ndarray,
    p: np.ndarray,
    solid: np.ndarray,
    bc_types: np.ndarray,
    bc_values: np.ndarray,
    h: float,
    nu: float,
    dt: float,
    poisson_iters: int,
    n_steps: int,
    tol: float,
    pin_pressure: int,
    transient_source: int,
):
    """Run up to ``n_steps`` updates in place.

    Returns (steps_done, last_delta, status) with status 0 = converged
    (delta < tol), 1 = step budget exhausted, 2 = non-finite values.
    """
    n = u.shape[0]
    h2 = h * h

    has_solid = bool(solid.any())
    solid_c = solid[_C] == 1
    fluid_c = ~solid_c
    if has_solid:
        solid_e = solid[_E] == 1
        solid_w = solid[_W] == 1
        solid_n = solid[_N] == 1
        solid_s = solid[_S] == 1
        fluid_e = ~solid_e
        fluid_w = ~solid_w
        fluid_n = ~solid_n
        fluid_s = ~solid_s
        n_fluid_nb = (
            fluid_e.astype(np.float64)
            + fluid_w.astype(np.float64)
            + fluid_n.astype(np.float64)
            + fluid_s.astype(np.float64)
        )
        # no-slip holds on solid nodes from the very first stencil evaluation
        u[_C][solid_c] = 0.0
        v[_C][solid_c] = 0.0

    rhs = np.zeros((n - 2, n - 2))
    pwork = np.empty_like(p)
    bc_p_types = bc_types[2]
    bc_p_values = bc_values[2]
    delta = np.inf

    for k in range(n_steps):
        un = u.copy()
        vn = v.copy()

        ux = 0.5 * (un[_E] - un[_W])
        uy = 0.5 * (un[_N] - un[_S])
        vx = 0.5 * (vn[_E] - vn[_W])
        vy = 0.5 * (vn[_N] - vn[_S])

        # provisional velocity: viscous + convective terms only
        lap_u = un[_E] + un[_W] + un[_N] + un[_S] - 4.0 * un[_C]
        lap_v = vn[_E] + vn[_W] + vn[_N] + vn[_S] - 4.0 * vn[_C]
        conv_u = un[_C] * ux + vn[_C] * uy
        conv_v = un[_C] * vx + vn[_C] * vy
        star_u = un[_C] + dt * (nu * lap_u / h2 - conv_u / h)
        star_v = vn[_C] + dt * (nu * lap_v / h2 - conv_v / h)
        if has_solid:
            star_u = np.where(fluid_c, star_u, 0.0)
            star_v = np.where(fluid_c, star_v, 0.0)
        u[_C] = star_u
        v[_C] = star_v
        _apply_edge_bcs(u, bc_types[0], bc_values[0])
        _apply_edge_bcs(v, bc_types[1], bc_values[1])

        if transient_source:
            div_star = 0.5 * (u[_E] - u[_W]) + 0.5 * (v[_N] - v[_S])
            rhs[...] = div_star / (h * dt)
        else:
            # steady source as printed: -((du/dx)^2 + 2 du/dy dv/dx + (dv/dy)^2)
            rhs[...] = -(ux * ux + 2.0 * uy * vx + vy * vy) / h2

        orig_p = p
        for _ in range(poisson_iters):
            _apply_edge_bcs(p, bc_p_types, bc_p_values)
            pe = p[_E]
            pw = p[_W]
            pn_ = p[_N]
            ps = p[_S]
            pc = p[_C]
            if has_solid:
                pe = np.where(solid_e, pc, pe)
                pw = np.where(solid_w, pc, pw)
                pn_ = np.where(solid_n, pc, pn_)
                ps = np.where(solid_s, pc, ps)
            upd = 0.25 * (pe + pw + pn_ + ps - h2 * rhs)
            if has_solid:
                upd = np.where(fluid_c, upd, pc)
            pwork[...] = p
            pwork[_C] = upd
            p, pwork = pwork, p
        if p is not orig_p:
            orig_p[...] = p
            pwork = p
            p = orig_p
        _apply_edge_bcs(p, bc_p_types, bc_p_values)
        if pin_pressure:
            p -= p[0, 0]
        if has_solid:
            psum = (
                p[_E] * fluid_e
                + p[_W] * fluid_w
                + p[_N] * fluid_n
                + p[_S] * fluid_s
            )
            fill = psum / np.maximum(n_fluid_nb, 1.0)
            p[_C][solid_c] = fill[solid_c]

        # correction by the central pressure gradient
        gx = 0.5 * (p[_E] - p[_W])
        gy = 0.5 * (p[_N] - p[_S])
        new_u = u[_C] - dt * gx / h
        new_v = v[_C] - dt * gy / h
        if has_solid:
            new_u = np.where(fluid_c, new_u, 0.0)
            new_v = np.where(fluid_c, new_v, 0.0)
        u[_C] = new_u
        v[_C] = new_v
        _apply_edge_bcs(u, bc_types[0], bc_values[0])
        _apply_edge_bcs(v, bc_types[1], bc_values[1])

        delta = max(float(np.abs(u - un).max()), float(np.abs(v - vn).max()))
        if not np.isfinite(delta) or not np.isfinite(p).all():
            return k + 1, delta, 2
        if delta < tol:
            return k + 1, delta, 0

    return n_steps, float(delta), 1
