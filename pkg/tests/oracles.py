"""Independent naive-loop reference implementations.

Everything here is written with explicit index loops and kept deliberately
separate from the package's vectorized/compiled code paths; these are the
second route for every stencil and solver-update check.
"""

import numpy as np


def laplacian_loop(f):
    ny, nx = f.shape
    out = np.zeros((ny - 2, nx - 2))
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            out[j - 1, i - 1] = f[j, i + 1] + f[j, i - 1] + f[j + 1, i] + f[j - 1, i] - 4.0 * f[j, i]
    return out


def half_dx_loop(f):
    ny, nx = f.shape
    out = np.zeros((ny - 2, nx - 2))
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            out[j - 1, i - 1] = 0.5 * (f[j, i + 1] - f[j, i - 1])
    return out


def half_dy_loop(f):
    ny, nx = f.shape
    out = np.zeros((ny - 2, nx - 2))
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            out[j - 1, i - 1] = 0.5 * (f[j + 1, i] - f[j - 1, i])
    return out


def momentum_residuals_loop(u, v, p, re, h):
    ny, nx = u.shape
    rx = np.zeros((ny - 2, nx - 2))
    ry = np.zeros((ny - 2, nx - 2))
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            lap_u = u[j, i + 1] + u[j, i - 1] + u[j + 1, i] + u[j - 1, i] - 4 * u[j, i]
            lap_v = v[j, i + 1] + v[j, i - 1] + v[j + 1, i] + v[j - 1, i] - 4 * v[j, i]
            ux = 0.5 * (u[j, i + 1] - u[j, i - 1])
            uy = 0.5 * (u[j + 1, i] - u[j - 1, i])
            vx = 0.5 * (v[j, i + 1] - v[j, i - 1])
            vy = 0.5 * (v[j + 1, i] - v[j - 1, i])
            px = 0.5 * (p[j, i + 1] - p[j, i - 1])
            py = 0.5 * (p[j + 1, i] - p[j - 1, i])
            rx[j - 1, i - 1] = lap_u / (re * h * h) - (u[j, i] * ux + v[j, i] * uy) / h - px / h
            ry[j - 1, i - 1] = lap_v / (re * h * h) - (u[j, i] * vx + v[j, i] * vy) / h - py / h
    return rx, ry


def continuity_loop(u, v, p):
    ny, nx = u.shape
    rc = np.zeros((ny - 2, nx - 2))
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            lap_p = p[j, i + 1] + p[j, i - 1] + p[j + 1, i] + p[j - 1, i] - 4 * p[j, i]
            ux = 0.5 * (u[j, i + 1] - u[j, i - 1])
            uy = 0.5 * (u[j + 1, i] - u[j - 1, i])
            vx = 0.5 * (v[j, i + 1] - v[j, i - 1])
            vy = 0.5 * (v[j + 1, i] - v[j - 1, i])
            rc[j - 1, i - 1] = 0.25 * lap_p + (ux * ux + 2 * uy * vx + vy * vy)
    return rc


_EDGE_NODES = {
    "left": lambda n: [((j, 0), (j, 1)) for j in range(n)],
    "right": lambda n: [((j, n - 1), (j, n - 2)) for j in range(n)],
    "bottom": lambda n: [((0, i), (1, i)) for i in range(n)],
    "top": lambda n: [((n - 1, i), (n - 2, i)) for i in range(n)],
}


def neumann_loss_loop(channels, pairs, n):
    """channels: dict var -> array; pairs: iterable of (var, edge)."""
    total = 0.0
    edges = {}
    for var, edge in pairs:
        edges.setdefault(edge, []).append(var)
    n_nodes = sum(n for _ in edges)
    if n_nodes == 0:
        return 0.0, 0
    for edge, vars_ in edges.items():
        for (bj, bi), (ij, ii) in _EDGE_NODES[edge](n):
            for var in vars_:
                gap = channels[var][bj, bi] - channels[var][ij, ii]
                total += gap * gap
    return total / n_nodes, n_nodes


def dirichlet_loss_loop(channels, targets, node_channel_flags, n_boundary):
    """targets/flags: dict var -> [n, n] arrays; mean over boundary nodes of
    channel-summed squared errors."""
    total = 0.0
    for var, flags in node_channel_flags.items():
        err = (channels[var] - targets[var]) * flags
        total += float((err * err).sum())
    return total / n_boundary


def solver_step_loop(u, v, p, solid, bc_apply_uv, bc_apply_p, h, nu, dt,
                     poisson_iters, pin_pressure, transient_source):
    """One marching update, plain loops: provisional velocity, compact Jacobi
    pressure solve, gradient correction.  ``bc_apply_uv``/``bc_apply_p`` are
    callbacks applying the edge conditions in place."""
    n = u.shape[0]
    h2 = h * h
    un, vn = u.copy(), v.copy()
    u, v, p = u.copy(), v.copy(), p.copy()

    for j in range(1, n - 1):
        for i in range(1, n - 1):
            if solid[j, i]:
                u[j, i] = 0.0
                v[j, i] = 0.0
                continue
            ux = 0.5 * (un[j, i + 1] - un[j, i - 1])
            uy = 0.5 * (un[j + 1, i] - un[j - 1, i])
            vx = 0.5 * (vn[j, i + 1] - vn[j, i - 1])
            vy = 0.5 * (vn[j + 1, i] - vn[j - 1, i])
            lap_u = un[j, i + 1] + un[j, i - 1] + un[j + 1, i] + un[j - 1, i] - 4 * un[j, i]
            lap_v = vn[j, i + 1] + vn[j, i - 1] + vn[j + 1, i] + vn[j - 1, i] - 4 * vn[j, i]
            conv_u = un[j, i] * ux + vn[j, i] * uy
            conv_v = un[j, i] * vx + vn[j, i] * vy
            u[j, i] = un[j, i] + dt * (nu * lap_u / h2 - conv_u / h)
            v[j, i] = vn[j, i] + dt * (nu * lap_v / h2 - conv_v / h)
    bc_apply_uv(u, v)

    rhs = np.zeros((n, n))
    for j in range(1, n - 1):
        for i in range(1, n - 1):
            if transient_source:
                div = 0.5 * (u[j, i + 1] - u[j, i - 1]) + 0.5 * (v[j + 1, i] - v[j - 1, i])
                rhs[j, i] = div / (h * dt)
            else:
                ux = 0.5 * (un[j, i + 1] - un[j, i - 1])
                uy = 0.5 * (un[j + 1, i] - un[j - 1, i])
                vx = 0.5 * (vn[j, i + 1] - vn[j, i - 1])
                vy = 0.5 * (vn[j + 1, i] - vn[j - 1, i])
                rhs[j, i] = -(ux * ux + 2 * uy * vx + vy * vy) / h2

    for _ in range(poisson_iters):
        bc_apply_p(p)
        pn = p.copy()
        for j in range(1, n - 1):
            for i in range(1, n - 1):
                if solid[j, i]:
                    continue
                pe = p[j, i] if solid[j, i + 1] else p[j, i + 1]
                pw = p[j, i] if solid[j, i - 1] else p[j, i - 1]
                pt = p[j, i] if solid[j + 1, i] else p[j + 1, i]
                pb = p[j, i] if solid[j - 1, i] else p[j - 1, i]
                pn[j, i] = 0.25 * (pe + pw + pt + pb - h2 * rhs[j, i])
        p = pn
    bc_apply_p(p)
    if pin_pressure:
        p = p - p[0, 0]
    for j in range(1, n - 1):
        for i in range(1, n - 1):
            if solid[j, i]:
                acc, cnt = 0.0, 0.0
                for (jj, ii) in ((j, i + 1), (j, i - 1), (j + 1, i), (j - 1, i)):
                    if not solid[jj, ii]:
                        acc += p[jj, ii]
                        cnt += 1.0
                p[j, i] = acc / max(cnt, 1.0)

    for j in range(1, n - 1):
        for i in range(1, n - 1):
            if solid[j, i]:
                continue
            gx = 0.5 * (p[j, i + 1] - p[j, i - 1])
            gy = 0.5 * (p[j + 1, i] - p[j - 1, i])
            u[j, i] -= dt * gx / h
            v[j, i] -= dt * gy / h
    bc_apply_uv(u, v)
    return u, v, p


def bilinear_sample_loop(arr, x, y):
    n = arr.shape[0]
    x = min(max(x, 0.0), n - 1.0)
    y = min(max(y, 0.0), n - 1.0)
    i0 = min(int(x), n - 2)
    j0 = min(int(y), n - 2)
    fx, fy = x - i0, y - j0
    return (
        arr[j0, i0] * (1 - fx) * (1 - fy)
        + arr[j0, i0 + 1] * fx * (1 - fy)
        + arr[j0 + 1, i0] * (1 - fx) * fy
        + arr[j0 + 1, i0 + 1] * fx * fy
    )


def rasterize_count_loop(shapes, n):
    count = 0
    for j in range(n):
        for i in range(n):
            for s in shapes:
                kind = s.__class__.__name__
                if kind == "Circle":
                    inside = (i - s.cx) ** 2 + (j - s.cy) ** 2 <= s.radius**2
                else:
                    inside = s.x <= i <= s.x + s.width and s.y <= j <= s.y + s.height
                if inside:
                    count += 1
                    break
    return count
