"""Iterative finite-difference oracle for the steady flow equations.

Explicit pseudo-time marching: each step solves the pressure-Poisson
equation with Jacobi sweeps (central differences, solid-adjacent faces
treated as zero-gradient), then advances the momentum equations by explicit
Euler using the same half-central-difference and 5-point-Laplacian stencils
the training loss penalizes, then re-imposes boundary conditions and no-slip
on solid nodes.

Two interchangeable backends implement the hot loop: a compiled Cython
kernel (``nsgen.solver._core``) and a vectorized NumPy fallback
(``nsgen.solver._numpy_impl``).  The compiled kernel is selected at import
when available; set ``NSGEN_SOLVER_BACKEND=numpy|native`` to force one.
Both produce the same iterates to floating-point round-off.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ..grid import (
    EDGES,
    VARS,
    BoundarySpec,
    FlowField,
    GeometryMask,
    GridSpec,
    initial_state,
)
from . import _numpy_impl

_requested = os.environ.get("NSGEN_SOLVER_BACKEND", "auto")
if _requested == "numpy":
    _impl = _numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        _impl = _numpy_impl
        BACKEND = "numpy"


def backends() -> dict:
    """Mapping of available backend name -> advance() implementation."""
    out = {"numpy": _numpy_impl.advance}
    try:
        from . import _core  # type: ignore[attr-defined]

        out["native"] = _core.advance
    except ImportError:
        pass
    return out


class DivergenceError(RuntimeError):
    """The iteration produced non-finite values."""

    def __init__(self, step: int):
        super().__init__(f"solver diverged at step {step}")
        self.step = step


# Reynolds numbers below this are treated as creeping flow with a benign
# time step; the zero-velocity fixed point is detected after one step.
_RE_FLOOR = 1e-6
_EDGE_INDEX = {"left": 0, "right": 1, "bottom": 2, "top": 3}


@dataclass(frozen=True)
class SolverParams:
    """Marching parameters.  ``nu`` is the diffusion coefficient of the
    marched equations, i.e. the reciprocal of the case Reynolds number."""

    dt: float
    nu: float
    rho: float = 1.0
    poisson_iters: int = 50
    max_steps: int = 100_000
    steady_tol: float = 1e-6
    transient_source: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.nu <= 0:
            raise ValueError("dt and nu must be positive")
        if self.poisson_iters < 1:
            raise ValueError("poisson_iters must be at least 1")
        if self.steady_tol <= 0:
            raise ValueError("steady_tol must be positive")

    @classmethod
    def for_case(cls, bc: BoundarySpec, grid: GridSpec, safety: float = 0.2, **overrides):
        """Stable defaults for a case: dt = safety * min(h^2/nu, h)."""
        re = max(bc.reynolds, _RE_FLOOR)
        nu = 1.0 / re
        h = grid.h
        dt = safety * min(h * h / nu, h)
        kw = dict(dt=dt, nu=nu)
        kw.update(overrides)
        return cls(**kw)

    def validate(self, h: float, umax: float) -> None:
        if self.dt > 0.25 * h * h / self.nu + 1e-15:
            raise ValueError(f"dt={self.dt} violates the diffusive bound {0.25 * h * h / self.nu}")
        if umax > 0 and self.dt > h / umax + 1e-15:
            raise ValueError(f"dt={self.dt} violates the advective bound {h / umax}")


@dataclass
class SolveResult:
    field: FlowField
    steps: int
    converged: bool
    delta: float
    divergence_linf: float
    aborted: bool = False


def _bc_pack(bc: BoundarySpec, n: int):
    """Flatten a BoundarySpec into kernel-friendly arrays.

    types[var, edge]: 0 = Dirichlet, 1 = zero-gradient; values[var, edge, :]
    holds resolved Dirichlet lines (zeros for zero-gradient edges).
    """
    types = np.zeros((3, 4), dtype=np.int32)
    values = np.zeros((3, 4, n), dtype=np.float64)
    for vi, var in enumerate(VARS):
        for edge in EDGES:
            ei = _EDGE_INDEX[edge]
            if bc.is_dirichlet(var, edge):
                values[vi, ei] = bc.edge_values(var, edge, n)
            else:
                types[vi, ei] = 1
    return types, values


def _max_dirichlet_speed(bc: BoundarySpec, n: int) -> float:
    out = 0.0
    for var in ("u", "v"):
        for edge in EDGES:
            if bc.is_dirichlet(var, edge):
                out = max(out, float(np.abs(bc.edge_values(var, edge, n)).max()))
    return out


def _advance(
    field: FlowField,
    bc: BoundarySpec,
    mask: Optional[GeometryMask],
    params: SolverParams,
    n_steps: int,
    tol: float,
    impl=None,
):
    impl = impl or _impl
    n = field.grid.nx
    solid = (
        mask.mask if mask is not None else np.zeros(field.grid.shape, dtype=np.uint8)
    ).astype(np.uint8)
    types, values = _bc_pack(bc, n)
    steps, delta, status = impl.advance(
        field.u,
        field.v,
        field.p,
        solid,
        types,
        values,
        field.grid.h,
        params.nu,
        params.dt,
        params.poisson_iters,
        n_steps,
        tol,
        1 if bc.pressure_pinned else 0,
        1 if params.transient_source else 0,
    )
    return steps, delta, status


def step(
    state: FlowField,
    bc: BoundarySpec,
    mask: Optional[GeometryMask] = None,
    params: Optional[SolverParams] = None,
) -> FlowField:
    """One explicit pseudo-time update; the input state is not modified."""
    params = params or SolverParams.for_case(bc, state.grid)
    out = state.copy()
    steps, delta, status = _advance(out, bc, mask, params, n_steps=1, tol=0.0)
    if status == 2:
        raise DivergenceError(steps)
    return out


def divergence_linf(field: FlowField, mask: Optional[GeometryMask] = None) -> float:
    """L-inf norm of the central-difference velocity divergence over interior
    fluid nodes."""
    u, v, h = field.u, field.v, field.grid.h
    ux = 0.5 * (u[1:-1, 2:] - u[1:-1, :-2])
    vy = 0.5 * (v[2:, 1:-1] - v[:-2, 1:-1])
    div = np.abs(ux + vy) / h
    if mask is not None and mask.mask.any():
        div = div[mask.mask[1:-1, 1:-1] == 0]
    return float(div.max()) if div.size else 0.0


def solve_steady(
    bc: BoundarySpec,
    mask: Optional[GeometryMask] = None,
    grid: Optional[GridSpec] = None,
    params: Optional[SolverParams] = None,
    initial: Optional[FlowField] = None,
    progress: Optional[Callable[[int, float], bool]] = None,
    progress_every: int = 2000,
    div_polish: bool = False,
) -> SolveResult:
    """March to a steady state.

    Stops when the max per-step velocity change drops below
    ``params.steady_tol`` or after ``params.max_steps``.  ``progress`` is
    invoked every ``progress_every`` steps with (steps_done, delta); return
    False from it to abort early (``aborted`` is then set on the result).

    ``div_polish`` runs the coupled Gauss-Newton stage from
    ``steady_polish`` after convergence, trading a small continuity-residual
    increase for interior divergence at the linear-solve level; see that
    module for the structural trade-off.
    """
    if grid is None:
        if initial is None:
            raise ValueError("either grid or initial state is required")
        grid = initial.grid
    params = params or SolverParams.for_case(bc, grid)
    params.validate(grid.h, max(_max_dirichlet_speed(bc, grid.nx), 1e-9))
    field = initial.copy() if initial is not None else initial_state(bc, grid)

    done = 0
    delta = math.inf
    aborted = False
    converged = False
    while done < params.max_steps:
        chunk = min(progress_every, params.max_steps - done)
        steps, delta, status = _advance(field, bc, mask, params, chunk, params.steady_tol)
        done += steps
        if status == 2:
            raise DivergenceError(done)
        if status == 0:
            converged = True
            break
        if progress is not None and progress(done, delta) is False:
            aborted = True
            break
    field.assert_finite()
    if div_polish and converged:
        from .steady_polish import divergence_free_polish

        field = divergence_free_polish(field, bc)
    return SolveResult(
        field=field,
        steps=done,
        converged=converged,
        delta=float(delta),
        divergence_linf=divergence_linf(field, mask),
        aborted=aborted,
    )


def prerun(
    bc: BoundarySpec,
    grid: GridSpec,
    n_steps: int = 20,
    params: Optional[SolverParams] = None,
) -> FlowField:
    """Short pre-run from the boundary-embedded zero state: the cheap warm
    input used for training, not a converged solution."""
    params = params or SolverParams.for_case(bc, grid)
    field = initial_state(bc, grid)
    steps, delta, status = _advance(field, bc, None, params, n_steps, 0.0)
    if status == 2:
        raise DivergenceError(steps)
    field.assert_finite()
    return field


def coarse_solution(
    bc: BoundarySpec,
    coarse_n: int = 8,
    params: Optional[SolverParams] = None,
    steady_tol: float = 1e-6,
) -> FlowField:
    """Converged solution on a small grid, later interpolated as warm input."""
    grid = GridSpec.square(coarse_n)
    params = params or SolverParams.for_case(bc, grid, steady_tol=steady_tol)
    return solve_steady(bc, None, grid, params).field


def benchmark_backends(n: int = 64, n_steps: int = 200) -> dict:
    """Time each available backend on one cavity case; returns
    {backend: seconds_per_step} plus the max deviation between results."""
    bc = BoundarySpec.cavity(0.5)
    grid = GridSpec.square(n)
    params = SolverParams.for_case(bc, grid)
    results = {}
    fields = {}
    for name, impl_fn in backends().items():
        module = _numpy_impl if name == "numpy" else __import__(
            "nsgen.solver._core", fromlist=["advance"]
        )
        field = initial_state(bc, grid)
        t0 = time.perf_counter()
        _advance(field, bc, None, params, n_steps, 0.0, impl=module)
        results[name] = (time.perf_counter() - t0) / n_steps
        fields[name] = field
    if len(fields) == 2:
        a, b = fields["numpy"], fields["native"]
        results["max_abs_diff"] = float(
            max(np.abs(a.u - b.u).max(), np.abs(a.v - b.v).max(), np.abs(a.p - b.p).max())
        )
    return results
