"""Stencil residuals and the composite training objective.

The steady momentum and pressure-Poisson equations are penalized through
finite-difference stencils applied to the generated (u, v, p) channels:

- 5-point Laplacian ``K = [[0,1,0],[1,-4,1],[0,1,0]]`` for viscous/pressure
  terms, as a valid (no padding) cross-correlation;
- half central differences ``d̂x f = (f[i+1,j] - f[i-1,j]) / 2`` (and the y
  analogue) for convective, pressure-gradient and divergence-squared terms.

With node spacing h and diffusion coefficient 1/Re, the per-node residuals are

    Rx = lap(u)/(Re h^2) - (u d̂x u + v d̂y u)/h - d̂x p / h
    Ry = lap(v)/(Re h^2) - (u d̂x v + v d̂y v)/h - d̂y p / h
    Rc = lap(p)/4 + (d̂x u)^2 + 2 (d̂y u)(d̂x v) + (d̂y v)^2

Rc keeps the 1/4 prefactor of the discrete pressure update; the source term
uses squared half differences, so no explicit h appears.  The per-node
magnitude R = l1*|Rx| + l2*|Ry| + l3*|Rc| is squared and averaged over valid
interior nodes; zero-gradient (Neumann) and known-boundary (Dirichlet) terms
are added with their own multipliers.

Every function here accepts either numpy arrays or torch tensors: only
slicing, arithmetic, ``abs`` and ``.sum()`` are used, so the same code is the
differentiable training loss and the float64 reporting path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .grid import EDGES, VARS, BoundarySpec, FlowField, GeometryMask, GridSpec

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

# (boundary line, adjacent interior line) extractors, batch-agnostic.
EDGE_LINES = {
    "left": lambda a: (a[..., :, 0], a[..., :, 1]),
    "right": lambda a: (a[..., :, -1], a[..., :, -2]),
    "bottom": lambda a: (a[..., 0, :], a[..., 1, :]),
    "top": lambda a: (a[..., -1, :], a[..., -2, :]),
}

_LAMBDA_CLIP = (1e-4, 1e4)


class NonFiniteLossError(FloatingPointError):
    """A loss sub-term evaluated to NaN/Inf; carries the term name."""


@dataclass(frozen=True)
class LossWeights:
    """Multipliers for the residual, zero-gradient and boundary terms."""

    lambda_1: float = 1.0
    lambda_2: float = 1.0
    lambda_3: float = 1.0
    lambda_n: float = 1.0
    lambda_b: float = 1.0

    def __post_init__(self):
        vals = (self.lambda_1, self.lambda_2, self.lambda_3, self.lambda_n, self.lambda_b)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError("loss multipliers must be finite and non-negative")
        if self.lambda_1 == self.lambda_2 == self.lambda_3 == 0:
            raise ValueError("at least one residual multiplier must be positive")
        if self.lambda_b == 0:
            raise ValueError("the boundary multiplier must be positive")

    @classmethod
    def unit(cls) -> "LossWeights":
        return cls()

    def to_jsonable(self) -> dict:
        return {
            "lambda_1": self.lambda_1,
            "lambda_2": self.lambda_2,
            "lambda_3": self.lambda_3,
            "lambda_n": self.lambda_n,
            "lambda_b": self.lambda_b,
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass
class ResidualReport:
    """Composite-loss breakdown.

    ``loss_x/y/c`` are unweighted mean-square residuals per equation
    (telemetry); ``loss_residual`` is the aggregated interior term, so
    ``total == loss_residual + lambda_n * loss_neumann + lambda_b *
    loss_boundary`` holds to round-off.
    """

    loss_x: float
    loss_y: float
    loss_c: float
    loss_residual: float
    loss_neumann: float
    loss_boundary: float
    total: float
    n_interior: int
    n_boundary: int
    n_neumann: int

    def to_jsonable(self) -> dict:
        return {
            "loss_x": self.loss_x,
            "loss_y": self.loss_y,
            "loss_c": self.loss_c,
            "loss_residual": self.loss_residual,
            "loss_neumann": self.loss_neumann,
            "loss_boundary": self.loss_boundary,
            "total": self.total,
        }


# -- stencil primitives ---------------------------------------------------


def laplacian_conv(channel):
    """Valid cross-correlation with the 5-point Laplacian kernel.

    Output is interior-sized [(ny-2), (nx-2)]; callers divide by h^2 where a
    physical Laplacian is needed.
    """
    return (
        channel[..., 1:-1, 2:]
        + channel[..., 1:-1, :-2]
        + channel[..., 2:, 1:-1]
        + channel[..., :-2, 1:-1]
        - 4.0 * channel[..., 1:-1, 1:-1]
    )


def half_diff_x(channel):
    """(f[j, i+1] - f[j, i-1]) / 2 on interior nodes."""
    return 0.5 * (channel[..., 1:-1, 2:] - channel[..., 1:-1, :-2])


def half_diff_y(channel):
    """(f[j+1, i] - f[j-1, i]) / 2 on interior nodes."""
    return 0.5 * (channel[..., 2:, 1:-1] - channel[..., :-2, 1:-1])


def central_diffs(field: FlowField):
    """Half central differences of (u, v, p) in x and y on interior nodes."""
    return {
        "u_x": half_diff_x(field.u),
        "u_y": half_diff_y(field.u),
        "v_x": half_diff_x(field.v),
        "v_y": half_diff_y(field.v),
        "p_x": half_diff_x(field.p),
        "p_y": half_diff_y(field.p),
    }


def momentum_residual_channels(u, v, p, re, h):
    """Steady x/y momentum residuals on interior nodes.

    ``re`` may be a scalar or a broadcastable per-sample array; it enters as
    the reciprocal diffusion coefficient.
    """
    uc = u[..., 1:-1, 1:-1]
    vc = v[..., 1:-1, 1:-1]
    re_h2 = re * h * h
    rx = (
        laplacian_conv(u) / re_h2
        - (uc * half_diff_x(u) + vc * half_diff_y(u)) / h
        - half_diff_x(p) / h
    )
    ry = (
        laplacian_conv(v) / re_h2
        - (uc * half_diff_x(v) + vc * half_diff_y(v)) / h
        - half_diff_y(p) / h
    )
    return rx, ry


def continuity_residual_channels(u, v, p):
    """Pressure-Poisson residual on interior nodes (h factors cancel).

    lap(p)/4 + (d̂x u)^2 + 2 (d̂y u)(d̂x v) + (d̂y v)^2: the quarter prefactor
    is the fixed-point form of the discrete pressure update, and the squared
    half differences absorb the h^2 of the physical source term.
    """
    ux = half_diff_x(u)
    uy = half_diff_y(u)
    vx = half_diff_x(v)
    vy = half_diff_y(v)
    return 0.25 * laplacian_conv(p) + (ux * ux + 2.0 * uy * vx + vy * vy)


def momentum_residuals(field: FlowField, re: float, grid: Optional[GridSpec] = None):
    grid = grid or field.grid
    return momentum_residual_channels(field.u, field.v, field.p, re, grid.h)


def continuity_residual(field: FlowField, grid: Optional[GridSpec] = None):
    return continuity_residual_channels(field.u, field.v, field.p)


# -- node bookkeeping ------------------------------------------------------


def stencil_interior_mask(grid: GridSpec, geometry: Optional[GeometryMask] = None) -> np.ndarray:
    """Float mask of interior nodes whose 3x3 stencil stays inside the fluid.

    Excludes the outer ring, solid nodes, and fluid nodes any of whose eight
    neighbours is solid.
    """
    ny, nx = grid.shape
    valid = np.zeros((ny, nx), dtype=np.float64)
    valid[1:-1, 1:-1] = 1.0
    if geometry is not None and geometry.mask.any():
        solid = geometry.mask.astype(bool)
        near = solid.copy()
        near[1:, :] |= solid[:-1, :]
        near[:-1, :] |= solid[1:, :]
        near[:, 1:] |= solid[:, :-1]
        near[:, :-1] |= solid[:, 1:]
        near[1:, 1:] |= solid[:-1, :-1]
        near[1:, :-1] |= solid[:-1, 1:]
        near[:-1, 1:] |= solid[1:, :-1]
        near[:-1, :-1] |= solid[1:, 1:]
        valid[near] = 0.0
    return valid


def obstacle_surface(geometry: GeometryMask) -> np.ndarray:
    """Boolean mask of solid nodes with at least one fluid 4-neighbour."""
    solid = geometry.mask.astype(bool)
    fluid = ~solid
    near_fluid = np.zeros_like(solid)
    near_fluid[1:, :] |= fluid[:-1, :]
    near_fluid[:-1, :] |= fluid[1:, :]
    near_fluid[:, 1:] |= fluid[:, :-1]
    near_fluid[:, :-1] |= fluid[:, 1:]
    return solid & near_fluid


@dataclass
class BoundaryTerms:
    """Precomputed target/mask arrays tying a boundary spec to the loss.

    - ``overwrite_*``: Dirichlet ring values stamped onto the generated field
      before residual evaluation;
    - ``bloss_*``: nodes entering the known-value boundary loss (the Dirichlet
      ring plus obstacle-surface no-slip nodes), evaluated on the raw output;
    - ``interior``: valid interior-node mask for the residual average;
    - ``neumann_pairs``: (channel index, edge) pairs with zero-gradient flags.
    """

    overwrite_values: np.ndarray  # [3, ny, nx]
    overwrite_mask: np.ndarray  # [3, ny, nx], float 0/1
    bloss_values: np.ndarray
    bloss_mask: np.ndarray
    interior: np.ndarray  # [ny, nx], float 0/1
    neumann_pairs: tuple
    n_interior: int
    n_boundary: int
    n_neumann: int


def build_boundary_terms(
    bc: BoundarySpec, grid: GridSpec, geometry: Optional[GeometryMask] = None
) -> BoundaryTerms:
    ny, nx = grid.shape
    ring_masks = {
        "left": (np.s_[:, 0]),
        "right": (np.s_[:, -1]),
        "bottom": (np.s_[0, :]),
        "top": (np.s_[-1, :]),
    }
    values = np.zeros((3, ny, nx))
    vmask = np.zeros((3, ny, nx))
    for ci, var in enumerate(VARS):
        for edge in ("left", "right", "bottom", "top"):
            if bc.is_dirichlet(var, edge):
                sl = ring_masks[edge]
                values[ci][sl] = bc.edge_values(var, edge, nx)
                vmask[ci][sl] = 1.0

    bloss_values = values.copy()
    bloss_mask = vmask.copy()
    node_has_dirichlet = vmask.max(axis=0) > 0
    n_boundary = int(node_has_dirichlet.sum())
    if geometry is not None and geometry.mask.any():
        surf = obstacle_surface(geometry)
        for ci in (0, 1):  # no-slip u = v = 0 on the obstacle surface
            bloss_values[ci][surf] = 0.0
            bloss_mask[ci][surf] = 1.0
        n_boundary += int(surf.sum())

    pairs = []
    n_neumann = 0
    flagged_edges = set()
    for var, edge in bc.neumann_pairs():
        pairs.append((VARS.index(var), edge))
        flagged_edges.add(edge)
    for edge in flagged_edges:
        n_neumann += nx if edge in ("bottom", "top") else ny

    interior = stencil_interior_mask(grid, geometry)
    return BoundaryTerms(
        overwrite_values=values,
        overwrite_mask=vmask,
        bloss_values=bloss_values,
        bloss_mask=bloss_mask,
        interior=interior,
        neumann_pairs=tuple(pairs),
        n_interior=int(interior.sum()),
        n_boundary=n_boundary,
        n_neumann=n_neumann,
    )


# -- loss terms -------------------------------------------------------------


def apply_overwrite(channels, terms: BoundaryTerms):
    """Stamp Dirichlet ring values onto [..., 3, ny, nx] channels."""
    m = terms.overwrite_mask
    return channels * (1.0 - m) + terms.overwrite_values * m


def neumann_loss_channels(u, v, p, terms: BoundaryTerms):
    """Mean over zero-gradient boundary nodes of the squared boundary-vs-
    interior-neighbour gap, channels summed per node."""
    if terms.n_neumann == 0:
        return None
    chans = (u, v, p)
    total = None
    for ci, edge in terms.neumann_pairs:
        ring, inner = EDGE_LINES[edge](chans[ci])
        gap = ring - inner
        contrib = (gap * gap).sum(-1)
        total = contrib if total is None else total + contrib
    return total / terms.n_neumann


def neumann_loss(field: FlowField, bc: BoundarySpec) -> float:
    """Zero-gradient boundary loss for a single field; 0 when no edge is flagged."""
    terms = build_boundary_terms(bc, field.grid)
    out = neumann_loss_channels(field.u, field.v, field.p, terms)
    return 0.0 if out is None else float(out)


def dirichlet_loss_channels(channels, terms: BoundaryTerms, n_boundary=None):
    """Mean over Dirichlet boundary nodes of squared error against known
    values, channels summed per node.  ``channels`` is the raw (pre-overwrite)
    output, [..., 3, ny, nx]."""
    nb = terms.n_boundary if n_boundary is None else n_boundary
    err = (channels - terms.bloss_values) * terms.bloss_mask
    return (err * err).sum(-1).sum(-1).sum(-1) / nb


def dirichlet_boundary_loss(
    field: FlowField, bc: BoundarySpec, geometry: Optional[GeometryMask] = None
) -> float:
    terms = build_boundary_terms(bc, field.grid, geometry)
    return float(dirichlet_loss_channels(field.stack(), terms))


def residual_pointwise(u, v, p, re, h, weights: LossWeights, mode: str = "abs"):
    """Per-node squared residual magnitude on interior nodes.

    ``abs`` squares the weighted sum of absolute residuals; ``squares`` sums
    the squared weighted residuals instead (ablation variant).
    """
    rx, ry = momentum_residual_channels(u, v, p, re, h)
    rc = continuity_residual_channels(u, v, p)
    if mode == "abs":
        r = weights.lambda_1 * abs(rx) + weights.lambda_2 * abs(ry) + weights.lambda_3 * abs(rc)
        rho = r * r
    elif mode == "squares":
        rho = (
            (weights.lambda_1 * rx) ** 2
            + (weights.lambda_2 * ry) ** 2
            + (weights.lambda_3 * rc) ** 2
        )
    else:
        raise ValueError(f"unknown residual mode {mode!r}")
    return rho, rx, ry, rc


def loss_terms(
    raw_channels,
    overwritten,
    terms: BoundaryTerms,
    re,
    h: float,
    weights: LossWeights,
    mode: str = "abs",
    interior=None,
    n_interior=None,
    n_boundary=None,
):
    """All loss components for one field or a batch.

    ``raw_channels``/``overwritten`` are [..., 3, ny, nx]; the interior mask
    and counts may be overridden with batched tensors.  Returns a dict whose
    values are scalars (or per-batch arrays reduced by the caller).
    """
    u, v, p = overwritten[..., 0, :, :], overwritten[..., 1, :, :], overwritten[..., 2, :, :]
    inter = terms.interior[1:-1, 1:-1] if interior is None else interior
    n_i = terms.n_interior if n_interior is None else n_interior
    rho, rx, ry, rc = residual_pointwise(u, v, p, re, h, weights, mode)
    loss_res = (rho * inter).sum(-1).sum(-1) / n_i
    loss_x = ((rx * rx) * inter).sum(-1).sum(-1) / n_i
    loss_y = ((ry * ry) * inter).sum(-1).sum(-1) / n_i
    loss_c = ((rc * rc) * inter).sum(-1).sum(-1) / n_i
    ln = neumann_loss_channels(u, v, p, terms)
    lb = dirichlet_loss_channels(raw_channels, terms, n_boundary)
    out = {
        "loss_x": loss_x,
        "loss_y": loss_y,
        "loss_c": loss_c,
        "loss_residual": loss_res,
        "loss_neumann": ln,
        "loss_boundary": lb,
    }
    phys = loss_res if ln is None else loss_res + weights.lambda_n * ln
    out["total"] = phys + weights.lambda_b * lb
    return out


def composite_loss(
    field: FlowField,
    bc: BoundarySpec,
    geometry: Optional[GeometryMask] = None,
    re: Optional[float] = None,
    weights: LossWeights = LossWeights(),
    mode: str = "abs",
) -> ResidualReport:
    """Evaluate the full objective for one float64 field."""
    re = bc.reynolds if re is None else re
    if re <= 0:
        raise ValueError("composite loss needs a positive Reynolds number")
    terms = build_boundary_terms(bc, field.grid, geometry)
    raw = field.stack()
    overwritten = apply_overwrite(raw, terms)
    parts = loss_terms(raw, overwritten, terms, re, field.grid.h, weights, mode)
    report = ResidualReport(
        loss_x=float(parts["loss_x"]),
        loss_y=float(parts["loss_y"]),
        loss_c=float(parts["loss_c"]),
        loss_residual=float(parts["loss_residual"]),
        loss_neumann=0.0 if parts["loss_neumann"] is None else float(parts["loss_neumann"]),
        loss_boundary=float(parts["loss_boundary"]),
        total=float(parts["total"]),
        n_interior=terms.n_interior,
        n_boundary=terms.n_boundary,
        n_neumann=terms.n_neumann,
    )
    for name in ("loss_residual", "loss_neumann", "loss_boundary", "total"):
        if not np.isfinite(getattr(report, name)):
            raise NonFiniteLossError(f"loss term {name} is not finite")
    return report


def balance_weights(
    raw_channels,
    overwritten,
    terms: BoundaryTerms,
    re,
    h: float,
    interior=None,
    n_interior=None,
    n_boundary=None,
) -> LossWeights:
    """One-shot multiplier calibration: equalize the mean magnitudes of the
    three residual sub-terms, then scale the zero-gradient and boundary terms
    to the residual level.  Values are clipped to a sane range and frozen.
    """
    u = overwritten[..., 0, :, :]
    v = overwritten[..., 1, :, :]
    p = overwritten[..., 2, :, :]
    inter = terms.interior[1:-1, 1:-1] if interior is None else interior
    n_i = terms.n_interior if n_interior is None else n_interior
    rx, ry = momentum_residual_channels(u, v, p, re, h)
    rc = continuity_residual_channels(u, v, p)

    def _mean_abs(r):
        return float(np.asarray(((abs(r) * inter).sum(-1).sum(-1) / n_i)).mean())

    mx, my, mc = _mean_abs(rx), _mean_abs(ry), _mean_abs(rc)
    target = (mx + my + mc) / 3.0
    lo, hi = _LAMBDA_CLIP

    def _scale(m):
        return float(np.clip(target / m, lo, hi)) if m > 0 else 1.0

    w = LossWeights(lambda_1=_scale(mx), lambda_2=_scale(my), lambda_3=_scale(mc))
    parts = loss_terms(
        raw_channels, overwritten, terms, re, h, w,
        interior=interior, n_interior=n_interior, n_boundary=n_boundary,
    )
    loss_res = float(np.asarray(parts["loss_residual"]).mean())
    ln = parts["loss_neumann"]
    lam_n = 0.0
    if ln is not None:
        ln = float(np.asarray(ln).mean())
        lam_n = float(np.clip(loss_res / ln, lo, hi)) if ln > 0 else 1.0
    lb = float(np.asarray(parts["loss_boundary"]).mean())
    phys = loss_res + lam_n * (ln or 0.0)
    lam_b = float(np.clip(phys / lb, lo, hi)) if lb > 0 else 1.0
    return replace(w, lambda_n=lam_n if lam_n > 0 else w.lambda_n, lambda_b=lam_b)
