"""Grids, flow fields, boundary conditions, geometry masks and input tensors.

Conventions shared by every module:

- arrays are row-major with shape ``[ny, nx]``; row ``j`` is the y index and
  column ``i`` is the x index; y increases upward, so the "top" edge is the
  last row and the "bottom" edge is row 0;
- domains are square node lattices with a power-of-two node count per side;
- solver/oracle code works in float64, the model path in float32, and every
  conversion between the two is explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

EDGES = ("left", "right", "bottom", "top")
VARS = ("u", "v", "p")

# Dirichlet edges are applied in this fixed order, so the top edge (the lid)
# owns the corner nodes it shares with the side walls.
DIRICHLET_EDGE_ORDER = ("left", "right", "bottom", "top")

# Reference kinematic viscosity of the working fluid; a boundary spec's
# Reynolds number is inlet-speed * domain_length / NU_FLUID.
NU_FLUID = 0.05


class GeometryError(ValueError):
    """An obstacle shape is malformed or touches the outer boundary ring."""


class ShapeMismatchError(ValueError):
    """Array shapes disagree with the grid they claim to live on."""


@dataclass(frozen=True)
class GridSpec:
    """Square node lattice: ``nx`` == ``ny`` nodes per side, power of two."""

    nx: int
    ny: int
    domain_length: float = 1.0

    def __post_init__(self):
        if self.nx != self.ny:
            raise ValueError(f"only square grids are supported, got {self.nx}x{self.ny}")
        if self.nx < 8:
            raise ValueError(f"grid must have at least 8 nodes per side, got {self.nx}")
        if 2 ** int(math.log2(self.nx)) != self.nx:
            raise ValueError(f"node count must be a power of two, got {self.nx}")
        if self.domain_length <= 0:
            raise ValueError("domain_length must be positive")

    @classmethod
    def square(cls, n: int, domain_length: float = 1.0) -> "GridSpec":
        return cls(nx=n, ny=n, domain_length=domain_length)

    @property
    def h(self) -> float:
        """Node spacing; nodes sit at i*h for i in 0..nx-1."""
        return self.domain_length / (self.nx - 1)

    @property
    def depth(self) -> int:
        """log2(nx); the encoder depth of a model sized for this grid."""
        return int(math.log2(self.nx))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) node coordinate vectors of length nx / ny."""
        x = np.linspace(0.0, self.domain_length, self.nx)
        y = np.linspace(0.0, self.domain_length, self.ny)
        return x, y


@dataclass
class FlowField:
    """Co-located (u, v, p) scalar grids on one lattice; float64 storage."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        for name in VARS:
            arr = getattr(self, name)
            if arr.shape != self.grid.shape:
                raise ShapeMismatchError(
                    f"{name} has shape {arr.shape}, grid expects {self.grid.shape}"
                )
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        self.p = np.ascontiguousarray(self.p, dtype=np.float64)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "FlowField":
        return cls(
            u=np.zeros(grid.shape), v=np.zeros(grid.shape), p=np.zeros(grid.shape), grid=grid
        )

    def copy(self) -> "FlowField":
        return FlowField(self.u.copy(), self.v.copy(), self.p.copy(), self.grid)

    def stack(self) -> np.ndarray:
        """Channels-first [3, ny, nx] float64 view copy."""
        return np.stack([self.u, self.v, self.p])

    @classmethod
    def from_stack(cls, channels: np.ndarray, grid: GridSpec) -> "FlowField":
        if channels.shape[0] < 3:
            raise ShapeMismatchError("need at least 3 channels for (u, v, p)")
        return cls(channels[0], channels[1], channels[2], grid)

    def assert_finite(self) -> None:
        for name in VARS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise FloatingPointError(f"non-finite values in {name}")


@dataclass(frozen=True)
class EdgeCondition:
    """One boundary condition for one variable on one edge.

    ``kind`` is "dirichlet" (prescribed value: scalar or per-node array) or
    "neumann" (zero normal gradient).  A Dirichlet value of None means the
    value is synthesized from lid/inlet parameters at embed time.
    """

    kind: str
    value: Union[float, np.ndarray, None] = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown condition kind {self.kind!r}")

    def to_jsonable(self):
        v = self.value
        if isinstance(v, np.ndarray):
            v = v.tolist()
        return {"kind": self.kind, "value": v}

    @classmethod
    def from_jsonable(cls, d) -> "EdgeCondition":
        v = d.get("value")
        if isinstance(v, list):
            v = np.asarray(v, dtype=np.float64)
        return cls(kind=d["kind"], value=v)


@dataclass(frozen=True)
class LidParams:
    """Moving-lid parameterization of the top edge (cavity problems)."""

    velocity: float
    start_fraction: float = 0.0
    extent_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.velocity <= 0.5:
            raise ValueError(f"lid velocity must be in [0, 0.5], got {self.velocity}")
        if not 0.0 <= self.start_fraction < 1.0:
            raise ValueError("lid start fraction must be in [0, 1)")
        if self.extent_fraction <= 0.0 or self.start_fraction + self.extent_fraction > 1.0 + 1e-12:
            raise ValueError("lid segment must fit inside the top edge")

    def profile(self, n: int) -> np.ndarray:
        """Top-edge u values: ``velocity`` on the lid segment, 0 elsewhere.

        Node i belongs to the lid iff start <= i/(n-1) <= start + extent
        (closed on both ends).
        """
        frac = np.arange(n) / (n - 1)
        lo, hi = self.start_fraction, self.start_fraction + self.extent_fraction
        out = np.zeros(n)
        out[(frac >= lo - 1e-12) & (frac <= hi + 1e-12)] = self.velocity
        return out


@dataclass(frozen=True)
class InletParams:
    """Inclined inlet velocity for internal-flow problems."""

    u0: float
    v0: float

    def __post_init__(self):
        if not 0.0 <= self.u0 <= 0.5 or not 0.0 <= self.v0 <= 0.5:
            raise ValueError(f"inlet components must be in [0, 0.5], got ({self.u0}, {self.v0})")

    @property
    def speed(self) -> float:
        return math.hypot(self.u0, self.v0)


@dataclass(frozen=True)
class BoundarySpec:
    """Per-edge boundary conditions for each of u, v, p plus case parameters.

    Every (edge, variable) pair carries exactly one condition.  ``reynolds``
    is the case Reynolds number; the momentum equations are marched and
    penalized with 1/reynolds as the diffusion coefficient, so the solver and
    the residual stencils see one consistent system.
    """

    conditions: dict
    reynolds: float
    lid: Optional[LidParams] = None
    inlet: Optional[InletParams] = None

    def __post_init__(self):
        if self.reynolds < 0:
            raise ValueError("reynolds must be non-negative")
        for edge in EDGES:
            per_var = self.conditions.get(edge)
            if per_var is None or set(per_var) != set(VARS):
                raise ValueError(f"edge {edge!r} must define exactly one condition per variable")

    def condition(self, var: str, edge: str) -> EdgeCondition:
        return self.conditions[edge][var]

    def is_dirichlet(self, var: str, edge: str) -> bool:
        return self.condition(var, edge).kind == "dirichlet"

    def neumann_pairs(self) -> list[tuple[str, str]]:
        """(var, edge) pairs flagged zero-normal-gradient."""
        return [(v, e) for e in EDGES for v in VARS if not self.is_dirichlet(v, e)]

    def edge_values(self, var: str, edge: str, n: int) -> np.ndarray:
        """Resolved Dirichlet values along an edge as a length-n array."""
        cond = self.condition(var, edge)
        if cond.kind != "dirichlet":
            raise ValueError(f"{var} on {edge} is not a Dirichlet edge")
        if cond.value is None:
            if var == "u" and edge == "top" and self.lid is not None:
                return self.lid.profile(n)
            raise ValueError(f"no value available for {var} on {edge}")
        if isinstance(cond.value, np.ndarray):
            if cond.value.shape != (n,):
                raise ShapeMismatchError(
                    f"edge value array for {var}/{edge} has length {cond.value.shape}, expected {n}"
                )
            return cond.value.astype(np.float64)
        return np.full(n, float(cond.value))

    @property
    def has_any_dirichlet(self) -> bool:
        return any(self.is_dirichlet(v, e) for e in EDGES for v in VARS)

    @property
    def pressure_pinned(self) -> bool:
        """True when p has no Dirichlet edge and needs a gauge pin at (0, 0)."""
        return not any(self.is_dirichlet("p", e) for e in EDGES)

    # -- factories -------------------------------------------------------

    @classmethod
    def cavity(
        cls,
        lid_velocity: float,
        lid_start: float = 0.0,
        lid_extent: float = 1.0,
        domain_length: float = 1.0,
        nu: float = NU_FLUID,
    ) -> "BoundarySpec":
        """Lid-driven cavity: no-slip walls, moving top lid, all-Neumann pressure."""
        lid = LidParams(lid_velocity, lid_start, lid_extent)
        conds = {}
        for edge in EDGES:
            conds[edge] = {
                "u": EdgeCondition("dirichlet", None if edge == "top" else 0.0),
                "v": EdgeCondition("dirichlet", 0.0),
                "p": EdgeCondition("neumann", None),
            }
        re = lid_velocity * domain_length / nu
        return cls(conditions=conds, reynolds=re, lid=lid)

    @classmethod
    def internal_flow(
        cls,
        u0: float,
        v0: float,
        domain_length: float = 1.0,
        nu: float = NU_FLUID,
    ) -> "BoundarySpec":
        """Inclined velocity inlet on the left, pressure outlet on the right,
        no-slip top/bottom walls."""
        inlet = InletParams(u0, v0)
        conds = {
            "left": {
                "u": EdgeCondition("dirichlet", u0),
                "v": EdgeCondition("dirichlet", v0),
                "p": EdgeCondition("neumann", None),
            },
            "right": {
                "u": EdgeCondition("neumann", None),
                "v": EdgeCondition("neumann", None),
                "p": EdgeCondition("dirichlet", 0.0),
            },
            "bottom": {
                "u": EdgeCondition("dirichlet", 0.0),
                "v": EdgeCondition("dirichlet", 0.0),
                "p": EdgeCondition("neumann", None),
            },
            "top": {
                "u": EdgeCondition("dirichlet", 0.0),
                "v": EdgeCondition("dirichlet", 0.0),
                "p": EdgeCondition("neumann", None),
            },
        }
        re = inlet.speed * domain_length / nu
        return cls(conditions=conds, reynolds=re, inlet=inlet)

    @classmethod
    def all_zero(cls) -> "BoundarySpec":
        """Homogeneous Dirichlet everywhere; the zero field is a fixed point."""
        conds = {
            e: {v: EdgeCondition("dirichlet", 0.0) for v in VARS} for e in EDGES
        }
        return cls(conditions=conds, reynolds=0.0)

    # -- serialization ---------------------------------------------------

    def to_jsonable(self) -> dict:
        d = {
            "reynolds": self.reynolds,
            "conditions": {
                e: {v: self.conditions[e][v].to_jsonable() for v in VARS} for e in EDGES
            },
        }
        if self.lid is not None:
            d["lid"] = {
                "velocity": self.lid.velocity,
                "start_fraction": self.lid.start_fraction,
                "extent_fraction": self.lid.extent_fraction,
            }
        if self.inlet is not None:
            d["inlet"] = {"u0": self.inlet.u0, "v0": self.inlet.v0}
        return d

    @classmethod
    def from_jsonable(cls, d: dict) -> "BoundarySpec":
        conds = {
            e: {v: EdgeCondition.from_jsonable(d["conditions"][e][v]) for v in VARS}
            for e in EDGES
        }
        lid = LidParams(**d["lid"]) if "lid" in d else None
        inlet = InletParams(**d["inlet"]) if "inlet" in d else None
        return cls(conditions=conds, reynolds=d["reynolds"], lid=lid, inlet=inlet)


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned closed box [x, x+width] x [y, y+height] in node units."""

    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError("rectangle extent must be at least 1 node")

    def contains(self, xi: np.ndarray, yj: np.ndarray) -> np.ndarray:
        return (xi >= self.x) & (xi <= self.x + self.width) & (yj >= self.y) & (
            yj <= self.y + self.height
        )

    def to_jsonable(self):
        return {"kind": "rectangle", "x": self.x, "y": self.y,
                "width": self.width, "height": self.height}


@dataclass(frozen=True)
class Circle:
    """Closed disk in node units; nodes exactly on the rim count as solid."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius < 1:
            raise GeometryError("circle radius must be at least 1 node")

    def contains(self, xi: np.ndarray, yj: np.ndarray) -> np.ndarray:
        return (xi - self.cx) ** 2 + (yj - self.cy) ** 2 <= self.radius**2

    def to_jsonable(self):
        return {"kind": "circle", "cx": self.cx, "cy": self.cy, "radius": self.radius}


Shape = Union[Rectangle, Circle]


def shape_from_jsonable(d: dict) -> Shape:
    kind = d.get("kind")
    if kind == "rectangle":
        return Rectangle(d["x"], d["y"], d["width"], d["height"])
    if kind == "circle":
        return Circle(d["cx"], d["cy"], d["radius"])
    raise GeometryError(f"unknown shape kind {kind!r}")


@dataclass
class GeometryMask:
    """Binary solid mask: 1 = solid obstacle node, 0 = fluid node."""

    mask: np.ndarray
    shapes: list = field(default_factory=list)

    def __post_init__(self):
        self.mask = np.ascontiguousarray(self.mask, dtype=np.uint8)
        if not np.isin(self.mask, (0, 1)).all():
            raise GeometryError("mask entries must be exactly 0 or 1")

    @classmethod
    def empty(cls, grid: GridSpec) -> "GeometryMask":
        return cls(mask=np.zeros(grid.shape, dtype=np.uint8), shapes=[])

    @property
    def popcount(self) -> int:
        return int(self.mask.sum())

    def shapes_jsonable(self) -> list:
        return [s.to_jsonable() for s in self.shapes]


def rasterize_obstacles(shapes: Sequence[Shape], grid: GridSpec) -> GeometryMask:
    """Rasterize obstacle shapes onto the node lattice.

    A node is solid iff its center lies inside any shape (closed containment,
    rim ties count as solid).  Shapes must stay strictly inside the outer
    boundary ring.
    """
    xi, yj = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny))
    mask = np.zeros(grid.shape, dtype=bool)
    for s in shapes:
        mask |= s.contains(xi, yj)
    ring = np.zeros(grid.shape, dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    if (mask & ring).any():
        raise GeometryError("obstacle touches the outer boundary ring")
    return GeometryMask(mask=mask.astype(np.uint8), shapes=list(shapes))


@dataclass
class InputTensor:
    """Stacked model-input channels (u, v, p[, mask]) in float32."""

    channels: np.ndarray
    bc: BoundarySpec

    def __post_init__(self):
        if self.channels.ndim != 3 or self.channels.shape[0] not in (3, 4):
            raise ShapeMismatchError(
                f"input tensor must be [3|4, ny, nx], got {self.channels.shape}"
            )
        self.channels = np.ascontiguousarray(self.channels, dtype=np.float32)

    @property
    def size(self) -> int:
        return self.channels.shape[-1]

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


def apply_boundary_ring(
    u: np.ndarray, v: np.ndarray, p: np.ndarray, bc: BoundarySpec
) -> None:
    """Overwrite the boundary ring of (u, v, p) in place from ``bc``.

    Neumann edges copy the adjacent interior line first; Dirichlet edges are
    then written in the fixed edge order so the top edge wins shared corners.
    """
    n = u.shape[-1]
    arrays = {"u": u, "v": v, "p": p}
    edge_index = {
        "left": (np.s_[:, 0], np.s_[:, 1]),
        "right": (np.s_[:, -1], np.s_[:, -2]),
        "bottom": (np.s_[0, :], np.s_[1, :]),
        "top": (np.s_[-1, :], np.s_[-2, :]),
    }
    for var, arr in arrays.items():
        for edge in EDGES:
            if not bc.is_dirichlet(var, edge):
                ring, inner = edge_index[edge]
                arr[ring] = arr[inner]
        for edge in DIRICHLET_EDGE_ORDER:
            if bc.is_dirichlet(var, edge):
                ring, _ = edge_index[edge]
                arr[ring] = bc.edge_values(var, edge, n)


def embed_boundary_conditions(
    bc: BoundarySpec, grid: GridSpec, interior: Optional[FlowField] = None
) -> InputTensor:
    """Build the 3-channel model input: interior values + boundary rings.

    ``interior`` of None means a plain (all-zero) initialization; otherwise
    its values fill the interior and its ring is replaced from ``bc``.
    """
    if interior is None:
        interior = FlowField.zeros(grid)
    elif interior.grid.shape != grid.shape:
        raise ShapeMismatchError(
            f"interior field is {interior.grid.shape}, grid expects {grid.shape}"
        )
    u, v, p = interior.u.copy(), interior.v.copy(), interior.p.copy()
    apply_boundary_ring(u, v, p, bc)
    channels = np.stack([u, v, p]).astype(np.float32)
    return InputTensor(channels=channels, bc=bc)


def initial_state(bc: BoundarySpec, grid: GridSpec) -> FlowField:
    """Zero field with boundary rings imposed; the solver's starting state."""
    f = FlowField.zeros(grid)
    apply_boundary_ring(f.u, f.v, f.p, bc)
    return f


def with_mask_channel(
    tensor: InputTensor, geometry: GeometryMask, zero_solid: bool = True
) -> InputTensor:
    """Append the solid mask as a fourth channel.

    Solid nodes are zeroed in the u/v/p channels (the mask channel alone
    encodes solidity).
    """
    if geometry.mask.shape != tensor.channels.shape[1:]:
        raise ShapeMismatchError("mask shape does not match tensor")
    if tensor.n_channels != 3:
        raise ShapeMismatchError("mask channel already present")
    channels = tensor.channels.copy()
    if zero_solid:
        channels[:, geometry.mask == 1] = 0.0
    stacked = np.concatenate([channels, geometry.mask[None].astype(np.float32)])
    return InputTensor(channels=stacked, bc=tensor.bc)


def interpolate_field(src: FlowField, target: GridSpec) -> FlowField:
    """Bilinear upsample of each channel onto a finer square grid.

    Corner-aligned: target corners coincide with source corners, and the
    interpolant reproduces the source exactly at coincident nodes.
    """
    if target.nx < src.grid.nx:
        raise ValueError("target grid must be at least as fine as the source")
    u = bilinear_resize(src.u, target.nx)
    v = bilinear_resize(src.v, target.nx)
    p = bilinear_resize(src.p, target.nx)
    out = FlowField(u, v, p, target)
    out.assert_finite()
    return out


def bilinear_resize(arr: np.ndarray, n_target: int) -> np.ndarray:
    """Corner-aligned bilinear resample of a square [n, n] array."""
    n_src = arr.shape[-1]
    if arr.shape != (n_src, n_src):
        raise ShapeMismatchError("bilinear_resize expects a square array")
    if n_target == n_src:
        return arr.copy()
    pos = np.arange(n_target) * (n_src - 1) / (n_target - 1)
    i0 = np.minimum(pos.astype(np.int64), n_src - 2)
    frac = pos - i0
    # separable: rows then columns
    rows = arr[i0, :] * (1.0 - frac)[:, None] + arr[i0 + 1, :] * frac[:, None]
    out = rows[:, i0] * (1.0 - frac)[None, :] + rows[:, i0 + 1] * frac[None, :]
    return out


def sample_bilinear(arr: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate the bilinear interpolant of ``arr`` at fractional node
    coordinates (x = column, y = row)."""
    n = arr.shape[-1]
    x = np.clip(np.asarray(x, dtype=np.float64), 0, n - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0, n - 1)
    i0 = np.minimum(x.astype(np.int64), n - 2)
    j0 = np.minimum(y.astype(np.int64), n - 2)
    fx, fy = x - i0, y - j0
    return (
        arr[j0, i0] * (1 - fx) * (1 - fy)
        + arr[j0, i0 + 1] * fx * (1 - fy)
        + arr[j0 + 1, i0] * (1 - fx) * fy
        + arr[j0 + 1, i0 + 1] * fx * fy
    )


def rmse(
    pred: FlowField, truth: FlowField, exclude: Optional[GeometryMask] = None
) -> tuple[float, float, float]:
    """Per-channel RMSE over fluid nodes (solid nodes excluded when masked)."""
    if pred.grid.shape != truth.grid.shape:
        raise ShapeMismatchError("pred and truth grids differ")
    if exclude is not None and exclude.mask.shape != pred.grid.shape:
        raise ShapeMismatchError("mask shape does not match fields")
    keep = None if exclude is None else exclude.mask == 0
    out = []
    for name in VARS:
        d = getattr(pred, name) - getattr(truth, name)
        if keep is not None:
            d = d[keep]
        out.append(float(np.sqrt(np.mean(d**2))))
    return tuple(out)
