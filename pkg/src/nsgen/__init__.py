"""nsgen: weakly-supervised U-Net surrogates for steady 2D incompressible flow."""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    BoundarySpec,
    Circle,
    FlowField,
    GeometryMask,
    GridSpec,
    InputTensor,
    Rectangle,
    embed_boundary_conditions,
    interpolate_field,
    rasterize_obstacles,
    rmse,
    with_mask_channel,
)
from .physics import LossWeights, ResidualReport, composite_loss  # noqa: F401
