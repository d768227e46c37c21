"""Convolutional encoder-decoder generator and its transfer surgeries.

Architecture: ``depth = log2(input_size)`` encoder blocks (4x4 stride-2
convolution, batch norm except on the first block, leaky rectifier with
slope 0.2) compressing to a 1x1 bottleneck, mirrored by ``depth`` decoder
blocks (4x4 stride-2 transposed convolution on the previous output
concatenated with the mirror encoder activation), a final tanh mapping to
[-1, 1] per channel, and fixed per-channel output scales.

Two surgeries reuse trained weights across architecture changes: adding a
zero-initialized input channel (mask channel) and growing to a doubled
domain (fresh innermost blocks, outer blocks copied).
"""

from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
from torch import nn

from .grid import BoundarySpec, FlowField, GridSpec, InputTensor
from .physics import apply_overwrite, build_boundary_terms

CHECKPOINT_FORMAT_VERSION = 1
WIDTH_CAP = 512


@dataclass(frozen=True)
class ModelConfig:
    input_size: int
    in_channels: int = 3
    base_width: int = 64
    channel_scales: tuple = (1.0, 1.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        if self.in_channels not in (3, 4):
            raise ValueError("in_channels must be 3 or 4")
        depth = math.log2(self.input_size)
        if depth != int(depth) or depth < 3:
            raise ValueError("input_size must be a power of two with log2 >= 3")
        if any(s <= 0 for s in self.channel_scales) or len(self.channel_scales) != 3:
            raise ValueError("channel_scales must be three positive factors")

    @property
    def depth(self) -> int:
        return int(math.log2(self.input_size))

    def encoder_widths(self) -> list[int]:
        return [min(self.base_width * 2**i, WIDTH_CAP) for i in range(self.depth)]

    def decoder_shapes(self) -> list[tuple[int, int]]:
        """(in_channels, out_channels) per decoder block, innermost first."""
        w = self.encoder_widths()
        shapes = []
        prev = w[-1]
        for i in range(self.depth):
            out = w[self.depth - 2 - i] if i < self.depth - 1 else 3
            shapes.append((prev, out))
            prev = out * 2 if i < self.depth - 1 else None
        return shapes

    def parameter_count(self) -> int:
        """Trainable parameter total, derived from widths alone."""
        total = 0
        w = self.encoder_widths()
        prev = self.in_channels
        for i, out in enumerate(w):
            total += out * prev * 16 + out  # conv weight + bias
            if i > 0:
                total += 2 * out  # norm scale + shift
            prev = out
        for i, (cin, cout) in enumerate(self.decoder_shapes()):
            total += cin * cout * 16 + cout
            if i < self.depth - 1:
                total += 2 * cout
        return total

    def to_jsonable(self) -> dict:
        d = asdict(self)
        d["channel_scales"] = list(self.channel_scales)
        return d

    @classmethod
    def from_jsonable(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["channel_scales"] = tuple(d["channel_scales"])
        return cls(**d)


class _EncoderBlock(nn.Module):
    def __init__(self, cin, cout, norm):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 4, stride=2, padding=1)
        self.norm = nn.BatchNorm2d(cout) if norm else None
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        return self.act(x)


class _DecoderBlock(nn.Module):
    def __init__(self, cin, cout, norm, final):
        super().__init__()
        self.conv = nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1)
        self.norm = nn.BatchNorm2d(cout) if norm else None
        self.act = None if final else nn.LeakyReLU(0.2)

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        return x if self.act is None else self.act(x)


class UNetGenerator(nn.Module):
    """Maps a [B, in_channels, n, n] tensor to [B, 3, n, n] scaled fields."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        widths = config.encoder_widths()
        enc = []
        prev = config.in_channels
        for i, w in enumerate(widths):
            enc.append(_EncoderBlock(prev, w, norm=(i > 0)))
            prev = w
        self.encoder = nn.ModuleList(enc)
        dec = []
        for i, (cin, cout) in enumerate(config.decoder_shapes()):
            final = i == config.depth - 1
            dec.append(_DecoderBlock(cin, cout, norm=not final, final=final))
        self.decoder = nn.ModuleList(dec)
        self.register_buffer(
            "output_scale", torch.tensor(config.channel_scales, dtype=torch.float32).view(1, 3, 1, 1)
        )

    def forward(self, x):
        acts = []
        h = x
        for block in self.encoder:
            h = block(h)
            acts.append(h)
        h = acts[-1]
        depth = self.config.depth
        for i, block in enumerate(self.decoder):
            h = block(h)
            if i < depth - 1:
                h = torch.cat([h, acts[depth - 2 - i]], dim=1)
        return torch.tanh(h) * self.output_scale

    def forward_prescale(self, x):
        """tanh output before channel scaling; bounded by 1 in magnitude."""
        return self.forward(x) / self.output_scale


def _init_parameters(model: UNetGenerator, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(
                module.weight, a=0.2, nonlinearity="leaky_relu", generator=gen
            )
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.BatchNorm2d):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
    # The final projection starts at zero so the initial output is the zero
    # field.  A variance-scaled last layer emits strided-deconvolution
    # checkerboard noise whose stencil residuals (amplified by 1/h^2) start
    # the objective ~6 orders above the physical scale and drown the useful
    # gradient signal; starting smooth removes that barrier.
    nn.init.zeros_(model.decoder[-1].conv.weight)


def build(config: ModelConfig) -> UNetGenerator:
    """Construct a generator with variance-scaled weights drawn from the
    config seed; equal configs build bit-identical parameters."""
    model = UNetGenerator(config)
    _init_parameters(model, config.seed)
    return model


def predict(
    model: UNetGenerator,
    tensor: InputTensor,
    grid: Optional[GridSpec] = None,
) -> FlowField:
    """Inference on one input tensor; the Dirichlet boundary ring is
    overwritten with the known values before returning."""
    if tensor.n_channels != model.config.in_channels:
        raise ValueError(
            f"model expects {model.config.in_channels} channels, got {tensor.n_channels}"
        )
    if tensor.size != model.config.input_size:
        raise ValueError(
            f"model expects {model.config.input_size}^2 inputs, got {tensor.size}^2"
        )
    grid = grid or GridSpec.square(tensor.size)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(tensor.channels[None])
        raw = model(x)[0].numpy().astype(np.float64)
    if was_training:
        model.train()
    terms = build_boundary_terms(tensor.bc, grid)
    out = apply_overwrite(raw, terms)
    return FlowField(out[0], out[1], out[2], grid)


# -- transfer surgeries ----------------------------------------------------


def transfer_expand_channels(
    src_model: UNetGenerator, new_in_channels: int
) -> UNetGenerator:
    """Add one input channel; its first-layer weights start at zero so a
    zero-filled extra channel reproduces the source model exactly."""
    cfg = src_model.config
    if new_in_channels != cfg.in_channels + 1:
        raise ValueError("channel expansion adds exactly one input channel")
    new_cfg = ModelConfig(
        input_size=cfg.input_size,
        in_channels=new_in_channels,
        base_width=cfg.base_width,
        channel_scales=cfg.channel_scales,
        seed=cfg.seed,
    )
    new_model = UNetGenerator(new_cfg)
    state = src_model.state_dict()
    new_state = new_model.state_dict()
    for name, value in state.items():
        if name == "encoder.0.conv.weight":
            expanded = torch.zeros_like(new_state[name])
            expanded[:, : cfg.in_channels] = value
            new_state[name] = expanded
        else:
            new_state[name] = value.clone()
    new_model.load_state_dict(new_state)
    return new_model


def transfer_expand_depth(
    src_model: UNetGenerator, new_size: int, seed: Optional[int] = None
) -> tuple[UNetGenerator, dict]:
    """Grow to a doubled domain: the outermost ``src.depth - 1`` encoder and
    decoder blocks are copied where shapes permit; the added innermost blocks
    start fresh.  Returns (model, copy report) for checkpoint metadata."""
    cfg = src_model.config
    if new_size != 2 * cfg.input_size:
        raise ValueError("depth expansion doubles the input size")
    new_cfg = ModelConfig(
        input_size=new_size,
        in_channels=cfg.in_channels,
        base_width=cfg.base_width,
        channel_scales=cfg.channel_scales,
        seed=cfg.seed if seed is None else seed,
    )
    new_model = build(new_cfg)
    keep = cfg.depth - 1
    copied = {"encoder": [], "decoder": []}
    src_state = src_model.state_dict()
    new_state = new_model.state_dict()

    def try_copy(dst_prefix, src_prefix):
        names = [n for n in src_state if n.startswith(src_prefix + ".")]
        for n in names:
            dst_name = dst_prefix + n[len(src_prefix):]
            if dst_name not in new_state or new_state[dst_name].shape != src_state[n].shape:
                return False
        for n in names:
            dst_name = dst_prefix + n[len(src_prefix):]
            new_state[dst_name] = src_state[n].clone()
        return True

    for i in range(keep):
        if try_copy(f"encoder.{i}", f"encoder.{i}"):
            copied["encoder"].append({"dst": i, "src": i})
    for k in range(1, keep + 1):
        dst = new_cfg.depth - k
        src = cfg.depth - k
        if try_copy(f"decoder.{dst}", f"decoder.{src}"):
            copied["decoder"].append({"dst": dst, "src": src})
    new_model.load_state_dict(new_state)
    return new_model, copied


# -- checkpoint container ----------------------------------------------------


def save_checkpoint(
    path: Union[str, Path],
    model: UNetGenerator,
    metadata: Optional[dict] = None,
) -> None:
    """Zip container: ``manifest.json`` (config, metadata, parameter index)
    plus ``params.bin`` holding little-endian float32 blobs.  Integer state
    (batch counters) rides in the manifest."""
    state = model.state_dict()
    index = []
    int_state = {}
    blob = io.BytesIO()
    offset = 0
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        if arr.dtype.kind in "iu":
            int_state[name] = arr.tolist()
            continue
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blob.write(data)
        offset += len(data)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_jsonable(),
        "metadata": metadata or {},
        "params": index,
        "int_state": int_state,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
        zf.writestr("params.bin", blob.getvalue())


def load_checkpoint(path: Union[str, Path]) -> tuple[UNetGenerator, dict]:
    """Rebuild the model from a checkpoint; returns (model, metadata)."""
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        blob = zf.read("params.bin")
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    config = ModelConfig.from_jsonable(manifest["config"])
    model = UNetGenerator(config)
    state = model.state_dict()
    for entry in manifest["params"]:
        arr = np.frombuffer(
            blob, dtype="<f4", count=entry["nbytes"] // 4, offset=entry["offset"]
        ).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.copy())
    for name, value in manifest["int_state"].items():
        state[name] = torch.tensor(value, dtype=state[name].dtype)
    model.load_state_dict(state)
    return model, manifest["metadata"]
