"""Episodic pseudo-counts: spatial grid visits and density-model gains.

The grid variant buckets the estimated position into G x G map-cell blocks
(orientation ignored) and counts visits per episode. The density-model
variant trains a small masked autoregressive convnet on quantized view
images, one state at a time in encounter order, and converts the
prediction gain into a pseudo visitation count. The model itself is a
continual learner: its weights persist across episodes and environments
and are never reset by an episode reset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .worldsim import Pose

__all__ = [
    "GridCounter",
    "PseudoCountState",
    "quantize",
    "MaskedConv2d",
    "DensityModel",
    "log_prob",
    "update_and_gain",
    "pseudo_count_dme",
    "save_density_model",
    "load_density_model",
]


@dataclass
class GridCounter:
    """Episodic visit counts over square blocks of the estimated plane."""

    block_cells: int = 5  # G, in map cells
    resolution: float = 0.05
    counts: dict = field(default_factory=dict)

    @property
    def block_size(self) -> float:
        return self.block_cells * self.resolution

    def cell_of(self, pose: Pose) -> tuple[int, int]:
        return (
            int(math.floor(pose.x / self.block_size)),
            int(math.floor(pose.y / self.block_size)),
        )

    def record_and_count(self, pose: Pose) -> int:
        """Increment the count of the block holding (x, y); returns the
        post-increment count. Orientation plays no part."""
        if not (math.isfinite(pose.x) and math.isfinite(pose.y)):
            raise ValueError("pose must be finite")
        key = self.cell_of(pose)
        self.counts[key] = self.counts.get(key, 0) + 1
        return self.counts[key]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def reset(self) -> None:
        self.counts.clear()


@dataclass
class PseudoCountState:
    """Bookkeeping for the density-model pseudo-count.

    ``n`` counts steps since the episode started and ``c`` scales the
    prediction gain. ``pseudo_total`` is the derivational pseudo-count
    total: it appears in the pseudo-count derivation but is never consumed
    by the final formula; it is tracked only for inspection.
    """

    n: int = 0
    c: float = 0.1
    pseudo_total: float = 0.0

    def start_episode(self) -> None:
        self.n = 0
        self.pseudo_total = 0.0

    def tick(self) -> int:
        self.n += 1
        return self.n

    def observe(self, nhat: float) -> None:
        if math.isfinite(nhat):
            self.pseudo_total += nhat


def quantize(view: np.ndarray, bins: int) -> np.ndarray:
    """Quantize a [0, 1] grayscale image to integer bins in [0, bins)."""
    view = np.asarray(view)
    if view.min() < 0.0 or view.max() > 1.0:
        raise ValueError("view values must lie in [0, 1]")
    q = np.floor(view * bins).astype(np.int64)
    return np.minimum(q, bins - 1)


class MaskedConv2d(nn.Conv2d):
    """Convolution whose kernel is masked for raster-order autoregression.

    Mask type A zeroes the center tap and everything after it, so the
    output at a pixel never sees that pixel's own value; type B keeps the
    center (safe once an A layer has removed the self-dependence).
    """

    def __init__(self, mask_type: str, in_ch: int, out_ch: int, kernel_size: int):
        super().__init__(in_ch, out_ch, kernel_size, padding=kernel_size // 2, bias=True)
        if mask_type not in ("A", "B"):
            raise ValueError("mask_type must be 'A' or 'B'")
        mask = torch.zeros_like(self.weight)
        k = kernel_size
        mask[:, :, : k // 2, :] = 1.0
        mask[:, :, k // 2, : k // 2] = 1.0
        if mask_type == "B":
            mask[:, :, k // 2, k // 2] = 1.0
        self.register_buffer("mask", mask)

    def forward(self, x):
        return self._conv_forward(x, self.weight * self.mask, self.bias)


class _Residual1x1(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = MaskedConv2d("B", channels, channels, 1)
        self.conv2 = MaskedConv2d("B", channels, channels, 1)

    def forward(self, x):
        h = self.conv2(torch.relu(self.conv1(torch.relu(x))))
        return x + h


class DensityModel(nn.Module):
    """Lightweight masked autoregressive density model over quantized views.

    A 7x7 mask-A convolution feeds two residual blocks of 1x1 masked
    convolutions, a 1x1 masked convolution (all 16 channels) and a final
    1x1 head producing per-pixel logits over the quantization bins. The
    model owns its optimizer so continual one-state-at-a-time training and
    checkpointing stay self-contained.
    """

    def __init__(self, view_size: int = 42, bins: int = 128, channels: int = 16, lr: float = 1e-4, seed: int = 0):
        super().__init__()
        self.view_size = view_size
        self.bins = bins
        self.channels = channels
        self.lr = lr
        torch.manual_seed(seed)
        self.entry = MaskedConv2d("A", 1, channels, 7)
        self.res1 = _Residual1x1(channels)
        self.res2 = _Residual1x1(channels)
        self.mid = MaskedConv2d("B", channels, channels, 1)
        self.head = MaskedConv2d("B", channels, bins, 1)
        self.optimizer = torch.optim.Adam(self.parameters(), lr=lr)
        self.update_count = 0

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.relu(self.entry(x))
        h = self.res2(self.res1(h))
        h = torch.relu(self.mid(h))
        return self.head(h)

    def _prepare(self, state: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
        state = np.asarray(state)
        if state.shape != (self.view_size, self.view_size):
            raise ValueError(f"state must be {self.view_size}x{self.view_size}")
        if state.min() < 0 or state.max() >= self.bins:
            raise ValueError("state entries must lie in [0, bins)")
        dtype = next(self.parameters()).dtype
        x = torch.as_tensor(state, dtype=dtype) / (self.bins - 1)
        target = torch.as_tensor(state, dtype=torch.long)
        return x.view(1, 1, self.view_size, self.view_size), target


def log_prob(model: DensityModel, state: np.ndarray) -> float:
    """Joint log-probability (nats) of a quantized state under the model:
    the sum over pixels of the per-pixel conditional log-probabilities."""
    x, target = model._prepare(state)
    with torch.no_grad():
        logits = model(x)
        logp = torch.log_softmax(logits, dim=1)
        picked = logp[0].gather(0, target.unsqueeze(0)).sum()
    return float(picked)


def update_and_gain(model: DensityModel, state: np.ndarray) -> tuple[DensityModel, float]:
    """One NLL gradient step on ``state``; returns the prediction gain, the
    log-probability improvement measured after versus before the update."""
    x, target = model._prepare(state)
    logits = model(x)
    logp = torch.log_softmax(logits, dim=1)
    loss = -logp[0].gather(0, target.unsqueeze(0)).sum()
    if not torch.isfinite(loss):
        raise FloatingPointError("density model loss is not finite")
    before = -float(loss)
    model.optimizer.zero_grad()
    loss.backward()
    model.optimizer.step()
    model.update_count += 1
    after = log_prob(model, state)
    return model, after - before


def pseudo_count_dme(pg: float, n: int, c: float) -> float:
    """Pseudo visitation count from a prediction gain.

    The gain is clipped at zero, scaled by c / sqrt(n) for episode length,
    and inverted through exp; the count is floored at 1. A zero scaled gain
    means the model learned nothing new, which maps to an infinite count
    (and a zero count-discounted reward downstream).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if c <= 0:
        raise ValueError("c must be positive")
    scaled = c * (pg if pg > 0.0 else 0.0) / math.sqrt(n)
    if scaled <= 0.0:
        return math.inf
    return max(1.0 / math.expm1(scaled), 1.0)


def save_density_model(model: DensityModel, path) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, param in model.named_parameters():
        arrays[f"param.{name}"] = param.detach().cpu().numpy()
    steps = {}
    for name, param in model.named_parameters():
        state = model.optimizer.state.get(param, {})
        if "exp_avg" in state:
            arrays[f"adam.m.{name}"] = state["exp_avg"].cpu().numpy()
            arrays[f"adam.v.{name}"] = state["exp_avg_sq"].cpu().numpy()
            steps[name] = int(state["step"])
    meta = {
        "view_size": model.view_size,
        "bins": model.bins,
        "channels": model.channels,
        "lr": model.lr,
        "update_count": model.update_count,
        "adam_steps": steps,
    }
    save_checkpoint(path, "density", arrays, meta)


def load_density_model(path) -> DensityModel:
    kind, arrays, meta = load_checkpoint(path)
    if kind != "density":
        raise CheckpointError(f"{path}: kind {kind!r} is not a density checkpoint")
    model = DensityModel(
        view_size=meta["view_size"],
        bins=meta["bins"],
        channels=meta["channels"],
        lr=meta["lr"],
    )
    with torch.no_grad():
        for name, param in model.named_parameters():
            param.copy_(torch.from_numpy(arrays[f"param.{name}"]))
    for name, param in model.named_parameters():
        key = f"adam.m.{name}"
        if key in arrays:
            self_state = model.optimizer.state
            self_state[param] = {
                "step": torch.tensor(float(meta["adam_steps"][name])),
                "exp_avg": torch.from_numpy(arrays[key]).clone(),
                "exp_avg_sq": torch.from_numpy(arrays[f"adam.v.{name}"]).clone(),
            }
    model.update_count = int(meta["update_count"])
    return model
