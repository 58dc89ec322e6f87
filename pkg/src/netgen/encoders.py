"""Per-ROI time-series encoders: 3-layer 1D-CNN and 4-layer bi-GRU.

Both map a (batch, v, t) signal tensor to (batch, v, d) embeddings with one
shared parameter set across ROIs, so they are equivariant to ROI
permutation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nncore as nn

__all__ = ["EncoderConfig", "CnnEncoder", "GruEncoder", "build_encoder"]


@dataclass
class EncoderConfig:
    kind: str = "gru"  # "cnn" or "gru"
    window: int = 16  # tau: CNN first kernel width / GRU segment length
    dim: int = 8  # d: embedding size per ROI

    def validate(self) -> None:
        if self.kind not in ("cnn", "gru"):
            raise ValueError(f"encoder kind must be 'cnn' or 'gru', got {self.kind!r}")
        if self.window < 1:
            raise ValueError(f"window must be positive, got {self.window}")
        if self.dim < 1:
            raise ValueError(f"embedding dim must be positive, got {self.dim}")


class CnnEncoder:
    """Conv(1,32,tau,s2) -> Conv(32,32,8) -> Conv(32,16,8) -> global max pool
    -> Dense 32 -> ReLU -> Dense d, applied to every ROI row."""

    KERNELS = ((32, None, 2), (32, 8, 1), (16, 8, 1))  # (out_channels, kernel, stride)

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.conv1 = nn.Conv1d(1, 32, cfg.window, 2, rng)
        self.conv2 = nn.Conv1d(32, 32, 8, 1, rng)
        self.conv3 = nn.Conv1d(32, 16, 8, 1, rng)
        self.fc1 = nn.Dense(16, 32, rng)
        self.fc2 = nn.Dense(32, cfg.dim, rng)

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def min_length(self) -> int:
        """Smallest t admitted by the receptive field of the conv stack."""
        needed = 1
        for _, kernel, stride in reversed(self.KERNELS):
            k = self.cfg.window if kernel is None else kernel
            needed = (needed - 1) * stride + k
        return needed

    def forward(self, x) -> nn.Tensor:
        x = nn.as_tensor(x)
        b, v, t = x.shape
        if t < self.min_length():
            raise ValueError(
                f"cnn encoder with window {self.cfg.window} needs t >= {self.min_length()}, got {t}"
            )
        h = x.reshape((b * v, 1, t))
        h = self.conv3(self.conv2(self.conv1(h)))
        h = nn.max_last(h)
        h = self.fc2(nn.relu(self.fc1(h)))
        return h.reshape((b, v, self.cfg.dim))

    __call__ = forward

    def named_params(self):
        out = []
        for prefix, layer in (
            ("conv1", self.conv1),
            ("conv2", self.conv2),
            ("conv3", self.conv3),
            ("fc1", self.fc1),
            ("fc2", self.fc2),
        ):
            out.extend((f"{prefix}.{n}", p) for n, p in layer.params())
        return out


class GruEncoder:
    """4-layer bi-directional GRU over length-tau segments of each ROI row.

    The series is cut into z = floor(t / tau) consecutive segments (any
    remainder is dropped); hidden width per direction equals tau; final
    forward and backward top-layer states concatenate to a 2*tau readout,
    then a dense map yields the d-dimensional embedding.
    """

    LAYERS = 4

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        hid = cfg.window
        self.cells = []
        for layer in range(self.LAYERS):
            n_in = cfg.window if layer == 0 else 2 * hid
            self.cells.append(
                (nn.GruCell(n_in, hid, rng), nn.GruCell(n_in, hid, rng))
            )
        self.out = nn.Dense(2 * hid, cfg.dim, rng)

    @property
    def dim(self) -> int:
        return self.cfg.dim

    @property
    def readout_width(self) -> int:
        return 2 * self.cfg.window

    def segment_count(self, t: int) -> int:
        return t // self.cfg.window

    def forward(self, x) -> nn.Tensor:
        x = nn.as_tensor(x)
        b, v, t = x.shape
        tau = self.cfg.window
        z = self.segment_count(t)
        if z < 1:
            raise ValueError(f"gru encoder window {tau} exceeds series length {t}")
        h = x[:, :, : z * tau].reshape((b * v, z, tau))
        fwd_out = bwd_out = None
        for fwd_cell, bwd_cell in self.cells:
            fwd_out = nn.gru_direction(
                h, fwd_cell.w_ih, fwd_cell.w_hh, fwd_cell.b_ih, fwd_cell.b_hh
            )
            bwd_out = nn.gru_direction(
                h, bwd_cell.w_ih, bwd_cell.w_hh, bwd_cell.b_ih, bwd_cell.b_hh,
                reverse=True,
            )
            h = nn.concat([fwd_out, bwd_out], axis=2)
        h_r = nn.concat([fwd_out[:, z - 1, :], bwd_out[:, 0, :]], axis=1)
        return self.out(h_r).reshape((b, v, self.cfg.dim))

    __call__ = forward

    def named_params(self):
        out = []
        for layer, (fwd, bwd) in enumerate(self.cells):
            out.extend((f"gru{layer}.fwd.{n}", p) for n, p in fwd.params())
            out.extend((f"gru{layer}.bwd.{n}", p) for n, p in bwd.params())
        out.extend((f"out.{n}", p) for n, p in self.out.params())
        return out


def build_encoder(cfg: EncoderConfig, rng: np.random.Generator):
    cfg.validate()
    return CnnEncoder(cfg, rng) if cfg.kind == "cnn" else GruEncoder(cfg, rng)
