"""Channel gating block.

Each channel of a feature map is squeezed to its global average, passed
through a two-layer bottleneck (reduce -> ReLU -> expand -> sigmoid), and the
resulting per-channel gate rescales the original map.  Both bottleneck stages
are 1x1 convolutions, stored as [C_out, C_in, 1, 1] kernels and applied as
matrix products on the squeezed [N, C] statistics.

A large positive expand bias saturates every gate at 1, turning the block
into an identity; this is the escape hatch used to compare gated and ungated
models that share all other parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import LayerParams, sigmoid_forward


@dataclass(frozen=True)
class AttentionConfig:
    """Bottleneck geometry: C channels squeezed to floor(C / reduction)."""

    channels: int
    reduction: int = 4

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.reduction < 1:
            raise ConfigError(f"reduction must be >= 1, got {self.reduction}")
        if self.channels // self.reduction < 1:
            raise ConfigError(
                f"reduction {self.reduction} collapses {self.channels} channels below 1"
            )

    @property
    def reduced(self) -> int:
        return self.channels // self.reduction


@dataclass(frozen=True)
class AttentionParams:
    """Parameter pair for the bottleneck: reduce (C->C/r) and expand (C/r->C)."""

    reduce: LayerParams
    expand: LayerParams

    def __post_init__(self):
        rw, ew = self.reduce.weights, self.expand.weights
        if rw.ndim != 4 or ew.ndim != 4 or rw.shape[2:] != (1, 1) or ew.shape[2:] != (1, 1):
            raise ShapeError("attention kernels must be 1x1 rank-4 arrays")
        if rw.shape[0] != ew.shape[1] or rw.shape[1] != ew.shape[0]:
            raise ShapeError(
                f"reduce {rw.shape} and expand {ew.shape} do not form a bottleneck"
            )


def ca_forward(x: np.ndarray, p: AttentionParams):
    """Gate each channel of [N,C,H,W] by its squeezed bottleneck response.

    Returns (y, s, cache): the rescaled map, the [N,C] gate values, and the
    intermediates needed by ca_backward.
    """
    if x.ndim != 4:
        raise ShapeError(f"attention input must be rank 4, got shape {x.shape}")
    n, c, h, w = x.shape
    cr = p.reduce.weights.shape[0]
    if p.reduce.weights.shape[1] != c:
        raise ShapeError(
            f"attention expects {p.reduce.weights.shape[1]} channels, input has {c}"
        )
    wr = p.reduce.weights.reshape(cr, c)
    we = p.expand.weights.reshape(c, cr)

    z = x.mean(axis=(2, 3))
    u = z @ wr.T + p.reduce.bias
    hidden = np.maximum(u, 0)
    v = hidden @ we.T + p.expand.bias
    s, _ = sigmoid_forward(v)
    y = x * s[:, :, None, None]
    cache = (x, z, u, hidden, s, p)
    return y, s, cache


def ca_backward(cache, grad_y: np.ndarray):
    """Gradients of ca_forward w.r.t. the input and both parameter pairs.

    Returns (grad_x, grads) where grads maps 'reduce'/'expand' to
    (grad_weights, grad_bias) in the stored kernel shapes.
    """
    x, z, u, hidden, s, p = cache
    n, c, h, w = x.shape
    if grad_y.shape != x.shape:
        raise ShapeError(f"grad shape {grad_y.shape} != input shape {x.shape}")
    cr = p.reduce.weights.shape[0]
    wr = p.reduce.weights.reshape(cr, c)
    we = p.expand.weights.reshape(c, cr)

    grad_s = (grad_y * x).sum(axis=(2, 3))
    grad_v = grad_s * s * (1.0 - s)
    grad_we = grad_v.T @ hidden
    grad_eb = grad_v.sum(axis=0)
    grad_hidden = grad_v @ we
    grad_u = grad_hidden * (u > 0)
    grad_wr = grad_u.T @ z
    grad_rb = grad_u.sum(axis=0)
    grad_z = grad_u @ wr

    grad_x = grad_y * s[:, :, None, None]
    grad_x = grad_x + np.broadcast_to(
        grad_z[:, :, None, None] / grad_y.dtype.type(h * w), x.shape
    )
    grads = {
        "reduce": (grad_wr.reshape(p.reduce.weights.shape), grad_rb),
        "expand": (grad_we.reshape(p.expand.weights.shape), grad_eb),
    }
    return grad_x, grads
