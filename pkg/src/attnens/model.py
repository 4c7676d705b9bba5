"""Model assembly: configuration, initialization, forward/backward, transfer.

A model is a stack of conv blocks (conv -> ReLU -> optional 2x2 max pool),
an optional channel-gating block on the final feature map, global average
pooling, and a fully connected head (hidden layers with ReLU + dropout,
then a logits layer feeding softmax).

Initialization is a pure function of (config, seed): layers feeding a ReLU
draw He-uniform weights, layers feeding sigmoid or softmax draw
Xavier-uniform weights, and all biases start at zero.  Parameters live in
float32; forward passes accept float32 or float64 inputs and follow the
parameter precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attention import AttentionConfig, AttentionParams, ca_backward, ca_forward
from .errors import ConfigError, ShapeError, TransferError, reject_unknown_keys
from .layers import (
    ForwardMode,
    LayerParams,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    gap_backward,
    gap_forward,
    maxpool2d_backward,
    maxpool2d_forward,
    relu_backward,
    relu_forward,
    softmax_forward,
)
from .seeding import derive_seed

FREEZE_BACKBONE = "freeze_backbone"
FINETUNE_ALL = "finetune_all"
POLICIES = (FREEZE_BACKBONE, FINETUNE_ALL)


@dataclass(frozen=True)
class ConvBlockConfig:
    """One backbone stage: 'same' conv at stride 1, ReLU, optional 2x2 pool."""

    out_channels: int
    kernel: int = 3
    pool: bool = True

    def __post_init__(self):
        if self.out_channels < 1:
            raise ConfigError(f"out_channels must be >= 1, got {self.out_channels}")
        if self.kernel < 1:
            raise ConfigError(f"kernel must be >= 1, got {self.kernel}")


@dataclass(frozen=True)
class ModelConfig:
    """Complete architecture description.

    input_size is (height, width, channels).  attention=None disables the
    gating block; when present, its channel count must equal the final
    backbone stage's out_channels.
    """

    input_size: tuple[int, int, int]
    backbone: tuple[ConvBlockConfig, ...]
    num_classes: int
    head: tuple[int, ...] = (128,)
    attention: AttentionConfig | None = None
    dropout_rate: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "backbone", tuple(self.backbone))
        object.__setattr__(self, "head", tuple(int(v) for v in self.head))
        if len(self.input_size) != 3 or any(v < 1 for v in self.input_size):
            raise ConfigError(f"input_size must be 3 positive ints, got {self.input_size}")
        if not self.backbone:
            raise ConfigError("backbone needs at least one conv block")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(wdt < 1 for wdt in self.head):
            raise ConfigError(f"head widths must be >= 1, got {self.head}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.attention is not None:
            last = self.backbone[-1].out_channels
            if self.attention.channels != last:
                raise ConfigError(
                    f"attention channels {self.attention.channels} must equal "
                    f"final backbone channels {last}"
                )
        self.spatial_after_backbone()

    def spatial_after_backbone(self) -> tuple[int, int]:
        """Spatial size of the final feature map; rejects configs that pool away."""
        h, w, _ = self.input_size
        for i, block in enumerate(self.backbone):
            if block.pool:
                if h < 2 or w < 2 or h % 2 or w % 2:
                    raise ConfigError(
                        f"block {i + 1} cannot pool a {h}x{w} map; "
                        "spatial dims must stay even and >= 2"
                    )
                h, w = h // 2, w // 2
        return h, w


def default_backbone() -> tuple[ConvBlockConfig, ...]:
    """Three 3x3 stages (16, 32, 64 channels), each followed by a 2x2 pool."""
    return (
        ConvBlockConfig(16),
        ConvBlockConfig(32),
        ConvBlockConfig(64),
    )


def desk_config(num_classes: int, input_size=(48, 48, 3), attention: bool = True) -> ModelConfig:
    """Small configuration that trains in seconds on a CPU."""
    backbone = default_backbone()
    attn = AttentionConfig(backbone[-1].out_channels, reduction=4) if attention else None
    return ModelConfig(
        input_size=tuple(input_size),
        backbone=backbone,
        num_classes=num_classes,
        head=(128,),
        attention=attn,
        dropout_rate=0.4,
    )


def paper_config(num_classes: int) -> ModelConfig:
    """Full-resolution 512x512 preset mirroring the published training setup."""
    return ModelConfig(
        input_size=(512, 512, 3),
        backbone=(
            ConvBlockConfig(32),
            ConvBlockConfig(64),
            ConvBlockConfig(128),
            ConvBlockConfig(256),
        ),
        num_classes=num_classes,
        head=(40,),
        attention=AttentionConfig(256, reduction=4),
        dropout_rate=0.4,
    )


@dataclass(frozen=True)
class Model:
    """Immutable bundle of architecture, parameters, and frozen-layer names."""

    config: ModelConfig
    params: tuple[LayerParams, ...]
    frozen: frozenset[str] = field(default_factory=frozenset)

    def param(self, name: str) -> LayerParams:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(f"no layer named {name!r}")

    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def with_params(self, params: tuple[LayerParams, ...]) -> "Model":
        return replace(self, params=params)


@dataclass(frozen=True)
class _PlannedLayer:
    name: str
    kind: str  # conv | attn_reduce | attn_expand | dense | logits
    weight_shape: tuple[int, ...]
    init: str  # he | xavier
    fan_in: int
    fan_out: int
    backbone: bool


def _layer_plan(config: ModelConfig) -> list[_PlannedLayer]:
    plan = []
    channels = config.input_size[2]
    for i, block in enumerate(config.backbone):
        k = block.kernel
        plan.append(
            _PlannedLayer(
                name=f"conv{i + 1}",
                kind="conv",
                weight_shape=(block.out_channels, channels, k, k),
                init="he",
                fan_in=channels * k * k,
                fan_out=block.out_channels * k * k,
                backbone=True,
            )
        )
        channels = block.out_channels
    if config.attention is not None:
        cr = config.attention.reduced
        plan.append(
            _PlannedLayer(
                name="attn_reduce",
                kind="attn_reduce",
                weight_shape=(cr, channels, 1, 1),
                init="he",
                fan_in=channels,
                fan_out=cr,
                backbone=True,
            )
        )
        plan.append(
            _PlannedLayer(
                name="attn_expand",
                kind="attn_expand",
                weight_shape=(channels, cr, 1, 1),
                init="xavier",
                fan_in=cr,
                fan_out=channels,
                backbone=True,
            )
        )
    width = channels
    for i, hidden in enumerate(config.head):
        plan.append(
            _PlannedLayer(
                name=f"fc{i + 1}",
                kind="dense",
                weight_shape=(width, hidden),
                init="he",
                fan_in=width,
                fan_out=hidden,
                backbone=False,
            )
        )
        width = hidden
    plan.append(
        _PlannedLayer(
            name="logits",
            kind="logits",
            weight_shape=(width, config.num_classes),
            init="xavier",
            fan_in=width,
            fan_out=config.num_classes,
            backbone=False,
        )
    )
    return plan


def _init_layer(planned: _PlannedLayer, rng: np.random.Generator) -> LayerParams:
    if planned.init == "he":
        limit = np.sqrt(6.0 / planned.fan_in)
    else:
        limit = np.sqrt(6.0 / (planned.fan_in + planned.fan_out))
    weights = rng.uniform(-limit, limit, size=planned.weight_shape).astype(np.float32)
    bias_len = planned.weight_shape[0] if planned.kind.startswith(("conv", "attn")) else (
        planned.weight_shape[1]
    )
    bias = np.zeros(bias_len, dtype=np.float32)
    return LayerParams(planned.name, weights, bias)


def build_model(config: ModelConfig, seed: int) -> Model:
    """Deterministically initialize a model; same (config, seed) -> same bits."""
    rng = np.random.default_rng(seed)
    params = tuple(_init_layer(planned, rng) for planned in _layer_plan(config))
    return Model(config=config, params=params)


def _attention_params(model: Model) -> AttentionParams:
    return AttentionParams(reduce=model.param("attn_reduce"), expand=model.param("attn_expand"))


def forward_cached(model: Model, batch: np.ndarray, mode: ForwardMode):
    """Run the full network, returning (probs, tape) for backpropagation.

    The tape is a list of (kind, name, cache) entries in forward order.
    """
    h, w, c = model.config.input_size
    if batch.ndim != 4 or batch.shape[1:] != (c, h, w):
        raise ShapeError(
            f"batch shape {batch.shape} does not match expected (N, {c}, {h}, {w})"
        )
    tape = []
    x = batch
    for i in range(len(model.config.backbone)):
        p = model.param(f"conv{i + 1}")
        x, cache = conv2d_forward(x, p, stride=1, padding="same")
        tape.append(("conv", p.name, cache))
        x, cache = relu_forward(x)
        tape.append(("relu", "", cache))
        if model.config.backbone[i].pool:
            x, cache = maxpool2d_forward(x)
            tape.append(("maxpool", "", cache))
    if model.config.attention is not None:
        x, _, cache = ca_forward(x, _attention_params(model))
        tape.append(("attention", "", cache))
    x, cache = gap_forward(x)
    tape.append(("gap", "", cache))
    for i in range(len(model.config.head)):
        p = model.param(f"fc{i + 1}")
        x, cache = dense_forward(x, p)
        tape.append(("dense", p.name, cache))
        x, cache = relu_forward(x)
        tape.append(("relu", "", cache))
        drop_mode = mode
        if mode.is_train:
            drop_mode = ForwardMode.train(derive_seed(mode.dropout_seed, i))
        x, mask = dropout_forward(x, model.config.dropout_rate, drop_mode)
        tape.append(("dropout", "", mask))
    p = model.param("logits")
    logits, cache = dense_forward(x, p)
    tape.append(("dense", p.name, cache))
    probs = softmax_forward(logits)
    return probs, tape


def forward(model: Model, batch: np.ndarray, mode: ForwardMode | None = None) -> np.ndarray:
    """Class probabilities for a batch; eval mode unless told otherwise."""
    probs, _ = forward_cached(model, batch, mode if mode is not None else ForwardMode.eval())
    return probs


def backward(model: Model, tape, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Walk the tape in reverse, returning '<layer>.weight'/'<layer>.bias' grads."""
    grads: dict[str, np.ndarray] = {}
    grad = grad_logits
    for kind, name, cache in reversed(tape):
        if kind == "conv":
            grad, gw, gb = conv2d_backward(cache, grad)
            grads[f"{name}.weight"] = gw
            grads[f"{name}.bias"] = gb
        elif kind == "dense":
            grad, gw, gb = dense_backward(cache, grad)
            grads[f"{name}.weight"] = gw
            grads[f"{name}.bias"] = gb
        elif kind == "relu":
            grad = relu_backward(cache, grad)
        elif kind == "maxpool":
            grad = maxpool2d_backward(cache, grad)
        elif kind == "dropout":
            grad = dropout_backward(cache, grad)
        elif kind == "gap":
            grad = gap_backward(cache, grad)
        elif kind == "attention":
            grad, attn_grads = ca_backward(cache, grad)
            grads["attn_reduce.weight"], grads["attn_reduce.bias"] = attn_grads["reduce"]
            grads["attn_expand.weight"], grads["attn_expand.bias"] = attn_grads["expand"]
        else:
            raise RuntimeError(f"unknown tape entry {kind!r}")
    return grads


def transfer(
    source,
    head: tuple[int, ...],
    num_classes: int,
    policy: str,
    seed: int,
    input_size: tuple[int, int, int] | None = None,
    dropout_rate: float | None = None,
) -> Model:
    """Graft a trained backbone onto a fresh head for a new label space.

    ``source`` is a Checkpoint.  Backbone and attention parameters are copied
    verbatim; head layers are re-initialized from ``seed``.  With the
    'freeze_backbone' policy the copied layers are marked frozen so training
    leaves them untouched.
    """
    if policy not in POLICIES:
        raise ConfigError(f"policy must be one of {POLICIES}, got {policy!r}")
    new_config = replace(
        source.config,
        head=tuple(head),
        num_classes=num_classes,
        input_size=tuple(input_size) if input_size is not None else source.config.input_size,
        dropout_rate=source.config.dropout_rate if dropout_rate is None else dropout_rate,
    )
    source_params = {p.name: p for p in source.params}
    rng = np.random.default_rng(seed)
    params = []
    frozen = []
    for planned in _layer_plan(new_config):
        if planned.backbone:
            src = source_params.get(planned.name)
            if src is None:
                raise TransferError(f"source checkpoint has no layer {planned.name!r}")
            if src.weights.shape != planned.weight_shape:
                raise TransferError(
                    f"layer {planned.name!r}: expected weights {planned.weight_shape}, "
                    f"checkpoint has {src.weights.shape}"
                )
            params.append(src)
            if policy == FREEZE_BACKBONE:
                frozen.append(planned.name)
        else:
            params.append(_init_layer(planned, rng))
    return Model(config=new_config, params=tuple(params), frozen=frozenset(frozen))


def config_to_dict(config: ModelConfig) -> dict:
    return {
        "input_size": list(config.input_size),
        "backbone": [
            {"out_channels": b.out_channels, "kernel": b.kernel, "pool": b.pool}
            for b in config.backbone
        ],
        "num_classes": config.num_classes,
        "head": list(config.head),
        "attention": (
            None
            if config.attention is None
            else {"channels": config.attention.channels, "reduction": config.attention.reduction}
        ),
        "dropout_rate": config.dropout_rate,
    }


def config_from_dict(d: dict) -> ModelConfig:
    reject_unknown_keys(
        d,
        {"input_size", "backbone", "num_classes", "head", "attention", "dropout_rate"},
        "model config",
    )
    for key in ("input_size", "backbone", "num_classes"):
        if key not in d:
            raise ConfigError(f"model config: missing required key {key!r}")
    blocks = []
    for i, b in enumerate(d["backbone"]):
        if isinstance(b, int):
            b = {"out_channels": b}
        if not isinstance(b, dict):
            raise ConfigError(f"backbone block {i}: expected int or mapping, got {type(b).__name__}")
        reject_unknown_keys(b, {"out_channels", "kernel", "pool"}, f"backbone block {i}")
        if "out_channels" not in b:
            raise ConfigError(f"backbone block {i}: missing out_channels")
        blocks.append(
            ConvBlockConfig(
                out_channels=int(b["out_channels"]),
                kernel=int(b.get("kernel", 3)),
                pool=bool(b.get("pool", True)),
            )
        )
    attn = d.get("attention")
    attention = None
    if attn is not None:
        reject_unknown_keys(attn, {"channels", "reduction"}, "attention config")
        if "channels" not in attn:
            raise ConfigError("attention config: missing channels")
        attention = AttentionConfig(
            channels=int(attn["channels"]), reduction=int(attn.get("reduction", 4))
        )
    return ModelConfig(
        input_size=tuple(d["input_size"]),
        backbone=tuple(blocks),
        num_classes=int(d["num_classes"]),
        head=tuple(d.get("head", (128,))),
        attention=attention,
        dropout_rate=float(d.get("dropout_rate", 0.4)),
    )
