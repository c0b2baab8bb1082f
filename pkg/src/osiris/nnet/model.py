"""
The fused three-domain classifier.

Each domain (time, freq, csi) feeds an identical backbone: a learned
filterbank conv (k=15, s=4) and four depthwise-separable blocks, each
followed by ReLU, then global average pooling. The pooled vectors are
concatenated into a dense(48) -> ReLU -> dropout -> dense(7) -> softmax head.
Single-domain pre-training swaps the fusion head for a per-domain auxiliary
dense(16) -> ReLU -> dense(7) head.

Parameters live in a plain ordered ``dict`` (the ParameterSet) keyed as
``"<domain>.fb.w"``, ``"<domain>.ds<i>.dw_w"``, ``"head.hidden.w"``,
``"aux_<domain>.out.b"`` and so on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ShapeError
from . import layers as L

DOMAINS = ("time", "freq", "csi")
NUM_CLASSES = 7
DEFAULT_INPUT_LENS = (4096, 4096, 1638)

ParameterSet = dict  # ordered name -> np.ndarray


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    stride: int
    out_channels: int


@dataclass(frozen=True)
class BackboneConfig:
    filterbank: ConvSpec = ConvSpec(15, 4, 16)
    ds_layers: tuple = (ConvSpec(7, 2, 32), ConvSpec(7, 2, 48), ConvSpec(5, 2, 64), ConvSpec(5, 2, 96))
    in_channels: int = 2

    def __post_init__(self):
        if len(self.ds_layers) != 4:
            raise ShapeError("backbone needs exactly 4 depthwise-separable layers")
        if (self.filterbank.kernel, self.filterbank.stride) != (15, 4):
            raise ShapeError("filterbank must use kernel 15 and stride 4")

    @property
    def out_features(self) -> int:
        return self.ds_layers[-1].out_channels

    def seq_lengths(self, length: int) -> list[int]:
        """Sequence length after the input and after every conv layer."""
        lens = [length]
        for spec in (self.filterbank, *self.ds_layers):
            lens.append(-(-lens[-1] // spec.stride))
        return lens


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    input_lens: tuple = DEFAULT_INPUT_LENS
    head_hidden: int = 48
    head_dropout: float = 0.3
    classes: int = NUM_CLASSES
    aux_hidden: int = 16

    def __post_init__(self):
        if self.classes != NUM_CLASSES:
            raise ShapeError(f"classes must be {NUM_CLASSES}")
        if len(self.input_lens) != len(DOMAINS):
            raise ShapeError("input_lens needs one entry per domain")

    @property
    def fused_features(self) -> int:
        return len(DOMAINS) * self.backbone.out_features

    def input_len(self, domain: str) -> int:
        return self.input_lens[DOMAINS.index(domain)]


def tiny_config(input_lens=(32, 32, 16)) -> ModelConfig:
    """A few-hundred-parameter model used by gradient checks."""
    bb = BackboneConfig(ConvSpec(15, 4, 3),
                        (ConvSpec(3, 2, 4), ConvSpec(3, 2, 4), ConvSpec(3, 1, 3), ConvSpec(3, 1, 4)))
    return ModelConfig(bb, input_lens, head_hidden=5, aux_hidden=3)


# ----------------------------------------------------------------- params

def param_shapes(cfg: ModelConfig, parts=DOMAINS + ("head",)) -> dict:
    """Ordered ``name -> shape`` for the requested parts (domains, "head", "aux_<d>")."""
    bb = cfg.backbone
    shapes = {}
    for part in parts:
        if part in DOMAINS:
            fb = bb.filterbank
            shapes[f"{part}.fb.w"] = (fb.out_channels, bb.in_channels, fb.kernel)
            shapes[f"{part}.fb.b"] = (fb.out_channels,)
            c_in = fb.out_channels
            for i, ds in enumerate(bb.ds_layers):
                shapes[f"{part}.ds{i}.dw_w"] = (c_in, ds.kernel)
                shapes[f"{part}.ds{i}.dw_b"] = (c_in,)
                shapes[f"{part}.ds{i}.pw_w"] = (ds.out_channels, c_in)
                shapes[f"{part}.ds{i}.pw_b"] = (ds.out_channels,)
                c_in = ds.out_channels
        elif part == "head":
            shapes["head.hidden.w"] = (cfg.fused_features, cfg.head_hidden)
            shapes["head.hidden.b"] = (cfg.head_hidden,)
            shapes["head.out.w"] = (cfg.head_hidden, cfg.classes)
            shapes["head.out.b"] = (cfg.classes,)
        elif part.startswith("aux_") and part[4:] in DOMAINS:
            shapes[f"{part}.hidden.w"] = (bb.out_features, cfg.aux_hidden)
            shapes[f"{part}.hidden.b"] = (cfg.aux_hidden,)
            shapes[f"{part}.out.w"] = (cfg.aux_hidden, cfg.classes)
            shapes[f"{part}.out.b"] = (cfg.classes,)
        else:
            raise ValueError(f"unknown parameter group {part!r}")
    return shapes


def _fan_in(name: str, shape) -> int:
    if name.endswith(".w"):  # dense weights are [in, out]
        return shape[0] if ".hidden." in name or ".out." in name else int(np.prod(shape[1:]))
    return shape[1]  # dw_w [C, k] and pw_w [C_out, C_in]


def init_params(cfg: ModelConfig, seed: int, parts=DOMAINS + ("head",),
                dtype=np.float32) -> ParameterSet:
    """He-uniform weights drawn in name order from ``seed``; zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg, parts).items():
        if name.endswith("_b") or name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            limit = np.sqrt(6.0 / _fan_in(name, shape))
            params[name] = rng.uniform(-limit, limit, shape).astype(dtype)
    return params


# ------------------------------------------------------------ preprocessing

def normalize_domain(x) -> np.ndarray:
    """
    Complex sequence(s) ``[..., L]`` -> float32 ``[..., 2, L]`` rows (I, Q).

    Each sequence is shifted to zero mean and scaled to unit mean power.
    """
    z = np.asarray(x).astype(np.complex128)
    z = z - z.mean(axis=-1, keepdims=True)
    p = np.mean(z.real ** 2 + z.imag ** 2, axis=-1, keepdims=True)
    z = z / np.sqrt(np.where(p > 0, p, 1.0))
    return np.stack([z.real, z.imag], axis=-2).astype(np.float32)


# ---------------------------------------------------------------- forward

def backbone_fwd(x, cfg: ModelConfig, params: ParameterSet, domain: str):
    x, squeeze = L._batched(x)
    bb = cfg.backbone
    if x.shape[1] != bb.in_channels:
        raise ShapeError(f"{domain}: expected {bb.in_channels} input rows, got {x.shape[1]}")
    caches = []
    h, c = L.conv1d_fwd(x, params[f"{domain}.fb.w"], params[f"{domain}.fb.b"], bb.filterbank.stride)
    h, m = L.relu_fwd(h)
    caches.append((c, m))
    for i, ds in enumerate(bb.ds_layers):
        p = f"{domain}.ds{i}"
        h, c_dw = L.depthwise_fwd(h, params[p + ".dw_w"], params[p + ".dw_b"], ds.stride)
        h, c_pw = L.pointwise_fwd(h, params[p + ".pw_w"], params[p + ".pw_b"])
        h, m = L.relu_fwd(h)
        caches.append((c_dw, c_pw, m))
    feat = h.mean(axis=2)
    return (feat[0] if squeeze else feat), (caches, h.shape)


def backbone_bwd(dfeat, cache, params: ParameterSet, domain: str, grads: dict):
    caches, shape = cache
    dh = np.broadcast_to(dfeat[:, :, None] / shape[2], shape)
    for i in range(len(caches) - 1, 0, -1):
        c_dw, c_pw, m = caches[i]
        dh = L.relu_bwd(dh, m)
        dh, gw, gb = L.pointwise_bwd(dh, c_pw)
        grads[f"{domain}.ds{i - 1}.pw_w"], grads[f"{domain}.ds{i - 1}.pw_b"] = gw, gb
        dh, gw, gb = L.depthwise_bwd(dh, c_dw)
        grads[f"{domain}.ds{i - 1}.dw_w"], grads[f"{domain}.ds{i - 1}.dw_b"] = gw, gb
    c, m = caches[0]
    _, gw, gb = L.conv1d_bwd(L.relu_bwd(dh, m), c, need_dx=False)
    grads[f"{domain}.fb.w"], grads[f"{domain}.fb.b"] = gw, gb


def backbone_forward(x, cfg: ModelConfig, params: ParameterSet, domain: str = "time") -> np.ndarray:
    """Pooled feature vector(s) of one domain backbone for ``[2, L]`` or ``[B, 2, L]`` input."""
    return backbone_fwd(x, cfg, params, domain)[0]


def head_fwd(feats, params: ParameterSet, prefix: str, dropout: float = 0.0, dropout_seed=None):
    h, c1 = L.dense_fwd(feats, params[prefix + ".hidden.w"], params[prefix + ".hidden.b"])
    h, m = L.relu_fwd(h)
    mask = None
    if dropout > 0 and dropout_seed is not None:
        mask = L.dropout_mask(h.shape, dropout, dropout_seed, h.dtype)
        h = h * mask
    logits, c2 = L.dense_fwd(h, params[prefix + ".out.w"], params[prefix + ".out.b"])
    return L.softmax(logits), (c1, m, mask, c2)


def head_bwd(dlogits, cache, prefix: str, grads: dict):
    c1, m, mask, c2 = cache
    dh, grads[prefix + ".out.w"], grads[prefix + ".out.b"] = L.dense_bwd(dlogits, c2)
    if mask is not None:
        dh = dh * mask
    dfeat, grads[prefix + ".hidden.w"], grads[prefix + ".hidden.b"] = L.dense_bwd(L.relu_bwd(dh, m), c1)
    return dfeat


def fused_forward(f_time, f_freq, f_csi, params: ParameterSet, train_mode: bool = False,
                  dropout_seed: int | None = None, dropout: float = 0.3) -> np.ndarray:
    """Fusion head posteriors; dropout only when ``train_mode`` is set."""
    feats = np.concatenate([np.atleast_2d(f) for f in (f_time, f_freq, f_csi)], axis=-1)
    if feats.shape[-1] != params["head.hidden.w"].shape[0]:
        raise ShapeError(f"fused features {feats.shape[-1]} != head input {params['head.hidden.w'].shape[0]}")
    seed = dropout_seed if train_mode else None
    probs, _ = head_fwd(feats, params, "head", dropout if train_mode else 0.0, seed)
    return probs[0] if np.ndim(f_time) == 1 else probs


def aux_forward(f_domain, params: ParameterSet, domain: str = "time") -> np.ndarray:
    prefix = f"aux_{domain}"
    if np.shape(f_domain)[-1] != params[prefix + ".hidden.w"].shape[0]:
        raise ShapeError("feature width does not match auxiliary head")
    probs, _ = head_fwd(np.atleast_2d(f_domain), params, prefix)
    return probs[0] if np.ndim(f_domain) == 1 else probs


# ------------------------------------------------------------- training

def fused_loss_and_grads(inputs: dict, labels, params: ParameterSet, cfg: ModelConfig,
                         dropout_seed: int | None = None):
    """
    Mean cross-entropy over a batch and its gradient for every fused parameter.

    ``inputs`` maps each domain to a normalized ``[B, 2, L]`` array. Passing a
    ``dropout_seed`` enables training-mode dropout with that mask.
    """
    feats, caches = [], []
    for d in DOMAINS:
        f, c = backbone_fwd(inputs[d], cfg, params, d)
        feats.append(f)
        caches.append(c)
    fused = np.concatenate(feats, axis=1)
    probs, hcache = head_fwd(fused, params, "head", cfg.head_dropout if dropout_seed is not None else 0.0,
                             dropout_seed)
    loss, dlogits = L.cross_entropy(probs, labels)
    grads = {}
    dfused = head_bwd(dlogits.astype(probs.dtype), hcache, "head", grads)
    w = cfg.backbone.out_features
    for i, d in enumerate(DOMAINS):
        backbone_bwd(dfused[:, i * w:(i + 1) * w], caches[i], params, d, grads)
    return loss, {k: grads[k] for k in params if k in grads}, probs


def aux_loss_and_grads(domain: str, x, labels, params: ParameterSet, cfg: ModelConfig):
    f, c = backbone_fwd(x, cfg, params, domain)
    probs, hcache = head_fwd(f, params, f"aux_{domain}")
    loss, dlogits = L.cross_entropy(probs, labels)
    grads = {}
    dfeat = head_bwd(dlogits.astype(probs.dtype), hcache, f"aux_{domain}", grads)
    backbone_bwd(dfeat, c, params, domain, grads)
    return loss, {k: grads[k] for k in params if k in grads}, probs


def predict_fused(inputs: dict, params: ParameterSet, cfg: ModelConfig) -> np.ndarray:
    feats = [backbone_fwd(inputs[d], cfg, params, d)[0] for d in DOMAINS]
    return fused_forward(*feats, params)


def predict_aux(domain: str, x, params: ParameterSet, cfg: ModelConfig) -> np.ndarray:
    return aux_forward(backbone_fwd(x, cfg, params, domain)[0], params, domain)


def with_input_lens(cfg: ModelConfig, input_lens) -> ModelConfig:
    return replace(cfg, input_lens=tuple(input_lens))
