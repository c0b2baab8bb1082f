from .checkpoint import load_checkpoint, save_checkpoint
from .counters import count_macs, count_params
from .layers import conv1d_forward, cross_entropy, depthwise_separable_forward, softmax
from .model import (
    DOMAINS,
    BackboneConfig,
    ConvSpec,
    ModelConfig,
    ParameterSet,
    aux_forward,
    aux_loss_and_grads,
    backbone_forward,
    fused_forward,
    fused_loss_and_grads,
    init_params,
    normalize_domain,
    param_shapes,
    predict_aux,
    predict_fused,
    tiny_config,
)

__all__ = [
    "DOMAINS", "BackboneConfig", "ConvSpec", "ModelConfig", "ParameterSet",
    "aux_forward", "aux_loss_and_grads", "backbone_forward", "conv1d_forward",
    "count_macs", "count_params", "cross_entropy", "depthwise_separable_forward",
    "fused_forward", "fused_loss_and_grads", "init_params", "load_checkpoint",
    "normalize_domain", "param_shapes", "predict_aux", "predict_fused",
    "save_checkpoint", "softmax", "tiny_config",
]
