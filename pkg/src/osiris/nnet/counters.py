"""Closed-form parameter and multiply-accumulate counts.

MACs count multiplications only (bias additions and pooling are free); the
totals quoted as "MFLOPs" elsewhere in the project are MACs / 1e6.
"""

from __future__ import annotations

from .model import DOMAINS, ModelConfig


def conv_params(c_in: int, c_out: int, k: int) -> int:
    return c_out * c_in * k + c_out


def dense_params(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out


def backbone_params(cfg: ModelConfig) -> int:
    bb = cfg.backbone
    total = conv_params(bb.in_channels, bb.filterbank.out_channels, bb.filterbank.kernel)
    c_in = bb.filterbank.out_channels
    for ds in bb.ds_layers:
        total += c_in * ds.kernel + c_in           # depthwise
        total += conv_params(c_in, ds.out_channels, 1)  # pointwise
        c_in = ds.out_channels
    return total


def count_params(cfg: ModelConfig = ModelConfig(), aux: bool = False) -> int:
    """Scalars in the fused model (plus the three auxiliary heads when ``aux``)."""
    head = dense_params(cfg.fused_features, cfg.head_hidden) + dense_params(cfg.head_hidden, cfg.classes)
    total = len(DOMAINS) * backbone_params(cfg) + head
    if aux:
        per = dense_params(cfg.backbone.out_features, cfg.aux_hidden) + dense_params(cfg.aux_hidden, cfg.classes)
        total += len(DOMAINS) * per
    return total


def backbone_macs(cfg: ModelConfig, length: int) -> int:
    bb = cfg.backbone
    lens = bb.seq_lengths(length)
    macs = lens[1] * bb.filterbank.out_channels * bb.in_channels * bb.filterbank.kernel
    c_in = bb.filterbank.out_channels
    for ds, n in zip(bb.ds_layers, lens[2:]):
        macs += n * c_in * ds.kernel + n * ds.out_channels * c_in
        c_in = ds.out_channels
    return macs


def count_macs(cfg: ModelConfig = ModelConfig(), input_lens=None) -> dict:
    """Per-domain, head and total MACs for one inference."""
    lens = cfg.input_lens if input_lens is None else tuple(input_lens)
    out = {d: backbone_macs(cfg, n) for d, n in zip(DOMAINS, lens)}
    out["head"] = cfg.fused_features * cfg.head_hidden + cfg.head_hidden * cfg.classes
    out["total"] = sum(out[k] for k in (*DOMAINS, "head"))
    return out
