"""
Multi-instance training for the single-domain and fused models.

``rand`` trains the fused network from random weights. ``pre`` first trains
each domain backbone with its auxiliary head, keeps the best instance per
domain, copies those backbones into the fused network and retrains the whole
model. Every stage trains several seeded instances and keeps the one with the
highest validation accuracy.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import ConfigError
from ..nnet.model import DOMAINS, ModelConfig, aux_loss_and_grads, fused_loss_and_grads, init_params
from .evaluate import evaluate, predict
from .optim import Adam, EarlyStopping, PlateauScheduler

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainPlan:
    strategy: str = "rand"
    instances: int = 8
    batch_size: int = 256
    max_epochs: int = 64
    lr: float = 1e-3
    lr_factor: float = 0.5
    lr_patience: int = 3
    early_stop_patience: int = 8
    seed: int = 0
    micro_batch: int = 16  # gradient accumulation chunk; does not change the maths
    pretrain_epochs: int | None = None  # single-domain stage cap; None = max_epochs

    def __post_init__(self):
        if self.strategy not in ("rand", "pre"):
            raise ConfigError(f"strategy must be 'rand' or 'pre', got {self.strategy!r}")
        if self.instances < 1 or self.batch_size < 1 or self.micro_batch < 1:
            raise ConfigError("instances, batch_size and micro_batch must be >= 1")
        if self.max_epochs < 0 or (self.pretrain_epochs is not None and self.pretrain_epochs < 0):
            raise ConfigError("epoch caps must be >= 0")

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.instances)]


@dataclass
class InstanceResult:
    seed: int
    epochs_run: int = 0
    best_epoch: int = 0
    best_val_acc: float = 0.0
    wall_time: float = 0.0
    diverged: bool = False
    loss_curve: list = field(default_factory=list)
    val_acc_curve: list = field(default_factory=list)
    lr_curve: list = field(default_factory=list)


@dataclass
class TrainReport:
    model: str                      # "fused" or a domain name
    strategy: str
    instances: list
    selected: int
    stability_delta: float
    accuracy: float = float("nan")
    confusion: list = field(default_factory=list)
    confusion_counts: list = field(default_factory=list)
    acc_vs_sir: dict = field(default_factory=dict)
    acc_vs_snr: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def selected_seed(self) -> int:
        return self.instances[self.selected].seed

    def to_dict(self) -> dict:
        out = asdict(self)
        out["selected_seed"] = self.selected_seed
        out["acc_vs_sir"] = {str(k): v for k, v in self.acc_vs_sir.items()}
        out["acc_vs_snr"] = {str(k): v for k, v in self.acc_vs_snr.items()}
        return out


def stability_delta(accs) -> float:
    """Spread (max - min) of the instances' best validation accuracies."""
    accs = list(accs)
    return float(max(accs) - min(accs)) if accs else 0.0


def select_instance(results: list[InstanceResult]) -> int:
    """Highest best_val_acc among non-diverged instances; ties go to the lower seed."""
    ok = [i for i, r in enumerate(results) if not r.diverged]
    if not ok:
        raise RuntimeError("every training instance diverged")
    return min(ok, key=lambda i: (-results[i].best_val_acc, results[i].seed))


def _val_accuracy(params, cfg, data, val_idx, domain):
    preds = predict(params, cfg, data, val_idx, domain)
    return float(np.mean(preds == data.labels[val_idx]))


def train_instance(params: dict, plan: TrainPlan, cfg: ModelConfig, data, train_idx, val_idx,
                   seed: int, domain: str | None = None) -> tuple[dict, InstanceResult]:
    """
    Train one instance in place and return its best-validation snapshot.

    ``domain=None`` trains the fused model; a domain name trains that backbone
    with its auxiliary head.
    """
    res = InstanceResult(seed=seed)
    rng = np.random.default_rng([seed, 0x05EED])
    opt = Adam(params, lr=plan.lr)
    sched = PlateauScheduler(opt, plan.lr_factor, plan.lr_patience)
    stopper = EarlyStopping(plan.early_stop_patience)
    domains = DOMAINS if domain is None else (domain,)
    t0 = time.perf_counter()

    stopper.update(_val_accuracy(params, cfg, data, val_idx, domain), params, 0)
    for epoch in range(1, plan.max_epochs + 1):
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        for start in range(0, order.size, plan.batch_size):
            batch = order[start:start + plan.batch_size]
            loss, grads = 0.0, None
            for mb_start in range(0, batch.size, plan.micro_batch):
                sel = batch[mb_start:mb_start + plan.micro_batch]
                weight = sel.size / batch.size
                inputs = data.inputs(sel, domains)
                labels = data.labels[sel]
                if domain is None:
                    mb_loss, g, _ = fused_loss_and_grads(inputs, labels, params, cfg,
                                                         int(rng.integers(2 ** 63)))
                else:
                    mb_loss, g, _ = aux_loss_and_grads(domain, inputs[domain], labels, params, cfg)
                loss += weight * mb_loss
                if grads is None:
                    grads = {k: weight * v for k, v in g.items()}
                else:
                    for k, v in g.items():
                        grads[k] += weight * v
            if not math.isfinite(loss):
                res.diverged = True
                break
            opt.step(params, grads)
            epoch_loss += loss * batch.size
        if res.diverged:
            log.warning("instance seed=%d diverged in epoch %d", seed, epoch)
            break
        val_acc = _val_accuracy(params, cfg, data, val_idx, domain)
        res.loss_curve.append(epoch_loss / order.size)
        res.val_acc_curve.append(val_acc)
        res.lr_curve.append(opt.lr)
        res.epochs_run = epoch
        log.info("%s seed=%d epoch %d loss %.4f val %.4f lr %.2e", domain or "fused", seed, epoch,
                 res.loss_curve[-1], val_acc, opt.lr)
        stop = stopper.update(val_acc, params, epoch)
        sched.step(val_acc)
        if stop:
            break

    res.best_val_acc = float(stopper.best)
    res.best_epoch = stopper.best_epoch
    res.wall_time = time.perf_counter() - t0
    return stopper.best_params, res


def _finish(model, plan, cfg, data, test_idx, results, snapshots, t0, domain=None):
    sel = select_instance(results)
    params = snapshots[sel]
    report = TrainReport(
        model=model, strategy=plan.strategy, instances=results, selected=sel,
        stability_delta=stability_delta(r.best_val_acc for r in results if not r.diverged),
    )
    if test_idx is not None and len(test_idx):
        ev = evaluate(params, cfg, data, test_idx, domain)
        report.accuracy = ev.accuracy
        report.confusion = ev.confusion.tolist()
        report.confusion_counts = ev.counts.tolist()
        report.acc_vs_sir = ev.acc_vs_sir
        report.acc_vs_snr = ev.acc_vs_snr
    report.wall_time = time.perf_counter() - t0
    return params, report


def train_single_domain(domain: str, plan: TrainPlan, data, splits, cfg: ModelConfig = ModelConfig()):
    """Pre-train ``domain``'s backbone plus auxiliary head; keep the best instance."""
    if domain not in DOMAINS:
        raise ConfigError(f"unknown domain {domain!r}")
    if plan.pretrain_epochs is not None:
        plan = replace(plan, max_epochs=plan.pretrain_epochs)
    train_idx, val_idx, test_idx = splits
    t0 = time.perf_counter()
    results, snaps = [], []
    for seed in plan.seeds:
        params = init_params(cfg, seed, parts=(domain, f"aux_{domain}"))
        best, res = train_instance(params, plan, cfg, data, train_idx, val_idx, seed, domain)
        results.append(res)
        snaps.append(best)
    return _finish(domain, plan, cfg, data, test_idx, results, snaps, t0, domain)


def transfer_backbones(params: dict, pretrained: dict) -> dict:
    """Copy every ``<domain>.*`` tensor of the pretrained sets into ``params``."""
    for domain in DOMAINS:
        src = pretrained[domain]
        for name in params:
            if name.startswith(domain + "."):
                if src[name].shape != params[name].shape:
                    raise ConfigError(f"pretrained {name} shape {src[name].shape} != {params[name].shape}")
                params[name] = src[name].astype(params[name].dtype, copy=True)
    return params


def train_fused(plan: TrainPlan, data, splits, init="random", cfg: ModelConfig = ModelConfig()):
    """
    Train the fused model; ``init`` is ``"random"`` or a mapping
    ``domain -> pretrained ParameterSet`` (required for the ``pre`` strategy).
    """
    if plan.strategy == "pre":
        if not isinstance(init, dict) or any(d not in init for d in DOMAINS):
            raise ConfigError("the 'pre' strategy needs pretrained time, freq and csi checkpoints")
    train_idx, val_idx, test_idx = splits
    t0 = time.perf_counter()
    results, snaps = [], []
    for seed in plan.seeds:
        params = init_params(cfg, seed)
        if isinstance(init, dict):
            transfer_backbones(params, init)
        best, res = train_instance(params, plan, cfg, data, train_idx, val_idx, seed)
        results.append(res)
        snaps.append(best)
    return _finish("fused", plan, cfg, data, test_idx, results, snaps, t0)
