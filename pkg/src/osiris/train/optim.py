"""Adam, a reduce-on-plateau LR schedule and early stopping."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        """In-place update of every parameter that has a gradient."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)


class PlateauScheduler:
    """Multiply the LR by ``factor`` after ``patience`` epochs without a new best metric."""

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 3, min_lr: float = 1e-6):
        self.opt = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = -np.inf
        self.stale = 0

    def step(self, metric: float) -> float:
        if metric > self.best:
            self.best = metric
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.opt.lr = max(self.opt.lr * self.factor, self.min_lr)
                self.stale = 0
        return self.opt.lr


class EarlyStopping:
    """Tracks the best metric and a snapshot of the parameters that produced it."""

    def __init__(self, patience: int = 8):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.best_params = None
        self.stale = 0

    def update(self, metric: float, params: dict, epoch: int) -> bool:
        """Record ``metric``; return True when training should stop."""
        if metric > self.best:
            self.best = metric
            self.best_epoch = epoch
            self.best_params = {k: v.copy() for k, v in params.items()}
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience
