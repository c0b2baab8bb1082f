"""Latency benchmark and MAC-based placement shares."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidParameter
from ..nnet.counters import count_macs
from ..nnet.model import ModelConfig, fused_forward
from .nodes import DuNode, connect_with_retry, domain_features, ru_serve

STAGES = ("time", "freq", "csi", "head")


def compute_share_report(cfg: ModelConfig = ModelConfig()) -> dict:
    """Fraction of total MACs placed at the RU, the DU backbones and the head."""
    macs = count_macs(cfg)
    total = macs["total"]
    return {
        "ru_fraction": macs["time"] / total,
        "du_freq_fraction": macs["freq"] / total,
        "du_csi_fraction": macs["csi"] / total,
        "head_fraction": macs["head"] / total,
    }


@dataclass
class BenchResult:
    mode: str
    iterations: int
    warmup: int
    median_us: float
    p95_us: float
    stage_us: dict                      # median per-stage micros
    stage_shares: dict
    wire_us: float | None = None        # median round trip not spent computing
    samples_us: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "samples_us"}
        return out


def _monolithic_once(sample, params, cfg):
    t_seq, freq, csi = sample
    t0 = time.perf_counter_ns()
    f_t = domain_features(t_seq, cfg, params, "time")
    t1 = time.perf_counter_ns()
    f_f = domain_features(freq, cfg, params, "freq")
    t2 = time.perf_counter_ns()
    f_c = domain_features(csi, cfg, params, "csi")
    t3 = time.perf_counter_ns()
    fused_forward(f_t, f_f, f_c, params)
    t4 = time.perf_counter_ns()
    stages = {"time": (t1 - t0) / 1e3, "freq": (t2 - t1) / 1e3, "csi": (t3 - t2) / 1e3, "head": (t4 - t3) / 1e3}
    return (t4 - t0) / 1e3, stages, None


def _split_once(sample, du: DuNode):
    t0 = time.perf_counter_ns()
    res = du.classify(sample[0])
    wall = (time.perf_counter_ns() - t0) / 1e3
    stages = {"time": float(res.ru_micros), **res.stage_micros}
    return wall, stages, wall - res.ru_micros - res.du_micros


def bench_latency(params, samples, cfg: ModelConfig = ModelConfig(), iterations: int = 1000,
                  warmup: int = 50, mode: str = "monolithic") -> BenchResult:
    """
    Time single-sample inference.

    Parameters
    ----------
    samples : sequence of (time, freq, csi)
        Cycled through in order. Split mode only uses the time window.
    iterations : int
        Total iterations including the ``warmup`` ones, which are discarded.
    mode : {"monolithic", "split-loopback"}
        In-process inference, or RU and DU talking over localhost.
    """
    if not iterations > warmup >= 0:
        raise InvalidParameter(f"need iterations > warmup >= 0, got {iterations}, {warmup}")
    if mode not in ("monolithic", "split-loopback"):
        raise InvalidParameter(f"unknown mode {mode!r}")
    if not len(samples):
        raise InvalidParameter("no samples to benchmark")

    stop = threading.Event()
    du = None
    if mode == "split-loopback":
        port_box = []
        ready = threading.Event()
        thread = threading.Thread(
            target=ru_serve, args=(params, cfg),
            kwargs=dict(stop=stop, ready=lambda p: (port_box.append(p), ready.set())), daemon=True)
        thread.start()
        ready.wait(10)
        du = DuNode(params, cfg, connect_with_retry("127.0.0.1", port_box[0]))
    try:
        walls, wires = [], []
        stage_acc = {s: [] for s in STAGES}
        for i in range(iterations):
            sample = samples[i % len(samples)]
            if du is None:
                wall, stages, wire = _monolithic_once(sample, params, cfg)
            else:
                wall, stages, wire = _split_once(sample, du)
            if i < warmup:
                continue
            walls.append(wall)
            for s in STAGES:
                stage_acc[s].append(stages[s])
            if wire is not None:
                wires.append(wire)
    finally:
        if du is not None:
            du.close()
            stop.set()
            thread.join(5)

    walls = np.asarray(walls)
    stage_us = {s: float(np.median(v)) for s, v in stage_acc.items()}
    total = sum(stage_us.values())
    return BenchResult(
        mode=mode, iterations=iterations, warmup=warmup,
        median_us=float(np.median(walls)), p95_us=float(np.percentile(walls, 95)),
        stage_us=stage_us, stage_shares={s: v / total for s, v in stage_us.items()},
        wire_us=float(np.median(wires)) if wires else None, samples_us=walls.tolist(),
    )
