from __future__ import annotations

import logging
import time
from pathlib import Path

from ..nnet.checkpoint import save_checkpoint
from ..nnet.counters import count_macs, count_params
from ..nnet.model import DOMAINS, ModelConfig
from .report import write_json, write_tables
from .splits import SplitSpec, split_dataset
from .trainer import TrainPlan, train_fused, train_single_domain

log = logging.getLogger(__name__)


def run_training(data, plan: TrainPlan, out_dir, cfg: ModelConfig = ModelConfig(),
                 split: SplitSpec = SplitSpec(), splits=None) -> dict:
    """
    Run one strategy end to end and write its artifacts to ``out_dir``.

    ``pre`` writes ``time.osmw``, ``freq.osmw`` and ``csi.osmw`` (backbone plus
    auxiliary head) before ``fused.osmw``; both strategies write
    ``report.json`` and the CSV tables. Returns the report dictionary.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if splits is None:
        splits = split_dataset(data, split)
    t0 = time.perf_counter()
    report = {"strategy": plan.strategy, "plan": plan.__dict__.copy(),
              "split_sizes": [len(s) for s in splits], "stage_minutes": {}}

    init = "random"
    if plan.strategy == "pre":
        init = {}
        report["pretrain"] = {}
        for domain in DOMAINS:
            ts = time.perf_counter()
            params, rep = train_single_domain(domain, plan, data, splits, cfg)
            save_checkpoint(params, out_dir / f"{domain}.osmw")
            init[domain] = params
            report["pretrain"][domain] = rep.to_dict()
            report["stage_minutes"][domain] = (time.perf_counter() - ts) / 60
            log.info("pretrained %s: best val %.4f", domain, rep.instances[rep.selected].best_val_acc)

    ts = time.perf_counter()
    params, rep = train_fused(plan, data, splits, init, cfg)
    save_checkpoint(params, out_dir / "fused.osmw")
    report["stage_minutes"]["fusion"] = (time.perf_counter() - ts) / 60
    report.update(rep.to_dict())
    report["total_minutes"] = (time.perf_counter() - t0) / 60
    report["params"] = count_params(cfg)
    report["macs"] = count_macs(cfg)
    write_json(report, out_dir / "report.json")
    write_tables(report, out_dir)
    return report
