from .data import DomainData
from .evaluate import EvalResult, evaluate, evaluate_predictions
from .pipeline import run_training
from .report import compare_strategies, write_json, write_tables
from .splits import SplitSpec, split_dataset
from .trainer import (
    InstanceResult,
    TrainPlan,
    TrainReport,
    select_instance,
    stability_delta,
    train_fused,
    train_single_domain,
)

__all__ = [
    "DomainData", "EvalResult", "InstanceResult", "SplitSpec", "TrainPlan", "TrainReport",
    "compare_strategies", "evaluate", "evaluate_predictions", "run_training", "select_instance",
    "split_dataset", "stability_delta", "train_fused", "train_single_domain", "write_json",
    "write_tables",
]
