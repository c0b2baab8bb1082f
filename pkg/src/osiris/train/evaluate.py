from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nnet.model import NUM_CLASSES, predict_aux, predict_fused
from ..wavegen.interferers import InterferenceClass

EVAL_CHUNK = 32


@dataclass
class EvalResult:
    confusion: np.ndarray         # row-normalized, rows = true class
    counts: np.ndarray            # raw counts
    accuracy: float
    acc_vs_sir: dict              # SIR dB -> accuracy, Noise class excluded
    acc_vs_snr: dict              # SNR dB -> accuracy
    predictions: np.ndarray


def confusion_counts(labels, preds, classes: int = NUM_CLASSES) -> np.ndarray:
    counts = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(labels), np.asarray(preds)), 1)
    return counts


def row_normalize(counts: np.ndarray) -> np.ndarray:
    """Rows sum to 1; rows for classes absent from the labels stay zero."""
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros(counts.shape), where=totals > 0)


def _grouped_accuracy(correct, keys) -> dict:
    return {float(k): float(correct[keys == k].mean()) for k in np.unique(keys)}


def evaluate_predictions(labels, preds, sir_db, snr_db) -> EvalResult:
    labels = np.asarray(labels)
    preds = np.asarray(preds)
    sir_db = np.asarray(sir_db, dtype=np.float64)
    snr_db = np.asarray(snr_db, dtype=np.float64)
    correct = labels == preds
    counts = confusion_counts(labels, preds)
    interfered = labels != InterferenceClass.Noise
    return EvalResult(
        confusion=row_normalize(counts),
        counts=counts,
        accuracy=float(correct.mean()),
        acc_vs_sir=_grouped_accuracy(correct[interfered], sir_db[interfered]),
        acc_vs_snr=_grouped_accuracy(correct, snr_db),
        predictions=preds,
    )


def predict(params, cfg, data, idx, domain: str | None = None) -> np.ndarray:
    """Argmax class for ``idx``; ``domain`` selects an auxiliary single-domain model."""
    idx = np.asarray(idx)
    preds = np.empty(idx.size, dtype=np.int64)
    for start in range(0, idx.size, EVAL_CHUNK):
        sel = idx[start:start + EVAL_CHUNK]
        if domain is None:
            probs = predict_fused(data.inputs(sel), params, cfg)
        else:
            probs = predict_aux(domain, data.inputs(sel, (domain,))[domain], params, cfg)
        preds[start:start + sel.size] = np.argmax(probs, axis=1)
    return preds


def evaluate(params, cfg, data, idx, domain: str | None = None) -> EvalResult:
    """Confusion matrix, overall accuracy and per-SIR/per-SNR accuracy on ``idx``."""
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("evaluation split is empty")
    preds = predict(params, cfg, data, idx, domain)
    return evaluate_predictions(data.labels[idx], preds, data.sir_db[idx], data.snr_db[idx])
