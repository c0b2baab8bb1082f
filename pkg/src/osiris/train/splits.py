from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameter, StratificationError

MIN_CELL = 8


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.75
    val_frac: float = 0.125
    test_frac: float = 0.125
    split_seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise InvalidParameter(f"split fractions must be >= 0 and sum to 1, got {fracs}")


def split_dataset(dataset, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Stratified train/val/test index arrays.

    Every (class, SNR, SIR) cell is shuffled with ``split_seed`` and cut by the
    fractions, so each split keeps the cell proportions. ``dataset`` needs
    ``labels``, ``snr_db`` and ``sir_db`` arrays.
    """
    labels = np.asarray(dataset.labels)
    if labels.size == 0:
        raise InvalidParameter("cannot split an empty dataset")
    keys = np.stack([labels.astype(np.float64), np.asarray(dataset.snr_db, np.float64),
                     np.asarray(dataset.sir_db, np.float64)], axis=1)
    cells, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    rng = np.random.default_rng(spec.split_seed)
    parts = ([], [], [])
    for cell in range(len(cells)):
        members = np.flatnonzero(inverse == cell)
        if members.size < MIN_CELL:
            raise StratificationError(f"cell {tuple(cells[cell])} has only {members.size} samples")
        members = rng.permutation(members)
        n_train = int(round(spec.train_frac * members.size))
        n_val = int(round(spec.val_frac * members.size))
        parts[0].append(members[:n_train])
        parts[1].append(members[n_train:n_train + n_val])
        parts[2].append(members[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)) for p in parts)
