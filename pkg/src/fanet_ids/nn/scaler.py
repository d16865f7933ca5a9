"""Standard scaling fitted on training rows only."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray


def fit_scaler(train_matrix):
    """Per-column mean and population std; constant columns get std 1."""
    X = np.asarray(train_matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Scaler(mean, std)


def transform(scaler, matrix):
    X = np.asarray(matrix, dtype=float)
    if X.shape[-1] != scaler.mean.shape[0]:
        raise ValueError("column count differs from the fitted scaler")
    return (X - scaler.mean) / scaler.std
