"""Input validation shared by the estimators and module functions."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.exceptions import NotFittedError

__all__ = ["as_sentences", "check_fitted", "check_matrix", "check_positive_int"]


def as_sentences(X: Iterable[str]) -> list[str]:
    """Materialize a corpus as a list of str, rejecting anything else."""
    if isinstance(X, (str, bytes)):
        raise TypeError("expected an iterable of sentences, got a single string")
    sentences = list(X)
    for i, s in enumerate(sentences):
        if not isinstance(s, str):
            raise TypeError(f"sentence {i} is {type(s).__name__}, expected str")
    return sentences


def check_fitted(estimator, *attributes: str) -> None:
    for attr in attributes:
        if not hasattr(estimator, attr):
            raise NotFittedError(
                f"{type(estimator).__name__} is not fitted yet; call fit() "
                "or load a serialized instance before using this method"
            )


def check_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D finite float array and return it as float32."""
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {M.shape}")
    if not np.issubdtype(M.dtype, np.floating):
        raise ValueError(f"{name} must be floating point, got dtype {M.dtype}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(M, dtype=np.float32)


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value
