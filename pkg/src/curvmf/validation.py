"""Input validation helpers shared by the estimator and the CLI."""
from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

from .meanfield import ProblemSpec


def check_spec(spec) -> ProblemSpec:
    if not isinstance(spec, ProblemSpec):
        raise TypeError(f"expected a ProblemSpec, got {type(spec).__name__}")
    return spec


def check_field(u, n: int, *, name: str = "u", allow_batch: bool = False) -> np.ndarray:
    """Float array of shape (n,) (or (m, n) when allow_batch) with finite entries."""
    arr = np.asarray(u, dtype=float)
    ok_shapes = arr.ndim == 1 and arr.shape[0] == n
    if allow_batch:
        ok_shapes = ok_shapes or (arr.ndim == 2 and arr.shape[1] == n)
    if not ok_shapes:
        raise ValueError(f"{name} has shape {arr.shape}; expected ({n},)" + (" or (m, n)" if allow_batch else ""))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_is_solved(estimator) -> None:
    if getattr(estimator, "result_", None) is None:
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit(spec) first")
