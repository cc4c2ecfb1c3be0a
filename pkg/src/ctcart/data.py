"""Datasets: normalized features, response, and per-variable cutpoint grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def uniform_grid(size: int) -> np.ndarray:
    """Evenly spaced cutpoints {k/size : k = 0..size-1} on [0, 1)."""
    if size < 1:
        raise ValueError("grid size must be positive")
    return np.arange(size, dtype=float) / size


@dataclass
class Dataset:
    """Feature matrix on [0, 1], response vector, and discretized cutpoints.

    ``feature_offsets``/``feature_scales`` record the affine map applied when
    raw features were normalized, so external query points can be mapped into
    the same space with :meth:`normalize`.
    """

    features: np.ndarray
    response: np.ndarray
    cutpoint_grids: list[np.ndarray]
    min_node_size: int = 5
    feature_offsets: np.ndarray = field(default=None)  # type: ignore[assignment]
    feature_scales: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        self.response = np.asarray(self.response, dtype=float)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.response.shape != (self.features.shape[0],):
            raise ValueError("response length must match the number of rows")
        if not np.all(np.isfinite(self.response)):
            raise ValueError("response contains non-finite values")
        if self.features.size and (
            self.features.min() < -1e-9 or self.features.max() > 1 + 1e-9
        ):
            raise ValueError("features must lie in [0, 1]; normalize first")
        if len(self.cutpoint_grids) != self.features.shape[1]:
            raise ValueError("need one cutpoint grid per feature")
        self.cutpoint_grids = [np.asarray(g, dtype=float) for g in self.cutpoint_grids]
        for v, g in enumerate(self.cutpoint_grids):
            if g.ndim != 1 or g.size == 0:
                raise ValueError(f"grid for variable {v} is empty")
            if np.any(np.diff(g) <= 0):
                raise ValueError(f"grid for variable {v} is not strictly increasing")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.feature_offsets is None:
            self.feature_offsets = np.zeros(self.d)
        if self.feature_scales is None:
            self.feature_scales = np.ones(self.d)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def grid_size(self, variable: int) -> int:
        return self.cutpoint_grids[variable].size

    def normalize(self, raw_features: np.ndarray) -> np.ndarray:
        """Map raw feature rows through the recorded normalization."""
        raw = np.asarray(raw_features, dtype=float)
        return (raw - self.feature_offsets) / self.feature_scales

    @classmethod
    def from_arrays(
        cls,
        features: np.ndarray,
        response: np.ndarray,
        grid_size: int = 100,
        min_node_size: int = 5,
        normalize: bool = False,
    ) -> "Dataset":
        """Build a dataset with uniform grids, optionally min-max normalizing.

        With ``normalize=True`` each column is mapped affinely onto [0, 1]
        and the map is recorded; constant columns are rejected.
        """
        X = np.asarray(features, dtype=float)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D array")
        offsets = np.zeros(X.shape[1])
        scales = np.ones(X.shape[1])
        if normalize:
            lo = X.min(axis=0)
            hi = X.max(axis=0)
            span = hi - lo
            if np.any(span <= 0):
                bad = int(np.argmax(span <= 0))
                raise ValueError(f"feature column {bad} is constant")
            offsets, scales = lo, span
            X = (X - lo) / span
        grids = [uniform_grid(grid_size) for _ in range(X.shape[1])]
        return cls(
            features=X,
            response=np.asarray(response, dtype=float),
            cutpoint_grids=grids,
            min_node_size=min_node_size,
            feature_offsets=offsets,
            feature_scales=scales,
        )
