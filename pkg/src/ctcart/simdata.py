"""Synthetic benchmark generator: three covariates, three response regions.

The first covariate and the third are exactly confounded (x1 low exactly
when x3 is high), which is what makes the problem hard for tree samplers:
equally good trees exist that split on either variable.  The regression
function takes the values 1, 3 and 5 on the regions cut out by x1 and x2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, uniform_grid


@dataclass(frozen=True)
class SimConfig:
    n: int = 300
    sigma2: float = 1.0
    seed: int = 0
    grid_size: int = 100
    min_node_size: int = 5

    def __post_init__(self) -> None:
        if self.n % 3 != 0 or self.n <= 0:
            raise ValueError("n must be a positive multiple of 3")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")


def true_mean(features: np.ndarray) -> np.ndarray:
    """Noiseless regression-function values at the given covariates."""
    x1, x2 = features[:, 0], features[:, 1]
    out = np.full(features.shape[0], 5.0)
    low = x1 <= 0.5
    out[low & (x2 <= 0.5)] = 1.0
    out[low & (x2 > 0.5)] = 3.0
    return out


def generate(cfg: SimConfig) -> Dataset:
    """Draw one synthetic dataset; deterministic under the seed.

    The first two thirds of the rows have x1 in [0.1, 0.4] and x3 in
    [0.6, 0.9]; the last third reversed.  x2 is low on the first third, high
    on the second, and unrestricted on the last.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    third = n // 3
    x1 = np.empty(n)
    x2 = np.empty(n)
    x3 = np.empty(n)
    x1[: 2 * third] = rng.uniform(0.1, 0.4, size=2 * third)
    x1[2 * third :] = rng.uniform(0.6, 0.9, size=third)
    x2[:third] = rng.uniform(0.1, 0.4, size=third)
    x2[third : 2 * third] = rng.uniform(0.6, 0.9, size=third)
    x2[2 * third :] = rng.uniform(0.1, 0.9, size=third)
    x3[: 2 * third] = rng.uniform(0.6, 0.9, size=2 * third)
    x3[2 * third :] = rng.uniform(0.1, 0.4, size=third)
    features = np.column_stack([x1, x2, x3])
    response = true_mean(features) + np.sqrt(cfg.sigma2) * rng.standard_normal(n)
    grids = [uniform_grid(cfg.grid_size) for _ in range(3)]
    return Dataset(
        features=features,
        response=response,
        cutpoint_grids=grids,
        min_node_size=cfg.min_node_size,
    )


def generate_pair(cfg: SimConfig) -> tuple[Dataset, Dataset]:
    """Training and test replicates from independent seed streams."""
    train = generate(cfg)
    test_seed = np.random.SeedSequence([cfg.seed, 1]).generate_state(1)[0]
    test = generate(
        SimConfig(
            n=cfg.n,
            sigma2=cfg.sigma2,
            seed=int(test_seed),
            grid_size=cfg.grid_size,
            min_node_size=cfg.min_node_size,
        )
    )
    return train, test
