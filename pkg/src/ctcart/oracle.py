"""Exact posteriors on exhaustively enumerable tree spaces.

Enumerates every (topology, rules) state reachable through births that keep
all cells at or above the minimum node size, computes each state's
normalized marginal posterior at a fixed noise variance, and compares chain
occupancies against it in total variation.  Usable only when the grid,
depth bound and sample size keep the space small.
"""

from __future__ import annotations

import numpy as np

from . import tree as tr
from .ct import ChainRecord, CtOptions, log_posterior_marginal, run_ct_chain
from .data import Dataset
from .priors import PriorConfig
from .rj import RjOptions, run_rj_chain


class OracleSpaceError(RuntimeError):
    """The tree space is too large to enumerate exhaustively."""


def toy_problem(
    n: int = 20,
    cuts: tuple[float, ...] = (0.35, 0.65),
    min_node_size: int = 5,
    seed: int = 7,
    noise_sd: float = 1.0,
    region_means: tuple[float, ...] = (0.4, 1.0, 0.8),
) -> Dataset:
    """A one-variable problem whose reachable tree space is tiny.

    Covariates are evenly spread on (0, 1) and the grid holds only the given
    cutpoints, so with the default settings exactly five trees keep every
    cell at or above the minimum node size (the empty tree, two stumps, two
    two-split chains).  Birth/death moves connect the two stump branches
    only through the single-leaf state, so the default signal is chosen weak
    and non-monotone: all five states then carry at least ~13% posterior
    mass and every state exits at rate near one, which keeps the space
    rapidly mixing for every sampler under test.
    """
    x = np.linspace(0.5 / n, 1.0 - 0.5 / n, n)
    means = np.full(n, region_means[-1])
    edges = (0.0,) + cuts
    for lo, mu in zip(edges, region_means):
        means[x > lo] = mu
    rng = np.random.default_rng(seed)
    y = means + noise_sd * rng.standard_normal(n)
    return Dataset(
        features=x[:, None],
        response=y,
        cutpoint_grids=[np.array(cuts, dtype=float)],
        min_node_size=min_node_size,
    )


def toy_prior(data: Dataset) -> PriorConfig:
    """Prior paired with the toy problem: a gentler depth penalty keeps the
    two-split states at estimable posterior mass."""
    return PriorConfig.from_data(data.response, beta_tree=1.0)


def _usable_cuts(data: Dataset, idx: np.ndarray, variable: int) -> np.ndarray:
    xs = np.sort(data.features[idx, variable], kind="stable")
    counts = np.searchsorted(xs, data.cutpoint_grids[variable], side="right")
    mns = data.min_node_size
    return np.nonzero((counts >= mns) & (idx.size - counts >= mns))[0]


def enumerate_trees(
    data: Dataset, max_depth: int, max_trees: int = 1_000_000
) -> list[tr.Tree]:
    """All distinct trees reachable via births within the depth bound.

    Every enumerated tree keeps each terminal cell at or above the dataset's
    minimum node size, which is exactly the support the samplers explore.
    """
    start = tr.Tree.single_leaf()
    seen: dict[str, tr.Tree] = {tr.to_canonical(start): start}
    queue = [start]
    while queue:
        t = queue.pop()
        depths = t.depths()
        cells = tr.route(t, data.features, data.cutpoint_grids)
        for leaf in sorted(cells):
            if depths[leaf] >= max_depth:
                continue
            idx = cells[leaf]
            for v in range(data.d):
                for k in _usable_cuts(data, idx, v):
                    t2 = tr.apply_birth(t, leaf, tr.SplitRule(v, int(k)))
                    key = tr.to_canonical(t2)
                    if key not in seen:
                        if len(seen) >= max_trees:
                            raise OracleSpaceError(
                                f"enumeration exceeded {max_trees} trees"
                            )
                        seen[key] = t2
                        queue.append(t2)
    return [seen[k] for k in sorted(seen)]


def exact_posterior(
    trees: list[tr.Tree], data: Dataset, sigma2: float, cfg: PriorConfig
) -> dict[str, float]:
    """Normalized marginal posterior over the enumerated states."""
    logs = np.array(
        [log_posterior_marginal(t, data, sigma2, cfg) for t in trees], dtype=float
    )
    logs -= logs.max()
    probs = np.exp(logs)
    probs /= probs.sum()
    return {tr.to_canonical(t): float(p) for t, p in zip(trees, probs)}


def occupancy(chain: list[ChainRecord], burnin: int = 0) -> dict[str, float]:
    """Waiting-time-weighted state occupancy (plain frequency when weights
    are all one)."""
    acc: dict[str, float] = {}
    total = 0.0
    for rec in chain[burnin:]:
        acc[rec.tree] = acc.get(rec.tree, 0.0) + rec.waiting_time
        total += rec.waiting_time
    return {k: v / total for k, v in acc.items()}


def tv_distance(p: dict[str, float], q: dict[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def oracle_report(
    data: Dataset,
    cfg: PriorConfig,
    sigma2: float,
    max_depth: int,
    steps: int,
    seed: int,
    burnin: int = 0,
    max_trees: int = 1_000_000,
) -> dict:
    """Run CT and RJ chains at fixed sigma^2 against the exact posterior.

    Returns per-tree rows (exact probability, CT weighted occupancy, RJ
    frequency) plus the two total-variation distances.
    """
    trees = enumerate_trees(data, max_depth, max_trees=max_trees)
    exact = exact_posterior(trees, data, sigma2, cfg)
    ct_chain = run_ct_chain(
        data,
        cfg,
        steps,
        np.random.default_rng(seed),
        CtOptions(update_sigma2=False),
        sigma2=sigma2,
    )
    rj_chain = run_rj_chain(
        data,
        cfg,
        steps,
        np.random.default_rng(seed + 1),
        RjOptions(update_sigma2=False),
        sigma2=sigma2,
    )
    ct_occ = occupancy(ct_chain, burnin)
    rj_occ = occupancy(rj_chain, burnin)
    rows = [
        {
            "tree": key,
            "exact": exact[key],
            "ct_estimate": ct_occ.get(key, 0.0),
            "rj_estimate": rj_occ.get(key, 0.0),
        }
        for key in sorted(exact, key=exact.get, reverse=True)
    ]
    return {
        "n_trees": len(trees),
        "rows": rows,
        "tv_ct": tv_distance(exact, ct_occ),
        "tv_rj": tv_distance(exact, rj_occ),
    }
