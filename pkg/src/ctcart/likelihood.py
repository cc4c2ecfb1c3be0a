"""Tree likelihoods: the full Gaussian form and the mu-integrated marginal.

Each terminal cell is summarized by (count, sum of y, sum of y^2); with the
conjugate Normal prior on terminal maps, the per-cell marginal likelihood is
closed form, and the tree marginal is the product over cells.  Cells smaller
than the dataset's ``min_node_size`` return a -inf sentinel so that any move
creating them gets rate zero downstream.
"""

from __future__ import annotations

import math

import numpy as np

from .data import Dataset
from .priors import LOG_2PI, PriorConfig
from .tree import RIGHT, SplitRule, Tree, apply_birth, apply_rotate, route

# Per-leaf sufficient statistics: leaf id -> (count, sum_y, sum_y2).
SuffStats = dict[int, tuple[int, float, float]]

NEG_INF = float("-inf")


def cell_stats(response: np.ndarray, idx: np.ndarray) -> tuple[int, float, float]:
    ys = response[idx]
    return int(ys.size), float(ys.sum()), float(np.square(ys).sum())


def suffstats(tree: Tree, data: Dataset) -> SuffStats:
    """Per-terminal-cell statistics computed from scratch."""
    cells = route(tree, data.features, data.cutpoint_grids)
    return {leaf: cell_stats(data.response, idx) for leaf, idx in cells.items()}


def cell_log_marginal(m, s, q, sigma2: float, sigma_mu2: float):
    """Closed-form log of integral_mu prod_i N(y_i; mu, sigma2) N(mu; 0, sigma_mu2) dmu.

    Vectorizes over cells; an empty cell contributes 0 (empty product).
    """
    m = np.asarray(m, dtype=float)
    s = np.asarray(s, dtype=float)
    q = np.asarray(q, dtype=float)
    v = sigma2 + m * sigma_mu2
    return (
        -0.5 * m * (LOG_2PI + math.log(sigma2))
        + 0.5 * (math.log(sigma2) - np.log(v))
        - q / (2.0 * sigma2)
        + sigma_mu2 * s * s / (2.0 * sigma2 * v)
    )


def cell_log_full(m, s, q, mu, sigma2: float):
    """Gaussian log likelihood of one cell at a fixed terminal map value."""
    m = np.asarray(m, dtype=float)
    return (
        -0.5 * m * (LOG_2PI + math.log(sigma2))
        - (np.asarray(q) - 2.0 * np.asarray(mu) * np.asarray(s) + m * np.square(mu))
        / (2.0 * sigma2)
    )


def log_marginal_from_stats(stats: SuffStats, sigma2: float, cfg: PriorConfig, min_node_size: int) -> float:
    total = 0.0
    s_mu2 = cfg.sigma_mu2
    for m, s, q in stats.values():
        if m < min_node_size:
            return NEG_INF
        total += float(cell_log_marginal(m, s, q, sigma2, s_mu2))
    return total


def log_marginal_likelihood(tree: Tree, data: Dataset, sigma2: float, cfg: PriorConfig) -> float:
    """Marginal log likelihood of the tree with all terminal maps integrated out.

    Returns -inf when any terminal cell holds fewer than ``min_node_size``
    observations.
    """
    return log_marginal_from_stats(suffstats(tree, data), sigma2, cfg, data.min_node_size)


def log_full_likelihood(tree: Tree, data: Dataset, sigma2: float) -> float:
    """Gaussian log likelihood at the tree's stored terminal map values."""
    stats = suffstats(tree, data)
    total = 0.0
    for leaf, (m, s, q) in stats.items():
        mu = tree.node(leaf).mu
        if mu is None:
            raise ValueError(f"leaf {leaf} has no terminal map value")
        total += float(cell_log_full(m, s, q, mu, sigma2))
    return total


def suffstats_for_move(stats: SuffStats, move, tree: Tree, data: Dataset) -> SuffStats:
    """Statistics of the post-move tree, updated incrementally.

    ``move`` carries ``kind`` ("birth" | "death" | "rotate") plus the fields
    of the corresponding candidate; the result matches a from-scratch
    recomputation on the edited tree exactly (births and deaths move whole
    cells, rotations re-route only the rotated subtree).
    """
    out = dict(stats)
    if move.kind == "birth":
        cells = route(tree, data.features, data.cutpoint_grids)
        idx = cells[move.node]
        cut = data.cutpoint_grids[move.variable][move.cutpoint_index]
        go_left = data.features[idx, move.variable] <= cut
        edited = apply_birth(tree, move.node, SplitRule(move.variable, move.cutpoint_index))
        nd = edited.node(move.node)
        del out[move.node]
        out[nd.left] = cell_stats(data.response, idx[go_left])
        out[nd.right] = cell_stats(data.response, idx[~go_left])
    elif move.kind == "death":
        nd = tree.node(move.node)
        ml, sl, ql = out.pop(nd.left)
        mr, sr, qr = out.pop(nd.right)
        out[move.node] = (ml + mr, sl + sr, ql + qr)
    elif move.kind == "rotate":
        edited = apply_rotate(tree, move.node, move.outcome)
        old_leaves = tree.subtree_leaf_ids(move.node)
        subtree_idx = np.concatenate(
            [route(tree, data.features, data.cutpoint_grids)[leaf] for leaf in old_leaves]
        )
        nd = tree.node(move.node)
        new_root = nd.left if move.outcome == RIGHT else nd.right
        new_cells = route(
            edited, data.features, data.cutpoint_grids, idx=np.sort(subtree_idx), start=new_root
        )
        for leaf in old_leaves:
            out.pop(leaf, None)
        for leaf, idx in new_cells.items():
            out[leaf] = cell_stats(data.response, idx)
    else:
        raise ValueError(f"unknown move kind {move.kind!r}")
    return out
