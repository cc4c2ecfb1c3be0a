"""Posterior functionals and mixing diagnostics computed from stored chains.

Estimates are waiting-time-weighted averages over the visited states; for
discrete-time chains every record carries weight 1, so the same code yields
plain sample means.  Effective sample sizes follow the initial-positive-
sequence truncation of the autocorrelation sum; for continuous-time chains
the trace is first expanded by replicating each record proportionally to its
waiting time (resolution: round(w_i / min w), capped at 100 replicas).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ct import ChainRecord
from .data import Dataset
from .priors import PriorConfig
from .tree import Tree, from_canonical, iter_rules, route

MAX_REPLICAS = 100


def chain_weights(chain: list[ChainRecord]) -> np.ndarray:
    return np.array([r.waiting_time for r in chain], dtype=float)


def rao_blackwell_mean(chain: list[ChainRecord], g) -> float | np.ndarray:
    """Waiting-time-weighted mean of g over the chain.

    Reduces exactly to the sample mean when all waiting times are equal, and
    is invariant to rescaling the weights by any positive constant.
    """
    if not chain:
        raise ValueError("empty chain")
    w = chain_weights(chain)
    if np.any(w <= 0):
        raise ValueError("waiting times must be positive")
    vals = np.array([g(r) for r in chain], dtype=float)
    out = np.average(vals, axis=0, weights=w)
    return float(out) if np.ndim(out) == 0 else out


def sample_mean(chain: list[ChainRecord], g) -> float | np.ndarray:
    """Unweighted mean of g over the chain."""
    if not chain:
        raise ValueError("empty chain")
    vals = np.array([g(r) for r in chain], dtype=float)
    out = vals.mean(axis=0)
    return float(out) if np.ndim(out) == 0 else out


# -- effective sample size ---------------------------------------------------


def _expand_by_weights(trace: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # clip before the integer cast: extreme weight ratios must saturate at
    # MAX_REPLICAS instead of overflowing
    reps = np.clip(np.round(weights / weights.min()), 1, MAX_REPLICAS).astype(int)
    if np.all(reps == 1):
        return trace
    return np.repeat(trace, reps)


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    return acov / acov[0]


def effective_sample_size(trace, weights=None) -> float:
    """N / (1 + 2 sum of autocorrelations), truncated at the first
    non-positive pair sum (initial positive sequence).

    ``weights`` turns a jump chain into its replica-expanded trace before
    the autocorrelations are estimated.  A constant trace returns its length
    by convention.
    """
    x = np.asarray(trace, dtype=float)
    if x.size < 10:
        raise ValueError("trace too short for an ESS estimate (need >= 10)")
    n_convention = float(x.size)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != x.shape:
            raise ValueError("weights must match the trace length")
        x = _expand_by_weights(x, w)
    if np.allclose(x, x[0]):
        return n_convention
    rho = _autocorrelation(x)
    n = x.size
    tau = -1.0
    max_pairs = (n - 1) // 2
    for m in range(max_pairs):
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0.0:
            break
        tau += 2.0 * gamma
    tau = max(tau, 1e-12)
    return float(n / tau)


# -- per-record tree functionals ----------------------------------------------


@lru_cache(maxsize=4096)
def _parsed(tree_text: str) -> Tree:
    return from_canonical(tree_text)


def split_fractions(tree_text: str, d: int) -> np.ndarray:
    """Fraction of splits per variable; a tree with no splits counts as the
    uniform vector 1/d."""
    tree = _parsed(tree_text)
    counts = np.zeros(d)
    for rule in iter_rules(tree):
        counts[rule.variable] += 1
    total = counts.sum()
    if total == 0:
        return np.full(d, 1.0 / d)
    return counts / total


def activity_traces(chain: list[ChainRecord], d: int) -> np.ndarray:
    """Per-record split-fraction vectors, shape (len(chain), d)."""
    return np.array([split_fractions(r.tree, d) for r in chain])


def variable_activity(chain: list[ChainRecord], d: int) -> np.ndarray:
    """Waiting-time-weighted average split fraction per variable."""
    if not chain:
        raise ValueError("empty chain")
    traces = activity_traces(chain, d)
    return np.average(traces, weights=chain_weights(chain), axis=0)


def count_unique_trees(chain: list[ChainRecord]) -> int:
    """Distinct (topology, rules) states visited."""
    return len({r.tree for r in chain})


_RULE_PATTERN = re.compile(r"I\(v=\d+,c=\d+\)")


def topology_signature(tree_text: str) -> str:
    """Canonical form with split rules stripped: identifies the shape only."""
    return _RULE_PATTERN.sub("I", tree_text)


def count_unique_topologies(chain: list[ChainRecord]) -> int:
    """Distinct tree shapes visited, ignoring which rules sit at the nodes."""
    return len({topology_signature(r.tree) for r in chain})


# -- prediction ----------------------------------------------------------------


def predict(
    chain: list[ChainRecord],
    train: Dataset,
    query_features: np.ndarray,
    cfg: PriorConfig,
    weighting: str = "rb",
) -> np.ndarray:
    """Model-averaged predictions at query points (already normalized).

    Each record's fitted value at x is the posterior mean of its cell's
    terminal map given the training data and that record's sigma^2; records
    are combined with waiting-time weights ("rb") or uniformly
    ("sample_mean").
    """
    if not chain:
        raise ValueError("empty chain")
    if weighting not in ("rb", "sample_mean"):
        raise ValueError("weighting must be 'rb' or 'sample_mean'")
    X = np.asarray(query_features, dtype=float)
    weights = chain_weights(chain) if weighting == "rb" else np.ones(len(chain))
    smu2 = cfg.sigma_mu2

    by_tree: dict[str, list[int]] = {}
    for i, rec in enumerate(chain):
        by_tree.setdefault(rec.tree, []).append(i)

    out = np.zeros(X.shape[0])
    for text, rows in by_tree.items():
        tree = _parsed(text)
        cells = route(tree, train.features, train.cutpoint_grids)
        leaves = sorted(cells)
        m = np.array([cells[leaf].size for leaf in leaves], dtype=float)
        s = np.array([train.response[cells[leaf]].sum() for leaf in leaves])
        leaf_to_col = {leaf: j for j, leaf in enumerate(leaves)}
        assign = np.empty(X.shape[0], dtype=int)
        for leaf, idx in route(tree, X, train.cutpoint_grids).items():
            assign[idx] = leaf_to_col[leaf]
        sig2 = np.array([chain[i].sigma2 for i in rows])
        w = weights[rows]
        # posterior mean per (leaf, record), then weight-summed per leaf
        per_leaf = (smu2 * s)[:, None] / (m[:, None] * smu2 + sig2[None, :])
        out += (per_leaf * w[None, :]).sum(axis=1)[assign]
    return out / weights.sum()


# -- summaries ----------------------------------------------------------------


@dataclass
class PosteriorSummary:
    """Benchmark measures for one chain: errors, mixing, exploration."""

    algorithm: str
    replication: int
    seed: int
    mse: float
    mse_unweighted: float
    mse_true: float
    mse_true_unweighted: float
    ess: dict[str, float]
    ess_per_second: dict[str, float]
    activity: list[float]
    unique_trees: int
    unique_topologies: int
    wall_time_seconds: float

    def to_row(self) -> dict:
        row = {
            "algorithm": self.algorithm,
            "replication": self.replication,
            "seed": self.seed,
            "mse": self.mse,
            "mse_unweighted": self.mse_unweighted,
            "mse_true": self.mse_true,
            "mse_true_unweighted": self.mse_true_unweighted,
            "unique_trees": self.unique_trees,
            "unique_topologies": self.unique_topologies,
            "wall_time_seconds": self.wall_time_seconds,
        }
        for key, val in self.ess.items():
            row[f"ess_{key}"] = val
        for i, val in enumerate(self.activity):
            row[f"activity_x{i + 1}"] = val
        for key, val in self.ess_per_second.items():
            row[f"ess_per_second_{key}"] = val
        return row


def summarize_chain(
    chain: list[ChainRecord],
    burnin: int,
    train: Dataset,
    test_features: np.ndarray,
    test_response: np.ndarray,
    cfg: PriorConfig,
    algorithm: str = "",
    replication: int = 0,
    seed: int = 0,
    wall_time: float = float("nan"),
    test_truth: np.ndarray | None = None,
) -> PosteriorSummary:
    """All benchmark measures for one chain after discarding ``burnin`` records.

    ``test_truth`` supplies the noiseless regression-function values when the
    test set is synthetic; both the noisy-response MSE and the noiseless one
    are reported, each under waiting-time and uniform weighting.
    """
    post = chain[burnin:]
    if not post:
        raise ValueError("no records after burn-in")
    d = train.d
    preds_rb = predict(post, train, test_features, cfg, weighting="rb")
    preds_sm = predict(post, train, test_features, cfg, weighting="sample_mean")
    y = np.asarray(test_response, dtype=float)
    mse = float(np.mean((y - preds_rb) ** 2))
    mse_unweighted = float(np.mean((y - preds_sm) ** 2))
    if test_truth is not None:
        truth = np.asarray(test_truth, dtype=float)
        mse_true = float(np.mean((truth - preds_rb) ** 2))
        mse_true_unweighted = float(np.mean((truth - preds_sm) ** 2))
    else:
        mse_true = mse_true_unweighted = float("nan")
    weights = chain_weights(post)
    sig_trace = np.array([r.sigma2 for r in post])
    act = activity_traces(post, d)
    ess = {"sigma2": effective_sample_size(sig_trace, weights)}
    for v in range(d):
        ess[f"x{v + 1}"] = effective_sample_size(act[:, v], weights)
    if wall_time and wall_time > 0 and not math.isnan(wall_time):
        ess_per_second = {k: val / wall_time for k, val in ess.items()}
    else:
        ess_per_second = {k: float("nan") for k in ess}
    return PosteriorSummary(
        algorithm=algorithm,
        replication=replication,
        seed=seed,
        mse=mse,
        mse_unweighted=mse_unweighted,
        mse_true=mse_true,
        mse_true_unweighted=mse_true_unweighted,
        ess=ess,
        ess_per_second=ess_per_second,
        activity=[float(a) for a in np.average(act, weights=weights, axis=0)],
        unique_trees=count_unique_trees(post),
        unique_topologies=count_unique_topologies(post),
        wall_time_seconds=wall_time,
    )
