"""Tree, terminal-map and noise-variance priors, plus their ratio helpers.

The tree prior factorizes over nodes: an internal node at depth d contributes
the split probability alpha/(1+d)^beta times uniform choices of variable and
cutpoint; a terminal node contributes one minus the split probability.
Terminal maps are iid Normal(0, sigma_mu^2) and the noise variance follows an
inverse gamma IG(nu/2, nu*lambda/2), both conjugate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .data import Dataset
from .tree import Internal, Tree

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    alpha_tree: float = 0.95
    beta_tree: float = 2.0
    sigma_mu: float = 1.0
    nu_sigma: float = 3.0
    lambda_sigma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha_tree < 1.0:
            raise ValueError("alpha_tree must lie in (0, 1)")
        if self.beta_tree < 0.0:
            raise ValueError("beta_tree must be nonnegative")
        for name in ("sigma_mu", "nu_sigma", "lambda_sigma"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def sigma_mu2(self) -> float:
        return self.sigma_mu * self.sigma_mu

    @classmethod
    def from_data(
        cls,
        response: np.ndarray,
        alpha_tree: float = 0.95,
        beta_tree: float = 2.0,
        k: float = 2.0,
        nu_sigma: float = 3.0,
        mass_below_var: float = 0.90,
    ) -> "PriorConfig":
        """Data-guided defaults: sigma_mu from the response range, lambda by
        placing ``mass_below_var`` prior mass below the sample variance."""
        y = np.asarray(response, dtype=float)
        spread = float(y.max() - y.min())
        if spread <= 0:
            spread = 1.0
        sigma_mu = spread / (2.0 * k)
        lam = calibrate_lambda(float(np.var(y)), nu_sigma, mass_below_var)
        return cls(
            alpha_tree=alpha_tree,
            beta_tree=beta_tree,
            sigma_mu=sigma_mu,
            nu_sigma=nu_sigma,
            lambda_sigma=lam,
        )


def calibrate_lambda(sample_var: float, nu: float, mass: float = 0.90) -> float:
    """Scale lambda so that P(sigma^2 <= sample_var) = ``mass`` under the prior.

    The IG CDF at a fixed point decreases monotonically in lambda, so a
    bracketing root search is exact.
    """
    if sample_var <= 0:
        return 1.0

    def gap(lam: float) -> float:
        return stats.invgamma.cdf(sample_var, a=nu / 2.0, scale=nu * lam / 2.0) - mass

    lo, hi = 1e-12, 1.0
    while gap(hi) > 0:
        hi *= 4.0
        if hi > 1e12:
            break
    return float(optimize.brentq(gap, lo, hi))


def split_probability(depth, cfg: PriorConfig):
    """Probability that a node at the given depth is internal."""
    return cfg.alpha_tree / (1.0 + np.asarray(depth, dtype=float)) ** cfg.beta_tree


def log_tree_prior(tree: Tree, data: Dataset, cfg: PriorConfig) -> float:
    """Log prior of the (topology, rules) pair under the three-part prior."""
    log_d = math.log(data.d)
    total = 0.0
    for node_id, depth in tree.depths().items():
        p = float(split_probability(depth, cfg))
        nd = tree.nodes[node_id]
        if isinstance(nd, Internal):
            total += math.log(p) - log_d - math.log(data.grid_size(nd.rule.variable))
        else:
            total += math.log1p(-p)
    return total


def log_subtree_prior(tree: Tree, node: int, base_depth: int, data: Dataset, cfg: PriorConfig) -> float:
    """Prior contribution of the subtree rooted at ``node`` at ``base_depth``.

    Rotations rearrange depths only inside a subtree, so their prior ratio is
    the difference of two such sums.
    """
    log_d = math.log(data.d)
    total = 0.0
    stack = [(node, base_depth)]
    while stack:
        i, depth = stack.pop()
        p = float(split_probability(depth, cfg))
        nd = tree.node(i)
        if isinstance(nd, Internal):
            total += math.log(p) - log_d - math.log(data.grid_size(nd.rule.variable))
            stack.append((nd.left, depth + 1))
            stack.append((nd.right, depth + 1))
        else:
            total += math.log1p(-p)
    return total


def birth_log_prior_ratio(depth: int, variable: int, data: Dataset, cfg: PriorConfig) -> float:
    """log pi(T_birth) - log pi(T) for a birth at a leaf of the given depth."""
    p_here = float(split_probability(depth, cfg))
    p_child = float(split_probability(depth + 1, cfg))
    return (
        math.log(p_here)
        - math.log1p(-p_here)
        + 2.0 * math.log1p(-p_child)
        - math.log(data.d)
        - math.log(data.grid_size(variable))
    )


def log_mu_prior(mu, cfg: PriorConfig):
    """Normal(0, sigma_mu^2) log density of a terminal map value."""
    s2 = cfg.sigma_mu2
    return -0.5 * (LOG_2PI + math.log(s2)) - np.asarray(mu, dtype=float) ** 2 / (2.0 * s2)


def mu_posterior_params(m, s, sigma2: float, cfg: PriorConfig):
    """Mean and variance of mu | cell data, sigma^2 for a cell with count m, sum s."""
    m = np.asarray(m, dtype=float)
    var = 1.0 / (m / sigma2 + 1.0 / cfg.sigma_mu2)
    mean = var * np.asarray(s, dtype=float) / sigma2
    return mean, var


def log_mu_posterior(mu, m, s, sigma2: float, cfg: PriorConfig):
    """Log density of the conditional posterior of mu given its cell."""
    mean, var = mu_posterior_params(m, s, sigma2, cfg)
    mu = np.asarray(mu, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var)) - (mu - mean) ** 2 / (2.0 * var)


def sample_sigma2(ssr: float, n: int, cfg: PriorConfig, rng: np.random.Generator) -> float:
    """Conjugate draw sigma^2 ~ IG((nu+n)/2, (nu*lambda + ssr)/2)."""
    shape = 0.5 * (cfg.nu_sigma + n)
    scale = 0.5 * (cfg.nu_sigma * cfg.lambda_sigma + ssr)
    return float(scale / rng.gamma(shape))
