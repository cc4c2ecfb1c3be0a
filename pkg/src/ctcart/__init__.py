"""Posterior sampling for Bayesian regression trees.

Continuous-time birth-death(-rotate) jump chains with Rao-Blackwellized
estimation, discrete-time reversible-jump baselines, and the estimators and
diagnostics needed to benchmark them against each other.
"""

from .ct import (
    ChainRecord,
    ChainState,
    CtOptions,
    MoveCandidate,
    MoveSet,
    StuckChainError,
    enumerate_moves,
    greedy_grow,
    run_ct_chain,
    select_jump,
)
from .data import Dataset, uniform_grid
from .estimation import (
    PosteriorSummary,
    count_unique_topologies,
    count_unique_trees,
    effective_sample_size,
    predict,
    rao_blackwell_mean,
    sample_mean,
    summarize_chain,
    variable_activity,
)
from .io import RunConfig, load_dataset, read_chain, write_chain, write_summary
from .likelihood import (
    log_full_likelihood,
    log_marginal_likelihood,
    suffstats,
    suffstats_for_move,
)
from .priors import PriorConfig, log_mu_prior, log_tree_prior, sample_sigma2
from .rj import RjOptions, RjProposal, rj_step, run_rj_chain
from .simdata import SimConfig, generate, generate_pair, true_mean
from .tree import (
    LEFT,
    RIGHT,
    SplitRule,
    Tree,
    apply_birth,
    apply_death,
    apply_rotate,
    death_candidates,
    from_canonical,
    partition,
    rotate_candidates,
    terminal_nodes,
    to_canonical,
)

__version__ = "0.1.0"
