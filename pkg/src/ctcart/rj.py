"""Discrete-time reversible-jump baselines (birth/death, +rotate, +perturb).

One proposal per iteration, accepted by Metropolis-Hastings on the marginal
posterior: the point of contrast with the continuous-time sampler, which
enumerates every candidate each step.  The move kind is drawn uniformly from
the kinds that are both enabled by the variant and available at the current
state, with the usual boundary correction entering through the kind
probabilities at the proposed state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tree as tr
from .ct import ChainRecord, ChainState, MoveCandidate
from .data import Dataset
from .likelihood import NEG_INF
from .priors import PriorConfig


class RjProposal(NamedTuple):
    kind: str
    move: MoveCandidate | None
    delta_log_posterior: float
    forward_log_density: float
    reverse_log_density: float

    @property
    def log_accept(self) -> float:
        """log of the MH acceptance probability, capped at 0."""
        if self.delta_log_posterior == NEG_INF:
            return NEG_INF
        return min(
            0.0,
            self.delta_log_posterior + self.reverse_log_density - self.forward_log_density,
        )


@dataclass
class RjOptions:
    rotate: bool = False
    perturb: bool = False
    update_sigma2: bool = True


def _available_kinds(state: ChainState, options: RjOptions) -> list[str]:
    kinds = ["birth"]
    if tr.death_candidates(state.tree):
        kinds.append("death")
    if options.rotate and tr.rotate_candidates(state.tree):
        kinds.append("rotate")
    return kinds


def _kinds_after(tree: tr.Tree, options: RjOptions) -> int:
    n = 1  # birth is always on the menu
    if tr.death_candidates(tree):
        n += 1
    if options.rotate and tr.rotate_candidates(tree):
        n += 1
    return n


def propose(state: ChainState, options: RjOptions, rng: np.random.Generator) -> RjProposal:
    """Draw one proposal and compute its forward/reverse densities.

    A birth that lands on a (leaf, variable) pair with no usable cutpoint
    yields a proposal with ``move=None`` (a forced self-transition).
    """
    kinds = _available_kinds(state, options)
    kind = kinds[rng.integers(len(kinds))]
    log_kind_fwd = -math.log(len(kinds))

    if kind == "birth":
        leaves = sorted(state.members)
        leaf = leaves[rng.integers(len(leaves))]
        variable = int(rng.integers(state.data.d))
        cuts = state.usable_cuts(leaf, variable)
        if cuts.size == 0:
            return RjProposal("birth", None, 0.0, 0.0, 0.0)
        cut = int(cuts[rng.integers(cuts.size)])
        delta = state.birth_delta(leaf, variable, cut)
        move = MoveCandidate("birth", leaf, variable, cut)
        edited = tr.apply_birth(state.tree, leaf, tr.SplitRule(variable, cut))
        q_fwd = (
            log_kind_fwd
            - math.log(len(leaves))
            - math.log(state.data.d)
            - math.log(cuts.size)
        )
        q_rev = -math.log(_kinds_after(edited, options)) - math.log(
            len(tr.death_candidates(edited))
        )
        return RjProposal("birth", move, delta, q_fwd, q_rev)

    if kind == "death":
        nogs = tr.death_candidates(state.tree)
        node = nogs[rng.integers(len(nogs))]
        nd = state.tree.node(node)
        delta = state.death_delta(node)
        move = MoveCandidate("death", node, nd.rule.variable, nd.rule.cutpoint_index)
        edited = tr.apply_death(state.tree, node)
        q_fwd = log_kind_fwd - math.log(len(nogs))
        merged_idx = np.concatenate([state.members[nd.left], state.members[nd.right]])
        n_usable = state.usable_cuts_for(merged_idx, nd.rule.variable).size
        q_rev = (
            -math.log(_kinds_after(edited, options))
            - math.log(edited.n_terminal)
            - math.log(state.data.d)
            - math.log(n_usable)
        )
        return RjProposal("death", move, delta, q_fwd, q_rev)

    pairs = tr.rotate_candidates(state.tree)
    node, outcome = pairs[rng.integers(len(pairs))]
    delta, edited, _, _ = state.rotate_delta(node, outcome)
    move = MoveCandidate("rotate", node, outcome=outcome)
    q_fwd = log_kind_fwd - math.log(len(pairs))
    q_rev = -math.log(_kinds_after(edited, options)) - math.log(
        len(tr.rotate_candidates(edited))
    )
    return RjProposal("rotate", move, delta, q_fwd, q_rev)


def rj_step(
    state: ChainState, rng: np.random.Generator, options: RjOptions, iteration: int = 0
) -> ChainRecord:
    """One Metropolis-Hastings step; the record carries weight 1.

    Rejected proposals (and births with no usable cutpoint) leave the tree
    unchanged and the state repeats.
    """
    prop = propose(state, options, rng)
    if prop.move is None:
        outcome = "self"
        desc = "none"
    else:
        desc = prop.move.describe()
        if math.log(rng.random()) < prop.log_accept:
            state.apply(prop.move)
            outcome = "accepted"
        else:
            outcome = "rejected"
    if options.perturb:
        state.perturb_sweep(rng)
    if options.update_sigma2:
        state.gibbs_sigma2(rng)
    return ChainRecord(
        iteration=iteration,
        tree=tr.to_canonical(state.tree),
        sigma2=state.sigma2,
        waiting_time=1.0,
        move=f"{desc}|{outcome}",
    )


def run_rj_chain(
    data: Dataset,
    cfg: PriorConfig,
    iterations: int,
    rng: np.random.Generator,
    options: RjOptions | None = None,
    tree: tr.Tree | None = None,
    sigma2: float | None = None,
) -> list[ChainRecord]:
    options = options or RjOptions()
    state = ChainState(data, cfg, tree=tree, sigma2=sigma2)
    try:
        return [rj_step(state, rng, options, iteration=i) for i in range(iterations)]
    finally:
        state.close()
