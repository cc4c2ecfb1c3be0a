"""Continuous-time birth-death(-rotate) sampler over regression trees.

Every step enumerates all candidate moves from the current state, assigns
each one a Poisson rate min{1, posterior ratio}, records the expected holding
time 1/(sum of rates), and jumps; moves are always accepted.  Two rate forms
are provided: the marginalized form (terminal maps integrated out, the one
used by the CT-A/B/C variants) and the full form with explicit terminal-map
proposals drawn from their conditional posteriors.

Birth candidates are evaluated in bulk: each leaf caches, per variable, the
left-cell sufficient statistics at every usable cutpoint, so a step costs a
few vectorized passes over the candidate arrays regardless of tree shape.
Candidate order (leaves ascending, then variables, then cutpoints; deaths by
node id; rotations by (node, outcome)) is part of the determinism contract:
work may be chunked across threads but results merge in candidate order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tree as tr
from .data import Dataset
from .likelihood import NEG_INF, SuffStats, cell_log_full, cell_log_marginal, cell_stats
from .priors import (
    LOG_2PI,
    PriorConfig,
    birth_log_prior_ratio,
    log_mu_posterior,
    log_mu_prior,
    log_subtree_prior,
    log_tree_prior,
    mu_posterior_params,
    sample_sigma2,
    split_probability,
)

MIN_CHUNK = 64


class StuckChainError(RuntimeError):
    """All candidate rates are zero: the process has no move to make."""


class MoveCandidate(NamedTuple):
    kind: str  # "birth" | "death" | "rotate"
    node: int
    variable: int | None = None
    cutpoint_index: int | None = None
    outcome: int | None = None
    rate: float = 0.0
    mus: tuple | None = None  # proposed terminal maps (full mode only)

    @property
    def log_rate(self) -> float:
        return math.log(self.rate) if self.rate > 0 else NEG_INF

    def describe(self) -> str:
        if self.kind == "birth":
            return f"birth(node={self.node},var={self.variable},cut={self.cutpoint_index})"
        if self.kind == "death":
            return f"death(node={self.node})"
        return f"rotate(node={self.node},outcome={tr.ROTATION_NAMES[self.outcome]})"


@dataclass
class ChainRecord:
    iteration: int
    tree: str  # canonical serialization
    sigma2: float
    waiting_time: float
    move: str


class MoveSet:
    """All candidates from one state with their rates, in canonical order.

    Behaves as a sequence of :class:`MoveCandidate`; selection and totals use
    the underlying rate arrays directly.
    """

    def __init__(
        self,
        birth_leaf=None,
        birth_var=None,
        birth_cut=None,
        birth_rates=None,
        birth_mus=None,
        death_nodes=(),
        death_rates=(),
        death_mus=None,
        rotate_pairs=(),
        rotate_rates=(),
    ):
        z = np.empty(0)
        self.birth_leaf = z.astype(int) if birth_leaf is None else birth_leaf
        self.birth_var = z.astype(int) if birth_var is None else birth_var
        self.birth_cut = z.astype(int) if birth_cut is None else birth_cut
        self.birth_rates = z if birth_rates is None else birth_rates
        self.birth_mus = birth_mus  # optional (2, n_birth) array
        self.death_nodes = list(death_nodes)
        self.death_rates = np.asarray(death_rates, dtype=float)
        self.death_mus = death_mus  # optional length n_death array
        self.rotate_pairs = list(rotate_pairs)
        self.rotate_rates = np.asarray(rotate_rates, dtype=float)
        self.total_birth = float(self.birth_rates.sum())
        self.total_death = float(self.death_rates.sum())
        self.total_rotate = float(self.rotate_rates.sum())
        self._cum = None

    @property
    def total_rate(self) -> float:
        return self.total_birth + self.total_death + self.total_rotate

    @property
    def waiting_time(self) -> float:
        total = self.total_rate
        if total <= 0:
            raise StuckChainError("zero total rate")
        return 1.0 / total

    def __len__(self) -> int:
        return len(self.birth_rates) + len(self.death_rates) + len(self.rotate_rates)

    def __getitem__(self, i: int) -> MoveCandidate:
        nb = len(self.birth_rates)
        nd = len(self.death_rates)
        if i < 0:
            i += len(self)
        if 0 <= i < nb:
            mus = None if self.birth_mus is None else tuple(self.birth_mus[:, i])
            return MoveCandidate(
                "birth",
                int(self.birth_leaf[i]),
                int(self.birth_var[i]),
                int(self.birth_cut[i]),
                rate=float(self.birth_rates[i]),
                mus=mus,
            )
        if nb <= i < nb + nd:
            j = i - nb
            mus = None if self.death_mus is None else (float(self.death_mus[j]),)
            return MoveCandidate(
                "death", self.death_nodes[j], rate=float(self.death_rates[j]), mus=mus
            )
        if nb + nd <= i < len(self):
            j = i - nb - nd
            node, outcome = self.rotate_pairs[j]
            return MoveCandidate(
                "rotate", node, outcome=outcome, rate=float(self.rotate_rates[j])
            )
        raise IndexError(i)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def locate(self, target: float) -> int:
        """Index of the candidate whose cumulative-rate interval holds target."""
        if self._cum is None:
            self._cum = np.cumsum(
                np.concatenate([self.birth_rates, self.death_rates, self.rotate_rates])
            )
        i = int(np.searchsorted(self._cum, target, side="right"))
        return min(i, len(self) - 1)


def select_jump(candidates, rng: np.random.Generator) -> tuple[MoveCandidate, float]:
    """Draw a move with probability rate/total; return it with the holding time.

    The holding time is the deterministic expectation 1/(total rate).  Raises
    :class:`StuckChainError` when every rate is zero.
    """
    if isinstance(candidates, MoveSet):
        total = candidates.total_rate
        if total <= 0:
            raise StuckChainError("all candidate rates are zero")
        chosen = candidates[candidates.locate(rng.random() * total)]
        return chosen, 1.0 / total
    rates = np.array([c.rate for c in candidates], dtype=float)
    total = float(rates.sum())
    if total <= 0:
        raise StuckChainError("all candidate rates are zero")
    cum = np.cumsum(rates)
    i = min(int(np.searchsorted(cum, rng.random() * total, side="right")), len(rates) - 1)
    return candidates[i], 1.0 / total


# -- per-leaf candidate blocks ------------------------------------------------


class _LeafBlock(NamedTuple):
    """Usable birth candidates of one leaf, concatenated across variables."""

    variables: np.ndarray
    cuts: np.ndarray
    left_m: np.ndarray
    left_s: np.ndarray
    left_q: np.ndarray
    grid_logsize: np.ndarray  # log grid size per candidate


def _lml_scalar(m: float, s: float, q: float, sigma2: float, smu2: float) -> float:
    if m == 0:
        return 0.0
    v = sigma2 + m * smu2
    return (
        -0.5 * m * (LOG_2PI + math.log(sigma2))
        + 0.5 * (math.log(sigma2) - math.log(v))
        - q / (2.0 * sigma2)
        + smu2 * s * s / (2.0 * sigma2 * v)
    )


class ChainState:
    """Current tree plus incremental caches for fast rate evaluation.

    Holds per-leaf observation memberships, sufficient statistics and birth
    candidate blocks; all of them are updated in place when a move is
    applied.  ``mus`` is populated only by the full (non-marginalized)
    sampler.
    """

    def __init__(
        self,
        data: Dataset,
        cfg: PriorConfig,
        tree: tr.Tree | None = None,
        sigma2: float | None = None,
        threads: int = 1,
    ):
        self.data = data
        self.cfg = cfg
        self.tree = tree if tree is not None else tr.Tree.single_leaf()
        self.sigma2 = float(sigma2) if sigma2 is not None else float(np.var(data.response))
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self.members: dict[int, np.ndarray] = {}
        self.stats: SuffStats = {}
        self.blocks: dict[int, _LeafBlock] = {}
        self.mus: dict[int, float] = {}
        cells = tr.route(self.tree, data.features, data.cutpoint_grids)
        for leaf, idx in cells.items():
            self._set_leaf(leaf, idx)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=False)
            self._pool = None

    # -- cache maintenance ------------------------------------------------

    def _set_leaf(self, leaf: int, idx: np.ndarray) -> None:
        self.members[leaf] = idx
        self.stats[leaf] = cell_stats(self.data.response, idx)
        self.blocks[leaf] = self._build_block(idx)

    def _drop_leaf(self, leaf: int) -> None:
        del self.members[leaf]
        del self.stats[leaf]
        del self.blocks[leaf]
        self.mus.pop(leaf, None)

    def _build_block(self, idx: np.ndarray) -> _LeafBlock:
        data = self.data
        mns = data.min_node_size
        m = idx.size
        vs, ks, lm, ls, lq, gl = [], [], [], [], [], []
        if m >= 2 * mns:
            y = data.response[idx]
            for v in range(data.d):
                xs = data.features[idx, v]
                order = np.argsort(xs, kind="stable")
                xs_sorted = xs[order]
                ys = y[order]
                grid = data.cutpoint_grids[v]
                counts = np.searchsorted(xs_sorted, grid, side="right")
                usable = (counts >= mns) & (m - counts >= mns)
                if not usable.any():
                    continue
                ku = np.nonzero(usable)[0]
                lc = counts[ku]
                cum_s = np.cumsum(ys)
                cum_q = np.cumsum(ys * ys)
                vs.append(np.full(ku.size, v))
                ks.append(ku)
                lm.append(lc)
                ls.append(cum_s[lc - 1])
                lq.append(cum_q[lc - 1])
                gl.append(np.full(ku.size, math.log(grid.size)))
        if not vs:
            e = np.empty(0)
            return _LeafBlock(e.astype(int), e.astype(int), e.astype(int), e, e, e)
        return _LeafBlock(
            np.concatenate(vs),
            np.concatenate(ks),
            np.concatenate(lm),
            np.concatenate(ls),
            np.concatenate(lq),
            np.concatenate(gl),
        )

    def usable_cuts(self, leaf: int, variable: int) -> np.ndarray:
        """Cutpoint indices that split the leaf's cell into sides >= min size."""
        blk = self.blocks[leaf]
        return blk.cuts[blk.variables == variable]

    def usable_cuts_for(self, idx: np.ndarray, variable: int) -> np.ndarray:
        """Usable cutpoint indices for an arbitrary cell of observations."""
        xs = np.sort(self.data.features[idx, variable], kind="stable")
        counts = np.searchsorted(xs, self.data.cutpoint_grids[variable], side="right")
        mns = self.data.min_node_size
        return np.nonzero((counts >= mns) & (idx.size - counts >= mns))[0]

    def birth_delta(self, leaf: int, variable: int, cut: int) -> float:
        """Marginal log posterior change of one birth (scalar path)."""
        idx = self.members[leaf]
        cut_value = self.data.cutpoint_grids[variable][cut]
        mask = self.data.features[idx, variable] <= cut_value
        ml, sl, ql = cell_stats(self.data.response, idx[mask])
        m, s, q = self.stats[leaf]
        if ml < self.data.min_node_size or m - ml < self.data.min_node_size:
            return NEG_INF
        sigma2, smu2 = self.sigma2, self.cfg.sigma_mu2
        return (
            _lml_scalar(ml, sl, ql, sigma2, smu2)
            + _lml_scalar(m - ml, s - sl, q - ql, sigma2, smu2)
            - _lml_scalar(m, s, q, sigma2, smu2)
            + birth_log_prior_ratio(self.tree.depths()[leaf], variable, self.data, self.cfg)
        )

    def death_delta(self, node: int) -> float:
        """Marginal log posterior change of one death (scalar path)."""
        nd = self.tree.node(node)
        ml, sl, ql = self.stats[nd.left]
        mr, sr, qr = self.stats[nd.right]
        sigma2, smu2 = self.sigma2, self.cfg.sigma_mu2
        return (
            _lml_scalar(ml + mr, sl + sr, ql + qr, sigma2, smu2)
            - _lml_scalar(ml, sl, ql, sigma2, smu2)
            - _lml_scalar(mr, sr, qr, sigma2, smu2)
            - birth_log_prior_ratio(
                self.tree.depths()[node], nd.rule.variable, self.data, self.cfg
            )
        )

    def node_members(self, node: int) -> np.ndarray:
        """Observation indices reaching ``node`` (concatenated leaf cells)."""
        leaves = self.tree.subtree_leaf_ids(node)
        if len(leaves) == 1:
            return self.members[leaves[0]]
        return np.concatenate([self.members[leaf] for leaf in leaves])

    # -- posterior pieces --------------------------------------------------

    def log_posterior(self) -> float:
        """Unnormalized marginal log posterior of the current state."""
        total = log_tree_prior(self.tree, self.data, self.cfg)
        smu2 = self.cfg.sigma_mu2
        for m, s, q in self.stats.values():
            if m < self.data.min_node_size:
                return NEG_INF
            total += _lml_scalar(m, s, q, self.sigma2, smu2)
        return total

    def _depth_parts(self, depths: dict[int, int]) -> dict[int, float]:
        """Depth-dependent piece of the birth prior ratio, per leaf."""
        cfg = self.cfg
        log_d = math.log(self.data.d)
        out = {}
        for leaf in self.members:
            dd = depths[leaf]
            p_here = float(split_probability(dd, cfg))
            p_child = float(split_probability(dd + 1, cfg))
            out[leaf] = (
                math.log(p_here)
                - math.log1p(-p_here)
                + 2.0 * math.log1p(-p_child)
                - log_d
            )
        return out

    # -- marginalized rate evaluation --------------------------------------

    def bd_moveset(self) -> MoveSet:
        """Birth and death candidates with marginalized rates."""
        sigma2 = self.sigma2
        smu2 = self.cfg.sigma_mu2
        depths = self.tree.depths()
        depth_part = self._depth_parts(depths)
        leaves = sorted(self.members)

        blocks = [self.blocks[leaf] for leaf in leaves]
        counts = [blk.cuts.size for blk in blocks]
        nb = int(sum(counts))
        if nb:
            leaf_rep = np.repeat(leaves, counts)
            lml_leaf = np.repeat(
                [_lml_scalar(*self.stats[leaf], sigma2, smu2) for leaf in leaves], counts
            )
            prior_part = np.repeat([depth_part[leaf] for leaf in leaves], counts)
            m_tot = np.repeat([self.stats[leaf][0] for leaf in leaves], counts)
            s_tot = np.repeat([self.stats[leaf][1] for leaf in leaves], counts)
            q_tot = np.repeat([self.stats[leaf][2] for leaf in leaves], counts)
            b_var = np.concatenate([blk.variables for blk in blocks])
            b_cut = np.concatenate([blk.cuts for blk in blocks])
            lm = np.concatenate([blk.left_m for blk in blocks])
            ls = np.concatenate([blk.left_s for blk in blocks])
            lq = np.concatenate([blk.left_q for blk in blocks])
            glog = np.concatenate([blk.grid_logsize for blk in blocks])

            def eval_rates(lm, ls, lq, m_tot, s_tot, q_tot, lml_leaf, prior_part, glog):
                delta = (
                    cell_log_marginal(lm, ls, lq, sigma2, smu2)
                    + cell_log_marginal(m_tot - lm, s_tot - ls, q_tot - lq, sigma2, smu2)
                    - lml_leaf
                    + prior_part
                    - glog
                )
                return np.exp(np.minimum(0.0, delta))

            args = (lm, ls, lq, m_tot, s_tot, q_tot, lml_leaf, prior_part, glog)
            b_rates = self._chunked(eval_rates, args, nb)
        else:
            leaf_rep = b_var = b_cut = np.empty(0, dtype=int)
            b_rates = np.empty(0)

        death_nodes = tr.death_candidates(self.tree)
        death_rates = np.empty(len(death_nodes))
        for j, node in enumerate(death_nodes):
            nd = self.tree.nodes[node]
            ml, sl, ql = self.stats[nd.left]
            mr, sr, qr = self.stats[nd.right]
            delta = (
                _lml_scalar(ml + mr, sl + sr, ql + qr, sigma2, smu2)
                - _lml_scalar(ml, sl, ql, sigma2, smu2)
                - _lml_scalar(mr, sr, qr, sigma2, smu2)
                - birth_log_prior_ratio(depths[node], nd.rule.variable, self.data, self.cfg)
            )
            death_rates[j] = math.exp(min(0.0, delta))

        return MoveSet(
            birth_leaf=leaf_rep,
            birth_var=b_var,
            birth_cut=b_cut,
            birth_rates=b_rates,
            death_nodes=death_nodes,
            death_rates=death_rates,
        )

    def _chunked(self, fn, arrays: tuple, n: int) -> np.ndarray:
        """Apply an elementwise pipeline, optionally split across threads.

        Work units hold at least MIN_CHUNK candidates and results are merged
        in candidate order, so the output is identical for any thread count.
        """
        if self._pool is None or n < 2 * MIN_CHUNK:
            return fn(*arrays)
        chunk = max(MIN_CHUNK, -(-n // self.threads))
        bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]
        parts = self._pool.map(
            lambda se: fn(*(a[se[0] : se[1]] for a in arrays)), bounds
        )
        return np.concatenate(list(parts))

    def rotate_delta(self, node: int, outcome: int):
        """Log posterior change of one rotation, with the rebuilt subtree cells.

        Returns (delta, edited tree, promoted subtree root, {leaf: idx}).
        Rotations that leave any subtree cell under the minimum size get
        delta = -inf (rate zero).
        """
        data = self.data
        edited = tr.apply_rotate(self.tree, node, outcome)
        nd = self.tree.node(node)
        promoted = nd.left if outcome == tr.RIGHT else nd.right
        old_leaves = self.tree.subtree_leaf_ids(node)
        sub_idx = self.node_members(node)
        new_cells = tr.route(edited, data.features, data.cutpoint_grids, idx=sub_idx, start=promoted)
        smu2 = self.cfg.sigma_mu2
        new_ml = 0.0
        for idx in new_cells.values():
            if idx.size < data.min_node_size:
                return NEG_INF, edited, promoted, new_cells
            new_ml += _lml_scalar(*cell_stats(data.response, idx), self.sigma2, smu2)
        old_ml = sum(_lml_scalar(*self.stats[leaf], self.sigma2, smu2) for leaf in old_leaves)
        depth = self.tree.depths()[node]
        d_prior = log_subtree_prior(edited, promoted, depth, data, self.cfg) - log_subtree_prior(
            self.tree, node, depth, data, self.cfg
        )
        return new_ml - old_ml + d_prior, edited, promoted, new_cells

    def rotate_moveset(self) -> MoveSet:
        pairs = tr.rotate_candidates(self.tree)
        rates = np.empty(len(pairs))
        for j, (node, outcome) in enumerate(pairs):
            delta = self.rotate_delta(node, outcome)[0]
            rates[j] = math.exp(min(0.0, delta)) if delta > NEG_INF else 0.0
        return MoveSet(rotate_pairs=pairs, rotate_rates=rates)

    def moveset(self, mode: str = "bd") -> MoveSet:
        """Candidates for one step; mode is "bd", "rotate" or "bd+rotate"."""
        if mode == "bd":
            return self.bd_moveset()
        if mode == "rotate":
            return self.rotate_moveset()
        if mode == "bd+rotate":
            bd = self.bd_moveset()
            rot = self.rotate_moveset()
            return MoveSet(
                birth_leaf=bd.birth_leaf,
                birth_var=bd.birth_var,
                birth_cut=bd.birth_cut,
                birth_rates=bd.birth_rates,
                death_nodes=bd.death_nodes,
                death_rates=bd.death_rates,
                rotate_pairs=rot.rotate_pairs,
                rotate_rates=rot.rotate_rates,
            )
        raise ValueError(f"unknown move mode {mode!r}")

    # -- full-mode (explicit terminal maps) rate evaluation -----------------

    def full_moveset(self, rng: np.random.Generator) -> MoveSet:
        """Birth/death candidates with explicit terminal-map proposals.

        New maps are drawn from their conditional posteriors; rates follow
        the joint-posterior ratio including the proposal densities, all
        shared cells cancelling.
        """
        sigma2 = self.sigma2
        cfg = self.cfg
        depths = self.tree.depths()
        depth_part = self._depth_parts(depths)
        leaves = sorted(self.members)

        b_leaf, b_var, b_cut, b_rates, b_mus = [], [], [], [], []
        for leaf in leaves:
            blk = self.blocks[leaf]
            n = blk.cuts.size
            if n == 0:
                continue
            m, s, q = self.stats[leaf]
            mu_old = self.mus[leaf]
            rm = m - blk.left_m
            rs = s - blk.left_s
            rq = q - blk.left_q
            mean_l, var_l = mu_posterior_params(blk.left_m, blk.left_s, sigma2, cfg)
            mean_r, var_r = mu_posterior_params(rm, rs, sigma2, cfg)
            z = rng.standard_normal((2, n))
            mu_l = mean_l + np.sqrt(var_l) * z[0]
            mu_r = mean_r + np.sqrt(var_r) * z[1]
            delta = (
                cell_log_full(blk.left_m, blk.left_s, blk.left_q, mu_l, sigma2)
                + cell_log_full(rm, rs, rq, mu_r, sigma2)
                + log_mu_prior(mu_l, cfg)
                + log_mu_prior(mu_r, cfg)
                - cell_log_full(m, s, q, mu_old, sigma2)
                - log_mu_prior(mu_old, cfg)
                + depth_part[leaf]
                - blk.grid_logsize
                + log_mu_posterior(mu_old, m, s, sigma2, cfg)
                - log_mu_posterior(mu_l, blk.left_m, blk.left_s, sigma2, cfg)
                - log_mu_posterior(mu_r, rm, rs, sigma2, cfg)
            )
            b_leaf.append(np.full(n, leaf))
            b_var.append(blk.variables)
            b_cut.append(blk.cuts)
            b_rates.append(np.exp(np.minimum(0.0, delta)))
            b_mus.append(np.stack([mu_l, mu_r]))

        death_nodes = tr.death_candidates(self.tree)
        death_rates = np.empty(len(death_nodes))
        death_mus = np.empty(len(death_nodes))
        for j, node in enumerate(death_nodes):
            nd = self.tree.nodes[node]
            ml, sl, ql = self.stats[nd.left]
            mr, sr, qr = self.stats[nd.right]
            mm, sm, qm = ml + mr, sl + sr, ql + qr
            mean_m, var_m = mu_posterior_params(mm, sm, sigma2, cfg)
            mu_new = float(mean_m + math.sqrt(float(var_m)) * rng.standard_normal())
            mu_l, mu_r = self.mus[nd.left], self.mus[nd.right]
            delta = (
                float(cell_log_full(mm, sm, qm, mu_new, sigma2))
                + float(log_mu_prior(mu_new, cfg))
                - float(cell_log_full(ml, sl, ql, mu_l, sigma2))
                - float(cell_log_full(mr, sr, qr, mu_r, sigma2))
                - float(log_mu_prior(mu_l, cfg))
                - float(log_mu_prior(mu_r, cfg))
                - birth_log_prior_ratio(depths[node], nd.rule.variable, self.data, cfg)
                + float(log_mu_posterior(mu_l, ml, sl, sigma2, cfg))
                + float(log_mu_posterior(mu_r, mr, sr, sigma2, cfg))
                - float(log_mu_posterior(mu_new, mm, sm, sigma2, cfg))
            )
            death_rates[j] = math.exp(min(0.0, delta))
            death_mus[j] = mu_new

        if b_leaf:
            return MoveSet(
                birth_leaf=np.concatenate(b_leaf),
                birth_var=np.concatenate(b_var),
                birth_cut=np.concatenate(b_cut),
                birth_rates=np.concatenate(b_rates),
                birth_mus=np.concatenate(b_mus, axis=1),
                death_nodes=death_nodes,
                death_rates=death_rates,
                death_mus=death_mus,
            )
        return MoveSet(death_nodes=death_nodes, death_rates=death_rates, death_mus=death_mus)

    # -- applying moves ------------------------------------------------------

    def apply(self, move: MoveCandidate) -> None:
        if move.kind == "birth":
            idx = self.members[move.node]
            cut_value = self.data.cutpoint_grids[move.variable][move.cutpoint_index]
            go_left = self.data.features[idx, move.variable] <= cut_value
            rule = tr.SplitRule(move.variable, move.cutpoint_index)
            self.tree = tr.apply_birth(self.tree, move.node, rule, mus=move.mus)
            nd = self.tree.node(move.node)
            self._drop_leaf(move.node)
            self._set_leaf(nd.left, idx[go_left])
            self._set_leaf(nd.right, idx[~go_left])
            if move.mus is not None:
                self.mus[nd.left], self.mus[nd.right] = move.mus
        elif move.kind == "death":
            nd = self.tree.node(move.node)
            idx = np.concatenate([self.members[nd.left], self.members[nd.right]])
            mu = move.mus[0] if move.mus is not None else None
            self.tree = tr.apply_death(self.tree, move.node, mu=mu)
            self._drop_leaf(nd.left)
            self._drop_leaf(nd.right)
            self._set_leaf(move.node, idx)
            if mu is not None:
                self.mus[move.node] = mu
        elif move.kind == "rotate":
            _, edited, promoted, new_cells = self.rotate_delta(move.node, move.outcome)
            old_leaves = self.tree.subtree_leaf_ids(move.node)
            self.tree = edited
            for leaf in old_leaves:
                self._drop_leaf(leaf)
            for leaf, idx in new_cells.items():
                self._set_leaf(leaf, idx)
        else:
            raise ValueError(f"unknown move kind {move.kind!r}")

    # -- Gibbs updates and perturbation --------------------------------------

    def draw_leaf_mus(self, rng: np.random.Generator) -> np.ndarray:
        """Draw every leaf map from its conditional posterior (leaf-id order)."""
        leaves = sorted(self.members)
        m = np.array([self.stats[leaf][0] for leaf in leaves], dtype=float)
        s = np.array([self.stats[leaf][1] for leaf in leaves], dtype=float)
        mean, var = mu_posterior_params(m, s, self.sigma2, self.cfg)
        draws = mean + np.sqrt(var) * rng.standard_normal(len(leaves))
        for leaf, mu in zip(leaves, draws):
            self.mus[leaf] = float(mu)
        return draws

    def gibbs_sigma2(self, rng: np.random.Generator, reuse_mus: bool = False) -> None:
        """Refresh sigma^2 given a pass of terminal-map draws.

        In marginalized mode the maps are drawn, used for the residual sum of
        squares, and discarded; the full sampler refreshes its stored maps
        first and sets ``reuse_mus``.
        """
        leaves = sorted(self.members)
        if reuse_mus:
            draws = np.array([self.mus[leaf] for leaf in leaves])
        else:
            draws = self.draw_leaf_mus(rng)
        ssr = 0.0
        for leaf, mu in zip(leaves, draws):
            m, s, q = self.stats[leaf]
            ssr += q - 2.0 * mu * s + m * mu * mu
        self.sigma2 = sample_sigma2(ssr, self.data.n, self.cfg, rng)
        if not reuse_mus:
            self.mus.clear()

    def perturb_sweep(self, rng: np.random.Generator) -> int:
        """One cutpoint-perturbation pass over internal nodes (MH, marginal).

        Each internal node proposes a new cutpoint uniformly from the set
        that splits its cell into sides >= min size; the prior is flat over
        cutpoints so the acceptance ratio is purely the likelihood change.
        Returns the number of accepted perturbations.
        """
        data = self.data
        smu2 = self.cfg.sigma_mu2
        accepted = 0
        for node in sorted(self.tree.internal_ids()):
            nd = self.tree.node(node)
            v = nd.rule.variable
            idx = self.node_members(node)
            xs = np.sort(data.features[idx, v], kind="stable")
            counts = np.searchsorted(xs, data.cutpoint_grids[v], side="right")
            mns = data.min_node_size
            usable = np.nonzero((counts >= mns) & (idx.size - counts >= mns))[0]
            if usable.size == 0:
                continue
            new_cut = int(usable[rng.integers(usable.size)])
            if new_cut == nd.rule.cutpoint_index:
                continue
            edited = tr.replace_rule(self.tree, node, tr.SplitRule(v, new_cut))
            new_cells = tr.route(edited, data.features, data.cutpoint_grids, idx=idx, start=node)
            delta = 0.0
            for cell_idx in new_cells.values():
                if cell_idx.size < mns:
                    delta = NEG_INF
                    break
                delta += _lml_scalar(*cell_stats(data.response, cell_idx), self.sigma2, smu2)
            if delta > NEG_INF:
                old_leaves = self.tree.subtree_leaf_ids(node)
                delta -= sum(
                    _lml_scalar(*self.stats[leaf], self.sigma2, smu2) for leaf in old_leaves
                )
            if delta >= 0.0 or math.log(rng.random()) < delta:
                old_leaves = self.tree.subtree_leaf_ids(node)
                self.tree = edited
                keep_mus = {leaf: self.mus.get(leaf) for leaf in old_leaves}
                for leaf in old_leaves:
                    self._drop_leaf(leaf)
                for leaf, cell_idx in new_cells.items():
                    self._set_leaf(leaf, cell_idx)
                    if keep_mus.get(leaf) is not None:
                        self.mus[leaf] = keep_mus[leaf]
                accepted += 1
        return accepted


# -- single steps and the chain loop -----------------------------------------


@dataclass
class CtOptions:
    """Switches for the continuous-time chain loop.

    With rotations enabled, ``rotate_scheme`` picks how birth/death and
    rotate moves interleave.  "exact" enumerates all three move families
    jointly each step, so the holding time is 1/(total birth + death +
    rotate rate) and the family choice is implicitly proportional to the
    family totals; the chain then targets the posterior exactly.  "mixture"
    flips a coin with fixed probability ``alpha_mix`` for a birth/death
    step versus a rotate-only step and records the holding time of the
    enumerated family alone; it is cheaper but its weighted occupancy is
    biased wherever the two families' total rates are very unbalanced, so
    it is provided for comparability, not as the default.  ``alpha_mix`` at
    0 or 1 forces one family in either scheme.  ``sample_holding_times``
    replaces the expected holding time by an exponential draw (diagnostics
    only).
    """

    rotate: bool = False
    perturb: bool = False
    alpha_mix: float = 0.5
    rotate_scheme: str = "exact"
    update_sigma2: bool = True
    sample_holding_times: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ValueError("alpha_mix must lie in [0, 1]")
        if self.rotate_scheme not in ("exact", "mixture"):
            raise ValueError("rotate_scheme must be 'exact' or 'mixture'")


def _step_mode(options: CtOptions, rng: np.random.Generator) -> str:
    if not options.rotate:
        return "bd"
    if options.alpha_mix >= 1.0:
        return "bd"
    if options.alpha_mix <= 0.0:
        return "rotate"
    if options.rotate_scheme == "exact":
        return "bd+rotate"
    return "bd" if rng.random() < options.alpha_mix else "rotate"


def ct_step_marginal(
    state: ChainState, rng: np.random.Generator, options: CtOptions, iteration: int = 0
) -> ChainRecord:
    """One jump of the marginalized sampler: enumerate, wait, select, apply.

    Records the pre-jump state with its holding time and the move taken out
    of it.  When the mixture picks a family with no positive-rate candidate,
    the step falls back to the other family.
    """
    mode = _step_mode(options, rng)
    moves = state.moveset(mode)
    if moves.total_rate <= 0 and mode in ("bd", "rotate") and options.rotate:
        moves = state.moveset("rotate" if mode == "bd" else "bd")
    move, wait = select_jump(moves, rng)
    if options.sample_holding_times:
        wait = float(rng.exponential(wait))
    record = ChainRecord(
        iteration=iteration,
        tree=tr.to_canonical(state.tree),
        sigma2=state.sigma2,
        waiting_time=wait,
        move=move.describe(),
    )
    state.apply(move)
    if options.perturb:
        state.perturb_sweep(rng)
    if options.update_sigma2:
        state.gibbs_sigma2(rng)
    return record


def ct_step_full(
    state: ChainState, rng: np.random.Generator, options: CtOptions, iteration: int = 0
) -> ChainRecord:
    """One jump of the full sampler: terminal maps are proposed per candidate,
    rates include the proposal densities, and maps are Gibbs-refreshed after
    the jump."""
    if not state.mus:
        state.draw_leaf_mus(rng)
    moves = state.full_moveset(rng)
    move, wait = select_jump(moves, rng)
    if options.sample_holding_times:
        wait = float(rng.exponential(wait))
    record = ChainRecord(
        iteration=iteration,
        tree=tr.to_canonical(state.tree),
        sigma2=state.sigma2,
        waiting_time=wait,
        move=move.describe(),
    )
    state.apply(move)
    state.draw_leaf_mus(rng)
    if options.update_sigma2:
        state.gibbs_sigma2(rng, reuse_mus=True)
    return record


def run_ct_chain(
    data: Dataset,
    cfg: PriorConfig,
    iterations: int,
    rng: np.random.Generator,
    options: CtOptions | None = None,
    tree: tr.Tree | None = None,
    sigma2: float | None = None,
    full_mode: bool = False,
) -> list[ChainRecord]:
    """Simulate the jump chain for ``iterations`` steps from a fresh state."""
    options = options or CtOptions()
    state = ChainState(data, cfg, tree=tree, sigma2=sigma2, threads=options.threads)
    step = ct_step_full if full_mode else ct_step_marginal
    try:
        return [step(state, rng, options, iteration=i) for i in range(iterations)]
    finally:
        state.close()


def greedy_grow(
    data: Dataset,
    cfg: PriorConfig,
    passes: int = 2,
    rng: np.random.Generator | None = None,
) -> tuple[tr.Tree, float]:
    """Chain initialization: grow by the best available birth.

    Because every individual rate is capped at one, rate-proportional
    selection cannot distinguish a barely-acceptable first split from the
    best one, so a chain grown from the single-leaf state frequently locks
    in a misplaced early cutpoint it can never collapse.  Starting instead
    from the greedy optimum (repeatedly take the birth with the largest
    marginal log posterior gain until none is positive, re-estimating the
    noise variance between passes) puts the chain at a mode of the
    posterior.  Confounded variables and empty-gap cutpoints produce exact
    ties; with an ``rng`` the tied candidates are chosen uniformly, which
    keeps such choices balanced across replications.  Returns the grown
    tree and the matching noise variance.
    """
    sigma2 = float(np.var(data.response))
    tree = tr.Tree.single_leaf()
    for _ in range(passes):
        state = ChainState(data, cfg, sigma2=sigma2)
        smu2 = cfg.sigma_mu2
        while True:
            depths = state.tree.depths()
            depth_part = state._depth_parts(depths)
            per_leaf = []
            best_delta = 0.0
            for leaf in sorted(state.members):
                blk = state.blocks[leaf]
                if blk.cuts.size == 0:
                    continue
                m, s, q = state.stats[leaf]
                lml_leaf = _lml_scalar(m, s, q, state.sigma2, smu2)
                delta = (
                    cell_log_marginal(blk.left_m, blk.left_s, blk.left_q, state.sigma2, smu2)
                    + cell_log_marginal(
                        m - blk.left_m, s - blk.left_s, q - blk.left_q, state.sigma2, smu2
                    )
                    - lml_leaf
                    + depth_part[leaf]
                    - blk.grid_logsize
                )
                per_leaf.append((leaf, blk, delta))
                best_delta = max(best_delta, float(delta.max()))
            if best_delta <= 0.0:
                break
            tied = []
            tol = 1e-9 * max(1.0, abs(best_delta))
            for leaf, blk, delta in per_leaf:
                for j in np.nonzero(delta >= best_delta - tol)[0]:
                    tied.append(
                        MoveCandidate("birth", leaf, int(blk.variables[j]), int(blk.cuts[j]))
                    )
            pick = 0 if rng is None else int(rng.integers(len(tied)))
            state.apply(tied[pick])
        ssr = sum(q - s * s / m for m, s, q in state.stats.values() if m > 0)
        sigma2 = (cfg.nu_sigma * cfg.lambda_sigma + ssr) / (cfg.nu_sigma + data.n)
        tree = state.tree
        state.close()
    return tree, sigma2


# -- direct (recompute-everything) rate forms, used as oracles in tests ------


def log_posterior_marginal(tree: tr.Tree, data: Dataset, sigma2: float, cfg: PriorConfig) -> float:
    from .likelihood import log_marginal_likelihood

    ml = log_marginal_likelihood(tree, data, sigma2, cfg)
    if ml == NEG_INF:
        return NEG_INF
    return ml + log_tree_prior(tree, data, cfg)


def _min_rate(delta: float) -> float:
    return math.exp(min(0.0, delta)) if delta > NEG_INF else 0.0


def birth_rate_marginal(
    tree: tr.Tree, data: Dataset, sigma2: float, cfg: PriorConfig, leaf: int, rule: tr.SplitRule
) -> float:
    edited = tr.apply_birth(tree, leaf, rule)
    delta = log_posterior_marginal(edited, data, sigma2, cfg) - log_posterior_marginal(
        tree, data, sigma2, cfg
    )
    return _min_rate(delta)


def death_rate_marginal(
    tree: tr.Tree, data: Dataset, sigma2: float, cfg: PriorConfig, node: int
) -> float:
    edited = tr.apply_death(tree, node)
    delta = log_posterior_marginal(edited, data, sigma2, cfg) - log_posterior_marginal(
        tree, data, sigma2, cfg
    )
    return _min_rate(delta)


def rotate_rate_marginal(
    tree: tr.Tree, data: Dataset, sigma2: float, cfg: PriorConfig, node: int, outcome: int
) -> float:
    edited = tr.apply_rotate(tree, node, outcome)
    delta = log_posterior_marginal(edited, data, sigma2, cfg) - log_posterior_marginal(
        tree, data, sigma2, cfg
    )
    return _min_rate(delta)


def log_posterior_full(tree: tr.Tree, data: Dataset, sigma2: float, cfg: PriorConfig) -> float:
    """Unnormalized joint log posterior at the tree's stored terminal maps."""
    from .likelihood import log_full_likelihood, suffstats

    stats = suffstats(tree, data)
    if any(m < data.min_node_size for m, _, _ in stats.values()):
        return NEG_INF
    total = log_full_likelihood(tree, data, sigma2) + log_tree_prior(tree, data, cfg)
    for leaf in tree.leaf_ids():
        total += float(log_mu_prior(tree.node(leaf).mu, cfg))
    return total


def _cell_proposal_logpdf(
    tree: tr.Tree, data: Dataset, sigma2: float, cfg: PriorConfig, leaf: int, value: float
) -> float:
    from .likelihood import suffstats

    m, s, _ = suffstats(tree, data)[leaf]
    return float(log_mu_posterior(value, m, s, sigma2, cfg))


def birth_rate_full(
    tree: tr.Tree,
    data: Dataset,
    sigma2: float,
    cfg: PriorConfig,
    leaf: int,
    rule: tr.SplitRule,
    mu_left: float,
    mu_right: float,
) -> float:
    """Full-form birth rate at explicitly given proposed child maps."""
    mu_old = tree.node(leaf).mu
    edited = tr.apply_birth(tree, leaf, rule, mus=(mu_left, mu_right))
    nd = edited.node(leaf)
    delta = (
        log_posterior_full(edited, data, sigma2, cfg)
        + _cell_proposal_logpdf(tree, data, sigma2, cfg, leaf, mu_old)
        - log_posterior_full(tree, data, sigma2, cfg)
        - _cell_proposal_logpdf(edited, data, sigma2, cfg, nd.left, mu_left)
        - _cell_proposal_logpdf(edited, data, sigma2, cfg, nd.right, mu_right)
    )
    return _min_rate(delta)


def death_rate_full(
    tree: tr.Tree,
    data: Dataset,
    sigma2: float,
    cfg: PriorConfig,
    node: int,
    mu_new: float,
) -> float:
    """Full-form death rate at an explicitly given merged-cell map."""
    nd = tree.node(node)
    mu_l, mu_r = tree.node(nd.left).mu, tree.node(nd.right).mu
    edited = tr.apply_death(tree, node, mu=mu_new)
    delta = (
        log_posterior_full(edited, data, sigma2, cfg)
        + _cell_proposal_logpdf(tree, data, sigma2, cfg, nd.left, mu_l)
        + _cell_proposal_logpdf(tree, data, sigma2, cfg, nd.right, mu_r)
        - log_posterior_full(tree, data, sigma2, cfg)
        - _cell_proposal_logpdf(edited, data, sigma2, cfg, node, mu_new)
    )
    return _min_rate(delta)


def enumerate_moves(
    tree: tr.Tree, data: Dataset, sigma2: float, cfg: PriorConfig, mode: str = "bd"
) -> MoveSet:
    """Stateless candidate enumeration (builds a fresh state, then delegates)."""
    state = ChainState(data, cfg, tree=tree, sigma2=sigma2)
    try:
        return state.moveset(mode)
    finally:
        state.close()
