import math

import numpy as np
import pytest

from ctcart import oracle
from ctcart.ct import ChainState
from ctcart.rj import RjOptions, RjProposal, propose, rj_step, run_rj_chain
from ctcart.tree import from_canonical, to_canonical

SIGMA2 = 1.0


@pytest.fixture(scope="module")
def toy_space():
    data = oracle.toy_problem()
    cfg = oracle.toy_prior(data)
    trees = oracle.enumerate_trees(data, max_depth=3)
    return data, cfg, trees


class TestAcceptance:
    def test_symmetric_equal_posterior_accepts(self):
        # equal posteriors and symmetric proposal densities: probability one
        prop = RjProposal(
            "birth", None, delta_log_posterior=0.0,
            forward_log_density=-1.7, reverse_log_density=-1.7,
        )
        assert prop.log_accept == pytest.approx(0.0)

    def test_acceptance_probability_in_unit_interval(self, toy_space, rng):
        data, cfg, trees = toy_space
        for t in trees:
            state = ChainState(data, cfg, tree=t, sigma2=SIGMA2)
            for _ in range(30):
                prop = propose(state, RjOptions(rotate=True), rng)
                if prop.move is not None:
                    assert prop.log_accept <= 0.0
            state.close()

    def test_rejected_step_keeps_state(self, toy_space):
        data, cfg, _ = toy_space
        state = ChainState(data, cfg, sigma2=SIGMA2)
        rng = np.random.default_rng(3)
        options = RjOptions(update_sigma2=False)
        seen_reject = False
        for i in range(200):
            before = to_canonical(state.tree)
            rec = rj_step(state, rng, options, iteration=i)
            if rec.move.endswith("|rejected") or rec.move.endswith("|self"):
                assert rec.tree == before
                seen_reject = True
            assert rec.waiting_time == 1.0
        assert seen_reject
        state.close()


class TestStationarity:
    def test_occupancy_matches_exact_posterior(self, toy_space):
        data, cfg, trees = toy_space
        exact = oracle.exact_posterior(trees, data, SIGMA2, cfg)
        chain = run_rj_chain(
            data, cfg, 100_000, np.random.default_rng(17),
            RjOptions(update_sigma2=False), sigma2=SIGMA2,
        )
        tv = oracle.tv_distance(exact, oracle.occupancy(chain))
        assert tv < 0.02

    def test_rj_and_ct_agree(self, toy_space):
        from ctcart.ct import CtOptions, run_ct_chain

        data, cfg, trees = toy_space
        ct = run_ct_chain(
            data, cfg, 40_000, np.random.default_rng(5),
            CtOptions(update_sigma2=False), sigma2=SIGMA2,
        )
        rj = run_rj_chain(
            data, cfg, 40_000, np.random.default_rng(6),
            RjOptions(update_sigma2=False), sigma2=SIGMA2,
        )
        tv = oracle.tv_distance(oracle.occupancy(ct), oracle.occupancy(rj))
        assert tv < 0.03

    def test_empirical_kernel_preserves_posterior(self, toy_space):
        # estimate the transition kernel from many single steps off each
        # state and check pi K = pi within Monte-Carlo tolerance
        data, cfg, trees = toy_space
        exact = oracle.exact_posterior(trees, data, SIGMA2, cfg)
        keys = sorted(exact)
        index = {k: i for i, k in enumerate(keys)}
        n_rep = 4000
        kernel = np.zeros((len(keys), len(keys)))
        options = RjOptions(update_sigma2=False)
        for k in keys:
            t = from_canonical(k)
            rng = np.random.default_rng(hash(k) % (2**32))
            for _ in range(n_rep):
                state = ChainState(data, cfg, tree=t, sigma2=SIGMA2)
                rec = rj_step(state, rng, options)
                kernel[index[k], index[rec.tree]] += 1
                state.close()
        kernel /= n_rep
        pi = np.array([exact[k] for k in keys])
        drift = pi @ kernel - pi
        assert np.max(np.abs(drift)) < 4.0 / math.sqrt(n_rep)


class TestVariants:
    def test_rotate_variant_proposes_rotations(self, toy_space, rng):
        data, cfg, trees = toy_space
        deep = [t for t in trees if t.n_internal == 2][0]
        state = ChainState(data, cfg, tree=deep, sigma2=SIGMA2)
        kinds = {
            propose(state, RjOptions(rotate=True), rng).kind for _ in range(100)
        }
        assert "rotate" in kinds
        state.close()

    def test_plain_variant_never_rotates(self, toy_space, rng):
        data, cfg, trees = toy_space
        deep = [t for t in trees if t.n_internal == 2][0]
        state = ChainState(data, cfg, tree=deep, sigma2=SIGMA2)
        kinds = {propose(state, RjOptions(), rng).kind for _ in range(100)}
        assert kinds <= {"birth", "death"}
        state.close()

    def test_fixed_seed_reproducible(self, toy, toy_cfg):
        a = run_rj_chain(toy, toy_cfg, 400, np.random.default_rng(9), RjOptions(perturb=True, rotate=True))
        b = run_rj_chain(toy, toy_cfg, 400, np.random.default_rng(9), RjOptions(perturb=True, rotate=True))
        assert a == b
