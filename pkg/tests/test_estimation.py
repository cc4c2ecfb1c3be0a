import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctcart.ct import ChainRecord, CtOptions, run_ct_chain
from ctcart.estimation import (
    count_unique_trees,
    effective_sample_size,
    predict,
    rao_blackwell_mean,
    sample_mean,
    split_fractions,
    summarize_chain,
    variable_activity,
)
from ctcart.priors import PriorConfig
from ctcart.simdata import SimConfig, generate_pair, true_mean


def rec(tree="T", sigma2=1.0, wait=1.0, i=0):
    return ChainRecord(iteration=i, tree=tree, sigma2=sigma2, waiting_time=wait, move="x")


class TestEstimators:
    def test_equal_weights_reduce_to_sample_mean(self):
        chain = [rec(wait=2.5, i=i) for i in range(5)]
        g = lambda r: float(r.iteration)
        assert rao_blackwell_mean(chain, g) == pytest.approx(sample_mean(chain, g))

    def test_hand_computed_weighted_mean(self):
        chain = [rec(wait=1.0), rec(wait=3.0)]
        vals = iter([0.0, 4.0])
        g = lambda r: next(vals)
        assert rao_blackwell_mean(chain, g) == pytest.approx(3.0)

    def test_constant_functional(self):
        chain = [rec(wait=w) for w in (0.5, 1.5, 9.0)]
        assert sample_mean(chain, lambda r: 7.0) == pytest.approx(7.0)
        assert rao_blackwell_mean(chain, lambda r: 7.0) == pytest.approx(7.0)

    def test_simple_sample_mean(self):
        chain = [rec(i=i) for i in range(3)]
        vals = {0: 1.0, 1: 2.0, 2: 3.0}
        assert sample_mean(chain, lambda r: vals[r.iteration]) == pytest.approx(2.0)

    @given(st.floats(0.001, 1000.0))
    @settings(max_examples=30, deadline=None)
    def test_weight_rescaling_invariance(self, scale):
        vals = {0: 2.0, 1: -1.0, 2: 5.0}
        waits = (1.0, 3.0, 0.25)
        base = [rec(wait=w, i=i) for i, w in enumerate(waits)]
        scaled = [rec(wait=w * scale, i=i) for i, w in enumerate(waits)]
        g = lambda r: vals[r.iteration]
        assert rao_blackwell_mean(base, g) == pytest.approx(
            rao_blackwell_mean(scaled, g), rel=1e-9
        )

    def test_indicator_estimates_form_probability_vector(self, toy, toy_cfg):
        chain = run_ct_chain(
            toy, toy_cfg, 2000, np.random.default_rng(0),
            CtOptions(update_sigma2=False), sigma2=1.0,
        )
        states = sorted({r.tree for r in chain})
        probs = np.array(
            [rao_blackwell_mean(chain, lambda r, s=s: float(r.tree == s)) for s in states]
        )
        assert np.all(probs >= 0)
        assert probs.sum() == pytest.approx(1.0)

    def test_empty_chain_rejected(self):
        with pytest.raises(ValueError):
            rao_blackwell_mean([], lambda r: 1.0)
        with pytest.raises(ValueError):
            sample_mean([], lambda r: 1.0)


class TestEffectiveSampleSize:
    def test_iid_trace_near_full_length(self, rng):
        x = rng.standard_normal(10_000)
        ess = effective_sample_size(x)
        assert abs(ess - 10_000) / 10_000 < 0.15

    def test_ar1_matches_analytic(self, rng):
        # average a few paths: the truncated estimator on one path wobbles
        phi = 0.9
        n = 60_000
        want = n * (1 - phi) / (1 + phi)
        got = []
        for _ in range(3):
            eps = rng.standard_normal(n)
            x = np.empty(n)
            x[0] = eps[0]
            for i in range(1, n):
                x[i] = phi * x[i - 1] + math.sqrt(1 - phi * phi) * eps[i]
            got.append(effective_sample_size(x))
        assert abs(np.mean(got) - want) / want < 0.2

    def test_constant_trace_convention(self):
        assert effective_sample_size(np.ones(500)) == 500.0

    def test_short_trace_rejected(self):
        with pytest.raises(ValueError):
            effective_sample_size(np.arange(5))

    def test_weights_expand_trace(self, rng):
        x = rng.standard_normal(2000)
        w = np.ones(2000)
        assert effective_sample_size(x, w) == pytest.approx(effective_sample_size(x))
        w2 = np.full(2000, 3.7)  # uniform scaling: same expansion
        assert effective_sample_size(x, w2) == pytest.approx(effective_sample_size(x))

    def test_replicated_records_lower_ess_rate(self, rng):
        x = rng.standard_normal(4000)
        w = np.ones(4000)
        w[::2] = 10.0  # half the records carry 10x the weight
        plain = effective_sample_size(x)
        weighted = effective_sample_size(x, w)
        # expansion replicates half the points 10 times: correlated trace
        assert weighted < plain * 0.9


class TestTreeFunctionals:
    def test_split_fractions_counts_rules(self):
        text = "I(v=0,c=3)(I(v=1,c=2)(T,T),T)"
        assert np.allclose(split_fractions(text, 3), [0.5, 0.5, 0.0])

    def test_split_fractions_empty_tree_uniform(self):
        assert np.allclose(split_fractions("T", 4), [0.25] * 4)

    def test_variable_activity_weighted(self):
        chain = [
            rec(tree="I(v=0,c=1)(T,T)", wait=3.0),
            rec(tree="I(v=1,c=1)(T,T)", wait=1.0),
        ]
        act = variable_activity(chain, 2)
        assert np.allclose(act, [0.75, 0.25])
        assert act.sum() == pytest.approx(1.0)

    def test_unique_tree_counting(self):
        chain = [rec(tree="T"), rec(tree="T"), rec(tree="I(v=0,c=1)(T,T)")]
        assert count_unique_trees(chain) == 2
        assert count_unique_trees([rec(tree="T")] * 10) == 1

    def test_unique_topologies_ignore_rules(self):
        from ctcart.estimation import count_unique_topologies

        chain = [
            rec(tree="I(v=0,c=1)(T,T)"),
            rec(tree="I(v=2,c=7)(T,T)"),
            rec(tree="I(v=0,c=1)(I(v=1,c=3)(T,T),T)"),
        ]
        assert count_unique_topologies(chain) == 2

    def test_ct_topology_exploration_scale(self):
        # at sigma^2 = 1 the jump chain wanders over a modest set of shapes
        from ctcart.ct import greedy_grow
        from ctcart.estimation import count_unique_topologies
        from ctcart.simdata import SimConfig, generate

        data = generate(SimConfig(n=300, sigma2=1.0, seed=100))
        cfg = PriorConfig.from_data(data.response)
        tree, s2 = greedy_grow(data, cfg)
        chain = run_ct_chain(
            data, cfg, 20_000, np.random.default_rng(0), CtOptions(), tree=tree, sigma2=s2
        )
        shapes = count_unique_topologies(chain[1000:])
        assert 5 <= shapes <= 25


class TestPrediction:
    def test_single_leaf_posterior_mean_everywhere(self, toy, toy_cfg):
        chain = [rec(tree="T", sigma2=1.0)]
        got = predict(chain, toy, np.array([[0.1], [0.9]]), toy_cfg)
        m = toy.n
        s = toy.response.sum()
        want = toy_cfg.sigma_mu2 * s / (m * toy_cfg.sigma_mu2 + 1.0)
        assert np.allclose(got, want)

    def test_three_region_predictions_low_noise(self):
        from ctcart.ct import greedy_grow

        sim = SimConfig(n=300, sigma2=0.01, seed=5)
        train, test = generate_pair(sim)
        cfg = PriorConfig.from_data(train.response)
        tree, sigma2 = greedy_grow(train, cfg)
        chain = run_ct_chain(
            train, cfg, 3000, np.random.default_rng(0), CtOptions(),
            tree=tree, sigma2=sigma2,
        )
        preds = predict(chain[500:], train, test.features, cfg)
        truth = true_mean(test.features)
        for level in (1.0, 3.0, 5.0):
            sel = truth == level
            assert np.max(np.abs(preds[sel] - level)) < 0.1

    def test_rb_and_uniform_weighting_differ(self, toy, toy_cfg):
        chain = run_ct_chain(
            toy, toy_cfg, 3000, np.random.default_rng(1),
            CtOptions(update_sigma2=False), sigma2=1.0,
        )
        X = np.array([[0.2], [0.5], [0.8]])
        rb = predict(chain, toy, X, toy_cfg, weighting="rb")
        sm = predict(chain, toy, X, toy_cfg, weighting="sample_mean")
        assert not np.allclose(rb, sm)


class TestSummaries:
    def test_summary_fields_and_activity_sum(self, toy, toy_cfg):
        chain = run_ct_chain(
            toy, toy_cfg, 2000, np.random.default_rng(2),
            CtOptions(update_sigma2=False), sigma2=1.0,
        )
        summary = summarize_chain(
            chain, 200, toy, toy.features, toy.response, toy_cfg,
            algorithm="CT-A", replication=0, seed=2, wall_time=1.0,
        )
        assert summary.unique_trees >= 1
        assert sum(summary.activity) == pytest.approx(1.0)
        assert set(summary.ess) == {"sigma2", "x1"}
        assert summary.ess_per_second["sigma2"] == pytest.approx(summary.ess["sigma2"])
        assert math.isnan(summary.mse_true)
        row = summary.to_row()
        assert row["algorithm"] == "CT-A"
        assert "ess_x1" in row and "activity_x1" in row
