import numpy as np
import pytest

from ctcart.simdata import SimConfig, generate, generate_pair, true_mean


class TestGeneration:
    def test_region_means_at_vanishing_noise(self):
        data = generate(SimConfig(n=300, sigma2=1e-12, seed=3))
        x1, x2 = data.features[:, 0], data.features[:, 1]
        y = data.response
        low = x1 <= 0.5
        assert np.allclose(y[low & (x2 <= 0.5)], 1.0, atol=1e-5)
        assert np.allclose(y[low & (x2 > 0.5)], 3.0, atol=1e-5)
        assert np.allclose(y[~low], 5.0, atol=1e-5)

    def test_block_bounds(self):
        data = generate(SimConfig(n=300, sigma2=1.0, seed=11))
        x1, x3 = data.features[:, 0], data.features[:, 2]
        assert np.all((x1[:200] >= 0.1) & (x1[:200] <= 0.4))
        assert np.all((x1[200:] >= 0.6) & (x1[200:] <= 0.9))
        assert np.all((x3[:200] >= 0.6) & (x3[:200] <= 0.9))
        assert np.all((x3[200:] >= 0.1) & (x3[200:] <= 0.4))

    def test_confounding_is_exact(self):
        data = generate(SimConfig(n=300, sigma2=0.5, seed=2))
        x1, x3 = data.features[:, 0], data.features[:, 2]
        assert np.array_equal(x1 <= 0.5, x3 > 0.5)

    def test_region_cell_counts(self):
        data = generate(SimConfig(n=300, sigma2=1.0, seed=0))
        truth = true_mean(data.features)
        counts = [(truth == v).sum() for v in (1.0, 3.0, 5.0)]
        assert counts == [100, 100, 100]

    def test_noise_variance_consistent(self):
        data = generate(SimConfig(n=300, sigma2=1.0, seed=9))
        resid_var = np.var(data.response - true_mean(data.features))
        assert abs(resid_var - 1.0) < 0.2

    def test_total_variance_decomposition(self):
        # law of total variance: var(y) - between-region variance ~ sigma2
        # (averaged over replicates; single draws carry a noise-truth cross
        # term with sd about 0.19 at n=300)
        gaps = []
        for seed in range(6):
            data = generate(SimConfig(n=300, sigma2=1.0, seed=seed))
            truth = true_mean(data.features)
            gaps.append(np.var(data.response) - np.var(truth) - 1.0)
        assert abs(np.mean(gaps)) < 0.2

    def test_deterministic_under_seed(self):
        a = generate(SimConfig(n=300, sigma2=0.1, seed=21))
        b = generate(SimConfig(n=300, sigma2=0.1, seed=21))
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.response, b.response)

    def test_train_and_test_differ(self):
        train, test = generate_pair(SimConfig(n=300, sigma2=1.0, seed=21))
        assert not np.array_equal(train.features, test.features)
        assert not np.array_equal(train.response, test.response)

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            SimConfig(n=100, sigma2=1.0)
        with pytest.raises(ValueError):
            SimConfig(n=300, sigma2=0.0)

    def test_true_tree_partition_recovers_regions(self):
        from ctcart.tree import SplitRule, Tree, apply_birth, partition

        data = generate(SimConfig(n=300, sigma2=1e-12, seed=4))
        # single split x1 <= 0.5: the first 200 rows vs the last 100
        stump = apply_birth(Tree.single_leaf(), 0, SplitRule(0, 50))
        assign = partition(stump, data)
        counts = sorted(np.bincount(assign)[np.bincount(assign) > 0])
        assert counts == [100, 200]
        # the generating tree: x1 <= 0.5, then x2 <= 0.5 on the left
        left = stump.node(stump.root).left
        true_tree = apply_birth(stump, left, SplitRule(1, 50))
        assign = partition(true_tree, data)
        counts = sorted(np.bincount(assign)[np.bincount(assign) > 0])
        assert counts == [100, 100, 100]

    def test_grid_convention(self):
        data = generate(SimConfig(n=300, sigma2=1.0, seed=0, grid_size=100))
        for g in data.cutpoint_grids:
            assert g.size == 100
            assert g[0] == 0.0
            assert g[-1] < 1.0
        # the oracle split at 0.5 is on the grid
        assert 0.5 in data.cutpoint_grids[0]
