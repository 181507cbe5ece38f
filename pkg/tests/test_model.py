import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlspec.model import (
    CosieModel,
    LayerStack,
    bias_matrix,
    build_mlsbm,
    build_sim41,
    build_sim42,
    check_membership,
    membership_to_cosie,
    noiseless_stack,
    sample_layers,
    sim41_blocks,
)
from mlspec.rng import RngStream
from oracles import bias_matrix_loops


def random_membership(rng, n, k):
    return rng.dirichlet(np.ones(k), size=n)


def random_blocks(rng, m, k):
    c = rng.uniform(0.05, 0.95, size=(m, k, k))
    return (c + c.transpose(0, 2, 1)) / 2


class TestCosieModel:
    def test_constant_model(self):
        model = membership_to_cosie(np.ones((5, 1)), [[[0.3]]])
        np.testing.assert_allclose(model.edge_probabilities(0), np.full((5, 5), 0.3), atol=1e-15)

    def test_mlsbm_block_constant(self):
        model, labels = build_mlsbm([3, 4], 2, 0.8, 0.2, 1.0)
        p = model.edge_probabilities(0)
        same = labels[:, None] == labels[None, :]
        np.testing.assert_allclose(p[same], 0.8, atol=1e-12)
        np.testing.assert_allclose(p[~same], 0.2, atol=1e-12)
        p1 = model.edge_probabilities(1)
        np.testing.assert_allclose(p1[same], 0.2, atol=1e-12)
        for a in range(2):
            for b in range(2):
                assert np.ptp(p[np.ix_(labels == a, labels == b)]) < 1e-12

    def test_mixed_row_hand_value(self):
        z = np.array([[0.3, 0.7], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        model = membership_to_cosie(z, [[[0.9, 0.1], [0.1, 0.9]]])
        assert abs(model.edge_probabilities(0)[0, 1] - 0.34) < 1e-12

    @given(st.integers(0, 2**32 - 1), st.integers(3, 8), st.integers(1, 3))
    def test_matches_membership_formula(self, seed, n, m):
        rng = np.random.default_rng(seed)
        z = np.vstack([np.eye(2), random_membership(rng, n - 2, 2)])
        c = random_blocks(rng, m, 2)
        model = membership_to_cosie(z, c)
        for t in range(m):
            p = model.edge_probabilities(t)
            np.testing.assert_allclose(p, z @ c[t] @ z.T, atol=1e-10)
            assert np.linalg.matrix_rank(p, tol=1e-9) <= 2

    def test_rejects_invalid_probabilities(self):
        u = np.ones((2, 1)) / np.sqrt(2)
        with pytest.raises(ValueError):
            CosieModel(u, np.array([[[3.0]]]))

    def test_rejects_nonorthonormal(self):
        with pytest.raises(ValueError):
            CosieModel(np.ones((2, 1)), np.array([[[0.1]]]))

    def test_rejects_asymmetric_scores(self):
        u = np.eye(3)[:, :2]
        with pytest.raises(ValueError):
            CosieModel(u, np.array([[[0.1, 0.2], [0.0, 0.1]]]))

    def test_membership_validation(self):
        with pytest.raises(ValueError):
            check_membership([[0.5, 0.6]])
        with pytest.raises(ValueError):
            check_membership([[-0.1, 1.1]])
        with pytest.raises(ValueError):
            membership_to_cosie(np.array([[1.0, 0.0], [1.0, 0.0]]), [np.eye(2) * 0.5])


class TestBiasMatrix:
    def test_constant(self):
        n, m, p = 6, 3, 0.2
        model = membership_to_cosie(np.ones((n, 1)), np.full((m, 1, 1), p))
        np.testing.assert_allclose(bias_matrix(model), -m * n * p * p * np.eye(n), atol=1e-13)

    def test_zero(self):
        model = membership_to_cosie(np.ones((4, 1)), np.zeros((2, 1, 1)))
        np.testing.assert_array_equal(bias_matrix(model), np.zeros((4, 4)))

    @pytest.mark.parametrize("seed", range(20))
    def test_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        z = np.vstack([np.eye(2), random_membership(rng, 3, 2)])
        model = membership_to_cosie(z, random_blocks(rng, 3, 2))
        probs = [model.edge_probabilities(t) for t in range(3)]
        np.testing.assert_allclose(bias_matrix(model), bias_matrix_loops(probs), atol=1e-12)


class TestSampling:
    def test_all_zero_and_all_one(self):
        ones = np.ones((4, 1))
        zero = sample_layers(membership_to_cosie(ones, np.zeros((2, 1, 1))), RngStream(1))
        assert not zero.layers.any()
        full = sample_layers(membership_to_cosie(ones, np.ones((2, 1, 1))), RngStream(1))
        assert full.layers.all()

    def test_half_frequency(self):
        n, m = 50, 200
        stack = sample_layers(membership_to_cosie(np.ones((n, 1)), np.full((m, 1, 1), 0.5)), RngStream(3))
        iu = np.triu_indices(n)
        freq = stack.layers[:, iu[0], iu[1]].mean()
        assert 0.49 <= freq <= 0.51

    def test_deterministic_and_symmetric(self):
        model = build_sim41(20, 4, 0.8, 0.6, 0.5)
        s1 = sample_layers(model, RngStream(9, 2))
        s2 = sample_layers(model, RngStream(9, 2))
        assert s1.layers.tobytes() == s2.layers.tobytes()
        assert np.array_equal(s1.layers, s1.layers.transpose(0, 2, 1))
        s3 = sample_layers(model, RngStream(9, 3))
        assert s1.layers.tobytes() != s3.layers.tobytes()

    def test_layer_regenerates_alone(self):
        model = build_sim41(12, 6, 0.8, 0.6, 0.5)
        stack = sample_layers(model, RngStream(4, 1))
        p = model.edge_probabilities(5)
        iu = np.triu_indices(12)
        redo = RngStream(4, 1).layer(5).random(iu[0].size) < p[iu]
        np.testing.assert_array_equal(stack.layers[5][iu], redo)

    def test_samples_diagonal(self):
        model = membership_to_cosie(np.ones((10, 1)), np.full((50, 1, 1), 0.5))
        assert sample_layers(model, RngStream(0)).layers[:, np.arange(10), np.arange(10)].any()

    def test_layerstack_validation(self):
        with pytest.raises(ValueError):
            LayerStack(np.array([[[0, 1], [0, 0]]]))
        with pytest.raises(ValueError):
            LayerStack(np.full((1, 2, 2), 2))

    def test_bias_identity_small(self):
        model, _ = build_mlsbm([6, 6], 4, 0.8, 0.6, 0.5)
        probs = np.stack([model.edge_probabilities(t) for t in range(4)])
        ppt = np.einsum("tij,tjk->ik", probs, probs)
        target = ppt + bias_matrix(model)
        acc = np.zeros_like(ppt)
        reps = 300
        for r in range(reps):
            a = sample_layers(model, RngStream(17, r)).layers.astype(float)
            g = np.einsum("tij,tjk->ik", a, a)
            np.fill_diagonal(g, 0.0)
            acc += g
        err = np.linalg.norm(acc / reps - target) / np.linalg.norm(ppt)
        assert err <= 0.05


class TestDesigns:
    def test_sim41_blocks_layout(self):
        c = sim41_blocks(4, 0.8, 0.6, 0.5)
        np.testing.assert_allclose(c[0], 0.5 * np.array([[0.8, 0.6], [0.6, 0.8]]))
        np.testing.assert_allclose(c[3], 0.5 * np.array([[0.6, 0.8], [0.8, 0.6]]))

    @pytest.mark.parametrize("args", [(3, 0.8, 0.6, 0.5), (4, 0.6, 0.8, 0.5), (4, 0.8, 0.6, 2.0)])
    def test_sim41_blocks_validation(self, args):
        with pytest.raises(ValueError):
            sim41_blocks(*args)

    def test_sim41_properties(self):
        rho, a, b = 0.5, 0.8, 0.6
        model = build_sim41(80, 4, a, b, rho)
        total = sum(model.edge_probabilities(t) for t in range(4))
        w = np.linalg.eigvalsh(total)
        assert abs(w[-2]) <= 1e-10 * w[-1]
        for t in range(4):
            p = model.edge_probabilities(t)
            assert p.min() >= rho * b - 1e-12
            assert p.max() <= rho * (a + b) + 1e-12
        # only the disassortative half has a negative second eigenvalue
        assert np.linalg.eigvalsh(model.edge_probabilities(3))[0] < 0
        assert np.linalg.eigvalsh(model.edge_probabilities(0))[-2] > 0

    def test_sim42_memberships(self):
        model, z = build_sim42(200, 50, 4, 0.9, 0.1, 0.04)
        np.testing.assert_allclose(z.sum(axis=1), 1.0)
        np.testing.assert_array_equal(z[0], z[49])
        assert np.linalg.norm(z[0] - z[49]) == 0.0
        t = z[100:, 0]
        i1, i2 = 130, 171
        want = np.sqrt(2) * abs(t[i1 - 100] - t[i2 - 100])
        assert abs(np.linalg.norm(z[i1] - z[i2]) - want) < 1e-14
        np.testing.assert_allclose(model.edge_probabilities(0), z @ sim41_blocks(4, 0.9, 0.1, 0.04)[0] @ z.T,
                                   atol=1e-12)

    def test_noiseless_stack(self):
        model = build_sim41(10, 4, 0.8, 0.6, 0.5)
        stack = noiseless_stack(model)
        assert stack.noiseless
        np.testing.assert_array_equal(stack.layers[2], model.edge_probabilities(2))
