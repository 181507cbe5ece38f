import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_stack
from mlspec.embed import (
    BcjseConfig,
    base,
    bcjse,
    bcjse_from_gram,
    gram_sum,
    hetero_pca,
    heteropca_impute,
    mase,
    recommend_rs,
    sos,
)
from mlspec.linalg import align, check_orthonormal, hollow, principal_cosines, top_d_eigs, two_to_infty
from mlspec.model import LayerStack, build_mlsbm, build_sim41, membership_to_cosie, noiseless_stack, sample_layers
from mlspec.rng import RngStream

seeds = st.integers(0, 2**32 - 1)


class TestGramSum:
    def test_identity_layer(self):
        np.testing.assert_array_equal(gram_sum(LayerStack(np.eye(5, dtype=np.uint8)[None])), np.eye(5))

    def test_zero_stack(self):
        assert not gram_sum(LayerStack(np.zeros((3, 4, 4), dtype=np.uint8))).any()

    @given(seeds, st.integers(1, 12), st.integers(1, 70))
    def test_concatenation_oracle(self, seed, n, m):
        stack = random_stack(np.random.default_rng(seed), n, m)
        wide = np.hstack([stack.layers[t].astype(float) for t in range(m)])
        np.testing.assert_array_equal(gram_sum(stack), wide @ wide.T)

    @given(seeds, st.integers(2, 15), st.integers(1, 6))
    def test_psd(self, seed, n, m):
        g = gram_sum(random_stack(np.random.default_rng(seed), n, m))
        assert np.linalg.eigvalsh(g)[0] >= -1e-8 * max(1.0, np.linalg.norm(g))


class TestBcjse:
    @given(seeds, st.integers(3, 20), st.integers(1, 8), st.integers(1, 3), st.integers(1, 2))
    def test_r1_is_base(self, seed, n, m, s, d):
        stack = random_stack(np.random.default_rng(seed), n, m)
        want = top_d_eigs(hollow(gram_sum(stack)), d)
        got = bcjse(stack, BcjseConfig(d, 1, s))
        assert got.basis.tobytes() == want.basis.tobytes()
        assert got.basis.tobytes() == base(stack, d).basis.tobytes()

    @given(seeds, st.integers(4, 20), st.integers(1, 8), st.integers(1, 4), st.integers(1, 3))
    def test_orthonormal_and_sorted(self, seed, n, m, r, s):
        emb = bcjse(random_stack(np.random.default_rng(seed), n, m), BcjseConfig(2, r, s))
        check_orthonormal(emb.basis)
        assert emb.eigenvalues[0] >= emb.eigenvalues[1]
        assert emb.diagnostics["bias_diagonal"].shape == (n,)

    def test_bias_estimate_matches_dense_formula(self, rng):
        stack = random_stack(rng, 15, 6, 0.4)
        g = gram_sum(stack)
        h = hollow(g)
        u = top_d_eigs(h, 2).basis
        proj = u @ u.T
        m1 = -np.diag(proj @ h @ proj)
        m2 = -np.diag(proj @ (h - np.diag(m1)) @ proj)
        for s, want in ((1, m1), (2, m2)):
            emb = bcjse_from_gram(g, BcjseConfig(2, 2, s))
            np.testing.assert_allclose(emb.diagnostics["bias_diagonal"], want, rtol=1e-10, atol=1e-9)
            ref = top_d_eigs(h - np.diag(want), 2)
            np.testing.assert_allclose(emb.basis, ref.basis, atol=1e-9)

    def test_flags_off_give_sos(self, rng):
        stack = random_stack(rng, 12, 5)
        g = gram_sum(stack)
        off = bcjse_from_gram(g, BcjseConfig(2, 3, 2), hollow_gram=False, correct_bias=False)
        assert off.basis.tobytes() == sos(stack, 2).basis.tobytes()

    def test_noiseless_fixed_point_mlsbm(self):
        model, _ = build_mlsbm([7, 13], 6, 0.8, 0.3, 0.9)
        emb = bcjse(noiseless_stack(model), BcjseConfig(2, 2, 1))
        assert principal_cosines(emb.basis, model.u).min() >= 1 - 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_noiseless_fixed_point_mixed(self, seed):
        rng = np.random.default_rng(seed)
        z = np.vstack([np.eye(2), rng.dirichlet([1, 1], size=18)])
        c = rng.uniform(0.1, 0.9, size=(4, 2, 2))
        model = membership_to_cosie(z, (c + c.transpose(0, 2, 1)) / 2)
        g = gram_sum(noiseless_stack(model))
        gaps = [1 - principal_cosines(bcjse_from_gram(g, BcjseConfig(2, r, r)).basis, model.u).min()
                for r in (2, 4, 8, 16)]
        assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 1e-6

    def test_noiseless_sim41_needs_more_iterations(self):
        model = build_sim41(80, 8, 0.8, 0.6, 0.5)
        g = gram_sum(noiseless_stack(model))
        err = lambda e: two_to_infty(e.basis @ align(e.basis, model.u) - model.u)
        assert err(bcjse_from_gram(g, BcjseConfig(2, 10, 10))) <= 1e-6
        assert err(bcjse_from_gram(g, BcjseConfig(2, 2, 1))) > err(bcjse_from_gram(g, BcjseConfig(2, 3, 3)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BcjseConfig(2, 0, 1)

    @given(seeds)
    def test_layer_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        stack = random_stack(rng, 12, 5, 0.5)
        perm = LayerStack(stack.layers[rng.permutation(5)])
        for fn in (lambda s: bcjse(s, BcjseConfig(2)), lambda s: mase(s, 2), lambda s: hetero_pca(s, 2)):
            a, b = fn(stack).basis, fn(perm).basis
            if top_d_eigs(gram_sum(stack), 2).degenerate:
                continue
            np.testing.assert_allclose(b @ align(b, a), a, atol=1e-10)

    def test_error_shrinks_with_more_layers(self):
        medians = []
        for m in (400, 1600):
            model = build_sim41(40, m, 0.8, 0.6, 0.3)
            errs = []
            for rep in range(15):
                emb = bcjse(sample_layers(model, RngStream(21, rep)), BcjseConfig(2))
                errs.append(two_to_infty(emb.basis @ align(emb.basis, model.u) - model.u))
            medians.append(np.median(errs))
        assert medians[1] < medians[0]


class TestOtherEstimators:
    def test_sos_noiseless_psd(self):
        model, _ = build_mlsbm([5, 5], 2, 0.8, 0.2, 1.0)
        emb = sos(noiseless_stack(model), 2)
        assert principal_cosines(emb.basis, model.u).min() >= 1 - 1e-10

    def test_base_one_liner(self, rng):
        for _ in range(2):
            stack = random_stack(rng, 10, 4)
            a = stack.layers.astype(float)
            g = sum(x @ x for x in a)
            g = g - np.diag(np.diag(g))
            w, v = np.linalg.eigh(g)
            ref = v[:, [-1, -2]]
            emb = base(stack, 2)
            np.testing.assert_allclose(np.abs(emb.basis.T @ ref), np.eye(2), atol=1e-8)
            np.testing.assert_allclose(emb.eigenvalues, w[[-1, -2]], atol=1e-9)

    def test_mase_single_layer(self, rng):
        stack = random_stack(rng, 9, 1, 0.5)
        ref = top_d_eigs(stack.layers[0].astype(float), 2)
        # the projector sum has a repeated eigenvalue, so only the span is determined
        assert principal_cosines(mase(stack, 2).basis, ref.basis).min() >= 1 - 1e-10

    def test_mase_identical_layers(self, rng):
        one = random_stack(rng, 9, 1, 0.5)
        many = LayerStack(np.repeat(one.layers, 4, axis=0))
        a, b = mase(one, 2).basis, mase(many, 2).basis
        assert principal_cosines(a, b).min() >= 1 - 1e-10

    def test_mase_noiseless_projector_sum(self):
        # assortative layers only: each P_t is PSD so its top-d eigenvectors span col(U)
        z = np.eye(2)[np.repeat([0, 1], [6, 9])]
        model = membership_to_cosie(z, [[[0.8, 0.2], [0.2, 0.8]], [[0.6, 0.3], [0.3, 0.5]]])
        layers = noiseless_stack(model).layers
        proj = sum(top_d_eigs(layers[t], 2).basis @ top_d_eigs(layers[t], 2).basis.T for t in range(2))
        ref = top_d_eigs(proj, 2).basis
        emb = mase(noiseless_stack(model), 2)
        assert principal_cosines(emb.basis, model.u).min() >= 1 - 1e-8
        assert principal_cosines(emb.basis, ref).min() >= 1 - 1e-8

    def test_heteropca_rank_d_start(self, rng):
        x = rng.standard_normal((8, 2))
        g = x @ x.T
        out, iters, converged, change = heteropca_impute(g, 2)
        assert iters == 1 and converged and change < 1e-14

    def test_heteropca_full_rank_d(self, rng):
        a = rng.standard_normal((5, 5))
        out, iters, converged, _ = heteropca_impute(hollow(a @ a.T), 5)
        assert converged and iters <= 2
        np.testing.assert_allclose(out, hollow(a @ a.T), atol=1e-12)

    def test_heteropca_recovers_planted_diagonal(self, rng):
        low = rng.standard_normal((30, 2)) * 3
        planted = low @ low.T
        noisy = planted + np.diag(rng.uniform(0, 5, 30))
        out, _, converged, _ = heteropca_impute(hollow(noisy), 2, max_iters=5000, tol=1e-13)
        assert converged
        np.testing.assert_allclose(np.diag(out), np.diag(planted), atol=1e-6)

    def test_heteropca_reports_nonconvergence(self, rng):
        stack = random_stack(rng, 20, 3)
        emb = hetero_pca(stack, 2, max_iters=1, tol=1e-300)
        assert emb.diagnostics["converged"] is False and emb.diagnostics["iterations"] == 1

    @given(seeds, st.integers(4, 16), st.integers(1, 6))
    def test_all_orthonormal(self, seed, n, m):
        stack = random_stack(np.random.default_rng(seed), n, m)
        for emb in (sos(stack, 2), base(stack, 2), mase(stack, 2), hetero_pca(stack, 2)):
            check_orthonormal(emb.basis)


class TestRecommendRs:
    def test_square(self):
        assert recommend_rs(100, 100) == (2, 1)

    def test_exact_power(self):
        assert math.log(6400) / math.log(80) == pytest.approx(2.0, abs=1e-12)
        assert recommend_rs(6400, 80) == (2, 1)

    def test_few_layers(self):
        assert recommend_rs(2, 1000) == (2, 1)

    def test_many_layers(self):
        assert recommend_rs(10**6, 10) == (4, 3)

    @given(st.integers(2, 10**6), st.integers(2, 10**4))
    def test_bounds(self, m, n):
        r, s = recommend_rs(m, n)
        half = 0.5 * math.log(m) / math.log(n)
        assert r >= half + 1 - 1e-8 and r - 1 < half + 1
        assert s >= 1 and s >= half - 1e-8
