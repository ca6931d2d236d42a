import math

import numpy as np
import pytest

from domcf import (
    AffineDense,
    AffineSCM,
    DomainSample,
    ILDModel,
    LayerChain,
    check_counterfactual_equiv,
    check_distribution_equiv,
    construct_equivalent,
    dc_distance,
    ground_truth_bound_term,
    intervention_set,
)
from conftest import family_with_intervention, probe_points, random_model, random_scm


def identity_model(m: int, num_domains: int = 2) -> ILDModel:
    return ILDModel(
        LayerChain(m), tuple(AffineSCM.identity(m) for _ in range(num_domains))
    )


class TestSample:
    def test_zero_count(self, rng):
        model = random_model(rng, 3, 2)
        assert model.sample(1, 0, seed=0).shape == (0, 3)

    def test_identity_model_moments(self):
        model = identity_model(3)
        x = model.sample(1, 100_000, seed=42)
        n = len(x)
        assert np.all(np.abs(x.mean(axis=0)) < 4 / math.sqrt(n))
        cov = np.cov(x.T)
        assert np.max(np.abs(cov - np.eye(3))) < 0.1

    def test_linear_pushforward_covariance(self, rng):
        m = 4
        G = np.eye(m) + 0.2 * rng.standard_normal((m, m))
        model = ILDModel(
            LayerChain(m, (AffineDense(G, rng.standard_normal(m)),)),
            (random_scm(rng, m), random_scm(rng, m)),
        )
        x = model.sample(2, 100_000, seed=7)
        F = model.scms[1].matrix
        expected = G @ F @ F.T @ G.T
        emp = np.cov(x.T)
        assert (
            np.linalg.norm(emp - expected) / np.linalg.norm(expected) < 0.05
        )

    def test_seed_reproducible(self, rng):
        model = random_model(rng, 4, 2)
        a = model.sample(2, 50, seed=123)
        b = model.sample(2, 50, seed=123)
        np.testing.assert_array_equal(a, b)

    def test_domain_out_of_range(self, rng):
        with pytest.raises(IndexError):
            random_model(rng, 3, 2).sample(3, 1, seed=0)


class TestLogLikelihood:
    def test_standard_normal_mode(self):
        model = identity_model(2)
        assert model.log_likelihood(np.zeros(2), 1) == pytest.approx(
            -math.log(2 * math.pi)
        )

    def test_pure_scaling_shift(self):
        m = 2
        scaled = AffineSCM(np.zeros((m, m)), np.array([2.0, 2.0]), np.zeros(m))
        model = ILDModel(LayerChain(m), (scaled, AffineSCM.identity(m)))
        x = np.array([0.4, -1.0])
        shift = model.log_likelihood(2 * x, 1) - identity_model(m).log_likelihood(x, 1)
        assert shift == pytest.approx(-2 * math.log(2.0), abs=1e-12)

    def test_density_integrates_to_one(self, rng):
        model = random_model(rng, 2, 2)
        xs = np.arange(-8.0, 8.0 + 1e-12, 0.02)
        grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
        dens = np.exp(model.log_likelihood(grid, 1)).reshape(len(xs), len(xs))
        integral = np.trapezoid(np.trapezoid(dens, xs, axis=1), xs)
        assert integral == pytest.approx(1.0, abs=1e-3)


class TestCounterfactual:
    def test_same_domain_is_identity(self, rng):
        model = random_model(rng, 4, 3)
        x, _ = probe_points(model, 200, seed=5)
        for d in range(1, 4):
            np.testing.assert_allclose(model.counterfactual(x, d, d), x, atol=1e-10)

    def test_reversibility(self, rng):
        model = random_model(rng, 4, 3)
        x, _ = probe_points(model, 200, seed=6)
        back = model.counterfactual(model.counterfactual(x, 1, 3), 3, 1)
        np.testing.assert_allclose(back, x, atol=1e-9)

    def test_chain_rule(self, rng):
        model = random_model(rng, 5, 3)
        x, _ = probe_points(model, 100, seed=7)
        direct = model.counterfactual(x, 1, 3)
        via = model.counterfactual(model.counterfactual(x, 1, 2), 2, 3)
        np.testing.assert_allclose(via, direct, atol=1e-9)

    def test_direct_formula_on_linear_model(self, rng):
        # with g the identity dense layer, the counterfactual of f_1(eps) is f_2(eps)
        f1 = AffineSCM.from_matrix(np.tril(np.ones((4, 4))), np.zeros(4))
        f2 = AffineSCM.from_matrix(
            np.array([[1.0, 0, 0, 0], [2, 2, 0, 0], [1, 1, 1, 0], [1, 1, 1, 1]]),
            np.zeros(4),
        )
        model = ILDModel(
            LayerChain(4, (AffineDense(np.eye(4), np.zeros(4)),)), (f1, f2)
        )
        eps = rng.standard_normal((50, 4))
        np.testing.assert_allclose(
            model.counterfactual(f1.forward(eps), 1, 2), f2.forward(eps), atol=1e-10
        )


class TestDcDistance:
    def test_reflexive(self, rng):
        model = random_model(rng, 4, 2)
        pts = probe_points(model, 100, seed=1)
        assert dc_distance(model, model, pts, seed=9) == 0.0

    def test_symmetric_same_seed(self, rng):
        a, b = random_model(rng, 4, 2), random_model(rng, 4, 2)
        pts = probe_points(a, 100, seed=2)
        assert dc_distance(a, b, pts, seed=11) == dc_distance(b, a, pts, seed=11)

    def test_triangle_inequality(self, rng):
        for trial in range(10):
            a, b, c = (random_model(rng, 3, 2) for _ in range(3))
            pts = probe_points(a, 60, seed=trial)
            dab = dc_distance(a, b, pts, seed=5)
            dbc = dc_distance(b, c, pts, seed=5)
            dac = dc_distance(a, c, pts, seed=5)
            assert dac <= dab + dbc + 1e-9

    def test_empty_data_rejected(self, rng):
        model = random_model(rng, 3, 2)
        with pytest.raises(ValueError):
            dc_distance(model, model, [], seed=0)


class TestEquivalenceChecks:
    def test_counterfactual_self(self, rng):
        model = random_model(rng, 4, 2)
        ok, dev = check_counterfactual_equiv(
            model, model, probe_points(model, 50, seed=3), tol=1e-12
        )
        assert ok and dev == 0.0

    def test_counterfactual_detects_bias_perturbation(self, rng):
        model = random_model(rng, 4, 2)
        f2 = model.scms[1]
        bumped = ILDModel(
            model.g, (model.scms[0], AffineSCM(f2.L, f2.S, f2.b + 0.1))
        )
        ok, dev = check_counterfactual_equiv(
            model, bumped, probe_points(model, 50, seed=4), tol=1e-8
        )
        assert not ok and dev > 1e-3

    def test_distribution_self(self, rng):
        model = random_model(rng, 4, 2)
        ok, _ = check_distribution_equiv(
            model, model, probe_points(model, 50, seed=5), tol=1e-12
        )
        assert ok

    def test_distribution_detects_output_rotation(self, rng):
        model = random_model(rng, 4, 2)
        theta = 0.3
        R = np.eye(4)
        R[:2, :2] = [
            [math.cos(theta), -math.sin(theta)],
            [math.sin(theta), math.cos(theta)],
        ]
        rotated = ILDModel(model.g.append(AffineDense(R, np.zeros(4))), model.scms)
        ok, dev = check_distribution_equiv(
            model, rotated, probe_points(model, 50, seed=6), tol=1e-8
        )
        assert not ok and dev > 1e-3


class TestConstructEquivalent:
    def test_identity_transforms_change_nothing(self, rng):
        model = random_model(rng, 4, 2)
        ident = AffineSCM.identity(4)
        built = construct_equivalent(model, ident, ident)
        pts = probe_points(model, 50, seed=7)
        ok, _ = check_counterfactual_equiv(model, built, pts, tol=1e-10)
        assert ok
        for orig, new in zip(model.scms, built.scms):
            assert orig.allclose(new, tol=1e-12)

    def test_rebasing_makes_first_domain_identity(self, rng):
        model = random_model(rng, 4, 3)
        built = construct_equivalent(
            model, model.scms[0].invert(), AffineSCM.identity(4)
        )
        assert built.scms[0].allclose(AffineSCM.identity(4), tol=1e-10)
        ok, _ = check_counterfactual_equiv(
            model, built, probe_points(model, 100, seed=8), tol=1e-8
        )
        assert ok

    def test_rebasing_preserves_densities(self, rng):
        # h1 = f_1^{-1}, h2 = Id leaves the full data-generating map untouched
        model = random_model(rng, 4, 3)
        built = construct_equivalent(
            model, model.scms[0].invert(), AffineSCM.identity(4)
        )
        ok, _ = check_distribution_equiv(
            model, built, probe_points(model, 100, seed=12), tol=1e-8
        )
        assert ok

    def test_random_triangular_pair(self, rng):
        for trial in range(5):
            model = family_with_intervention(rng, 4, 3, (3, 4))
            h1, h2 = random_scm(rng, 4), random_scm(rng, 4)
            built = construct_equivalent(model, h1, h2)
            ok, dev = check_counterfactual_equiv(
                model, built, probe_points(model, 100, seed=trial), tol=1e-8
            )
            assert ok, dev
            assert (
                intervention_set(built.scms).size == intervention_set(model.scms).size
            )

    def test_size_can_grow_without_distribution_equivalence(self):
        # counterfactual equivalence alone does not pin the intervention size:
        # a non-identity h2 changes the noise distribution, and differing
        # biases then spread into descendant rows of the inverse mechanisms.
        m = 3
        f1 = AffineSCM.identity(m)
        bias = np.zeros(m)
        bias[1] = 0.8
        f2 = AffineSCM(np.zeros((m, m)), np.ones(m), bias)
        model = ILDModel(LayerChain(m), (f1, f2))
        L = np.zeros((m, m))
        L[2, 1] = -1.0  # h2 output row 3 = z2 + z3
        h2 = AffineSCM(L, np.ones(m), np.zeros(m))
        built = construct_equivalent(model, AffineSCM.identity(m), h2)
        ok, _ = check_counterfactual_equiv(
            model, built, (np.random.default_rng(0).normal(size=(50, m)), np.ones(50, dtype=int)), tol=1e-9
        )
        assert ok
        assert intervention_set(model.scms).indices == (2,)
        assert intervention_set(built.scms).indices == (2, 3)


class TestGroundTruthBoundTerm:
    def test_identical_mechanisms_give_zero(self, rng):
        f = random_scm(rng, 3)
        model = ILDModel(LayerChain(3), (f, f))
        assert ground_truth_bound_term(model, n_mc=100, seed=0) == 0.0

    def test_pure_bias_closed_form(self):
        m, c = 3, 0.7
        f1 = AffineSCM.identity(m)
        b = np.zeros(m)
        b[-1] = c
        f2 = AffineSCM(np.zeros((m, m)), np.ones(m), b)
        model = ILDModel(LayerChain(m), (f1, f2))
        assert ground_truth_bound_term(model, n_mc=500, seed=1) == pytest.approx(
            c**2, abs=1e-12
        )

    def test_matches_gaussian_closed_form(self, rng):
        model = random_model(rng, 4, 3)
        n_mc = 100_000
        estimate = ground_truth_bound_term(model, n_mc=n_mc, seed=3)

        k = intervention_set(model.scms).size
        lip = model.g.lipschitz_upper_bound()
        pairs = [
            (a, b)
            for a in range(model.num_domains)
            for b in range(model.num_domains)
            if a != b
        ]
        # per coordinate: difference is N(mu, sigma^2) per ordered pair
        means = np.zeros(model.dim)
        variances = np.zeros(model.dim)
        for a, b in pairs:
            dF = model.scms[a].matrix - model.scms[b].matrix
            db = model.scms[a].b - model.scms[b].b
            mu2 = db**2
            sig2 = np.sum(dF**2, axis=1)
            means += (mu2 + sig2) / len(pairs)
            # Var(X^2) = 2 sigma^4 + 4 sigma^2 mu^2 for X ~ N(mu, sigma^2)
            variances += (
                2 * sig2**2 + 4 * sig2 * mu2 + (mu2 + sig2) ** 2
            ) / len(pairs)
        variances -= means**2  # law of total variance over the pair mixture
        i_star = int(np.argmax(means))
        closed = k * lip**2 * means[i_star]
        stderr = k * lip**2 * math.sqrt(variances[i_star] / n_mc)
        assert abs(estimate - closed) <= 3 * stderr


class TestDomainSample:
    def test_label_validated(self):
        with pytest.raises(ValueError):
            DomainSample(np.zeros(2), 0)

    def test_list_coercion_matches_arrays(self, rng):
        model = random_model(rng, 3, 2)
        x, d = probe_points(model, 10, seed=1)
        samples = [DomainSample(row, int(lab)) for row, lab in zip(x, d)]
        got = dc_distance(model, model, samples, seed=0)
        assert got == 0.0
