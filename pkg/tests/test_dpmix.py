"""Hierarchical mixture: priors, generation, supervised and unsupervised
fits, prediction, generalization contours, serialization."""

import inspect

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from mppca import (
    Dataset,
    Hyperparams,
    MixtureModel,
    PpcaParams,
    Prediction,
    cluster_loadings,
    crp_assignment_probs,
    crp_expected_clusters,
    fit_supervised,
    fit_unsupervised,
    generalization_grid,
    generate,
    generate_with_structure,
    map_assignments,
    model_from_json,
    model_to_json,
    predict_category,
    simulate_crp,
    stick_breaking_weights,
)
from mppca.contours import (
    angle_to_axis_deg,
    anisotropy_ratio,
    ellipse_fit,
    level_crossing_radii,
)


def angle_deg(u, v):
    cos = abs(np.dot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return np.degrees(np.arccos(np.clip(cos, 0.0, 1.0)))


def elongated_clusters(centers, long_axis, var_long, var_short, n_per, rng):
    """Axis-aligned Gaussian blobs, all elongated along the same coordinate."""
    gen = np.random.default_rng(rng)
    xs, labels = [], []
    for k, center in enumerate(centers):
        sds = np.full(2, np.sqrt(var_short))
        sds[long_axis] = np.sqrt(var_long)
        xs.append(center + gen.standard_normal((n_per, 2)) * sds)
        labels.append(np.full(n_per, k))
    return Dataset(x=np.concatenate(xs), labels=np.concatenate(labels))


class TestCrpAssignmentProbs:
    def test_three_one_example(self):
        probs = crp_assignment_probs([3, 1], gamma=1.0)
        assert np.allclose(probs, [0.6, 0.2, 0.2])

    def test_first_customer(self):
        probs = crp_assignment_probs([], gamma=2.0)
        assert np.allclose(probs, [1.0])

    def test_sums_to_one_and_permutation_equivariant(self):
        rng = np.random.default_rng(0)
        counts = rng.integers(1, 20, size=6)
        probs = crp_assignment_probs(counts, gamma=0.7)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        perm = rng.permutation(6)
        permuted = crp_assignment_probs(counts[perm], gamma=0.7)
        assert np.allclose(permuted[:-1], probs[perm])
        assert permuted[-1] == pytest.approx(probs[-1])

    def test_mean_cluster_count_matches_harmonic_sum(self):
        n, gamma = 50, 1.0
        counts = simulate_crp(n, gamma, n_sequences=100_000, rng=1)
        expected = sum(gamma / (gamma + i) for i in range(n))
        assert crp_expected_clusters(n, gamma) == pytest.approx(expected, abs=1e-12)
        assert counts.mean() == pytest.approx(expected, rel=0.01)


class TestStickBreaking:
    def test_geometric_halving(self):
        weights, residual = stick_breaking_weights([0.5, 0.5, 0.5])
        assert np.allclose(weights, [0.5, 0.25, 0.125])
        assert residual == pytest.approx(0.125)

    def test_concentration_limit(self):
        weights, residual = stick_breaking_weights([1 - 1e-12, 0.5, 0.5])
        assert weights[0] == pytest.approx(1.0, abs=1e-11)
        assert residual < 1e-12

    def test_first_weight_mean_matches_beta_oracle(self):
        gen = np.random.default_rng(2)
        betas = gen.beta(1.0, 1.0, size=(100_000, 100))
        first = betas[:, 0]  # pi_1 = beta_1
        assert first.mean() == pytest.approx(0.5, rel=0.01)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            stick_breaking_weights([0.5, 1.0])


class TestGenerate:
    def test_prior_concentration_limit(self):
        hyper = Hyperparams(alpha_mu=1e8, a_tau=50.0, b_tau=0.05)
        data, model, z = generate(hyper, d=3, n=400, rng=3)
        for cat in model.categories:
            assert np.linalg.norm(cat.mu) < 1e-3
        # with mu ~ 0 and tiny noise, every point sits near the line
        # span(w_c) through the origin
        for c, cat in enumerate(model.categories):
            pts = data.x[data.labels == c]
            w = cat.W[:, 0]
            denom = w @ w
            if denom < 1e-12:
                continue
            resid = pts - np.outer(pts @ w / denom, w)
            assert np.sqrt(np.mean(resid**2)) < 0.25

    def test_fixed_seed_reproducible(self):
        hyper = Hyperparams()
        d1, m1, z1 = generate(hyper, d=3, n=200, rng=4)
        d2, m2, z2 = generate(hyper, d=3, n=200, rng=4)
        assert np.array_equal(d1.x, d2.x)
        assert np.array_equal(d1.labels, d2.labels)
        assert np.array_equal(z1, z2)
        assert model_to_json(m1) == model_to_json(m2)

    def test_category_sizes_match_crp_marginal(self):
        # Monte Carlo calibrated chi-square: bucket the realized category
        # sizes, score distance to the mean bucket profile of directly
        # simulated partitions, and require the rollout's score to sit below
        # the reference distribution's 99th percentile.
        n, n_ref = 10_000, 1000
        edges = np.array([1, 2, 4, 8, 16, 64, 256, 1024, np.inf])

        def bucket(sizes):
            return np.histogram(sizes, bins=edges)[0]

        gen = np.random.default_rng(5)
        ref = np.zeros((n_ref, len(edges) - 1))
        kmax = 60
        counts = np.zeros((n_ref, kmax))
        n_open = np.ones(n_ref, dtype=int)
        counts[:, 0] = 1
        for i in range(1, n):
            opens = gen.random(n_ref) < 1.0 / (1.0 + i)
            pick = (counts.cumsum(axis=1) > (gen.random(n_ref) * i)[:, None]).argmax(axis=1)
            pick[opens] = n_open[opens]
            n_open[opens] += 1
            counts[np.arange(n_ref), pick] += 1
        for r in range(n_ref):
            ref[r] = bucket(counts[r, : n_open[r]])
        mean_profile = ref.mean(axis=0)

        def score(profile):
            return float(np.sum((profile - mean_profile) ** 2 / np.maximum(mean_profile, 0.05)))

        null_scores = np.sort([score(row) for row in ref])
        cutoff = null_scores[int(0.99 * n_ref)]
        _, model, _ = generate(Hyperparams(), d=3, n=n, truncation=40, rng=6)
        assert score(bucket(np.array(model.counts))) <= cutoff


class TestClusterLoadings:
    def test_objective_never_decreases(self):
        gen = np.random.default_rng(7)
        ws = np.concatenate(
            [
                np.array([0.0, 2.0]) + 0.1 * gen.standard_normal((5, 2)),
                np.array([2.0, 0.0]) + 0.1 * gen.standard_normal((5, 2)),
            ]
        )
        ownership, components, trace = cluster_loadings(ws, Hyperparams())
        assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))
        assert len(set(ownership[:5])) == 1
        assert len(set(ownership[5:])) == 1
        assert ownership[0] != ownership[-1]
        assert len(components) == 2

    def test_sign_flipped_loadings_share_a_component(self):
        gen = np.random.default_rng(8)
        base = np.array([0.0, 1.8])
        ws = np.concatenate(
            [
                base + 0.05 * gen.standard_normal((4, 2)),
                -base + 0.05 * gen.standard_normal((4, 2)),
            ]
        )
        ownership, components, _ = cluster_loadings(ws, Hyperparams())
        assert len(set(ownership)) == 1
        assert len(components) == 1

    def test_consumes_only_loadings(self):
        # top-level inference sees category parameters, never raw data
        params = inspect.signature(cluster_loadings).parameters
        assert "ws" in params
        assert not any(name in params for name in ("x", "data", "points"))


class TestFitSupervised:
    def test_two_categories_one_shared_axis(self):
        data = elongated_clusters(
            [(-4.0, 0.0), (4.0, 0.0)], long_axis=1, var_long=4.0,
            var_short=0.05, n_per=300, rng=9,
        )
        model = fit_supervised(data, Hyperparams())
        assert model.n_components == 1
        assert angle_deg(model.global_components[0], np.array([0.0, 1.0])) < 5.0

    def test_four_categories_two_axes_ownership(self):
        gen = np.random.default_rng(10)
        centers = [(-6, -6), (6, 6), (-6, 6), (6, -6)]
        xs, labels = [], []
        for k, center in enumerate(centers):
            sds = np.array([2.0, 0.2]) if k < 2 else np.array([0.2, 2.0])
            xs.append(np.asarray(center, float) + gen.standard_normal((250, 2)) * sds)
            labels.append(np.full(250, k))
        model = fit_supervised(Dataset(np.concatenate(xs), np.concatenate(labels)), Hyperparams())
        assert model.n_components == 2
        own = model.ownership
        assert own[0] == own[1] and own[2] == own[3] and own[0] != own[2]

    def test_single_category_shrinks_toward_zero(self):
        data = elongated_clusters(
            [(0.0, 0.0)], long_axis=0, var_long=3.0, var_short=0.1, n_per=200, rng=11
        )
        model = fit_supervised(data, Hyperparams())
        assert model.n_components == 1
        w = model.loadings()[0]
        nu = model.global_components[0]
        assert angle_deg(w, nu) < 2.0
        assert np.linalg.norm(nu) <= np.linalg.norm(w)

    def test_single_observation_category_rejected(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
        data = Dataset(x, labels=np.array([0, 0, 1]))
        with pytest.raises(ValueError, match="fewshot"):
            fit_supervised(data, Hyperparams())

    def test_recovers_generated_structure(self):
        hits = 0
        for seed in range(10):
            hyper = Hyperparams(a_tau=4.0, b_tau=1.0)
            data, truth, _ = generate_with_structure(
                hyper, d=3, counts=[300, 300, 300, 300], ownership=[0, 0, 1, 1], rng=seed
            )
            model = fit_supervised(data, hyper)
            if model.n_components == truth.n_components:
                hits += 1
        assert hits >= 9


@pytest.fixture(scope="module")
def four_cluster_data():
    return elongated_clusters(
        [(-3, -5), (-3, 5), (3, -5), (3, 5)],
        long_axis=1, var_long=4.0, var_short=0.1, n_per=150, rng=12,
    )


@pytest.fixture(scope="module")
def trained_model():
    data = elongated_clusters(
        [(-3, -5), (-3, 5), (3, -5), (3, 5)],
        long_axis=1, var_long=4.0, var_short=0.1, n_per=150, rng=13,
    )
    return fit_unsupervised(data, Hyperparams(), epochs=15, rng=0)


class TestFitUnsupervised:
    def test_recovers_four_clusters(self, four_cluster_data):
        model = fit_unsupervised(four_cluster_data, Hyperparams(), epochs=15, rng=0)
        assert model.n_categories == 4
        got = map_assignments(model, four_cluster_data.x)
        assert adjusted_rand_score(four_cluster_data.labels, got) > 0.9

    def test_identical_points_collapse(self):
        data = Dataset(np.tile([1.5, -0.5], (30, 1)))
        hyper = Hyperparams(a_tau=3.0, b_tau=2.0)
        model = fit_unsupervised(data, hyper, epochs=3, rng=0)
        assert model.n_categories == 1
        assert model.counts == (30,)
        # no residual variance: sigma2 falls back to the prior's own scale
        assert model.categories[0].sigma2 == pytest.approx(
            hyper.b_tau / (hyper.a_tau + 1.0), rel=0.5
        )

    def test_same_seed_same_assignments(self, four_cluster_data):
        a = fit_unsupervised(four_cluster_data, Hyperparams(), epochs=5, rng=3)
        b = fit_unsupervised(four_cluster_data, Hyperparams(), epochs=5, rng=3)
        assert model_to_json(a) == model_to_json(b)
        assert np.array_equal(
            map_assignments(a, four_cluster_data.x),
            map_assignments(b, four_cluster_data.x),
        )

    def test_zero_epochs_rejected(self, four_cluster_data):
        with pytest.raises(ValueError):
            fit_unsupervised(four_cluster_data, Hyperparams(), epochs=0)


def two_category_model(mu_a, mu_b, counts=(1, 1)):
    cats = [
        PpcaParams(mu=np.asarray(mu_a, float), W=np.zeros((2, 1)), sigma2=1.0),
        PpcaParams(mu=np.asarray(mu_b, float), W=np.zeros((2, 1)), sigma2=1.0),
    ]
    return MixtureModel(
        d=2, categories=cats, counts=counts,
        global_components=[np.zeros(2)], ownership=[0, 0], hyper=Hyperparams(),
    )


class TestPredictCategory:
    def test_identical_categories_split_evenly(self):
        model = two_category_model([0.0, 0.0], [0.0, 0.0], counts=(7, 3))
        pred = predict_category(np.array([2.0, -1.0]), model, include_base_rate=False, n_new_draws=0)
        assert np.allclose(pred.categories, [0.5, 0.5])

    def test_far_separated_prototype(self):
        model = two_category_model([0.0, 0.0], [40.0, 0.0])
        pred = predict_category(np.array([0.0, 0.0]), model, include_base_rate=False, n_new_draws=0)
        assert pred.categories[0] > 0.99

    def test_base_rates_give_nine_to_one(self):
        model = two_category_model([0.0, 0.0], [0.0, 0.0], counts=(9, 1))
        pred = predict_category(np.array([0.3, 0.3]), model, include_base_rate=True, n_new_draws=0)
        assert pred.categories[0] / pred.categories[1] == pytest.approx(9.0, rel=1e-9)

    def test_probabilities_sum_to_one_with_new_bucket(self):
        model = two_category_model([0.0, 0.0], [3.0, 0.0])
        pred = predict_category(np.array([1.0, 1.0]), model, n_new_draws=64, rng=0)
        assert pred.full_vector().sum() == pytest.approx(1.0, abs=1e-12)
        assert pred.new > 0

    def test_likelihood_scaling_leaves_prediction_unchanged(self):
        scores = np.array([-3.1, -0.4, -2.2])
        base = Prediction.from_log_scores(scores, log_new=-5.0)
        shifted = Prediction.from_log_scores(scores + 7.3, log_new=-5.0 + 7.3)
        assert np.allclose(base.full_vector(), shifted.full_vector(), atol=1e-12)
        assert base.argmax == shifted.argmax

    def test_empty_model_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            predict_category(
                np.zeros(2),
                MixtureModel(d=2, categories=[], counts=[], global_components=[],
                             ownership=[], hyper=Hyperparams()),
            )


class TestGeneralizationGrid:
    def test_anchor_is_maximal(self, trained_model):
        anchor = np.array([0.0, 0.0])
        grid = [anchor] + [anchor + off for off in np.random.default_rng(14).normal(size=(30, 2))]
        probs = generalization_grid(trained_model, anchor, grid, rng=0)
        assert np.argmax(probs) == 0

    def test_contour_tracks_training_axis(self, trained_model):
        anchor = np.array([0.0, 0.0])

        def prob_fn(points):
            return generalization_grid(trained_model, anchor, points, rng=0)

        radii, dirs = level_crossing_radii(prob_fn, anchor, level=0.5, n_rays=48, r_max=16.0)
        axes, lengths = ellipse_fit(radii, dirs, anchor)
        # training clusters are elongated along e2 with variance ratio 40
        assert angle_to_axis_deg(axes[0], axis=1) < 10.0
        assert anisotropy_ratio(radii) > 2.0


class TestSerialization:
    def test_round_trip_is_lossless(self):
        _, model, _ = generate(Hyperparams(alpha_nu=2.5, b_tau=0.7), d=4, n=300, rng=15)
        text = model_to_json(model)
        back = model_from_json(text)
        assert back.d == model.d
        assert back.counts == model.counts
        assert back.ownership == model.ownership
        for a, b in zip(model.categories, back.categories):
            assert np.array_equal(a.mu, b.mu)
            assert np.array_equal(a.W, b.W)
            assert a.sigma2 == b.sigma2
        for a, b in zip(model.global_components, back.global_components):
            assert np.array_equal(a, b)
        assert model.hyper == back.hyper
        assert model_to_json(back) == text
