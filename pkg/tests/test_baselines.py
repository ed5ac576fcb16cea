import numpy as np
import pytest

from purple.baselines import (
    EmConfig,
    GroupPrevalenceEstimate,
    baseline_relative_prevalence,
    em_soft_labels,
    em_update_c,
    fit_em,
    fit_logistic,
    fit_negative,
    fit_supervised,
    group_prevalences,
    register_estimator,
)
from purple.data import SplitSpec, split
from purple.gauss import GaussSynthConfig, generate_gauss
from purple.harness import true_relative_prevalence
from purple.model import TrainConfig, relative_prevalence, fit as fit_purple

FAST = TrainConfig(lambda_grid=(0.0,), learning_rate=0.02, max_epochs=1500, patience=50)


def identical_groups_data(c_a=0.5, c_b=0.25, n=4000, seed=0):
    """Both groups share one feature distribution, so the true relative
    prevalence is 1 and only the labeling frequencies differ."""
    cfg = GaussSynthConfig(n_a=n, n_b=n, mean_a=-np.ones(5), mean_b=-np.ones(5),
                           c={"a": c_a, "b": c_b})
    return generate_gauss(cfg, seed)


class TestNegative:
    def test_bias_equals_frequency_ratio(self):
        data = identical_groups_data()
        assert true_relative_prevalence(data, "a", "b") == pytest.approx(1.0, abs=0.05)
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        est = baseline_relative_prevalence("negative", tr, va, te, "a", "b",
                                           seed=0, config=FAST)
        assert est.value == pytest.approx(2.0, rel=0.15)

    def test_equal_frequencies_cancel(self):
        data = identical_groups_data(c_a=0.4, c_b=0.4, seed=1)
        tr, va, te = split(data, SplitSpec(seed=1), 0)
        est = baseline_relative_prevalence("negative", tr, va, te, "a", "b",
                                           seed=0, config=FAST)
        assert est.value == pytest.approx(1.0, rel=0.15)

    def test_all_unlabeled_group_fails_with_name(self):
        data = identical_groups_data(c_a=0.5, c_b=0.0, seed=2)
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        with pytest.raises(ValueError, match="group 'b'"):
            baseline_relative_prevalence("negative", tr, va, te, "a", "b",
                                         seed=0, config=FAST)


class TestSupervised:
    def test_requires_true_labels(self):
        data = identical_groups_data(seed=3)
        data.y = None
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        with pytest.raises(ValueError, match="true labels"):
            baseline_relative_prevalence("supervised", tr, va, te, "a", "b",
                                         seed=0, config=FAST)

    def test_equals_negative_when_fully_labeled(self):
        data = identical_groups_data(c_a=1.0, c_b=1.0, seed=4)
        np.testing.assert_array_equal(data.s, data.y)
        tr, va, _ = split(data, SplitSpec(seed=0), 0)
        neg = fit_negative(tr, va, FAST, seed=0)
        sup = fit_supervised(tr, va, FAST, seed=0)
        np.testing.assert_array_equal(neg.w, sup.w)
        assert neg.b == sup.b

    def test_mean_prediction_matches_label_rate(self):
        # calibration-in-the-large of a converged logistic fit with intercept
        data = identical_groups_data(seed=5)
        tr, va, _ = split(data, SplitSpec(seed=0), 0)
        cfg = TrainConfig(lambda_grid=(0.0,), learning_rate=0.05, max_epochs=3000,
                          patience=3000)
        scorer = fit_supervised(tr, va, cfg, seed=0)
        assert scorer.predict(tr.features).mean() == pytest.approx(
            tr.y.mean(), abs=0.01)


class TestEmSteps:
    def test_soft_labels_hand_computed(self):
        f = np.array([0.8, 0.3])
        s = np.array([1, 0])
        q = em_soft_labels(f, s, 0.5)
        assert q[0] == 1.0
        assert q[1] == pytest.approx(0.3 * 0.5 / (1.0 - 0.15), abs=1e-12)

    def test_soft_labels_no_underreporting(self):
        # c = 1 means unlabeled rows are certainly negative
        q = em_soft_labels(np.array([0.9, 0.5]), np.array([0, 0]), 1.0)
        np.testing.assert_allclose(q, 0.0, atol=1e-9)

    def test_c_update_hand_computed(self):
        assert em_update_c(np.array([1, 0]), np.array([0.8, 0.6])) == pytest.approx(
            1.0 / 1.4, abs=1e-12)

    def test_c_update_clamped_to_one(self):
        assert em_update_c(np.array([1, 1]), np.array([0.9, 0.9])) == 1.0

    def test_c_update_stays_positive(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 30))
            s = rng.integers(0, 2, n)
            f = rng.uniform(0.0, 1.0, n)
            c = em_update_c(s, f)
            assert 0.0 < c <= 1.0


class TestEmFit:
    def test_requires_a_positive(self):
        data = identical_groups_data(c_a=0.0, c_b=0.0, n=200, seed=6)
        tr, va, _ = split(data, SplitSpec(seed=0), 0)
        with pytest.raises(ValueError, match="observed positive"):
            fit_em(tr, va, EmConfig(), FAST, seed=0)

    def test_fully_labeled_recovers_c_one(self):
        cfg = GaussSynthConfig(n_a=3000, n_b=3000, separable=True,
                               c={"a": 1.0, "b": 1.0})
        data = generate_gauss(cfg, 7)
        tr, va, _ = split(data, SplitSpec(seed=0), 0)
        em = fit_em(tr, va, EmConfig(), FAST, seed=0)
        assert em.c_hat > 0.9
        sup = fit_supervised(tr, va, FAST, seed=0)
        gap = np.abs(em.scorer.predict(va.features) - sup.predict(va.features))
        assert gap.mean() < 0.05

    def test_c_init_recorded(self):
        data = identical_groups_data(n=1000, seed=8)
        tr, va, _ = split(data, SplitSpec(seed=0), 0)
        em = fit_em(tr, va, EmConfig(max_iters=2), FAST, seed=0)
        assert em.c_init == pytest.approx(min(2.0 * tr.s.mean(), 1.0 - 1e-3), abs=1e-12)

    def test_non_convergence_flag_propagates(self):
        data = identical_groups_data(n=1500, seed=9)
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        est = baseline_relative_prevalence("em", tr, va, te, "a", "b", seed=0,
                                           config=FAST,
                                           em_config=EmConfig(max_iters=1))
        assert "em-non-converged" in est.flags


class TestEstimatorContract:
    def test_purple_contract_matches_direct_estimate(self):
        data = generate_gauss(GaussSynthConfig(n_a=800, n_b=1200), 10)
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        cfg = TrainConfig(lambda_grid=(0.0,), max_epochs=300, patience=300)
        result = fit_purple(tr, va, cfg, seed=0)
        direct = relative_prevalence(result.model, te, "a", "b")
        alphas = {e.group: e.alpha_hat
                  for e in group_prevalences("purple", tr, va, te, cfg, 0,
                                             purple_fit=result)}
        assert alphas["a"] / alphas["b"] == pytest.approx(direct, rel=1e-12)

    def test_deterministic_given_seed(self):
        data = identical_groups_data(n=600, seed=11)
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        cfg = TrainConfig(lambda_grid=(0.0,), max_epochs=100, patience=100)
        a = baseline_relative_prevalence("negative", tr, va, te, "a", "b", seed=5,
                                         config=cfg)
        b = baseline_relative_prevalence("negative", tr, va, te, "a", "b", seed=5,
                                         config=cfg)
        assert a.value == b.value

    def test_registered_external_estimator(self):
        def fake(train, val, eval_data, seed):
            return [GroupPrevalenceEstimate("a", 0.3),
                    GroupPrevalenceEstimate("b", 0.1)]

        register_estimator("fake-external", fake)
        data = identical_groups_data(n=200, seed=12)
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        est = baseline_relative_prevalence("fake-external", tr, va, te, "a", "b", seed=0)
        assert est.value == pytest.approx(3.0, rel=1e-12)

    def test_unknown_kind_rejected(self):
        data = identical_groups_data(n=200, seed=13)
        tr, va, te = split(data, SplitSpec(seed=0), 0)
        with pytest.raises(ValueError, match="unknown estimator"):
            baseline_relative_prevalence("km17", tr, va, te, "a", "b", seed=0)

    def test_soft_target_fit_accepts_probabilities(self):
        data = identical_groups_data(n=500, seed=14)
        tr, va, _ = split(data, SplitSpec(seed=0), 0)
        q = np.full(tr.n_rows, 0.35)
        cfg = TrainConfig(lambda_grid=(0.0,), learning_rate=0.05, max_epochs=800,
                          patience=800)
        scorer = fit_logistic(tr.features, q, va.features, np.full(va.n_rows, 0.35),
                              cfg, seed=0)
        assert scorer.predict(tr.features).mean() == pytest.approx(0.35, abs=0.01)
