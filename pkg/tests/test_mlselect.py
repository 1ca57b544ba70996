import math

import numpy as np
import pytest

from platescreen.errors import (
    DegenerateLabelsError,
    IncompleteFeaturesError,
    StratificationError,
)
from platescreen.mlselect import (
    BayesClassifier,
    CascadeModel,
    CascadeStage,
    WrapperNormalizer,
    anova_relevance,
    cross_validate,
    manova_pair_search,
    stratified_folds,
)


def two_gaussians(rng, n, mu0, mu1, cov0=None, cov1=None, dims=1):
    cov0 = np.eye(dims) if cov0 is None else np.asarray(cov0)
    cov1 = np.eye(dims) if cov1 is None else np.asarray(cov1)
    X = np.vstack(
        [
            rng.multivariate_normal(np.full(dims, mu0), cov0, n),
            rng.multivariate_normal(np.full(dims, mu1), cov1, n),
        ]
    )
    y = np.array([0] * n + [1] * n)
    return X, y


class TestAnova:
    def test_separated_gaussians_high_relevance(self):
        rng = np.random.default_rng(1)
        X, y = two_gaussians(rng, 50, 0.0, 10.0)
        table = anova_relevance(X, y)
        assert table.rows[0][1] > 0.9

    def test_constant_feature_zero(self):
        X = np.column_stack([np.ones(20), np.arange(20)])
        y = np.array([0] * 10 + [1] * 10)
        table = anova_relevance(X, y, feature_names=["const", "ramp"])
        scores = dict((names[0], s) for names, s in table.rows)
        assert scores["const"] == 0.0

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabelsError):
            anova_relevance(np.random.rand(10, 2), np.zeros(10))

    def test_matches_direct_eta_squared(self):
        rng = np.random.default_rng(7)
        X, y = two_gaussians(rng, 30, 0.0, 2.0)
        x = X[:, 0]
        grand = x.mean()
        ss_t = ((x - grand) ** 2).sum()
        ss_b = sum(
            (x[y == c]).size * (x[y == c].mean() - grand) ** 2 for c in (0, 1)
        )
        table = anova_relevance(X, y)
        assert table.rows[0][1] == pytest.approx(ss_b / ss_t, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(9)
        X, y = two_gaussians(rng, 40, 0.0, 3.0)
        t1 = anova_relevance(X, y).rows[0][1]
        t2 = anova_relevance(X * 7.5 - 3.0, y).rows[0][1]
        assert t1 == pytest.approx(t2, abs=1e-9)


class TestManova:
    def test_duplicate_partner_no_gain(self):
        rng = np.random.default_rng(2)
        X, y = two_gaussians(rng, 40, 0.0, 4.0)
        X = np.column_stack([X[:, 0], X[:, 0].copy()])
        single = anova_relevance(X, y, feature_names=["a", "acopy"])
        pairs = manova_pair_search(X, y, "a", feature_names=["a", "acopy"])
        assert pairs.rows[0][1] == pytest.approx(single.rows[0][1], abs=1e-9)

    def test_informative_partner_gains(self):
        rng = np.random.default_rng(3)
        n = 60
        X = np.vstack(
            [
                np.column_stack([rng.normal(0, 1, n), rng.normal(0, 1, n)]),
                np.column_stack([rng.normal(2, 1, n), rng.normal(2, 1, n)]),
            ]
        )
        y = np.array([0] * n + [1] * n)
        single = anova_relevance(X, y, feature_names=["a", "b"])
        anchor_score = dict((r[0][0], r[1]) for r in single.rows)["a"]
        pairs = manova_pair_search(X, y, "a", feature_names=["a", "b"])
        assert pairs.rows[0][1] > anchor_score


class TestBayes:
    def test_symmetric_boundary_at_zero(self):
        clf = BayesClassifier.from_dict(
            {
                "classes": ["neg", "pos"],
                "means": [[-1.0], [1.0]],
                "covariances": [[[1.0]], [[1.0]]],
                "priors": [0.5, 0.5],
            }
        )
        assert clf.predict([[-0.01]])[0] == "neg"
        assert clf.predict([[0.01]])[0] == "pos"

    def test_prior_shifts_boundary(self):
        # equal unit variances: boundary moves to log(p0/p1)/2 toward the rare class
        clf = BayesClassifier.from_dict(
            {
                "classes": ["common", "rare"],
                "means": [[-1.0], [1.0]],
                "covariances": [[[1.0]], [[1.0]]],
                "priors": [0.9, 0.1],
            }
        )
        boundary = math.log(9) / 2  # where discriminants tie
        assert clf.predict([[boundary - 0.01]])[0] == "common"
        assert clf.predict([[boundary + 0.01]])[0] == "rare"

    def test_error_close_to_monte_carlo_bayes_error(self):
        rng = np.random.default_rng(11)
        mu0, mu1 = np.array([0.0, 0.0]), np.array([2.0, 1.0])
        cov0 = np.array([[1.0, 0.3], [0.3, 1.0]])
        cov1 = np.array([[2.0, -0.4], [-0.4, 0.7]])
        X = np.vstack(
            [
                rng.multivariate_normal(mu0, cov0, 2000),
                rng.multivariate_normal(mu1, cov1, 2000),
            ]
        )
        y = np.array([0] * 2000 + [1] * 2000)
        cv = cross_validate(X, y, k=5, seed=0)

        # Monte-Carlo estimate of the optimal error from the true densities
        m = 100_000
        half = m // 2
        samples = np.vstack(
            [
                rng.multivariate_normal(mu0, cov0, half),
                rng.multivariate_normal(mu1, cov1, half),
            ]
        )
        labels = np.array([0] * half + [1] * half)

        def log_density(x, mu, cov):
            inv = np.linalg.inv(cov)
            d = x - mu
            maha = np.einsum("ij,jk,ik->i", d, inv, d)
            return -0.5 * maha - 0.5 * math.log(np.linalg.det(cov))

        pred = (
            log_density(samples, mu1, cov1) > log_density(samples, mu0, cov0)
        ).astype(int)
        bayes_err = float((pred != labels).mean())
        assert abs(cv.error_mean - bayes_err) <= 0.02

    def test_serialization_roundtrip(self):
        rng = np.random.default_rng(4)
        X, y = two_gaussians(rng, 30, 0.0, 3.0, dims=2)
        clf = BayesClassifier().fit(X, y)
        clone = BayesClassifier.from_dict(clf.to_dict(["f1", "f2"]))
        assert np.array_equal(clf.predict(X), clone.predict(X))

    def test_discriminant_shift_invariance(self):
        rng = np.random.default_rng(6)
        X, y = two_gaussians(rng, 25, 0.0, 2.0, dims=2)
        clf = BayesClassifier().fit(X, y)
        scores = clf.decision_function(X)
        pred_shifted = clf.classes_[np.argmax(scores + 123.45, axis=1)]
        assert np.array_equal(clf.predict(X), pred_shifted)

    def test_zero_regularization_needs_samples(self):
        X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]])
        y = np.array([0, 0, 1, 1])
        with pytest.raises(DegenerateLabelsError):
            BayesClassifier(regularization=0).fit(X, y)


class TestCrossValidation:
    def test_perfectly_separable(self):
        X = np.vstack([np.zeros((20, 1)), np.full((20, 1), 100.0)])
        X += np.random.default_rng(0).normal(0, 0.1, X.shape)
        y = np.array([0] * 20 + [1] * 20)
        cv = cross_validate(X, y, k=5, seed=1)
        assert cv.error_mean == 0.0 and cv.error_std == 0.0

    def test_permuted_labels_near_chance(self):
        rng = np.random.default_rng(5)
        X = rng.normal(0, 1, (400, 2))
        y = rng.permutation([0] * 200 + [1] * 200)
        cv = cross_validate(X, y, k=5, seed=2)
        assert abs(cv.error_mean - 0.5) < 0.1

    def test_leave_one_out_on_ten(self):
        rng = np.random.default_rng(8)
        X, y = two_gaussians(rng, 5, 0.0, 8.0)
        cv = cross_validate(X, y, k=5, seed=0, estimator=BayesClassifier(regularization=1e-3))
        assert len(cv.fold_errors) == 5

    def test_folds_deterministic_and_stratified(self):
        y = np.array([0] * 10 + [1] * 20)
        f1 = stratified_folds(y, 5, seed=42)
        f2 = stratified_folds(y, 5, seed=42)
        assert np.array_equal(f1, f2)
        for f in range(5):
            assert (y[f1 == f] == 0).sum() == 2
            assert (y[f1 == f] == 1).sum() == 4

    def test_small_class_raises(self):
        y = np.array([0] * 10 + [1] * 3)
        with pytest.raises(StratificationError):
            stratified_folds(y, 5)


def make_cascade():
    def stage(endpoint, positive, output):
        clf = BayesClassifier.from_dict(
            {
                "classes": ["negative", "positive"],
                "means": [[0.0], [10.0]],
                "covariances": [[[1.0]], [[1.0]]],
                "priors": [0.5, 0.5],
            }
        )
        return CascadeStage(endpoint, clf, [f"f_{endpoint}"], "positive", output)

    return CascadeModel(
        stages=[
            stage("coagulation", "positive", "coagulated"),
            stage("movement", "positive", "no-movement"),
            stage("heartbeat", "positive", "no-heartbeat"),
        ]
    )


class TestCascade:
    def test_first_stage_short_circuits(self):
        cascade = make_cascade()
        label = cascade.classify(
            {"f_coagulation": 10.0, "f_movement": 10.0, "f_heartbeat": 0.0}
        )
        assert label == "coagulated"
        assert cascade.counters == {"coagulation": 1}

    def test_all_negative_developed(self):
        cascade = make_cascade()
        label = cascade.classify(
            {"f_coagulation": 0.0, "f_movement": 0.0, "f_heartbeat": 0.0}
        )
        assert label == "developed"
        assert cascade.counters == {"coagulation": 1, "movement": 1, "heartbeat": 1}

    def test_missing_feature_names_stage(self):
        cascade = make_cascade()
        with pytest.raises(IncompleteFeaturesError) as exc:
            cascade.classify({"f_coagulation": 0.0})
        assert exc.value.stage == "movement"

    def test_partition_and_confusion_on_planted_wells(self):
        cascade = make_cascade()
        rng = np.random.default_rng(13)
        truth, predicted = [], []
        for _ in range(200):
            kind = rng.integers(0, 4)
            feats = {"f_coagulation": 0.0, "f_movement": 0.0, "f_heartbeat": 0.0}
            label = ["coagulated", "no-movement", "no-heartbeat", "developed"][kind]
            if kind < 3:
                feats[f"f_{['coagulation', 'movement', 'heartbeat'][kind]}"] = 10.0
            feats = {k: v + rng.normal(0, 1) for k, v in feats.items()}
            truth.append(label)
            predicted.append(cascade.classify(feats))
        counts = {lab: predicted.count(lab) for lab in cascade.labels()}
        assert sum(counts.values()) == 200  # partition property
        agree = sum(t == p for t, p in zip(truth, predicted))
        assert agree / 200 >= 0.95

    def test_serialization_roundtrip(self):
        cascade = make_cascade()
        clone = CascadeModel.from_dict(cascade.to_dict())
        feats = {"f_coagulation": 0.0, "f_movement": 10.0, "f_heartbeat": 0.0}
        assert clone.classify(feats) == cascade.classify(feats) == "no-movement"


def offset_dataset(seed=42, n=100, offset=8.0):
    rng = np.random.default_rng(seed)
    X, y, z = [], [], []
    for micro in ("1", "2"):
        for cls, mu in (("dead", 0.0), ("alive", 3.0)):
            pts = np.column_stack([rng.normal(mu, 1.0, n), rng.normal(0, 1.0, n)])
            if micro == "2":
                pts[:, 0] += offset
            X.append(pts)
            y += [cls] * n
            z += [micro] * n
    return np.vstack(X), np.asarray(y), np.asarray(z)


class TestWrapperNormalizer:
    def test_offset_disturbance_removed(self):
        X, y, z = offset_dataset()
        norm = WrapperNormalizer(alpha=0.8, seed=1).fit(X, y, z)
        r = norm.result_
        assert abs(r.xi_disturbance - 0.5) <= 0.1
        # plan error may not degrade by more than 2 points vs the start
        assert r.xi_plan >= r.xi_plan_before - 0.02

    def test_alpha_one_is_plan_only_wrapper(self):
        X, y, z = offset_dataset(seed=3)
        norm = WrapperNormalizer(alpha=1.0, seed=1, restarts=3).fit(X, y, z)
        assert norm.result_.xi_plan >= 0.9

    def test_clean_data_identity_not_worsened(self):
        rng = np.random.default_rng(12)
        X = np.vstack([rng.normal(0, 1, (60, 1)), rng.normal(4, 1, (60, 1))])
        y = np.array(["a"] * 60 + ["b"] * 60)
        z = np.asarray(list("12") * 60)
        norm = WrapperNormalizer(alpha=0.8, seed=0, restarts=2, max_iter=60).fit(X, y, z)
        r = norm.result_
        assert r.objective <= 0.8 * abs(r.xi_plan_before - 1.0) + 0.2 * abs(
            r.xi_disturbance_before - 0.5
        ) + 1e-9

    def test_alpha_range_enforced(self):
        X, y, z = offset_dataset(seed=5, n=20)
        with pytest.raises(ValueError):
            WrapperNormalizer(alpha=0.3).fit(X, y, z)

    def test_transform_applies_learned_correction(self):
        X, y, z = offset_dataset(seed=7)
        norm = WrapperNormalizer(alpha=0.8, seed=2, restarts=3).fit(X, y, z)
        Xc = norm.transform(X, z)
        # microscope-2 feature-0 mean moves toward microscope 1
        before_gap = abs(X[z == "2", 0].mean() - X[z == "1", 0].mean())
        after_gap = abs(Xc[z == "2", 0].mean() - Xc[z == "1", 0].mean())
        assert after_gap < before_gap / 4
