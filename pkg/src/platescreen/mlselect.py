"""Feature relevance, Bayes classification, cross-validation, the endpoint
cascade and wrapper-based normalization against disturbance factors.

The classifier follows the scikit-learn estimator protocol (fit / predict /
get_params) so it composes with the wider ecosystem, but the discriminant
math (class-specific covariances, Mahalanobis distances) is implemented here.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.exceptions import NotFittedError

from .errors import (
    DegenerateLabelsError,
    IncompleteFeaturesError,
    NumericalError,
    StratificationError,
)
from .validation import check_labels, check_matrix

log = logging.getLogger(__name__)


@dataclass
class RelevanceTable:
    """Feature(-set) relevance scores in [0, 1], sorted descending."""

    rows: list  # (feature_names: tuple, score: float)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (-r[1], r[0]))

    def best(self):
        return self.rows[0]

    def to_json(self):
        return [{"features": list(names), "score": score} for names, score in self.rows]


def _class_partitions(y):
    y = np.asarray(y)
    classes = np.unique(y)
    return classes, [np.flatnonzero(y == c) for c in classes]


def anova_relevance(X, y, feature_names=None):
    """Single-feature relevance: between-class / total sum of squares.

    Scores live in [0, 1]; a feature identical across all samples scores 0.
    """
    X = check_matrix(X)
    y = check_labels(y, X.shape[0])
    classes, parts = _class_partitions(y)
    if len(classes) < 2:
        raise DegenerateLabelsError("need at least two classes")
    if any(len(p) < 2 for p in parts):
        raise DegenerateLabelsError("every class needs at least two samples")
    names = list(feature_names) if feature_names else [f"x{i+1}" for i in range(X.shape[1])]
    rows = []
    grand = X.mean(axis=0)
    ss_total = ((X - grand) ** 2).sum(axis=0)
    ss_between = np.zeros(X.shape[1])
    for p in parts:
        mu = X[p].mean(axis=0)
        ss_between += len(p) * (mu - grand) ** 2
    for j, name in enumerate(names):
        score = 0.0 if ss_total[j] == 0 else float(ss_between[j] / ss_total[j])
        rows.append(((name,), min(max(score, 0.0), 1.0)))
    return RelevanceTable(rows)


def _scatter_matrices(X, y):
    classes, parts = _class_partitions(y)
    grand = X.mean(axis=0)
    total = (X - grand).T @ (X - grand)
    within = np.zeros_like(total)
    for p in parts:
        mu = X[p].mean(axis=0)
        within += (X[p] - mu).T @ (X[p] - mu)
    return within, total


def wilks_lambda(X, y, rcond=1e-10):
    """Within/total generalized variance ratio on the non-degenerate subspace.

    Directions with (near-)zero total scatter are projected out first, so
    perfectly collinear feature pairs reduce to their common subspace instead
    of producing 0/0. Returns None when no direction carries any scatter.
    """
    within, total = _scatter_matrices(X, y)
    evals, evecs = np.linalg.eigh(total)
    keep = evals > rcond * max(evals.max(), 1e-300)
    if not keep.any():
        return None
    basis = evecs[:, keep]
    t_p = basis.T @ total @ basis
    w_p = basis.T @ within @ basis
    det_t = np.linalg.det(t_p)
    if det_t <= 0:
        return None
    return float(np.linalg.det(w_p) / det_t)


def manova_pair_search(X, y, anchor, feature_names=None):
    """Relevance of (anchor, partner) pairs: 1 - Wilks' lambda, sorted descending.

    Pairs whose scatter is fully degenerate are skipped with a log diagnostic.
    """
    X = check_matrix(X)
    y = check_labels(y, X.shape[0])
    if X.shape[1] < 2:
        raise ValueError("need at least two features for a pair search")
    names = list(feature_names) if feature_names else [f"x{i+1}" for i in range(X.shape[1])]
    if anchor not in names:
        raise ValueError(f"anchor feature {anchor!r} not among {names}")
    ai = names.index(anchor)
    rows = []
    for j, partner in enumerate(names):
        if j == ai:
            continue
        lam = wilks_lambda(X[:, [ai, j]], y)
        if lam is None:
            log.warning("skipping pair (%s, %s): singular scatter", anchor, partner)
            continue
        rows.append(((anchor, partner), min(max(1.0 - lam, 0.0), 1.0)))
    return RelevanceTable(rows)


class BayesClassifier(ClassifierMixin, BaseEstimator):
    """Gaussian Bayes classifier with class-specific covariance matrices.

    Discriminant per class: -1/2 Mahalanobis^2 - 1/2 log det(cov) + log prior.
    Covariances are regularized with ``regularization * I``; the default
    (None) uses 1e-6 * trace(cov) / n_features per class.

    Parameters
    ----------
    regularization : float or None
        Additive ridge on the covariance diagonals.
    uniform_priors : bool
        Ignore training frequencies and use equal priors.
    """

    def __init__(self, regularization=None, uniform_priors=False):
        self.regularization = regularization
        self.uniform_priors = uniform_priors

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_labels(y, X.shape[0])
        classes, parts = _class_partitions(y)
        if len(classes) < 2:
            raise DegenerateLabelsError("need at least two classes")
        s = X.shape[1]
        self.classes_ = classes
        self.means_ = []
        self.covariances_ = []
        self.priors_ = []
        self._chols = []
        for p in parts:
            n_c = len(p)
            delta = self.regularization
            if delta == 0 and n_c <= s:
                raise DegenerateLabelsError(
                    f"a class has only {n_c} samples for {s} features; "
                    "set regularization > 0"
                )
            mu = X[p].mean(axis=0)
            centered = X[p] - mu
            cov = centered.T @ centered / max(n_c - 1, 1)
            if delta is None:
                delta = 1e-6 * max(np.trace(cov), 1e-12) / s
            cov = cov + delta * np.eye(s)
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"covariance of class {classes[len(self.means_)]} not positive "
                    f"definite (cond={np.linalg.cond(cov):.3g})"
                ) from exc
            self.means_.append(mu)
            self.covariances_.append(cov)
            self._chols.append(chol)
            self.priors_.append(n_c / X.shape[0])
        if self.uniform_priors:
            self.priors_ = [1.0 / len(classes)] * len(classes)
        self.priors_ = np.asarray(self.priors_)
        self.n_features_in_ = s
        return self

    def _check_fitted(self):
        if not hasattr(self, "classes_"):
            raise NotFittedError("BayesClassifier is not fitted")

    def decision_function(self, X):
        """Per-class discriminant values, shape (n_samples, n_classes)."""
        self._check_fitted()
        X = check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, classifier was fit with {self.n_features_in_}"
            )
        out = np.empty((X.shape[0], len(self.classes_)))
        for c, (mu, chol, prior) in enumerate(
            zip(self.means_, self._chols, self.priors_)
        ):
            diff = (X - mu).T
            sol = np.linalg.solve(chol, diff)
            maha2 = (sol**2).sum(axis=0)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, c] = -0.5 * maha2 - 0.5 * logdet + np.log(prior)
        return out

    def predict(self, X):
        """Most plausible class; ties resolve to the lower class index."""
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def to_dict(self, feature_names=None):
        self._check_fitted()
        return {
            "type": "bayes",
            "classes": [c.item() if hasattr(c, "item") else c for c in self.classes_],
            "means": [m.tolist() for m in self.means_],
            "covariances": [c.tolist() for c in self.covariances_],
            "priors": self.priors_.tolist(),
            "features": list(feature_names) if feature_names else None,
        }

    @classmethod
    def from_dict(cls, d):
        clf = cls()
        clf.classes_ = np.asarray(d["classes"])
        clf.means_ = [np.asarray(m, dtype=np.float64) for m in d["means"]]
        clf.covariances_ = [np.asarray(c, dtype=np.float64) for c in d["covariances"]]
        clf._chols = [np.linalg.cholesky(c) for c in clf.covariances_]
        clf.priors_ = np.asarray(d["priors"], dtype=np.float64)
        clf.n_features_in_ = clf.means_[0].shape[0]
        return clf


def stratified_folds(y, k, seed=0):
    """Deterministic stratified fold assignment (round-robin after a shuffle)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < k:
            raise StratificationError(
                f"class {c!r} has {len(idx)} samples, fewer than k={k}"
            )
        idx = rng.permutation(idx)
        folds[idx] = np.arange(len(idx)) % k
    return folds


@dataclass
class CrossValidationResult:
    error_mean: float
    error_std: float
    fold_errors: list

    def to_json(self):
        return {
            "error_mean": self.error_mean,
            "error_std": self.error_std,
            "fold_errors": list(self.fold_errors),
        }


def cross_validate(X, y, k=5, estimator=None, seed=0):
    """Stratified k-fold misclassification estimate: mean and std over folds."""
    X = check_matrix(X)
    y = check_labels(y, X.shape[0])
    base = estimator if estimator is not None else BayesClassifier()
    folds = stratified_folds(y, k, seed=seed)
    errors = []
    for f in range(k):
        test = folds == f
        clf = clone(base)
        clf.fit(X[~test], y[~test])
        pred = clf.predict(X[test])
        errors.append(float(np.mean(pred != y[test])))
    errors = np.asarray(errors)
    return CrossValidationResult(
        error_mean=float(errors.mean()),
        error_std=float(errors.std()),
        fold_errors=errors.tolist(),
    )


DEVELOPED = "developed"

ENDPOINT_LABELS = {
    "coagulation": "coagulated",
    "movement": "no-movement",
    "heartbeat": "no-heartbeat",
}


@dataclass
class CascadeStage:
    endpoint: str
    classifier: BayesClassifier
    feature_names: list
    positive_class: str
    output_label: str


@dataclass
class CascadeModel:
    """Ordered endpoint classifiers; the first positive endpoint wins.

    A well positive at an early stage never reaches later stages, so e.g. a
    coagulated well receives no movement or heartbeat prediction. Evaluation
    counts per stage are kept for instrumentation.
    """

    stages: list
    counters: dict = field(default_factory=dict)

    def classify(self, feature_vector):
        """feature_vector: mapping feature name -> value. Returns the label."""
        for stage in self.stages:
            row = []
            for name in stage.feature_names:
                if name not in feature_vector:
                    raise IncompleteFeaturesError(stage.endpoint, name)
                row.append(feature_vector[name])
            self.counters[stage.endpoint] = self.counters.get(stage.endpoint, 0) + 1
            pred = stage.classifier.predict(np.asarray([row]))[0]
            if str(pred) == str(stage.positive_class):
                return stage.output_label
        return DEVELOPED

    def labels(self):
        return [s.output_label for s in self.stages] + [DEVELOPED]

    def to_dict(self):
        return {
            "type": "cascade",
            "stages": [
                {
                    "endpoint": s.endpoint,
                    "classifier": s.classifier.to_dict(s.feature_names),
                    "features": list(s.feature_names),
                    "positive_class": s.positive_class,
                    "output_label": s.output_label,
                }
                for s in self.stages
            ],
        }

    @classmethod
    def from_dict(cls, d):
        stages = [
            CascadeStage(
                endpoint=s["endpoint"],
                classifier=BayesClassifier.from_dict(s["classifier"]),
                feature_names=list(s["features"]),
                positive_class=s["positive_class"],
                output_label=s["output_label"],
            )
            for s in d["stages"]
        ]
        return cls(stages=stages)


def cascade_classify(feature_vector, cascade):
    """Label of one well under the endpoint cascade."""
    return cascade.classify(feature_vector)


def _mean_accuracy(X, y, k, seed):
    try:
        res = cross_validate(X, y, k=k, seed=seed)
    except (StratificationError, DegenerateLabelsError, NumericalError):
        return float("nan")
    return 1.0 - res.error_mean


@dataclass
class WrapperNormalizationResult:
    corrections: dict  # disturbance class -> (gain per feature, offset per feature)
    objective: float
    xi_plan: float
    xi_disturbance: float
    xi_plan_before: float
    xi_disturbance_before: float
    target_disturbance: float


class WrapperNormalizer(BaseEstimator):
    """Feature normalization that erases disturbance-class separability.

    Learns per-disturbance-class affine corrections (gain and offset per
    feature, the first class acts as fixed reference) by minimizing

        alpha * |xi_plan - 1| + (1 - alpha) * |xi_dist - xi_dist_target|

    where both xi values are cross-validated Bayes classification accuracies
    on plan and disturbance labels. The search is a derivative-free simplex
    with random restarts; candidates with non-finite objectives are rejected.
    """

    def __init__(self, alpha=0.8, cv_folds=5, max_iter=200, restarts=5, seed=0):
        self.alpha = alpha
        self.cv_folds = cv_folds
        self.max_iter = max_iter
        self.restarts = restarts
        self.seed = seed

    def _apply(self, X, z, params, dist_classes):
        Xc = X.copy()
        n_feat = X.shape[1]
        for ci, c in enumerate(dist_classes[1:]):
            gains = params[ci * 2 * n_feat : ci * 2 * n_feat + n_feat]
            offsets = params[ci * 2 * n_feat + n_feat : (ci + 1) * 2 * n_feat]
            rows = z == c
            Xc[rows] = Xc[rows] * gains + offsets
        return Xc

    def fit(self, X, y_plan, z_dist):
        if not 0.5 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0.5, 1]")
        X = check_matrix(X)
        y = check_labels(y_plan, X.shape[0], "y_plan")
        z = check_labels(z_dist, X.shape[0], "z_dist")
        dist_classes = list(np.unique(z))
        if len(dist_classes) < 2:
            raise DegenerateLabelsError("need at least two disturbance classes")
        n_feat = X.shape[1]
        n_params = (len(dist_classes) - 1) * 2 * n_feat
        target_z = 1.0 / len(dist_classes)
        scale = X.std(axis=0, ddof=1)
        scale[scale == 0] = 1.0

        def objective(params):
            Xc = self._apply(X, z, params, dist_classes)
            xi_y = _mean_accuracy(Xc, y, self.cv_folds, self.seed)
            xi_z = _mean_accuracy(Xc, z, self.cv_folds, self.seed)
            if not (np.isfinite(xi_y) and np.isfinite(xi_z)):
                return 1e6
            return self.alpha * abs(xi_y - 1.0) + (1.0 - self.alpha) * abs(
                xi_z - target_z
            )

        identity = np.concatenate(
            [np.concatenate([np.ones(n_feat), np.zeros(n_feat)])]
            * (len(dist_classes) - 1)
        )
        self.xi_plan_before_ = _mean_accuracy(X, y, self.cv_folds, self.seed)
        self.xi_disturbance_before_ = _mean_accuracy(X, z, self.cv_folds, self.seed)

        # moment-matching warm starts: align each disturbance class's feature
        # moments with the reference class, by offset only and by gain+offset
        ref_rows = z == dist_classes[0]
        mu_ref = X[ref_rows].mean(axis=0)
        sd_ref = X[ref_rows].std(axis=0, ddof=1)
        shift_start, affine_start = identity.copy(), identity.copy()
        for ci, c in enumerate(dist_classes[1:]):
            rows = z == c
            mu_c = X[rows].mean(axis=0)
            sd_c = X[rows].std(axis=0, ddof=1)
            base = ci * 2 * n_feat
            shift_start[base + n_feat : base + 2 * n_feat] = mu_ref - mu_c
            gains = np.where(sd_c > 0, sd_ref / np.maximum(sd_c, 1e-12), 1.0)
            affine_start[base : base + n_feat] = gains
            affine_start[base + n_feat : base + 2 * n_feat] = mu_ref - gains * mu_c

        rng = np.random.default_rng(self.seed)
        starts = [identity, shift_start, affine_start]
        while len(starts) < max(self.restarts, len(starts)):
            jittered = identity.copy()
            for ci in range(len(dist_classes) - 1):
                base = ci * 2 * n_feat
                jittered[base : base + n_feat] += rng.normal(0.0, 0.25, n_feat)
                jittered[base + n_feat : base + 2 * n_feat] += (
                    rng.normal(0.0, 0.5, n_feat) * scale
                )
            starts.append(jittered)

        best_params, best_obj = identity, objective(identity)
        for start in starts:
            res = minimize(
                objective,
                start,
                method="Nelder-Mead",
                options={"maxiter": self.max_iter, "xatol": 1e-3, "fatol": 1e-4},
            )
            if np.isfinite(res.fun) and res.fun < best_obj:
                best_params, best_obj = res.x, res.fun

        self.dist_classes_ = dist_classes
        self.params_ = best_params
        Xc = self._apply(X, z, best_params, dist_classes)
        self.result_ = WrapperNormalizationResult(
            corrections={
                str(c): (
                    best_params[i * 2 * n_feat : i * 2 * n_feat + n_feat].tolist(),
                    best_params[i * 2 * n_feat + n_feat : (i + 1) * 2 * n_feat].tolist(),
                )
                for i, c in enumerate(dist_classes[1:])
            },
            objective=float(best_obj),
            xi_plan=_mean_accuracy(Xc, y, self.cv_folds, self.seed),
            xi_disturbance=_mean_accuracy(Xc, z, self.cv_folds, self.seed),
            xi_plan_before=self.xi_plan_before_,
            xi_disturbance_before=self.xi_disturbance_before_,
            target_disturbance=target_z,
        )
        return self

    def transform(self, X, z_dist):
        if not hasattr(self, "params_"):
            raise NotFittedError("WrapperNormalizer is not fitted")
        X = check_matrix(X)
        z = check_labels(z_dist, X.shape[0], "z_dist")
        return self._apply(X, z, self.params_, self.dist_classes_)


def wrapper_normalize(X, y_plan, z_dist, alpha=0.8, **kwargs):
    """Convenience wrapper returning the fitted normalizer's result report."""
    norm = WrapperNormalizer(alpha=alpha, **kwargs).fit(X, y_plan, z_dist)
    return norm, norm.result_
