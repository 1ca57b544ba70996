"""Assay-quality statistics, dose-response regression and throughput estimation."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class AssayMetrics:
    """Quality parameters of a group of control/condition measurements.

    Metrics whose preconditions fail (zero denominators) are None; the
    others are still computed. ``cv`` is per group, in percent.
    """

    cv: dict
    snr: float | None
    shv: float | None
    sf: float | None
    zprime: float | None
    msr: float | None

    def to_json(self):
        return {
            "cv": dict(self.cv),
            "snr": self.snr,
            "shv": self.shv,
            "sf": self.sf,
            "zprime": self.zprime,
            "msr": self.msr,
        }


def validation_metrics(groups, sigma_log_potency=None, pair_by_mean=False):
    """CV, SNR, SHV, SF, Z' and MSR of per-condition sample groups.

    ``groups`` maps a condition name to its samples (each with >= 2 values).
    mu_max / mu_min come from the groups with the largest / smallest mean.
    By default sigma_max / sigma_min are the largest / smallest group standard
    deviations regardless of which group has the extreme mean;
    ``pair_by_mean=True`` instead takes the deviations of the mean-extremal
    groups. MSR needs the standard deviation of log10 potencies across runs
    (``sigma_log_potency``).
    """
    if len(groups) < 1:
        raise ValueError("need at least one group")
    stats = {}
    for name, samples in groups.items():
        arr = np.asarray(samples, dtype=np.float64)
        if arr.size < 2:
            raise ValueError(f"group {name!r} needs at least two samples")
        stats[name] = (float(arr.mean()), float(arr.std(ddof=1)))

    cv = {
        name: (s / m * 100.0 if m != 0 else None) for name, (m, s) in stats.items()
    }

    snr = shv = sf = zprime = None
    if len(stats) >= 2:
        by_mean = sorted(stats.items(), key=lambda kv: kv[1][0])
        (_, (mu_min, s_of_min)), (_, (mu_max, s_of_max)) = by_mean[0], by_mean[-1]
        if pair_by_mean:
            s_min, s_max = s_of_min, s_of_max
        else:
            sigmas = sorted(s for _, s in stats.values())
            s_min, s_max = sigmas[0], sigmas[-1]
        if s_min != 0:
            snr = (mu_max - mu_min) / s_min
        if mu_min != 0:
            shv = mu_max / mu_min
        if s_max != 0:
            sf = (mu_max - mu_min - 3.0 * (s_max + s_min)) / s_max
        if mu_max != mu_min:
            zprime = 1.0 - 3.0 * (s_max + s_min) / abs(mu_max - mu_min)

    msr = None
    if sigma_log_potency is not None:
        msr = 10.0 ** (2.0 * sigma_log_potency)
    return AssayMetrics(cv=cv, snr=snr, shv=shv, sf=sf, zprime=zprime, msr=msr)


@dataclass
class DoseResponseFit:
    """Four-parameter sigmoid fit: effect levels, inflection and slope.

    The sign of the Hill coefficient ``d`` encodes the direction of the
    curve; ``p_min`` and ``p_max`` are canonicalized so p_min <= p_max.
    """

    p_min: float
    p_max: float
    ec_x: float
    d: float
    residual_sse: float
    converged: bool
    n_iter: int
    covariance: np.ndarray | None = None
    sse_history: list = None

    def predict(self, conc):
        z = np.asarray(conc, dtype=np.float64)
        return sigmoid_response(z, self.p_min, self.p_max, self.ec_x, self.d)

    def to_json(self):
        return {
            "p_min": self.p_min,
            "p_max": self.p_max,
            "ec_x": self.ec_x,
            "d": self.d,
            "residual_sse": self.residual_sse,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def sigmoid_response(conc, p_min, p_max, ec_x, d):
    """y = p_min + (p_max - p_min) / (1 + (conc / ec_x)^d)."""
    z = np.asarray(conc, dtype=np.float64)
    return p_min + (p_max - p_min) / (1.0 + (z / ec_x) ** d)


def _normalize_effect(effect):
    arr = np.asarray(effect, dtype=np.float64)
    if arr.max() > 1.5:  # values given in percent
        return arr / 100.0
    return arr


def fit_dose_response(conc, effect, init=None, max_iter=200, rel_tol=1e-10):
    """Least-squares four-parameter sigmoid fit via damped Gauss-Newton.

    Works in log-concentration space. Without an explicit ``init``
    (= (p_min, p_max, ec, d)) the fit multi-starts from the data min/max,
    the geometric median concentration and several slope magnitudes with
    the sign of the data trend, keeping the lowest-residual solution.
    Effects may be fractions or percents. Flat data leaves the fit flagged
    as not converged.
    """
    z = np.asarray(conc, dtype=np.float64)
    y = _normalize_effect(effect)
    if z.ndim != 1 or z.shape != y.shape:
        raise ValueError("conc and effect must be 1-D and equally long")
    if np.any(z <= 0):
        raise ValueError("concentrations must be positive")
    if len(np.unique(z)) < 4:
        raise ValueError("need at least 4 distinct concentrations (4 parameters)")

    if init is None:
        slope = np.polyfit(np.log(z), y, 1)[0]
        sign = -1.0 if slope >= 0 else 1.0  # d < 0 gives a rising curve
        ec0 = float(np.exp(np.median(np.log(z))))
        fits = [
            fit_dose_response(
                z, y, init=(float(y.min()), float(y.max()), ec0, sign * mag),
                max_iter=max_iter, rel_tol=rel_tol,
            )
            for mag in (1.0, 2.0, 4.0, 8.0)
        ]
        return min(fits, key=lambda f: f.residual_sse)

    log_z = np.log(z)
    p_min, p_max, ec, d = init
    theta = np.array([p_min, p_max, math.log(ec), d], dtype=np.float64)

    def residuals(t):
        p_lo, p_hi, log_ec, d = t
        u = np.exp(np.clip(d * (log_z - log_ec), -500, 500))
        return y - (p_lo + (p_hi - p_lo) / (1.0 + u))

    def jacobian(t):
        p_lo, p_hi, log_ec, d = t
        # u/(1+u)^2 underflows gracefully when evaluated via the logistic s
        u = np.exp(np.clip(d * (log_z - log_ec), -350, 350))
        s = 1.0 / (1.0 + u)
        j = np.empty((len(z), 4))
        j[:, 0] = -(1.0 - s)
        j[:, 1] = -s
        core = (p_hi - p_lo) * u * s * s
        j[:, 2] = -core * d
        j[:, 3] = core * (log_z - log_ec)
        return j

    sse = float((residuals(theta) ** 2).sum())
    sse_history = [sse]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        r = residuals(theta)
        J = jacobian(theta)
        jtj = J.T @ J
        jtr = J.T @ r
        lam = 1e-8 * max(np.trace(jtj) / 4.0, 1e-12)
        try:
            step = np.linalg.solve(jtj + lam * np.eye(4), jtr)
        except np.linalg.LinAlgError:
            break
        # damping: halve the step until the residual does not grow
        accepted = False
        for _ in range(30):
            cand = theta - step
            cand_sse = float((residuals(cand) ** 2).sum())
            if cand_sse <= sse:
                theta, new_sse = cand, cand_sse
                accepted = True
                break
            step = step / 2.0
        if not accepted:
            break
        sse_history.append(new_sse)
        done = (
            new_sse == 0.0
            or np.max(np.abs(step)) < 1e-14
            or (sse > 0 and (sse - new_sse) / sse < rel_tol)
        )
        sse = new_sse
        if done:
            break

    p_lo, p_hi, log_ec, d = theta
    span = abs(p_hi - p_lo)
    identifiable = span > 1e-6 * max(1.0, abs(p_hi), abs(p_lo))
    converged = bool(identifiable and np.isfinite(sse))

    cov = None
    if converged:
        try:
            J = jacobian(theta)
            dof = max(len(z) - 4, 1)
            cov = np.linalg.inv(J.T @ J) * (sse / dof)
        except np.linalg.LinAlgError:
            cov = None

    if p_lo <= p_hi:
        p_min, p_max = float(p_lo), float(p_hi)
    else:  # canonicalize: swapping the levels mirrors the slope sign
        p_min, p_max, d = float(p_hi), float(p_lo), -d
    return DoseResponseFit(
        p_min=p_min,
        p_max=p_max,
        ec_x=float(math.exp(log_ec)),
        d=float(d),
        residual_sse=sse,
        converged=converged,
        n_iter=n_iter,
        covariance=cov,
        sse_history=sse_history,
    )


def estimate_acquisition_time(n_w, n_z, n_l, t_m1, t_m2, t_m3):
    """Plate acquisition time in seconds.

    n_w wells, n_z images per well and pass, n_l passes over the plate;
    t_m1 per image, t_m2 per well-to-well move, t_m3 per return to the
    plate start.
    """
    if min(n_w, n_z, n_l) < 1:
        raise ValueError("counts must be >= 1")
    if min(t_m1, t_m2, t_m3) < 0:
        raise ValueError("times must be >= 0")
    return n_w * n_z * n_l * t_m1 + (n_w - 1) * n_l * t_m2 + (n_l - 1) * t_m3
