"""Bayesian model-selection statistics for the forecaster sweep.

Two pieces of machinery: a linear regression of test errors on design
choices (architecture indicators, feature indicators, pattern length)
whose coefficient posteriors expose each choice's marginal effect, and
per-case log-normal fits of the error distribution whose posterior
predictive draws rank cases and flag the ones statistically
indistinguishable from the best. Sampling is plain random-walk
Metropolis with per-parameter steps tuned during burn-in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BURN_IN = 2000
KEPT_DRAWS = 8000
BETA_PRIOR_STD = 10.0
SIGMA_PRIOR_STD = 1.0

REGRESSORS = ("cnn", "rnn", "lstm", "time", "pattern", "past_w", "future_w", "id")


@dataclass(frozen=True)
class DesignObservation:
    """One swept design cell and its test temperature RMSE."""

    case_id: str
    arch: str                    # mlp | cnn | rnn | lstm
    uses_time: bool
    pattern_days: float
    uses_past_w: bool
    uses_future_w: bool
    uses_id: bool
    test_rmse: float

    def __post_init__(self):
        if self.arch not in ("mlp", "cnn", "rnn", "lstm"):
            raise ValueError("unknown architecture")
        if self.test_rmse <= 0:
            raise ValueError("test RMSE must be positive")

    def regressor_row(self) -> np.ndarray:
        return np.array([
            1.0,
            float(self.arch == "cnn"),
            float(self.arch == "rnn"),
            float(self.arch == "lstm"),
            float(self.uses_time),
            float(self.pattern_days),
            float(self.uses_past_w),
            float(self.uses_future_w),
            float(self.uses_id),
        ])


@dataclass
class PosteriorSamples:
    names: tuple[str, ...]
    draws: np.ndarray            # (n_draws, n_params)
    acceptance: float

    def __post_init__(self):
        if len(self.draws) < 4000:
            raise ValueError("need at least 4000 post-burn-in draws")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("non-finite posterior draws")

    def prob_negative(self, name: str) -> float:
        j = self.names.index(name)
        return float(np.mean(self.draws[:, j] < 0.0))

    def mean(self, name: str) -> float:
        return float(self.draws[:, self.names.index(name)].mean())

    def interval(self, name: str, level: float = 0.95):
        j = self.names.index(name)
        a = (1.0 - level) / 2.0
        return tuple(np.quantile(self.draws[:, j], [a, 1.0 - a]))


def _metropolis(logpost, x0, steps, n_keep, burn_in, rng):
    """Random-walk Metropolis with component-wise step tuning during
    burn-in, targeting roughly 35 percent acceptance."""
    x = np.asarray(x0, dtype=float).copy()
    lp = logpost(x)
    d = len(x)
    steps = np.asarray(steps, dtype=float).copy()
    draws = np.zeros((n_keep, d))
    accepted = 0
    proposed = 0
    window_acc = 0
    window_n = 0
    for it in range(burn_in + n_keep):
        prop = x + steps * rng.standard_normal(d)
        lp_prop = logpost(prop)
        proposed += 1
        window_n += 1
        if np.log(rng.uniform()) < lp_prop - lp:
            x, lp = prop, lp_prop
            if it >= burn_in:
                accepted += 1
            window_acc += 1
        if it < burn_in and window_n == 100:
            rate = window_acc / window_n
            steps *= np.exp(0.5 * (rate - 0.35))
            window_acc = 0
            window_n = 0
        if it >= burn_in:
            draws[it - burn_in] = x
    return draws, accepted / n_keep


def fit_effect_regression(
    observations: list[DesignObservation], seed: int = 0
) -> PosteriorSamples:
    """Bayesian linear regression of test RMSE on design indicators.

    Priors: coefficients Normal(0, 10), noise scale HalfNormal(1).
    Columns without variation are rejected as unidentifiable.
    """
    if len(observations) < 3:
        raise ValueError("need at least 3 observations")
    X = np.stack([o.regressor_row() for o in observations])
    y = np.array([o.test_rmse for o in observations])
    names = ("intercept",) + REGRESSORS
    active = [0] + [j for j in range(1, X.shape[1]) if len(np.unique(X[:, j])) > 1]
    Xa = X[:, active]
    if np.linalg.matrix_rank(Xa) < Xa.shape[1]:
        raise ValueError("collinear design matrix; cannot separate effects")
    act_names = tuple(names[j] for j in active)
    n, p = Xa.shape

    def logpost(v):
        beta, log_sigma = v[:p], v[p]
        sigma = np.exp(log_sigma)
        resid = y - Xa @ beta
        loglike = -n * log_sigma - 0.5 * float(resid @ resid) / sigma ** 2
        logprior = (-0.5 * float(beta @ beta) / BETA_PRIOR_STD ** 2
                    - 0.5 * sigma ** 2 / SIGMA_PRIOR_STD ** 2 + log_sigma)
        return loglike + logprior

    rng = np.random.default_rng(seed)
    beta0, *_ = np.linalg.lstsq(Xa, y, rcond=None)
    x0 = np.concatenate([beta0, [np.log(max(np.std(y - Xa @ beta0), 1e-3))]])
    scale = max(float(np.std(y)), 1e-3)
    steps = np.full(p + 1, 0.1 * scale / np.sqrt(n))
    steps[p] = 0.1
    draws, acc = _metropolis(logpost, x0, steps, KEPT_DRAWS, BURN_IN, rng)
    return PosteriorSamples(act_names + ("log_sigma",), draws, acc)


def fit_lognormal(errors, seed: int = 0) -> PosteriorSamples:
    """Posterior of (mu, sigma) for log-normally distributed errors with
    Normal(0, 10) and HalfNormal(1) priors."""
    v = np.asarray(errors, dtype=float)
    if len(v) < 3:
        raise ValueError("need at least 3 error samples")
    if np.any(v <= 0):
        raise ValueError("errors must be positive")
    logv = np.log(v)
    n = len(v)

    def logpost(x):
        mu, log_sigma = x
        sigma = np.exp(log_sigma)
        resid = logv - mu
        loglike = -n * log_sigma - 0.5 * float(resid @ resid) / sigma ** 2
        logprior = (-0.5 * mu ** 2 / BETA_PRIOR_STD ** 2
                    - 0.5 * sigma ** 2 / SIGMA_PRIOR_STD ** 2 + log_sigma)
        return loglike + logprior

    rng = np.random.default_rng(seed)
    x0 = np.array([float(logv.mean()), float(np.log(max(logv.std(), 1e-3)))])
    steps = np.array([max(logv.std(), 0.05) / np.sqrt(n), 0.15])
    draws, acc = _metropolis(logpost, x0, steps, KEPT_DRAWS, BURN_IN, rng)
    return PosteriorSamples(("mu", "sigma_log"), draws, acc)


def posterior_predictive(fit: PosteriorSamples, rng: np.random.Generator) -> np.ndarray:
    """One predictive error draw per posterior draw of a log-normal fit."""
    mu = fit.draws[:, fit.names.index("mu")]
    sigma = np.exp(fit.draws[:, fit.names.index("sigma_log")])
    return np.exp(mu + sigma * rng.standard_normal(len(mu)))


def prob_better(c1: PosteriorSamples, c2: PosteriorSamples, seed: int = 0):
    """Monte-Carlo P(case-1 predictive error < case-2 predictive error),
    with its binomial standard error."""
    rng = np.random.default_rng(seed)
    d1 = posterior_predictive(c1, rng)
    d2 = posterior_predictive(c2, rng)
    n = min(len(d1), len(d2))
    p = float(np.mean(d1[:n] < d2[:n]))
    se = float(np.sqrt(max(p * (1 - p), 1e-12) / n))
    return p, se


def rank_cases(fits: dict[str, PosteriorSamples], seed: int = 0) -> dict:
    """Sort cases by posterior-predictive median and compare all of them
    to the best; probabilities inside [0.05, 0.95] mark cases that are
    statistically indistinguishable from it."""
    if len(fits) < 2:
        raise ValueError("need at least 2 cases to rank")
    rng = np.random.default_rng(seed)
    med = {}
    pred = {}
    for cid, fit in fits.items():
        draws = posterior_predictive(fit, rng)
        pred[cid] = draws
        med[cid] = float(np.median(draws))
    order = sorted(med, key=lambda c: med[c])
    best = order[0]
    rows = []
    for cid in order:
        if cid == best:
            p, se = 0.5, 0.0
        else:
            n = min(len(pred[best]), len(pred[cid]))
            p = float(np.mean(pred[best][:n] < pred[cid][:n]))
            se = float(np.sqrt(max(p * (1 - p), 1e-12) / n))
        rows.append({
            "case": cid,
            "median": med[cid],
            "iqr": float(np.subtract(*np.quantile(pred[cid], [0.75, 0.25]))),
            "p_best_better": p,
            "se": se,
            "indistinguishable": bool(cid == best or 0.05 <= p <= 0.95),
        })
    return {"best": best, "ranking": rows}
