"""Model-adequacy tooling: Pearson residuals, portmanteau tests, marginal fit.

All functions are pure; nothing here mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import chi2, nbinom, poisson

from .errors import EstimationError, InvalidSpecError
from .intensity import IntensityFamily
from .observation import (
    CountFamily,
    ModelSpec,
    Params,
    as_count_series,
    conditional_moments,
)


def pearson_residuals(
    series, filtered, params: Params, family: CountFamily = CountFamily.ZMP
) -> np.ndarray:
    """Standardized one-step residuals (y - (1-w)*lhat) / sqrt(Var(y|lhat)).

    The conditional variance uses the filtered intensity in place of the
    latent one; a non-positive variance anywhere is an error (it marks an
    infeasible omega at that intensity, not something to smooth over).
    """
    y = as_count_series(series).astype(float)
    lam = np.asarray(filtered, dtype=float)
    if lam.shape != y.shape:
        raise InvalidSpecError("filtered path must align with the series")
    if np.any(lam <= 0):
        raise InvalidSpecError("filtered intensities must be positive")
    mean, var = conditional_moments(family, lam, params)
    bad = np.nonzero(var <= 0)[0]
    if bad.size:
        raise EstimationError(
            f"non-positive residual variance at t={int(bad[0])} "
            f"(lambda={lam[bad[0]]:.6g}, omega={params.omega:.6g})"
        )
    return (y - mean) / np.sqrt(var)


def sample_acf_pacf(series, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Biased-denominator sample ACF and Durbin-Levinson PACF up to max_lag.

    Both returned arrays have length max_lag+1 with the lag-0 entry equal to 1.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= max_lag:
        raise InvalidSpecError(f"series length {n} must exceed max_lag {max_lag}")
    xc = x - x.mean()
    c0 = float(np.sum(xc**2)) / n
    if c0 == 0:
        raise EstimationError("ACF undefined for a constant series")
    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    for k in range(1, max_lag + 1):
        acf[k] = float(np.sum(xc[:-k] * xc[k:])) / n / c0
    # Durbin-Levinson recursion
    pacf = np.empty(max_lag + 1)
    pacf[0] = 1.0
    phi = np.zeros((max_lag + 1, max_lag + 1))
    for k in range(1, max_lag + 1):
        if k == 1:
            phi[1, 1] = acf[1]
        else:
            num = acf[k] - np.dot(phi[k - 1, 1:k], acf[k - 1 : 0 : -1])
            den = 1.0 - np.dot(phi[k - 1, 1:k], acf[1:k])
            phi[k, k] = num / den
            phi[k, 1:k] = phi[k - 1, 1:k] - phi[k, k] * phi[k - 1, k - 1 : 0 : -1]
        pacf[k] = phi[k, k]
    return acf, pacf


def ljung_box(series, max_lag: int) -> tuple[float, float]:
    """Ljung-Box portmanteau statistic and its chi-square(max_lag) p-value.

    Q = n(n+2) * sum_{k<=h} r_k^2/(n-k); degrees of freedom equal the lag
    count with no parameter-count correction.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    acf, _ = sample_acf_pacf(x, max_lag)
    ks = np.arange(1, max_lag + 1)
    q = n * (n + 2.0) * np.sum(acf[1:] ** 2 / (n - ks))
    return float(q), float(chi2.sf(q, df=max_lag))


def _modified_cdf_marginal(spec: ModelSpec, kmax: int, draws: int, rng) -> np.ndarray:
    """Monte-Carlo marginalization of the zero-modified law over the intensity
    marginal, via clipped modified CDFs (exact for feasible omega and equal to
    the sampler's boundary behaviour otherwise)."""
    pp = spec.params
    lam = rng.gamma(spec.intensity.p, 1.0 / spec.intensity.beta, draws)
    w = pp.omega
    cdf_prev = np.zeros(draws)
    out = np.empty(kmax + 1)
    for k in range(kmax + 1):
        if spec.family == CountFamily.ZMP:
            base = poisson.cdf(k, lam)
        else:
            r = lam ** (1 - pp.c) / pp.a
            base = nbinom.cdf(k, r, 1.0 / (1.0 + pp.a * lam**pp.c))
        cdf_k = np.clip(w + (1.0 - w) * base, 0.0, 1.0)
        out[k] = float(np.mean(cdf_k - cdf_prev))
        cdf_prev = cdf_k
    return out


def fitted_marginal_probs(
    spec: ModelSpec,
    kmax: int,
    mc_draws: int = 1_000_000,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Marginal P(Y=k) for k=0..kmax under the fitted model.

    The Poisson/gamma pair admits a closed form (a negative-binomial mixture
    with a zero-modification atom); every other combination is marginalized by
    Monte Carlo over the stationary intensity law.
    """
    pp = spec.params
    if spec.family == CountFamily.ZMP and spec.intensity.family == IntensityFamily.GAR1:
        k = np.arange(kmax + 1)
        b, p, w = pp.beta, pp.p, pp.omega
        log_base = (
            p * np.log(b)
            + gammaln(p + k)
            - gammaln(k + 1.0)
            - gammaln(p)
            - (p + k) * np.log(b + 1.0)
        )
        probs = (1.0 - w) * np.exp(log_base)
        probs[0] += w
        return probs
    rng = rng if rng is not None else np.random.default_rng(0)
    return _modified_cdf_marginal(spec, kmax, mc_draws, rng)


def empirical_probs(series, kmax: int) -> np.ndarray:
    """Relative frequencies of counts 0..kmax."""
    y = as_count_series(series)
    counts = np.bincount(y, minlength=kmax + 1)[: kmax + 1]
    return counts / len(y)


@dataclass
class ProbTable:
    """Fitted versus empirical marginal probabilities on 0..kmax."""

    support: np.ndarray
    fitted: np.ndarray
    empirical: np.ndarray
    fitted_tail: float

    @classmethod
    def build(
        cls,
        spec: ModelSpec,
        series,
        kmax: int | None = None,
        mc_draws: int = 1_000_000,
        rng: np.random.Generator | None = None,
    ) -> "ProbTable":
        y = as_count_series(series)
        kmax = int(y.max()) if kmax is None else kmax
        fitted = fitted_marginal_probs(spec, kmax, mc_draws=mc_draws, rng=rng)
        return cls(
            support=np.arange(kmax + 1),
            fitted=fitted,
            empirical=empirical_probs(y, kmax),
            fitted_tail=float(max(0.0, 1.0 - fitted.sum())),
        )
