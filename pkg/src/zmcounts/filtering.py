"""Scalar generalized Kalman filter for latent intensity extraction.

The model in state-space form has observation ``Y_t = (1-omega)*lambda_t + eps_t``
with state-dependent noise variance, and AR(1) state
``lambda_t = rho*lambda_{t-1} + (1-rho)*mu + centered innovation``.  The filter
replaces the state-dependent observation variance by its stationary expectation
``(1-omega)*vbar`` and runs the usual predict/update recursion on the scalar
state:

    prediction   lhat_{t|t-1} = rho*lhat_{t-1|t-1} + (1-rho)*mu
    pred var     C_{t|t-1}    = rho^2*C_{t-1|t-1} + (1-rho^2)*sigma2
    gain         K_t = (1-omega)*C_{t|t-1} / ((1-omega)^2*C_{t|t-1} + (1-omega)*vbar)
    update       lhat_{t|t}   = lhat_{t|t-1} + K_t*(y_t - (1-omega)*lhat_{t|t-1})
    error var    C_{t|t}      = (1 - K_t*(1-omega))*C_{t|t-1}

The innovation ``h_t = y_t - (1-omega)*lhat_{t|t-1}`` has conditional mean zero;
its variance recorded per step is ``J_t = (1-omega)^2*C_{t|t-1} + (1-omega)*vbar``,
the prediction-error variance implied by the same second-moment recursion (this
is what the sample variance of the innovations matches on simulated data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import EstimationError, InvalidSpecError
from .observation import CountFamily, ModelSpec, as_count_series

# floor applied if a linear update ever produced a non-positive intensity
CLAMP_EPS = 1e-6

# relative gain change below which the variance recursion is treated as converged
_GAIN_TOL = 1e-14


@dataclass(frozen=True)
class FilterState:
    """Filtered intensity and its unconditional error variance at one step."""

    lambda_filtered: float
    error_var: float


@dataclass(frozen=True)
class FilterStep:
    """Per-step internals of the recursion (prediction, gain, innovation)."""

    prediction: float
    pred_var: float
    gain: float
    innovation: float
    innovation_var: float
    clamped: bool = False


@dataclass
class FilterResult:
    """Array view of a full forward pass; index t aligns with the input series."""

    lambda_filtered: np.ndarray
    error_var: np.ndarray
    prediction: np.ndarray
    pred_var: np.ndarray
    gain: np.ndarray
    innovation: np.ndarray
    innovation_var: np.ndarray
    clamped: np.ndarray

    def state(self, t: int) -> FilterState:
        return FilterState(float(self.lambda_filtered[t]), float(self.error_var[t]))

    def step(self, t: int) -> FilterStep:
        return FilterStep(
            prediction=float(self.prediction[t]),
            pred_var=float(self.pred_var[t]),
            gain=float(self.gain[t]),
            innovation=float(self.innovation[t]),
            innovation_var=float(self.innovation_var[t]),
            clamped=bool(self.clamped[t]),
        )

    def __len__(self) -> int:
        return len(self.lambda_filtered)


def vbar(spec: ModelSpec) -> float:
    """Expected conditional count variance divided by (1-omega).

    ZMP:        mu + omega*(sigma2 + mu^2)
    ZMNB c=0:   (1+a)*mu + omega*(sigma2 + mu^2)
    ZMNB c=1:   mu + (omega+a)*(sigma2 + mu^2)
    """
    w, a, c = spec.params.omega, spec.params.a, spec.params.c
    mu, s2 = spec.params.mu_lambda, spec.params.sigma2_lambda
    return vbar_from(spec.family, w, mu, s2, a, c)


def vbar_from(family: CountFamily, omega, mu, sigma2, a=0.0, c=1) -> float:
    """vbar evaluated at explicit moment values (used at trial parameter points)."""
    m2 = sigma2 + mu**2
    if family == CountFamily.ZMP or a == 0.0:
        return mu + omega * m2
    if c == 0:
        return (1.0 + a) * mu + omega * m2
    return mu + (omega + a) * m2


def gkf_init(spec: ModelSpec, lambda0: float | None = None) -> tuple[float, float]:
    """Step-1 prior: prediction rho*lambda0 + (1-rho)*mu and variance (1-rho^2)*sigma2.

    ``lambda0`` defaults to the stationary mean.
    """
    rho = spec.params.rho
    mu, s2 = spec.params.mu_lambda, spec.params.sigma2_lambda
    lam0 = mu if lambda0 is None else float(lambda0)
    if lam0 <= 0:
        raise InvalidSpecError(f"lambda0 must be positive, got {lam0}")
    return rho * lam0 + (1.0 - rho) * mu, (1.0 - rho**2) * s2


def gkf_step(prev: FilterState, y: float, spec: ModelSpec) -> tuple[FilterState, FilterStep]:
    """One predict/update cycle from the previous filtered state."""
    w, rho = spec.params.omega, spec.params.rho
    mu, s2 = spec.params.mu_lambda, spec.params.sigma2_lambda
    vb = vbar(spec)
    if vb <= 0:
        raise EstimationError(f"vbar must be positive for filtering, got {vb:.6g}")
    pred = rho * prev.lambda_filtered + (1.0 - rho) * mu
    cp = rho**2 * prev.error_var + (1.0 - rho**2) * s2
    denom = (1.0 - w) ** 2 * cp + (1.0 - w) * vb
    gain = (1.0 - w) * cp / denom if denom > 0 else 0.0
    innovation = y - (1.0 - w) * pred
    lam_f = pred + gain * innovation
    cf = (1.0 - gain * (1.0 - w)) * cp
    clamped = lam_f <= 0
    if clamped:
        lam_f = CLAMP_EPS
    state = FilterState(lam_f, cf)
    step = FilterStep(
        prediction=pred,
        pred_var=cp,
        gain=gain,
        innovation=innovation,
        innovation_var=denom,
        clamped=clamped,
    )
    return state, step


def variance_path(
    n: int, omega: float, rho: float, sigma2: float, vb: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Data-independent variance recursion: (C_{t|t-1}, K_t, J_t, C_{t|t}) arrays.

    The recursion contracts geometrically, so it is iterated only until the
    gain stabilizes and then held at its fixed point.
    """
    if vb <= 0:
        raise EstimationError(f"vbar must be positive for filtering, got {vb:.6g}")
    cp = np.empty(n)
    gain = np.empty(n)
    jvar = np.empty(n)
    cf = np.empty(n)
    one_w = 1.0 - omega
    c_prev = 0.0  # so that C_{1|0} = (1-rho^2)*sigma2 exactly
    k_last = np.inf
    for t in range(n):
        c_pred = rho**2 * c_prev + (1.0 - rho**2) * sigma2
        denom = one_w**2 * c_pred + one_w * vb
        k = one_w * c_pred / denom
        cp[t] = c_pred
        gain[t] = k
        jvar[t] = denom
        c_prev = (1.0 - k * one_w) * c_pred
        cf[t] = c_prev
        if abs(k - k_last) <= _GAIN_TOL * max(k, 1e-300):
            cp[t + 1 :] = c_pred
            gain[t + 1 :] = k
            jvar[t + 1 :] = denom
            cf[t + 1 :] = c_prev
            break
        k_last = k
    return cp, gain, jvar, cf


def forward_pass(
    yf: np.ndarray, omega: float, rho: float, mu: float, sigma2: float, vb: float,
    lam0: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Array-level filter core: (lam_f, cf, cp, gain, jvar, clamped).

    Exact recursion; the constant-gain tail (after the variance recursion has
    stabilized) runs through a linear filter for speed.
    """
    n = len(yf)
    cp, gain, jvar, cf = variance_path(n, omega, rho, sigma2, vb)
    # lhat_{t|t} = (1 - K_t(1-w)) * (rho*lhat_{t-1} + (1-rho)*mu) + K_t*y_t
    shrink = 1.0 - gain * (1.0 - omega)
    const = shrink * (1.0 - rho) * mu + gain * yf
    lam_f = np.empty(n)
    prev = lam0
    moving = np.nonzero(np.diff(gain))[0]
    m = int(moving[-1] + 1) if moving.size else 0  # gain constant from index m on
    for t in range(min(m + 1, n)):
        prev = shrink[t] * rho * prev + const[t]
        lam_f[t] = prev
    if m + 1 < n:
        alpha = shrink[-1] * rho
        tail, _ = lfilter([1.0], [1.0, -alpha], const[m + 1 :], zi=[alpha * prev])
        lam_f[m + 1 :] = tail
    clamped = lam_f <= 0
    if np.any(clamped):
        # rare: redo sequentially applying the positivity floor
        prev = lam0
        for t in range(n):
            val = shrink[t] * (rho * prev + (1.0 - rho) * mu) + gain[t] * yf[t]
            if val <= 0:
                val = CLAMP_EPS
                clamped[t] = True
            else:
                clamped[t] = False
            lam_f[t] = val
            prev = val
    return lam_f, cf, cp, gain, jvar, clamped


def gkf_filter(
    series, spec: ModelSpec, lambda0: float | None = None
) -> FilterResult:
    """Full forward pass over a count series; deterministic given inputs."""
    y = as_count_series(series).astype(float)
    w, rho = spec.params.omega, spec.params.rho
    mu = spec.params.mu_lambda
    lam0 = mu if lambda0 is None else float(lambda0)
    if lam0 <= 0:
        raise InvalidSpecError(f"lambda0 must be positive, got {lam0}")
    lam_f, cf, cp, gain, jvar, clamped = forward_pass(
        y, w, rho, mu, spec.params.sigma2_lambda, vbar(spec), lam0
    )
    prediction = rho * np.concatenate([[lam0], lam_f[:-1]]) + (1.0 - rho) * mu
    innovation = y - (1.0 - w) * prediction
    return FilterResult(
        lambda_filtered=lam_f,
        error_var=cf,
        prediction=prediction,
        pred_var=cp,
        gain=gain,
        innovation=innovation,
        innovation_var=jvar,
        clamped=clamped,
    )
