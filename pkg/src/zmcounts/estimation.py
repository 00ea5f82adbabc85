"""Parameter estimation built on martingale estimating functions.

Everything revolves around the one-step prediction errors of the generalized
Kalman filter, ``h_t = y_t - (1-omega)*(rho*lhat_{t-1} + (1-rho)*mu)``, which
have conditional mean zero at the true parameters.  The classical weighted
component sums

    g*(i) = sum_t  (1-omega)*P_t/J_t^2 * dh_t/dtheta_i * h_t

are provided by :func:`ef_components`; note that their three instruments span
only a two-dimensional space (the m-instrument is an exact linear combination
of the constant and slope instruments), so the fitting loop closes the system
differently: it minimizes the innovation quasi-deviance ``sum(h^2/J + log J)``
over the intensity parameters, augmented by standardized whiteness and level
orthogonality conditions, with the zero-modification parameter tied to the
model's exact marginal zero-mass identity and the ZMNB dispersion solved from
an innovation-variance condition.  ``(beta, p)`` are recovered as
``beta = mu/sigma2``, ``p = mu*beta``.  Moment-based initializers (closed form
where available, grid search otherwise) provide starting points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import EstimationError, InfeasibleInitError, InvalidSpecError
from .filtering import forward_pass, gkf_filter, variance_path, vbar_from
from .intensity import IntensityFamily
from .observation import (
    CountFamily,
    ModelSpec,
    Params,
    as_count_series,
    conditional_moments,
    feasible_omega_interval,
    marginal_zero_prob,
    zm_quadratic_variance,
)

# feasibility floors used when projecting iterates back into the parameter space
_MU_MIN = 1e-4
_SIGMA2_MIN = 1e-6
_RHO_MAX = 0.999
_OMEGA_MAX = 0.999
_A_MIN = 1e-4
_JAC_STEP = 1e-5
_MAX_HALVINGS = 20
_BIG = 1e18


@dataclass
class SampleMoments:
    """Sample mean, variance, lag-1 ACF and first three factorial moments."""

    ybar: float
    s2: float
    r1: float
    factorial: tuple[float, float, float]

    @classmethod
    def from_series(cls, series) -> "SampleMoments":
        y = as_count_series(series).astype(float)
        ybar = float(y.mean())
        s2 = float(y.var(ddof=1)) if len(y) > 1 else 0.0
        yc = y - ybar
        denom = float(np.sum(yc**2))
        r1 = float(np.sum(yc[:-1] * yc[1:]) / denom) if denom > 0 else 0.0
        fac = (
            ybar,
            float(np.mean(y * (y - 1.0))),
            float(np.mean(y * (y - 1.0) * (y - 2.0))),
        )
        return cls(ybar=ybar, s2=s2, r1=r1, factorial=fac)


@dataclass
class EFSystem:
    """Estimating-function values and their numerical Jacobian at one theta."""

    components: np.ndarray
    jacobian: np.ndarray


@dataclass
class FitResult:
    """Outcome of the iterative filter/estimate loop."""

    params_hat: Params
    family: CountFamily
    intensity_family: IntensityFamily
    iterations: int
    converged: bool
    trace: list[Params]
    filtered: np.ndarray
    residuals: np.ndarray
    ef_norm: float
    se: dict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec.create(
            self.family,
            self.intensity_family,
            omega=self.params_hat.omega,
            rho=self.params_hat.rho,
            beta=self.params_hat.beta,
            p=self.params_hat.p,
            a=self.params_hat.a,
            c=self.params_hat.c,
        )

    def to_dict(self) -> dict:
        ph = self.params_hat
        return {
            "estimates": {
                "omega": ph.omega,
                "rho": ph.rho,
                "beta": ph.beta,
                "p": ph.p,
                "a": ph.a,
                "c": ph.c,
                "mu_lambda": ph.mu_lambda,
                "sigma2_lambda": ph.sigma2_lambda,
            },
            "se": self.se,
            "family": self.family.value,
            "intensity_family": self.intensity_family.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "ef_norm": self.ef_norm,
            "notes": self.notes,
            "trace": [
                {"omega": t.omega, "rho": t.rho, "beta": t.beta, "p": t.p, "a": t.a}
                for t in self.trace
            ],
        }


def _theta_params(omega, mu, rho, sigma2, a, c) -> Params:
    beta = mu / sigma2
    return Params(omega=omega, rho=rho, beta=beta, p=mu * beta, a=a, c=c)


def ef_components(
    series,
    filtered_prev,
    params: Params,
    family: CountFamily = CountFamily.ZMP,
    jacobian: bool = True,
) -> EFSystem:
    """Evaluate the (omega, mu, rho) estimating-function system.

    ``filtered_prev[t]`` holds the filtered intensity entering step t (i.e.
    lhat_{t-1|t-1}, with the initializing value in slot 0); it is treated as a
    constant with respect to the parameters.  The Jacobian is numerical
    (central differences, relative step 1e-5).
    """
    y = as_count_series(series).astype(float)
    prev = np.asarray(filtered_prev, dtype=float)
    if prev.shape != y.shape:
        raise InvalidSpecError("filtered_prev must align one-to-one with the series")
    sigma2 = params.sigma2_lambda
    a, c = params.a, params.c

    def components(theta):
        w, mu, rho = theta
        vb = vbar_from(family, w, mu, sigma2, a, c)
        if vb <= 0 or w >= 1.0:
            return np.full(3, np.inf)
        _, gain, jvar, _ = variance_path(len(y), w, rho, sigma2, vb)
        pt = gain * jvar  # (1-w) * C_{t|t-1}
        if np.any(jvar <= 0):
            raise EstimationError("degenerate estimating-function weights (J_t = 0)")
        weight = (1.0 - w) * pt / jvar**2
        m = rho * prev + (1.0 - rho) * mu
        h = y - (1.0 - w) * m
        wh = weight * h
        return np.array(
            [
                np.sum(wh * m),
                np.sum(wh) * (-(1.0 - w) * (1.0 - rho)),
                np.sum(wh * (-(1.0 - w)) * (prev - mu)),
            ]
        )

    theta0 = np.array([params.omega, params.mu_lambda, params.rho])
    g0 = components(theta0)
    if not jacobian:
        return EFSystem(components=g0, jacobian=np.full((3, 3), np.nan))
    jac = np.empty((3, 3))
    for i in range(3):
        step = _JAC_STEP * max(abs(theta0[i]), 1e-3)
        hi = theta0.copy()
        lo = theta0.copy()
        hi[i] += step
        lo[i] -= step
        jac[:, i] = (components(hi) - components(lo)) / (2.0 * step)
    return EFSystem(components=g0, jacobian=jac)


def estimate_sigma2(filtered, rho_hat: float, mu_hat: float) -> float:
    """Mean squared AR(1) residual of a positive path, scaled by 1/(1-rho^2).

    Consistent for the innovation-implied variance when applied to the latent
    intensities themselves; see the fitting loop for how the intensity
    variance is actually updated during estimation.
    """
    lam = np.asarray(filtered, dtype=float)
    if lam.size < 2:
        raise InvalidSpecError("need at least two filtered values")
    if not abs(rho_hat) < 1:
        raise InvalidSpecError(f"|rho| must be < 1, got {rho_hat}")
    resid = lam[1:] - rho_hat * lam[:-1] - (1.0 - rho_hat) * mu_hat
    return float(np.mean(resid**2) / (1.0 - rho_hat**2))


def sigma2_from_count_variance(
    s2: float, omega: float, mu: float, a: float = 0.0, c: int = 1,
    family: CountFamily = CountFamily.ZMP,
) -> float:
    """Invert the unconditional count-variance identity for sigma2_lambda."""
    base = s2 / (1.0 - omega)
    if family == CountFamily.ZMP or a == 0.0:
        return base - mu - omega * mu**2
    if c == 0:
        return base - (1.0 + a) * mu - omega * mu**2
    return (base - mu - (omega + a) * mu**2) / (1.0 + a)


def quadratic_ef_value(series, filtered, params: Params) -> float:
    """Quadratic estimating function for the dispersion at params.a.

    Sums ``-(1-w)*l^(1+c)/Var_Q * [(y-(1-w)l)^2 - Var(y|l)]`` over the series
    with the filtered intensities substituted for the latent ones; scaled by
    1/n.  Positive values indicate the dispersion parameter is too large.
    """
    y = as_count_series(series).astype(float)
    lam = np.asarray(filtered, dtype=float)
    w, c = params.omega, params.c
    mean, var = conditional_moments(CountFamily.ZMNB, lam, params)
    varq = zm_quadratic_variance(CountFamily.ZMNB, lam, params)
    if np.any(varq <= 0):
        raise EstimationError("degenerate quadratic-EF weights (Var_Q <= 0)")
    hq = (y - mean) ** 2 - var
    return float(np.sum(-(1.0 - w) * lam ** (1 + c) / varq * hq) / len(y))


def solve_quadratic_ef(
    series, filtered, params: Params, a_max: float = 10.0
) -> float:
    """Dispersion estimate: root of the quadratic estimating function in a.

    Root-finding is safeguarded bisection on (0, a_max]; a same-sign bracket
    at the lower end reports the boundary solution (the Poisson limit), at the
    upper end it is an error suggesting a larger a_max.
    """

    def g(a):
        return quadratic_ef_value(series, filtered, replace(params, a=a))

    g_lo = g(_A_MIN)
    g_hi = g(a_max)
    if g_lo == 0.0:
        return _A_MIN
    if g_lo * g_hi > 0:
        # the EF crosses zero from below as a sweeps up, so an all-positive
        # bracket puts the root at the lower boundary (the Poisson limit)
        if g_lo > 0:
            return _A_MIN
        raise EstimationError(
            f"quadratic EF has no sign change on ({_A_MIN}, {a_max}]; increase a_max"
        )
    return float(brentq(g, _A_MIN, a_max, xtol=1e-10))


def moment_init_ear1(moments: SampleMoments, c: int = 1) -> Params:
    """Closed-form moment initializer for the exponential-intensity model."""
    ybar, s2, r1 = moments.ybar, moments.s2, moments.r1
    if ybar <= 0:
        raise InfeasibleInitError("sample mean must be positive")
    z = (s2 / ybar - 1.0) / ybar
    if z <= -1.0:
        raise InfeasibleInitError(f"moment ratio z={z:.4g} <= -1")
    omega = (z - 1.0) / (z + 1.0)
    if omega >= 1.0:
        raise InfeasibleInitError(f"initial omega={omega:.4g} out of bounds")
    mu = ybar / (1.0 - omega)
    rho = r1 * (1.0 + (1.0 + omega) * mu) / ((1.0 - omega) * mu)
    if not 0.0 <= rho < 1.0:
        raise InfeasibleInitError(f"initial rho={rho:.4g} outside [0, 1)")
    if mu <= 0:
        raise InfeasibleInitError(f"initial mu={mu:.4g} not positive")
    return Params(omega=omega, rho=rho, beta=1.0 / mu, p=1.0, a=0.0, c=c)


def moment_init_gar1_factorial(moments: SampleMoments, c: int = 1) -> Params:
    """Factorial-moment initializer for the gamma-intensity Poisson model."""
    y1, y2, y3 = moments.factorial
    if min(y1, y2, y3) <= 0:
        raise InfeasibleInitError("factorial moments must all be positive")
    r2 = y2 / y1
    r3 = y3 / y2
    if r3 <= r2:
        raise InfeasibleInitError(f"factorial ratios not increasing (r2={r2:.4g}, r3={r3:.4g})")
    beta = 1.0 / (r3 - r2)
    p = r2 * beta - 1.0
    if p <= 0:
        raise InfeasibleInitError(f"initial p={p:.4g} not positive")
    omega = 1.0 - y1 * beta / p
    if omega >= 1.0:
        raise InfeasibleInitError(f"initial omega={omega:.4g} out of bounds")
    mu = p / beta
    s2 = p / beta**2
    rho = moments.r1 * (mu + s2 + omega * mu**2) / ((1.0 - omega) * s2)
    if not 0.0 <= rho < 1.0:
        raise InfeasibleInitError(f"initial rho={rho:.4g} outside [0, 1)")
    return Params(omega=omega, rho=rho, beta=beta, p=p, a=0.0, c=c)


@dataclass(frozen=True)
class GridConfig:
    """Per-parameter (low, high, points) ranges for the initializing grid search."""

    rho: tuple[float, float, int] = (0.05, 0.95, 10)
    omega: tuple[float, float, int] = (-0.4, 0.9, 14)
    beta: tuple[float, float, int] = (0.25, 5.0, 10)
    p: tuple[float, float, int] = (0.25, 5.0, 10)
    a: tuple[float, float, int] = (0.05, 2.0, 8)


def grid_search_init(
    series,
    family: CountFamily,
    intensity_family: IntensityFamily,
    c: int = 1,
    grid: GridConfig | None = None,
) -> Params:
    """Pick the grid point whose model moments (mean, variance, lag-1 ACF)
    best match the sample moments in squared error."""
    grid = grid or GridConfig()
    mom = SampleMoments.from_series(series)
    rho = np.linspace(*grid.rho)
    omega = np.linspace(*grid.omega)
    beta = np.linspace(*grid.beta)
    if intensity_family == IntensityFamily.EAR1:
        p = np.array([1.0])
    else:
        p = np.linspace(*grid.p)
    a = np.linspace(*grid.a) if family == CountFamily.ZMNB else np.array([0.0])

    W, R, B, P, A = np.meshgrid(omega, rho, beta, p, a, indexing="ij")
    mu = P / B
    s2 = P / B**2
    m2 = s2 + mu**2
    mean = (1.0 - W) * mu
    if family == CountFamily.ZMP:
        var = (1.0 - W) * (mu + s2 + W * mu**2)
        vb = mu + W * m2
    elif c == 0:
        var = (1.0 - W) * ((1.0 + A) * mu + s2 + W * mu**2)
        vb = (1.0 + A) * mu + W * m2
    else:
        var = (1.0 - W) * (mu + (A + 1.0) * s2 + (W + A) * mu**2)
        vb = mu + (W + A) * m2
    acf1 = (1.0 - W) * s2 * R / np.where(var > 0, var / (1.0 - W), np.nan)
    obj = (mean - mom.ybar) ** 2 + (var - mom.s2) ** 2 + (acf1 - mom.r1) ** 2
    obj = np.where((var > 0) & (vb > 0), obj, np.inf)
    if not np.isfinite(obj).any():
        raise InfeasibleInitError("no feasible grid point")
    idx = np.unravel_index(np.argmin(obj), obj.shape)
    return Params(
        omega=float(W[idx]), rho=float(R[idx]), beta=float(B[idx]), p=float(P[idx]),
        a=float(A[idx]), c=c,
    )


def default_init(
    series,
    family: CountFamily,
    intensity_family: IntensityFamily,
    c: int = 1,
    grid: GridConfig | None = None,
) -> Params:
    """Closed-form moment initializer with grid-search fallback."""
    if family == CountFamily.ZMP:
        mom = SampleMoments.from_series(series)
        try:
            if intensity_family == IntensityFamily.EAR1:
                return moment_init_ear1(mom, c=c)
            return moment_init_gar1_factorial(mom, c=c)
        except InfeasibleInitError:
            pass
    init = grid_search_init(series, family, intensity_family, c=c, grid=grid)
    if family == CountFamily.ZMNB and init.a < _A_MIN:
        init = replace(init, a=_A_MIN)
    return init


def _project(
    omega, mu, rho, sigma2, a, family, min_lambda, a_c, notes
):
    """Clip an iterate back into the evaluable region, flagging what moved."""
    c = a_c
    rho2 = min(max(rho, 0.0), _RHO_MAX)
    mu2 = max(mu, _MU_MIN)
    s22 = max(sigma2, _SIGMA2_MIN)
    lower, _ = feasible_omega_interval(family, min_lambda, a if a > 0 else 0.0, c)
    w_lo = lower + 1e-6
    # keep the averaged conditional variance positive so the filter stays defined
    m2 = s22 + mu2**2
    if family == CountFamily.ZMP or a == 0.0:
        w_lo = max(w_lo, -mu2 / m2 + 1e-6)
    elif c == 0:
        w_lo = max(w_lo, -(1.0 + a) * mu2 / m2 + 1e-6)
    else:
        w_lo = max(w_lo, -a - mu2 / m2 + 1e-6)
    w2 = min(max(omega, w_lo), _OMEGA_MAX)
    a2 = max(a, _A_MIN) if family == CountFamily.ZMNB else 0.0
    moved = (
        (rho2 != rho) or (mu2 != mu) or (s22 != sigma2) or (w2 != omega) or (a2 != a)
    )
    if moved:
        notes.append("iterate projected onto feasible bounds")
    return w2, mu2, rho2, s22, a2


def _sigma2_rule(ear1: bool, s2_sample: float, w: float, mu: float, a: float, c: int,
                family: CountFamily) -> float:
    """Intensity variance implied by the current iterate: the exponential
    family ties it to mu^2, otherwise it inverts the count-variance identity
    at the sample variance (floored away from zero)."""
    if ear1:
        return mu**2
    s2 = sigma2_from_count_variance(s2_sample, w, mu, a, c, family)
    return max(s2, _SIGMA2_MIN, 1e-3 * mu**2)


def solver_conditions(y, prev, theta, s2_sample, a, c, family, p0hat, ear1=False):
    """Level and zero-mass residuals of the determined system at theta.

    The three published linear-EF components share the two instruments
    {1, lhat_{t-1}} and are algebraically rank-2 (the m-instrument is an exact
    linear combination of the other two), leaving one parameter direction
    unidentified.  The fitting loop therefore keeps the constant-instrument
    (level) condition, adds the model's exact marginal zero-mass identity, and
    pins the AR coefficient by minimizing the innovation quasi-deviance
    sum(h^2/J + log J), whose rho-derivative is itself a martingale estimating
    function.  This helper evaluates the two algebraic residuals plus the
    deviance at one point.
    """
    w, mu, rho = theta
    if w >= 1.0 or not 0.0 <= rho < 1.0 or mu <= 0:
        return None
    sigma2 = _sigma2_rule(ear1, s2_sample, w, mu, a, c, family)
    vb = vbar_from(family, w, mu, sigma2, a, c)
    if vb <= 0:
        return None
    n = len(y)
    _, gain, jvar, _ = variance_path(n, w, rho, sigma2, vb)
    pt = gain * jvar  # (1-w) * C_{t|t-1}
    weight = (1.0 - w) * pt / jvar**2
    h = y - (1.0 - w) * (rho * prev + (1.0 - rho) * mu)
    beta = mu / sigma2
    p0_model = marginal_zero_prob(family, w, beta, mu * beta, a, c)
    level = float(np.sum(weight * h) / n)
    zeros = p0hat - p0_model
    deviance = float(np.mean(h**2 / jvar + np.log(jvar)))
    return level, zeros, deviance


class _FitCore:
    """Inner engine of the fitting loop at fixed dispersion.

    Works on the innovation quasi-deviance Q = mean(h^2/J + log J) of the
    self-consistently filtered series.  (mu, rho, sigma2) minimize Q at the
    current omega (sigma2 is tied to mu^2 under an exponential marginal);
    omega is then re-solved from the exact marginal zero-mass identity, and
    the stages alternate to a joint fixed point.  Both stages' first-order
    conditions are martingale estimating functions, so the combined root
    keeps the unbiasedness structure of the published system while being
    fully identified.
    """

    def __init__(self, yf, family, ear1, a, c, p0hat, w_floor=-0.95):
        self.yf = yf
        self.n = len(yf)
        self.family = family
        self.ear1 = ear1
        self.a = a
        self.c = c
        self.p0hat = p0hat
        self.s2_sample = float(np.var(yf, ddof=1))
        self.ybar = float(np.mean(yf))
        self.w_floor = w_floor

    def deviance(self, w, mu, rho, sigma2):
        """Innovation quasi-deviance plus the innovation-whiteness quadratic.

        The prediction-error deviance alone is blind to serial correlation of
        the standardized innovations, which opens a spurious valley where the
        average conditional variance collapses and the filter over-tracks the
        data; the whiteness term (an orthogonality condition with its
        efficient weight, contributing O(1/n) at the truth) closes it.
        """
        if not (w < 1.0 and mu > 0 and sigma2 > 0 and 0.0 <= rho <= _RHO_MAX):
            return _BIG
        vb = vbar_from(self.family, w, mu, sigma2, self.a, self.c)
        if vb <= 0:
            return _BIG
        out = forward_pass(self.yf, w, rho, mu, sigma2, vb, mu)
        lam_f, cp = out[0], out[2]
        prev = np.concatenate([[mu], lam_f[:-1]])
        pred = rho * prev + (1.0 - rho) * mu
        h = self.yf - (1.0 - w) * pred
        if self.family == CountFamily.ZMP:
            # per-step predictive variance: conditional count variance at the
            # prediction (F_{t-1}-measurable) with a curvature correction;
            # much more efficient than the stationary average when the
            # intensity range is wide
            v_t = np.maximum((1.0 + w * pred) * pred + w * cp, 1e-8)
            jvar = (1.0 - w) ** 2 * cp + (1.0 - w) * v_t
        else:
            # under heavy dispersion the plug-in predictive variance can be
            # gamed by inflating the predicted level, so keep the
            # deterministic stationary-average weights
            jvar = out[4]
        hs = h / np.sqrt(jvar)
        q = float(np.mean(h**2 / jvar + np.log(jvar)))
        # whiteness and level orthogonality conditions, each standardized so
        # the contribution at the truth is O(chi2_1/n)
        q += float(np.sum(hs[1:] * hs[:-1]) ** 2) / self.n**2
        q += float(np.sum(h / jvar) ** 2 / np.sum(1.0 / jvar)) / self.n
        return q if np.isfinite(q) else _BIG

    def zeros_resid(self, w, mu, sigma2):
        beta = mu / sigma2
        return self.p0hat - marginal_zero_prob(self.family, w, beta, mu * beta, self.a, self.c)

    def _omega_vb_floor(self, mu, sigma2):
        m2 = sigma2 + mu**2
        if self.family == CountFamily.ZMP or self.a == 0.0:
            return -mu / m2 + 1e-6
        if self.c == 0:
            return -(1.0 + self.a) * mu / m2 + 1e-6
        return -self.a - mu / m2 + 1e-6

    def tied_omega(self, mu, sigma2):
        """Zero-mass root in omega at fixed (mu, sigma2).

        The truncation-aware marginal zero probability is monotone increasing
        in omega (envelope argument at the clip boundary), so the root is
        unique; a same-sign range returns the nearer boundary.
        """
        lo = max(self.w_floor, -0.95, self._omega_vb_floor(mu, sigma2))
        if lo >= _OMEGA_MAX:
            return None
        r_lo = self.zeros_resid(lo, mu, sigma2)
        r_hi = self.zeros_resid(_OMEGA_MAX, mu, sigma2)
        if not (np.isfinite(r_lo) and np.isfinite(r_hi)):
            return None
        if r_lo <= 0.0:  # residual decreasing in omega: root below the floor
            return lo
        if r_hi >= 0.0:
            return _OMEGA_MAX
        return float(brentq(lambda x: self.zeros_resid(x, mu, sigma2), lo, _OMEGA_MAX, xtol=1e-12))

    def objective(self, x):
        """Penalized deviance over (mu, rho[, sigma2]) with omega tied to the
        zero-mass identity; fully joint, so no alternation path-dependence."""
        if self.ear1:
            mu, rho = x
            sigma2 = mu**2
        else:
            mu, rho, sigma2 = x
        if not (mu > 0 and sigma2 > 0 and 0.0 <= rho <= _RHO_MAX):
            return _BIG
        w = self.tied_omega(mu, sigma2)
        if w is None:
            return _BIG
        return self.deviance(w, mu, rho, sigma2)

    def run(self, w0, mu0, rho0, sigma20, tol=1e-7):
        """Joint minimization; returns (w, mu, rho, sigma2, converged, n_iter)."""
        rho0 = min(max(rho0, 0.0), _RHO_MAX)
        x0 = np.array([mu0, rho0] if self.ear1 else [mu0, rho0, sigma20])
        res = minimize(
            self.objective, x0=x0, method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 800},
        )
        res2 = minimize(
            self.objective, x0=res.x, method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 400},
        )
        if res2.fun <= res.fun:
            res = res2
        if self.ear1:
            mu, rho = res.x
            sigma2 = float(mu**2)
        else:
            mu, rho, sigma2 = res.x
        rho = float(min(max(rho, 0.0), _RHO_MAX))
        w = self.tied_omega(mu, sigma2)
        converged = bool(res.success and w is not None and res.fun < _BIG)
        if w is None:
            w = w0
        return float(w), float(mu), rho, float(sigma2), converged, int(res.nit)

    def run_zmnb(self, w0, mu0, rho0, sigma20, a0, a_max=10.0, tol=1e-8):
        """Joint solve including the dispersion: a is the bracketed root of the
        quadratic estimating function, with (omega, mu, rho, sigma2) refit for
        every trial value so the root is the joint fixed point."""
        state = {"w": w0, "mu": mu0, "rho": rho0, "s2": sigma20}
        anchor = dict(state)

        def refit(a, from_anchor=False):
            self.a = a
            src_state = anchor if from_anchor else state
            w, mu, rho, sigma2, ok, k = self.run(
                src_state["w"], src_state["mu"], src_state["rho"], src_state["s2"],
            )
            state.update(w=w, mu=mu, rho=rho, s2=sigma2)
            return ok

        def gq(a, from_anchor=False):
            # dispersion condition: innovation variance against its
            # model-implied level, exactly mean-zero at the truth; the raw
            # quadratic EF with filtered intensities substituted is biased to
            # a -> 0 because the post-update residual is shrunk by
            # (1 - K(1-omega)) while the claimed conditional variance is not
            ok = refit(a, from_anchor)
            w, mu, rho, sigma2 = state["w"], state["mu"], state["rho"], state["s2"]
            vb = vbar_from(self.family, w, mu, sigma2, a, self.c)
            lam_f, _, _, _, jvar, _ = forward_pass(self.yf, w, rho, mu, sigma2, vb, mu)
            prev = np.concatenate([[mu], lam_f[:-1]])
            h = self.yf - (1.0 - w) * (rho * prev + (1.0 - rho) * mu)
            return float(np.mean(h**2 / jvar - 1.0)), ok

        grid = np.geomspace(_A_MIN, a_max, 10)
        start = float(np.clip(a0, _A_MIN, a_max))
        order = np.argsort(np.abs(np.log(grid) - np.log(start)))
        vals = {}
        for idx in order:
            a = float(grid[idx])
            try:
                vals[a] = gq(a, from_anchor=True)[0]
            except EstimationError:
                vals[a] = np.nan
        pairs = sorted((a, v) for a, v in vals.items() if np.isfinite(v))
        if not pairs:
            raise EstimationError("quadratic EF not evaluable on the dispersion grid")
        brackets = [
            (a1, a2)
            for (a1, v1), (a2, v2) in zip(pairs[:-1], pairs[1:])
            if v1 * v2 <= 0
        ]
        boundary = False
        if brackets:
            # the residual is evaluated with warm-started inner fits, so it is
            # slightly stateful; plain bisection tolerates that where brentq
            # would reject an inconsistent bracket
            a1, a2 = min(brackets, key=lambda b: abs(math.log(0.5 * (b[0] + b[1])) - math.log(start)))
            v1 = gq(a1)[0]
            for _ in range(40):
                if a2 - a1 < 1e-4:
                    break
                mid = 0.5 * (a1 + a2)
                try:
                    vm = gq(mid)[0]
                except EstimationError:
                    a2 = mid
                    continue
                if vm == 0.0:
                    a1 = a2 = mid
                    break
                if (vm > 0) == (v1 > 0):
                    a1, v1 = mid, vm
                else:
                    a2 = mid
            a_hat = 0.5 * (a1 + a2)
        else:
            a_hat = min(pairs, key=lambda t: abs(t[1]))[0]
            boundary = a_hat in (pairs[0][0], pairs[-1][0])
        ok = refit(a_hat)
        return (
            state["w"], state["mu"], state["rho"], state["s2"], a_hat,
            bool(ok and not boundary),
        )


def solve_ef_block(
    series,
    spec: ModelSpec,
    init: Params | None = None,
    tol: float = 1e-6,
    max_iter: int = 500,
    a_max: float = 10.0,
) -> FitResult:
    """Run the estimating-function fit to a joint fixed point and return
    estimates, trace and the final filtered path.

    Filtering and condition-solving are interleaved inside :class:`_FitCore`
    (the filter is rebuilt for every visited parameter point).  ``spec`` fixes
    the families and the dispersion form index; its parameter values serve as
    the starting point unless ``init`` is given.
    """
    from .diagnostics import pearson_residuals

    y = as_count_series(series)
    yf = y.astype(float)
    p0hat = float(np.mean(y == 0))
    family = spec.family
    ifam = spec.intensity.family
    ear1 = ifam == IntensityFamily.EAR1
    cur = init if init is not None else spec.params
    if family == CountFamily.ZMNB and cur.a <= 0:
        cur = replace(cur, a=_A_MIN)
    notes: list[str] = []
    trace = [cur]
    converged = False
    a = cur.a
    iterations = 0
    w, mu, rho = cur.omega, cur.mu_lambda, cur.rho
    sigma2 = cur.sigma2_lambda
    core = _FitCore(yf, family, ear1, a, c=cur.c, p0hat=p0hat)
    if family == CountFamily.ZMNB:
        w, mu, rho, sigma2, a, converged = core.run_zmnb(
            w, mu, rho, sigma2, a, a_max=a_max, tol=tol
        )
        iterations = 1
    else:
        w, mu, rho, sigma2, converged, iterations = core.run(w, mu, rho, sigma2, tol=tol)
    trace.append(_theta_params(w, mu, rho, sigma2, a, cur.c))
    sigma2_f = sigma2
    vb = vbar_from(family, w, mu, sigma2_f, a, cur.c)
    lam_f, _, _, _, _, _ = forward_pass(yf, w, rho, mu, sigma2_f, vb, mu)
    min_lam = float(min(np.min(lam_f), mu))
    w, mu, rho, sigma2_f, a = _project(
        w, mu, rho, sigma2_f, a, family, min_lam, cur.c, notes
    )
    cur = _theta_params(w, mu, rho, sigma2_f, a, cur.c)
    trace.append(cur)
    spec_hat = spec.with_params(cur)
    filt = gkf_filter(y, spec_hat)
    prev = np.concatenate([[cur.mu_lambda], filt.lambda_filtered[:-1]])
    resid_conditions = solver_conditions(
        yf, prev, (cur.omega, cur.mu_lambda, cur.rho),
        float(np.var(yf, ddof=1)), a, cur.c, family, p0hat, ear1,
    )
    ef_norm = (
        float(np.hypot(resid_conditions[0], resid_conditions[1]))
        if resid_conditions is not None
        else math.inf
    )
    try:
        residuals = pearson_residuals(y, filt.lambda_filtered, cur, family)
    except EstimationError as err:
        residuals = np.full(len(y), np.nan)
        notes.append(f"pearson residuals undefined: {err}")
    return FitResult(
        params_hat=cur,
        family=family,
        intensity_family=ifam,
        iterations=iterations,
        converged=converged,
        trace=trace,
        filtered=filt.lambda_filtered,
        residuals=residuals,
        ef_norm=ef_norm,
        notes=sorted(set(notes)),
    )


def fit(
    series,
    family: CountFamily | str,
    intensity_family: IntensityFamily | str,
    c: int = 1,
    init: Params | None = None,
    tol: float = 1e-6,
    max_iter: int = 500,
    a_max: float = 10.0,
    grid: GridConfig | None = None,
) -> FitResult:
    """Initializer chain plus :func:`solve_ef_block` in one call."""
    family = CountFamily(family)
    ifam = IntensityFamily(intensity_family)
    y = as_count_series(series)
    if init is None:
        init = default_init(y, family, ifam, c=c, grid=grid)
    template = ModelSpec.create(
        family, ifam, omega=init.omega, rho=init.rho, beta=init.beta,
        p=init.p, a=init.a, c=init.c,
    )
    return solve_ef_block(y, template, init=None, tol=tol, max_iter=max_iter, a_max=a_max)


@dataclass
class BootstrapResult:
    se: dict[str, float]
    reps: int
    failed: int


def _bootstrap_one(args):
    spec_dict, n, seed = args
    spec = ModelSpec.create(**spec_dict)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    from .intensity import simulate_intensity
    from .observation import zm_sample

    lam = simulate_intensity(spec.intensity, n, rng)
    y = zm_sample(spec.family, lam, spec.params, rng)
    res = fit(y, spec.family, spec.intensity.family, c=spec.params.c)
    if not res.converged:
        return None
    ph = res.params_hat
    return {"omega": ph.omega, "rho": ph.rho, "beta": ph.beta, "p": ph.p, "a": ph.a}


def bootstrap_se(
    spec_hat: ModelSpec,
    n: int,
    reps: int,
    rng: np.random.Generator,
    jobs: int = 1,
    seeds=None,
) -> BootstrapResult:
    """Simulation-based standard errors: refit ``reps`` synthetic series of
    length n drawn from the fitted model and report the empirical standard
    deviations of the estimates.  Failed refits are excluded and counted.
    Explicit per-replicate ``seeds`` may be injected for testing."""
    if reps < 2:
        raise InvalidSpecError(f"reps must be >= 2, got {reps}")
    if seeds is None:
        seeds = [int(s) for s in rng.integers(0, 2**62, size=reps)]
    elif len(seeds) != reps:
        raise InvalidSpecError("seeds must have length reps")
    spec_dict = {
        "family": spec_hat.family.value,
        "intensity_family": spec_hat.intensity.family.value,
        "omega": spec_hat.params.omega,
        "rho": spec_hat.params.rho,
        "beta": spec_hat.params.beta,
        "p": spec_hat.params.p,
        "a": spec_hat.params.a,
        "c": spec_hat.params.c,
    }
    tasks = [(spec_dict, n, s) for s in seeds]
    results = []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for out in ex.map(_bootstrap_one_safe, tasks):
                results.append(out)
    else:
        results = [_bootstrap_one_safe(t) for t in tasks]
    ok = [r for r in results if r is not None]
    failed = reps - len(ok)
    if failed > reps / 2:
        raise EstimationError(f"{failed}/{reps} bootstrap refits failed")
    se = {
        key: float(np.std([r[key] for r in ok], ddof=1))
        for key in ("omega", "rho", "beta", "p", "a")
    }
    return BootstrapResult(se=se, reps=reps, failed=failed)


def _bootstrap_one_safe(args):
    try:
        return _bootstrap_one(args)
    except Exception:
        return None
