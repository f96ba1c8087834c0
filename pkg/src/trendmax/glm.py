"""Binomial GLMs fitted by iteratively reweighted least squares.

Besides the estimates, a fit keeps the per-unit score contributions and the
information matrix, which is what the joint (multiple marginal models)
covariance is assembled from.

Units carry two kinds of weights. ``prior_weights`` enter the likelihood and
the score of a unit (poly-k weights are of this kind). ``frequencies`` count
identical units: a unit with frequency 3 behaves exactly like three copies
of it, so it contributes ``3 * s s'`` to a score cross-product rather than
``(3 s)(3 s)'``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logit, xlogy

from .errors import NumericalError, ValidationError

MU_EPS = 1e-10
MAX_ITER = 50
MAX_HALVINGS = 30
REL_TOL = 1e-10
STEP_TOL = 1e-10


@dataclass(frozen=True)
class Link:
    name: str
    link: Callable
    inverse: Callable
    mu_eta: Callable
    canonical: bool = False


LINKS = {
    "logit": Link("logit", logit, expit, lambda eta: expit(eta) * (1 - expit(eta)), True),
    "identity": Link("identity", lambda mu: mu, lambda eta: eta, np.ones_like),
    "log": Link("log", np.log, np.exp, np.exp),
}


def get_link(name) -> Link:
    if isinstance(name, Link):
        return name
    try:
        return LINKS[name]
    except KeyError:
        raise ValidationError(f"unknown link {name!r}") from None


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.matrix, dtype=float)
        if X.ndim != 2:
            raise ValidationError("design matrix must be 2-dimensional")
        if len(self.labels) != X.shape[1]:
            raise ValidationError("one label per design column is required")
        X.setflags(write=False)
        object.__setattr__(self, "matrix", X)
        object.__setattr__(self, "labels", tuple(self.labels))
        if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
            raise NumericalError("rank-deficient design matrix")

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class FittedModel:
    coefficients: np.ndarray
    vcov_model: np.ndarray
    information: np.ndarray
    score_matrix: np.ndarray
    unit_counts: np.ndarray
    link: str
    converged: bool
    deviance: float
    iterations: int
    fitted: np.ndarray
    labels: tuple[str, ...] = field(default=())

    @property
    def n_units(self) -> int:
        return self.score_matrix.shape[0]

    @property
    def n_params(self) -> int:
        return self.coefficients.shape[0]

    def score_sums(self) -> np.ndarray:
        return self.unit_counts @ self.score_matrix

    def influence(self) -> np.ndarray:
        """Per-unit influence functions ``s_i' I^{-1}`` (units x parameters)."""
        return self.score_matrix @ self.vcov_model

    def sandwich(self) -> np.ndarray:
        psi = self.influence()
        return psi.T @ (self.unit_counts[:, None] * psi)

    def reparametrize(self, T, labels=None) -> FittedModel:
        """Express the fit in parameters ``T @ theta``."""
        T = np.asarray(T, dtype=float)
        Tinv = np.linalg.inv(T)
        return FittedModel(
            coefficients=T @ self.coefficients,
            vcov_model=T @ self.vcov_model @ T.T,
            information=Tinv.T @ self.information @ Tinv,
            score_matrix=self.score_matrix @ Tinv,
            unit_counts=self.unit_counts,
            link=self.link,
            converged=self.converged,
            deviance=self.deviance,
            iterations=self.iterations,
            fitted=self.fitted,
            labels=tuple(labels) if labels is not None else self.labels,
        )


def _as_vector(values, n, name) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape == ():
        v = np.full(n, float(v))
    if v.shape != (n,):
        raise ValidationError(f"{name} must have one entry per unit")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite values")
    return v


def _binomial_deviance(y, m, mu, weight):
    dev = xlogy(y, y / (m * mu)) + xlogy(m - y, (m - y) / (m * (1 - mu)))
    return 2.0 * float(np.sum(weight * dev))


def log_likelihood(beta, design, successes, trials, prior_weights, link,
                   frequencies=None) -> float:
    """Weighted binomial log-likelihood (kernel, no binomial coefficient)."""
    X = design.matrix if isinstance(design, DesignMatrix) else np.asarray(design)
    lk = get_link(link)
    n = X.shape[0]
    freq = np.ones(n) if frequencies is None else np.asarray(frequencies, float)
    mu = lk.inverse(X @ np.asarray(beta, float))
    y, m = np.asarray(successes, float), np.asarray(trials, float)
    w = freq * np.asarray(prior_weights, float)
    return float(np.sum(w * (xlogy(y, mu) + xlogy(m - y, 1 - mu))))


def score_contributions(beta, design, successes, trials, prior_weights, link):
    """Per-unit score vectors at ``beta`` (units x parameters)."""
    X = design.matrix if isinstance(design, DesignMatrix) else np.asarray(design)
    lk = get_link(link)
    eta = X @ np.asarray(beta, float)
    mu = lk.inverse(eta)
    y, m = np.asarray(successes, float), np.asarray(trials, float)
    r = np.asarray(prior_weights, float) * m * (y / m - mu) * lk.mu_eta(eta) / (mu * (1 - mu))
    return X * r[:, None]


def fit_binomial(design: DesignMatrix, successes: Sequence[float], trials: Sequence[float],
                 prior_weights: Sequence[float] | float = 1.0, link: str = "logit",
                 frequencies: Sequence[float] | None = None) -> FittedModel:
    """Maximum (quasi-)likelihood fit of a binomial GLM by IRLS.

    Non-integer successes and trials are accepted. For the identity and log
    links, any step that pushes a fitted mean outside ``[1e-10, 1 - 1e-10]``
    is halved (at most 30 times) before giving up with a "link boundary"
    error.

    Raises:
        ValidationError: inconsistent inputs.
        NumericalError: rank deficiency, link boundary, separation, or no
            convergence within 50 iterations (``last_iterate`` holds the
            coefficients).
    """
    if not isinstance(design, DesignMatrix):
        raise ValidationError("design must be a DesignMatrix")
    X = design.matrix
    n, p = X.shape
    lk = get_link(link)
    y = _as_vector(successes, n, "successes")
    m = _as_vector(trials, n, "trials")
    pw = _as_vector(prior_weights, n, "prior_weights")
    freq = np.ones(n) if frequencies is None else _as_vector(frequencies, n, "frequencies")
    if np.any(m <= 0):
        raise ValidationError("trials must be positive")
    if np.any(y < 0) or np.any(y > m):
        raise ValidationError("successes must lie in [0, trials]")
    if np.any(pw < 0) or np.any(freq < 0):
        raise ValidationError("weights must be nonnegative")
    total = freq * pw
    if np.linalg.matrix_rank(X[total > 0]) < p:
        raise NumericalError("rank-deficient design on units with positive weight")

    def valid(mu):
        return np.all(np.isfinite(mu)) and np.all(mu >= MU_EPS) and np.all(mu <= 1 - MU_EPS)

    mu = (y + 0.5) / (m + 1.0)
    eta = lk.link(mu)
    dev_old = _binomial_deviance(y, m, mu, total)
    beta = None
    converged = False
    for iteration in range(1, MAX_ITER + 1):
        dmu = lk.mu_eta(eta)
        var = mu * (1 - mu)
        z = eta + (y / m - mu) / dmu
        w = total * m * dmu ** 2 / var
        sw = np.sqrt(w)
        beta_new = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)[0]
        eta_new = X @ beta_new
        mu_new = lk.inverse(eta_new)
        halvings = 0
        while not valid(mu_new):
            if beta is None or halvings >= MAX_HALVINGS:
                raise NumericalError(
                    f"link boundary: fitted means leave (0, 1) under the {lk.name} link",
                    last_iterate=beta if beta is not None else beta_new,
                )
            beta_new = 0.5 * (beta + beta_new)
            eta_new = X @ beta_new
            mu_new = lk.inverse(eta_new)
            halvings += 1
        step = np.inf if beta is None else float(np.max(np.abs(beta_new - beta)))
        beta, eta, mu = beta_new, eta_new, mu_new
        dev = _binomial_deviance(y, m, mu, total)
        # the deviance settles long before the coefficients under slow
        # (non-canonical) links, so the step size must be negligible too
        if (abs(dev - dev_old) / (abs(dev) + 0.1) < REL_TOL
                and step <= STEP_TOL * (1.0 + float(np.max(np.abs(beta))))):
            converged = True
            break
        dev_old = dev
    if not converged:
        raise NumericalError(
            f"IRLS did not converge in {MAX_ITER} iterations "
            "(separation or a zero-count group; consider pseudo counts)",
            last_iterate=beta,
        )
    if np.any(mu[total > 0] <= 1e-8) or np.any(mu[total > 0] >= 1 - 1e-8):
        if lk.name == "logit":
            raise NumericalError(
                "separation: fitted probabilities are numerically 0 or 1 "
                "(a zero-count or all-tumor group; consider pseudo counts)",
                last_iterate=beta,
            )
        raise NumericalError(
            f"link boundary: the {lk.name}-link estimate lies on the boundary of (0, 1)",
            last_iterate=beta,
        )

    dmu = lk.mu_eta(eta)
    var = mu * (1 - mu)
    info = X.T @ ((total * m * dmu ** 2 / var)[:, None] * X)
    try:
        vcov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise NumericalError("singular information matrix", last_iterate=beta) from None
    scores = X * (pw * m * (y / m - mu) * dmu / var)[:, None]
    return FittedModel(
        coefficients=beta,
        vcov_model=0.5 * (vcov + vcov.T),
        information=info,
        score_matrix=scores,
        unit_counts=freq,
        link=lk.name,
        converged=True,
        deviance=dev,
        iterations=iteration,
        fitted=mu,
        labels=design.labels,
    )


def wald_statistic(coefficients, weight_vector, vcov) -> float:
    """Studentized linear combination ``c'theta / sqrt(c' V c)``.

    The sign is that of the estimate; callers negate it for a "less"
    alternative and take the absolute value for a two-sided one.
    """
    theta = np.asarray(coefficients, dtype=float)
    c = np.asarray(weight_vector, dtype=float)
    V = np.asarray(vcov, dtype=float)
    if c.shape != theta.shape or V.shape != (c.size, c.size):
        raise ValidationError("weight vector and covariance must conform to the coefficients")
    var = float(c @ V @ c)
    if not var > 0:
        raise NumericalError("degenerate variance for the tested combination")
    return float(c @ theta) / np.sqrt(var)
