"""Parameter estimation for the gravity and CGM models.

Gravity: nonlinear least squares on (scale, beta) via a damped
Levenberg-Marquardt iteration with Marquardt diagonal scaling. The
objective is the raw sum of squared count residuals over all
off-diagonal cells (zeros included; they carry signal).

CGM: negative-binomial (NB2) regression with a log link. Mean
coefficients move by iteratively reweighted least squares, alternated
with a one-dimensional Newton update of the dispersion on the log scale;
both sub-steps use step-halving so the log-likelihood never decreases.
Initialization is an ordinary least squares fit on log(1 + counts).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, polygamma, psi

from ._backend import kernels
from .errors import DomainError, FitError
from .geo import DailyFlowMatrix, StringencyPanel, ZoneRegistry
from .models import (
    CgmParams,
    DecayKind,
    GravityParams,
    exponential_decay_rate,
)

#: relative objective decrease below which gravity LM stops
GRAVITY_FTOL = 1e-10
#: objective gradient infinity-norm below which gravity LM stops
GRAVITY_GTOL = 1e-8
GRAVITY_MAX_ITER = 200

#: coefficient infinity-norm change below which the CGM fit stops
CGM_TOL = 1e-8
CGM_MAX_OUTER = 100
#: dispersion bounds; the upper cap is the effectively-Poisson limit
DISPERSION_MIN = 1e-4
DISPERSION_MAX = 1e8

CGM_COLUMNS = ("intercept", "log_origin_mass", "log_dest_mass",
               "log_deterrence", "si_origin", "si_dest")


@dataclass(frozen=True)
class FitReport:
    """Outcome of one parameter search.

    ``objective`` is the final minimized value: sum of squared residuals
    for gravity, negative log-likelihood for CGM. ``trace`` holds the
    objective after every accepted step (nonincreasing). ``dispersion``
    is the NB2 dispersion (CGM only; variance = mu + mu^2/dispersion).
    """

    params: GravityParams | CgmParams | None
    iterations: int
    converged: bool
    objective: float
    dispersion: float | None = None
    trace: tuple[float, ...] = ()


def _observed_list(observed) -> list[np.ndarray]:
    if isinstance(observed, DailyFlowMatrix):
        return [observed.counts]
    if isinstance(observed, np.ndarray):
        return [observed]
    return [m.counts if isinstance(m, DailyFlowMatrix) else np.asarray(m)
            for m in observed]


# ---------------------------------------------------------------------------
# gravity

def fit_gravity(observed, dist: np.ndarray, masses: np.ndarray,
                decay: DecayKind) -> FitReport:
    """Least-squares estimate of (scale, beta) for one day or a panel.

    Passing a sequence of matrices stacks their residuals (pooled fit).
    Raises FitError when fewer than 3 nonzero O-D observations exist.
    """
    matrices = _observed_list(observed)
    n = masses.shape[0]
    mask = ~np.eye(n, dtype=bool)
    obs = np.concatenate([m[mask] for m in matrices])
    nonzero = int(np.count_nonzero(obs))
    if obs.sum() == 0:
        raise FitError("degenerate input: all observed flows are zero")
    if nonzero < 3:
        raise FitError(f"need at least 3 nonzero O-D observations, got {nonzero}")

    exponential = decay is DecayKind.EXPONENTIAL
    r_cells = dist[mask]
    if not exponential and np.any(r_cells <= 0):
        raise DomainError("power-law decay needs positive pairwise distances")
    days = len(matrices)

    # scale-aware start: beta from the mean distance, scale matching totals
    beta0 = exponential_decay_rate(dist) if exponential else 1.0
    base = kernels.gravity_matrix(masses, dist, 1.0, beta0, exponential)[mask]
    scale0 = float(obs.sum()) / (days * float(base.sum()))
    dbeta_factor = -r_cells if exponential else -np.log(r_cells)

    def model_and_jac(scale, beta):
        pred_day = kernels.gravity_matrix(masses, dist, scale, beta, exponential)[mask]
        pred = np.tile(pred_day, days)
        jac = np.empty((pred.size, 2))
        jac[:, 0] = pred / scale
        jac[:, 1] = np.tile(dbeta_factor * pred_day, days)
        return pred, jac

    scale, beta = scale0, beta0
    pred, jac = model_and_jac(scale, beta)
    resid = pred - obs
    objective = float(resid @ resid)
    trace = [objective]
    lam = 1e-3
    converged = bool(np.max(np.abs(2.0 * (jac.T @ resid))) < GRAVITY_GTOL)
    iterations = 0

    while not converged and iterations < GRAVITY_MAX_ITER:
        iterations += 1
        normal = jac.T @ jac
        grad = jac.T @ resid
        col_scale = 1.0 / np.sqrt(np.maximum(np.diag(normal), 1e-300))
        scaled_normal = normal * np.outer(col_scale, col_scale)
        scaled_grad = grad * col_scale

        accepted = False
        while lam <= 1e15:
            try:
                step = np.linalg.solve(
                    scaled_normal + lam * np.eye(2), -scaled_grad) * col_scale
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            scale_new = scale + step[0]
            beta_new = max(beta + step[1], 0.0)
            if scale_new <= 0 or not np.isfinite(scale_new):
                lam *= 10.0
                continue
            pred_new, jac_new = model_and_jac(scale_new, beta_new)
            resid_new = pred_new - obs
            objective_new = float(resid_new @ resid_new)
            if np.isfinite(objective_new) and objective_new <= objective:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break

        rel_decrease = (objective - objective_new) / max(objective, 1e-300)
        scale, beta = scale_new, beta_new
        pred, jac, resid, objective = pred_new, jac_new, resid_new, objective_new
        trace.append(objective)
        lam = max(lam * 0.3, 1e-12)
        grad_inf = float(np.max(np.abs(2.0 * (jac.T @ resid))))
        if rel_decrease < GRAVITY_FTOL or grad_inf < GRAVITY_GTOL:
            converged = True

    return FitReport(
        params=GravityParams(scale=scale, beta=beta, decay=decay),
        iterations=iterations,
        converged=converged,
        objective=objective,
        trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# CGM (NB2 regression)

def build_cgm_design(observed: Sequence[DailyFlowMatrix], dist: np.ndarray,
                     registry: ZoneRegistry, stringency: StringencyPanel,
                     decay: DecayKind):
    """Stacked (y, X, decay_rate) over all days and off-diagonal pairs.

    Design columns follow CGM_COLUMNS. Raises KeyError when a needed
    (zone, date) stringency value is missing.
    """
    masses = registry.populations
    n = masses.shape[0]
    mask = ~np.eye(n, dtype=bool)
    exponential = decay is DecayKind.EXPONENTIAL
    if exponential:
        rate = exponential_decay_rate(dist)
        logf = (-rate * dist)[mask]
    else:
        rate = 1.0
        if np.any(dist[mask] <= 0):
            raise DomainError("power-law decay needs positive pairwise distances")
        with np.errstate(divide="ignore"):
            logf = (-np.log(np.where(dist > 0, dist, 1.0)))[mask]
    logm = np.log(masses)
    log_origin = np.broadcast_to(logm[:, None], (n, n))[mask]
    log_dest = np.broadcast_to(logm[None, :], (n, n))[mask]
    ones = np.ones(log_origin.size)

    y_parts = []
    x_parts = []
    for matrix in observed:
        si = stringency.vector(registry, matrix.date)
        si_origin = np.broadcast_to(si[:, None], (n, n))[mask]
        si_dest = np.broadcast_to(si[None, :], (n, n))[mask]
        x_parts.append(np.column_stack(
            [ones, log_origin, log_dest, logf, si_origin, si_dest]))
        y_parts.append(matrix.counts[mask])
    return np.concatenate(y_parts), np.vstack(x_parts), rate


def _nb_loglik(y, mu, theta, lgam_y1_sum):
    log_tm = np.log(theta + mu)
    return float(
        np.sum(gammaln(y + theta))
        - y.size * gammaln(theta)
        - lgam_y1_sum
        + y.size * theta * np.log(theta)
        - theta * np.sum(log_tm)
        + np.sum(y * np.log(mu))
        - np.sum(y * log_tm)
    )


def _mu_of(design, coef):
    return np.exp(np.clip(design @ coef, -500.0, 500.0))


def _check_collinear(design):
    col_max = np.max(np.abs(design), axis=0)
    if np.any(col_max == 0):
        idx = int(np.argmax(col_max == 0))
        raise FitError(f"collinear design: column '{CGM_COLUMNS[idx]}' is all zero")
    singular_values = np.linalg.svd(design / col_max, compute_uv=False)
    if singular_values[-1] / singular_values[0] < 1e-10:
        _, _, vt = np.linalg.svd(design / col_max, full_matrices=False)
        null = np.abs(vt[-1])
        # name the most involved non-intercept column
        idx = 1 + int(np.argmax(null[1:]))
        raise FitError(
            f"collinear design: column '{CGM_COLUMNS[idx]}' is linearly "
            "dependent on the others (e.g. constant over all rows)"
        )


def _dispersion_newton(y, mu, theta, loglik, lgam_y1_sum):
    """One damped Newton update of the dispersion on the log scale."""
    tm = theta + mu
    grad_theta = float(np.sum(
        psi(y + theta) - psi(theta) + np.log(theta) + 1.0
        - np.log(tm) - (y + theta) / tm
    ))
    hess_theta = float(np.sum(
        polygamma(1, y + theta) - polygamma(1, theta) + 1.0 / theta
        - 2.0 / tm + (y + theta) / (tm * tm)
    ))
    grad_log = theta * grad_theta
    hess_log = theta * theta * hess_theta + grad_log
    if hess_log < 0:
        step = -grad_log / hess_log
    else:
        step = 0.5 if grad_log > 0 else -0.5
    step = float(np.clip(step, -2.0, 2.0))

    log_theta = np.log(theta)
    t = 1.0
    while t >= 2.0 ** -30:
        theta_new = float(np.exp(np.clip(
            log_theta + t * step, np.log(DISPERSION_MIN), np.log(DISPERSION_MAX))))
        theta_new = min(max(theta_new, DISPERSION_MIN), DISPERSION_MAX)
        loglik_new = _nb_loglik(y, mu, theta_new, lgam_y1_sum)
        if loglik_new >= loglik - 1e-12:
            return theta_new, loglik_new
        t *= 0.5
    return theta, loglik


def fit_cgm(observed: Sequence[DailyFlowMatrix], dist: np.ndarray,
            registry: ZoneRegistry, stringency: StringencyPanel,
            decay: DecayKind) -> FitReport:
    """NB2 maximum-likelihood estimate of the six CGM coefficients.

    Fits over every off-diagonal cell of every matrix in ``observed``
    (pass one day for a per-day fit). Raises FitError for degenerate or
    collinear designs, KeyError when stringency values are missing.
    """
    y, design, rate = build_cgm_design(observed, dist, registry, stringency, decay)
    if y.size < len(CGM_COLUMNS) + 1:
        raise FitError(
            f"need at least {len(CGM_COLUMNS) + 1} observations, got {y.size}")
    if y.sum() == 0:
        raise FitError("degenerate input: all observed flows are zero")
    _check_collinear(design)

    lgam_y1_sum = float(np.sum(gammaln(y + 1.0)))
    coef, *_ = np.linalg.lstsq(design, np.log1p(y), rcond=None)
    mu = _mu_of(design, coef)

    # moment-based dispersion start: excess variance over the Poisson part
    excess = float(np.mean((y - mu) ** 2 - mu))
    if excess > 0:
        theta = float(np.clip(np.mean(mu ** 2) / excess,
                              DISPERSION_MIN, DISPERSION_MAX))
    else:
        theta = 1.0
    loglik = _nb_loglik(y, mu, theta, lgam_y1_sum)
    trace = [-loglik]
    converged = False
    iterations = 0

    for _ in range(CGM_MAX_OUTER):
        iterations += 1

        # IRLS proposal for the mean coefficients at fixed dispersion
        eta = np.clip(design @ coef, -500.0, 500.0)
        mu = np.exp(eta)
        weights = mu / (1.0 + mu / theta)
        working = eta + (y - mu) / mu
        weighted = design * weights[:, None]
        try:
            proposal = np.linalg.solve(design.T @ weighted,
                                       weighted.T @ working)
        except np.linalg.LinAlgError:
            raise FitError("singular IRLS system; design is ill-conditioned") from None

        coef_new = coef
        t = 1.0
        while t >= 2.0 ** -30:
            candidate = coef + t * (proposal - coef)
            loglik_candidate = _nb_loglik(y, _mu_of(design, candidate),
                                          theta, lgam_y1_sum)
            if np.isfinite(loglik_candidate) and loglik_candidate >= loglik - 1e-12:
                coef_new = candidate
                loglik = loglik_candidate
                break
            t *= 0.5

        mu = _mu_of(design, coef_new)
        theta, loglik = _dispersion_newton(y, mu, theta, loglik, lgam_y1_sum)
        trace.append(-loglik)

        delta = float(np.max(np.abs(coef_new - coef)))
        coef = coef_new
        if delta < CGM_TOL:
            converged = True
            break

    params = CgmParams(
        epsilon=float(coef[0]), alpha=float(coef[1]), beta=float(coef[2]),
        gamma=float(coef[3]), delta1=float(coef[4]), delta2=float(coef[5]),
        decay=decay, decay_rate=rate,
    )
    return FitReport(
        params=params,
        iterations=iterations,
        converged=converged,
        objective=-loglik,
        dispersion=theta,
        trace=tuple(trace),
    )
