"""Variance-targeting GARCH(1,1) fit on daily log returns.

Gaussian quasi-likelihood with omega pinned to the sample variance through
omega = var * (1 - alpha - beta), so the optimizer works in two free
parameters. Those are driven through a sigmoid persistence/share
reparametrization, which keeps every iterate inside the stationarity
region without constraint machinery.

Note the timing: the likelihood below is the standard predictive one,
h_t depends on the return at t-1. The filtering state equation updates
the variance with the contemporaneous return instead; the two coincide up
to a one-step index shift and the fit is used only to pick (omega, alpha,
beta).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .bsgarch import GarchParams
from .exceptions import InsufficientDataError, InvalidInputError

logger = logging.getLogger(__name__)

MIN_RETURNS = 30
_STARTS = ((0.05, 0.90), (0.10, 0.80), (0.02, 0.95))


@dataclass(frozen=True)
class GarchFit:
    params: GarchParams
    log_likelihood: float
    n_obs: int
    sample_variance: float
    converged: bool


def log_returns(closes) -> np.ndarray:
    closes = np.asarray(closes, dtype=float)
    if closes.ndim != 1 or closes.size < 2:
        raise InvalidInputError("need a 1-d series of at least two closes")
    if not np.all(np.isfinite(closes)) or np.any(closes <= 0.0):
        raise InvalidInputError("closes must be finite and positive")
    return np.diff(np.log(closes))


def garch_log_likelihood(returns: np.ndarray, omega: float, alpha: float, beta: float) -> float:
    """Gaussian log-likelihood of the returns under GARCH(1,1) variance."""
    GarchParams(omega, alpha, beta)  # reuse the stationarity checks
    returns = np.asarray(returns, dtype=float)
    if returns.ndim != 1 or returns.size < 1:
        raise InvalidInputError("returns must be a non-empty 1-d array")
    h = float(np.var(returns)) or omega / (1.0 - alpha - beta)
    ll = 0.0
    for u in returns:
        ll -= 0.5 * (math.log(2.0 * math.pi * h) + u * u / h)
        h = omega + alpha * u * u + beta * h
    return ll


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _unpack(z) -> tuple[float, float]:
    # persistence in (0, 1), alpha's share of it in (0, 1)
    persistence = _sigmoid(z[0]) * 0.9999
    share = _sigmoid(z[1])
    alpha = persistence * share
    beta = persistence * (1.0 - share)
    return alpha, beta


def fit_garch(returns) -> GarchFit:
    """Variance-targeting quasi-MLE; multi-start Nelder-Mead in 2 parameters."""
    returns = np.asarray(returns, dtype=float)
    if returns.ndim != 1 or returns.size < MIN_RETURNS:
        raise InsufficientDataError(
            f"GARCH fit needs at least {MIN_RETURNS} returns, got {returns.size}"
        )
    if not np.all(np.isfinite(returns)):
        raise InvalidInputError("returns must be finite")
    var = float(np.var(returns))
    if var <= 0.0:
        raise InvalidInputError("return series has zero variance")

    def negloglik(z):
        alpha, beta = _unpack(z)
        omega = var * (1.0 - alpha - beta)
        return -garch_log_likelihood(returns, omega, alpha, beta)

    best = None
    converged = False
    for a0, b0 in _STARTS:
        z0 = (_logit(min((a0 + b0) / 0.9999, 0.999)), _logit(a0 / (a0 + b0)))
        res = minimize(negloglik, z0, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-10})
        if best is None or res.fun < best.fun:
            best = res
            converged = bool(res.success)
    alpha, beta = _unpack(best.x)
    omega = var * (1.0 - alpha - beta)
    params = GarchParams(omega, alpha, beta)
    fit = GarchFit(
        params=params,
        log_likelihood=-float(best.fun),
        n_obs=int(returns.size),
        sample_variance=var,
        converged=converged,
    )
    logger.info(
        "GARCH fit: omega=%.3e alpha=%.4f beta=%.4f loglik=%.2f n=%d",
        omega, alpha, beta, fit.log_likelihood, fit.n_obs,
    )
    return fit


def closes_by_date(quotes) -> list:
    """Chronological (date, underlying close) pairs, one per quote date."""
    seen: dict = {}
    for q in quotes:
        seen.setdefault(q.quote_date, q.underlying_close)
    return [(d, seen[d]) for d in sorted(seen)]
