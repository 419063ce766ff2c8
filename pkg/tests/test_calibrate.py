import datetime as dt
import math

import numpy as np
import pytest

from volswitch.calibrate import (
    MIN_RETURNS,
    closes_by_date,
    fit_garch,
    garch_log_likelihood,
    log_returns,
)
from volswitch.exceptions import InsufficientDataError, InvalidInputError
from volswitch.marketdata import OptionQuote

TRUE = dict(omega=5e-6, alpha=0.08, beta=0.90)


def simulate_garch_returns(n, omega, alpha, beta, seed=0):
    rng = np.random.default_rng(seed)
    h = omega / (1.0 - alpha - beta)
    out = np.empty(n)
    for t in range(n):
        u = math.sqrt(h) * rng.standard_normal()
        out[t] = u
        h = omega + alpha * u * u + beta * h
    return out


def test_log_returns_definition_and_validation():
    np.testing.assert_allclose(
        log_returns([100.0, 101.0, 99.0]),
        [math.log(1.01), math.log(99.0 / 101.0)],
        atol=1e-15,
    )
    with pytest.raises(InvalidInputError):
        log_returns([100.0])
    with pytest.raises(InvalidInputError):
        log_returns([100.0, -1.0])
    with pytest.raises(InvalidInputError):
        log_returns([[100.0, 101.0]])


def test_garch_log_likelihood_matches_direct_recursion():
    u = np.array([0.01, -0.02, 0.005])
    omega, alpha, beta = 1e-5, 0.1, 0.8
    h = float(np.var(u))
    expect = 0.0
    for x in u:
        expect += -0.5 * (math.log(2 * math.pi * h) + x * x / h)
        h = omega + alpha * x * x + beta * h
    assert garch_log_likelihood(u, omega, alpha, beta) == pytest.approx(expect, rel=1e-14)


def test_garch_log_likelihood_rejects_nonstationary_parameters():
    with pytest.raises(InvalidInputError):
        garch_log_likelihood(np.array([0.01, 0.02]), 1e-5, 0.5, 0.5)


def test_fit_recovers_likelihood_of_the_generating_parameters():
    # On a long simulated series the fitted parameters must be at least as
    # likely as the truth (they maximize this criterion), and materially
    # better than a flattened alternative.
    u = simulate_garch_returns(4000, **TRUE, seed=12)
    fit = fit_garch(u)
    ll_true = garch_log_likelihood(u, **TRUE)
    assert fit.log_likelihood >= ll_true - 1e-6
    ll_flat = garch_log_likelihood(u, float(np.var(u)) * 0.5, 0.25, 0.25)
    assert fit.log_likelihood > ll_flat
    # variance targeting: implied stationary variance equals the sample variance
    implied = fit.params.omega / (1.0 - fit.params.alpha - fit.params.beta)
    assert implied == pytest.approx(fit.sample_variance, rel=1e-9)
    assert fit.n_obs == 4000
    assert fit.converged


def test_fit_recovers_parameters_on_a_long_series():
    u = simulate_garch_returns(20_000, **TRUE, seed=5)
    fit = fit_garch(u)
    assert fit.params.alpha == pytest.approx(TRUE["alpha"], abs=0.03)
    assert fit.params.beta == pytest.approx(TRUE["beta"], abs=0.05)


def test_fit_requires_enough_data_and_finite_variance():
    with pytest.raises(InsufficientDataError):
        fit_garch(np.zeros(MIN_RETURNS - 1) + 0.01)
    with pytest.raises(InvalidInputError):
        fit_garch(np.zeros(MIN_RETURNS))  # zero variance
    bad = np.full(MIN_RETURNS, 0.01)
    bad[3] = np.nan
    with pytest.raises(InvalidInputError):
        fit_garch(bad)


def test_closes_by_date_dedupes_and_sorts():
    def q(date, close):
        return OptionQuote(
            quote_date=dt.date.fromisoformat(date),
            expiry_date=dt.date(2019, 12, 20),
            strike=100.0,
            side="C",
            price=5.0,
            volume=1.0,
            underlying_close=close,
        )

    quotes = [q("2019-01-03", 101.0), q("2019-01-02", 100.0), q("2019-01-03", 999.0)]
    assert closes_by_date(quotes) == [
        (dt.date(2019, 1, 2), 100.0),
        (dt.date(2019, 1, 3), 101.0),  # first quote for a date wins
    ]
