import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from volswitch.exceptions import CovarianceError, SingularityError
from volswitch.linalg import (
    floor_psd,
    regularized_inverse,
    safe_cholesky,
    substream,
    symmetrize,
)

square = arrays(
    np.float64,
    (3, 3),
    elements=st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False),
)


@given(square)
def test_symmetrize_is_symmetric_and_idempotent(m):
    sym = symmetrize(m)
    assert np.array_equal(sym, sym.T)
    assert np.allclose(symmetrize(sym), sym)
    assert np.allclose(sym, 0.5 * (m + m.T))


@given(square, st.floats(0.0, 1.0))
@settings(max_examples=60)
def test_floor_psd_clips_spectrum(m, floor):
    out = floor_psd(m, floor=floor)
    vals = np.linalg.eigvalsh(out)
    assert vals.min() >= floor - 1e-9 * max(1.0, abs(floor))


def test_floor_psd_leaves_healthy_matrices_alone():
    m = np.diag([2.0, 3.0, 4.0])
    out = floor_psd(m, floor=1.0)
    # untouched apart from symmetrization, so no eigh round-trip noise
    assert np.array_equal(out, m)


def test_floor_psd_lifts_negative_eigenvalue():
    m = np.diag([1.0, -0.5])
    out = floor_psd(m, floor=1e-6)
    assert np.linalg.eigvalsh(out).min() >= 1e-6 - 1e-18
    assert out[0, 0] == pytest.approx(1.0)


def test_regularized_inverse_matches_plain_inverse_when_well_conditioned():
    m = np.array([[2.0, 0.3], [0.3, 1.5]])
    assert np.allclose(regularized_inverse(m), np.linalg.inv(m), atol=1e-12)


def test_regularized_inverse_handles_singular_input():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])  # rank one
    out = regularized_inverse(m)
    assert np.all(np.isfinite(out))
    # ridge keeps the well-determined direction accurate
    ones = np.ones(2) / np.sqrt(2.0)
    assert ones @ out @ ones == pytest.approx(0.5, rel=1e-3)


def test_regularized_inverse_rejects_non_finite():
    m = np.array([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(SingularityError):
        regularized_inverse(m)


def test_regularized_inverse_custom_error_type():
    with pytest.raises(CovarianceError):
        regularized_inverse(np.full((2, 2), np.inf), err=CovarianceError)


@given(square)
@settings(max_examples=60)
def test_safe_cholesky_factors_psd_matrices(m):
    psd = m @ m.T + 1e-6 * np.eye(3)
    chol = safe_cholesky(psd)
    assert np.allclose(chol @ chol.T, psd, atol=1e-8)
    assert np.allclose(chol, np.tril(chol))


def test_safe_cholesky_jitters_rank_deficient_input():
    m = np.outer([1.0, 2.0], [1.0, 2.0])
    chol = safe_cholesky(m)
    assert np.allclose(chol @ chol.T, m, atol=1e-6)


def test_safe_cholesky_rejects_indefinite():
    with pytest.raises(CovarianceError):
        safe_cholesky(np.diag([1.0, -1.0]))


def test_safe_cholesky_rejects_non_finite():
    with pytest.raises(CovarianceError):
        safe_cholesky(np.array([[np.inf, 0.0], [0.0, 1.0]]))


def test_substream_is_deterministic_and_key_sensitive():
    a = substream(7, 1, 2, 3).standard_normal(4)
    b = substream(7, 1, 2, 3).standard_normal(4)
    c = substream(7, 1, 2, 4).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_substream_rejects_negative_keys():
    with pytest.raises(ValueError):
        substream(1, -2)
