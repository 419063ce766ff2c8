"""Particle-approximated posterior Cramer-Rao lower bound per filter.

The information matrix J evolves by the recursion

    J_{t+1} = D22_t - D12_t' (J_t + D11_t)^{-1} D12_t,    J_0 = P_0^{-1},

where the D blocks are Monte-Carlo averages of gradient outer products:
D11 and D12 over particles distributed per the one-step joint smoothing
posterior, D22 over predicted particles weighted against the *next*
observation. Particles come from the filter under evaluation: its
Gaussian posterior seeds the cloud, the filter bank's own propagation
and weighting primitives move it forward.

J^{-1} is formed through the matrix-inversion-lemma expansion and checked
against a direct inverse; the direct inverse wins on disagreement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import (
    CovarianceError,
    InvalidInputError,
    NumericalFailureError,
    SingularityError,
)
from .filters import (
    FilterId,
    GaussianBelief,
    ParticleCloud,
    likelihood_logweights,
    normalize_logweights,
    propagate_cloud,
    systematic_resample,
)
from .linalg import floor_psd, regularized_inverse, safe_cholesky, symmetrize

logger = logging.getLogger(__name__)

INVERSE_CONSISTENCY_TOL = 1e-6
_PAIRWISE_CHUNK = 512


@dataclass
class FisherState:
    """Information matrix, its inverse, and the filter it belongs to."""

    j: np.ndarray
    j_inv: np.ndarray
    filter: FilterId | None = None

    @classmethod
    def initial(cls, p0, filter_id: FilterId | None = None) -> "FisherState":
        p0 = symmetrize(np.asarray(p0, dtype=float))
        return cls(j=regularized_inverse(p0, err=CovarianceError), j_inv=p0.copy(), filter=filter_id)


@dataclass
class DTriple:
    d11: np.ndarray
    d12: np.ndarray
    d22: np.ndarray


@dataclass
class SmoothedPair:
    """Joint draws (x_t, x_{t+1}) approximating the one-step smoothing posterior."""

    x_prev: np.ndarray  # (n, s)
    x_next: np.ndarray  # (n, s)
    weights: np.ndarray  # (n,), sums to one

    @property
    def n(self) -> int:
        return self.x_prev.shape[0]


def seed_particles(belief: GaussianBelief, n: int, rng: np.random.Generator, model=None) -> ParticleCloud:
    """Sample n particles from a Gaussian belief, projected onto the model domain."""
    if n < 2:
        raise InvalidInputError("need at least 2 particles")
    s = belief.mean.size
    scale = max(float(np.trace(belief.cov)) / s, 0.0)
    floored = floor_psd(belief.cov, floor=1e-18 * max(scale, 1.0))
    low = safe_cholesky(floored)
    draws = belief.mean + rng.standard_normal((n, s)) @ low.T
    if model is not None:
        draws = model.project_batch(draws)
    return ParticleCloud.uniform(draws)


def _pairwise_smoothing_terms(x_next: np.ndarray, means: np.ndarray, q_inv: np.ndarray, log_norm: float):
    """Row logsumexp of log N(x_next[i]; means[m], Q) plus the matched diagonal.

    Chunked so the n x n density matrix never materializes in full.
    """
    n = x_next.shape[0]
    qa = np.einsum("ni,ij,nj->n", x_next, q_inv, x_next)
    qb = np.einsum("mi,ij,mj->m", means, q_inv, means)
    cross_diag = np.einsum("ni,ij,nj->n", x_next, q_inv, means)
    log_diag = -0.5 * (qa + qb - 2.0 * cross_diag) + log_norm
    row_lse = np.empty(n)
    for start in range(0, n, _PAIRWISE_CHUNK):
        stop = min(start + _PAIRWISE_CHUNK, n)
        cross = x_next[start:stop] @ q_inv @ means.T
        quad = qa[start:stop, None] + qb[None, :] - 2.0 * cross
        row_lse[start:stop] = logsumexp(-0.5 * quad + log_norm, axis=1)
    return row_lse, log_diag


def joint_smoothing_weights(filtered_t: ParticleCloud, filtered_t1: ParticleCloud, ex, model) -> np.ndarray:
    """Normalized weights W pairing filtered_t[i] with filtered_t1[i].

    W_i is proportional to p(x_{t+1}^i | x_t^i) divided by the mixture
    density (1/n) sum_m p(x_{t+1}^i | x_t^m): the importance correction for
    the fact that the filtered particles at t+1 were drawn from the mixture
    over all ancestors, not from their index-matched partner.
    """
    if filtered_t.n != filtered_t1.n:
        raise InvalidInputError("filtered clouds must have equal particle counts")
    q = model.process_cov()
    q_inv = regularized_inverse(q, err=CovarianceError)
    sign, logdet = np.linalg.slogdet(q)
    if sign <= 0:
        raise CovarianceError("process covariance has non-positive determinant")
    s = filtered_t.particles.shape[1]
    log_norm = -0.5 * (s * math.log(2.0 * math.pi) + logdet)
    means = model.transition_batch(filtered_t.particles, ex)
    row_lse, log_diag = _pairwise_smoothing_terms(filtered_t1.particles, means, q_inv, log_norm)
    # the 1/n mixture constant cancels in the final normalization
    w, degenerate = normalize_logweights(log_diag - row_lse)
    if degenerate:
        logger.warning("smoothing weights underflowed; uniform fallback")
    return w


def smoothing_weights(
    filtered_t: ParticleCloud,
    filtered_t1: ParticleCloud,
    ex,
    model,
    rng: np.random.Generator,
) -> SmoothedPair:
    """Resampled joint pairs approximating p(x_t, x_{t+1} | y_{1:t+1}) with uniform weights."""
    w = joint_smoothing_weights(filtered_t, filtered_t1, ex, model)
    idx = systematic_resample(w, rng)
    n = idx.size
    return SmoothedPair(
        x_prev=filtered_t.particles[idx],
        x_next=filtered_t1.particles[idx],
        weights=np.full(n, 1.0 / n),
    )


def d_matrices(smoothed: SmoothedPair, predicted: ParticleCloud, ex, model) -> DTriple:
    """Monte-Carlo D blocks for one recursion step.

    Transition gradients are averaged at the smoothed draws of x_t,
    measurement gradients at the predicted draws of x_{t+1}.
    """
    q_inv = regularized_inverse(model.process_cov(), err=CovarianceError)
    r_inv = regularized_inverse(model.measurement_cov(), err=CovarianceError)

    f_jac = model.transition_jacobian_batch(smoothed.x_prev, ex)
    w_s = smoothed.weights
    d11 = np.einsum("n,nji,jk,nkl->il", w_s, f_jac, q_inv, f_jac, optimize=True)
    d12 = -np.einsum("n,nji,jk->ik", w_s, f_jac, q_inv, optimize=True)

    h_jac = model.measurement_jacobian_batch(predicted.particles, ex)
    w_p = predicted.weights
    d22 = q_inv + np.einsum("n,nmi,mp,npj->ij", w_p, h_jac, r_inv, h_jac, optimize=True)

    d11 = symmetrize(d11)
    d22 = symmetrize(d22)
    if not all(np.all(np.isfinite(m)) for m in (d11, d12, d22)):
        raise NumericalFailureError("non-finite D matrices")
    return DTriple(d11=d11, d12=d12, d22=d22)


def _ensure_pd(j: np.ndarray) -> np.ndarray:
    vals = np.linalg.eigvalsh(j)
    if vals.min() > 0.0:
        return j
    floor = 1e-12 * max(float(np.abs(vals).max()), 1.0)
    logger.info("information matrix floored: min eigenvalue %.3e -> %.3e", vals.min(), floor)
    return floor_psd(j, floor=floor)


def pfim_step(prev: FisherState, d: DTriple) -> FisherState:
    """Advance the information recursion one step.

    The inverse comes from the matrix-inversion-lemma expansion

        J^{-1} = D22^{-1} - D22^{-1} D12' (D12 D22^{-1} D12' - (J + D11))^{-1} D12 D22^{-1}

    and is verified against direct inversion; disagreement beyond
    tolerance falls back to the direct inverse.
    """
    mid = symmetrize(prev.j + d.d11)
    mid_inv = regularized_inverse(mid, err=SingularityError)
    j_next = _ensure_pd(symmetrize(d.d22 - d.d12.T @ mid_inv @ d.d12))

    d22_inv = regularized_inverse(d.d22, err=SingularityError)
    inner = symmetrize(d.d12 @ d22_inv @ d.d12.T - mid)
    inner_inv = regularized_inverse(inner, err=SingularityError)
    j_inv = symmetrize(d22_inv - d22_inv @ d.d12.T @ inner_inv @ d.d12 @ d22_inv)

    dim = j_next.shape[0]
    err = float(np.max(np.abs(j_inv @ j_next - np.eye(dim))))
    if err > INVERSE_CONSISTENCY_TOL:
        logger.info("lemma-form inverse off by %.3e; using direct inversion", err)
        j_inv = symmetrize(regularized_inverse(j_next, err=SingularityError))
        err = float(np.max(np.abs(j_inv @ j_next - np.eye(dim))))
        if err > INVERSE_CONSISTENCY_TOL:
            raise SingularityError(f"information matrix inverse inconsistent: {err:.3e}")
    return FisherState(j=j_next, j_inv=j_inv, filter=prev.filter)


def pcrlb_step(
    prev: FisherState,
    belief: GaussianBelief,
    next_obs,
    ex_next,
    model,
    n: int,
    rng: np.random.Generator,
) -> FisherState:
    """One full bound update for a single filter.

    Seeds a cloud from the filter's posterior, runs it through the noisy
    transition, weights against the next observation, resamples, forms
    the joint smoothing pairs, and advances J.
    """
    filtered_t = seed_particles(belief, n, rng, model)
    predicted = propagate_cloud(filtered_t, ex_next, model, rng)
    loglik = likelihood_logweights(predicted.particles, next_obs, ex_next, model)
    with np.errstate(divide="ignore"):
        logw = np.log(predicted.weights) + loglik
    w, degenerate = normalize_logweights(logw)
    if degenerate:
        logger.warning("bound-update particle weights underflowed; uniform fallback")
    idx = systematic_resample(w, rng)
    filtered_t1 = ParticleCloud.uniform(predicted.particles[idx])
    smoothed = smoothing_weights(filtered_t, filtered_t1, ex_next, model, rng)
    d = d_matrices(smoothed, predicted, ex_next, model)
    return pfim_step(prev, d)
