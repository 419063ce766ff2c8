"""Generic additive-Gaussian state-space model interface.

Every filter and the information recursion work against this interface,
so synthetic test models (e.g. a linear-Gaussian one) run through the
exact same code paths as the option-pricing model.

Models are batch-shaped: the primitives take ``(n, s)`` arrays of states
and return stacked results. Scalar call sites go through the thin
single-state wrappers.
"""

from __future__ import annotations

import numpy as np

from .linalg import symmetrize


class StateSpaceModel:
    """x_{t+1} = f(x_t) + w,  y_t = g(x_t) + z,  w ~ N(0,Q), z ~ N(0,R)."""

    state_dim: int
    meas_dim: int

    def transition_batch(self, states: np.ndarray, ex, noise=None) -> np.ndarray:
        raise NotImplementedError

    def transition_jacobian_batch(self, states: np.ndarray, ex) -> np.ndarray:
        return np.stack([self.transition_jacobian(x, ex) for x in states])

    def transition_jacobian(self, state: np.ndarray, ex) -> np.ndarray:
        raise NotImplementedError

    def measurement_batch(self, states: np.ndarray, ex) -> np.ndarray:
        raise NotImplementedError

    def measurement_jacobian_batch(self, states: np.ndarray, ex) -> np.ndarray:
        raise NotImplementedError

    def process_cov(self) -> np.ndarray:
        raise NotImplementedError

    def measurement_cov(self) -> np.ndarray:
        raise NotImplementedError

    def project_batch(self, states: np.ndarray) -> np.ndarray:
        """Clamp states back onto the model's valid domain. Identity by default."""
        return states

    # -- single-state conveniences ------------------------------------

    def transition(self, state, ex, noise=None) -> np.ndarray:
        n = None if noise is None else np.asarray(noise, dtype=float)[None, :]
        return self.transition_batch(np.asarray(state, dtype=float)[None, :], ex, n)[0]

    def measurement(self, state, ex) -> np.ndarray:
        return self.measurement_batch(np.asarray(state, dtype=float)[None, :], ex)[0]

    def measurement_jacobian(self, state, ex) -> np.ndarray:
        return self.measurement_jacobian_batch(np.asarray(state, dtype=float)[None, :], ex)[0]

    def project(self, state) -> np.ndarray:
        return self.project_batch(np.asarray(state, dtype=float)[None, :])[0]


class LinearGaussianModel(StateSpaceModel):
    """x' = A x + w, y = C x + z. Exact-Kalman territory, used as a test oracle target."""

    def __init__(self, a, c, q, r):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.c = np.atleast_2d(np.asarray(c, dtype=float))
        self.q = symmetrize(np.atleast_2d(np.asarray(q, dtype=float)))
        self.r = np.atleast_2d(np.asarray(r, dtype=float))
        self.state_dim = self.a.shape[0]
        self.meas_dim = self.c.shape[0]

    def transition_batch(self, states, ex, noise=None):
        out = states @ self.a.T
        if noise is not None:
            out = out + noise
        return out

    def transition_jacobian(self, state, ex):
        return self.a

    def transition_jacobian_batch(self, states, ex):
        return np.broadcast_to(self.a, (states.shape[0],) + self.a.shape)

    def measurement_batch(self, states, ex):
        return states @ self.c.T

    def measurement_jacobian_batch(self, states, ex):
        return np.broadcast_to(self.c, (states.shape[0],) + self.c.shape)

    def process_cov(self):
        return self.q

    def measurement_cov(self):
        return self.r
