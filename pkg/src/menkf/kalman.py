"""Exact linear-Gaussian Kalman filter.

Small and deliberately plain: this module is the reference answer that
the ensemble code is checked against, so it favors the textbook update
over clever factorizations. The only numerical care taken is that the
innovation covariance is solved through a Cholesky factorization and
posterior covariances are re-symmetrized.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, InvalidInputError
from .numerics import solve_spd, symmetrize


@dataclass
class GaussianBelief:
    """Mean vector and covariance matrix of a Gaussian state estimate."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.mean.ndim != 1:
            raise DimensionError(f"mean must be 1-D, got ndim={self.mean.ndim}")
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise DimensionError(f"cov shape {self.cov.shape} does not match state dim {n}")
        scale = 1.0 + float(np.max(np.abs(self.cov))) if self.cov.size else 1.0
        if float(np.max(np.abs(self.cov - self.cov.T), initial=0.0)) > 1e-8 * scale:
            raise InvalidInputError("cov must be symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class LinearStateSpace:
    """One step of a linear-Gaussian state-space model.

    H : observation matrix (m x n)
    M : state transition matrix (n x n)
    R : observation noise covariance (m x m)
    Q : process noise covariance (n x n)
    """

    H: np.ndarray
    M: np.ndarray
    R: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        if self.H.ndim != 2:
            raise DimensionError("H must be 2-D")
        m, n = self.H.shape
        if self.M.shape != (n, n):
            raise DimensionError(f"M shape {self.M.shape} does not match state dim {n}")
        if self.R.shape != (m, m):
            raise DimensionError(f"R shape {self.R.shape} does not match obs dim {m}")
        if self.Q.shape != (n, n):
            raise DimensionError(f"Q shape {self.Q.shape} does not match state dim {n}")

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]

    @property
    def obs_dim(self) -> int:
        return self.H.shape[0]


def kf_forecast(prior: GaussianBelief, ss: LinearStateSpace) -> GaussianBelief:
    """Push a belief through the transition: mean M u, cov M S M' + Q."""
    if prior.dim != ss.state_dim:
        raise DimensionError(f"belief dim {prior.dim} does not match model dim {ss.state_dim}")
    mean = ss.M @ prior.mean
    cov = symmetrize(ss.M @ prior.cov @ ss.M.T + ss.Q)
    return GaussianBelief(mean, cov)


def kf_update(forecast: GaussianBelief, y, ss: LinearStateSpace) -> GaussianBelief:
    """Condition a forecast on one observation vector.

    K = S H' (H S H' + R)^-1, computed by solving rather than inverting;
    posterior covariance uses the plain (I - K H) S form, re-symmetrized.
    """
    if forecast.dim != ss.state_dim:
        raise DimensionError(f"belief dim {forecast.dim} does not match model dim {ss.state_dim}")
    y = np.asarray(y, dtype=float)
    if y.shape != (ss.obs_dim,):
        raise DimensionError(f"y shape {y.shape} does not match obs dim {ss.obs_dim}")
    innov_cov = symmetrize(ss.H @ forecast.cov @ ss.H.T + ss.R)
    # K' = (H S H' + R)^-1 H S, so one SPD solve yields the gain.
    gain = solve_spd(innov_cov, ss.H @ forecast.cov).T
    mean = forecast.mean + gain @ (y - ss.H @ forecast.mean)
    eye = np.eye(forecast.dim)
    cov = symmetrize((eye - gain @ ss.H) @ forecast.cov)
    return GaussianBelief(mean, cov)
