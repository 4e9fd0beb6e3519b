"""Stochastic ensemble Kalman filter update with per-member observation noise.

Members are rows of an (N, d) matrix. Sample covariances use the 1/N
normalization, and the update perturbs the observation once per member
with that member's own noise variance, so the gain is member-dependent:

    K_i = L (M + obs_var[i] I)^-1,  L = S H',  M = H S H'

L and M are shared across members and are assembled from centered
products without ever forming the full d x d sample covariance.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, InvalidInputError
from .numerics import RngStream, solve_spd, symmetrize


@dataclass
class Ensemble:
    """State ensemble; row i is member i."""

    members: np.ndarray

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=float)
        if self.members.ndim != 2:
            raise DimensionError(f"members must be 2-D, got ndim={self.members.ndim}")
        if self.members.shape[0] < 2:
            raise InvalidInputError(f"need at least 2 members, got {self.members.shape[0]}")
        if not np.all(np.isfinite(self.members)):
            raise InvalidInputError("members must be finite")

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]


def ensemble_moments(e: Ensemble) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and sample covariance (1/N normalization) of an ensemble."""
    mean = e.members.mean(axis=0)
    centered = e.members - mean
    cov = symmetrize(centered.T @ centered / e.size)
    return mean, cov


def member_perturbations(rng: RngStream, n_members: int, obs_dim: int,
                         obs_var: np.ndarray) -> np.ndarray:
    """Observation perturbations, one row per member.

    Row i is drawn from the i-th child stream of rng with covariance
    obs_var[i] * I, which keeps the draw independent of execution order
    when members are processed in parallel.
    """
    out = np.empty((n_members, obs_dim))
    scale = np.sqrt(obs_var)
    for i in range(n_members):
        out[i] = rng.child(i).generator().standard_normal(obs_dim) * scale[i]
    return out


def enkf_update(e: Ensemble, y, obs_matrix, obs_var, rng: RngStream,
                ridge: float = 0.0, inflation: float = 1.0) -> Ensemble:
    """One stochastic EnKF analysis step; returns a new ensemble.

    Parameters
    ----------
    e : forecast ensemble.
    y : observation vector, length m.
    obs_matrix : linear observation operator H, shape (m, d).
    obs_var : per-member observation noise variance, length N, all > 0.
    rng : stream used for the perturbed observations (one child per member).
    ridge : optional diagonal added to the solve matrix M + obs_var[i] I.
    inflation : optional multiplicative spread inflation applied to the
        forecast deviations before the gain is computed (1.0 = off).
    """
    h = np.asarray(obs_matrix, dtype=float)
    if h.ndim != 2 or h.shape[1] != e.dim:
        raise DimensionError(f"obs_matrix shape {h.shape} does not match state dim {e.dim}")
    m = h.shape[0]
    y = np.asarray(y, dtype=float)
    if y.shape != (m,):
        raise DimensionError(f"y shape {y.shape} does not match obs dim {m}")
    obs_var = np.asarray(obs_var, dtype=float)
    if obs_var.shape != (e.size,):
        raise DimensionError(f"obs_var length {obs_var.shape} does not match N={e.size}")
    if np.any(obs_var <= 0.0) or not np.all(np.isfinite(obs_var)):
        raise InvalidInputError("obs_var entries must be positive and finite")
    if inflation <= 0.0:
        raise InvalidInputError(f"inflation must be > 0, got {inflation}")

    members = e.members
    mean = members.mean(axis=0)
    if inflation != 1.0:
        members = mean + inflation * (members - mean)

    predicted = members @ h.T
    centered_state = members - members.mean(axis=0)
    centered_pred = predicted - predicted.mean(axis=0)
    # L = S H' and M = H S H' assembled without the d x d covariance.
    cross = centered_state.T @ centered_pred / e.size
    obs_block = symmetrize(centered_pred.T @ centered_pred / e.size)

    perturbed = member_perturbations(rng, e.size, m, obs_var)
    residual = y[None, :] + perturbed - predicted

    shifts = np.empty_like(members)
    for value in np.unique(obs_var):
        idx = np.flatnonzero(obs_var == value)
        solve_matrix = obs_block + (value + ridge) * np.eye(m)
        solved = solve_spd(solve_matrix, residual[idx].T)
        shifts[idx] = (cross @ solved).T
    return Ensemble(members + shifts)
