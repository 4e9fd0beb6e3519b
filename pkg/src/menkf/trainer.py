"""Gradient-free trainer for a two-arm surrogate.

The model averages two feedforward arms with one convex weight and
learns everything — both arms' weights, the averaging logit a, and an
observation-noise parameter b — with a stochastic ensemble Kalman
filter over the flat augmented state [w_f | w_g | a | b]:

    prediction  = (1 - sigmoid(a)) * f(V_f, w_f) + sigmoid(a) * g(V_g, w_g)
    noise var   = softplus(b)

The state transition is the identity (optionally jittered), so all
learning happens in the analysis step. The measurement map is nonlinear
in the state, so each member is augmented with its own predicted
observations and the gain is taken from the joint sample covariance of
(state, prediction); with a linear map this reduces exactly to the
textbook ensemble update, which is what the oracle tests check.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .arms import ArmSpec, StateLayout, forward_batch, param_count
from .enkf import Ensemble, enkf_update
from .exceptions import (DimensionError, InvalidInputError, NotSpdError,
                         NumericError)
from .kalman import GaussianBelief, LinearStateSpace
from .numerics import RngStream, kron

_VARIANCE_INITS = ("gaussian", "gamma_shape_scale")
_GAMMA_SHAPE = 100.0
_GAMMA_SCALE = 0.01


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), overflow-safe."""
    return scipy.special.expit(x)


def softplus(x):
    """log(1 + exp(x)), computed stably for large |x|."""
    return np.logaddexp(0.0, x)


def inv_softplus(y):
    """Inverse of softplus; y must be positive."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise InvalidInputError("inv_softplus requires positive input")
    out = np.where(y > 30.0, y + np.log1p(-np.exp(-np.minimum(y, 700.0))),
                   np.log(np.expm1(np.minimum(y, 30.0))))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class MenkfConfig:
    """Trainer configuration.

    fixed_arm_logit / fixed_noise_var pin a and b to constants for the
    whole run (members start there and are reset after each update);
    with identity arms this makes the whole model linear-Gaussian,
    which is how the exact-filter comparisons are run.
    """

    arm_f: ArmSpec
    arm_g: ArmSpec
    ensemble_size: int = 216
    init_var: float = 16.0
    batch_size: int = 16
    passes_over_data: int = 1
    jitter_var: float = 0.0
    variance_init: str = "gaussian"
    seed: int = 0
    shuffle_batches: bool = False
    fixed_arm_logit: float | None = None
    fixed_noise_var: float | None = None

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise InvalidInputError(f"ensemble_size must be >= 2, got {self.ensemble_size}")
        if self.init_var <= 0.0:
            raise InvalidInputError(f"init_var must be > 0, got {self.init_var}")
        if self.batch_size < 1:
            raise InvalidInputError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.passes_over_data < 1:
            raise InvalidInputError(f"passes_over_data must be >= 1, got {self.passes_over_data}")
        if self.jitter_var < 0.0:
            raise InvalidInputError(f"jitter_var must be >= 0, got {self.jitter_var}")
        if self.variance_init not in _VARIANCE_INITS:
            raise InvalidInputError(
                f"variance_init must be one of {_VARIANCE_INITS}, got {self.variance_init!r}")
        if self.fixed_noise_var is not None and self.fixed_noise_var <= 0.0:
            raise InvalidInputError("fixed_noise_var must be > 0 when set")

    def layout(self) -> StateLayout:
        return StateLayout.from_specs(self.arm_f, self.arm_g)


@dataclass
class Batch:
    """One training batch: the two feature blocks and their target logits."""

    v_f: np.ndarray
    v_g: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.v_f = np.asarray(self.v_f, dtype=float)
        self.v_g = np.asarray(self.v_g, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.v_f.ndim != 2 or self.v_g.ndim != 2 or self.y.ndim != 1:
            raise DimensionError("v_f and v_g must be 2-D, y must be 1-D")
        rows = self.y.shape[0]
        if self.v_f.shape[0] != rows or self.v_g.shape[0] != rows:
            raise DimensionError(
                f"row mismatch: v_f {self.v_f.shape[0]}, v_g {self.v_g.shape[0]}, y {rows}")
        if rows == 0:
            raise InvalidInputError("batch must contain at least one row")
        if not (np.all(np.isfinite(self.v_f)) and np.all(np.isfinite(self.v_g))
                and np.all(np.isfinite(self.y))):
            raise InvalidInputError("batch contains non-finite values")

    @property
    def size(self) -> int:
        return self.y.shape[0]


class AugmentedMember:
    """Read-only view of one member row under a layout."""

    def __init__(self, vector: np.ndarray, layout: StateLayout):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (layout.dim,):
            raise DimensionError(f"member length {vector.shape} does not match layout dim {layout.dim}")
        self._v = vector
        self._layout = layout

    @property
    def w_f(self) -> np.ndarray:
        return self._v[self._layout.wf_slice]

    @property
    def w_g(self) -> np.ndarray:
        return self._v[self._layout.wg_slice]

    @property
    def a(self) -> float:
        return float(self._v[self._layout.a_index])

    @property
    def b(self) -> float:
        return float(self._v[self._layout.b_index])

    @property
    def weight_g(self) -> float:
        return float(sigmoid(self.a))

    @property
    def weight_f(self) -> float:
        return 1.0 - self.weight_g

    @property
    def noise_var(self) -> float:
        return float(softplus(self.b))


def make_batches(v_f, v_g, y, batch_size: int, shuffle: bool = False,
                 rng: RngStream | None = None) -> list[Batch]:
    """Chunk a dataset into contiguous batches; the last one may be short.

    shuffle permutes the rows once before chunking and needs an rng.
    """
    v_f = np.asarray(v_f, dtype=float)
    v_g = np.asarray(v_g, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = y.shape[0]
    if shuffle:
        if rng is None:
            raise InvalidInputError("shuffle=True requires an rng")
        order = rng.generator().permutation(rows)
        v_f, v_g, y = v_f[order], v_g[order], y[order]
    return [Batch(v_f[i:i + batch_size], v_g[i:i + batch_size], y[i:i + batch_size])
            for i in range(0, rows, batch_size)]


def _apply_fixed(members: np.ndarray, cfg: MenkfConfig, layout: StateLayout) -> None:
    if cfg.fixed_arm_logit is not None:
        members[:, layout.a_index] = cfg.fixed_arm_logit
    if cfg.fixed_noise_var is not None:
        members[:, layout.b_index] = inv_softplus(cfg.fixed_noise_var)


def init_ensemble(cfg: MenkfConfig, layout: StateLayout, rng: RngStream) -> Ensemble:
    """Draw the starting ensemble.

    Active coordinates are i.i.d. N(0, init_var). Under
    variance_init="gamma_shape_scale" the noise variance itself is drawn
    from Gamma(100, 0.01) (mean 1) and b is set to its softplus
    pre-image instead.
    """
    active = layout.active_indices()
    members = np.zeros((cfg.ensemble_size, layout.dim))
    gen = rng.child(0).generator()
    members[:, active] = gen.normal(0.0, math.sqrt(cfg.init_var),
                                    size=(cfg.ensemble_size, active.size))
    if cfg.variance_init == "gamma_shape_scale":
        draws = rng.child(1).generator().gamma(_GAMMA_SHAPE, _GAMMA_SCALE,
                                               size=cfg.ensemble_size)
        members[:, layout.b_index] = inv_softplus(draws)
    _apply_fixed(members, cfg, layout)
    return Ensemble(members)


def arm_averaged_logits(members: np.ndarray, v_f, v_g, layout: StateLayout,
                        spec_f: ArmSpec, spec_g: ArmSpec) -> np.ndarray:
    """Per-member convex combination of the two arm outputs, (N, rows)."""
    out_f = forward_batch(spec_f, members[:, layout.wf_slice], v_f)
    out_g = forward_batch(spec_g, members[:, layout.wg_slice], v_g)
    weight_g = sigmoid(members[:, layout.a_index])[:, None]
    return (1.0 - weight_g) * out_f + weight_g * out_g


def measure(e: Ensemble, batch: Batch, layout: StateLayout,
            spec_f: ArmSpec, spec_g: ArmSpec) -> np.ndarray:
    """Predicted observations for every member on one batch, (N, m)."""
    return arm_averaged_logits(e.members, batch.v_f, batch.v_g, layout, spec_f, spec_g)


def _joint_update(members: np.ndarray, predictions: np.ndarray, y: np.ndarray,
                  obs_var: np.ndarray, rng: RngStream,
                  batch_index: int | None) -> np.ndarray:
    """Shift members using the joint (state, prediction) sample covariance.

    Appends each member's predictions as extra coordinates and updates
    with the operator that reads exactly those coordinates; the selected
    gain block is then Cov(state, pred) (Cov(pred, pred) + var I)^-1.
    Retries once with a relative ridge if the solve fails.
    """
    d = members.shape[1]
    m = predictions.shape[1]
    joint = Ensemble(np.hstack([members, predictions]))
    selector = np.zeros((m, d + m))
    selector[:, d:] = np.eye(m)
    try:
        updated = enkf_update(joint, y, selector, obs_var, rng)
    except NotSpdError:
        ridge = 1e-8 * float(np.var(predictions, axis=0).sum()) / m
        try:
            updated = enkf_update(joint, y, selector, obs_var, rng, ridge=ridge)
        except NotSpdError as err:
            where = "" if batch_index is None else f" at batch {batch_index}"
            raise NumericError(
                f"observation covariance block failed to factor{where}, "
                f"even with ridge {ridge:g}") from err
    return updated.members[:, :d]


def _jittered(members: np.ndarray, cfg: MenkfConfig, layout: StateLayout,
              rng: RngStream) -> np.ndarray:
    members = members.copy()
    if cfg.jitter_var > 0.0:
        active = layout.active_indices()
        gen = rng.generator()
        members[:, active] += gen.normal(0.0, math.sqrt(cfg.jitter_var),
                                         size=(members.shape[0], active.size))
    return members


def train_step(e: Ensemble, batch: Batch, cfg: MenkfConfig, layout: StateLayout,
               rng: RngStream, batch_index: int | None = None) -> Ensemble:
    """One forecast-and-analysis step on one batch; returns a new ensemble.

    rng children: 0 drives the (optional) transition jitter, 1 drives the
    per-member observation perturbations.
    """
    if batch.v_f.shape[1] != cfg.arm_f.input_dim or batch.v_g.shape[1] != cfg.arm_g.input_dim:
        raise DimensionError("batch feature widths do not match the arm specs")
    members = _jittered(e.members, cfg, layout, rng.child(0))
    _apply_fixed(members, cfg, layout)
    predictions = arm_averaged_logits(members, batch.v_f, batch.v_g, layout,
                                      cfg.arm_f, cfg.arm_g)
    obs_var = softplus(members[:, layout.b_index])
    updated = _joint_update(members, predictions, batch.y, obs_var,
                            rng.child(1), batch_index)
    updated = np.ascontiguousarray(updated)
    layout.apply_structural_zeros(updated)
    _apply_fixed(updated, cfg, layout)
    return Ensemble(updated)


@dataclass
class TraceRecord:
    """Per-batch diagnostics; arm weight and noise variance are read from
    the post-update ensemble mean, the innovation from the pre-update one."""

    step: int
    pass_index: int
    batch_index: int
    weight_g: float
    noise_var: float
    innovation_norm: float


@dataclass
class TrainingTrace:
    records: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [vars(r).copy() for r in self.records]


def fit(batches, cfg: MenkfConfig, rng: RngStream) -> tuple[Ensemble, TrainingTrace]:
    """Run the filter over all batches for cfg.passes_over_data passes.

    rng children: 0 initializes the ensemble, 1 shuffles batch order
    (child 1.p for pass p, when cfg.shuffle_batches), 2 + t drives step t.
    With one batch and one pass this is exactly init_ensemble followed by
    a single train_step.
    """
    batches = list(batches)
    if not batches:
        raise InvalidInputError("need at least one batch")
    layout = cfg.layout()
    ens = init_ensemble(cfg, layout, rng.child(0))
    trace = TrainingTrace()
    step = 0
    for pass_index in range(cfg.passes_over_data):
        order = list(range(len(batches)))
        if cfg.shuffle_batches:
            order = list(rng.child(1).child(pass_index).generator().permutation(len(batches)))
        for batch_index in order:
            batch = batches[batch_index]
            pre_mean = measure(ens, batch, layout, cfg.arm_f, cfg.arm_g).mean(axis=0)
            innovation = float(np.linalg.norm(batch.y - pre_mean))
            ens = train_step(ens, batch, cfg, layout, rng.child(2 + step), batch_index)
            trace.records.append(TraceRecord(
                step=step,
                pass_index=pass_index,
                batch_index=batch_index,
                weight_g=float(sigmoid(ens.members[:, layout.a_index].mean())),
                noise_var=float(softplus(ens.members[:, layout.b_index].mean())),
                innovation_norm=innovation,
            ))
            step += 1
    return ens, trace


def build_vec_operator(obs_matrix, column_weights) -> np.ndarray:
    """Lift a per-column operator to the vec of a matrix state.

    For X with c columns, column weight vector G (c x 1) and row operator
    H (m x r), returns the (m, c*r) matrix applying H X G to vec(X):
    kron(G.T, H).
    """
    h = np.asarray(obs_matrix, dtype=float)
    g = np.asarray(column_weights, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[1] != 1:
        raise DimensionError(f"column_weights must be a single column, got {g.shape}")
    return kron(g.T, h)


def train_step_explicit(e: Ensemble, batch: Batch, cfg: MenkfConfig,
                        layout: StateLayout, rng: RngStream) -> Ensemble:
    """train_step with the lifted operator materialized.

    Each member is expanded to the vec of the full two-column state
    matrix, prediction rows included, and updated with the explicit
    operator kron([1, 1], [I_m, 0]). Kept as the slow reference path for
    equivalence tests; matches train_step to floating-point noise when
    given the same rng.
    """
    members = _jittered(e.members, cfg, layout, rng.child(0))
    _apply_fixed(members, cfg, layout)
    weight_g = sigmoid(members[:, layout.a_index])[:, None]
    out_f = (1.0 - weight_g) * forward_batch(cfg.arm_f, members[:, layout.wf_slice], batch.v_f)
    out_g = weight_g * forward_batch(cfg.arm_g, members[:, layout.wg_slice], batch.v_g)

    m = batch.size
    ch = layout.column_height
    joint = np.hstack([out_f, members[:, :ch], out_g, members[:, ch:]])
    row_selector = np.hstack([np.eye(m), np.zeros((m, ch))])
    operator = build_vec_operator(row_selector, np.ones((2, 1)))

    obs_var = softplus(members[:, layout.b_index])
    updated = enkf_update(Ensemble(joint), batch.y, operator, obs_var, rng.child(1))
    new_members = np.hstack([updated.members[:, m:m + ch],
                             updated.members[:, 2 * m + ch:]])
    layout.apply_structural_zeros(new_members)
    _apply_fixed(new_members, cfg, layout)
    return Ensemble(new_members)


def _linear_coefficients(spec: ArmSpec, v: np.ndarray) -> np.ndarray:
    if spec.hidden_dims != ():
        raise InvalidInputError("linear reference requires arms with no hidden layers")
    return np.hstack([v, np.ones((v.shape[0], 1))])


def linear_reference_system(batch: Batch, cfg: MenkfConfig,
                            layout: StateLayout) -> tuple[GaussianBelief, LinearStateSpace]:
    """Exact linear-Gaussian equivalent of one training step.

    Valid only when both arms are linear (no hidden layers) and a and b
    are pinned via fixed_arm_logit / fixed_noise_var: the measurement is
    then an affine map of the member vector and the filter posterior has
    a closed form. Returns the prior belief over the flat state and the
    one-step state-space model; frozen and structural coordinates get
    zero prior variance and a zero observation column, so they pass
    through the exact filter untouched.
    """
    if cfg.fixed_arm_logit is None or cfg.fixed_noise_var is None:
        raise InvalidInputError("linear reference requires fixed_arm_logit and fixed_noise_var")
    weight_g = float(sigmoid(cfg.fixed_arm_logit))
    coeff_f = (1.0 - weight_g) * _linear_coefficients(cfg.arm_f, batch.v_f)
    coeff_g = weight_g * _linear_coefficients(cfg.arm_g, batch.v_g)

    m = batch.size
    obs = np.zeros((m, layout.dim))
    obs[:, layout.wf_slice] = coeff_f
    obs[:, layout.wg_slice] = coeff_g

    mean = np.zeros(layout.dim)
    mean[layout.a_index] = cfg.fixed_arm_logit
    mean[layout.b_index] = inv_softplus(cfg.fixed_noise_var)
    prior_var = np.zeros(layout.dim)
    prior_var[layout.wf_slice] = cfg.init_var
    prior_var[layout.wg_slice] = cfg.init_var
    prior = GaussianBelief(mean, np.diag(prior_var))

    ss = LinearStateSpace(
        H=obs,
        M=np.eye(layout.dim),
        R=cfg.fixed_noise_var * np.eye(m),
        Q=np.zeros((layout.dim, layout.dim)),
    )
    return prior, ss
