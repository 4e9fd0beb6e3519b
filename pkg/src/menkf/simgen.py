"""Synthetic data generator for the replicate studies.

One base draw fixes the two feature blocks and the true class-one
probabilities; replicates then re-draw only the noise. The truth is a
fixed random network of the first block V_f, so arm f sees exactly the
information that generated the data, while V_g is a rank-limited noisy
mix of V_f — related to the signal but strictly worse. Scenarios:

    well_specified   train on (V_f, V_g) as generated
    misspecified     arm f's block replaced by a fresh uninformative
                     matrix of the same shape, per replicate
    stacked_average  targets become the logit of the average of two
                     upstream probability estimates (one from each
                     block), so neither arm suffices alone

Per-replicate targets are the scenario's base logits plus centered
Gaussian noise with sd surrogate_sd — the stand-in for an upstream
model's fitted outputs. Labels are thresholded perturbed probabilities
and are carried along for realism; the trainer itself regresses logits.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, InvalidInputError
from .numerics import RngStream
from .trainer import sigmoid

SCENARIOS = ("well_specified", "misspecified", "stacked_average")

# Fixed generator internals; changing them changes every dataset.
# Feature entries are kept at embedding-like scale (sd _EMB_SD, so row
# norms stay small); with the trainer's wide weight prior this keeps
# prior predictive spread moderate, which is what makes one-digit pass
# counts land in a sensible posterior-spread regime.
_EMB_SD = 0.3
_TRUTH_HIDDEN = 8
_TRUTH_PREACT_SD = 0.5
_LOGIT_SCALE = 3.0
_MIX_RANK = 8
_MIX_SIGNAL_SHARE = 0.4
_LOGIT_EPS = 1e-12


def logit(p):
    """Inverse of the logistic function, clipped away from 0 and 1."""
    p = np.clip(np.asarray(p, dtype=float), _LOGIT_EPS, 1.0 - _LOGIT_EPS)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class SimConfig:
    """Generator settings; seed is owned by the caller's RngStream."""

    m: int = 74
    replicates: int = 50
    perturb_sd: float = 0.01
    threshold: float = 0.5
    p: int = 32
    q: int = 32
    scenario: str = "well_specified"
    surrogate_sd: float = 0.05

    def __post_init__(self):
        if self.m < 2:
            raise InvalidInputError(f"m must be >= 2, got {self.m}")
        if self.replicates < 1:
            raise InvalidInputError(f"replicates must be >= 1, got {self.replicates}")
        if self.perturb_sd < 0.0:
            raise InvalidInputError(f"perturb_sd must be >= 0, got {self.perturb_sd}")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidInputError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.p < 1 or self.q < 1:
            raise InvalidInputError("feature widths p and q must be >= 1")
        if self.scenario not in SCENARIOS:
            raise InvalidInputError(
                f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.surrogate_sd < 0.0:
            raise InvalidInputError(f"surrogate_sd must be >= 0, got {self.surrogate_sd}")


@dataclass
class Replicate:
    """One training-ready dataset drawn around the base truth."""

    v_f: np.ndarray
    v_g: np.ndarray
    labels: np.ndarray
    target_logits: np.ndarray
    true_prob: np.ndarray

    @property
    def size(self) -> int:
        return self.target_logits.shape[0]


def gen_base_probs(cfg: SimConfig, rng: RngStream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (V_f, V_g, p_hat) for one base truth.

    rng children: 0 draws V_f, 1 the truth network, 2 the mixing maps,
    3 the V_g noise.
    """
    v_f = _EMB_SD * rng.child(0).generator().standard_normal((cfg.m, cfg.p))

    truth_gen = rng.child(1).generator()
    # pre-activations kept at sd ~ _TRUTH_PREACT_SD so the net is smooth
    # but not saturated; the standardization below fixes the output scale
    w1 = truth_gen.normal(0.0, _TRUTH_PREACT_SD / (_EMB_SD * np.sqrt(cfg.p)),
                          size=(cfg.p, _TRUTH_HIDDEN))
    b1 = truth_gen.normal(0.0, _TRUTH_PREACT_SD / 2.0, size=_TRUTH_HIDDEN)
    w2 = truth_gen.normal(0.0, 1.0 / np.sqrt(_TRUTH_HIDDEN), size=_TRUTH_HIDDEN)
    raw = np.tanh(v_f @ w1 + b1) @ w2
    # standardize so the logits have a fixed, moderate spread
    sd = float(raw.std())
    if sd == 0.0:
        raise InvalidInputError("degenerate truth draw: constant logits")
    logits = _LOGIT_SCALE * (raw - raw.mean()) / sd
    p_hat = sigmoid(logits)

    # second block: a fixed share of its entry variance is a rank-limited
    # image of V_f, the rest independent noise; same entry scale as V_f
    mix_gen = rng.child(2).generator()
    down = mix_gen.normal(0.0, 1.0 / (_EMB_SD * np.sqrt(cfg.p)),
                          size=(cfg.p, _MIX_RANK))
    up = mix_gen.normal(0.0, _EMB_SD * np.sqrt(_MIX_SIGNAL_SHARE / _MIX_RANK),
                        size=(_MIX_RANK, cfg.q))
    noise = rng.child(3).generator().standard_normal((cfg.m, cfg.q))
    v_g = (v_f @ down) @ up + _EMB_SD * np.sqrt(1.0 - _MIX_SIGNAL_SHARE) * noise
    return v_f, v_g, p_hat


def _stacked_logits(v_g: np.ndarray, true_logits: np.ndarray) -> np.ndarray:
    # Second upstream estimate: least-squares fit of the logits on [V_g, 1].
    design = np.hstack([v_g, np.ones((v_g.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(design, true_logits, rcond=None)
    fitted = design @ coef
    averaged = (sigmoid(true_logits) + sigmoid(fitted)) / 2.0
    return logit(averaged)


def gen_replicates(cfg: SimConfig, base: tuple[np.ndarray, np.ndarray, np.ndarray],
                   rng: RngStream) -> list[Replicate]:
    """Draw the J replicate datasets around one base truth.

    Replicate j depends only on rng.child(j), so replicates can be
    generated (or regenerated) independently and in any order.
    """
    v_f, v_g, p_hat = base
    if v_f.shape != (cfg.m, cfg.p) or v_g.shape != (cfg.m, cfg.q):
        raise DimensionError("base feature blocks do not match the config dims")
    true_logits = logit(p_hat)
    if cfg.scenario == "stacked_average":
        base_targets = _stacked_logits(v_g, true_logits)
        true_prob = sigmoid(base_targets)
    else:
        base_targets = true_logits
        true_prob = p_hat

    out = []
    for j in range(cfg.replicates):
        rep_rng = rng.child(j)
        eps = rep_rng.child(0).generator().normal(0.0, cfg.perturb_sd, size=cfg.m)
        perturbed = sigmoid(true_logits + eps)
        labels = (perturbed > cfg.threshold).astype(np.int64)
        target_noise = rep_rng.child(1).generator().normal(0.0, cfg.surrogate_sd, size=cfg.m)
        if cfg.scenario == "misspecified":
            mis_gen = rep_rng.child(2).generator()
            rep_v_f = _EMB_SD * mis_gen.standard_normal((cfg.m, cfg.p))
        else:
            rep_v_f = v_f.copy()
        out.append(Replicate(
            v_f=rep_v_f,
            v_g=v_g.copy(),
            labels=labels,
            target_logits=base_targets + target_noise,
            true_prob=true_prob.copy(),
        ))
    return out


def _take(rep: Replicate, idx: np.ndarray) -> Replicate:
    return Replicate(
        v_f=rep.v_f[idx].copy(),
        v_g=rep.v_g[idx].copy(),
        labels=rep.labels[idx].copy(),
        target_logits=rep.target_logits[idx].copy(),
        true_prob=rep.true_prob[idx].copy(),
    )


def split(rep: Replicate, train_n: int, test_n: int,
          rng: RngStream) -> tuple[Replicate, Replicate]:
    """Random train/test split without replacement."""
    if train_n < 1 or test_n < 0:
        raise InvalidInputError(f"bad split sizes ({train_n}, {test_n})")
    if train_n + test_n > rep.size:
        raise InvalidInputError(
            f"split sizes ({train_n} + {test_n}) exceed dataset size {rep.size}")
    order = rng.generator().permutation(rep.size)
    return _take(rep, order[:train_n]), _take(rep, order[train_n:train_n + test_n])
