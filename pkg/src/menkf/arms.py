"""Feedforward arms with flat parameter vectors, plus the augmented
state layout that places two arms and two scalars in one member vector.

Weight layout per arm, frozen so checkpoints stay readable: layers run
input -> hidden... -> 1 (scalar output, no output activation). For each
layer the weight matrix is stored column-major, followed by that
layer's biases. param_count gives the exact length; forward accepts
longer vectors and ignores the trailing entries, which is what lets a
shorter arm live padded inside a shared state block.

A member vector is the column-major vec of the (n_pad + 2, 2) block

    [ w_f  w_g ]
    [  0    a  ]
    [  0    b  ]

with each arm's weights zero-padded to n_pad = max(n_f, n_g). The pad
tails and the two zeros under w_f never carry state; they are the
layout's structural zeros and are re-zeroed after every update.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, InvalidInputError

_ACTIVATIONS = {
    "identity": lambda z: z,
    "tanh": np.tanh,
    "relu": lambda z: np.maximum(z, 0.0),
}


@dataclass(frozen=True)
class ArmSpec:
    """Architecture of one arm: input width, hidden widths, activation."""

    input_dim: int
    hidden_dims: tuple = (16,)
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise InvalidInputError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden_dims):
            raise InvalidInputError(f"hidden sizes must be >= 1, got {self.hidden_dims}")
        if self.activation not in _ACTIVATIONS:
            raise InvalidInputError(
                f"unknown activation {self.activation!r}; choose from {sorted(_ACTIVATIONS)}")

    def layer_dims(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden_dims, 1]
        return list(zip(widths[:-1], widths[1:]))


def param_count(spec: ArmSpec) -> int:
    """Total number of weights and biases in one arm."""
    return sum((fan_in + 1) * fan_out for fan_in, fan_out in spec.layer_dims())


def pad_weights(w, target_len: int) -> np.ndarray:
    """Right-pad a weight vector with zeros up to target_len."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise DimensionError(f"w must be 1-D, got ndim={w.ndim}")
    if w.size > target_len:
        raise DimensionError(f"cannot pad length {w.size} down to {target_len}")
    return np.concatenate([w, np.zeros(target_len - w.size)])


def _check_inputs(spec: ArmSpec, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[1] != spec.input_dim:
        raise DimensionError(
            f"inputs must be (rows, {spec.input_dim}), got {v.shape}")
    return v


def forward(spec: ArmSpec, w, v) -> np.ndarray:
    """Scalar outputs of one arm on a batch of input rows.

    w is the flat parameter vector; entries past param_count(spec) are
    padding and are ignored.
    """
    v = _check_inputs(spec, v)
    w = np.asarray(w, dtype=float)
    need = param_count(spec)
    if w.ndim != 1 or w.size < need:
        raise DimensionError(f"w must be 1-D with at least {need} entries, got shape {w.shape}")
    act = _ACTIVATIONS[spec.activation]
    z = v
    offset = 0
    layers = spec.layer_dims()
    for k, (fan_in, fan_out) in enumerate(layers):
        weight = w[offset:offset + fan_in * fan_out].reshape((fan_in, fan_out), order="F")
        offset += fan_in * fan_out
        bias = w[offset:offset + fan_out]
        offset += fan_out
        z = z @ weight + bias
        if k < len(layers) - 1:
            z = act(z)
    return z[:, 0]


def forward_batch(spec: ArmSpec, weights, v) -> np.ndarray:
    """forward() for many parameter vectors at once.

    weights is (N, >= param_count); returns (N, rows). Row i equals
    forward(spec, weights[i], v) up to floating-point association.
    """
    v = _check_inputs(spec, v)
    weights = np.asarray(weights, dtype=float)
    need = param_count(spec)
    if weights.ndim != 2 or weights.shape[1] < need:
        raise DimensionError(
            f"weights must be (N, >={need}), got {weights.shape}")
    n = weights.shape[0]
    act = _ACTIVATIONS[spec.activation]
    z = None
    offset = 0
    layers = spec.layer_dims()
    for k, (fan_in, fan_out) in enumerate(layers):
        block = weights[:, offset:offset + fan_in * fan_out]
        offset += fan_in * fan_out
        # column-major per member: entry (i, j) sits at j * fan_in + i
        weight = block.reshape(n, fan_out, fan_in).transpose(0, 2, 1)
        bias = weights[:, offset:offset + fan_out]
        offset += fan_out
        if z is None:
            z = np.einsum("mi,nio->nmo", v, weight) + bias[:, None, :]
        else:
            z = np.einsum("nmi,nio->nmo", z, weight) + bias[:, None, :]
        if k < len(layers) - 1:
            z = act(z)
    return z[:, :, 0]


@dataclass(frozen=True)
class StateLayout:
    """Index map for the flat augmented member vector.

    Coordinates run [w_f | pad | 0 0 | w_g | pad | a b]; dim is
    2 * (n_pad + 2). Everything outside w_f, w_g, a, b is a structural
    zero.
    """

    n_f: int
    n_g: int

    def __post_init__(self):
        if self.n_f < 1 or self.n_g < 1:
            raise InvalidInputError("arm parameter counts must be >= 1")

    @classmethod
    def from_specs(cls, spec_f: ArmSpec, spec_g: ArmSpec) -> "StateLayout":
        return cls(param_count(spec_f), param_count(spec_g))

    @property
    def n_pad(self) -> int:
        return max(self.n_f, self.n_g)

    @property
    def column_height(self) -> int:
        return self.n_pad + 2

    @property
    def dim(self) -> int:
        return 2 * self.column_height

    @property
    def wf_slice(self) -> slice:
        return slice(0, self.n_f)

    @property
    def wg_slice(self) -> slice:
        return slice(self.column_height, self.column_height + self.n_g)

    @property
    def a_index(self) -> int:
        return self.column_height + self.n_pad

    @property
    def b_index(self) -> int:
        return self.column_height + self.n_pad + 1

    def active_indices(self) -> np.ndarray:
        """Coordinates that carry state, in layout order."""
        wf = np.arange(self.n_f)
        wg = np.arange(self.column_height, self.column_height + self.n_g)
        return np.concatenate([wf, wg, [self.a_index, self.b_index]])

    def structural_zero_indices(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[self.active_indices()] = False
        return np.flatnonzero(mask)

    def apply_structural_zeros(self, members: np.ndarray) -> None:
        """Zero the non-state coordinates in place (members is (N, dim))."""
        members[:, self.structural_zero_indices()] = 0.0

    def structural_zeros_ok(self, members: np.ndarray) -> bool:
        return bool(np.all(members[:, self.structural_zero_indices()] == 0.0))
