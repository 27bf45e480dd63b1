"""Batch-normalized feedforward network: forward pass, loss, backprop.

The network alternates linear maps with an activation and a per-neuron
normalization: every hidden layer computes ``z = a(W u)`` and emits
``y = gamma * (z - mu) / (sigma + eps_b) + beta``.  The output layer is a
plain linear map, optionally followed by the activation (``activated``
head).  There are no bias terms; ``beta`` plays that role.

Two parameter families are kept strictly apart:

* ``Theta`` - weights, ``gamma`` and ``beta``; updated by gradients.
* ``Lambda`` - per-neuron ``mu`` and ``sigma``; updated only by moving
  averages of batch statistics (see :mod:`dbnlab.bn_state`).

Backpropagation treats ``mu`` and ``sigma`` as constants everywhere,
including when they happen to equal the current batch statistics.  This
is deliberate and differs from mainstream batch-norm backprop, which
differentiates through the statistics; the training scheme analyzed here
never does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericOverflowError, ParameterError
from .linalg import Rng

__all__ = [
    "Activation",
    "NetworkArch",
    "HyperParams",
    "Theta",
    "Lambda",
    "Activations",
    "init_theta",
    "init_lambda",
    "forward",
    "loss",
    "backward",
    "batch_objective",
]


# ---------------------------------------------------------------------------
# Activation functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Activation:
    """Pointwise activation with a known Lipschitz constant.

    Supported kinds: ``relu``, ``leaky_relu`` (with ``slope``) and
    ``identity``.  All satisfy a(0) = 0 and |a(x)| <= k |x|.
    """

    kind: str
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("relu", "leaky_relu", "identity"):
            raise ParameterError(f"unknown activation kind {self.kind!r}")

    @property
    def lipschitz_k(self) -> float:
        if self.kind == "leaky_relu":
            return max(1.0, abs(self.slope))
        return 1.0

    @property
    def has_kink(self) -> bool:
        """True when the derivative is discontinuous at 0."""
        return self.kind in ("relu", "leaky_relu")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(x, 0.0)
        if self.kind == "leaky_relu":
            return np.where(x > 0.0, x, self.slope * x)
        return np.asarray(x, dtype=np.float64)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return (x > 0.0).astype(np.float64)
        if self.kind == "leaky_relu":
            return np.where(x > 0.0, 1.0, self.slope)
        return np.ones_like(x, dtype=np.float64)


def relu() -> Activation:
    return Activation("relu")


def leaky_relu(slope: float) -> Activation:
    return Activation("leaky_relu", slope)


def identity() -> Activation:
    return Activation("identity")


# ---------------------------------------------------------------------------
# Architecture and hyperparameters
# ---------------------------------------------------------------------------

OUTPUT_HEADS = ("linear_logits", "activated")


@dataclass(frozen=True)
class NetworkArch:
    """Layer sizes plus activation and output head.

    ``layer_sizes`` is (input, hidden..., output); at least one hidden
    layer is required.  Every hidden layer is normalized, the output
    layer is not.
    """

    layer_sizes: tuple[int, ...]
    activation: Activation = field(default_factory=relu)
    output_head: str = "linear_logits"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 3:
            raise ParameterError("need at least one hidden layer (>= 3 layer sizes)")
        if any(s < 1 for s in self.layer_sizes):
            raise ParameterError(f"all layer sizes must be >= 1, got {self.layer_sizes}")
        if self.output_head not in OUTPUT_HEADS:
            raise ParameterError(
                f"output_head must be one of {OUTPUT_HEADS}, got {self.output_head!r}"
            )

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def weight_shapes(self) -> list[tuple[int, int]]:
        sizes = self.layer_sizes
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]


@dataclass(frozen=True)
class HyperParams:
    """Normalization guard and l2 coefficient.

    ``eps_b`` keeps the normalization denominator away from zero;
    ``l2_coeff`` scales the weight penalty 0.5 * sum ||W_l||_F^2 that is
    added to every per-sample loss (gamma and beta are not penalized).
    """

    eps_b: float = 1e-5
    l2_coeff: float = 1e-4

    def __post_init__(self):
        if not self.eps_b > 0:
            raise ParameterError(f"eps_b must be positive, got {self.eps_b}")
        if self.l2_coeff < 0:
            raise ParameterError(f"l2_coeff must be >= 0, got {self.l2_coeff}")


# ---------------------------------------------------------------------------
# Parameter containers (flat buffer + structured views)
# ---------------------------------------------------------------------------


class Theta:
    """All gradient-trained parameters in one flat float64 buffer.

    ``weights[l]``, ``gamma[l]`` and ``beta[l]`` are views into ``data``,
    so flat vector arithmetic (optimizer steps, finite differences) and
    structured access stay in sync for free.  The same container is used
    for gradients with respect to itself.
    """

    def __init__(self, arch: NetworkArch, data: np.ndarray | None = None):
        self.arch = arch
        shapes = arch.weight_shapes()
        n_weights = sum(r * c for r, c in shapes)
        n_hidden = sum(arch.hidden_sizes)
        self.size = n_weights + 2 * n_hidden
        if data is None:
            data = np.zeros(self.size, dtype=np.float64)
        else:
            data = np.ascontiguousarray(data, dtype=np.float64)
            if data.shape != (self.size,):
                raise DimensionError(
                    f"theta buffer must have shape ({self.size},), got {data.shape}"
                )
        self.data = data
        self.weights: list[np.ndarray] = []
        off = 0
        for r, c in shapes:
            self.weights.append(self.data[off : off + r * c].reshape(r, c))
            off += r * c
        self.gamma: list[np.ndarray] = []
        for d in arch.hidden_sizes:
            self.gamma.append(self.data[off : off + d])
            off += d
        self.beta: list[np.ndarray] = []
        for d in arch.hidden_sizes:
            self.beta.append(self.data[off : off + d])
            off += d

    def copy(self) -> "Theta":
        return Theta(self.arch, self.data.copy())

    @classmethod
    def zeros_like(cls, other: "Theta") -> "Theta":
        return cls(other.arch)

    def check_finite(self):
        if not np.all(np.isfinite(self.data)):
            raise NumericOverflowError("theta contains non-finite entries")

    def __repr__(self):
        return f"Theta(layers={self.arch.layer_sizes}, size={self.size})"


class Lambda:
    """Per-hidden-neuron normalization statistics (mu, sigma).

    Updated only through moving averages, never by gradients.  Stored as
    a flat buffer with per-layer views, like :class:`Theta`.
    """

    def __init__(self, arch: NetworkArch, data: np.ndarray | None = None):
        self.arch = arch
        n_hidden = sum(arch.hidden_sizes)
        self.size = 2 * n_hidden
        if data is None:
            data = np.zeros(self.size, dtype=np.float64)
        else:
            data = np.ascontiguousarray(data, dtype=np.float64)
            if data.shape != (self.size,):
                raise DimensionError(
                    f"lambda buffer must have shape ({self.size},), got {data.shape}"
                )
        self.data = data
        self.mu: list[np.ndarray] = []
        self.sigma: list[np.ndarray] = []
        off = 0
        for d in arch.hidden_sizes:
            self.mu.append(self.data[off : off + d])
            off += d
        for d in arch.hidden_sizes:
            self.sigma.append(self.data[off : off + d])
            off += d

    def copy(self) -> "Lambda":
        return Lambda(self.arch, self.data.copy())

    def check_valid(self):
        if not np.all(np.isfinite(self.data)):
            raise NumericOverflowError("lambda contains non-finite entries")
        for l, s in enumerate(self.sigma, start=1):
            if np.any(s < 0):
                raise ParameterError(f"sigma must be >= 0 (hidden layer {l})")

    def __repr__(self):
        return f"Lambda(hidden={self.arch.hidden_sizes})"


def init_theta(arch: NetworkArch, rng: Rng) -> Theta:
    """Scale-preserving uniform init: W ~ U(+-sqrt(6/(fan_in+fan_out))).

    gamma starts at 1 and beta at 0 so the normalization begins as a pure
    standardization.
    """
    theta = Theta(arch)
    for w in theta.weights:
        fan_out, fan_in = w.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, w.size).reshape(w.shape)
    for g in theta.gamma:
        g[...] = 1.0
    return theta


def init_lambda(arch: NetworkArch) -> Lambda:
    """mu = 0, sigma = 1: the first forward pass is a near-identity map."""
    lam = Lambda(arch)
    for s in lam.sigma:
        s[...] = 1.0
    return lam


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


@dataclass
class Activations:
    """Intermediate values of one forward pass.

    ``pre[l]`` is the linear map output W_l u, ``z[l] = a(pre[l])`` the
    activated value that the statistics are taken over, and ``y[l]`` the
    normalized layer output.  ``outputs`` equals ``output_pre`` for the
    ``linear_logits`` head, or its activation for the ``activated`` head.
    """

    pre: list[np.ndarray]
    z: list[np.ndarray]
    y: list[np.ndarray]
    output_pre: np.ndarray
    outputs: np.ndarray


def _check_model_shapes(theta: Theta, lam: Lambda, arch: NetworkArch):
    if theta.arch.layer_sizes != arch.layer_sizes:
        raise DimensionError("theta was built for a different architecture")
    if lam.arch.layer_sizes != arch.layer_sizes:
        raise DimensionError("lambda was built for a different architecture")


def _forward_batch(
    x: np.ndarray, theta: Theta, lam: Lambda, arch: NetworkArch, hp: HyperParams
) -> Activations:
    """Vectorized forward pass over a batch ``x`` of shape (n, input_dim)."""
    act = arch.activation
    u = x
    pres, zs, ys = [], [], []
    for l in range(arch.n_hidden):
        pre = u @ theta.weights[l].T
        z = act(pre)
        y = theta.gamma[l] * (z - lam.mu[l]) / (lam.sigma[l] + hp.eps_b) + theta.beta[l]
        if not np.all(np.isfinite(y)):
            raise NumericOverflowError(
                "non-finite value in forward pass", layer=l + 1
            )
        pres.append(pre)
        zs.append(z)
        ys.append(y)
        u = y
    output_pre = u @ theta.weights[-1].T
    outputs = act(output_pre) if arch.output_head == "activated" else output_pre
    if not np.all(np.isfinite(outputs)):
        raise NumericOverflowError(
            "non-finite value in forward pass", layer=arch.n_hidden + 1
        )
    return Activations(pres, zs, ys, output_pre, outputs)


def forward(
    x: np.ndarray, theta: Theta, lam: Lambda, arch: NetworkArch, hp: HyperParams
) -> Activations:
    """Forward pass for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise DimensionError(
            f"input must have shape ({arch.input_dim},), got {x.shape}"
        )
    _check_model_shapes(theta, lam, arch)
    acts = _forward_batch(x[None, :], theta, lam, arch, hp)
    return Activations(
        [p[0] for p in acts.pre],
        [z[0] for z in acts.z],
        [y[0] for y in acts.y],
        acts.output_pre[0],
        acts.outputs[0],
    )


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _weight_penalty(theta: Theta, hp: HyperParams) -> float:
    if hp.l2_coeff == 0.0:
        return 0.0
    return hp.l2_coeff * 0.5 * sum(float(np.sum(w * w)) for w in theta.weights)


def _is_class_index(target) -> bool:
    return np.isscalar(target) or (
        isinstance(target, np.ndarray) and target.ndim == 0
    ) or isinstance(target, (int, np.integer))


def loss(outputs: np.ndarray, target, theta: Theta, hp: HyperParams) -> float:
    """Per-sample objective: data loss plus the l2 weight penalty.

    A scalar integer ``target`` selects softmax cross-entropy over
    ``outputs``; a vector target selects squared error
    0.5 * ||outputs - target||^2.
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    if _is_class_index(target):
        idx = int(target)
        if not 0 <= idx < outputs.shape[-1]:
            raise ParameterError(
                f"target class {idx} out of range for {outputs.shape[-1]} outputs"
            )
        data = -_log_softmax(outputs)[idx]
    else:
        target = np.asarray(target, dtype=np.float64)
        if target.shape != outputs.shape:
            raise DimensionError(
                f"target shape {target.shape} != outputs shape {outputs.shape}"
            )
        diff = outputs - target
        data = 0.5 * float(diff @ diff)
    return float(data) + _weight_penalty(theta, hp)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def _batch_data_losses(acts_out: np.ndarray, targets) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample data losses and d(loss)/d(outputs) for a batch."""
    if isinstance(targets, np.ndarray) and targets.ndim == 2:
        diff = acts_out - targets
        losses = 0.5 * np.sum(diff * diff, axis=1)
        return losses, diff
    labels = np.asarray(targets)
    if labels.ndim != 1:
        raise DimensionError("class targets must form a 1-D integer array")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= acts_out.shape[1]:
        raise ParameterError("target class out of range")
    log_p = _log_softmax(acts_out)
    n = acts_out.shape[0]
    losses = -log_p[np.arange(n), labels]
    d_out = np.exp(log_p)
    d_out[np.arange(n), labels] -= 1.0
    return losses, d_out


def _backward_batch(
    x: np.ndarray,
    targets,
    theta: Theta,
    lam: Lambda,
    arch: NetworkArch,
    hp: HyperParams,
) -> tuple[float, Theta]:
    """Summed loss and summed theta-gradient over a batch.

    mu and sigma enter only as constants; no gradient with respect to
    Lambda exists anywhere in the return value.
    """
    acts = _forward_batch(x, theta, lam, arch, hp)
    losses, d_out = _batch_data_losses(acts.outputs, targets)
    n = x.shape[0]
    grad = Theta(arch)

    act = arch.activation
    if arch.output_head == "activated":
        d_out_pre = d_out * act.derivative(acts.output_pre)
    else:
        d_out_pre = d_out

    u_prev = acts.y[-1] if arch.n_hidden > 0 else x
    grad.weights[-1][...] = d_out_pre.T @ u_prev
    d_u = d_out_pre @ theta.weights[-1]

    for l in range(arch.n_hidden - 1, -1, -1):
        inv = 1.0 / (lam.sigma[l] + hp.eps_b)
        d_y = d_u
        grad.beta[l][...] = d_y.sum(axis=0)
        grad.gamma[l][...] = np.sum(d_y * (acts.z[l] - lam.mu[l]) * inv, axis=0)
        d_z = d_y * (theta.gamma[l] * inv)
        d_pre = d_z * act.derivative(acts.pre[l])
        u_prev = acts.y[l - 1] if l > 0 else x
        grad.weights[l][...] = d_pre.T @ u_prev
        d_u = d_pre @ theta.weights[l]

    if hp.l2_coeff != 0.0:
        for w, gw in zip(theta.weights, grad.weights):
            gw += n * hp.l2_coeff * w

    total = float(losses.sum()) + n * _weight_penalty(theta, hp)
    if not np.isfinite(total) or not np.all(np.isfinite(grad.data)):
        raise NumericOverflowError("non-finite value in backward pass")
    return total, grad


def backward(
    x: np.ndarray,
    target,
    theta: Theta,
    lam: Lambda,
    arch: NetworkArch,
    hp: HyperParams,
) -> Theta:
    """Gradient of the per-sample objective with respect to Theta only."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise DimensionError(
            f"input must have shape ({arch.input_dim},), got {x.shape}"
        )
    _check_model_shapes(theta, lam, arch)
    if _is_class_index(target):
        targets = np.asarray([int(target)])
    else:
        targets = np.asarray(target, dtype=np.float64)[None, :]
    _, grad = _backward_batch(x[None, :], targets, theta, lam, arch, hp)
    return grad


def batch_objective(
    x: np.ndarray,
    targets,
    theta: Theta,
    lam: Lambda,
    arch: NetworkArch,
    hp: HyperParams,
) -> tuple[float, Theta]:
    """Summed objective and summed gradient over a dataset view.

    Returns (sum_i f_i, sum_i grad f_i); each f_i includes the weight
    penalty, so duplicating the dataset exactly doubles both values.
    The reduction order is fixed by the dataset order.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise DimensionError(
            f"batch must have shape (n, {arch.input_dim}), got {x.shape}"
        )
    if x.shape[0] == 0:
        raise ParameterError("batch_objective requires a nonempty dataset")
    _check_model_shapes(theta, lam, arch)
    return _backward_batch(x, targets, theta, lam, arch, hp)
