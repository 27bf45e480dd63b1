"""Batch statistics and the diminishing moving-average update of Lambda.

One training iteration refreshes the normalization state in two steps:
``batch_statistics`` measures the post-activation mean and standard
deviation of every hidden layer under the current weights, and
``dbn_update`` folds those measurements into Lambda as a convex
combination with weight ``alpha_m``:

    lambda_new = alpha_m * stats + (1 - alpha_m) * lambda_old

alpha = 1 reproduces plain batch normalization (Lambda always equals the
latest batch statistics); alpha = 0 freezes Lambda forever.  Diminishing
schedules in between make the layer output depend on the history of all
past batches rather than only the latest one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericOverflowError, ParameterError
from .network import HyperParams, Lambda, NetworkArch, Theta

__all__ = [
    "AlphaSchedule",
    "BatchStats",
    "alpha_at",
    "batch_statistics",
    "dbn_update",
]


@dataclass(frozen=True)
class AlphaSchedule:
    """Rule producing the moving-average weight for iteration m >= 1.

    Kinds:
      * ``constant``: always ``value``.
      * ``power``: 1 / m**exponent (so exponent 0 is constant 1).
      * ``table``: explicit per-iteration values; the last entry persists
        beyond the end of the table.
    """

    kind: str
    value: float = 0.0
    exponent: float = 0.0
    table: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "constant":
            if not 0.0 <= self.value <= 1.0:
                raise ParameterError(
                    f"constant alpha must lie in [0, 1], got {self.value}"
                )
        elif self.kind == "power":
            if not (np.isfinite(self.exponent) and self.exponent >= 0):
                raise ParameterError(
                    f"power alpha needs a finite exponent >= 0, got {self.exponent}"
                )
        elif self.kind == "table":
            if len(self.table) == 0:
                raise ParameterError("table alpha needs at least one entry")
            if any(not 0.0 <= v <= 1.0 for v in self.table):
                raise ParameterError("table alpha entries must lie in [0, 1]")
        else:
            raise ParameterError(f"unknown alpha schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "AlphaSchedule":
        return cls("constant", value=float(value))

    @classmethod
    def power(cls, exponent: float) -> "AlphaSchedule":
        return cls("power", exponent=float(exponent))

    @classmethod
    def from_table(cls, values) -> "AlphaSchedule":
        return cls("table", table=tuple(float(v) for v in values))

    def at(self, m: int) -> float:
        """Value at 1-based iteration ``m``."""
        if m < 1:
            raise ParameterError(f"iterations are 1-based, got m={m}")
        if self.kind == "constant":
            return self.value
        if self.kind == "power":
            return float(m) ** (-self.exponent)
        return self.table[min(m, len(self.table)) - 1]

    def values(self, up_to: int) -> np.ndarray:
        """Vector of values for m = 1..up_to."""
        if up_to < 1:
            raise ParameterError(f"need up_to >= 1, got {up_to}")
        if self.kind == "constant":
            return np.full(up_to, self.value, dtype=np.float64)
        if self.kind == "power":
            return np.arange(1, up_to + 1, dtype=np.float64) ** (-self.exponent)
        vals = np.asarray(self.table, dtype=np.float64)
        if up_to <= vals.size:
            return vals[:up_to].copy()
        return np.concatenate([vals, np.full(up_to - vals.size, vals[-1])])

    def label(self) -> str:
        """Short human-readable form, used in sweep tables."""
        if self.kind == "constant":
            return format(self.value, "g")
        if self.kind == "power":
            if self.exponent == 1:
                return "1/m"
            return f"1/m^{format(self.exponent, 'g')}"
        return f"table[{len(self.table)}]"


def alpha_at(schedule: AlphaSchedule, m: int) -> float:
    """Moving-average weight at iteration ``m`` (1-based)."""
    return schedule.at(m)


@dataclass
class BatchStats:
    """Per-hidden-neuron batch mean and population standard deviation."""

    mu: list[np.ndarray]
    sigma: list[np.ndarray]

    def flat(self) -> np.ndarray:
        """Concatenation matching the Lambda buffer layout."""
        return np.concatenate(list(self.mu) + list(self.sigma))


def batch_statistics(
    x: np.ndarray,
    theta: Theta,
    arch: NetworkArch,
    hp: HyperParams | None = None,
) -> BatchStats:
    """Post-activation statistics of every hidden layer for one batch.

    The pass is self-normalizing: layer l's values are computed with the
    layers below it normalized by this same batch's fresh statistics, so
    the result depends only on (batch, theta).  With a single hidden
    layer that reduces to plain statistics of a(W1 x).  The variance
    divisor is the batch size (population form).
    """
    if hp is None:
        hp = HyperParams()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError("batch must be a 2-D array of row samples")
    if x.shape[0] == 0:
        raise ParameterError("batch_statistics requires a nonempty batch")
    act = arch.activation
    u = x
    mus, sigmas = [], []
    for l in range(arch.n_hidden):
        z = act(u @ theta.weights[l].T)
        mu = z.mean(axis=0)
        sigma = np.sqrt(np.mean((z - mu) ** 2, axis=0))
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise NumericOverflowError(
                "non-finite batch statistics", layer=l + 1
            )
        mus.append(mu)
        sigmas.append(sigma)
        u = theta.gamma[l] * (z - mu) / (sigma + hp.eps_b) + theta.beta[l]
    return BatchStats(mus, sigmas)


def dbn_update(lam: Lambda, stats: BatchStats, alpha_m: float) -> Lambda:
    """Convex combination of fresh statistics and the previous Lambda."""
    if not 0.0 <= alpha_m <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha_m}")
    flat_stats = stats.flat()
    if flat_stats.shape != lam.data.shape:
        raise ParameterError(
            f"stats shape {flat_stats.shape} does not match lambda {lam.data.shape}"
        )
    return Lambda(lam.arch, alpha_m * flat_stats + (1.0 - alpha_m) * lam.data)
