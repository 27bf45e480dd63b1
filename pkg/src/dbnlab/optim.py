"""Theta update rules and the full training iteration.

An iteration performs, in this order:

1. gradient of the summed objective at the current (theta, lambda);
2. a theta step (plain diminishing-stepsize descent or AdaGrad);
3. batch statistics under the updated theta;
4. the moving-average lambda update with the next alpha weight;
5. the iteration counter advances by one.

The counter is shared by the stepsize and alpha schedules and counts
optimizer steps, not epochs.  In full-gradient mode the raw summed
gradient is used; in minibatch mode the default is the batch mean so
AdaGrad scales do not depend on the batch size (``grad_reduction``
overrides either way).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .bn_state import AlphaSchedule, alpha_at, batch_statistics, dbn_update
from .errors import NumericOverflowError, ParameterError
from .network import HyperParams, Lambda, NetworkArch, Theta, batch_objective

__all__ = [
    "EtaSchedule",
    "ScheduleWarning",
    "AdaGradState",
    "TrainState",
    "eta_at",
    "sgd_step",
    "adagrad_step",
    "train_iteration",
    "stepsize_conformance",
]


class ScheduleWarning(UserWarning):
    """A stepsize schedule violates the diminishing-stepsize conditions."""


@dataclass(frozen=True)
class EtaSchedule:
    """Stepsize rule for iteration m >= 1.

    ``power``: base / m**exponent; ``constant``: always base.
    """

    kind: str
    base: float
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise ParameterError(f"unknown eta schedule kind {self.kind!r}")
        if not (np.isfinite(self.base) and self.base > 0):
            raise ParameterError(f"eta base must be positive, got {self.base}")
        if self.kind == "power" and not (
            np.isfinite(self.exponent) and self.exponent >= 0
        ):
            raise ParameterError(
                f"power eta needs a finite exponent >= 0, got {self.exponent}"
            )

    @classmethod
    def constant(cls, base: float) -> "EtaSchedule":
        return cls("constant", base=float(base))

    @classmethod
    def power(cls, base: float, exponent: float) -> "EtaSchedule":
        sched = cls("power", base=float(base), exponent=float(exponent))
        msg = stepsize_conformance(sched)
        if msg is not None:
            warnings.warn(msg, ScheduleWarning, stacklevel=2)
        return sched

    def at(self, m: int) -> float:
        if m < 1:
            raise ParameterError(f"iterations are 1-based, got m={m}")
        if self.kind == "constant":
            return self.base
        return self.base * float(m) ** (-self.exponent)

    def values(self, up_to: int) -> np.ndarray:
        if up_to < 1:
            raise ParameterError(f"need up_to >= 1, got {up_to}")
        if self.kind == "constant":
            return np.full(up_to, self.base, dtype=np.float64)
        return self.base * np.arange(1, up_to + 1, dtype=np.float64) ** (-self.exponent)

    def label(self) -> str:
        if self.kind == "constant":
            return format(self.base, "g")
        return f"{format(self.base, 'g')}/m^{format(self.exponent, 'g')}"


def stepsize_conformance(schedule: EtaSchedule) -> str | None:
    """Check a power schedule against sum(eta) = inf and sum(eta^2) < inf.

    Returns a warning message for exponents outside (0.5, 1], None when
    the conditions hold.  Experiments may still run with a flagged
    schedule; convergence guarantees simply do not apply.
    """
    if schedule.kind != "power":
        return None
    k = schedule.exponent
    if k <= 0.5:
        return (
            f"stepsize exponent {k} <= 0.5: the squared stepsizes are not "
            "summable, so the diminishing-stepsize conditions fail"
        )
    if k > 1.0:
        return (
            f"stepsize exponent {k} > 1: the stepsizes are summable, so "
            "the total step budget is finite and convergence to a "
            "stationary point is not guaranteed"
        )
    return None


def eta_at(schedule: EtaSchedule, m: int) -> float:
    """Stepsize at iteration ``m`` (1-based)."""
    return schedule.at(m)


def sgd_step(theta: Theta, grad: Theta, eta: float) -> Theta:
    """theta - eta * grad, componentwise, as a new Theta."""
    if grad.data.shape != theta.data.shape:
        raise ParameterError("gradient layout does not match theta")
    if not np.all(np.isfinite(grad.data)):
        raise NumericOverflowError("gradient contains non-finite entries")
    return Theta(theta.arch, theta.data - eta * grad.data)


@dataclass(frozen=True)
class AdaGradState:
    """Accumulated squared gradients plus the base stepsize and guard."""

    accumulator: np.ndarray
    base_eta: float = 0.01
    eps: float = 1e-8

    @classmethod
    def fresh(cls, theta: Theta, base_eta: float = 0.01, eps: float = 1e-8) -> "AdaGradState":
        if not base_eta > 0:
            raise ParameterError(f"base_eta must be positive, got {base_eta}")
        return cls(np.zeros_like(theta.data), float(base_eta), float(eps))


def adagrad_step(
    state: AdaGradState, theta: Theta, grad: Theta
) -> tuple[Theta, AdaGradState]:
    """One AdaGrad update; returns the new theta and accumulator state."""
    if grad.data.shape != theta.data.shape:
        raise ParameterError("gradient layout does not match theta")
    if state.accumulator.shape != theta.data.shape:
        raise ParameterError("accumulator layout does not match theta")
    if not np.all(np.isfinite(grad.data)):
        raise NumericOverflowError("gradient contains non-finite entries")
    accum = state.accumulator + grad.data**2
    step = state.base_eta * grad.data / (np.sqrt(accum) + state.eps)
    new_theta = Theta(theta.arch, theta.data - step)
    return new_theta, AdaGradState(accum, state.base_eta, state.eps)


@dataclass
class TrainState:
    """Everything one iteration consumes and produces.

    ``m`` starts at 1 and increments by exactly one per iteration.
    ``adagrad`` switches the theta rule: None means plain descent with
    ``eta_schedule``.  ``grad_reduction`` is "sum" or "mean"; None picks
    the mode default (sum for full_gradient, mean for minibatch).
    """

    theta: Theta
    lam: Lambda
    eta_schedule: EtaSchedule
    alpha_schedule: AlphaSchedule
    m: int = 1
    adagrad: AdaGradState | None = None
    mode: str = "full_gradient"
    grad_reduction: str | None = None

    def __post_init__(self):
        if self.mode not in ("full_gradient", "minibatch"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.grad_reduction not in (None, "sum", "mean"):
            raise ParameterError(f"unknown grad_reduction {self.grad_reduction!r}")
        if self.m < 1:
            raise ParameterError(f"iteration counter starts at 1, got {self.m}")

    @property
    def reduction(self) -> str:
        if self.grad_reduction is not None:
            return self.grad_reduction
        return "sum" if self.mode == "full_gradient" else "mean"


def train_iteration(
    state: TrainState,
    x: np.ndarray,
    targets,
    hp: HyperParams,
    observer: Callable[..., None] | None = None,
) -> TrainState:
    """Run one full iteration on the given data view.

    In minibatch mode the caller passes the minibatch; the gradient and
    the statistics both use exactly this view.  ``observer``, when given,
    is called at each stage (gradient, theta_update, stats,
    lambda_update) with the values in play; it exists for instrumentation
    and tests.
    """
    arch = state.theta.arch
    m = state.m
    try:
        _, grad = batch_objective(x, targets, state.theta, state.lam, arch, hp)
        if state.reduction == "mean":
            grad = Theta(arch, grad.data / x.shape[0])
        if observer:
            observer("gradient", theta=state.theta, lam=state.lam, grad=grad)

        if state.adagrad is not None:
            new_theta, new_adagrad = adagrad_step(state.adagrad, state.theta, grad)
        else:
            new_theta = sgd_step(state.theta, grad, state.eta_schedule.at(m))
            new_adagrad = None
        if observer:
            observer("theta_update", theta=new_theta)

        stats = batch_statistics(x, new_theta, arch, hp)
        if observer:
            observer("stats", theta=new_theta, stats=stats)

        new_lam = dbn_update(state.lam, stats, alpha_at(state.alpha_schedule, m + 1))
        if observer:
            observer("lambda_update", lam=new_lam)
    except NumericOverflowError as exc:
        raise NumericOverflowError(str(exc), iteration=m) from exc

    return replace(
        state, theta=new_theta, lam=new_lam, adagrad=new_adagrad, m=m + 1
    )
