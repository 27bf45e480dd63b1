"""Convergence conditions for (alpha, eta) schedule pairs.

For power-form schedules alpha_m = 1/m^h, eta_m = c/m^k the guarantees
reduce to exponent rules:

* statistics convergence requires  h > 1  and  k >= 1;
* the stronger stationarity conditions require  h > 2  and  k >= 1.

The rules are checked symbolically (:func:`check_theorem31_rule`,
:func:`check_lemma42_rule`) and corroborated numerically from truncated
partial sums of the four series the conditions bound:

    S1 = sum_m alpha_m
    S2 = sum_m sum_{n<=m} alpha_m eta_n
    S3 = sum_m sum_{i=m..M} sum_{n<=i} alpha_i eta_n
    S4 = sum_m sum_{n=m..M} alpha_n

All four are evaluated with O(M) prefix/suffix recurrences; the naive
triple loop for S3 is cubic and unusable at the default truncation.

The numeric side is heuristic evidence, not proof: a sum whose tail
grows by less than 1% from truncation M to 2M is flagged convergent; a
sum that fails that test is re-examined with a term-decay exponent fit
(Raabe quotients), which resolves slowly convergent boundary cases such
as h = 2.001 that any fixed growth threshold misreads.  The symbolic
rule remains authoritative for power schedules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bn_state import AlphaSchedule
from .errors import ParameterError
from .optim import EtaSchedule

__all__ = [
    "SchedulePair",
    "SeriesEvidence",
    "ConditionReport",
    "check_theorem31_rule",
    "check_lemma42_rule",
    "partial_sums",
    "tail_bound_am",
    "classify",
]

GROWTH_TOL = 0.01  # relative tail growth under doubling -> convergent
EXPONENT_MARGIN = 5e-4  # decision band around the p = 1 boundary
_FIT_RESIDUAL_TOL = 0.05  # exponent-fit mismatch beyond this -> inconclusive


@dataclass(frozen=True)
class SchedulePair:
    """An (alpha, eta) schedule pair under joint analysis."""

    alpha: AlphaSchedule
    eta: EtaSchedule

    @classmethod
    def power(cls, h: float, k: float, eta_base: float = 1.0) -> "SchedulePair":
        if h < 0 or k < 0:
            raise ParameterError(f"exponents must be >= 0, got h={h}, k={k}")
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # conformance warning handled by caller
            eta = EtaSchedule.power(eta_base, k)
        return cls(AlphaSchedule.power(h), eta)

    @property
    def is_power_form(self) -> bool:
        return self.alpha.kind == "power" and self.eta.kind == "power"

    @property
    def h(self) -> float:
        if self.alpha.kind != "power":
            raise ParameterError("alpha schedule is not power-form")
        return self.alpha.exponent

    @property
    def k(self) -> float:
        if self.eta.kind != "power":
            raise ParameterError("eta schedule is not power-form")
        return self.eta.exponent


def check_theorem31_rule(h: float, k: float) -> bool:
    """Exponent rule for the statistics sequence to converge."""
    return h > 1.0 and k >= 1.0


def check_lemma42_rule(h: float, k: float) -> bool:
    """Exponent rule for the stronger stationarity conditions."""
    return h > 2.0 and k >= 1.0


def partial_sums(pair: SchedulePair, M: int) -> tuple[float, float, float, float]:
    """Truncated values (S1, S2, S3, S4) at truncation ``M``.

    Uses one forward pass (prefix sums of eta, then S1 and S2) and one
    reverse accumulation (suffix sums for S3 and S4).  Overflow is
    reported by returning inf, which downstream classification reads as
    divergence evidence.
    """
    if M < 1:
        raise ParameterError(f"truncation must be >= 1, got {M}")
    alpha = pair.alpha.values(M)
    eta = pair.eta.values(M)
    with np.errstate(over="ignore"):
        prefix_eta = np.cumsum(eta)
        weighted = alpha * prefix_eta
        s1 = float(np.sum(alpha))
        s2 = float(np.sum(weighted))
        # suffix_m = sum_{i=m}^{M} weighted_i, accumulated from the tail
        s3 = float(np.sum(np.cumsum(weighted[::-1])))
        s4 = float(np.sum(np.cumsum(alpha[::-1])))
    return s1, s2, s3, s4


def tail_bound_am(
    pair: SchedulePair,
    m: int,
    M1: float = 1.0,
    M2: float = 1.0,
    horizon: int = 10**6,
) -> float:
    """Truncated statistics-distance bound

        a_m = M1 * sum_{i=m..horizon} sum_{j<=i} alpha_i eta_j
            + M2 * sum_{i=m..horizon} alpha_i.

    The constants are not derivable from data; they scale the two tail
    series, so the bound's shape in ``m`` is the meaningful output.
    """
    if m < 1:
        raise ParameterError(f"start index must be >= 1, got {m}")
    if horizon <= m:
        raise ParameterError(f"horizon must exceed m, got m={m}, horizon={horizon}")
    if M1 < 0 or M2 < 0:
        raise ParameterError("constants M1 and M2 must be >= 0")
    alpha = pair.alpha.values(horizon)
    eta = pair.eta.values(horizon)
    prefix_eta = np.cumsum(eta)
    tail = slice(m - 1, horizon)
    return float(M1 * np.sum(alpha[tail] * prefix_eta[tail]) + M2 * np.sum(alpha[tail]))


# ---------------------------------------------------------------------------
# Numeric convergence evidence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesEvidence:
    """Numeric verdict for one series of nonnegative terms."""

    name: str
    partial_at_m: float
    growth_ratio: float
    verdict: str  # "convergent" | "divergent" | "inconclusive"
    method: str  # "zero" | "tail-growth" | "exponent-fit"
    exponent: float | None = None


def _fit_power_exponent(terms: np.ndarray, hi: int) -> tuple[float, float]:
    """Estimate p for terms ~ n^-p via Raabe quotients rho_n = n(1 - t_{n+1}/t_n).

    Fits rho against {1, 1/ln n, 1/n} on a geometric index grid; returns
    (p_hat, max_residual).  Exact to ~1e-5 for pure power terms.
    """
    lo = max(64, hi // 1000)
    idx = np.unique(np.geomspace(lo, hi - 2, 60).astype(np.int64))
    t_n = terms[idx - 1]
    t_n1 = terms[idx]
    rho = idx * (1.0 - t_n1 / t_n)
    basis = np.stack([np.ones(idx.size), -1.0 / np.log(idx), 1.0 / idx], axis=1)
    coef, *_ = np.linalg.lstsq(basis, rho, rcond=None)
    fitted = basis @ coef
    return float(coef[0]), float(np.max(np.abs(rho - fitted)))


def _prefix_growth_class(prefix: np.ndarray, M: int) -> tuple[str, float]:
    """Classify a nondecreasing prefix-sum sequence as bounded,
    logarithmic, or power growth with estimated exponent."""
    e_half, e_m, e_2m = prefix[M // 2 - 1], prefix[M - 1], prefix[2 * M - 1]
    if e_2m <= 0 or (e_2m - e_m) / e_2m < 1e-3:
        return "bounded", 0.0
    increment_ratio = (e_2m - e_m) / (e_m - e_half)
    if increment_ratio < 1.02:
        return "logarithmic", 0.0
    return "power", float(np.log2(increment_ratio))


def _series_evidence(
    name: str,
    power_part: np.ndarray,
    prefix_factor: np.ndarray | None,
    M: int,
) -> SeriesEvidence:
    """Two-tier numeric verdict for sum_n power_part_n * prefix_factor_n.

    ``power_part`` must be a pure power sequence (products of schedule
    powers and explicit n factors); ``prefix_factor`` is an optional
    nondecreasing prefix-sum factor whose growth class is estimated
    separately so that logarithmic factors do not bias the exponent fit.
    """
    terms = power_part if prefix_factor is None else power_part * prefix_factor
    with np.errstate(over="ignore"):
        csum = np.cumsum(terms)
    s_m, s_2m = float(csum[M - 1]), float(csum[2 * M - 1])
    if not np.isfinite(s_2m):
        return SeriesEvidence(name, s_m, np.inf, "divergent", "tail-growth")
    if s_m == 0.0:
        return SeriesEvidence(name, 0.0, 0.0, "convergent", "zero")
    growth = (s_2m - s_m) / s_m
    if growth < GROWTH_TOL:
        return SeriesEvidence(name, s_m, growth, "convergent", "tail-growth")

    p_hat, residual = _fit_power_exponent(power_part, 2 * M)
    if residual > _FIT_RESIDUAL_TOL:
        return SeriesEvidence(name, s_m, growth, "inconclusive", "exponent-fit", p_hat)
    p_eff = p_hat
    if prefix_factor is not None:
        kind, gamma = _prefix_growth_class(prefix_factor, M)
        if kind == "power":
            p_eff = p_hat - gamma
        # bounded and logarithmic factors do not move the threshold:
        # sum n^-p log n converges exactly when p > 1
    verdict = "convergent" if p_eff > 1.0 + EXPONENT_MARGIN else "divergent"
    return SeriesEvidence(name, s_m, growth, verdict, "exponent-fit", p_eff)


@dataclass(frozen=True)
class ConditionReport:
    """Symbolic verdicts, numeric evidence, and their agreement."""

    h: float
    k: float
    theorem31_ok: bool
    lemma42_ok: bool
    theorem31_trace: str
    lemma42_trace: str
    truncation: int
    sums: tuple[float, float, float, float]
    evidence: tuple[SeriesEvidence, ...]
    numeric_theorem31: str  # "convergent" | "divergent" | "inconclusive"
    numeric_lemma42: str
    agreement: bool


def _combine(verdicts: list[str]) -> str:
    if any(v == "inconclusive" for v in verdicts):
        return "inconclusive"
    return "convergent" if all(v == "convergent" for v in verdicts) else "divergent"


def classify(pair: SchedulePair, M: int = 10**5) -> ConditionReport:
    """Full report for a power-form pair at truncation ``M``.

    The numeric theorem verdicts combine the series each condition set
    bounds: S1, S2 and the squared-stepsize series for the statistics
    conditions, plus S3 and S4 for the stationarity conditions.  The
    squared-stepsize series stands in for the stepsize requirement on
    the numeric side; like the rest it is evidence, not proof.
    """
    if M < 8:
        raise ParameterError(f"truncation too small for classification, got {M}")
    if not pair.is_power_form:
        raise ParameterError("classify requires power-form alpha and eta schedules")
    h, k = pair.h, pair.k

    thm31 = check_theorem31_rule(h, k)
    lem42 = check_lemma42_rule(h, k)
    trace31 = f"h={h:g} {'>' if h > 1 else '<='} 1 and k={k:g} {'>=' if k >= 1 else '<'} 1"
    trace42 = f"h={h:g} {'>' if h > 2 else '<='} 2 and k={k:g} {'>=' if k >= 1 else '<'} 1"

    n = np.arange(1, 2 * M + 1, dtype=np.float64)
    alpha = pair.alpha.values(2 * M)
    eta = pair.eta.values(2 * M)
    prefix_eta = np.cumsum(eta)

    ev_s1 = _series_evidence("S1", alpha, None, M)
    ev_s2 = _series_evidence("S2", alpha, prefix_eta, M)
    ev_s3 = _series_evidence("S3", n * alpha, prefix_eta, M)
    ev_s4 = _series_evidence("S4", n * alpha, None, M)
    ev_eta2 = _series_evidence("eta^2", eta**2, None, M)
    evidence = (ev_s1, ev_s2, ev_s3, ev_s4, ev_eta2)

    num31 = _combine([ev_s1.verdict, ev_s2.verdict, ev_eta2.verdict])
    num42 = _combine([num31, ev_s3.verdict, ev_s4.verdict])

    agree = (
        num31 != "inconclusive"
        and num42 != "inconclusive"
        and (num31 == "convergent") == thm31
        and (num42 == "convergent") == lem42
    )

    return ConditionReport(
        h=h,
        k=k,
        theorem31_ok=thm31,
        lemma42_ok=lem42,
        theorem31_trace=trace31,
        lemma42_trace=trace42,
        truncation=M,
        sums=partial_sums(pair, M),
        evidence=evidence,
        numeric_theorem31=num31,
        numeric_lemma42=num42,
        agreement=agree,
    )
