"""Finite-sample statistics: entropy, Chernoff-type bounds, sampling term.

Every finite-size estimate in this package flows through the two Chernoff
helpers below. Each invocation consumes one failure probability epsilon;
the EpsilonLedger records those spends so the final security parameter can
be assembled (and audited) instead of being hard-coded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DomainError(ValueError):
    """Raised when a statistical function is evaluated outside its domain."""


@dataclass(frozen=True)
class BoundPair:
    """A two-sided bound on a count. lower <= upper, both nonnegative."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise DomainError("bounds must be numbers")
        if self.lower < 0:
            raise DomainError("count bounds cannot be negative")
        if self.lower > self.upper:
            raise DomainError(f"lower bound {self.lower} exceeds upper bound {self.upper}")


def binary_entropy(x: float) -> float:
    r"""Binary entropy H2(x) = -x log2 x - (1-x) log2 (1-x).

    Defined on [0, 1] with the usual continuous extension H2(0) = H2(1) = 0.
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def chernoff_observed(expected: float, eps: float) -> BoundPair:
    """Bound an observed count given its expectation.

    With probability at least 1 - 2 eps the observation O of a sum of
    independent Bernoulli variables with mean x* satisfies
    x* - sqrt(2 beta x*) <= O <= x* + beta/2 + sqrt(2 beta x* + beta^2/4)
    where beta = ln(1/eps). The lower bound is floored at zero.
    """
    if expected < 0:
        raise DomainError("expected count must be nonnegative")
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie strictly inside (0, 1)")
    beta = math.log(1.0 / eps)
    upper = expected + beta / 2.0 + math.sqrt(2.0 * beta * expected + beta * beta / 4.0)
    lower = max(expected - math.sqrt(2.0 * beta * expected), 0.0)
    return BoundPair(lower, upper)


def chernoff_expected(observed: float, eps: float) -> BoundPair:
    """Bound the expectation of a count given one observation of it.

    Inverse direction of chernoff_observed: with probability at least
    1 - 2 eps the mean x* satisfies
    x - beta/2 - sqrt(2 beta x + beta^2/4) <= x* <= x + beta + sqrt(2 beta x + beta^2)
    with beta = ln(1/eps). The lower bound is floored at zero.
    """
    if observed < 0:
        raise DomainError("observed count must be nonnegative")
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie strictly inside (0, 1)")
    beta = math.log(1.0 / eps)
    upper = observed + beta + math.sqrt(2.0 * beta * observed + beta * beta)
    lower = max(observed - beta / 2.0 - math.sqrt(2.0 * beta * observed + beta * beta / 4.0), 0.0)
    return BoundPair(lower, upper)


def sampling_gamma_upper(n: float, k: float, lam: float, eps: float) -> float:
    """Random-sampling correction for inferring a phase error rate.

    Bounds how much the unobserved-error fraction of an n-element sample can
    exceed the rate lam measured on a k-element reference sample, except with
    probability eps. Positive, and decreasing in both n and k.
    """
    if n <= 0 or k <= 0:
        raise DomainError("sample sizes must be positive")
    if not 0.0 < lam < 1.0:
        raise DomainError("the reference rate must lie strictly inside (0, 1)")
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie strictly inside (0, 1)")
    a_big = max(n, k)
    g_big = (n + k) / (n * k) * math.log((n + k) / (2.0 * math.pi * n * k * lam * (1.0 - lam) * eps * eps))
    if g_big < 0:
        # Enormous samples at fixed eps: the simple bound saturates at zero.
        return 0.0
    term = a_big * g_big / (n + k)
    numerator = (1.0 - 2.0 * lam) * term + math.sqrt(term * term + 4.0 * lam * (1.0 - lam) * g_big)
    denominator = 2.0 + 2.0 * a_big * a_big * g_big / (n + k) ** 2
    return numerator / denominator


class EpsilonLedger:
    """Running record of failure-probability spends in one estimation pass.

    Each call to spend() stands for one application of a concentration
    bound at failure probability eps. Labels group spends by the quantity
    being estimated so the security composition can be reported per term.
    """

    def __init__(self) -> None:
        self._spends: list[tuple[str, float]] = []

    def spend(self, label: str, eps: float, count: int = 1) -> None:
        if count < 0:
            raise DomainError("cannot spend a negative number of epsilons")
        for _ in range(count):
            self._spends.append((label, eps))

    def count(self, label: str) -> int:
        return sum(1 for spent_label, _ in self._spends if spent_label == label)

    def total(self, label: str | None = None) -> float:
        return sum(eps for spent_label, eps in self._spends if label is None or spent_label == label)

    def labels(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for label, _ in self._spends:
            out[label] = out.get(label, 0) + 1
        return out
