"""Closed-form error bounds used by the report command.

All formulas here are pure arithmetic, so T can be as large as 2^60.
Logarithms written ``log2`` are base 2; ``ln`` is natural.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import log, log2, pi, sqrt
from typing import Optional

from .mechanisms import PrivacyBudget
from .sensitivity import ceil_log

SQRT_MAX_CONSTANT = 1.067
SQRT_MEAN_CONSTANT = 0.908


# leading constants of the subtraction-tree bounds, as functions of b


def zcdp_max_constant(b: int) -> float:
    return sqrt(b - 1) / (sqrt(2) * log2(b))


def zcdp_mean_constant(b: int) -> float:
    return sqrt(b * (1 - 1 / b**2)) / (2 * log2(b))


def pure_max_constant(b: int) -> float:
    return sqrt((b - 1) / (2 * log2(b) ** 3))


def pure_mean_constant(b: int) -> float:
    return sqrt(b * (1 - 1 / b**2) / (4 * log2(b) ** 3))


CONSTANTS = {
    ("zcdp", "max"): zcdp_max_constant,
    ("zcdp", "mean"): zcdp_mean_constant,
    ("pure", "max"): pure_max_constant,
    ("pure", "mean"): pure_mean_constant,
}


def best_branching(kind: str, metric: str, candidates=range(3, 32, 2)) -> tuple[int, float]:
    """Odd b minimizing the leading constant, with the minimum."""
    fn = CONSTANTS[(kind, metric)]
    b = min(candidates, key=fn)
    return b, fn(b)


# closed-form norms of the tree decoders


def plain_tree_norms(b: int, h: int) -> tuple[float, float]:
    """(||L||_{2->inf}, ||L||_F / sqrt(T)) of the plain tree with T = b^h."""
    return sqrt((b - 1) * h), sqrt((b - 1) * h / 2 + b ** (-h))


def subtract_tree_norms(b: int, h: int) -> tuple[float, float]:
    """Same for the subtraction tree, odd b >= 3, T = b^h."""
    return sqrt(((b - 1) * h + 2) / 2), sqrt(b * (1 - 1 / b**2) * h + 2 * (1 + b ** (-h))) / 2


def subtract_tree_norm_upper(b: int, T: int) -> tuple[float, float]:
    """Upper bounds on the same norms valid for every T >= b."""
    h = ceil_log(b, T)
    return sqrt(((b - 1) * h + 2) / 2), sqrt(b * (1 - 1 / b**2) * h + 2 * (1 + b**2 + b ** (-h))) / 2


# report rows


@dataclass(frozen=True)
class ReportRow:
    mechanism: str
    T: int
    k: int
    D: int
    budget: str
    max_se: float
    mean_se: float
    sensitivity: float
    sensitivity_is_bound: bool
    method: str

    FIELDS = ("mechanism", "T", "k", "D", "budget", "max_se", "mean_se", "sensitivity",
              "sensitivity_is_bound", "method")


def _noise_factor(budget: PrivacyBudget) -> float:
    """Multiplier turning a sensitivity into a noise standard deviation."""
    return 1 / sqrt(2 * budget.value) if budget.kind == "zcdp" else sqrt(2) / budget.value


def sqrt_rows(T: int, k: int, D: int, budget: PrivacyBudget) -> list[ReportRow]:
    b = budget.describe()
    c00 = log(T) / pi + SQRT_MAX_CONSTANT  # bound on ||sqrt(A)||_{1->2}^2
    if budget.kind == "zcdp":
        sens = sqrt(D * k * c00)
        f = _noise_factor(budget)
        rows = [ReportRow("sqrt_toeplitz", T, k, D, b, c00 * sqrt(D * k) * f,
                          (log(T) / pi + SQRT_MEAN_CONSTANT) * sqrt(D * k) * f, sens, True,
                          "column-norm bound; mean drops a vanishing term")]
        lead = log(T) / pi * sqrt(D * k) * f
        rows.append(ReportRow("sqrt_toeplitz_leading", T, k, D, b, lead, lead, sens, True, "dominant term only"))
        return rows
    # l1: ||R v||_1 <= k * sum_t r_t and sum_{t<T} r_t <= 1 + 2 sqrt((T-1)/pi)
    sens1 = min(k, D * T) * (1 + 2 * sqrt((T - 1) / pi))
    err = sqrt(c00) * sens1 * _noise_factor(budget)
    return [ReportRow("sqrt_toeplitz", T, k, D, b, err, err, sens1, True, "column l1 bound")]


def tree_sens_upper(b: int, T: int, k: int, D: int, p: int) -> float:
    """D [ceil(k/D) (ceil(log_b(DT/k)) + 2)]^(1/p), an upper bound over S_{D,k}."""
    return D * ((-(-k // D)) * (ceil_log(b, Fraction(D * T, k)) + 2)) ** (1 / p)


def tree_rows(T: int, k: int, D: int, budget: PrivacyBudget, b: int) -> list[ReportRow]:
    name = f"tree_subtract_b{b}"
    label = budget.describe()
    p = 2 if budget.kind == "zcdp" else 1
    f = _noise_factor(budget)
    sens = tree_sens_upper(b, T, k, D, p)
    if b ** ceil_log(b, T) == T:
        lmax, lmean = subtract_tree_norms(b, ceil_log(b, T))
        how = "exact norms for T = b^h, sensitivity upper bound"
    else:
        lmax, lmean = subtract_tree_norm_upper(b, T)
        lmean = min(lmean, lmax)  # the mean row norm never exceeds the max
        how = "norm and sensitivity upper bounds"
    rows = [ReportRow(name, T, k, D, label, lmax * sens * f, lmean * sens * f, sens, True, how)]
    ratio = log2(D * T / k)
    if ratio > 0:
        if budget.kind == "zcdp":
            base = sqrt(D * k * ratio * log2(T)) * f
        else:
            base = sqrt(2 * log2(T)) * k * ratio / budget.value
        kind = budget.kind
        rows.append(ReportRow(name + "_leading", T, k, D, label, CONSTANTS[(kind, "max")](b) * base,
                              CONSTANTS[(kind, "mean")](b) * base, sens, True, "leading constant only"))
    return rows


def naive_row(T: int, k: int, D: int, budget: PrivacyBudget) -> ReportRow:
    p = 2 if budget.kind == "zcdp" else 1
    sens = min(D, k) * T ** (1 / p)
    err = sens * _noise_factor(budget)
    return ReportRow("naive", T, k, D, budget.describe(), err, err, sens, False, "exact")


def baseline_row(T: int, k: int, D: int, budget: PrivacyBudget) -> ReportRow:
    """Binary tree with sensitivity sqrt(k (1 + log2 T)); a proxy for prior work."""
    h = ceil_log(2, T)
    p = 2 if budget.kind == "zcdp" else 1
    sens = D * ((-(-k // D)) * (1 + log2(T))) ** (1 / p)
    f = _noise_factor(budget)
    lmax, lmean = plain_tree_norms(2, h)
    return ReportRow("binary_tree_baseline", T, k, D, budget.describe(), lmax * sens * f, lmean * sens * f,
                     sens, True, "proxy baseline")


def bound_rows(T: int, ks, D: int, budget: PrivacyBudget, b: Optional[int] = None) -> list[ReportRow]:
    if b is None:
        b = best_branching(budget.kind, "max")[0]
    if b < 3 or b % 2 == 0:
        raise ValueError("the subtraction tree needs an odd b >= 3")
    rows = []
    for k in ks:
        if not 1 <= k <= T:
            raise ValueError(f"k={k} outside [1, T]")
        rows.extend(sqrt_rows(T, k, D, budget))
        if T >= b:
            rows.extend(tree_rows(T, k, D, budget, b))
        rows.append(naive_row(T, k, D, budget))
        rows.append(baseline_row(T, k, D, budget))
    return rows
