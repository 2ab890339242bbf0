"""Sensitivity of factorizations over S_{D,k}.

sens_p(R, S) = max over s in S of ||R s||_p.  Trees are handled exactly
through the parity dynamic program (the p-th power of the tree's
sensitivity on S_{1,k} is the largest number of nodes holding an odd
number of k balls placed on distinct leaves).  Toeplitz factorizations get
the sqrt(Dk) ||R||_{1->2} bound, and every factorization can be checked
by exhaustive enumeration at small T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import FeasibilityError
from .factorizations import BaryTree, Factorization, LowerToeplitz, NaiveFactorization, tree_height
from .stream_model import SetParams, enumerate_S1k, enumerate_SDk

METHODS = ("exact_dp", "closed_bound", "brute_force", "empirical")

DP_MAX_BRANCHING = 5
DP_OP_BUDGET = 2 * 10**9
_NEG = -(10**12)


@dataclass(frozen=True)
class SensQuery:
    factorization: Factorization
    p: int
    set: SetParams
    method: str = "exact_dp"

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.set.T != self.factorization.T:
            raise ValueError("set length differs from the factorization's T")


@dataclass
class SensResult:
    """value is None when only a bracket is known."""

    value: Optional[float]
    lower: Optional[float]
    upper: Optional[float]
    witness: Optional[tuple] = None
    method: str = ""
    exact: bool = False
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"value": self.value, "lower": self.lower, "upper": self.upper,
                "witness": list(self.witness) if self.witness is not None else None,
                "method": self.method, "exact": self.exact, "extras": self.extras}


# ---------------------------------------------------------------------------
# small integer helpers


def ceil_log(b: int, x) -> int:
    """Smallest integer a >= 0 with b^a >= x, for rational x > 0."""
    x = Fraction(x)
    a, power = 0, Fraction(1)
    while power < x:
        power *= b
        a += 1
    return a


def floor_log(b: int, x) -> int:
    """Largest integer a with b^a <= x, for rational x >= 1."""
    x = Fraction(x)
    if x < 1:
        raise ValueError("floor_log needs x >= 1")
    a, power = 0, Fraction(b)
    while power <= x:
        power *= b
        a += 1
    return a


def maxplus(a: np.ndarray, b: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """c[s] = max_i a[i] + b[s-i] for s < size, plus the maximizing i."""
    c = np.full(size, _NEG, dtype=a.dtype)
    arg = np.zeros(size, dtype=np.int64)
    for i in range(min(len(a), size)):
        if a[i] <= _NEG // 2:
            continue
        n = min(len(b), size - i)
        cand = a[i] + b[:n]
        better = cand > c[i:i + n]
        c[i:i + n] = np.where(better, cand, c[i:i + n])
        arg[i:i + n] = np.where(better, i, arg[i:i + n])
    return c, arg


# ---------------------------------------------------------------------------
# parity dynamic program


class ParityDP:
    """Maximum number of odd nodes for each ball count, on a b-ary tree.

    The tree has height h and only its first ``leaves`` leaves may hold a
    ball.  If ``excluded`` is a child position, the node at that position
    under every parent does not count (its row of R is zero); the root
    always counts.  Nodes are grouped by (level, capacity); at most three
    capacities occur per level, so the table is tiny.  Children are combined
    by max-plus convolution, which ranges over every weak composition of the
    ball count with per-child caps.
    """

    def __init__(self, b: int, h: int, kmax: int, leaves: Optional[int] = None,
                 excluded: Optional[int] = None, max_branching: int = DP_MAX_BRANCHING,
                 op_budget: int = DP_OP_BUDGET):
        if b < 2 or h < 0:
            raise ValueError("need b >= 2 and h >= 0")
        if b > max_branching:
            raise FeasibilityError(f"branching factor {b} exceeds the DP limit {max_branching}")
        leaves = b**h if leaves is None else leaves
        if not 1 <= leaves <= b**h:
            raise ValueError("leaf count must lie in [1, b^h]")
        self.b, self.h, self.leaves, self.excluded = b, h, leaves, excluded
        self.kmax = min(kmax, leaves)
        if h * b * (self.kmax + 1) ** 2 > op_budget:
            raise FeasibilityError("parity DP exceeds the operation budget")
        self._memo: dict = {}

    def _children(self, level: int, cap: int) -> list[tuple[int, int]]:
        width = self.b ** (level - 1)
        out = []
        for i in range(self.b):
            w = 0 if i == self.excluded else 1
            out.append((min(max(cap - i * width, 0), width), w))
        return out

    def table(self, level: int, cap: int, w: int) -> np.ndarray:
        key = (level, cap, w)
        if key in self._memo:
            return self._memo[key][0]
        size = min(cap, self.kmax) + 1
        args = []
        if level == 0:
            vals = np.array([0, w][:size], dtype=np.int64)
        else:
            acc = None
            for child_cap, child_w in self._children(level, cap):
                sub = self.table(level - 1, child_cap, child_w)
                if acc is None:
                    acc = sub[:size].copy()
                    continue
                acc, arg = maxplus(acc, sub, size)
                args.append(arg)
            vals = acc.copy()
            vals[1::2] += w
        self._memo[key] = (vals, args)
        return vals

    def root_table(self) -> np.ndarray:
        return self.table(self.h, self.leaves, 1)

    def witness(self, k: int) -> list[int]:
        """Leaf positions of a ball placement attaining the table value at k."""
        self.root_table()
        out: list[int] = []
        self._backtrack(self.h, self.leaves, 1, k, 0, out)
        return sorted(out)

    def _backtrack(self, level, cap, w, k, start, out):
        if k == 0:
            return
        if level == 0:
            out.append(start)
            return
        _, args = self._memo[(level, cap, w)]
        children = self._children(level, cap)
        counts = [0] * self.b
        for i in range(self.b - 1, 0, -1):
            kept = int(args[i - 1][k])  # balls left with children 0..i-1
            counts[i] = k - kept
            k = kept
        counts[0] = k
        width = self.b ** (level - 1)
        for i, (child_cap, child_w) in enumerate(children):
            self._backtrack(level - 1, child_cap, child_w, counts[i], start + i * width, out)


def count_odd_nodes(b: int, h: int, leaves, excluded: Optional[int] = None) -> int:
    """Score a ball placement directly: nodes whose subtree holds an odd count."""
    counts: dict[tuple[int, int], int] = {}
    for leaf in leaves:
        for level in range(h + 1):
            key = (level, leaf // b**level)
            counts[key] = counts.get(key, 0) + 1
    return sum(1 for (level, idx), c in counts.items()
               if c % 2 == 1 and not (excluded is not None and level < h and idx % b == excluded))


def parity_dp_full(b: int, h: int, k: int, max_branching: int = DP_MAX_BRANCHING) -> int:
    if not 0 <= k <= b**h:
        raise ValueError(f"k={k} outside [0, b^h]")
    return int(ParityDP(b, h, k, max_branching=max_branching).root_table()[k])


def parity_dp_reduced(b: int, h: int, k: int, max_branching: int = DP_MAX_BRANCHING) -> int:
    """As parity_dp_full, with the first child under each parent not counted."""
    if not 0 <= k <= b**h:
        raise ValueError(f"k={k} outside [0, b^h]")
    return int(ParityDP(b, h, k, excluded=0, max_branching=max_branching).root_table()[k])


def tree_parity_dp(f: BaryTree, kmax: int, max_branching: int = DP_MAX_BRANCHING) -> ParityDP:
    """The DP matching a concrete tree factorization, including truncated T."""
    return ParityDP(f.b, f.h, kmax, leaves=f.T, excluded=f.excluded_child, max_branching=max_branching)


# ---------------------------------------------------------------------------
# closed-form tree brackets


def tree_bounds_full(b: int, h: int, k: int) -> tuple[float, float]:
    """Bracket on the full-tree parity count F_b(h, k)."""
    a = ceil_log(b, k)
    return k * (h - a + 1), k * (h - a + 1) + (b**a - 1) / (b - 1)


def tree_bounds_reduced(b: int, h: int, k: int) -> tuple[float, float]:
    """Bracket on the reduced-tree parity count."""
    a = ceil_log(b, k)
    return k * (h - a + 1 - 1 / b), k * (h - a + 1) + float(Fraction(b) ** (a - 1))


def sens_bracket_full(b: int, h: int, k: int) -> tuple[float, float]:
    """Bracket on sens_p(R_b, S_{1,k})^p for the full tree with b^h leaves."""
    a = ceil_log(b, k)
    lower = max(k * (h - a + 1), float(Fraction(b) ** (a - 1)) * (h - a + 2))
    return lower, k * (h - a + 1) + (b**a - 1) / (b - 1)


def sens_bracket_reduced(b: int, h: int, k: int) -> tuple[Optional[float], float]:
    """Bracket on the reduced-tree sens^p; no lower bound is known for b = 2."""
    a = ceil_log(b, k)
    upper = k * (h - a + 1) + float(Fraction(b) ** (a - 1))
    if b < 3:
        return None, upper
    lower = max(k * (h - a + 1 - 1 / b), float(Fraction(b) ** (a - 1)) * (h - a + 2 - 1 / b))
    return lower, upper


def sens_bracket_reduced_any_T(b: int, T: int, k: int) -> tuple[float, float]:
    """Bracket on the reduced-tree sens^p for any T, b >= 3."""
    if b < 3:
        raise ValueError("needs b >= 3")
    h = tree_height(b, T)
    kt = min(k, b ** (h - 1))
    lower = kt * (h - ceil_log(b, kt) - 1 / b)
    upper = k * (ceil_log(b, Fraction(T, k)) + 2)
    return lower, upper


def tree_sdk_bracket(b: int, T: int, D: int, k: int, p: int) -> tuple[Optional[float], float]:
    """Bracket on the reduced tree's sens_p over S_{D,k}.

    The lower end needs 3 <= b and D <= k <= T/b; otherwise only the upper
    end is returned.
    """
    ratio = Fraction(D * T, k)
    upper = D * (-(-k // D) * (ceil_log(b, ratio) + 2)) ** (1 / p)
    if b >= 3 and D <= k and b * k <= T:
        lower = D * ((k // D) * (floor_log(b, ratio) - 1 / b)) ** (1 / p)
        return lower, upper
    return None, upper


def _tree_closed_S1(f: BaryTree, k: int) -> tuple[Optional[float], float]:
    """Closed-form bracket on sens^p over S_{1,k} for a concrete tree."""
    k = min(k, f.T)
    b, h, T = f.b, f.h, f.T
    if h == 0:
        return 1.0, 1.0
    power = b**h == T
    if not f.reduced:
        upper = sens_bracket_full(b, h, k)[1]
        if power:
            return sens_bracket_full(b, h, k)[0], upper
        # the full subtree of height h-1 sits inside the first b^(h-1) columns
        lower = sens_bracket_full(b, h - 1, min(k, b ** (h - 1)))[0] if h > 1 else 1.0
        return lower, upper
    if power:
        return sens_bracket_reduced(b, h, k)
    if b >= 3:
        return sens_bracket_reduced_any_T(b, T, k)
    return None, sens_bracket_reduced(b, h, k)[1]


# ---------------------------------------------------------------------------
# splitting S_{D,k} into alternating parts


def max_split(values: np.ndarray, D: int, k: int) -> float:
    """Max of sum_d values[k_d] over k_1 + ... + k_D <= k.

    values[j] is a bound on sens over S_{1,j}; entries past its end are
    taken equal to the last one (the set stops growing once j >= T).
    """
    vals = np.asarray(values, dtype=float)
    if len(vals) < k + 1:
        vals = np.concatenate([vals, np.full(k + 1 - len(vals), vals[-1])])
    vals = np.maximum.accumulate(vals[: k + 1])
    acc = vals.copy()
    for _ in range(D - 1):
        acc = np.array([np.max(acc[: s + 1] + vals[s::-1]) for s in range(k + 1)])
    return float(acc[k])


def reduction_bounds(base: Callable[[int], float], U: Callable[[int], float], p: SetParams,
                     check_grid: Optional[int] = None) -> tuple[float, float]:
    """Bracket sens over S_{D,k} from alternating-set quantities.

    Lower: D * base(floor(k/D)).  Upper: D * U(ceil(k/D)), valid when U is
    a concave nondecreasing upper bound on base.  U is checked to be
    nondecreasing on the integers 1..check_grid (default k).
    """
    grid = p.k if check_grid is None else check_grid
    samples = [U(j) for j in range(1, grid + 1)]
    if any(later < earlier - 1e-12 for earlier, later in zip(samples, samples[1:])):
        raise ValueError("U is not nondecreasing on the sampled grid")
    D, k = p.D, p.k
    lower = D * base(k // D) if k >= D else 0.0
    return lower, D * U(-(-k // D))


def concave_majorant(values) -> np.ndarray:
    """Least concave majorant on the integer grid (upper hull)."""
    y = np.asarray(values, dtype=float)
    hull: list[int] = []
    for i in range(len(y)):
        while len(hull) >= 2:
            a, c = hull[-2], hull[-1]
            if (y[c] - y[a]) * (i - a) <= (y[i] - y[a]) * (c - a):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(np.arange(len(y)), hull, y[hull])


# ---------------------------------------------------------------------------
# brute force and sampling


@lru_cache(maxsize=64)
def _enumerated(T: int, D: int, k: int) -> np.ndarray:
    source = enumerate_S1k(T, min(k, T)) if D == 1 else enumerate_SDk(T, D, k)
    return np.array(list(source), dtype=float).reshape(-1, T)


def brute_force_sens(f: Factorization, p: int, s: SetParams) -> SensResult:
    """Exhaustive max of ||R v||_p over the enumerated set."""
    if s.T != f.T:
        raise ValueError("set length differs from the factorization's T")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    V = _enumerated(s.T, s.D, s.k)
    out = V @ f.right_matrix().T
    norms = np.abs(out).sum(axis=1) if p == 1 else np.sqrt((out**2).sum(axis=1))
    i = int(np.argmax(norms))
    value = float(norms[i])
    witness = tuple(int(x) for x in V[i])
    return SensResult(value, value, value, witness, "brute_force", True)


@dataclass(frozen=True)
class EmpiricalLowerBound:
    max_norm: float
    mean_square: float
    trials: int


def empirical_lower_estimate(f: Factorization, s: SetParams, trials: int, rng_seed) -> EmpiricalLowerBound:
    """Sample k-sparse alternating vectors and measure ||R v||_2.

    Supports are k positions drawn without replacement, the leading sign is
    a fair coin, and later signs alternate.  The max is a valid lower bound
    on sens_2; the mean of squares estimates E||R v||^2.
    """
    if s.D != 1:
        raise ValueError("sampling is defined on S_{1,k}")
    if s.k > s.T or s.T != f.T:
        raise ValueError("need k <= T and matching lengths")
    rng = np.random.default_rng(rng_seed)
    T, k = s.T, s.k
    toeplitz = isinstance(f, LowerToeplitz)
    R = None if toeplitz else f.right_matrix()
    best, total = 0.0, 0.0
    for _ in range(trials):
        support = np.sort(rng.choice(T, size=k, replace=False))
        signs = np.where(np.arange(k) % 2 == 0, 1.0, -1.0) * (1.0 if rng.random() < 0.5 else -1.0)
        if toeplitz:
            y = np.zeros(T)
            for pos, sign in zip(support, signs):
                y[pos:] += sign * f.coeffs[: T - pos]
        else:
            y = R[:, support] @ signs
        sq = float(y @ y)
        best = max(best, sq)
        total += sq
    return EmpiricalLowerBound(float(np.sqrt(best)), total / trials, trials)


# ---------------------------------------------------------------------------
# per-family entry points


def _root(x: Optional[float], p: int) -> Optional[float]:
    return None if x is None else float(x) ** (1.0 / p)


def tree_sens(q: SensQuery, max_branching: int = DP_MAX_BRANCHING) -> SensResult:
    f, p, s = q.factorization, q.p, q.set
    if not isinstance(f, BaryTree):
        raise ValueError("tree_sens needs a BaryTree")
    D, k = s.D, s.k
    if q.method == "brute_force":
        return brute_force_sens(f, p, s)
    if q.method == "empirical":
        est = empirical_lower_estimate(f, SetParams(1, min(k, f.T), f.T), 10**4, 0)
        return SensResult(None, est.max_norm, None, None, "empirical", False,
                          {"mean_square": est.mean_square})
    extras = {}
    if f.subtract and f.reduced and D > 1:
        lo, hi = tree_sdk_bracket(f.b, f.T, D, k, p)
        extras["closed_form_lower"], extras["closed_form_upper"] = lo, hi
    if q.method == "closed_bound":
        grid = [_tree_closed_S1(f, j) if j else (0.0, 0.0) for j in range(min(k, f.T) + 1)]
        lows = [g[0] for g in grid]
        ups = np.array([g[1] ** (1 / p) for g in grid])
        if D == 1:
            if f.reduced and f.b >= 3:
                lo, hi = sens_bracket_reduced_any_T(f.b, f.T, min(k, f.T))
                extras["any_T_lower"], extras["any_T_upper"] = _root(lo, p), _root(hi, p)
            return SensResult(None, _root(lows[-1], p), float(ups[-1]), None, "closed_bound", False, extras)
        lower_part = lows[min(k // D, f.T)]
        lower = None if lower_part is None else D * float(lower_part) ** (1 / p)
        return SensResult(None, lower, max_split(ups, D, k), None, "closed_bound", False, extras)
    # exact_dp
    dp = tree_parity_dp(f, k, max_branching=max_branching)
    table = dp.root_table()
    best = np.maximum.accumulate(table)
    if D == 1:
        kk = min(k, f.T)
        arg = int(np.argmax(table[: kk + 1]))
        leaves = dp.witness(arg)
        vec = [0] * f.T
        for i, leaf in enumerate(leaves):
            vec[leaf] = 1 if i % 2 == 0 else -1
        value = float(best[kk]) ** (1 / p)
        return SensResult(value, value, value, tuple(vec), "exact_dp", True, extras)
    roots = best.astype(float) ** (1 / p)
    lower = D * roots[min(k // D, len(roots) - 1)]
    upper = max_split(roots, D, k)
    extras["note"] = "exact DP applies to S_{1,k} only; S_{D,k} is bracketed"
    return SensResult(None, float(lower), upper, None, "exact_dp", False, extras)


def toeplitz_sens_bound(f: LowerToeplitz, s: SetParams, p: int = 2, lower_trials: int = 10**4,
                        seed=0) -> SensResult:
    """sqrt(Dk) ||R||_{1->2} upper bound, with a brute-force or sampled lower end."""
    if p != 2:
        raise ValueError("the Toeplitz bound is for p = 2")
    if not f.is_monotone():
        raise ValueError("diagonals must be non-negative and non-increasing")
    if s.T != f.T:
        raise ValueError("set length differs from the factorization's T")
    col = f.r_one_to_two()
    upper = float(np.sqrt(s.D * s.k) * col)
    if s.D == 1 and s.k == 1:
        return SensResult(col, col, col, None, "closed_bound", True)
    try:
        lower = brute_force_sens(f, 2, s).value
        how = "brute_force"
    except FeasibilityError:
        kk = min(s.k // s.D, f.T)
        lower = s.D * empirical_lower_estimate(f, SetParams(1, kk, f.T), lower_trials, seed).max_norm
        how = "empirical"
    return SensResult(None, lower, upper, None, "closed_bound", False, {"lower_from": how})


def toeplitz_sens1_bound(f: LowerToeplitz, s: SetParams) -> float:
    """||R v||_1 <= ||v||_1 * max column l1 norm, and ||v||_1 <= k."""
    return float(min(s.k, s.T * s.D) * np.sum(np.abs(f.coeffs)))


def naive_sens(f: NaiveFactorization, s: SetParams, p: int) -> float:
    """Exact: an interval sum of D spread over every row of A."""
    return float(min(s.D, s.k) * f.T ** (1 / p))


def sensitivity(q: SensQuery) -> SensResult:
    """Dispatch a query to the right family."""
    f = q.factorization
    if q.method == "brute_force":
        return brute_force_sens(f, q.p, q.set)
    if isinstance(f, BaryTree):
        return tree_sens(q)
    if isinstance(f, NaiveFactorization):
        if q.method == "exact_dp":
            raise ValueError("exact_dp applies to trees only")
        v = naive_sens(f, q.set, q.p)
        return SensResult(v, v, v, None, "closed_bound", True)
    if isinstance(f, LowerToeplitz):
        if q.method == "exact_dp":
            raise ValueError("exact_dp applies to trees only")
        if q.method == "empirical":
            est = empirical_lower_estimate(f, SetParams(1, min(q.set.k, f.T), f.T), 10**4, 0)
            return SensResult(None, est.max_norm, None, None, "empirical", False,
                              {"mean_square": est.mean_square})
        if q.p == 1:
            return SensResult(None, None, toeplitz_sens1_bound(f, q.set), None, "closed_bound", False)
        return toeplitz_sens_bound(f, q.set)
    raise ValueError(f"unsupported factorization {f!r}")
