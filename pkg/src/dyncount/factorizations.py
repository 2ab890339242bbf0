"""Factorizations A = L R of the lower-triangular all-ones matrix.

Three families are provided: the Toeplitz square root of A, b-ary tree
aggregation (with and without subtraction), and the naive I x A split.
Each exposes its norms, the dense matrices for small T, a batched noise
sampler and an online generator of (Lz)[t].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import pi, sqrt
from typing import Iterator, NamedTuple

import numpy as np
import scipy.signal
import scipy.sparse

GRAM_CACHE_LIMIT = 8192


@dataclass(frozen=True)
class FactorNorms:
    l_two_to_inf: float
    l_frobenius_over_sqrtT: float
    r_one_to_two: float


def draw_noise(rng: np.random.Generator, size, distribution: str = "gaussian") -> np.ndarray:
    """Unit-scale noise: standard normal, or Laplace(0, 1) by inverse CDF."""
    if distribution == "gaussian":
        return rng.standard_normal(size)
    if distribution == "laplace":
        u = rng.random(size) - 0.5
        return -np.sign(u) * np.log1p(-2.0 * np.abs(u))
    raise ValueError(f"unknown noise distribution {distribution!r}")


def sqrt_coeffs(n: int) -> np.ndarray:
    """First n coefficients of the square root of A, r_t = C(2t, t) / 4^t."""
    r = np.empty(n)
    if n == 0:
        return r
    r[0] = 1.0
    for t in range(1, n):
        r[t] = r[t - 1] * (2 * t - 1) / (2 * t)
    return r


def sqrt_coeff(t: int) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    value = 1.0
    for s in range(1, t + 1):
        value *= (2 * s - 1) / (2 * s)
    return value


class Factorization:
    """Common interface; subclasses fill in the structure of L and R."""

    T: int
    label: str = "factorization"

    def left_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def right_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def row_norms_sq(self) -> np.ndarray:
        """Squared l2 norm of every row of L."""
        raise NotImplementedError

    def norms(self) -> FactorNorms:
        raise NotImplementedError

    def decode(self, t: int, rx: np.ndarray) -> float:
        """Row t of L applied to a vector in the range of R."""
        raise NotImplementedError

    def sample_noise(self, trials: int, scale: float, rng: np.random.Generator,
                     distribution: str = "gaussian") -> np.ndarray:
        """A (trials, T) array whose rows are independent draws of L z."""
        raise NotImplementedError

    def noise_stream(self, scale: float, seed, distribution: str = "gaussian") -> Iterator[float]:
        raise NotImplementedError

    def _check_t(self, t: int):
        if not 0 <= t < self.T:
            raise IndexError(f"time index {t} outside [0, {self.T})")


def online_noise_stream(f: Factorization, noise_scale: float, rng_seed,
                        distribution: str = "gaussian") -> Iterator[float]:
    return f.noise_stream(noise_scale, rng_seed, distribution)


def norms(f: Factorization) -> FactorNorms:
    return f.norms()


# ---------------------------------------------------------------------------
# Toeplitz


class LowerToeplitz:
    """Lower-triangular Toeplitz matrix given by its first column."""

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.ndim != 1 or self.coeffs.size == 0:
            raise ValueError("coeffs must be a non-empty 1-d sequence")
        self.T = self.coeffs.size

    def right_matrix(self) -> np.ndarray:
        idx = np.arange(self.T)
        lag = idx[:, None] - idx[None, :]
        return np.where(lag >= 0, self.coeffs[np.clip(lag, 0, None)], 0.0)

    def is_monotone(self) -> bool:
        """Non-negative and non-increasing along the diagonals."""
        c = self.coeffs
        return bool(np.all(c >= 0) and np.all(np.diff(c) <= 0))

    def r_one_to_two(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs**2)))

    def apply(self, x) -> np.ndarray:
        """R x for a single vector, or row-wise for a 2-d batch."""
        x = np.asarray(x, dtype=float)
        return scipy.signal.fftconvolve(np.atleast_2d(x), self.coeffs[None, :], axes=1)[..., : self.T].reshape(x.shape)


class SquareRootToeplitz(LowerToeplitz, Factorization):
    """L = R = sqrt(A), the lower-triangular Toeplitz square root."""

    label = "sqrt"

    def __init__(self, T: int):
        if T < 1:
            raise ValueError("T must be positive")
        super().__init__(sqrt_coeffs(T))
        self._sq_cumsum = np.cumsum(self.coeffs**2)
        self._cache = lru_cache(maxsize=None)(self._lag_cumsum) if T <= GRAM_CACHE_LIMIT else self._lag_cumsum

    def __repr__(self):
        return f"SquareRootToeplitz(T={self.T})"

    def _lag_cumsum(self, lag: int) -> np.ndarray:
        r = self.coeffs
        return np.cumsum(r[: self.T - lag] * r[lag:])

    def gram(self, i: int, j: int) -> float:
        """Entry (i, j) of R^T R, the sum over l < T - max(i,j) of r_l r_{l+|i-j|}."""
        self._check_t(i)
        self._check_t(j)
        lag = abs(i - j)
        return float(self._cache(lag)[self.T - max(i, j) - 1])

    def gram_diagonal(self) -> np.ndarray:
        return self._sq_cumsum[::-1].copy()

    def left_matrix(self) -> np.ndarray:
        return self.right_matrix()

    def row_norms_sq(self) -> np.ndarray:
        return self._sq_cumsum.copy()

    def norms(self) -> FactorNorms:
        c00 = float(self._sq_cumsum[-1])
        return FactorNorms(sqrt(c00), sqrt(float(np.mean(self._sq_cumsum))), sqrt(c00))

    def decode(self, t: int, rx) -> float:
        self._check_t(t)
        rx = np.asarray(rx, dtype=float)
        return float(rx[: t + 1] @ self.coeffs[t::-1])

    def sample_noise(self, trials, scale, rng, distribution="gaussian"):
        z = draw_noise(rng, (trials, self.T), distribution) * scale
        return self.apply(z)

    def noise_stream(self, scale, seed, distribution="gaussian"):
        rng = np.random.default_rng(seed)
        z = np.empty(self.T)
        r = self.coeffs
        for t in range(self.T):
            z[t] = draw_noise(rng, None, distribution) * scale
            yield float(z[: t + 1] @ r[t::-1])


def gram_entry(f: SquareRootToeplitz, i: int, j: int) -> float:
    return f.gram(i, j)


# ---------------------------------------------------------------------------
# Naive


class NaiveFactorization(Factorization):
    """L = I and R = A: every step's prefix sum gets fresh noise."""

    label = "naive"

    def __init__(self, T: int):
        if T < 1:
            raise ValueError("T must be positive")
        self.T = T

    def __repr__(self):
        return f"NaiveFactorization(T={self.T})"

    def left_matrix(self):
        return np.eye(self.T)

    def right_matrix(self):
        return np.tril(np.ones((self.T, self.T)))

    def row_norms_sq(self):
        return np.ones(self.T)

    def norms(self):
        return FactorNorms(1.0, 1.0, sqrt(self.T))

    def decode(self, t, rx):
        self._check_t(t)
        return float(rx[t])

    def sample_noise(self, trials, scale, rng, distribution="gaussian"):
        return draw_noise(rng, (trials, self.T), distribution) * scale

    def noise_stream(self, scale, seed, distribution="gaussian"):
        rng = np.random.default_rng(seed)
        for _ in range(self.T):
            yield float(draw_noise(rng, None, distribution) * scale)


# ---------------------------------------------------------------------------
# b-ary trees


class TreeNode(NamedTuple):
    level: int
    index: int

    def interval(self, b: int) -> tuple[int, int]:
        """Half-open leaf interval covered by the node."""
        width = b**self.level
        return self.index * width, (self.index + 1) * width


TREE_VARIANTS = ("plain", "plain_reduced", "subtract", "subtract_reduced")


def tree_height(b: int, T: int) -> int:
    """Smallest h with b^h >= T."""
    h, size = 0, 1
    while size < T:
        size *= b
        h += 1
    return h


def plain_digits(n: int, b: int, h: int) -> list[int]:
    """Base-b digits of n, least significant first, h+1 positions."""
    digits = []
    for _ in range(h + 1):
        n, d = divmod(n, b)
        digits.append(d)
    if n:
        raise ValueError("value does not fit in the tree")
    return digits


def offset_digits(n: int, b: int, h: int) -> list[int]:
    """Balanced base-b digits in [-(b-1)/2, (b-1)/2] for positions below h.

    The top position h only takes the value 0 or 1.
    """
    half = (b - 1) // 2
    digits = []
    for _ in range(h):
        d = (n + half) % b - half
        digits.append(d)
        n = (n - d) // b
    if n not in (0, 1):
        raise ValueError("value does not fit in the tree")
    digits.append(n)
    return digits


class BaryTree(Factorization):
    """b-ary tree aggregation over T leaves.

    R has one row per node, the indicator of the leaves below it, and L picks
    the signed node set that tiles each prefix.  ``plain`` adds at most b-1
    sibling nodes per level.  ``subtract`` (odd b) adds up to (b-1)/2
    left-most children or subtracts up to (b-1)/2 right-most ones, so the
    middle child is never read.  The ``_reduced`` variants zero the rows of
    the child that their decoder never reads (middle for subtract, last for
    plain).  For T that is not a power of b, the tree of height ceil(log_b T)
    is built and L is cut to its first T rows.
    """

    def __init__(self, b: int, T: int, variant: str = "plain"):
        if variant not in TREE_VARIANTS:
            raise ValueError(f"unknown tree variant {variant!r}")
        if b < 2:
            raise ValueError("branching factor must be at least 2")
        if variant.startswith("subtract") and (b < 3 or b % 2 == 0):
            raise ValueError("subtraction trees need an odd branching factor b >= 3")
        if T < 1:
            raise ValueError("T must be positive")
        self.b = b
        self.T = T
        self.variant = variant
        self.h = tree_height(b, T)
        self.subtract = variant.startswith("subtract")
        self.reduced = variant.endswith("_reduced")
        if self.reduced:
            self.excluded_child = (b - 1) // 2 if self.subtract else b - 1
        else:
            self.excluded_child = None
        self.level_offsets = [0]
        for level in range(self.h):
            self.level_offsets.append(self.level_offsets[-1] + b ** (self.h - level))
        self.m = (b ** (self.h + 1) - 1) // (b - 1)
        self.label = f"tree_b{b}_{variant}"

    def __repr__(self):
        return f"BaryTree(b={self.b}, T={self.T}, variant={self.variant!r})"

    def node_index(self, node: TreeNode) -> int:
        return self.level_offsets[node.level] + node.index

    def node_at(self, row: int) -> TreeNode:
        for level in range(self.h, -1, -1):
            if row >= self.level_offsets[level]:
                return TreeNode(level, row - self.level_offsets[level])
        raise IndexError(row)

    def is_zeroed(self, node: TreeNode) -> bool:
        return (self.excluded_child is not None and node.level < self.h
                and node.index % self.b == self.excluded_child)

    def query_nodes(self, t: int) -> list[tuple[int, TreeNode]]:
        """Signed nodes whose intervals tile the prefix [0, t]."""
        self._check_t(t)
        b, n = self.b, t + 1
        digits = offset_digits(n, b, self.h) if self.subtract else plain_digits(n, b, self.h)
        out = []
        pos = 0
        for level in range(self.h, -1, -1):
            d = digits[level]
            width = b**level
            if d > 0:
                out.extend((1, TreeNode(level, pos // width + i)) for i in range(d))
            elif d < 0:
                out.extend((-1, TreeNode(level, pos // width - 1 - i)) for i in range(-d))
            pos += d * width
        return out

    def query_sizes(self) -> np.ndarray:
        """|Q(t)| for every t, vectorized over the digit expansion of t+1."""
        n = np.arange(1, self.T + 1, dtype=np.int64)
        b = self.b
        total = np.zeros(self.T, dtype=np.int64)
        if self.subtract:
            half = (b - 1) // 2
            for _ in range(self.h):
                d = (n + half) % b - half
                total += np.abs(d)
                n = (n - d) // b
            total += n
        else:
            for _ in range(self.h + 1):
                total += n % b
                n //= b
        return total

    def row_norms_sq(self):
        return self.query_sizes().astype(float)

    def column_norms_sq(self) -> np.ndarray:
        """Number of non-zeroed ancestors (including itself) of each leaf < T."""
        j = np.arange(self.T, dtype=np.int64)
        total = np.ones(self.T, dtype=np.int64)  # the root
        for level in range(self.h):
            idx = j // self.b**level
            if self.excluded_child is None:
                total += 1
            else:
                total += (idx % self.b != self.excluded_child)
        return total

    def norms(self):
        sizes = self.query_sizes()
        return FactorNorms(sqrt(float(sizes.max())), sqrt(float(sizes.mean())),
                           sqrt(float(self.column_norms_sq().max())))

    def right_matrix(self):
        R = np.zeros((self.m, self.T))
        for row in range(self.m):
            node = self.node_at(row)
            if self.is_zeroed(node):
                continue
            lo, hi = node.interval(self.b)
            R[row, lo:min(hi, self.T)] = 1.0
        return R

    def left_sparse(self) -> scipy.sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for t in range(self.T):
            for sign, node in self.query_nodes(t):
                rows.append(t)
                cols.append(self.node_index(node))
                vals.append(sign)
        return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(self.T, self.m), dtype=float)

    def left_matrix(self):
        return self.left_sparse().toarray()

    def decode(self, t, rx):
        return float(sum(sign * rx[self.node_index(node)] for sign, node in self.query_nodes(t)))

    def sample_noise(self, trials, scale, rng, distribution="gaussian"):
        z = draw_noise(rng, (trials, self.m), distribution) * scale
        return np.asarray((self.left_sparse() @ z.T).T)

    def noise_stream(self, scale, seed, distribution="gaussian"):
        """Node noise is drawn the first time a node is read and dropped once no
        later prefix can use it, keeping O(b log T) values alive."""
        rng = np.random.default_rng(seed)
        live: dict[TreeNode, float] = {}
        for t in range(self.T):
            total = 0.0
            for sign, node in self.query_nodes(t):
                if node not in live:
                    live[node] = float(draw_noise(rng, None, distribution)) * scale
                total += sign * live[node]
            yield total
            n = t + 1
            # a later prefix reads level-l nodes only under parents >= n // b^(l+1) - 2
            stale = [node for node in live
                     if node.level < self.h and node.index // self.b < n // self.b ** (node.level + 1) - 2]
            for node in stale:
                del live[node]


def tree_query_nodes(f: BaryTree, t: int) -> list[tuple[int, TreeNode]]:
    return f.query_nodes(t)
