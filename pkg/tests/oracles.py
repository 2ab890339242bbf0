"""Independent reference computations used as test oracles.

Nothing here imports the package.  Each oracle takes a different route
from the code under test: exhaustive subset scans instead of the parity
DP, explicit matrices built from interval indicators instead of the
factorization classes, exact rational arithmetic for the Gram entries,
and brute-force triangle counting over node triples.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb

import numpy as np


# ---------------------------------------------------------------------------
# parity counting by exhaustive subset scan


def _node_masks(b: int, h: int):
    """(level, index, bitmask of leaves) for every node at levels 1..h."""
    out = []
    for level in range(1, h + 1):
        width = b**level
        for idx in range(b ** (h - level)):
            mask = 0
            for leaf in range(idx * width, (idx + 1) * width):
                mask |= 1 << leaf
            out.append((level, idx, mask))
    return out


def exhaustive_parity(b: int, h: int, chunk_bits: int = 20) -> dict:
    """Best odd-node count per ball count, over every subset of leaves.

    Returns {excluded: array} where excluded is None (every node counts)
    or a child position j (nodes at position j under their parent, below
    the root, do not count).  Leaves count as nodes at level 0.
    """
    n = b**h
    if n > 31:
        raise ValueError("too many leaves for an exhaustive scan")
    nodes = _node_masks(b, h)
    keys = [None] + list(range(b))
    best = {key: np.full(n + 1, -1, dtype=np.int64) for key in keys}
    total = 1 << n
    step = 1 << min(chunk_bits, n)
    leaf_pos = np.array([leaf % b for leaf in range(n)])
    for start in range(0, total, step):
        masks = np.arange(start, min(start + step, total), dtype=np.uint32)
        pop = np.bitwise_count(masks).astype(np.int32)
        full = pop.copy()
        skipped = {j: np.zeros_like(pop) for j in range(b)}
        # leaves: a leaf holding a ball is odd
        if h > 0:
            for j in range(b):
                sel = np.uint32(sum(1 << leaf for leaf in range(n) if leaf_pos[leaf] == j))
                skipped[j] += np.bitwise_count(masks & sel).astype(np.int32)
        for level, idx, mask in nodes:
            odd = (np.bitwise_count(masks & np.uint32(mask)) & 1).astype(np.int32)
            full += odd
            if level < h:
                skipped[idx % b] += odd
        for key in keys:
            score = full if key is None else full - skipped[key]
            # which (popcount, score) pairs occur; scores stay below 64
            seen = np.bincount(pop * 64 + score, minlength=(n + 1) * 64).reshape(n + 1, 64) > 0
            top = np.where(seen.any(axis=1), 63 - np.argmax(seen[:, ::-1], axis=1), -1)
            best[key] = np.maximum(best[key], top)
    return best


# ---------------------------------------------------------------------------
# explicit matrices


def prefix_matrix(T: int) -> np.ndarray:
    return np.tril(np.ones((T, T)))


def sqrt_coeff_exact(t: int) -> Fraction:
    return Fraction(comb(2 * t, t), 4**t)


def sqrt_matrix(T: int) -> np.ndarray:
    r = [float(sqrt_coeff_exact(t)) for t in range(T)]
    M = np.zeros((T, T))
    for i in range(T):
        for j in range(i + 1):
            M[i, j] = r[i - j]
    return M


def gram_exact(T: int, i: int, j: int) -> Fraction:
    lag = abs(i - j)
    return sum((sqrt_coeff_exact(l) * sqrt_coeff_exact(l + lag) for l in range(T - max(i, j))), Fraction(0))


def balanced_digit_table(b: int, h: int) -> dict:
    """n -> l1 norm of its digits in base b with digits in [-(b-1)/2, (b-1)/2]
    below the top and a top digit in {0, 1}, found by listing every digit vector."""
    half = (b - 1) // 2
    table = {}
    for low in itertools.product(range(-half, half + 1), repeat=h):
        for top in (0, 1):
            value = sum(d * b**i for i, d in enumerate(low)) + top * b**h
            table[value] = sum(abs(d) for d in low) + top
    return table


def plain_digit_weight(n: int, b: int) -> int:
    total = 0
    while n:
        total += n % b
        n //= b
    return total


def plain_tree_matrix(b: int, h: int) -> np.ndarray:
    """R with one row per node: the indicator of the node's leaf interval."""
    T = b**h
    rows = []
    for level in range(h + 1):
        width = b**level
        for idx in range(b ** (h - level)):
            row = np.zeros(T)
            row[idx * width:(idx + 1) * width] = 1
            rows.append(row)
    return np.array(rows)


def reduced_tree_matrix(b: int, h: int, excluded: int) -> np.ndarray:
    """plain_tree_matrix with the rows of child position ``excluded`` removed."""
    T = b**h
    rows = []
    for level in range(h + 1):
        width = b**level
        for idx in range(b ** (h - level)):
            if level < h and idx % b == excluded:
                continue
            row = np.zeros(T)
            row[idx * width:(idx + 1) * width] = 1
            rows.append(row)
    return np.array(rows)


# ---------------------------------------------------------------------------
# sensitivity sets


def all_interval_sums_within(v, D: int) -> bool:
    for i in range(len(v)):
        acc = 0
        for j in range(i, len(v)):
            acc += v[j]
            if abs(acc) > D:
                return False
    return True


def enumerate_sdk_oracle(T: int, D: int, k: int) -> list[tuple]:
    return [v for v in itertools.product(range(-D, D + 1), repeat=T)
            if sum(map(abs, v)) <= k and all_interval_sums_within(v, D)]


def brute_sens(R: np.ndarray, vectors, p: int) -> float:
    V = np.array(vectors, dtype=float)
    out = V @ R.T
    norms = np.abs(out).sum(axis=1) if p == 1 else np.sqrt((out**2).sum(axis=1))
    return float(norms.max())


# ---------------------------------------------------------------------------
# stream statistics by direct recomputation


def distinct_counts(batches) -> list[int]:
    """batches: list of lists of (op, key) with op in {+1, -1, 0}."""
    net: dict = {}
    out = []
    for batch in batches:
        for op, key in batch:
            if op:
                net[key] = net.get(key, 0) + op
        out.append(sum(1 for c in net.values() if c > 0))
    return out


def graph_snapshots(nodes, batches) -> list[frozenset]:
    edges: set = set()
    out = []
    for batch in batches:
        for op, e in batch:
            if op == 1:
                edges.add(frozenset(e))
            elif op == -1:
                edges.discard(frozenset(e))
        out.append(frozenset(edges))
    return out


def triangle_count(nodes, edges) -> int:
    return sum(1 for a, b, c in itertools.combinations(nodes, 3)
               if frozenset((a, b)) in edges and frozenset((b, c)) in edges and frozenset((a, c)) in edges)


def degree_counts(nodes, edges) -> dict:
    return {v: sum(1 for e in edges if v in e) for v in nodes}
