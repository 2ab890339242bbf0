"""Distinct counts, degree histograms and triangle counts on dynamic streams.

Each statistic is turned into a difference stream (its per-step change),
which is fed to a continual-counting mechanism; prefix sums of the noisy
answers estimate the statistic.  Neighboring streams differ in every
update of one item or one edge, and the contribution parameters below
bound how far the difference streams of two neighbors can drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np

from .errors import DataError
from .factorizations import Factorization
from .mechanisms import PrivacyBudget, run_stream
from .stream_model import SetParams

MODES = ("flippancy", "degree_contribution", "triangle_contribution")


@dataclass(frozen=True)
class Update:
    op: str  # "ins", "del" or "noop"
    key: Hashable = None

    def __post_init__(self):
        if self.op not in ("ins", "del", "noop"):
            raise DataError(f"unknown update op {self.op!r}")
        if (self.op == "noop") != (self.key is None):
            raise DataError("insert/delete need a key, no-ops take none")

    @property
    def sign(self) -> int:
        return {"ins": 1, "del": -1, "noop": 0}[self.op]


NOOP = Update("noop")


def ins(key) -> Update:
    return Update("ins", key)


def delete(key) -> Update:
    return Update("del", key)


@dataclass(frozen=True)
class ItemStream:
    batches: tuple

    def __post_init__(self):
        object.__setattr__(self, "batches", tuple(tuple(b) for b in self.batches))

    @property
    def T(self) -> int:
        return len(self.batches)


@dataclass(frozen=True)
class GraphStream:
    """Undirected edge updates over a fixed node set.

    Edge keys are stored as pairs ordered by the position of the endpoints
    in ``nodes``.
    """

    nodes: tuple
    batches: tuple

    def __post_init__(self):
        nodes = tuple(self.nodes)
        pos = {v: i for i, v in enumerate(nodes)}
        if len(pos) != len(nodes):
            raise DataError("duplicate node names")
        batches = []
        for t, batch in enumerate(self.batches):
            out = []
            for u in batch:
                if u.op != "noop":
                    a, b = u.key
                    if a == b:
                        raise DataError(f"self-loop on {a!r} at t={t}")
                    if a not in pos or b not in pos:
                        raise DataError(f"edge {u.key!r} at t={t} uses an unknown node")
                    u = Update(u.op, (a, b) if pos[a] < pos[b] else (b, a))
                out.append(u)
            batches.append(tuple(out))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "batches", tuple(batches))

    @property
    def T(self) -> int:
        return len(self.batches)


# ---------------------------------------------------------------------------
# difference streams


def diff_stream_countdistinct(s: ItemStream) -> list[int]:
    """Per-step change in the number of items inserted more often than deleted."""
    net: dict = {}
    out = []
    for batch in s.batches:
        before = {u.key: net.get(u.key, 0) > 0 for u in batch if u.op != "noop"}
        for u in batch:
            if u.op != "noop":
                net[u.key] = net.get(u.key, 0) + u.sign
        out.append(sum((net[key] > 0) - was for key, was in before.items()))
    return out


class _Graph:
    """Adjacency sets with set semantics for edge updates."""

    def __init__(self, nodes):
        self.adj = {v: set() for v in nodes}

    def has(self, a, b) -> bool:
        return b in self.adj[a]

    def apply(self, u: Update) -> int:
        """Apply an update; return the change in the triangle count."""
        if u.op == "noop":
            return 0
        a, b = u.key
        present = b in self.adj[a]
        if u.op == "ins" and not present:
            common = len(self.adj[a] & self.adj[b])
            self.adj[a].add(b)
            self.adj[b].add(a)
            return common
        if u.op == "del" and present:
            self.adj[a].discard(b)
            self.adj[b].discard(a)
            return -len(self.adj[a] & self.adj[b])
        return 0

    def degree(self, v) -> int:
        return len(self.adj[v])

    def triangles_on(self, a, b) -> int:
        """Triangles containing the edge (a, b); 0 if the edge is absent."""
        return len(self.adj[a] & self.adj[b]) if b in self.adj[a] else 0


def diff_stream_degree(s: GraphStream) -> dict:
    g = _Graph(s.nodes)
    out = {v: [] for v in s.nodes}
    for batch in s.batches:
        before = {v: g.degree(v) for v in s.nodes}
        for u in batch:
            g.apply(u)
        for v in s.nodes:
            out[v].append(g.degree(v) - before[v])
    return out


def diff_stream_triangles(s: GraphStream) -> list[int]:
    g = _Graph(s.nodes)
    return [sum(g.apply(u) for u in batch) for batch in s.batches]


# ---------------------------------------------------------------------------
# contributions and truncation


@dataclass
class ContributionTracker:
    """Per-key contribution counters for one of the three modes."""

    mode: str
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown contribution mode {self.mode!r}")

    def add(self, key, amount: int = 1):
        if amount:
            self.counters[key] = self.counters.get(key, 0) + amount

    def get(self, key) -> int:
        return self.counters.get(key, 0)

    def maximum(self) -> int:
        return max(self.counters.values(), default=0)


def contributions(s, mode: str) -> ContributionTracker:
    tracker = ContributionTracker(mode)
    if mode == "flippancy":
        if not isinstance(s, ItemStream):
            raise TypeError("flippancy is defined on item streams")
        net: dict = {}
        for batch in s.batches:
            before = {u.key: net.get(u.key, 0) > 0 for u in batch if u.op != "noop"}
            for u in batch:
                if u.op != "noop":
                    net[u.key] = net.get(u.key, 0) + u.sign
            for key, was in before.items():
                tracker.add(key, int((net[key] > 0) != was))
    elif mode == "degree_contribution":
        for batch in _graph(s).batches:
            for u in batch:
                if u.op != "noop":
                    tracker.add(u.key)
    else:
        s = _graph(s)
        g = _Graph(s.nodes)
        current: dict = {}
        for batch in s.batches:
            touched = set()
            for u in batch:
                if u.op != "noop":
                    g.apply(u)
                    touched.update(u.key)
                    current.setdefault(u.key, 0)
            # only pairs with an endpoint touched this step can change
            for (a, b), old in current.items():
                if a in touched or b in touched:
                    new = g.triangles_on(a, b)
                    tracker.add((a, b), abs(new - old))
                    current[(a, b)] = new
    return tracker


def _graph(s) -> GraphStream:
    if not isinstance(s, GraphStream):
        raise TypeError("this mode is defined on graph streams")
    return s


def track_max_contribution(s, mode: str) -> int:
    return contributions(s, mode).maximum()


def max_degree(s: GraphStream) -> int:
    g = _Graph(s.nodes)
    best = 0
    for batch in s.batches:
        for u in batch:
            g.apply(u)
        best = max([best] + [g.degree(v) for v in s.nodes])
    return best


def truncate_with_log(s, mode: str, k: int):
    """Online truncation; returns (stream, log of (t, position, original update)).

    Flippancy: if an item already flipped k times would flip again at the
    end of step t, all of its updates in step t become no-ops (its count is
    left where the step found it).  Degree contribution: once an edge has
    received k updates, every later update of that edge becomes a no-op.
    Replaced updates keep their position so batch shapes are unchanged.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if mode == "triangle_contribution":
        raise ValueError("no truncation is defined for triangle contribution")
    if mode not in MODES:
        raise ValueError(f"unknown contribution mode {mode!r}")
    log = []
    batches = []
    if mode == "flippancy":
        if not isinstance(s, ItemStream):
            raise TypeError("flippancy is defined on item streams")
        net: dict = {}
        flips = ContributionTracker(mode)
        for t, batch in enumerate(s.batches):
            start = {u.key: net.get(u.key, 0) for u in batch if u.op != "noop"}
            after = dict(start)
            for u in batch:
                if u.op != "noop":
                    after[u.key] += u.sign
            blocked = set()
            for key, count in start.items():
                if (after[key] > 0) != (count > 0):
                    if flips.get(key) >= k:
                        blocked.add(key)
                        after[key] = count
                    else:
                        flips.add(key)
            net.update(after)
            out = []
            for i, u in enumerate(batch):
                if u.op != "noop" and u.key in blocked:
                    log.append((t, i, u))
                    u = NOOP
                out.append(u)
            batches.append(tuple(out))
        return ItemStream(tuple(batches)), log
    s = _graph(s)
    counts = ContributionTracker(mode)
    for t, batch in enumerate(s.batches):
        out = []
        for i, u in enumerate(batch):
            if u.op != "noop":
                if counts.get(u.key) >= k:
                    log.append((t, i, u))
                    u = NOOP
                else:
                    counts.add(u.key)
            out.append(u)
        batches.append(tuple(out))
    return GraphStream(s.nodes, tuple(batches)), log


def truncate(s, mode: str, k: int):
    return truncate_with_log(s, mode, k)[0]


# ---------------------------------------------------------------------------
# end-to-end estimation

PROBLEMS = ("countdistinct", "degree", "triangles")


@dataclass(frozen=True)
class EstimatorConfig:
    factorization: Factorization
    budget: PrivacyBudget
    k: int
    D: Optional[int] = None
    seed: int = 0
    noise_scale: Optional[float] = None  # test hook; 0 gives exact answers


@dataclass
class EstimatorRun:
    problem: str
    config: EstimatorConfig
    outputs: object  # list of floats, or {node: list of floats} for degrees
    truth: object
    truncation_log: list
    sensitivity_used: float
    sensitivity_exact: bool
    privacy_note: str


def _prefix(values: Sequence[int]) -> list[int]:
    return [int(x) for x in np.cumsum(values)] if len(values) else []


def estimate(problem: str, s, config: EstimatorConfig) -> EstimatorRun:
    f = config.factorization
    if f.T != s.T:
        raise ValueError(f"factorization has T={f.T}, stream has T={s.T}")
    if problem == "countdistinct":
        if not isinstance(s, ItemStream):
            raise DataError("countdistinct needs an item stream")
        kept, log = truncate_with_log(s, "flippancy", config.k)
        diff = diff_stream_countdistinct(kept)
        run = run_stream(f, config.budget, SetParams(1, config.k, s.T), diff, config.seed, config.noise_scale)
        note = f"{config.budget.describe()} under item-level neighbors, after flippancy truncation at k={config.k}"
        return EstimatorRun(problem, config, list(run.outputs), _prefix(diff_stream_countdistinct(s)), log,
                            run.sensitivity_used, run.sensitivity_exact, note)
    if problem == "degree":
        s = _graph(s)
        kept, log = truncate_with_log(s, "degree_contribution", config.k)
        diffs = diff_stream_degree(kept)
        # one edge touches two counters, each run at half the declared budget
        per_node = config.budget.scaled(0.5)
        outputs, run = {}, None
        for i, v in enumerate(s.nodes):
            seed = np.random.SeedSequence([config.seed, i])
            run = run_stream(f, per_node, SetParams(1, config.k, s.T), diffs[v], seed, config.noise_scale)
            outputs[v] = list(run.outputs)
        truth = {v: _prefix(d) for v, d in diff_stream_degree(s).items()}
        note = f"{config.budget.describe()} in total, {per_node.describe()} per node counter, edge-level neighbors"
        return EstimatorRun(problem, config, outputs, truth, log, run.sensitivity_used, run.sensitivity_exact, note)
    if problem == "triangles":
        s = _graph(s)
        if config.D is None:
            raise ValueError("triangle counting needs the degree bound D")
        deg = max_degree(s)
        if deg > config.D:
            raise DataError(f"stream reaches degree {deg} > D={config.D}")
        contrib = track_max_contribution(s, "triangle_contribution")
        if contrib > config.k:
            raise DataError(f"stream has triangle contribution {contrib} > k={config.k}")
        diff = diff_stream_triangles(s)
        run = run_stream(f, config.budget, SetParams(config.D, config.k, s.T), diff, config.seed,
                         config.noise_scale)
        note = (f"{config.budget.describe()} only for neighbors within max degree {config.D} "
                f"and triangle contribution {config.k}")
        return EstimatorRun(problem, config, list(run.outputs), _prefix(diff), [], run.sensitivity_used,
                            run.sensitivity_exact, note)
    raise ValueError(f"unknown problem {problem!r}")
