"""Noise calibration and the streaming factorization mechanism.

At step t the mechanism outputs (A x)[t] + (L z)[t], where z holds
Gaussian noise of standard deviation sens_2 / sqrt(2 rho) under rho-zCDP,
or Laplace noise of scale sens_1 / eps under eps-DP.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import log, sqrt
from typing import Iterable, Iterator, Optional

import numpy as np

from .factorizations import BaryTree, Factorization, LowerToeplitz, NaiveFactorization
from .errors import BudgetError, FeasibilityError
from .sensitivity import SensQuery, naive_sens, toeplitz_sens1_bound, tree_sens
from .stream_model import SetParams


@dataclass(frozen=True)
class PrivacyBudget:
    kind: str  # "zcdp" or "pure"
    value: float  # rho or eps
    delta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("zcdp", "pure"):
            raise BudgetError(f"unknown budget kind {self.kind!r}")
        if not self.value > 0:
            raise BudgetError("privacy parameter must be positive")
        if self.delta is not None and not 0 < self.delta < 1:
            raise BudgetError("delta must lie in (0, 1)")

    @classmethod
    def zcdp(cls, rho: float, delta: Optional[float] = None) -> "PrivacyBudget":
        return cls("zcdp", rho, delta)

    @classmethod
    def pure(cls, eps: float) -> "PrivacyBudget":
        return cls("pure", eps)

    def scaled(self, factor: float) -> "PrivacyBudget":
        return PrivacyBudget(self.kind, self.value * factor, self.delta)

    def approx_dp_epsilon(self) -> Optional[float]:
        """(eps, delta)-DP implied by rho-zCDP; reported, never used to calibrate."""
        if self.kind != "zcdp" or self.delta is None:
            return None
        return self.value + 2 * sqrt(self.value * log(1 / self.delta))

    def describe(self) -> str:
        if self.kind == "pure":
            return f"eps={self.value:g}"
        if self.delta is None:
            return f"rho={self.value:g}"
        return f"rho={self.value:g} (implies eps={self.approx_dp_epsilon():.6g} at delta={self.delta:g})"


@dataclass(frozen=True)
class NoiseDescriptor:
    distribution: str  # "gaussian" or "laplace"
    scale: float  # standard deviation for Gaussian, b parameter for Laplace

    @property
    def std(self) -> float:
        return self.scale * (sqrt(2) if self.distribution == "laplace" else 1.0)


def calibrate(budget: PrivacyBudget, sens1: Optional[float] = None,
              sens2: Optional[float] = None) -> NoiseDescriptor:
    if budget.kind == "zcdp":
        if sens2 is None or not sens2 > 0:
            raise ValueError("zCDP calibration needs a positive l2 sensitivity")
        return NoiseDescriptor("gaussian", sens2 / sqrt(2 * budget.value))
    if sens1 is None or not sens1 > 0:
        raise ValueError("pure DP calibration needs a positive l1 sensitivity")
    return NoiseDescriptor("laplace", sens1 / budget.value)


@dataclass(frozen=True)
class ResolvedSensitivity:
    value: float
    exact: bool
    source: str


def resolve_sensitivity(f: Factorization, s: SetParams, p: int) -> ResolvedSensitivity:
    """Exact sensitivity where known, else a certified upper bound."""
    if isinstance(f, NaiveFactorization):
        return ResolvedSensitivity(naive_sens(f, s, p), True, "naive closed form")
    if isinstance(f, BaryTree):
        try:
            res = tree_sens(SensQuery(f, p, s, "exact_dp"))
        except FeasibilityError:
            res = tree_sens(SensQuery(f, p, s, "closed_bound"))
            return ResolvedSensitivity(res.upper, False, "tree closed-form upper bound")
        if res.exact:
            return ResolvedSensitivity(res.value, True, "tree parity DP")
        return ResolvedSensitivity(res.upper, False, "tree parity DP, max over splits")
    if isinstance(f, LowerToeplitz):
        if p == 1:
            return ResolvedSensitivity(toeplitz_sens1_bound(f, s), False, "column l1 bound")
        exact = s.D == 1 and s.k == 1
        value = float(sqrt(s.D * s.k) * f.r_one_to_two())
        return ResolvedSensitivity(value, exact, "column norm" if exact else "sqrt(Dk) column norm bound")
    raise ValueError(f"cannot resolve sensitivity for {f!r}")


def _p_for(budget: PrivacyBudget) -> int:
    return 2 if budget.kind == "zcdp" else 1


@dataclass(frozen=True)
class MechanismRun:
    factorization: str
    budget: PrivacyBudget
    noise: NoiseDescriptor
    sensitivity_used: float
    sensitivity_exact: bool
    sensitivity_source: str
    seed: object
    outputs: tuple

    @property
    def noise_scale(self) -> float:
        return self.noise.scale


class StreamingMechanism:
    """Consumes one stream value at a time and answers immediately."""

    def __init__(self, f: Factorization, budget: PrivacyBudget, s: SetParams, seed,
                 noise_scale: Optional[float] = None):
        if s.T != f.T:
            raise ValueError("set length differs from the factorization's T")
        self.f, self.budget, self.set, self.seed = f, budget, s, seed
        self.sens = resolve_sensitivity(f, s, _p_for(budget))
        self.noise = calibrate(budget, sens1=self.sens.value, sens2=self.sens.value)
        if noise_scale is not None:
            # test hook: overrides the calibrated scale, e.g. 0 for exact output
            self.noise = NoiseDescriptor(self.noise.distribution, noise_scale)
        self._noise = f.noise_stream(self.noise.scale, seed, self.noise.distribution)
        self._prefix = 0
        self.t = 0

    def step(self, x_t: int) -> float:
        if self.t >= self.f.T:
            raise IndexError("stream is longer than T")
        self._prefix += x_t
        self.t += 1
        return self._prefix + next(self._noise)


def stream_outputs(f: Factorization, budget: PrivacyBudget, s: SetParams, stream: Iterable[int], seed,
                   noise_scale: Optional[float] = None) -> Iterator[float]:
    """Generator form: a_t is yielded before x[t+1] is pulled from the input."""
    mech = StreamingMechanism(f, budget, s, seed, noise_scale)
    for x_t in stream:
        yield mech.step(x_t)


def run_stream(f: Factorization, budget: PrivacyBudget, s: SetParams, stream: Iterable[int], seed,
               noise_scale: Optional[float] = None) -> MechanismRun:
    mech = StreamingMechanism(f, budget, s, seed, noise_scale)
    outputs = tuple(mech.step(x_t) for x_t in stream)
    if len(outputs) != f.T:
        raise ValueError(f"stream has length {len(outputs)}, expected {f.T}")
    return MechanismRun(f.label, budget, mech.noise, mech.sens.value, mech.sens.exact,
                        mech.sens.source, seed, outputs)


@dataclass(frozen=True)
class ErrorEstimate:
    max_se: float
    mean_se: float
    sens_exact: bool


def analytic_error(f: Factorization, budget: PrivacyBudget, s: SetParams) -> ErrorEstimate:
    """MaxSE = ||L||_{2->inf} * std of z and MeanSE = ||L||_F / sqrt(T) * std of z."""
    sens = resolve_sensitivity(f, s, _p_for(budget))
    std = calibrate(budget, sens1=sens.value, sens2=sens.value).std
    n = f.norms()
    return ErrorEstimate(n.l_two_to_inf * std, n.l_frobenius_over_sqrtT * std, sens.exact)


def empirical_error(f: Factorization, budget: PrivacyBudget, s: SetParams, trials: int, seed,
                    method: str = "batch", noise_scale: Optional[float] = None,
                    chunk: int = 10_000, workers: int = 1) -> ErrorEstimate:
    """Monte-Carlo MaxSE and MeanSE of the mechanism on the all-zero stream.

    ``batch`` draws L z for many trials at once (same law as the streaming
    path, far fewer Python steps); ``stream`` literally runs the mechanism
    once per trial.  Per-step variance is the mean of squared outputs,
    since the true answer is 0 and the mechanism is unbiased.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    sens = resolve_sensitivity(f, s, _p_for(budget))
    noise = calibrate(budget, sens1=sens.value, sens2=sens.value)
    if noise_scale is not None:
        noise = NoiseDescriptor(noise.distribution, noise_scale)
    sq = np.zeros(f.T)
    if method == "batch":
        # fixed chunking and per-chunk seeds make the result independent of workers
        seeds = np.random.SeedSequence(seed).spawn(-(-trials // chunk))
        sizes = [min(chunk, trials - i * chunk) for i in range(len(seeds))]

        def one(job):
            ss, n = job
            out = f.sample_noise(n, noise.scale, np.random.default_rng(ss), noise.distribution)
            return (out**2).sum(axis=0)

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for part in pool.map(one, zip(seeds, sizes)):
                sq += part
    elif method == "stream":
        zero = [0] * f.T
        for ss in np.random.SeedSequence(seed).spawn(trials):
            out = np.array(run_stream(f, budget, s, zero, ss, noise.scale).outputs)
            sq += out**2
    else:
        raise ValueError(f"unknown method {method!r}")
    var = sq / trials
    return ErrorEstimate(float(np.sqrt(var.max())), float(np.sqrt(var.mean())), sens.exact)
