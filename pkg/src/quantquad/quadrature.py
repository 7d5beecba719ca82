"""Quadrature algorithms with cardinality and cost accounting.

Four estimators of S(f) = E f(X):

* ``voronoi_quadrature``: the deterministic weighted sum over a codebook,
  sum_i mu(V_i) f(x_i).
* ``classical_mc``: the plain Monte Carlo mean over independent draws.
* ``vr_mc``: quantization-based variance reduction; the Voronoi sum plus
  a Monte Carlo correction of the interpolation residual
  f - f(nearest codebook point).
* ``euler_mc`` / ``gaussian_subspace_mc``: the Monte Carlo mean over
  Euler diffusion paths, resp. truncated Gaussian expansions on a
  subspace, with cost proportional to (subspace dimension) x (draws).

Cost-balanced schedules split a total budget N into (repetitions n,
subspace dimension k) with k*n <= N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .measures import (
    BrownianKL,
    DiffusionSpec,
    MeasureSpec,
    SeedSpec,
    euler_values,
    oracle_dim,
    rng_calls_per_sample,
    sample_batch,
)
from .paths import Functional, Grid, Subspace
from .quantize import Codebook, min_dist_batch


@dataclass(frozen=True)
class CostLedger:
    """Recorded (never inferred) cost of one algorithm run.

    ``oracle_cost`` is exactly subspace_dim x oracle_calls.  The
    arithmetic proxy counts one unit per recorded loop-level operation
    (per sample, or per Euler step per path); it stands in for a full
    operation count, which the oracle term dominates anyway.
    """

    oracle_calls: int
    subspace_dim: int
    rng_calls: int
    arithmetic_proxy: int

    @property
    def oracle_cost(self) -> int:
        return self.subspace_dim * self.oracle_calls

    def as_row(self) -> dict:
        return {
            "oracle_calls": self.oracle_calls,
            "subspace_dim": self.subspace_dim,
            "oracle_cost": self.oracle_cost,
            "rng_calls": self.rng_calls,
            "arithmetic_proxy": self.arithmetic_proxy,
        }


@dataclass(frozen=True)
class QuadratureResult:
    estimate: float
    stderr: float  # 0 for deterministic rules
    cardinality: int  # functional evaluations
    subspace_dim: int
    cost: CostLedger


@dataclass(frozen=True)
class SmallBallProfile:
    """Exponents of the small-ball behaviour -ln mu(ball(eps)) ~ eps^-alpha
    (ln 1/eps)^beta; alpha=2, beta=0 for Brownian motion in sup norm."""

    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError("alpha must be positive")


def cost_of(result: QuadratureResult) -> CostLedger:
    """Accessor producing the cost report of a result."""
    return result.cost


def _check_oracle_dim(f: Functional, k: int):
    if f.oracle_dim is not None and k > f.oracle_dim:
        raise ConfigurationError(
            f"functional {f.name or '<anonymous>'} only accepts points from a "
            f"subspace of dimension <= {f.oracle_dim}, got {k}"
        )


# ---------------------------------------------------------------------------
# Deterministic Voronoi quadrature


def voronoi_quadrature(codebook: Codebook, f: Functional) -> QuadratureResult:
    """sum_i weight_i f(x_i) over a weighted codebook; deterministic.

    The reported stderr is 0; the estimation error of the weights is
    reported separately by whoever estimated them.
    """
    if codebook.weights is None:
        raise ConfigurationError("voronoi_quadrature needs codebook weights")
    k = codebook.oracle_dim
    if k is None:
        k = codebook.points.shape[1] if codebook.grid is None else (
            codebook.grid.size * codebook.points.shape[2]
        )
    _check_oracle_dim(f, k)
    values = f(codebook.points)
    estimate = float(values @ codebook.weights)
    ledger = CostLedger(
        oracle_calls=codebook.n,
        subspace_dim=k,
        rng_calls=0,
        arithmetic_proxy=codebook.n,
    )
    return QuadratureResult(estimate, 0.0, codebook.n, k, ledger)


# ---------------------------------------------------------------------------
# Classical Monte Carlo


def _mean_and_stderr(values: np.ndarray) -> Tuple[float, float]:
    n = values.size
    mean = float(values.mean())
    if n < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(n))


def classical_mc(
    measure: MeasureSpec, f: Functional, n: int, seed: SeedSpec
) -> QuadratureResult:
    """Mean of f over n independent draws with CLT standard error."""
    if n < 2:
        raise ConfigurationError("classical_mc needs n >= 2")
    k = oracle_dim(measure)
    _check_oracle_dim(f, k)
    values = f(sample_batch(measure, seed, n))
    estimate, stderr = _mean_and_stderr(values)
    ledger = CostLedger(
        oracle_calls=n,
        subspace_dim=k,
        rng_calls=n * rng_calls_per_sample(measure),
        arithmetic_proxy=n,
    )
    return QuadratureResult(estimate, stderr, n, k, ledger)


def classical_mc_replicated(
    measure: MeasureSpec, f: Functional, n: int, replications: int, seed: SeedSpec
) -> np.ndarray:
    """Estimates of ``replications`` independent classical_mc runs; (R,)."""
    batch = sample_batch(measure, seed, n * replications)
    vals = f(batch).reshape(replications, n)
    return vals.mean(axis=1)


# ---------------------------------------------------------------------------
# Quantization-based variance reduction


def vr_mc(
    codebook: Codebook,
    measure: MeasureSpec,
    f: Functional,
    n: int,
    seed: SeedSpec,
) -> QuadratureResult:
    """Voronoi quadrature plus a Monte Carlo correction of the residual.

    Returns S(J(f)) + mean_j (f - J(f))(X_j) where J(f)(x) is f at the
    nearest codebook point.  The codebook evaluations of f are genuine
    oracle calls and are counted once in the cardinality; the stderr
    comes from the residual sample alone (the weights are taken as
    exact, their estimation error is reported by the codebook).
    """
    if codebook.weights is None:
        raise ConfigurationError("vr_mc needs codebook weights")
    if n < 2:
        raise ConfigurationError("vr_mc needs n >= 2")
    k = oracle_dim(measure)
    _check_oracle_dim(f, k)
    f_at_points = f(codebook.points)
    voronoi_part = float(f_at_points @ codebook.weights)
    batch = sample_batch(measure, seed, n)
    _, idx = min_dist_batch(batch, codebook)
    residuals = f(batch) - f_at_points[idx]
    correction, stderr = _mean_and_stderr(residuals)
    ledger = CostLedger(
        oracle_calls=n + codebook.n,
        subspace_dim=k,
        rng_calls=n * rng_calls_per_sample(measure),
        arithmetic_proxy=n + codebook.n,
    )
    return QuadratureResult(
        voronoi_part + correction, stderr, n + codebook.n, k, ledger
    )


def vr_mc_replicated(
    codebook: Codebook,
    measure: MeasureSpec,
    f: Functional,
    n: int,
    replications: int,
    seed: SeedSpec,
) -> np.ndarray:
    """Estimates of ``replications`` independent vr_mc runs; (R,)."""
    if codebook.weights is None:
        raise ConfigurationError("vr_mc needs codebook weights")
    f_at_points = f(codebook.points)
    voronoi_part = float(f_at_points @ codebook.weights)
    batch = sample_batch(measure, seed, n * replications)
    _, idx = min_dist_batch(batch, codebook)
    residuals = (f(batch) - f_at_points[idx]).reshape(replications, n)
    return voronoi_part + residuals.mean(axis=1)


# ---------------------------------------------------------------------------
# Euler Monte Carlo and its budget schedule


def euler_mc(
    spec: DiffusionSpec,
    f: Functional,
    k: int,
    n: int,
    seed: SeedSpec,
    grid: Optional[Grid] = None,
) -> QuadratureResult:
    """Mean of f over n Euler paths with k breakpoints."""
    if k < 2:
        raise ConfigurationError("euler_mc needs k >= 2")
    if n < 2:
        raise ConfigurationError("euler_mc needs n >= 2")
    _check_oracle_dim(f, k)
    grid = grid or Grid.uniform()
    values = f(euler_values(spec, k, seed.rng(), n, grid))
    estimate, stderr = _mean_and_stderr(values)
    ledger = CostLedger(
        oracle_calls=n,
        subspace_dim=k,
        rng_calls=n * (k - 1) * spec.m,
        arithmetic_proxy=n * k,
    )
    return QuadratureResult(estimate, stderr, n, k, ledger)


def euler_mc_replicated(
    spec: DiffusionSpec,
    f: Functional,
    k: int,
    n: int,
    replications: int,
    seed: SeedSpec,
    grid: Optional[Grid] = None,
) -> np.ndarray:
    """Estimates of ``replications`` independent euler_mc runs; (R,)."""
    grid = grid or Grid.uniform()
    out = np.empty(replications)
    # One joint Euler batch per replication block keeps memory bounded.
    for j in range(replications):
        vals = f(euler_values(spec, k, seed.child(j).rng(), n, grid))
        out[j] = vals.mean()
    return out


def _schedule_minimum(formula) -> int:
    for candidate in range(3, 10_000):
        try:
            n, k = formula(candidate)
        except (ValueError, OverflowError):
            continue
        if n >= 2 and k >= 2:
            return candidate
    raise ConfigurationError("no feasible budget below 10000")


def euler_mc_schedule(N: int) -> Tuple[int, int]:
    """Cost-balanced (n, k) for the Euler Monte Carlo budget N.

    n = floor(sqrt(N / ln N)) repetitions and k = floor(sqrt(N ln N))
    breakpoints, so that k*n <= N.  Requires ln N > 1 and a budget large
    enough that both floors reach 2.
    """

    def formula(budget):
        log = math.log(budget)
        if log <= 1.0:
            raise ValueError
        root = math.sqrt(budget)
        return int(root / math.sqrt(log)), int(root * math.sqrt(log))

    try:
        n, k = formula(N)
    except ValueError:
        n = k = 0
    if n < 2 or k < 2:
        minimum = _schedule_minimum(formula)
        raise ConfigurationError(
            f"budget N={N} too small for the Euler schedule; minimum feasible "
            f"N is {minimum}"
        )
    assert k * n <= N
    return n, k


def subspace_mc_schedule(N: int, profile: SmallBallProfile) -> Tuple[int, int]:
    """Cost-balanced (n, k) for Gaussian-subspace Monte Carlo with budget N.

    n = floor(N^(2/(2+a)) (ln N)^(-2(a+b)/(2+a))) and
    k = floor(N^(a/(2+a)) (ln N)^(+2(a+b)/(2+a))) for a small-ball profile
    (a, b); their product is at most N.
    """
    a, b = profile.alpha, profile.beta

    def formula(budget):
        log = math.log(budget)
        if log <= 1.0:
            raise ValueError
        lf = log ** (2.0 * (a + b) / (2.0 + a))
        n = int(budget ** (2.0 / (2.0 + a)) / lf)
        k = int(budget ** (a / (2.0 + a)) * lf)
        return n, k

    try:
        n, k = formula(N)
    except ValueError:
        n = k = 0
    if n < 2 or k < 2:
        minimum = _schedule_minimum(formula)
        raise ConfigurationError(
            f"budget N={N} too small for the subspace schedule; minimum "
            f"feasible N is {minimum}"
        )
    assert k * n <= N
    return n, k


# ---------------------------------------------------------------------------
# Gaussian-subspace Monte Carlo


def _subspace_measure(sub: Subspace) -> BrownianKL:
    if sub.kind != "karhunen-loeve":
        raise ConfigurationError(
            "gaussian_subspace_mc needs a karhunen-loeve subspace"
        )
    return BrownianKL(sub.dim, sub.grid)


def gaussian_subspace_mc(
    sub: Subspace, f: Functional, n: int, seed: SeedSpec
) -> QuadratureResult:
    """Classical Monte Carlo over the truncated expansion living on ``sub``.

    Draws are sums of the k leading Brownian eigenfunctions with
    independent N(0, lambda_l) coefficients; every sample lies in the
    subspace, so a functional vanishing there is estimated as exactly 0.
    """
    if n < 2:
        raise ConfigurationError("gaussian_subspace_mc needs n >= 2")
    k = sub.dim
    _check_oracle_dim(f, k)
    measure = _subspace_measure(sub)
    values = f(sample_batch(measure, seed, n))
    estimate, stderr = _mean_and_stderr(values)
    ledger = CostLedger(
        oracle_calls=n,
        subspace_dim=k,
        rng_calls=n * k,
        arithmetic_proxy=n,
    )
    return QuadratureResult(estimate, stderr, n, k, ledger)


def gaussian_subspace_mc_replicated(
    sub: Subspace, f: Functional, n: int, replications: int, seed: SeedSpec
) -> np.ndarray:
    """Estimates of ``replications`` independent gaussian_subspace_mc runs."""
    measure = _subspace_measure(sub)
    batch = sample_batch(measure, seed, n * replications)
    vals = f(batch).reshape(replications, n)
    return vals.mean(axis=1)
