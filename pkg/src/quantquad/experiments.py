"""Empirical rate verification: error ladders, width estimates, log fits.

Asymptotic rate claims are tested as slope brackets at finite sizes: the
harness runs an algorithm over a ladder of sizes, measures the RMSE of
its estimates against a reference value over many replications, fits a
line in transformed coordinates (log-log, or log against log-log for
doubly logarithmic laws), and compares the slope to a configured
bracket.  It never claims to verify a limit.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError
from .measures import (
    DiffusionSpec,
    MeasureSpec,
    SeedSpec,
    euler_values,
    is_path_measure,
    reference_value,
    sample_batch,
)
from .paths import (
    Functional,
    Grid,
    NormKind,
    Subspace,
    batch_path_norm,
    batch_project,
    make_kl_subspace,
)
from .quadrature import (
    SmallBallProfile,
    classical_mc_replicated,
    euler_mc_replicated,
    euler_mc_schedule,
    gaussian_subspace_mc_replicated,
    subspace_mc_schedule,
    vr_mc_replicated,
)
from .quantize import Codebook


@dataclass(frozen=True)
class RatePoint:
    size: float
    error: float
    stderr: float = 0.0

    def __post_init__(self):
        if self.size <= 0:
            raise ConfigurationError("rate point size must be positive")
        if self.error < 0 or self.stderr < 0:
            raise ConfigurationError("rate point error/stderr must be >= 0")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    transform: str
    point_count: int


_TRANSFORMS = ("loglog", "loglog-in-log")


def rate_fit(points: Sequence[RatePoint], transform: str = "loglog") -> RateFit:
    """Least squares on transformed coordinates.

    ``loglog`` fits ln(error) against ln(size); ``loglog-in-log`` fits
    ln(error) against ln(ln(size)), the right frame for errors decaying
    like powers of ln(size).  Zero errors are dropped with a warning.
    """
    if transform not in _TRANSFORMS:
        raise ConfigurationError(f"unknown transform {transform!r}")
    usable = [p for p in points if p.error > 0]
    if len(usable) < len(points):
        warnings.warn(
            f"rate_fit dropped {len(points) - len(usable)} zero-error point(s)",
            stacklevel=2,
        )
    if len(usable) < 4:
        raise ConfigurationError("rate_fit needs at least 4 positive points")
    sizes = np.array([p.size for p in usable])
    if transform == "loglog-in-log" and np.any(sizes <= 1.0):
        raise ConfigurationError("loglog-in-log needs sizes > 1")
    x = np.log(sizes) if transform == "loglog" else np.log(np.log(sizes))
    y = np.log(np.array([p.error for p in usable]))
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res < 1e-24 else 1.0 - ss_res / max(ss_tot, 1e-300)
    return RateFit(float(slope), float(intercept), r2, transform, len(usable))


# ---------------------------------------------------------------------------
# Kolmogorov-width estimates


def kl_tail_width(k: int) -> float:
    """Exact L2 width of Brownian motion under k-term expansion truncation.

    Computes (sum_{l > k} lambda_l)^(1/2) with lambda_l = ((l-1/2) pi)^-2
    by explicit summation plus the analytic remainder of the series.
    """
    if k < 0:
        raise ConfigurationError("k must be >= 0")
    terms = 50_000
    ell = np.arange(k + 1, k + terms + 1, dtype=float)
    total = float(np.sum(((ell - 0.5) * math.pi) ** -2.0))
    big = float(k + terms)
    # sum_{l > K} (l - 1/2)^-2 = 1/K - 1/(12 K^3) + O(K^-5)
    total += (1.0 / big - 1.0 / (12.0 * big**3)) / math.pi**2
    return math.sqrt(total)


def width_estimate(
    measure: MeasureSpec,
    sub: Subspace,
    p: float,
    M: int,
    seed: SeedSpec,
    norm_kind: NormKind = NormKind.L2,
) -> RatePoint:
    """Monte Carlo estimate of (E dist^p(X, sub))^(1/p).

    The distance is the norm of the L2-projection residual, so for L2
    this is the exact subspace distance and for sup/L1 an upper bound.
    Since the subspace is given rather than optimized, the result is an
    upper estimate of the k-th average width.
    """
    if M < 1000:
        raise ConfigurationError("width_estimate needs M >= 1000")
    if p <= 0:
        raise ConfigurationError("order p must be positive")
    if not is_path_measure(measure):
        raise ConfigurationError("width_estimate expects a path measure")
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_index = 0
    chunk = 8192
    while done < M:
        b = min(chunk, M - done)
        batch = sample_batch(measure, seed.child(chunk_index), b)
        _, resid = batch_project(batch[:, :, 0], sub)
        norms = batch_path_norm(resid[:, :, None], norm_kind, sub.grid)
        y = norms**p
        total += float(y.sum())
        total_sq += float((y * y).sum())
        done += b
        chunk_index += 1
    mean = total / M
    var = max(total_sq / M - mean * mean, 0.0) * M / (M - 1)
    se_mean = math.sqrt(var / M)
    value = mean ** (1.0 / p)
    stderr = se_mean * value / (p * mean) if mean > 0 else se_mean
    return RatePoint(size=float(sub.dim), error=value, stderr=stderr)


# ---------------------------------------------------------------------------
# Rate experiments


@dataclass
class RateExperimentConfig:
    """One rate experiment: algorithm, size ladder, reference, brackets.

    ``ladder`` holds sample counts n for "mc"/"vrmc" and cost budgets N
    for "euler"/"gauss-sub" (which derive (n, k) from their schedules).
    ``reference`` is ("analytic", value), ("mc", budget), or
    ("euler", k_ref, n_ref) for diffusion targets.
    """

    name: str
    algorithm: str  # mc | vrmc | euler | gauss-sub
    ladder: Tuple[int, ...]
    functional: Functional
    measure: Optional[MeasureSpec] = None
    replications: int = 200
    reference: Tuple = ("mc", 1_000_000)
    slope_bracket: Optional[Tuple[float, float]] = None
    transform: str = "loglog"
    seed: SeedSpec = SeedSpec(0)
    codebooks: Optional[Dict[int, Codebook]] = None  # vrmc: one per ladder n
    diffusion: Optional[DiffusionSpec] = None  # euler
    profile: Optional[SmallBallProfile] = None  # gauss-sub
    grid: Optional[Grid] = None

    def __post_init__(self):
        if self.algorithm not in ("mc", "vrmc", "euler", "gauss-sub"):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if len(self.ladder) < 1:
            raise ConfigurationError("ladder must not be empty")
        if self.replications < 2:
            raise ConfigurationError("need at least 2 replications")
        if self.algorithm in ("mc", "vrmc") and self.measure is None:
            raise ConfigurationError(f"{self.algorithm} needs a measure")
        if self.algorithm == "vrmc" and not self.codebooks:
            raise ConfigurationError("vrmc needs one codebook per ladder size")
        if self.algorithm == "euler" and self.diffusion is None:
            raise ConfigurationError("euler needs a diffusion spec")
        if self.algorithm == "gauss-sub" and self.profile is None:
            raise ConfigurationError("gauss-sub needs a small-ball profile")


@dataclass(frozen=True)
class RateReport:
    name: str
    algorithm: str
    points: Tuple[RatePoint, ...]
    fit: RateFit
    slope_bracket: Optional[Tuple[float, float]]
    passed: bool
    reference: Tuple[float, float]  # (value, stderr)
    seed_tag: str
    schedule: Tuple[Tuple[int, int, int], ...]  # (size, n, k) per ladder point

    def rows(self) -> List[dict]:
        return [
            {"size": p.size, "rmse": p.error, "stderr": p.stderr}
            for p in self.points
        ]


def _resolve_reference(config: RateExperimentConfig) -> Tuple[float, float]:
    kind = config.reference[0]
    if kind == "analytic":
        return float(config.reference[1]), 0.0
    if kind == "mc":
        est = reference_value(
            config.functional,
            config.measure,
            int(config.reference[1]),
            config.seed.child(1_000_000),
        )
        return est.value, est.stderr
    if kind == "euler":
        _, k_ref, n_ref = config.reference
        grid = config.grid or Grid.uniform()
        rng = config.seed.child(1_000_001).rng()
        vals = []
        done = 0
        while done < n_ref:
            b = min(8192, n_ref - done)
            vals.append(config.functional(
                euler_values(config.diffusion, k_ref, rng, b, grid)
            ))
            done += b
        v = np.concatenate(vals)
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_ref))
    raise ConfigurationError(f"unknown reference kind {kind!r}")


def _run_one_size(config: RateExperimentConfig, size: int, stream: SeedSpec):
    algo = config.algorithm
    grid = config.grid or Grid.uniform()
    if algo == "mc":
        est = classical_mc_replicated(
            config.measure, config.functional, size, config.replications, stream
        )
        return est, size, 0
    if algo == "vrmc":
        cb = config.codebooks.get(size)
        if cb is None:
            raise ConfigurationError(f"no codebook for ladder size {size}")
        est = vr_mc_replicated(
            cb, config.measure, config.functional, size, config.replications, stream
        )
        return est, size, 0
    if algo == "euler":
        n, k = euler_mc_schedule(size)
        est = euler_mc_replicated(
            config.diffusion, config.functional, k, n, config.replications,
            stream, grid,
        )
        return est, n, k
    n, k = subspace_mc_schedule(size, config.profile)
    sub = make_kl_subspace(k, grid)
    est = gaussian_subspace_mc_replicated(
        sub, config.functional, n, config.replications, stream
    )
    return est, n, k


def run_rate_experiment(config: RateExperimentConfig) -> RateReport:
    """RMSE ladder, fit, and bracket verdict for one configured experiment.

    Aborts when the reference oracle is too noisy for the measured curve
    (stderr above 10% of the smallest RMSE).
    """
    ref_value, ref_stderr = _resolve_reference(config)
    points = []
    schedule = []
    for i, size in enumerate(config.ladder):
        estimates, n_used, k_used = _run_one_size(config, size, config.seed.child(i))
        errs = estimates - ref_value
        sq = errs * errs
        mse = float(sq.mean())
        rmse = math.sqrt(mse)
        se_mse = float(sq.std(ddof=1) / math.sqrt(sq.size))
        se_rmse = se_mse / (2.0 * rmse) if rmse > 0 else 0.0
        points.append(RatePoint(float(size), rmse, se_rmse))
        schedule.append((int(size), int(n_used), int(k_used)))
    smallest = min(p.error for p in points)
    if smallest > 0 and ref_stderr > 0.1 * smallest:
        raise ConfigurationError(
            f"reference too noisy: stderr {ref_stderr:.3g} exceeds 10% of the "
            f"smallest RMSE {smallest:.3g}; raise the reference budget"
        )
    fit = rate_fit(points, config.transform)
    passed = True
    if config.slope_bracket is not None:
        lo, hi = config.slope_bracket
        passed = lo <= fit.slope <= hi
    return RateReport(
        name=config.name,
        algorithm=config.algorithm,
        points=tuple(points),
        fit=fit,
        slope_bracket=config.slope_bracket,
        passed=passed,
        reference=(ref_value, ref_stderr),
        seed_tag=config.seed.tag(),
        schedule=tuple(schedule),
    )
