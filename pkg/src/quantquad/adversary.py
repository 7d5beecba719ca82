"""Executable lower-bound machinery: fooling functionals and certificates.

The constructions here turn worst-case arguments into runnable checks:

* ``fooling_family``: for a codebook x_1..x_m, the 1-Lipschitz functionals
  f_i(x) = 1/2 max(0, min_{j != i} ||x - x_j|| - ||x - x_i||) with pairwise
  disjoint supports.
* ``gap_identity_check``: the mean of f_m equals half the drop in
  quantization error when x_m joins the codebook; both sides estimated on
  a shared sample pool.
* ``increment_functional`` / ``event_probability``: functionals keyed to
  the signs of Brownian increments on a sub-grid, and the probability of
  the corresponding sign event.
* ``bakhvalov_lower_bound``: the classical fooling-family certificate
  (1/4) sqrt(n) min_i S(f_i), taken conservatively with a 3-stderr haircut.
* ``subspace_blind_functional``: the distance to a subspace, which any
  algorithm sampling inside that subspace estimates as exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError
from .measures import BrownianKL, MeasureSpec, SeedSpec, is_path_measure, sample_batch
from .paths import (
    Functional,
    Grid,
    NormKind,
    Subspace,
    batch_path_norm,
    batch_project,
    batch_vector_norm,
)
from .quantize import Codebook, min_dist_batch

# Residuals below this are snapped to exactly 0, so that membership in the
# subspace is decided, not approximated.
_BLIND_SNAP_TOL = 1e-9

_CHUNK = 65536


# ---------------------------------------------------------------------------
# Fooling families from codebooks


@dataclass
class FoolingFamily:
    functionals: List[Functional]
    kind: str
    codebook: Optional[Codebook] = None

    def __len__(self):
        return len(self.functionals)


def _all_point_distances(batch: np.ndarray, codebook: Codebook) -> np.ndarray:
    # (B, n) distances to every codebook point, via single-point codebooks
    # is wasteful; reuse the chunked machinery by a running loop instead.
    from .quantize import _block_dist  # shared low-level kernel

    b = batch.shape[0]
    n = codebook.n
    out = np.empty((b, n))
    step = max(1, _CHUNK // max(1, n))
    for b0 in range(0, b, step):
        xb = batch[b0 : b0 + step]
        out[b0 : b0 + step] = _block_dist(
            xb, codebook.points, codebook.norm, codebook.grid
        )
    return out


def fooling_family(codebook: Codebook, norm: Optional[NormKind] = None) -> FoolingFamily:
    """One fooling functional per codebook point; disjoint supports.

    f_i is positive exactly on the interior of the i-th Voronoi cell and
    is 1-Lipschitz for the codebook norm.
    """
    if codebook.n < 2:
        raise ConfigurationError("fooling_family needs at least 2 points")
    if norm is not None and norm is not codebook.norm:
        codebook = Codebook(
            codebook.points,
            codebook.order_r,
            norm,
            codebook.measure_tag,
            grid=codebook.grid,
            oracle_dim=codebook.oracle_dim,
        )

    def member(i: int) -> Functional:
        def fn(batch):
            d = _all_point_distances(batch, codebook)
            own = d[:, i].copy()
            d[:, i] = np.inf
            others = d.min(axis=1)
            return 0.5 * np.maximum(0.0, others - own)

        return Functional(fn, 1.0, None, f"fooling[{i}]")

    members = [member(i) for i in range(codebook.n)]
    return FoolingFamily(members, "voronoi-fooling", codebook)


@dataclass(frozen=True)
class GapIdentityReport:
    """Both sides of the fooling-gap identity estimated on one pool."""

    mean_f_last: float
    mean_f_last_stderr: float
    half_gap: float
    half_gap_stderr: float
    difference: float
    combined_stderr: float
    sample_count: int

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= 3.0 * max(self.combined_stderr, 1e-300)


def gap_identity_check(
    codebook: Codebook, measure: MeasureSpec, M: int, seed: SeedSpec
) -> GapIdentityReport:
    """Check S(f_m) = (q(x_1..x_{m-1}) - q(x_1..x_m)) / 2 on a shared pool.

    f_m is the fooling functional of the last codebook point and q is the
    order-1 quantization error.  Both sides are averaged over the same
    samples, so the difference is fully paired.
    """
    if codebook.n < 2:
        raise ConfigurationError("gap_identity_check needs at least 2 points")
    m = codebook.n
    reduced = Codebook(
        codebook.points[: m - 1],
        codebook.order_r,
        codebook.norm,
        codebook.measure_tag,
        grid=codebook.grid,
        oracle_dim=codebook.oracle_dim,
    )
    family = fooling_family(codebook)
    f_last = family.functionals[m - 1]

    sums = np.zeros(3)
    sums_sq = np.zeros(3)
    done = 0
    chunk_index = 0
    while done < M:
        b = min(_CHUNK, M - done)
        batch = sample_batch(measure, seed.child(chunk_index), b)
        lhs = f_last(batch)
        d_full, _ = min_dist_batch(batch, codebook)
        d_red, _ = min_dist_batch(batch, reduced)
        rhs = 0.5 * (d_red - d_full)
        diff = lhs - rhs
        for j, v in enumerate((lhs, rhs, diff)):
            sums[j] += v.sum()
            sums_sq[j] += (v * v).sum()
        done += b
        chunk_index += 1
    means = sums / M
    variances = np.maximum(sums_sq / M - means**2, 0.0) * M / (M - 1)
    stderrs = np.sqrt(variances / M)
    combined = math.sqrt(stderrs[0] ** 2 + stderrs[1] ** 2)
    return GapIdentityReport(
        mean_f_last=float(means[0]),
        mean_f_last_stderr=float(stderrs[0]),
        half_gap=float(means[1]),
        half_gap_stderr=float(stderrs[1]),
        difference=float(means[2]),
        combined_stderr=float(max(combined, stderrs[2])),
        sample_count=M,
    )


# ---------------------------------------------------------------------------
# Increment-sign functionals and their events


@dataclass(frozen=True)
class IncrementFamilySpec:
    """Sign pattern on Brownian increments over s_i = i * window / segments.

    ``signs`` is a 0/1 vector: 0 demands an increment above the threshold,
    1 demands one below its negative.  The sub-grid points s_i must lie on
    the path grid.
    """

    segments: int
    window: float = 1.0
    threshold: float = 0.0
    signs: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.segments < 1:
            raise ConfigurationError("segments must be >= 1")
        if not (0.0 < self.window <= 1.0):
            raise ConfigurationError("window must lie in (0, 1]")
        if self.threshold < 0.0:
            raise ConfigurationError("threshold must be >= 0")
        signs = tuple(self.signs) or (0,) * self.segments
        if len(signs) != self.segments or any(s not in (0, 1) for s in signs):
            raise ConfigurationError("signs must be a 0/1 vector of length segments")
        object.__setattr__(self, "signs", signs)

    def times(self) -> np.ndarray:
        return self.window * np.arange(self.segments + 1) / self.segments


def increment_functional(
    spec: IncrementFamilySpec, grid: Optional[Grid] = None
) -> Functional:
    """f(x) = 1/2 min_i max(0, sigma_i (x(s_i) - x(s_{i-1})) - threshold).

    sigma_i is +1 where signs[i] = 0 and -1 otherwise.  The functional is
    nonnegative, vanishes outside the sign set, and is 1-Lipschitz for
    the sup norm: perturbing x by delta moves each increment by at most
    2 delta.
    """
    grid = grid or Grid.uniform()
    indices = np.array([grid.index_of(t) for t in spec.times()])
    sigma = np.where(np.array(spec.signs) == 0, 1.0, -1.0)
    theta = spec.threshold

    def fn(batch):
        vals = batch[:, indices, 0]
        increments = np.diff(vals, axis=1) * sigma[None, :]
        slack = np.maximum(0.0, increments - theta)
        return 0.5 * slack.min(axis=1)

    name = f"increment[{spec.segments},{spec.window},{spec.threshold}]"
    return Functional(fn, 1.0, None, name)


@dataclass(frozen=True)
class EventProbabilityReport:
    estimate: float
    stderr: float
    analytic: float
    upper_bound: float  # 2^-segments
    segments: int
    window: float
    threshold: float
    sample_count: int

    @property
    def passed(self) -> bool:
        within = abs(self.estimate - self.analytic) <= 3.0 * self.stderr
        capped = self.estimate <= self.upper_bound + 3.0 * self.stderr
        return within and capped


def event_probability(
    segments: int,
    window: float = 1.0,
    M: int = 100_000,
    seed: SeedSpec = SeedSpec(0),
    k_terms: int = 200,
    grid: Optional[Grid] = None,
) -> EventProbabilityReport:
    """Probability that every increment clears sqrt(window)/segments^(3/2).

    Estimated over truncated-expansion Brownian samples and compared to
    the exact value p^segments with p = 1/2 - (Phi(1/segments) - 1/2):
    each increment has standard deviation sqrt(window/segments), so the
    threshold is the (1/segments)-quantile away from zero, and the
    increments are independent.
    """
    if M < 10_000:
        raise ConfigurationError("event_probability needs M >= 10^4")
    grid = grid or Grid.uniform()
    threshold = math.sqrt(window) / segments**1.5
    spec = IncrementFamilySpec(segments, window, signs=(0,) * segments)
    indices = np.array([grid.index_of(t) for t in spec.times()])
    measure = BrownianKL(k_terms, grid)

    hits = 0
    done = 0
    chunk_index = 0
    while done < M:
        b = min(_CHUNK, M - done)
        batch = sample_batch(measure, seed.child(chunk_index), b)
        increments = np.diff(batch[:, indices, 0], axis=1)
        hits += int(np.all(increments >= threshold, axis=1).sum())
        done += b
        chunk_index += 1
    p_hat = hits / M
    stderr = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / M)
    p = 1.0 - NormalDist().cdf(1.0 / segments)
    return EventProbabilityReport(
        estimate=p_hat,
        stderr=stderr,
        analytic=p**segments,
        upper_bound=2.0**-segments,
        segments=segments,
        window=window,
        threshold=threshold,
        sample_count=M,
    )


# ---------------------------------------------------------------------------
# Lower-bound certificate


def bakhvalov_lower_bound(n: int, family_means: Sequence[Tuple[float, float]]) -> float:
    """Conservative minimal-error certificate from a fooling family.

    ``family_means`` holds (estimate, stderr) of S(f_i) for a family of m
    disjoint-support functionals whose signed sums stay 1-Lipschitz.  The
    certificate is (1/4) sqrt(n) min_i (estimate_i - 3 stderr_i), clamped
    at 0; it requires m >= 4n.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    m = len(family_means)
    if m < 4 * n:
        raise ConfigurationError(
            f"fooling family of size m={m} is too small: the certificate "
            f"requires m >= 4n = {4 * n}"
        )
    haircut = min(est - 3.0 * se for est, se in family_means)
    return max(0.0, 0.25 * math.sqrt(n) * haircut)


# ---------------------------------------------------------------------------
# Subspace-blind functional


def subspace_blind_functional(sub: Subspace) -> Functional:
    """f0(x) = L2 residual of x after projection onto the subspace.

    Vanishes exactly on the subspace (residuals below 1e-9 snap to 0) and
    is 1-Lipschitz even for the sup norm, because the grid L2 norm is
    dominated by the sup norm on [0,1].  Any algorithm that only sees
    sample values inside the subspace returns exactly 0 for it.
    """
    w = sub.grid.weights

    def fn(batch):
        _, resid = batch_project(batch[:, :, 0], sub)
        norms = np.sqrt(np.einsum("bg,g,bg->b", resid, w, resid))
        norms[norms < _BLIND_SNAP_TOL] = 0.0
        return norms

    return Functional(fn, 1.0, None, f"dist_to_subspace[{sub.kind}:{sub.dim}]")


# ---------------------------------------------------------------------------
# Statistical Lipschitz verification


@dataclass(frozen=True)
class LipschitzReport:
    max_ratio: float
    lip_claim: float
    pairs: int

    @property
    def flagged(self) -> bool:
        return self.max_ratio > self.lip_claim * (1.0 + 1e-9)


def lipschitz_check(
    f: Functional,
    measure: MeasureSpec,
    pairs: int,
    seed: SeedSpec,
    norm_kind: Optional[NormKind] = None,
    bump_scale: float = 1e-3,
) -> LipschitzReport:
    """Largest observed |f(x)-f(y)| / distance(x, y) over sampled pairs.

    Pairs are independent draws plus locally perturbed copies (small
    random bumps), which probe local Lipschitz violations.  Coincident
    pairs are skipped.
    """
    if pairs < 100:
        raise ConfigurationError("lipschitz_check needs at least 100 pairs")
    pathlike = is_path_measure(measure)
    if norm_kind is None:
        norm_kind = NormKind.SUP if pathlike else NormKind.EUCLIDEAN
    xs = sample_batch(measure, seed.child(0), pairs)
    ys = sample_batch(measure, seed.child(1), pairs)
    bumps = bump_scale * seed.child(2).rng().standard_normal(xs.shape)
    max_ratio = 0.0
    for a, b in ((xs, ys), (xs, xs + bumps)):
        fa, fb = f(a), f(b)
        if pathlike:
            grid = measure.grid
            dist = batch_path_norm(a - b, norm_kind, grid)
        else:
            dist = batch_vector_norm(a - b, norm_kind)
        ok = dist > 0
        if np.any(ok):
            ratios = np.abs(fa[ok] - fb[ok]) / dist[ok]
            max_ratio = max(max_ratio, float(ratios.max()))
    return LipschitzReport(max_ratio, f.lip_claim, pairs)
