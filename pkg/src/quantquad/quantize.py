"""Codebooks, Voronoi weights, distortion estimates, and Lloyd search.

A codebook is a finite set of points quantizing a measure; its quality of
order r is the r-th mean of the distance from a sample to its nearest
point.  Search is Lloyd iteration on a fixed sample pool (empirical
measure): deterministic given the seed, with pool distortion that never
increases from one iteration to the next.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .measures import (
    MeasureSpec,
    SeedSpec,
    StdNormal,
    is_path_measure,
    measure_grid,
    measure_tag,
    oracle_dim,
    sample_batch,
)
from .paths import Functional, Grid, NormKind, Path, kl_basis_on_grid, kl_eigenvalues

_DIRECT_LIMIT = 2**24  # switch to the Gram identity above this many diff entries
_GRAM_SAMPLE_CHUNK = 2048
_GRAM_CB_CHUNK = 8192


@dataclass
class Codebook:
    """n quantization points with optional Voronoi weights.

    ``points`` is (n, d) for vector measures or (n, G, m) for path
    measures (``grid`` set).  ``oracle_dim`` records the dimension of the
    subspace the points were built in, used for cost accounting.
    """

    points: np.ndarray
    order_r: float
    norm: NormKind
    measure_tag: str
    grid: Optional[Grid] = None
    weights: Optional[np.ndarray] = None
    oracle_dim: Optional[int] = None
    fit_history: Optional[list] = None
    meta: Optional[dict] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if self.grid is None:
            if pts.ndim != 2:
                raise ConfigurationError("vector codebook points must be (n, d)")
        else:
            if pts.ndim == 2:  # scalar paths given as (n, G)
                pts = pts[:, :, None]
            if pts.ndim != 3 or pts.shape[1] != self.grid.size:
                raise ConfigurationError(
                    "path codebook points must be (n, G, m) on the grid"
                )
        if pts.shape[0] < 1:
            raise ConfigurationError("codebook needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("codebook points must be finite")
        flat = pts.reshape(pts.shape[0], -1)
        if np.unique(flat, axis=0).shape[0] != pts.shape[0]:
            raise ConfigurationError("codebook points must be pairwise distinct")
        if self.order_r <= 0:
            raise ConfigurationError("order r must be positive")
        self.points = pts
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (pts.shape[0],) or np.any(w < 0):
                raise ConfigurationError("weights must be n nonnegative reals")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ConfigurationError("weights must sum to 1")
            self.weights = w

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def flat_points(self) -> np.ndarray:
        return self.points.reshape(self.n, -1)


@dataclass(frozen=True)
class DistortionEstimate:
    """Monte Carlo estimate of a codebook's r-th order quantization error.

    ``stderr`` comes from the CLT on the r-th power of the distance and
    the delta method for the 1/r-th root.
    """

    value: float
    stderr: float
    sample_count: int
    order: float


# ---------------------------------------------------------------------------
# Nearest-point machinery


def _flat_weights(cb_norm: NormKind, grid: Optional[Grid], m: int) -> Optional[np.ndarray]:
    if grid is None or cb_norm is not NormKind.L2:
        return None
    return np.repeat(grid.weights, m)


def _block_dist(xb: np.ndarray, cb: np.ndarray, kind: NormKind, grid: Optional[Grid]):
    # xb: (b, ...), cb: (nc, ...); returns (b, nc) distances.
    if grid is None:
        diff = xb[:, None, :] - cb[None, :, :]
        return np.sqrt(np.einsum("bnd,bnd->bn", diff, diff))
    diff = xb[:, None, :, :] - cb[None, :, :, :]
    if diff.shape[-1] == 1:
        mag = np.abs(diff[..., 0])
    else:
        mag = np.sqrt(np.einsum("bngm,bngm->bng", diff, diff))
    if kind is NormKind.SUP:
        return mag.max(axis=-1)
    w = grid.weights
    if kind is NormKind.L1:
        return mag @ w
    return np.sqrt(np.einsum("bng,g,bng->bn", mag, w, mag))


def min_dist_batch(values: np.ndarray, codebook: Codebook):
    """Distance to and index of the nearest codebook point for each sample.

    Ties go to the lowest index.  Returns (distances, indices).
    """
    n = codebook.n
    b_total = values.shape[0]
    flat_dim = int(np.prod(values.shape[1:]))
    kind = codebook.norm
    use_gram = (
        kind in (NormKind.L2, NormKind.EUCLIDEAN)
        and b_total * n * flat_dim > _DIRECT_LIMIT
    )
    best = np.full(b_total, np.inf)
    idx = np.zeros(b_total, dtype=int)
    if use_gram:
        m = 1 if codebook.grid is None else codebook.points.shape[2]
        w = _flat_weights(kind, codebook.grid, m)
        x2d = values.reshape(b_total, flat_dim)
        c2d = codebook.flat_points()
        xw = x2d if w is None else x2d * w[None, :]
        x_sq = np.einsum("bd,bd->b", xw, x2d)
        for c0 in range(0, n, _GRAM_CB_CHUNK):
            cc = c2d[c0 : c0 + _GRAM_CB_CHUNK]
            ccw = cc if w is None else cc * w[None, :]
            c_sq = np.einsum("nd,nd->n", ccw, cc)
            for b0 in range(0, b_total, _GRAM_SAMPLE_CHUNK):
                b1 = min(b0 + _GRAM_SAMPLE_CHUNK, b_total)
                d2 = x_sq[b0:b1, None] + c_sq[None, :] - 2.0 * (xw[b0:b1] @ cc.T)
                np.maximum(d2, 0.0, out=d2)
                local = np.argmin(d2, axis=1)
                dloc = np.sqrt(d2[np.arange(b1 - b0), local])
                better = dloc < best[b0:b1]
                best[b0:b1][better] = dloc[better]
                idx[b0:b1][better] = local[better] + c0
        return best, idx
    cb_chunk = max(1, min(n, _DIRECT_LIMIT // max(1, flat_dim * 64)))
    s_chunk = max(1, _DIRECT_LIMIT // max(1, flat_dim * cb_chunk))
    for b0 in range(0, b_total, s_chunk):
        b1 = min(b0 + s_chunk, b_total)
        xb = values[b0:b1]
        for c0 in range(0, n, cb_chunk):
            cbp = codebook.points[c0 : c0 + cb_chunk]
            d = _block_dist(xb, cbp, kind, codebook.grid)
            local = np.argmin(d, axis=1)
            dloc = d[np.arange(b1 - b0), local]
            better = dloc < best[b0:b1]
            best[b0:b1][better] = dloc[better]
            idx[b0:b1][better] = local[better] + c0
    return best, idx


def _sample_values(x, codebook: Codebook) -> np.ndarray:
    if isinstance(x, Path):
        if codebook.grid is None or not x.grid.same(codebook.grid):
            raise ConfigurationError("path and codebook grids do not match")
        return x.values[None, :, :]
    arr = np.asarray(x, dtype=float)
    if codebook.grid is not None:
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape != codebook.points.shape[1:]:
            raise ConfigurationError("sample shape does not match path codebook")
        return arr[None, :, :]
    if arr.ndim == 0:
        arr = arr[None]
    if arr.shape != codebook.points.shape[1:]:
        raise ConfigurationError(
            f"sample shape {arr.shape} does not match codebook points "
            f"{codebook.points.shape[1:]}"
        )
    return arr[None, :]


def nearest(codebook: Codebook, x) -> int:
    """Index of the nearest codebook point; ties break to the lowest index."""
    _, idx = min_dist_batch(_sample_values(x, codebook), codebook)
    return int(idx[0])


def dist_to_codebook_functional(codebook: Codebook) -> Functional:
    """f(x) = distance from x to the codebook; 1-Lipschitz in the codebook norm."""

    def fn(batch):
        d, _ = min_dist_batch(batch, codebook)
        return d

    return Functional(fn, 1.0, None, "dist_to_codebook")


# ---------------------------------------------------------------------------
# Distortion and Voronoi weights

_POOL_CHUNK = 65536


def distortion(
    codebook: Codebook, measure: MeasureSpec, r: float, M: int, seed: SeedSpec
) -> DistortionEstimate:
    """Monte Carlo estimate of the order-r quantization error of the codebook."""
    if M < 100:
        raise ConfigurationError("distortion sample count must be >= 100")
    if r <= 0:
        raise ConfigurationError("order r must be positive")
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_index = 0
    while done < M:
        b = min(_POOL_CHUNK, M - done)
        batch = sample_batch(measure, seed.child(chunk_index), b)
        d, _ = min_dist_batch(batch, codebook)
        y = d**r
        total += float(y.sum())
        total_sq += float((y * y).sum())
        done += b
        chunk_index += 1
    mean = total / M
    var = max(total_sq / M - mean * mean, 0.0) * M / (M - 1)
    se_mean = math.sqrt(var / M)
    value = mean ** (1.0 / r)
    # Delta method: d(mean^(1/r)) = mean^(1/r - 1) / r.
    stderr = se_mean * value / (r * mean) if mean > 0 else se_mean
    return DistortionEstimate(value, stderr, M, r)


def voronoi_weights(
    codebook: Codebook, measure: MeasureSpec, M: int, seed: SeedSpec
) -> np.ndarray:
    """Estimate cell masses by nearest-point counting; stores them on the codebook.

    The returned weights sum to 1 exactly; empty cells get weight 0 and are
    flagged with a warning.
    """
    if M < 100:
        raise ConfigurationError("weight sample count must be >= 100")
    counts = np.zeros(codebook.n, dtype=np.int64)
    done = 0
    chunk_index = 0
    while done < M:
        b = min(_POOL_CHUNK, M - done)
        batch = sample_batch(measure, seed.child(chunk_index), b)
        _, idx = min_dist_batch(batch, codebook)
        counts += np.bincount(idx, minlength=codebook.n)
        done += b
        chunk_index += 1
    w = counts / float(M)
    # Force an exact unit sum; the correction is at the rounding level.
    w[int(np.argmax(w))] += 1.0 - w.sum()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        warnings.warn(
            f"voronoi_weights: {empty.size} empty cell(s) at indices "
            f"{empty.tolist()[:8]}",
            stacklevel=2,
        )
    codebook.weights = w
    return w


# ---------------------------------------------------------------------------
# Lloyd search on a fixed pool


@dataclass(frozen=True)
class LloydOptions:
    iters: int = 200
    tol: float = 1e-10
    restarts: int = 8
    pool_size: Optional[int] = None  # default: 100000 vectors, 20000 paths


_DEFAULT_POOL_VECTOR = 100_000
_DEFAULT_POOL_PATH = 20_000


def _cell_update(flat_pool: np.ndarray, labels: np.ndarray, n: int, r: int):
    # Exact minimizers per cell: mean for r=2, coordinatewise median for r=1.
    counts = np.bincount(labels, minlength=n)
    centers = np.empty((n, flat_pool.shape[1]))
    if r == 2:
        for j in range(flat_pool.shape[1]):
            centers[:, j] = np.bincount(
                labels, weights=flat_pool[:, j], minlength=n
            )
        nonzero = counts > 0
        centers[nonzero] /= counts[nonzero, None]
    else:
        order = np.argsort(labels, kind="stable")
        sorted_pool = flat_pool[order]
        splits = np.cumsum(counts)[:-1]
        for i, cell in enumerate(np.split(sorted_pool, splits)):
            if cell.shape[0]:
                centers[i] = np.median(cell, axis=0)
    return centers, counts


def _reseed_empty(centers, counts, pool_flat, dists):
    empty = np.flatnonzero(counts == 0)
    if not empty.size:
        return centers
    # Deterministic rule: move each empty point to the pool sample farthest
    # from the current codebook, taking distinct samples in distance order.
    order = np.argsort(-dists, kind="stable")
    for e, src in zip(empty, order[: empty.size]):
        centers[e] = pool_flat[src]
    return centers


def _lloyd_run_general(pool, codebook_proto, init_flat, opts, r):
    shape = pool.shape[1:]
    flat_pool = pool.reshape(pool.shape[0], -1)
    centers = init_flat.copy()
    history = []
    prev = None
    prev_centers = centers
    for it in range(opts.iters + 1):
        cb = _make_codebook_like(codebook_proto, centers.reshape((-1,) + shape))
        dists, labels = min_dist_batch(pool, cb)
        cur = float(np.mean(dists**r))
        if prev is not None and cur > prev:
            centers = prev_centers  # keep the pool distortion non-increasing
            break
        history.append(cur)
        if it == opts.iters or (
            prev is not None and prev - cur <= opts.tol * max(prev, 1e-300)
        ):
            break
        prev, prev_centers = cur, centers
        centers, counts = _cell_update(flat_pool, labels, centers.shape[0], r)
        centers = _reseed_empty(centers, counts, flat_pool, dists)
    return centers.reshape((-1,) + shape), history


def _lloyd_run_1d(pool_sorted, prefix, init, opts, r):
    # Vector d=1 fast path: cells of a sorted codebook are index ranges of
    # the sorted pool, so assignment and exact updates are O(M).
    M = pool_sorted.size
    centers = np.sort(init)
    history = []
    prev = None
    prev_centers = centers
    for it in range(opts.iters + 1):
        bounds = (centers[1:] + centers[:-1]) / 2.0
        splits = np.searchsorted(pool_sorted, bounds, side="right")
        splits = np.concatenate(([0], splits, [M]))
        counts = np.diff(splits)
        labels = np.repeat(np.arange(centers.size), counts)
        absd = np.abs(pool_sorted - centers[labels])
        cur = float(np.mean(absd**r))
        if prev is not None and cur > prev:
            centers = prev_centers
            break
        history.append(cur)
        if it == opts.iters or (
            prev is not None and prev - cur <= opts.tol * max(prev, 1e-300)
        ):
            break
        prev, prev_centers = cur, centers
        new = np.empty_like(centers)
        far_order = None
        next_far = 0
        for i in range(centers.size):
            lo, hi = splits[i], splits[i + 1]
            if hi <= lo:
                if far_order is None:
                    far_order = np.argsort(-absd, kind="stable")
                new[i] = pool_sorted[far_order[next_far]]
                next_far += 1
            elif r == 2:
                new[i] = (prefix[hi] - prefix[lo]) / (hi - lo)
            else:
                mid = lo + (hi - lo - 1) // 2
                new[i] = (
                    pool_sorted[mid]
                    if (hi - lo) % 2
                    else (pool_sorted[mid] + pool_sorted[mid + 1]) / 2.0
                )
        centers = np.sort(new)
    return centers, history


def _make_codebook_like(proto: Codebook, points) -> Codebook:
    cb = object.__new__(Codebook)
    cb.points = points
    cb.order_r = proto.order_r
    cb.norm = proto.norm
    cb.measure_tag = proto.measure_tag
    cb.grid = proto.grid
    cb.weights = None
    cb.oracle_dim = proto.oracle_dim
    cb.fit_history = None
    cb.meta = None
    return cb


def lloyd(
    measure: MeasureSpec,
    n: int,
    r: int,
    opts: Optional[LloydOptions] = None,
    seed: SeedSpec = SeedSpec(0),
    norm: Optional[NormKind] = None,
) -> Codebook:
    """Best-of-restarts Lloyd iteration on a fixed sample pool.

    r=2 updates cells by their mean, r=1 by the coordinatewise median
    (exact in one dimension, the standard surrogate otherwise).  Empty
    cells are reseeded at the pool sample farthest from the codebook.
    The empirical pool distortion never increases from one iteration to
    the next; the best restart by final pool distortion wins.
    """
    if n < 1:
        raise ConfigurationError("codebook size must be >= 1")
    if r not in (1, 2):
        raise ConfigurationError("centroid updates support r in {1, 2}")
    opts = opts or LloydOptions()
    if norm is None:
        norm = NormKind.L2 if is_path_measure(measure) else NormKind.EUCLIDEAN
    pool_size = opts.pool_size or (
        _DEFAULT_POOL_PATH if is_path_measure(measure) else _DEFAULT_POOL_VECTOR
    )
    if pool_size < n:
        raise ConfigurationError("pool is smaller than the codebook")
    pool = sample_batch(measure, seed.child(0), pool_size)
    grid = measure_grid(measure)
    proto = _make_codebook_like(
        Codebook(
            np.zeros((1, 1)) if grid is None else np.zeros((1, grid.size, 1)),
            float(r),
            norm,
            measure_tag(measure),
            grid=grid,
        ),
        None,
    )
    proto.oracle_dim = oracle_dim(measure)

    fast_1d = grid is None and pool.shape[1] == 1
    if fast_1d:
        flat = np.sort(pool[:, 0], kind="stable")
        prefix = np.concatenate(([0.0], np.cumsum(flat)))
    best = None
    for restart in range(opts.restarts):
        rng = seed.child(1 + restart).rng()
        pick = rng.choice(pool.shape[0], size=n, replace=False)
        if fast_1d:
            centers, history = _lloyd_run_1d(flat, prefix, pool[pick, 0], opts, r)
            points = centers[:, None]
        else:
            points, history = _lloyd_run_general(
                pool, proto, pool[pick].reshape(n, -1), opts, r
            )
        final = history[-1]
        if best is None or final < best[0]:
            best = (final, points, history)
    _, points, history = best
    if grid is None and points.shape[1] == 1:
        points = points[np.argsort(points[:, 0], kind="stable")]
    elif grid is None:
        points = points[np.lexsort(points.T[::-1])]
    cb = Codebook(
        points if grid is None else points.reshape(n, grid.size, -1),
        float(r),
        norm,
        measure_tag(measure),
        grid=grid,
        oracle_dim=oracle_dim(measure),
        fit_history=history,
    )
    return cb


def uniform_midpoint_codebook(d: int, per_axis: int, r: float = 2.0) -> Codebook:
    """Product-of-midpoints codebook for the uniform cube, with exact weights.

    Each axis gets the points (2i-1)/(2 per_axis); every cell carries the
    exact mass per_axis^-d by symmetry.  In one dimension this is the
    optimal codebook of its size for any order r.
    """
    if d < 1 or per_axis < 1:
        raise ConfigurationError("need d >= 1 and per_axis >= 1")
    axis = (2.0 * np.arange(1, per_axis + 1) - 1.0) / (2.0 * per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    n = points.shape[0]
    weights = np.full(n, 1.0 / n)
    weights[0] += 1.0 - weights.sum()
    return Codebook(
        points,
        float(r),
        NormKind.EUCLIDEAN,
        f"uniform_cube:{d}",
        weights=weights,
        oracle_dim=d,
    )


# ---------------------------------------------------------------------------
# Cached scalar N(0,1) quantizers and the Brownian product quantizer

_SCALAR_SEED = SeedSpec(424242)
_SCALAR_OPTS = LloydOptions(iters=500, tol=1e-13, restarts=4, pool_size=400_000)
_scalar_cache: dict = {}


def _scalar_entry(n: int):
    if n not in _scalar_cache:
        if n == 1:
            # The mean minimizes the quadratic distortion; E Z^2 = 1.
            _scalar_cache[1] = (np.zeros(1), 1.0)
        else:
            cb = lloyd(StdNormal(1), n, 2, _SCALAR_OPTS, _SCALAR_SEED)
            points = np.sort(cb.points[:, 0])
            d2 = cb.fit_history[-1]
            _scalar_cache[n] = (points, d2)
    return _scalar_cache[n]


def _scalar_cell_masses(points: np.ndarray) -> np.ndarray:
    nd = NormalDist()
    bounds = (points[1:] + points[:-1]) / 2.0
    upper = np.concatenate((bounds, [np.inf]))
    lower = np.concatenate(([-np.inf], bounds))
    return np.array(
        [nd.cdf(u) - nd.cdf(l) if np.isfinite(u) or np.isfinite(l) else 1.0
         for l, u in zip(lower, upper)]
    )


def scalar_gaussian_quantizer(levels: int) -> Codebook:
    """Cached near-optimal quadratic quantizer of N(0,1) with the given size.

    Built by Lloyd with fixed high-budget options and a fixed internal
    seed, so results are identical across runs and processes.
    """
    if levels < 1:
        raise ConfigurationError("levels must be >= 1")
    points, _ = _scalar_entry(levels)
    weights = _scalar_cell_masses(points)
    weights[int(np.argmax(weights))] += 1.0 - weights.sum()
    return Codebook(
        points[:, None],
        2.0,
        NormKind.EUCLIDEAN,
        "std_normal:1",
        weights=weights,
        oracle_dim=1,
    )


def scalar_quantizer_distortion2(levels: int) -> float:
    """Pool-empirical squared quadratic distortion of the cached quantizer."""
    _, d2 = _scalar_entry(levels)
    return d2


def product_quantizer_bm(
    n_budget: int, k_terms: int = 200, grid: Optional[Grid] = None
) -> Codebook:
    """Product codebook for Brownian motion over its expansion coordinates.

    Levels n_1 >= n_2 >= ... >= 1 are allocated greedily: each increment
    goes to the coordinate with the largest predicted drop in squared L2
    distortion, lambda_l * (D2(n_l) - D2(n_l + 1)), subject to the product
    of levels staying within ``n_budget``.  Points are all combinations of
    the scaled scalar codebooks; weights are the exact products of the
    scalar cell masses.
    """
    if n_budget < 1:
        raise ConfigurationError("n_budget must be >= 1")
    if k_terms < 1:
        raise ConfigurationError("k_terms must be >= 1")
    grid = grid or Grid.uniform()
    lam = kl_eigenvalues(k_terms)
    levels = np.ones(k_terms, dtype=int)
    prod = 1
    while True:
        best_gain = 0.0
        best_coord = -1
        for ell in range(k_terms):
            new_prod = prod // levels[ell] * (levels[ell] + 1)
            if new_prod > n_budget:
                continue
            gain = lam[ell] * (
                scalar_quantizer_distortion2(int(levels[ell]))
                - scalar_quantizer_distortion2(int(levels[ell]) + 1)
            )
            if gain > best_gain:
                best_gain = gain
                best_coord = ell
        if best_coord < 0:
            break
        prod = prod // levels[best_coord] * (levels[best_coord] + 1)
        levels[best_coord] += 1
    assert np.all(np.diff(levels) <= 0), "greedy allocation must be non-increasing"

    active = np.flatnonzero(levels > 1)
    basis = kl_basis_on_grid(k_terms, grid)
    if active.size == 0:
        points = np.zeros((1, grid.size, 1))
        weights = np.ones(1)
    else:
        axes_points = [ _scalar_entry(int(levels[ell]))[0] for ell in active ]
        axes_masses = [ _scalar_cell_masses(p) for p in axes_points ]
        mesh = np.meshgrid(*axes_points, indexing="ij")
        coeffs = np.stack([m.ravel() for m in mesh], axis=1)  # (N, active)
        scaled = coeffs * np.sqrt(lam[active])[None, :]
        points = (scaled @ basis[active])[:, :, None]
        wmesh = np.meshgrid(*axes_masses, indexing="ij")
        weights = np.ones(coeffs.shape[0])
        for wm in wmesh:
            weights = weights * wm.ravel()
        weights[int(np.argmax(weights))] += 1.0 - weights.sum()
    return Codebook(
        points,
        2.0,
        NormKind.L2,
        f"brownian_kl:{k_terms}:{grid.size}",
        grid=grid,
        weights=weights,
        oracle_dim=max(1, int(active.size)),
        meta={"levels": tuple(int(v) for v in levels[: max(1, active.size)])},
    )
