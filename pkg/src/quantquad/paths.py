"""Grids, paths, norms, Lipschitz functionals, and linear path subspaces.

A path is a continuous function on [0,1] stored through its values on a
fixed grid; integral norms use trapezoid weights, which are exact for
piecewise-linear integrands.  Subspaces keep bases that are orthonormal
with respect to the grid inner product, so projecting is two matrix
products and the L2 residual of the projection is the exact L2 distance
to the subspace.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError

DEFAULT_GRID_SIZE = 257

# Exact-match tolerance when locating a time on the grid.
_GRID_MATCH_TOL = 1e-12


class NormKind(enum.Enum):
    SUP = "sup"
    L1 = "l1"
    L2 = "l2"
    EUCLIDEAN = "euclidean"

    @classmethod
    def parse(cls, text: str) -> "NormKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown norm {text!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing time points t_0 = 0 < ... < t_{G-1} = 1."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ConfigurationError("grid needs at least two points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise ConfigurationError("grid must start at 0 and end at 1")
        if np.any(np.diff(pts) <= 0):
            raise ConfigurationError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)
        # Trapezoid quadrature weights on the grid.
        w = np.empty_like(pts)
        w[0] = (pts[1] - pts[0]) / 2.0
        w[-1] = (pts[-1] - pts[-2]) / 2.0
        w[1:-1] = (pts[2:] - pts[:-2]) / 2.0
        w.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "_weights", w)

    @staticmethod
    def uniform(size: int = DEFAULT_GRID_SIZE) -> "Grid":
        if size < 2:
            raise ConfigurationError("uniform grid needs size >= 2")
        return Grid(np.linspace(0.0, 1.0, size))

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def same(self, other: "Grid") -> bool:
        return self is other or (
            self.size == other.size and np.array_equal(self.points, other.points)
        )

    def index_of(self, t: float) -> int:
        """Index of a grid point matching t exactly (within 1e-12)."""
        i = int(np.argmin(np.abs(self.points - t)))
        if abs(self.points[i] - t) > _GRID_MATCH_TOL:
            raise ConfigurationError(f"t={t!r} does not lie on the grid")
        return i


@dataclass
class Path:
    """Grid plus a (G, m) value matrix; scalar paths may pass (G,) values."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.size:
            raise ConfigurationError(
                f"path values must be (G, m) with G={self.grid.size}, "
                f"got shape {np.shape(self.values)}"
            )
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("path values must be finite")
        self.values = v

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def at(self, t: float) -> np.ndarray:
        """Piecewise-linear value at time t (exact at grid points)."""
        out = np.empty(self.dim)
        for j in range(self.dim):
            out[j] = np.interp(t, self.grid.points, self.values[:, j])
        return out


# ---------------------------------------------------------------------------
# Norms and distances


def _pointwise_magnitude(values: np.ndarray) -> np.ndarray:
    # (B, G, m) -> (B, G) Euclidean magnitude across the path dimension.
    if values.shape[-1] == 1:
        return np.abs(values[..., 0])
    return np.sqrt(np.einsum("...i,...i->...", values, values))


def batch_path_norm(values: np.ndarray, kind: NormKind, grid: Grid) -> np.ndarray:
    """Norms of a (B, G, m) batch of path values; returns (B,)."""
    if kind is NormKind.EUCLIDEAN:
        raise ConfigurationError("euclidean norm applies to vectors, not paths")
    if kind is NormKind.SUP:
        return _pointwise_magnitude(values).max(axis=-1)
    w = grid.weights
    if kind is NormKind.L1:
        return _pointwise_magnitude(values) @ w
    # L2: trapezoid rule on the squared magnitude.
    sq = np.einsum("bgm,bgm->bg", values, values)
    return np.sqrt(sq @ w)


def batch_vector_norm(values: np.ndarray, kind: NormKind) -> np.ndarray:
    """Norms of a (B, d) batch of vectors; returns (B,)."""
    if kind is not NormKind.EUCLIDEAN:
        raise ConfigurationError(
            f"{kind.value} norm applies to paths, not vectors"
        )
    return np.sqrt(np.einsum("bd,bd->b", values, values))


def _as_batch(x) -> tuple[np.ndarray, Optional[Grid]]:
    if isinstance(x, Path):
        return x.values[None, :, :], x.grid
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ConfigurationError(
            "expected a Path or a 1-d vector, got shape " f"{arr.shape}"
        )
    return arr[None, :], None


def norm(x, kind: NormKind) -> float:
    """Norm of a Path (sup/L1/L2) or a finite-dimensional vector (euclidean)."""
    batch, grid = _as_batch(x)
    if grid is None:
        return float(batch_vector_norm(batch, kind)[0])
    return float(batch_path_norm(batch, kind, grid)[0])


def distance(x, y, kind: NormKind) -> float:
    """norm(x - y, kind); both arguments must live on the same grid."""
    bx, gx = _as_batch(x)
    by, gy = _as_batch(y)
    if (gx is None) != (gy is None):
        raise ConfigurationError("cannot mix a path and a vector in a distance")
    if gx is not None and not gx.same(gy):
        raise ConfigurationError("paths live on different grids")
    if bx.shape != by.shape:
        raise ConfigurationError(
            f"shape mismatch {bx.shape[1:]} vs {by.shape[1:]}"
        )
    diff = bx - by
    if gx is None:
        return float(batch_vector_norm(diff, kind)[0])
    return float(batch_path_norm(diff, kind, gx)[0])


# ---------------------------------------------------------------------------
# Karhunen-Loeve system for Brownian motion on [0,1]


def kl_eigenvalues(k: int) -> np.ndarray:
    """First k eigenvalues ((l - 1/2) pi)^(-2) of the Brownian covariance."""
    ell = np.arange(1, k + 1)
    return ((ell - 0.5) * math.pi) ** -2.0


def kl_basis_on_grid(k: int, grid: Grid) -> np.ndarray:
    """Rows e_l(t) = sqrt(2) sin((l - 1/2) pi t) evaluated on the grid; (k, G)."""
    ell = np.arange(1, k + 1)[:, None]
    return math.sqrt(2.0) * np.sin((ell - 0.5) * math.pi * grid.points[None, :])


# ---------------------------------------------------------------------------
# Subspaces (scalar paths)


@dataclass
class Subspace:
    """A k-dimensional space of scalar paths.

    ``basis`` rows are orthonormal for the grid inner product
    <x, y> = sum_i w_i x_i y_i with trapezoid weights w.
    """

    grid: Grid
    basis: np.ndarray  # (k, G)
    kind: str  # "piecewise-linear" or "karhunen-loeve"
    detail: tuple = ()

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def gram(self) -> np.ndarray:
        wb = self.basis * self.grid.weights[None, :]
        return wb @ self.basis.T


def _orthonormalize_rows(raw: np.ndarray, grid: Grid) -> np.ndarray:
    # QR in sqrt-weighted coordinates; rows of the result are W-orthonormal.
    sw = np.sqrt(grid.weights)
    q, r = np.linalg.qr((raw * sw[None, :]).T)
    k = raw.shape[0]
    if np.any(np.abs(np.diag(r)) < 1e-12):
        raise ConfigurationError("basis functions are linearly dependent")
    signs = np.sign(np.diag(r))
    q = q[:, :k] * signs[None, :]
    return (q / sw[:, None]).T


def make_pl_subspace(breakpoints, grid: Optional[Grid] = None) -> Subspace:
    """Span of hat functions over the given breakpoints, orthonormalized.

    Breakpoints must include 0 and 1, be strictly increasing, and each must
    coincide with a grid point.
    """
    grid = grid or Grid.uniform()
    bp = np.asarray(list(breakpoints), dtype=float)
    if bp.ndim != 1 or bp.size < 2:
        raise ConfigurationError("need at least the breakpoints 0 and 1")
    if bp[0] != 0.0 or bp[-1] != 1.0:
        raise ConfigurationError("breakpoints must include 0 and 1")
    if np.any(np.diff(bp) <= 0):
        raise ConfigurationError("breakpoints must be strictly increasing")
    for b in bp:
        grid.index_of(b)  # raises if off-grid
    k = bp.size
    raw = np.empty((k, grid.size))
    for j in range(k):
        left = bp[j - 1] if j > 0 else bp[0]
        right = bp[j + 1] if j < k - 1 else bp[-1]
        xp, fp = [left, bp[j], right], [0.0, 1.0, 0.0]
        if j == 0:
            xp, fp = [bp[0], right], [1.0, 0.0]
        elif j == k - 1:
            xp, fp = [left, bp[-1]], [0.0, 1.0]
        raw[j] = np.interp(grid.points, xp, fp)
    basis = _orthonormalize_rows(raw, grid)
    return Subspace(grid, basis, "piecewise-linear", detail=tuple(bp))


def make_kl_subspace(k: int, grid: Optional[Grid] = None) -> Subspace:
    """Span of the first k Brownian eigenfunctions, re-orthonormalized on the grid."""
    if k < 1:
        raise ConfigurationError("subspace dimension must be >= 1")
    grid = grid or Grid.uniform()
    if k >= grid.size:
        raise ConfigurationError(
            f"a {k}-dimensional expansion subspace needs a grid with more "
            f"than {k} points (got {grid.size}); use a finer grid"
        )
    basis = _orthonormalize_rows(kl_basis_on_grid(k, grid), grid)
    return Subspace(grid, basis, "karhunen-loeve", detail=(k,))


def batch_project(values: np.ndarray, sub: Subspace):
    """Project (B, G) scalar path values; returns (projection, residual)."""
    wv = values * sub.grid.weights[None, :]
    coeff = wv @ sub.basis.T  # (B, k)
    proj = coeff @ sub.basis  # (B, G)
    return proj, values - proj


def project(x: Path, sub: Subspace):
    """L2-orthogonal projection of a scalar path onto the subspace.

    Returns ``(projection, residual_norms)`` where ``residual_norms`` maps
    each path norm to the norm of ``x - projection``.  The L2 entry is the
    exact grid-L2 distance from x to the subspace; the sup and L1 entries
    are norms of the same L2-optimal residual, hence upper bounds on the
    corresponding distances.
    """
    if not isinstance(x, Path):
        raise ConfigurationError("project expects a Path")
    if not x.grid.same(sub.grid):
        raise ConfigurationError("path and subspace live on different grids")
    if x.dim != 1:
        raise ConfigurationError("subspace projections support scalar paths")
    proj, resid = batch_project(x.values[:, 0][None, :], sub)
    rv = resid[:, :, None]
    norms = {
        NormKind.SUP: float(batch_path_norm(rv, NormKind.SUP, sub.grid)[0]),
        NormKind.L1: float(batch_path_norm(rv, NormKind.L1, sub.grid)[0]),
        NormKind.L2: float(batch_path_norm(rv, NormKind.L2, sub.grid)[0]),
    }
    return Path(sub.grid, proj[0]), norms


# ---------------------------------------------------------------------------
# Functionals


@dataclass
class Functional:
    """Evaluation oracle with a claimed Lipschitz constant.

    ``fn`` maps a batch of sample values to a 1-d array: (B, d) for vector
    measures, (B, G, m) for path measures.  ``lip_claim`` is a claim only;
    the adversary module checks it statistically.  When ``oracle_dim`` is
    set, algorithms refuse to evaluate the functional at points of a
    higher-dimensional subspace.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    lip_claim: float = 1.0
    oracle_dim: Optional[int] = None
    name: str = ""

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fn(batch), dtype=float)
        if out.shape != batch.shape[:1]:
            raise ConfigurationError(
                f"functional {self.name or '<anonymous>'} returned shape "
                f"{out.shape} for a batch of {batch.shape[0]}"
            )
        return out

    def eval_one(self, x) -> float:
        if isinstance(x, Path):
            return float(self(x.values[None, :, :])[0])
        arr = np.asarray(x, dtype=float)
        return float(self(arr[None, ...])[0])

    @staticmethod
    def from_scalar(fn: Callable, **kwargs) -> "Functional":
        """Wrap a one-sample callable into the batch convention."""

        def batched(batch):
            return np.array([fn(batch[i]) for i in range(batch.shape[0])])

        return Functional(batched, **kwargs)


def sup_norm_functional() -> Functional:
    """f(x) = sup_t |x(t)| on grid paths; 1-Lipschitz for the sup norm."""
    return Functional(
        lambda v: _pointwise_magnitude(v).max(axis=-1), 1.0, None, "sup_norm"
    )


def running_max_functional() -> Functional:
    """f(x) = max_t x(t) (signed maximum of the first coordinate)."""
    return Functional(lambda v: v[..., 0].max(axis=-1), 1.0, None, "running_max")


def l1_integral_functional(grid: Grid) -> Functional:
    """f(x) = integral of |x(t)| dt by the grid trapezoid rule."""
    w = grid.weights

    def fn(v):
        return _pointwise_magnitude(v) @ w

    return Functional(fn, 1.0, None, "l1_integral")


def path_coord_functional(t: float, grid: Grid, absolute: bool = False) -> Functional:
    """f(x) = x(t) (or |x(t)|) for a grid time t, first path coordinate."""
    i = grid.index_of(t)
    if absolute:
        return Functional(lambda v: np.abs(v[:, i, 0]), 1.0, None, f"abs_coord_at({t})")
    return Functional(lambda v: v[:, i, 0], 1.0, None, f"coord_at({t})")


def vector_coord_functional(index: int, absolute: bool = False) -> Functional:
    """f(x) = x_index (or |x_index|) for vector samples."""
    if absolute:
        return Functional(
            lambda v: np.abs(v[:, index]), 1.0, None, f"abs_coord_at({index})"
        )
    return Functional(lambda v: v[:, index], 1.0, None, f"coord_at({index})")
