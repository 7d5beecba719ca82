"""Sampleable probability measures and their reference-value oracle.

Four measure families are supported: the uniform law on [0,1]^d, the
d-dimensional standard normal, Brownian motion on [0,1] through a
truncated Karhunen-Loeve expansion, and diffusion paths through the
strong Euler scheme with piecewise-linear interpolation.  All sampling
is a pure function of (measure, seed): streams are derived from a
splittable seed tree, so runs are reproducible regardless of how work
is partitioned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np

from .errors import ConfigurationError, NumericError
from .paths import Grid, Path, kl_basis_on_grid, kl_eigenvalues

# Fixed internal batch size; sampling consumes the stream in this layout,
# so estimates are identical however callers chunk their work.
_CHUNK = 65536


@dataclass(frozen=True)
class SeedSpec:
    """Key of a reproducible random stream.

    Distinct (master_seed, stream_index) pairs give statistically
    independent streams; the same pair replays the identical sequence.
    ``branch`` extends the key for internal sub-streams (restarts,
    replications) so that parallel schedules stay deterministic.
    """

    master_seed: int
    stream_index: int = 0
    branch: tuple = ()

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64):
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ConfigurationError("stream_index must be non-negative")

    def child(self, *indices: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_index, self.branch + indices)

    def rng(self) -> np.random.Generator:
        key = (self.stream_index,) + self.branch
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.master_seed, spawn_key=key)
        )

    def tag(self) -> str:
        parts = [str(self.master_seed), str(self.stream_index)]
        parts += [str(b) for b in self.branch]
        return ":".join(parts)


# ---------------------------------------------------------------------------
# Diffusion coefficients

CoeffFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConstantCoeff:
    """a(x) = c (drift) or b(x) = c * I (diffusion)."""

    value: float

    def drift(self, x: np.ndarray) -> np.ndarray:
        return np.full_like(x, self.value)

    def diffusion(self, x: np.ndarray) -> np.ndarray:
        b, m = x.shape
        return np.broadcast_to(self.value * np.eye(m), (b, m, m))

    def tag(self) -> str:
        return f"constant:{self.value!r}"


@dataclass(frozen=True)
class AffineCoeff:
    """a(x) = c0 + c1 x elementwise; as diffusion, diag(c0 + c1 x)."""

    intercept: float
    slope: float

    def drift(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + self.slope * x

    def diffusion(self, x: np.ndarray) -> np.ndarray:
        b, m = x.shape
        out = np.zeros((b, m, m))
        idx = np.arange(m)
        out[:, idx, idx] = self.intercept + self.slope * x
        return out

    def tag(self) -> str:
        if self.intercept == 0.0:
            return f"linear:{self.slope!r}"
        return f"affine:{self.intercept!r},{self.slope!r}"


def LinearCoeff(rate: float) -> AffineCoeff:
    """a(x) = rate * x."""
    return AffineCoeff(0.0, rate)


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients of dX = a(X) dt + b(X) dW with X_0 = u0 in R^m.

    ``drift`` maps a batch (B, m) to (B, m); ``diffusion`` maps (B, m) to
    (B, m, m).  The built-in coefficient families satisfy this contract;
    custom coefficients must as well.
    """

    drift: CoeffFn
    diffusion: CoeffFn
    u0: tuple
    m: int = 1

    def __post_init__(self):
        u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
        if u0.shape != (self.m,):
            raise ConfigurationError(f"u0 must have shape ({self.m},)")
        if not np.all(np.isfinite(u0)):
            raise ConfigurationError("u0 must be finite")
        object.__setattr__(self, "u0", tuple(u0.tolist()))

    def u0_array(self) -> np.ndarray:
        return np.asarray(self.u0, dtype=float)


def gbm_spec(drift_rate: float, vol_rate: float, u0: float = 1.0) -> DiffusionSpec:
    """Scalar linear SDE dX = drift_rate X dt + vol_rate X dW."""
    a = LinearCoeff(drift_rate)
    b = LinearCoeff(vol_rate)
    return DiffusionSpec(a.drift, b.diffusion, (u0,), 1)


# ---------------------------------------------------------------------------
# Measure variants


@dataclass(frozen=True)
class UniformCube:
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError("dimension must be >= 1")


@dataclass(frozen=True)
class StdNormal:
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError("dimension must be >= 1")


@dataclass(frozen=True, eq=False)
class BrownianKL:
    """Truncated Karhunen-Loeve Brownian motion on the grid.

    The truncation keeps k_terms expansion terms; the bias this induces
    is documented, not hidden: reference values of path functionals carry
    an explicit discretization allowance (see README).
    """

    k_terms: int = 200
    grid: Grid = None

    def __post_init__(self):
        if self.k_terms < 1:
            raise ConfigurationError("k_terms must be >= 1")
        if self.grid is None:
            object.__setattr__(self, "grid", Grid.uniform())


@dataclass(frozen=True, eq=False)
class Diffusion:
    spec: DiffusionSpec
    k_steps: int
    grid: Grid = None

    def __post_init__(self):
        if self.k_steps < 2:
            raise ConfigurationError("k_steps must be >= 2")
        if self.grid is None:
            object.__setattr__(self, "grid", Grid.uniform())


MeasureSpec = Union[UniformCube, StdNormal, BrownianKL, Diffusion]


def is_path_measure(measure: MeasureSpec) -> bool:
    return isinstance(measure, (BrownianKL, Diffusion))


def measure_grid(measure: MeasureSpec) -> Optional[Grid]:
    return measure.grid if is_path_measure(measure) else None


def path_dim(measure: MeasureSpec) -> int:
    if isinstance(measure, BrownianKL):
        return 1
    if isinstance(measure, Diffusion):
        return measure.spec.m
    raise ConfigurationError("not a path measure")


def oracle_dim(measure: MeasureSpec) -> int:
    """Dimension of the subspace the measure's samples live in.

    This is the per-oracle-call cost of evaluating a functional at a
    sample: d for product measures on R^d, the number of expansion terms
    for truncated Brownian motion, and the number of Euler breakpoints
    for diffusions (sample paths are piecewise linear on those points).
    """
    if isinstance(measure, (UniformCube, StdNormal)):
        return measure.d
    if isinstance(measure, BrownianKL):
        return measure.k_terms
    return measure.k_steps


def measure_tag(measure: MeasureSpec) -> str:
    if isinstance(measure, UniformCube):
        return f"uniform_cube:{measure.d}"
    if isinstance(measure, StdNormal):
        return f"std_normal:{measure.d}"
    if isinstance(measure, BrownianKL):
        return f"brownian_kl:{measure.k_terms}:{measure.grid.size}"
    return f"diffusion:k_steps={measure.k_steps}"


def rng_calls_per_sample(measure: MeasureSpec) -> int:
    """Random scalars consumed per draw; exact by construction."""
    if isinstance(measure, (UniformCube, StdNormal)):
        return measure.d
    if isinstance(measure, BrownianKL):
        return measure.k_terms
    return (measure.k_steps - 1) * measure.spec.m


# ---------------------------------------------------------------------------
# Sampling


def _kl_matrix(measure: BrownianKL) -> np.ndarray:
    # (k_terms, G) rows sqrt(lambda_l) e_l(t).
    lam = kl_eigenvalues(measure.k_terms)
    return np.sqrt(lam)[:, None] * kl_basis_on_grid(measure.k_terms, measure.grid)


def _interp_breakpoints_to_grid(states: np.ndarray, k: int, grid: Grid) -> np.ndarray:
    # states: (B, k, m) at breakpoints l/(k-1); evaluate the piecewise-linear
    # interpolant at the grid points.  Breakpoints need not lie on the grid.
    pos = grid.points * (k - 1)
    j = np.minimum(pos.astype(int), k - 2)
    lam = pos - j
    return (1.0 - lam)[None, :, None] * states[:, j, :] + lam[None, :, None] * states[
        :, j + 1, :
    ]


def euler_values(
    spec: DiffusionSpec, k: int, rng: np.random.Generator, n: int, grid: Grid
) -> np.ndarray:
    """n Euler paths with step 1/(k-1), interpolated to the grid; (n, G, m).

    Increment vectors are drawn for every step even when the diffusion
    coefficient vanishes, so stream consumption does not depend on the
    coefficients.
    """
    if k < 2:
        raise ConfigurationError("breakpoint count k must be >= 2")
    m = spec.m
    dt = 1.0 / (k - 1)
    sq = math.sqrt(dt)
    increments = rng.standard_normal((n, k - 1, m))
    states = np.empty((n, k, m))
    x = np.tile(spec.u0_array(), (n, 1))
    states[:, 0, :] = x
    scalar = m == 1
    for step in range(k - 1):
        a = np.asarray(spec.drift(x), dtype=float)
        b = np.asarray(spec.diffusion(x), dtype=float)
        z = increments[:, step, :]
        if scalar:
            x = x + dt * a + sq * b[:, :, 0] * z
        else:
            x = x + dt * a + sq * np.einsum("bij,bj->bi", b, z)
        if not np.all(np.isfinite(x)):
            bad = int(np.argwhere(~np.isfinite(x).all(axis=1))[0, 0])
            raise NumericError(
                f"euler recursion produced a non-finite state at step {step + 1}",
                step=step + 1,
                sample=bad,
            )
        states[:, step + 1, :] = x
    return _interp_breakpoints_to_grid(states, k, grid)


def sample_batch(measure: MeasureSpec, seed: SeedSpec, n: int) -> np.ndarray:
    """n independent draws as one array: (n, d) vectors or (n, G, m) paths."""
    if n < 1:
        raise ConfigurationError("sample count must be >= 1")
    rng = seed.rng()
    if isinstance(measure, UniformCube):
        return rng.random((n, measure.d))
    if isinstance(measure, StdNormal):
        return rng.standard_normal((n, measure.d))
    if isinstance(measure, BrownianKL):
        coeff = rng.standard_normal((n, measure.k_terms))
        return (coeff @ _kl_matrix(measure))[:, :, None]
    if isinstance(measure, Diffusion):
        return euler_values(measure.spec, measure.k_steps, rng, n, measure.grid)
    raise ConfigurationError(f"unknown measure {measure!r}")


def sample(measure: MeasureSpec, seed: SeedSpec, n: int) -> List:
    """n independent draws as a list of vectors or Path objects."""
    batch = sample_batch(measure, seed, n)
    if is_path_measure(measure):
        grid = measure_grid(measure)
        return [Path(grid, batch[i]) for i in range(n)]
    return [batch[i] for i in range(n)]


def sample_brownian_kl(k_terms: int, grid: Optional[Grid], seed: SeedSpec) -> Path:
    """One truncated Karhunen-Loeve Brownian path W(t) = sum sqrt(l_j) Z_j e_j(t)."""
    measure = BrownianKL(k_terms, grid or Grid.uniform())
    return Path(measure.grid, sample_batch(measure, seed, 1)[0])


def euler_strong_path(
    spec: DiffusionSpec, k: int, seed: SeedSpec, grid: Optional[Grid] = None
) -> Path:
    """One Euler path with k breakpoints, interpolated to the grid."""
    grid = grid or Grid.uniform()
    values = euler_values(spec, k, seed.rng(), 1, grid)
    return Path(grid, values[0])


# ---------------------------------------------------------------------------
# Reference oracle


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    n: int


def reference_value(
    functional, measure: MeasureSpec, budget: int, seed: SeedSpec
) -> MonteCarloEstimate:
    """Plain Monte Carlo estimate of the mean of a functional with CLT stderr.

    Used as the ground-truth oracle by tests and the rate harness.
    """
    if budget < 100:
        raise ConfigurationError("reference budget must be >= 100")
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_index = 0
    while done < budget:
        b = min(_CHUNK, budget - done)
        batch = sample_batch(measure, seed.child(chunk_index), b)
        try:
            vals = functional(batch)
        except Exception as exc:  # locate the failing draw for the caller
            raise NumericError(
                f"functional evaluation failed on samples "
                f"[{done}, {done + b}): {exc}",
                sample=done,
            ) from exc
        if not np.all(np.isfinite(vals)):
            bad = int(np.argmax(~np.isfinite(vals)))
            raise NumericError(
                f"functional returned a non-finite value at sample {done + bad}",
                sample=done + bad,
            )
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += b
        chunk_index += 1
    mean = total / budget
    var = max(total_sq / budget - mean * mean, 0.0) * budget / (budget - 1)
    return MonteCarloEstimate(mean, math.sqrt(var / budget), budget)
