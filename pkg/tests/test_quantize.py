import math

import numpy as np
import pytest
from conftest import brute_nearest, dense_integral, normal_expectation

from quantquad.errors import ConfigurationError
from quantquad.measures import BrownianKL, SeedSpec, StdNormal, UniformCube, sample_batch
from quantquad.paths import NormKind, Path, kl_basis_on_grid, kl_eigenvalues
from quantquad.quantize import (
    Codebook,
    LloydOptions,
    dist_to_codebook_functional,
    distortion,
    lloyd,
    min_dist_batch,
    nearest,
    product_quantizer_bm,
    scalar_gaussian_quantizer,
    scalar_quantizer_distortion2,
    uniform_midpoint_codebook,
    voronoi_weights,
)

SQRT_2_OVER_PI = 0.7978845608028654


def two_point_uniform(r=1.0):
    return Codebook(
        np.array([[0.25], [0.75]]), r, NormKind.EUCLIDEAN, "uniform_cube:1"
    )


class TestCodebook:
    def test_duplicate_points_rejected(self):
        with pytest.raises(ConfigurationError):
            Codebook(np.array([[0.5], [0.5]]), 1.0, NormKind.EUCLIDEAN, "u")

    def test_weights_validation(self):
        with pytest.raises(ConfigurationError):
            Codebook(
                np.array([[0.0], [1.0]]),
                1.0,
                NormKind.EUCLIDEAN,
                "u",
                weights=np.array([0.6, 0.5]),
            )


class TestNearest:
    def test_basic(self):
        cb = two_point_uniform()
        assert nearest(cb, np.array([0.3])) == 0
        assert nearest(cb, np.array([0.8])) == 1

    def test_tie_breaks_low(self):
        assert nearest(two_point_uniform(), np.array([0.5])) == 0

    def test_exact_hit(self):
        cb = two_point_uniform()
        assert nearest(cb, np.array([0.75])) == 1
        d, _ = min_dist_batch(np.array([[0.75]]), cb)
        assert d[0] == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(8)
        points = rng.standard_normal((17, 3))
        cb = Codebook(points, 2.0, NormKind.EUCLIDEAN, "std_normal:3")
        xs = rng.standard_normal((50, 3))
        d, idx = min_dist_batch(xs, cb)
        for row in range(50):
            bi, bd = brute_nearest(points, xs[row])
            assert idx[row] == bi
            assert d[row] == pytest.approx(bd, rel=1e-12)

    def test_path_norms_agree_with_direct(self, grid):
        pool = sample_batch(BrownianKL(10, grid), SeedSpec(3), 8)
        cb_pts = sample_batch(BrownianKL(10, grid), SeedSpec(4), 5)
        for kind in (NormKind.SUP, NormKind.L1, NormKind.L2):
            cb = Codebook(cb_pts, 2.0, kind, "brownian_kl:10", grid=grid)
            d, idx = min_dist_batch(pool, cb)
            from quantquad.paths import distance

            for row in range(8):
                direct = min(
                    distance(Path(grid, pool[row]), Path(grid, cb_pts[j]), kind)
                    for j in range(5)
                )
                assert d[row] == pytest.approx(direct, rel=1e-12)


class TestDistortion:
    # Oracle: E min_i |X - c_i| over U(0,1) with cells around 0.25 and 0.75
    # is 2 * (2 * (1/8)^2 / 2) = 1/8; the r=2 version integrates to 1/48.
    def test_uniform_two_point_r1(self):
        oracle = dense_integral(
            lambda x: np.minimum(np.abs(x - 0.25), np.abs(x - 0.75))
        )
        assert oracle == pytest.approx(0.125, abs=1e-9)
        est = distortion(two_point_uniform(), UniformCube(1), 1, 10**5, SeedSpec(5))
        assert abs(est.value - 0.125) <= 3.0 * est.stderr

    def test_uniform_two_point_r2(self):
        oracle = dense_integral(
            lambda x: np.minimum(np.abs(x - 0.25), np.abs(x - 0.75)) ** 2
        )
        target = math.sqrt(oracle)
        assert target == pytest.approx(1.0 / (4.0 * math.sqrt(3.0)), abs=1e-9)
        est = distortion(two_point_uniform(2.0), UniformCube(1), 2, 10**5, SeedSpec(5))
        assert abs(est.value - target) <= 3.0 * est.stderr

    def test_normal_origin_r1(self):
        # E |Z| = sqrt(2/pi)
        oracle = normal_expectation(np.abs)
        assert oracle == pytest.approx(SQRT_2_OVER_PI, abs=1e-9)
        cb = Codebook(np.array([[0.0]]), 1.0, NormKind.EUCLIDEAN, "std_normal:1")
        est = distortion(cb, StdNormal(1), 1, 10**5, SeedSpec(6))
        assert abs(est.value - SQRT_2_OVER_PI) <= 3.0 * est.stderr

    def test_stderr_scales_inverse_sqrt(self):
        cb = two_point_uniform()
        a = distortion(cb, UniformCube(1), 1, 10**4, SeedSpec(7))
        b = distortion(cb, UniformCube(1), 1, 4 * 10**4, SeedSpec(7))
        assert 1.6 <= a.stderr / b.stderr <= 2.4  # factor 2 within noise

    def test_extra_point_never_hurts(self):
        seed = SeedSpec(8)
        base = Codebook(
            np.array([[0.1], [0.6]]), 1.0, NormKind.EUCLIDEAN, "uniform_cube:1"
        )
        bigger = Codebook(
            np.array([[0.1], [0.6], [0.9]]), 1.0, NormKind.EUCLIDEAN, "uniform_cube:1"
        )
        qa = distortion(base, UniformCube(1), 1, 10**4, seed)
        qb = distortion(bigger, UniformCube(1), 1, 10**4, seed)
        # same pool: pointwise min over a superset cannot be larger
        assert qb.value <= qa.value + 1e-15

    def test_order_monotonicity(self):
        seed = SeedSpec(9)
        cb = two_point_uniform()
        q1 = distortion(cb, UniformCube(1), 1, 10**4, seed)
        q2 = distortion(cb, UniformCube(1), 2, 10**4, seed)
        assert q1.value <= q2.value + 1e-15  # power-mean inequality, same pool


class TestVoronoiWeights:
    def test_symmetric_split(self):
        cb = two_point_uniform()
        w = voronoi_weights(cb, UniformCube(1), 10**5, SeedSpec(10))
        se = math.sqrt(0.25 / 10**5)
        assert abs(w[0] - 0.5) <= 3.0 * se
        assert w.sum() == 1.0
        assert cb.weights is not None

    def test_asymmetric_cells(self):
        cb = Codebook(
            np.array([[0.0], [0.5]]), 1.0, NormKind.EUCLIDEAN, "uniform_cube:1"
        )
        w = voronoi_weights(cb, UniformCube(1), 10**5, SeedSpec(11))
        se = math.sqrt(0.25 * 0.75 / 10**5)
        assert abs(w[0] - 0.25) <= 3.0 * se
        assert abs(w[1] - 0.75) <= 3.0 * se

    def test_single_point(self):
        cb = Codebook(np.array([[0.3]]), 1.0, NormKind.EUCLIDEAN, "uniform_cube:1")
        w = voronoi_weights(cb, UniformCube(1), 1000, SeedSpec(12))
        assert w[0] == 1.0

    def test_empty_cell_flagged(self):
        cb = Codebook(
            np.array([[0.5], [50.0]]), 1.0, NormKind.EUCLIDEAN, "uniform_cube:1"
        )
        with pytest.warns(UserWarning, match="empty cell"):
            w = voronoi_weights(cb, UniformCube(1), 1000, SeedSpec(13))
        assert w[1] == 0.0
        assert w.sum() == 1.0


class TestLloyd:
    def test_uniform_midpoints(self):
        opts = LloydOptions(pool_size=4 * 10**6, restarts=2)
        cb = lloyd(UniformCube(1), 2, 1, opts, SeedSpec(14))
        assert np.abs(cb.points.ravel() - np.array([0.25, 0.75])).max() <= 1e-3

    def test_normal_single_point_is_mean(self):
        opts = LloydOptions(pool_size=4 * 10**6, restarts=1)
        cb = lloyd(StdNormal(1), 1, 2, opts, SeedSpec(15))
        assert abs(cb.points[0, 0]) <= 1e-3

    def test_normal_two_points(self):
        opts = LloydOptions(pool_size=10**6, restarts=2)
        cb = lloyd(StdNormal(1), 2, 2, opts, SeedSpec(16))
        target = np.array([-SQRT_2_OVER_PI, SQRT_2_OVER_PI])
        assert np.abs(cb.points.ravel() - target).max() <= 5e-3

    def test_history_non_increasing(self):
        for measure, r in (
            (UniformCube(2), 2),
            (UniformCube(2), 1),
            (StdNormal(1), 1),
            (BrownianKL(10), 2),
        ):
            opts = LloydOptions(pool_size=2000, restarts=2, iters=50)
            cb = lloyd(measure, 4, r, opts, SeedSpec(17))
            hist = cb.fit_history
            assert len(hist) >= 1
            assert all(b <= a for a, b in zip(hist, hist[1:]))

    def test_deterministic(self):
        opts = LloydOptions(pool_size=5000, restarts=2)
        a = lloyd(UniformCube(2), 3, 2, opts, SeedSpec(18))
        b = lloyd(UniformCube(2), 3, 2, opts, SeedSpec(18))
        assert np.array_equal(a.points, b.points)

    def test_unsupported_order(self):
        with pytest.raises(ConfigurationError):
            lloyd(UniformCube(1), 2, 3, seed=SeedSpec(0))


class TestScalarGaussianQuantizer:
    def test_single_level_is_origin(self):
        cb = scalar_gaussian_quantizer(1)
        assert cb.points[0, 0] == 0.0
        assert cb.weights[0] == 1.0

    def test_two_levels(self):
        cb = scalar_gaussian_quantizer(2)
        target = np.array([-SQRT_2_OVER_PI, SQRT_2_OVER_PI])
        assert np.abs(cb.points.ravel() - target).max() <= 5e-3

    def test_two_level_distortion(self):
        # E min_j (Z - c_j)^2 at c = +-sqrt(2/pi) is 1 - 2/pi
        oracle = normal_expectation(
            lambda z: np.minimum(
                (z - SQRT_2_OVER_PI) ** 2, (z + SQRT_2_OVER_PI) ** 2
            )
        )
        assert oracle == pytest.approx(1.0 - 2.0 / math.pi, abs=1e-9)
        cb = scalar_gaussian_quantizer(2)
        est = distortion(cb, StdNormal(1), 2, 10**5, SeedSpec(19))
        assert abs(est.value**2 - oracle) <= 3.0 * (2 * est.value * est.stderr)

    def test_cached_distortions_decrease(self):
        values = [scalar_quantizer_distortion2(n) for n in range(1, 10)]
        assert all(b < a for a, b in zip(values, values[1:]))


class TestProductQuantizer:
    def test_budget_one_is_zero_path(self, grid):
        cb = product_quantizer_bm(1, 200, grid)
        assert cb.n == 1
        assert np.abs(cb.points).max() == 0.0

    def test_budget_two_levels_and_shape(self, grid):
        cb = product_quantizer_bm(2, 200, grid)
        assert cb.n == 2
        assert cb.meta["levels"][0] == 2
        # the points are sqrt(l_1) c_j e_1 for the two scalar levels c_j
        lam1 = kl_eigenvalues(1)[0]
        levels = scalar_gaussian_quantizer(2).points[:, 0]
        e1 = kl_basis_on_grid(1, grid)[0]
        expected = math.sqrt(lam1) * levels[:, None] * e1[None, :]
        got = cb.points[np.argsort(cb.points[:, -1, 0]), :, 0]
        assert np.abs(got - expected).max() <= 1e-12

    def test_weights_sum_to_one(self, grid):
        cb = product_quantizer_bm(64, 50, grid)
        assert cb.weights.sum() == 1.0
        assert np.all(cb.weights > 0)

    def test_distortion_matches_coordinate_oracle(self, grid):
        # Independent oracle: by orthonormality of the expansion basis on
        # the grid, the squared L2 distance to the product codebook splits
        # across coordinates into scalar quantizer distortions plus the
        # truncated tail of unallocated coordinates.
        k_terms = 50
        cb = product_quantizer_bm(64, k_terms, grid)
        levels = cb.meta["levels"]
        lam = kl_eigenvalues(k_terms)
        seed = SeedSpec(20)
        M = 20000
        coeffs = seed.child(0).rng().standard_normal((M, k_terms))
        per_coord = np.zeros(M)
        for ell in range(k_terms):
            n_ell = levels[ell] if ell < len(levels) else 1
            if n_ell > 1:
                pts = scalar_gaussian_quantizer(n_ell).points[:, 0]
                d2 = np.min(
                    (coeffs[:, ell][:, None] - pts[None, :]) ** 2, axis=1
                )
            else:
                d2 = coeffs[:, ell] ** 2
            per_coord += lam[ell] * d2
        oracle = math.sqrt(per_coord.mean())
        # same coefficient draws through the real sampler
        basis = np.sqrt(lam)[:, None] * kl_basis_on_grid(k_terms, grid)
        batch = (coeffs @ basis)[:, :, None]
        d, _ = min_dist_batch(batch, cb)
        assert math.sqrt(np.mean(d**2)) == pytest.approx(oracle, rel=1e-10)

    def test_nested_budgets_monotone(self, grid):
        seed = SeedSpec(21)
        measure = BrownianKL(50, grid)
        values = []
        for j in range(0, 8):
            cb = product_quantizer_bm(2**j, 50, grid)
            values.append(distortion(cb, measure, 2, 20000, seed).value)
        assert all(b < a for a, b in zip(values, values[1:]))


class TestMidpointCodebook:
    def test_exact_weights_and_points(self):
        cb = uniform_midpoint_codebook(2, 2)
        assert cb.n == 4
        assert cb.weights.sum() == 1.0
        assert np.all(cb.weights == 0.25)
        assert sorted(map(tuple, cb.points.tolist())) == [
            (0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75),
        ]


class TestDistToCodebookFunctional:
    def test_matches_min_dist(self):
        cb = two_point_uniform()
        f = dist_to_codebook_functional(cb)
        xs = np.array([[0.0], [0.5], [0.75]])
        assert np.allclose(f(xs), [0.25, 0.25, 0.0])
