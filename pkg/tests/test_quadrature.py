import math

import numpy as np
import pytest
from conftest import dense_integral

from quantquad.errors import ConfigurationError
from quantquad.measures import SeedSpec, UniformCube, gbm_spec
from quantquad.paths import (
    Functional,
    Grid,
    NormKind,
    make_kl_subspace,
    path_coord_functional,
    vector_coord_functional,
)
from quantquad.quadrature import (
    SmallBallProfile,
    classical_mc,
    classical_mc_replicated,
    cost_of,
    euler_mc,
    euler_mc_schedule,
    gaussian_subspace_mc,
    subspace_mc_schedule,
    voronoi_quadrature,
    vr_mc,
    vr_mc_replicated,
)
from quantquad.quantize import Codebook, uniform_midpoint_codebook


def exact_two_point():
    return Codebook(
        np.array([[0.25], [0.75]]),
        1.0,
        NormKind.EUCLIDEAN,
        "uniform_cube:1",
        weights=np.array([0.5, 0.5]),
        oracle_dim=1,
    )


class TestVoronoiQuadrature:
    def test_linear_exact(self):
        f = vector_coord_functional(0)
        res = voronoi_quadrature(exact_two_point(), f)
        assert res.estimate == 0.5
        assert res.stderr == 0.0
        assert res.cardinality == 2

    def test_quadratic_error_is_analytic(self):
        f = Functional(lambda v: v[:, 0] ** 2 / 2.0, name="x^2/2")
        res = voronoi_quadrature(exact_two_point(), f)
        # (0.25^2 + 0.75^2) / 4 = 5/32; S(f) = 1/6; error exactly 1/96
        assert res.estimate == pytest.approx(5.0 / 32.0, abs=1e-15)
        assert abs(res.estimate - 1.0 / 6.0) == pytest.approx(1.0 / 96.0, abs=1e-12)

    def test_kink_functional_exact(self):
        f = Functional(lambda v: np.abs(v[:, 0] - 0.5), name="|x-1/2|")
        res = voronoi_quadrature(exact_two_point(), f)
        oracle = dense_integral(lambda x: np.abs(x - 0.5))
        assert oracle == pytest.approx(0.25, abs=1e-9)
        assert res.estimate == pytest.approx(0.25, abs=1e-15)

    def test_missing_weights_rejected(self):
        cb = Codebook(np.array([[0.25], [0.75]]), 1.0, NormKind.EUCLIDEAN, "u")
        with pytest.raises(ConfigurationError):
            voronoi_quadrature(cb, vector_coord_functional(0))


class TestClassicalMC:
    def test_constant_functional(self):
        f = Functional(lambda v: np.full(v.shape[0], 3.25), name="const")
        res = classical_mc(UniformCube(1), f, 100, SeedSpec(1))
        assert res.estimate == 3.25
        assert res.stderr == 0.0

    def test_determinism(self):
        f = vector_coord_functional(0)
        a = classical_mc(UniformCube(1), f, 500, SeedSpec(2))
        b = classical_mc(UniformCube(1), f, 500, SeedSpec(2))
        assert a.estimate == b.estimate and a.stderr == b.stderr

    def test_stderr_magnitude(self):
        # E(stderr) for n=12 samples of U(0,1) is about (1/sqrt 12)/sqrt(12);
        # average over many replications to beat the chi-square noise.
        f = vector_coord_functional(0)
        vals = [
            classical_mc(UniformCube(1), f, 12, SeedSpec(3).child(i)).stderr
            for i in range(1000)
        ]
        assert np.mean(vals) == pytest.approx(1.0 / 12.0, rel=0.05)

    def test_cost_ledger(self):
        f = vector_coord_functional(0)
        res = classical_mc(UniformCube(2), f, 50, SeedSpec(4))
        assert res.cost.oracle_cost == 100  # k = d = 2
        assert res.cost.rng_calls == 100
        assert cost_of(res) is res.cost

    def test_oracle_dim_restriction(self):
        f = vector_coord_functional(0)
        f.oracle_dim = 1
        with pytest.raises(ConfigurationError):
            classical_mc(UniformCube(2), f, 10, SeedSpec(5))


class TestVrMc:
    def test_interpolation_fixed_point(self):
        # f constant on each Voronoi cell: the residual vanishes sample-wise
        f = Functional(lambda v: (v[:, 0] < 0.5).astype(float), name="cell-ind")
        cb = exact_two_point()
        res = vr_mc(cb, UniformCube(1), f, 100, SeedSpec(6))
        det = voronoi_quadrature(cb, f)
        assert res.estimate == det.estimate
        assert res.stderr == 0.0
        assert res.cardinality == 100 + 2

    def test_variance_reduction_factor(self):
        # For f(x) = x with exact weights: Var(residual) = E dist^2 = 1/48
        # against Var(f) = 1/12, a factor-4 reduction at equal n.
        f = vector_coord_functional(0)
        cb = exact_two_point()
        n, reps = 8, 20000
        vr = vr_mc_replicated(cb, UniformCube(1), f, n, reps, SeedSpec(7))
        mc = classical_mc_replicated(UniformCube(1), f, n, reps, SeedSpec(8))
        ratio = mc.var(ddof=1) / vr.var(ddof=1)
        assert ratio == pytest.approx(4.0, rel=0.10)

    def test_unbiased(self):
        f = Functional(lambda v: np.abs(v[:, 0] - 1.0 / 3.0), name="f")
        cb = exact_two_point()
        reps = 10000
        estimates = vr_mc_replicated(cb, UniformCube(1), f, 16, reps, SeedSpec(9))
        exact = 5.0 / 18.0
        assert abs(estimates.mean() - exact) <= 3.0 * estimates.std(ddof=1) / math.sqrt(reps)

    @pytest.mark.parametrize("n", [2, 4])
    def test_error_bound_against_quantization_number(self, n):
        # RMSE <= 2 n^(-1/2) q_n^(2) + 3 se on the uniform cube
        from quantquad.quantize import distortion

        f = Functional(lambda v: np.abs(v[:, 0] - 1.0 / 3.0), name="f")
        cb = uniform_midpoint_codebook(1, n)
        q2 = distortion(cb, UniformCube(1), 2, 10**5, SeedSpec(10))
        est = vr_mc_replicated(cb, UniformCube(1), f, n, 10**4, SeedSpec(11))
        sq = (est - 5.0 / 18.0) ** 2
        rmse = math.sqrt(sq.mean())
        se_rmse = sq.std(ddof=1) / math.sqrt(sq.size) / (2.0 * rmse)
        bound = 2.0 * n**-0.5 * q2.value
        combined = math.sqrt(se_rmse**2 + (2.0 * n**-0.5 * q2.stderr) ** 2)
        assert rmse <= bound + 3.0 * combined


class TestEulerMC:
    def test_gbm_mean_and_bias(self):
        f = path_coord_functional(1.0, Grid.uniform())
        res = euler_mc(gbm_spec(0.1, 0.2), f, 11, 10**5, SeedSpec(12))
        exact_mean = 1.01**10
        assert abs(res.estimate - exact_mean) <= 3.0 * res.stderr
        # the scheme bias against e^0.1 is about 5.5e-4
        assert abs(exact_mean - math.exp(0.1)) == pytest.approx(5.488e-4, abs=1e-6)

    def test_noiseless_value_has_zero_stderr(self):
        f = path_coord_functional(1.0, Grid.uniform())
        res = euler_mc(gbm_spec(0.1, 0.0), f, 11, 100, SeedSpec(13))
        assert res.stderr == 0.0

    def test_cost_ledger(self):
        f = path_coord_functional(1.0, Grid.uniform())
        res = euler_mc(gbm_spec(0.1, 0.2), f, 83, 12, SeedSpec(14))
        assert res.cost.oracle_cost == 996
        assert res.cost.rng_calls == 12 * 82

    def test_small_k_and_n_rejected(self):
        f = path_coord_functional(1.0, Grid.uniform())
        with pytest.raises(ConfigurationError):
            euler_mc(gbm_spec(0.1, 0.2), f, 1, 10, SeedSpec(0))
        with pytest.raises(ConfigurationError):
            euler_mc(gbm_spec(0.1, 0.2), f, 5, 1, SeedSpec(0))


class TestSchedules:
    def test_euler_schedule_examples(self):
        assert euler_mc_schedule(1000) == (12, 83)
        assert euler_mc_schedule(10**4) == (32, 303)

    def test_euler_schedule_respects_budget_and_monotone(self):
        prev_n = prev_k = 0
        for exponent in range(2, 9):
            N = 10**exponent
            n, k = euler_mc_schedule(N)
            assert k * n <= N
            assert n >= prev_n and k >= prev_k
            prev_n, prev_k = n, k

    def test_euler_schedule_minimum_named(self):
        with pytest.raises(ConfigurationError, match="minimum feasible N is"):
            euler_mc_schedule(8)

    def test_subspace_schedule_examples(self):
        bm = SmallBallProfile(2.0, 0.0)
        assert subspace_mc_schedule(10**4, bm) == (10, 921)
        assert subspace_mc_schedule(10**6, bm) == (72, 13815)

    def test_subspace_schedule_budget(self):
        profile = SmallBallProfile(1.5, 1.0)
        prev_n = prev_k = 0
        for exponent in range(3, 9):
            n, k = subspace_mc_schedule(10**exponent, profile)
            assert k * n <= 10**exponent
            assert n >= prev_n and k >= prev_k
            prev_n, prev_k = n, k

    def test_profile_validation(self):
        with pytest.raises(ConfigurationError):
            SmallBallProfile(0.0)


class TestGaussianSubspaceMC:
    def test_blind_functional_is_exactly_zero(self, grid):
        from quantquad.adversary import subspace_blind_functional

        sub = make_kl_subspace(8, grid)
        res = gaussian_subspace_mc(sub, subspace_blind_functional(sub), 50, SeedSpec(15))
        assert res.estimate == 0.0
        assert res.stderr == 0.0

    def test_terminal_value_zero_mean(self, grid):
        f = path_coord_functional(1.0, grid)
        res = gaussian_subspace_mc(make_kl_subspace(50, grid), f, 20000, SeedSpec(16))
        assert abs(res.estimate) <= 3.0 * res.stderr

    def test_running_max_with_allowance(self, grid):
        from quantquad.paths import running_max_functional

        res = gaussian_subspace_mc(
            make_kl_subspace(200, grid), running_max_functional(), 10**5, SeedSpec(17)
        )
        # documented discretization allowance at G=257, 200 terms
        assert abs(res.estimate - 0.7978845608028654) <= 3.0 * res.stderr + 0.05

    def test_cost_ledger(self, grid):
        f = path_coord_functional(1.0, grid)
        res = gaussian_subspace_mc(make_kl_subspace(7, grid), f, 100, SeedSpec(18))
        assert res.subspace_dim == 7
        assert res.cost.oracle_cost == 700
        assert res.cost.rng_calls == 700

    def test_requires_kl_subspace(self, grid):
        from quantquad.paths import make_pl_subspace

        sub = make_pl_subspace([0.0, 0.5, 1.0], grid)
        f = path_coord_functional(1.0, grid)
        with pytest.raises(ConfigurationError):
            gaussian_subspace_mc(sub, f, 10, SeedSpec(19))
