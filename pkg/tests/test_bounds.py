"""Bound evaluators: closed forms, grid oracles, ordering invariants."""

import math

import numpy as np
import pytest

from asynccap import (
    BoundKind,
    Channel,
    Dist,
    GridSpec,
    GridResolutionError,
    InfeasibleRateError,
    alpha_bar,
    blahut_arimoto,
    chernoff_info,
    discontinuity_at_capacity,
    discontinuity_at_zero,
    gaussian_lower_bound,
    kl,
    lower_bound_alpha,
    output_dist,
    sweep,
    sync_threshold,
    training_bounds,
    upper_bound_alpha,
)
from asynccap.bounds import training_m2
from asynccap.chernoff import cond_chernoff_values

# Pinned by a coarse-grid exhaustive run (see test_upper_matches_exhaustive
# oracle for the method); refined value recorded as a regression constant.
FIG3_UPPER_AT_C = 0.3405163608024093
FIG3_UPPER_09C_COARSE = 0.4205116534841634
FIG3_UPPER_09C_REFINED = 0.42544505411080824


@pytest.fixture(scope="module")
def cap3(fig3):
    return blahut_arimoto(fig3).capacity


@pytest.fixture(scope="module")
def cap4(fig4):
    return blahut_arimoto(fig4).capacity


class TestSyncThreshold:
    def test_fig3_closed_form(self, fig3):
        assert sync_threshold(fig3) == pytest.approx(0.8 * math.log(9.0), abs=1e-12)

    def test_all_rows_equal(self):
        q = Channel(np.array([[0.7, 0.3], [0.7, 0.3]]), star=0)
        assert sync_threshold(q) == 0.0

    def test_zchannel_infinite(self, zchannel):
        assert sync_threshold(zchannel) == math.inf


class TestLowerBound:
    def test_fig3_at_capacity(self, fig3, cap3):
        bp = lower_bound_alpha(fig3, cap3)
        assert 0.11 <= bp.alpha <= 0.13
        assert bp.kind is BoundKind.ACHIEVABILITY_LOWER

    def test_fig4_at_capacity_vanishes(self, fig4, cap4):
        bp = lower_bound_alpha(fig4, cap4)
        assert bp.alpha <= 1e-6

    def test_rate_above_capacity_rejected(self, fig3, cap3):
        with pytest.raises(InfeasibleRateError):
            lower_bound_alpha(fig3, cap3 + 0.01)

    def test_nonpositive_rate_rejected(self, fig3):
        with pytest.raises(InfeasibleRateError):
            lower_bound_alpha(fig3, 0.0)

    def test_witness_reproduces_value(self, fig3, cap3):
        bp = lower_bound_alpha(fig3, 0.5 * cap3)
        p = bp.witness["input_dist"]
        redo = chernoff_info(output_dist(p, fig3), fig3.star_dist).value
        assert redo == pytest.approx(bp.alpha, abs=1e-9)

    def test_low_rate_approaches_vertex_value(self, fig3):
        bp = lower_bound_alpha(fig3, 0.005)
        vertex = chernoff_info(Dist([0.1, 0.9]), Dist([0.9, 0.1])).value
        assert bp.alpha <= vertex + 1e-9
        assert bp.alpha >= 0.45

    def test_bounded_by_sync_threshold(self, fig3, fig4, cap3, cap4):
        for q, cap in ((fig3, cap3), (fig4, cap4)):
            st = sync_threshold(q)
            for frac in (0.2, 0.6, 1.0):
                assert lower_bound_alpha(q, frac * cap).alpha <= st + 1e-9


class TestUpperBound:
    def test_fig4_at_capacity_zero(self, fig4, cap4):
        bp = upper_bound_alpha(fig4, cap4)
        assert bp.alpha <= 1e-6

    def test_fig3_at_capacity_regression(self, fig3, cap3):
        bp = upper_bound_alpha(fig3, cap3)
        assert bp.alpha == pytest.approx(FIG3_UPPER_AT_C, abs=1e-9)

    def test_fig3_regression_at_09c(self, fig3, cap3):
        coarse = upper_bound_alpha(fig3, 0.9 * cap3, GridSpec(refine_rounds=0))
        refined = upper_bound_alpha(fig3, 0.9 * cap3)
        assert coarse.alpha == pytest.approx(FIG3_UPPER_09C_COARSE, abs=1e-9)
        assert refined.alpha == pytest.approx(FIG3_UPPER_09C_REFINED, abs=1e-9)
        # refinement only grows a grid maximum
        assert 0.0 <= refined.alpha - coarse.alpha <= 0.01

    def test_matches_exhaustive_oracle(self, fig3, cap3):
        # Brute force over (P1, P1', delta) on a shared 0.05 grid, with the
        # mixture partner enumerated over the whole simplex grid rather than
        # vertices.  Convexity of the miss exponent in the mixture makes the
        # vertex evaluator exact, so the two must agree.
        from asynccap.bounds import _kl_rows_to, _mutual_info_batch, _simplex_grid

        rate = 0.9 * cap3
        step = 0.05
        grid = _simplex_grid(2, step)
        feas = grid[_mutual_info_batch(grid, fig3.rows) >= rate - 1e-9]
        i_f = _mutual_info_batch(feas, fig3.rows)
        d_out = _kl_rows_to(feas @ fig3.rows, fig3.rows[0])
        deltas = np.arange(0.0, 1.0001, step)
        deltas[-1] = 1.0
        best = -math.inf
        for i, p1 in enumerate(feas):
            for d in deltas:
                a1 = d * (i_f[i] - rate + d_out[i])
                p2s = d * p1[None, :] + (1 - d) * grid
                a2 = cond_chernoff_values(p2s, fig3)
                best = max(best, float(np.minimum(a1, a2).max()))
        mine = upper_bound_alpha(
            fig3, rate, GridSpec(simplex_step=step, delta_step=step, refine_rounds=0)
        ).alpha
        assert mine == pytest.approx(best, abs=1e-9)

    def test_zchannel_branch_equals_alpha_bar(self, zchannel):
        ab = alpha_bar(zchannel)
        for rate in (0.05, 0.2, 0.4):
            assert upper_bound_alpha(zchannel, rate).alpha == ab.alpha

    def test_nonpositive_rate_rejected(self, fig3):
        with pytest.raises(InfeasibleRateError):
            upper_bound_alpha(fig3, -0.1)

    def test_witness_structure(self, fig3, cap3):
        bp = upper_bound_alpha(fig3, cap3)
        w = bp.witness
        p2 = w["delta"] * w["p1"].probs + (1 - w["delta"]) * w["p1_prime"].probs
        assert np.allclose(p2, w["p2"].probs, atol=1e-12)


class TestAlphaBar:
    def test_zchannel_grid_oracle(self, zchannel):
        # 1-D brute force over the input weight with the tilting formula.
        ps = np.linspace(0.0, 1.0, 1001)
        lams = np.linspace(1e-12, 1 - 1e-12, 2001)
        # star row contributes 0; the other row has common support {0}.
        h1 = -lams * math.log(0.5)
        oracle = float((ps[:, None] * h1[None, :]).max())
        got = alpha_bar(zchannel)
        assert got.alpha == pytest.approx(oracle, abs=1e-8)
        assert got.alpha == pytest.approx(math.log(2.0), abs=1e-8)
        assert np.allclose(got.witness["input_dist"].probs, [0.0, 1.0])

    def test_noiseless_channel_infinite(self):
        q = Channel(np.array([[1.0, 0.0], [0.0, 1.0]]), star=0)
        assert alpha_bar(q).alpha == math.inf

    def test_identical_rows_zero(self):
        q = Channel(np.array([[0.6, 0.4], [0.6, 0.4]]), star=0)
        assert alpha_bar(q).alpha == pytest.approx(0.0, abs=1e-9)

    def test_four_input_ascent_finds_vertex_maximum(self):
        rng = np.random.default_rng(13)
        rows = rng.dirichlet(np.ones(3), size=4)
        q = Channel(rows, star=0)
        vertex_best = max(
            cond_chernoff_values(np.eye(4)[i][None, :], q)[0] for i in range(4)
        )
        got = alpha_bar(q).alpha
        assert got == pytest.approx(vertex_best, abs=1e-6)


class TestTraining:
    def test_at_capacity_everything_zero(self, fig3, cap3):
        lower, upper, eta = training_bounds(fig3, cap3)
        assert lower.alpha == 0.0 and eta == pytest.approx(0.0, abs=1e-12)
        assert upper.alpha <= 1e-9

    def test_m2_closed_forms(self, fig3, fig4, zchannel):
        assert training_m2(fig3) == pytest.approx(-math.log(0.1), abs=1e-12)
        assert training_m2(fig4) == pytest.approx(math.log(2.0), abs=1e-12)
        assert training_m2(zchannel) == math.inf

    def test_lower_below_upper(self, fig3, fig4, cap3, cap4):
        for q, cap in ((fig3, cap3), (fig4, cap4)):
            for frac in (0.25, 0.5, 0.75, 1.0):
                lower, upper, _ = training_bounds(q, frac * cap)
                assert lower.alpha <= upper.alpha + 1e-6

    def test_eta_formula(self, fig3, cap3):
        _, _, eta = training_bounds(fig3, 0.25 * cap3)
        assert eta == pytest.approx(0.75, abs=1e-9)

    def test_rate_out_of_range(self, fig3, cap3):
        with pytest.raises(InfeasibleRateError):
            training_bounds(fig3, cap3 * 1.1)
        with pytest.raises(InfeasibleRateError):
            training_bounds(fig3, 0.0)


class TestDiscontinuity:
    def test_at_capacity(self, fig3, fig4):
        assert discontinuity_at_capacity(fig3) is True
        assert discontinuity_at_capacity(fig4) is False

    def test_half_crossover_continuous(self):
        q = Channel(np.array([[0.5, 0.5], [0.5, 0.5]]), star=0)
        assert discontinuity_at_capacity(q) is False

    def test_at_zero_zchannel(self, zchannel):
        assert discontinuity_at_zero(zchannel) is True

    def test_at_zero_noiseless(self):
        q = Channel(np.array([[1.0, 0.0], [0.0, 1.0]]), star=0)
        assert discontinuity_at_zero(q) is False

    def test_at_zero_identical_rows(self):
        q = Channel(np.array([[0.6, 0.4], [0.6, 0.4]]), star=0)
        assert discontinuity_at_zero(q) is False


class TestGaussianBound:
    def test_zero_power_zero_rate(self):
        bp = gaussian_lower_bound(0.0, 0.0)
        assert bp.alpha == pytest.approx(0.0, abs=1e-9)

    def test_rate_infeasible_for_power(self):
        with pytest.raises(InfeasibleRateError):
            gaussian_lower_bound(1.0, 0.6)  # cap = 0.5*ln 2 = 0.3466

    def test_quantization_must_be_even(self):
        with pytest.raises(ValueError):
            gaussian_lower_bound(1.0, 0.2, quant=(20.0, 0.0123))

    def test_refinement_stability(self):
        coarse = gaussian_lower_bound(1.0, 0.2, quant=(20.0, 1e-2)).alpha
        fine = gaussian_lower_bound(1.0, 0.2, quant=(40.0, 1e-3)).alpha
        assert abs(coarse - fine) <= 1e-3

    def test_zero_mean_at_max_rate(self):
        power = 1.0
        rate = 0.5 * math.log1p(power)
        bp = gaussian_lower_bound(power, rate, quant=(20.0, 1e-3))
        assert bp.witness["mean"] == pytest.approx(0.0, abs=1e-9)
        # quantized equidistant point of N(0,2) vs N(0,1): positive, small
        assert 0.0 < bp.alpha < 0.2

    def test_mean_grows_as_rate_drops(self):
        a = gaussian_lower_bound(1.0, 0.05).witness["mean"]
        b = gaussian_lower_bound(1.0, 0.3).witness["mean"]
        assert a > b


class TestSweep:
    def test_single_rate_consistency(self, fig3, cap3):
        res = sweep(fig3, [cap3])
        row = res.rows[0]
        assert row.status == "ok"
        assert row.alpha_lower == pytest.approx(lower_bound_alpha(fig3, cap3).alpha, abs=1e-12)

    def test_monotone_lower_column(self, fig3, cap3):
        rates = [cap3 * (i + 1) / 8 for i in range(8)]
        res = sweep(fig3, rates)
        lows = [r.alpha_lower for r in res.rows]
        assert all(lows[i] >= lows[i + 1] - 1e-12 for i in range(len(lows) - 1))

    def test_fig4_columns_vanish_at_capacity(self, fig4, cap4):
        res = sweep(fig4, [0.5 * cap4, cap4])
        last = res.rows[-1]
        assert last.alpha_lower <= 1e-6
        assert last.train_upper <= 1e-6

    def test_zchannel_constant_upper(self, zchannel):
        res = sweep(zchannel, [0.05, 0.15, 0.3])
        ups = [r.alpha_upper for r in res.rows]
        assert max(ups) - min(ups) <= 1e-12
        assert math.isinf(res.sync_threshold)
        assert math.isinf(res.m2)

    def test_error_rows_reported_not_raised(self, fig3, cap3):
        res = sweep(fig3, [0.5 * cap3, 2 * cap3])
        assert res.rows[0].status == "ok"
        assert res.rows[1].status != "ok"
        assert math.isnan(res.rows[1].alpha_lower)

    def test_workers_match_serial(self, fig3, cap3):
        rates = [cap3 * (i + 1) / 4 for i in range(4)]
        assert sweep(fig3, rates) == sweep(fig3, rates, workers=4)
