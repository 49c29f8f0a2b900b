"""Min-max divergence solvers against brute-force grid oracles."""

import math

import numpy as np
import pytest

from asynccap import Channel, Dist, chernoff_info, cond_chernoff, kl, tilted_dist
from asynccap.chernoff import chernoff_values_to, cond_chernoff_values, grid_max_concave


def grid_minmax(p0, p1, step=1e-4):
    """Brute-force min over binary V of max of the two divergences."""
    v = np.arange(0.0, 1.0 + step / 2, step)
    vs = np.stack([v, 1.0 - v], axis=1)

    def divs(target):
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.where(vs > 0, np.log(np.where(vs > 0, vs, 1.0)), 0.0)
            lq = np.log(target)
            contrib = np.where(vs > 0, vs * (lp - lq[None, :]), 0.0)
        return contrib.sum(axis=1)

    d0 = divs(np.asarray(p0, dtype=float))
    d1 = divs(np.asarray(p1, dtype=float))
    return float(np.maximum(d0, d1).min())


class TestTiltedDist:
    def test_boundaries_exact(self):
        p0, p1 = Dist([0.9, 0.1]), Dist([0.3, 0.7])
        assert np.array_equal(tilted_dist(p0, p1, 1.0).probs, p0.probs)
        assert np.array_equal(tilted_dist(p0, p1, 0.0).probs, p1.probs)

    def test_symmetric_midpoint(self):
        v = tilted_dist(Dist([0.9, 0.1]), Dist([0.1, 0.9]), 0.5)
        assert np.allclose(v.probs, [0.5, 0.5], atol=1e-14)

    def test_disjoint_supports_rejected(self):
        with pytest.raises(ValueError):
            tilted_dist(Dist([1, 0]), Dist([0, 1]), 0.5)

    def test_lambda_range(self):
        with pytest.raises(ValueError):
            tilted_dist(Dist([0.5, 0.5]), Dist([0.5, 0.5]), 1.5)


class TestChernoffInfo:
    def test_identical(self):
        r = chernoff_info(Dist([0.3, 0.7]), Dist([0.3, 0.7]))
        assert r.value == 0.0
        assert r.d_left == 0.0 and r.d_right == 0.0

    def test_disjoint(self):
        r = chernoff_info(Dist([1, 0]), Dist([0, 1]))
        assert r.value == math.inf and r.equalizer is None

    def test_symmetric_closed_form(self):
        # Bhattacharyya point of the two fig3 rows: -ln(2 sqrt(0.09)).
        r = chernoff_info(Dist([0.1, 0.9]), Dist([0.9, 0.1]))
        assert r.value == pytest.approx(math.log(5.0 / 3.0), abs=1e-9)
        assert r.lambda_star == pytest.approx(0.5, abs=1e-6)

    def test_grid_oracle_single(self):
        got = chernoff_info(Dist([0.5, 0.5]), Dist([0.9, 0.1])).value
        assert abs(got - grid_minmax([0.5, 0.5], [0.9, 0.1])) <= 1e-4

    def test_grid_oracle_random_pairs(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            a, b = rng.uniform(0.05, 0.95, size=2)
            r = chernoff_info(Dist([a, 1 - a]), Dist([b, 1 - b]))
            worst = max(worst, abs(r.value - grid_minmax([a, 1 - a], [b, 1 - b])))
            if 1e-6 < r.lambda_star < 1 - 1e-6:
                assert abs(r.d_left - r.d_right) <= 1e-7
        assert worst <= 1e-4

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            p = Dist(rng.dirichlet(np.ones(3)))
            q = Dist(rng.dirichlet(np.ones(3)))
            assert chernoff_info(p, q).value == pytest.approx(chernoff_info(q, p).value, abs=2e-9)

    def test_upper_bounded_by_divergences(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            p = Dist(rng.dirichlet(np.ones(3)))
            q = Dist(rng.dirichlet(np.ones(3)))
            v = chernoff_info(p, q).value
            assert v <= min(kl(p, q), kl(q, p)) + 1e-9

    def test_one_sided_support_boundary(self):
        # supp(p0) strictly inside supp(p1): the only feasible V is p0 itself.
        r = chernoff_info(Dist([1.0, 0.0]), Dist([0.5, 0.5]))
        assert r.value == pytest.approx(math.log(2.0), abs=1e-7)
        assert abs(r.d_left - r.d_right) > 0.1  # boundary: no equalization

    def test_feasibility_predicate_matches_value(self):
        # "Every V is alpha-far from one of the pair" holds iff alpha <= value.
        rng = np.random.default_rng(10)
        v = np.arange(0.0, 1.0 + 5e-5, 1e-4)
        vs = np.stack([v, 1.0 - v], axis=1)
        for _ in range(20):
            a, b = rng.uniform(0.1, 0.9, size=2)
            val = chernoff_info(Dist([a, 1 - a]), Dist([b, 1 - b])).value
            with np.errstate(divide="ignore", invalid="ignore"):
                lp = np.where(vs > 0, np.log(np.where(vs > 0, vs, 1.0)), 0.0)
                d0 = np.where(vs > 0, vs * (lp - np.log([a, 1 - a])), 0.0).sum(1)
                d1 = np.where(vs > 0, vs * (lp - np.log([b, 1 - b])), 0.0).sum(1)
            floor = float(np.maximum(d0, d1).min())
            for alpha in (val - 1e-3, val + 1e-3):
                predicate = alpha <= floor + 5e-4
                assert predicate == (alpha <= val + 5e-4)


class TestCondChernoff:
    def test_point_mass_at_star(self, fig3):
        r = cond_chernoff(fig3, Dist.point_mass(0, 2))
        assert r.value == pytest.approx(0.0, abs=1e-12)

    def test_point_mass_reduces_to_unconditional(self, fig3):
        r = cond_chernoff(fig3, Dist.point_mass(1, 2))
        expect = chernoff_info(Dist([0.1, 0.9]), Dist([0.9, 0.1])).value
        assert r.value == pytest.approx(expect, abs=1e-8)
        assert r.value == pytest.approx(math.log(5.0 / 3.0), abs=1e-8)

    def test_all_rows_noise(self):
        q = Channel(np.array([[0.6, 0.4], [0.6, 0.4]]), star=0)
        assert cond_chernoff(q, Dist([0.5, 0.5])).value == pytest.approx(0.0, abs=1e-12)

    def test_equalization_at_interior(self, fig3):
        r = cond_chernoff(fig3, Dist([0.4, 0.6]))
        assert 1e-6 < r.lambda_star < 1 - 1e-6
        assert abs(r.d_left - r.d_right) <= 1e-7

    def test_infinite_when_row_disjoint_from_noise(self):
        q = Channel(np.array([[1.0, 0.0], [0.0, 1.0]]), star=0)
        assert cond_chernoff(q, Dist([0.5, 0.5])).value == math.inf

    def test_mixture_weights_scale_value(self, fig3):
        # h is zero on the noise row, so the value scales with the other mass.
        full = cond_chernoff(fig3, Dist.point_mass(1, 2)).value
        half = cond_chernoff(fig3, Dist([0.5, 0.5])).value
        assert half == pytest.approx(0.5 * full, abs=1e-8)


class TestBatchedEvaluators:
    def test_chernoff_values_match_scalar(self, fig3):
        rng = np.random.default_rng(11)
        outs = rng.dirichlet(np.ones(2), size=40)
        star = fig3.rows[0]
        vals = chernoff_values_to(outs, star)
        for row, v in zip(outs, vals):
            assert v == pytest.approx(chernoff_info(Dist(row), Dist(star)).value, abs=1e-6)

    def test_cond_values_match_scalar(self, fig3, fig4, zchannel):
        rng = np.random.default_rng(12)
        for q in (fig3, fig4, zchannel):
            ps = rng.dirichlet(np.ones(q.num_inputs), size=30)
            vals = cond_chernoff_values(ps, q)
            for row, v in zip(ps, vals):
                expect = cond_chernoff(q, Dist(row)).value
                if math.isinf(expect):
                    assert math.isinf(v)
                else:
                    assert v == pytest.approx(expect, abs=1e-6)

    def test_grid_max_concave_refines_peak(self):
        xs = np.linspace(0, 1, 257)
        vals = -((xs - 0.37) ** 2)[None, :]
        got = grid_max_concave(vals)[0]
        assert got == pytest.approx(0.0, abs=1e-9)
