"""Modular functionals, Orlicz norms, and the inequality battery."""
import math

import numpy as np
import pytest

from robustutil._errors import DomainError, ValidationError
from robustutil.market import FiniteMarket
from robustutil.orlicz_modular import (
    Modular,
    amemiya_norm,
    inequality_battery,
    luxemburg_norm,
    modular_I_incomplete,
    modular_value,
)
from robustutil.utility import UtilityFunction, check_delta2

from helpers import random_density


def small_market(n=5, seed=3):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(n, 2.0))
    return FiniteMarket(p)


def valid_deflator(rng, market, floor=0.2):
    """Strictly positive Y with E[Y] = 0.95 (supermartingale bound)."""
    y = rng.uniform(floor, 1.5, market.n)
    return 0.95 * y / float(market.probs @ y)


class TestModularConstruction:
    def test_kind_checked(self, gh_market16, uf_half):
        with pytest.raises(ValidationError, match="EtaStar"):
            Modular(gh_market16, uf_half, "Theta")

    def test_default_deflator_is_one(self, gh_market16, uf_half):
        mod = Modular(gh_market16, uf_half, "EtaStar")
        np.testing.assert_array_equal(mod.deflator, 1.0)

    def test_deflator_invariants(self, gh_market16, uf_half):
        n = gh_market16.n
        with pytest.raises(ValidationError, match="length"):
            Modular(gh_market16, uf_half, "EtaStar", deflator=np.ones(n - 1))
        bad = np.ones(n)
        bad[0] = -0.1
        with pytest.raises(ValidationError, match=">= 0"):
            Modular(gh_market16, uf_half, "EtaStar", deflator=bad)
        with pytest.raises(ValidationError, match="<= 1"):
            Modular(gh_market16, uf_half, "EtaStar",
                    deflator=np.full(n, 1.5))

    def test_immutable(self, gh_market16, uf_half):
        mod = Modular(gh_market16, uf_half, "EtaStar")
        with pytest.raises(AttributeError):
            mod.kind = "Eta"


class TestModularValue:
    def test_density_side_unit_vector(self, gh_market16, uf_half):
        # eta*(z) = z^2 for alpha = 1/2 in the complete case
        mod = Modular(gh_market16, uf_half, "EtaStar")
        assert mod.value(np.ones(gh_market16.n)) == pytest.approx(
            1.0, rel=1e-12)

    def test_zero_vector_is_zero(self, gh_market16, uf_half):
        for kind in ("EtaStar", "Eta"):
            mod = Modular(gh_market16, uf_half, kind)
            assert mod.value(np.zeros(gh_market16.n)) == 0.0

    def test_wealth_side_matches_inverse_utility(self, gh_market16, uf_half):
        # J(X) = E[U^-1(|X|)] = U^-1(2) = 1 at X = 2
        mod = Modular(gh_market16, uf_half, "Eta")
        assert mod.value(np.full(gh_market16.n, 2.0)) == pytest.approx(
            1.0, rel=1e-12)

    def test_quadratic_closed_forms_with_deflator(self, gh_market16,
                                                  uf_half):
        # alpha = 1/2: I(Z) = E[Z^2 / Y], J(X) = E[Y X^2 / 4]
        rng = np.random.default_rng(7)
        p = gh_market16.probs
        y = valid_deflator(rng, gh_market16)
        z = rng.lognormal(0.0, 0.7, gh_market16.n)
        x = rng.lognormal(0.0, 0.7, gh_market16.n)
        mi = Modular(gh_market16, uf_half, "EtaStar", deflator=y)
        mj = Modular(gh_market16, uf_half, "Eta", deflator=y)
        assert mi.value(z) == pytest.approx(float(p @ (z * z / y)),
                                            rel=1e-12)
        assert mj.value(x) == pytest.approx(float(p @ (y * x * x / 4.0)),
                                            rel=1e-12)

    def test_zero_state_convention(self, uf_half):
        m = FiniteMarket([0.25, 0.75])
        mod = Modular(m, uf_half, "EtaStar")
        # z V(Y/z) -> 0 as z -> 0, so a zero entry contributes nothing
        assert mod.value([0.0, 2.0]) == pytest.approx(0.75 * 4.0, rel=1e-12)

    def test_vanishing_deflator_blows_up(self, uf_half):
        m = FiniteMarket([0.25, 0.75])
        mod = Modular(m, uf_half, "EtaStar", deflator=[0.0, 4.0 / 3.0])
        assert mod.value([1.0, 1.0]) == math.inf
        assert mod.value([0.0, 1.0]) < math.inf

    def test_bounded_utility_extended_real(self, gh_market16):
        bounded = UtilityFunction.custom(
            lambda x: 1.0 - math.exp(-x),
            lambda x: math.exp(-x), delta=1.0)
        mod = Modular(gh_market16, bounded, "Eta")
        n = gh_market16.n
        assert mod.value(np.full(n, 0.5)) < math.inf
        assert mod.value(np.full(n, 1.0)) == math.inf

    def test_even_and_convex(self, gh_market16, uf_half):
        rng = np.random.default_rng(11)
        n = gh_market16.n
        for kind in ("EtaStar", "Eta"):
            mod = Modular(gh_market16, uf_half, kind)
            for _ in range(50):
                z1 = rng.normal(0.0, 2.0, n)
                z2 = rng.normal(0.0, 2.0, n)
                assert mod.value(-z1) == pytest.approx(mod.value(z1),
                                                       rel=1e-12)
                mid = mod.value(0.5 * (z1 + z2))
                assert mid <= 0.5 * mod.value(z1) + 0.5 * mod.value(z2) \
                    + 1e-12

    def test_argument_validation(self, gh_market16, uf_half):
        mod = Modular(gh_market16, uf_half, "EtaStar")
        with pytest.raises(ValidationError, match="length"):
            mod.value([1.0])
        with pytest.raises(ValidationError, match="finite"):
            mod.value(np.full(gh_market16.n, math.nan))


class TestLuxemburgNorm:
    def test_unit_vector(self, gh_market16, uf_half):
        mod = Modular(gh_market16, uf_half, "EtaStar")
        assert mod.luxemburg(np.ones(gh_market16.n)) == pytest.approx(
            1.0, rel=1e-11)

    def test_zero(self, gh_market16, uf_half):
        mod = Modular(gh_market16, uf_half, "EtaStar")
        assert mod.luxemburg(np.zeros(gh_market16.n)) == 0.0

    def test_absolute_homogeneity(self, gh_market16, uf_half):
        rng = np.random.default_rng(5)
        mod = Modular(gh_market16, uf_half, "EtaStar")
        z = rng.lognormal(0.0, 1.0, gh_market16.n)
        base = mod.luxemburg(z)
        for c in (0.3, 2.5, 7.0, -1.5):
            assert mod.luxemburg(c * z) == pytest.approx(abs(c) * base,
                                                         rel=1e-10)

    def test_quadratic_closed_form(self, gh_market16, uf_half):
        # alpha = 1/2 with deflator Y: ||Z||^l = sqrt(E[Z^2/Y]) and on the
        # wealth side ||X||^l = sqrt(E[Y X^2]) / 2
        rng = np.random.default_rng(13)
        p = gh_market16.probs
        y = valid_deflator(rng, gh_market16)
        mi = Modular(gh_market16, uf_half, "EtaStar", deflator=y)
        mj = Modular(gh_market16, uf_half, "Eta", deflator=y)
        for _ in range(20):
            z = rng.lognormal(0.0, 1.0, gh_market16.n)
            x = rng.lognormal(0.0, 1.0, gh_market16.n)
            assert mi.luxemburg(z) == pytest.approx(
                math.sqrt(float(p @ (z * z / y))), rel=1e-10)
            assert mj.luxemburg(x) == pytest.approx(
                math.sqrt(float(p @ (y * x * x))) / 2.0, rel=1e-10)

    def test_unit_ball_characterization(self, gh_market16, uf_half):
        rng = np.random.default_rng(17)
        mod = Modular(gh_market16, uf_half, "EtaStar")
        for _ in range(10):
            z = rng.lognormal(0.0, 1.0, gh_market16.n)
            b = mod.luxemburg(z)
            assert mod.value(z / b) <= 1.0 + 1e-9
            assert mod.value(z / (b * (1.0 - 1e-6))) > 1.0

    def test_triangle_inequality(self, gh_market16, uf_half):
        rng = np.random.default_rng(19)
        n = gh_market16.n
        for kind in ("EtaStar", "Eta"):
            mod = Modular(gh_market16, uf_half, kind)
            for _ in range(30):
                z1 = rng.normal(0.0, 2.0, n)
                z2 = rng.normal(0.0, 2.0, n)
                lhs = mod.luxemburg(z1 + z2)
                rhs = mod.luxemburg(z1) + mod.luxemburg(z2)
                assert lhs <= rhs + 1e-10 * (1.0 + rhs)


class TestAmemiyaNorm:
    def test_unit_vector(self, gh_market16, uf_half):
        # inf_k (1 + k^2)/k = 2 at k = 1
        mod = Modular(gh_market16, uf_half, "EtaStar")
        assert mod.amemiya(np.ones(gh_market16.n)) == pytest.approx(
            2.0, rel=1e-9)

    def test_zero(self, gh_market16, uf_half):
        mod = Modular(gh_market16, uf_half, "EtaStar")
        assert mod.amemiya(np.zeros(gh_market16.n)) == 0.0

    def test_quadratic_modular_attains_double(self, gh_market16, uf_half):
        # squared-norm modular: inf_k (1 + k^2 L^2)/k = 2L exactly
        rng = np.random.default_rng(23)
        for kind in ("EtaStar", "Eta"):
            mod = Modular(gh_market16, uf_half, kind)
            for _ in range(10):
                z = rng.normal(0.0, 2.0, gh_market16.n)
                assert mod.amemiya(z) == pytest.approx(
                    2.0 * mod.luxemburg(z), rel=1e-9)

    def test_three_halves_homogeneous_ratio(self, gh_market16):
        # alpha = 1/3 makes I(kZ) = k^{3/2} I(Z); minimizing
        # (1 + k^{3/2} I)/k gives amemiya = 3 (I/2)^{2/3} while the
        # Luxemburg norm is I^{2/3}, a ratio of 3/2^{2/3}
        uf = UtilityFunction.power(1.0 / 3.0)
        mod = Modular(gh_market16, uf, "EtaStar")
        rng = np.random.default_rng(29)
        ratio = 3.0 / 2.0 ** (2.0 / 3.0)
        for _ in range(5):
            z = rng.lognormal(0.0, 1.0, gh_market16.n)
            assert mod.amemiya(z) == pytest.approx(
                ratio * mod.luxemburg(z), rel=1e-8)

    def test_sandwich(self, gh_market16, uf_half):
        rng = np.random.default_rng(31)
        mod = Modular(gh_market16, uf_half, "EtaStar")
        for _ in range(25):
            z = rng.normal(0.0, 3.0, gh_market16.n)
            lux = mod.luxemburg(z)
            am = mod.amemiya(z)
            assert lux - 1e-9 <= am <= 2.0 * lux + 1e-9

    def test_infinite_probes_skipped(self, gh_market16):
        # bounded utility: J(kX) = +inf for large k; the bracket must
        # still isolate the finite minimum
        bounded = UtilityFunction.custom(
            lambda x: 1.0 - math.exp(-x),
            lambda x: math.exp(-x), delta=1.0)
        mod = Modular(gh_market16, bounded, "Eta")
        x = np.full(gh_market16.n, 0.4)
        am = amemiya_norm(mod, x)
        lux = luxemburg_norm(mod, x)
        assert math.isfinite(am)
        assert lux - 1e-9 <= am <= 2.0 * lux + 1e-9

    def test_homogeneity(self, gh_market16, uf_half):
        rng = np.random.default_rng(37)
        mod = Modular(gh_market16, uf_half, "Eta")
        z = rng.lognormal(0.0, 1.0, gh_market16.n)
        base = mod.amemiya(z)
        for c in (0.25, 4.0, -2.0):
            assert mod.amemiya(c * z) == pytest.approx(abs(c) * base,
                                                       rel=1e-8)


class TestIncompleteModular:
    def test_singleton_reduces_to_modular_value(self, gh_market16, uf_half):
        z = random_density(np.random.default_rng(0), gh_market16)
        ones = np.ones(gh_market16.n)
        val, y = modular_I_incomplete(gh_market16, uf_half, [ones], z)
        mod = Modular(gh_market16, uf_half, "EtaStar")
        assert val == pytest.approx(mod.value(z), rel=1e-12)
        np.testing.assert_array_equal(y, ones)

    def test_dominating_deflator_wins(self, uf_half):
        # V decreasing, so the componentwise larger Y gives the smaller
        # modular and must be the argmin
        m = small_market(4)
        rng = np.random.default_rng(41)
        y2 = valid_deflator(rng, m)
        y1 = 1.02 * y2
        z = rng.lognormal(0.0, 1.0, 4)
        val, y = modular_I_incomplete(m, uf_half, [y1, y2], z)
        np.testing.assert_array_equal(y, y1)
        assert val == pytest.approx(
            modular_value(Modular(m, uf_half, "EtaStar", deflator=y1), z),
            rel=1e-12)

    def test_hull_matches_dense_grid(self, uf_half):
        # 3 vertices on a 3-state market; oracle sweeps the weight
        # simplex at step 1e-3 using the alpha = 1/2 closed form
        m = FiniteMarket([0.2, 0.5, 0.3])
        verts = np.array([[0.9, 1.1, 0.9],
                          [1.4, 0.7, 0.9],
                          [0.5, 0.8, 1.6]])
        for v in verts:
            assert float(m.probs @ v) <= 1.0 + 1e-12
        z = np.array([1.3, 0.6, 1.2])
        val, y = modular_I_incomplete(m, uf_half, {"vertices": verts}, z)

        step = 1e-3
        mu1 = np.arange(0.0, 1.0 + step / 2, step)
        g1, g2 = np.meshgrid(mu1, mu1, indexing="ij")
        keep = g1 + g2 <= 1.0 + 1e-12
        g1, g2 = g1[keep], g2[keep]
        w = np.stack([g1, g2, 1.0 - g1 - g2], axis=1)
        ymat = w @ verts  # (grid, 3)
        vals = (z * z / ymat) @ m.probs
        oracle = float(vals.min())

        assert val == pytest.approx(oracle, abs=1e-5)
        assert val <= oracle + 1e-9  # continuous opt at least as good
        # attaining Y is inside the hull and reproduces the value
        assert val == pytest.approx(
            modular_value(Modular(m, uf_half, "EtaStar", deflator=y), z),
            rel=1e-10)

    def test_hull_with_single_vertex(self, uf_half):
        m = small_market(3)
        y = 0.9 * np.ones(3)
        z = np.array([0.5, 1.5, 1.0])
        val, arg = modular_I_incomplete(m, uf_half, {"vertices": [y]}, z)
        assert val == pytest.approx(
            modular_value(Modular(m, uf_half, "EtaStar", deflator=y), z),
            rel=1e-10)
        np.testing.assert_allclose(arg, y, atol=1e-12)

    def test_empty_set_rejected(self, gh_market16, uf_half):
        z = np.ones(gh_market16.n)
        with pytest.raises(DomainError, match="nonempty"):
            modular_I_incomplete(gh_market16, uf_half, [], z)
        with pytest.raises(DomainError, match="nonempty"):
            modular_I_incomplete(gh_market16, uf_half, {"vertices": []}, z)

    def test_members_must_be_valid_deflators(self, gh_market16, uf_half):
        z = np.ones(gh_market16.n)
        with pytest.raises(ValidationError, match="<= 1"):
            modular_I_incomplete(gh_market16, uf_half,
                                 [np.full(gh_market16.n, 2.0)], z)


class TestInequalityBattery:
    def test_unit_pair_values(self, gh_market16, uf_half):
        # I(1) = 1 and J(1) = U^-1(1) = 1/4, so Young holds with margin
        mi = Modular(gh_market16, uf_half, "EtaStar")
        mj = Modular(gh_market16, uf_half, "Eta")
        ones = np.ones(gh_market16.n)
        assert mi.value(ones) == pytest.approx(1.0, rel=1e-12)
        assert mj.value(ones) == pytest.approx(0.25, rel=1e-12)
        assert 1.0 <= mi.value(ones) + mj.value(ones)

    def test_zero_sample_only(self, gh_market16, uf_half):
        rep = inequality_battery(gh_market16, uf_half, samples=1)
        assert rep.ok and rep.samples == 1
        assert rep.worst_holder_margin == 0.0
        assert rep.worst_young_margin == 0.0
        assert rep.worst_sandwich_margin == pytest.approx(0.0, abs=1e-15)

    def test_random_battery_clean(self, gh_market16, uf_half):
        rep = inequality_battery(gh_market16, uf_half, samples=200, seed=1)
        assert rep.violations == 0 and rep.ok
        assert rep.worst_holder_margin >= -1e-9
        assert rep.worst_young_margin >= -1e-9
        assert rep.worst_sandwich_margin >= -1e-9

    def test_battery_other_alpha(self, gh_market16):
        uf = UtilityFunction.power(0.7)
        rep = inequality_battery(gh_market16, uf, samples=60, seed=2)
        assert rep.ok

    def test_sample_count_validated(self, gh_market16, uf_half):
        with pytest.raises(DomainError, match=">= 1"):
            inequality_battery(gh_market16, uf_half, samples=0)

    def test_deterministic(self, gh_market16, uf_half):
        r1 = inequality_battery(gh_market16, uf_half, samples=25, seed=9)
        r2 = inequality_battery(gh_market16, uf_half, samples=25, seed=9)
        assert r1 == r2


class TestModularProperties:
    def test_lower_semicontinuity_on_sequences(self, uf_half):
        m = FiniteMarket([0.25, 0.75])
        mod = Modular(m, uf_half, "EtaStar")
        z = np.array([0.0, 1.5])
        seq = [mod.value(z + np.array([1.0 / k, 0.0])) for k in
               range(1, 60)]
        assert min(seq[-10:]) >= mod.value(z) - 1e-10
        # strict lsc gap: vanishing deflator state keeps the sequence at
        # +inf while the limit vector has modular 0
        mod0 = Modular(m, uf_half, "EtaStar", deflator=[0.0, 4.0 / 3.0])
        seq0 = [mod0.value(np.array([1.0 / k, 0.0])) for k in range(1, 10)]
        assert all(math.isinf(v) for v in seq0)
        assert mod0.value(np.zeros(2)) == 0.0

    def test_doubling_bound_from_delta2_constants(self, gh_market16):
        # eta*(2z) = 2z V(Y/2z) <= 2a eta*(z) + 2b z when
        # V(y/2) <= a V(y) + b, so modular(2Z) <= 2a I(Z) + 2b E[|Z|]
        rng = np.random.default_rng(43)
        grid = np.geomspace(1e-3, 1e3, 200)
        for alpha in (0.5, 1.0 / 3.0):
            uf = UtilityFunction.power(alpha)
            rep = check_delta2(uf, None, grid)
            assert rep.holds_V
            a = rep.fitted_a
            mod = Modular(gh_market16, uf, "EtaStar")
            for _ in range(20):
                z = rng.lognormal(0.0, 1.0, gh_market16.n)
                ez = float(gh_market16.probs @ z)
                lhs = mod.value(2.0 * z)
                assert lhs <= 2.0 * a * mod.value(z) + 1e-12 * (1.0 + ez)
                # power case: the doubling constant is exact
                hom = 2.0 ** (1.0 / (1.0 - alpha))
                assert lhs == pytest.approx(hom * mod.value(z), rel=1e-12)
