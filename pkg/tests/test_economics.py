from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from dedupchain.economics import (
    EconParams, PopulationState, PricingFunction, Role, average_user_utility, extra_fee_interval,
    ic_check, ir_check, max_extra_fee, min_extra_fee, utility_csp_dedup, utility_csp_inter,
    utility_csp_no_dedup, utility_report, utility_user_dedup, utility_user_no_dedup,
)
from dedupchain.money import money, quantize_down, fmt

from oracles import csp_gain_single_file, grid_max_ef, grid_min_ef

SF, SC, EF = F("0.165"), F("0.1"), F("0.0165")


def params(**kw):
    base = dict(profit_P=F("2.165"), storage_fee_SF=SF, storage_cost_SC=SC)
    base.update(kw)
    return EconParams(**base)


class TestMoney:
    def test_floats_go_through_shortest_repr(self):
        assert money(0.165) == F(33, 200)

    def test_bool_is_not_money(self):
        with pytest.raises(TypeError):
            money(True)

    def test_fmt(self):
        assert fmt(F(33, 200)) == "33/200"
        assert fmt(F(4)) == "4"

    def test_quantize_down(self):
        assert quantize_down(F("0.0825"), F(1, 1000)) == F("0.082")
        with pytest.raises(ValueError):
            quantize_down(F(1), 0)


class TestParams:
    def test_rejects_sf_not_above_sc(self):
        with pytest.raises(ValueError):
            params(storage_cost_SC=F("0.2"))
        with pytest.raises(ValueError):
            params(storage_cost_SC=SF)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            params(extra_fee_EF=-1)

    def test_reference_settings(self):
        p = EconParams.reference(F(1, 10))
        assert (p.profit_P, p.storage_fee_SF, p.storage_cost_SC, p.access_fee_AF) == (
            F("2.165"), SF, SC, F("0.1"))
        assert p.extra_fee_EF == EF

    def test_pricing_function_linear(self):
        f = PricingFunction(SF)
        assert f.price(3) == 3 * SF
        assert f.price(1) <= f.price(2)

    def test_population_bounds(self):
        with pytest.raises(ValueError):
            PopulationState(3, 4)
        with pytest.raises(ValueError):
            PopulationState(3, 0)


class TestUserUtility:
    def test_no_dedup(self):
        assert utility_user_no_dedup(params()) == 2
        assert utility_user_no_dedup(params(profit_P=SF)) == 0
        assert utility_user_no_dedup(EconParams(profit_P=1, storage_fee_SF=F("0.3"))) == F("0.7")

    def test_dedup(self):
        assert utility_user_dedup(params(extra_fee_EF=EF), 10) == F("2.132")

    def test_single_holder_equals_no_dedup(self):
        p = params()
        assert utility_user_dedup(p, 1) == utility_user_no_dedup(p)

    def test_rejects_zero_holders(self):
        with pytest.raises(ValueError):
            utility_user_dedup(params(), 0)

    def test_waiver_anchor(self):
        p = params(extra_fee_EF=EF, waive_first_uploader_ef=True)
        assert abs(average_user_utility(p, 10, 10) - F("2.133")) <= F(1, 1000)

    @given(st.integers(1, 500), st.integers(0, 100))
    def test_monotone(self, n, ef_milli):
        p = params(extra_fee_EF=F(ef_milli, 1000))
        assert utility_user_dedup(p, n + 1) > utility_user_dedup(p, n)
        assert utility_user_dedup(p.with_ef(p.extra_fee_EF + F(1, 1000)), n) < utility_user_dedup(p, n)


class TestCspUtility:
    def test_no_dedup(self):
        p = params()
        assert utility_csp_no_dedup(p, [(10, 1)]) == F("0.65")
        assert utility_csp_no_dedup(p, []) == 0
        assert utility_csp_no_dedup(p, [(1, 1), (1, 1)]) == 2 * (SF - SC)

    def test_dedup(self):
        p = params(extra_fee_EF=EF)
        assert utility_csp_dedup(p, [PopulationState(10, 1)]) == F("0.6665")
        assert utility_csp_dedup(p, [PopulationState(20, 2)]) == F("1.268")
        assert utility_csp_dedup(params(), [PopulationState(1, 1)]) == SF - SC

    def test_inter(self):
        assert utility_csp_inter(1, F("0.3"), F("0.1")) == F("1.2")
        assert utility_csp_inter(F(7, 3), F(1, 2), F(1, 2)) == F(7, 3)
        with pytest.raises(ValueError):
            utility_csp_inter(1, -1, 0)

    def test_report_is_pure(self):
        p = params(extra_fee_EF=EF, access_fee_AF=F("0.1"))
        a = utility_report(p, PopulationState(10, 5), F("0.3"), F("0.1"))
        b = utility_report(p, PopulationState(10, 5), F("0.3"), F("0.1"))
        assert a == b
        assert a.u_csp_inter == a.u_csp_dedup + F("0.2")

    @given(st.integers(1, 60), st.data(), st.integers(0, 200))
    def test_matches_oracle(self, N, data, ef_milli):
        n = data.draw(st.integers(1, N))
        ef = F(ef_milli, 1000)
        without, with_dedup = csp_gain_single_file(SF, SC, ef, N, n)
        p = params(extra_fee_EF=ef)
        assert utility_csp_no_dedup(p, [(N, 1)]) == without
        assert utility_csp_dedup(p, [PopulationState(N, n)]) == with_dedup


class TestBounds:
    def test_examples(self):
        p = params()
        assert min_extra_fee(p, 1) == 0 and max_extra_fee(p, 1) == 0
        assert min_extra_fee(p, 2) == F("0.0325")
        assert min_extra_fee(p, 10) == F("0.0585")
        assert max_extra_fee(p, 10) == F("0.1485")
        assert extra_fee_interval(p, 2) == (F("0.0325"), F("0.0825"))

    def test_grid_oracles(self):
        assert grid_min_ef(SF, SC, 2) == F("0.0325")
        assert grid_max_ef(SF, 10) == F("0.1485")

    def test_min_is_about_35_percent_of_sf(self):
        share = min_extra_fee(params(), 10) / SF
        assert round(float(share) * 100, 2) == 35.45

    def test_max_approaches_sf(self):
        p = params()
        prev = F(0)
        for n in (2, 10, 100, 1000, 10_000):
            cur = max_extra_fee(p, n)
            assert prev < cur < SF
            prev = cur

    def test_cost_aware_can_empty_interval(self):
        p = params(cost_deploy_I=F(1))
        assert extra_fee_interval(p, 2) is not None
        assert extra_fee_interval(p, 2, cost_aware=True) is None

    def test_cost_aware_terms(self):
        p = params(cost_user_I=F("0.01"), cost_csp_I=F("0.002"), cost_deploy_I=F("0.03"))
        assert min_extra_fee(p, 4, True) == min_extra_fee(p, 4) + 4 * F("0.002") + F("0.03")
        assert max_extra_fee(p, 4, True) == max_extra_fee(p, 4) + F("0.01")

    @given(st.integers(2, 200), st.integers(1, 999), st.integers(0, 998))
    def test_strict_consistency(self, n, sf_milli, sc_milli):
        if sc_milli >= sf_milli:
            sc_milli = sf_milli - 1
        p = EconParams(profit_P=0, storage_fee_SF=F(sf_milli, 1000),
                       storage_cost_SC=F(sc_milli, 1000))
        if sc_milli:
            assert min_extra_fee(p, n) < max_extra_fee(p, n)
        else:
            assert min_extra_fee(p, n) == max_extra_fee(p, n)

    @settings(max_examples=20)
    @given(st.integers(2, 50))
    def test_sign_flips_at_bounds(self, n):
        # 10^4-point grid on [0, SF]: the first grid point past each bound flips the sign
        p = params()
        step = SF / 10_000
        lo, hi = min_extra_fee(p, n), max_extra_fee(p, n)
        below = (lo // step) * step
        above = below + step if below < lo else below
        assert ic_check(p.with_ef(above), n, Role.CSP)[0]
        if below < lo:
            assert not ic_check(p.with_ef(below), n, Role.CSP)[0]
        under = (hi // step) * step
        assert ic_check(p.with_ef(under), n, Role.USER)[0]
        assert not ic_check(p.with_ef(under + step), n, Role.USER)[0]


class TestPredicates:
    def test_user_not_ic_at_one(self):
        ok, margin = ic_check(params(extra_fee_EF=EF), 1, "user")
        assert not ok and margin == -EF

    def test_csp_below_min(self):
        p = params()
        assert not ic_check(p.with_ef(min_extra_fee(p, 10) - F(1, 10**6)), 10, Role.CSP)[0]

    def test_inside_interval(self):
        p = params()
        lo, hi = extra_fee_interval(p, 10)
        for ef in (lo, (lo + hi) / 2, hi):
            assert ic_check(p.with_ef(ef), 10, Role.USER)[0]
            assert ic_check(p.with_ef(ef), 10, Role.CSP)[0]

    @given(st.integers(1, 100), st.integers(10, 50))
    def test_reference_individually_rational(self, n, pct):
        p = EconParams.reference(F(pct, 100))
        assert ir_check(p, n, Role.USER) and ir_check(p, n, Role.CSP)

    def test_ir_failures(self):
        assert not ir_check(EconParams(profit_P=0, storage_fee_SF=SF), 3, Role.USER)
        loss = EconParams.unchecked(profit_P=0, storage_fee_SF=F("0.1"), storage_cost_SC=F("0.2"))
        assert not ir_check(loss, 1, Role.CSP)
