import json
import math

import pytest
from hypothesis import given, strategies as st

from spreadimpact.market import (
    AllocationRegime,
    MarketParams,
    ParameterError,
    baseline,
    buy_and_hold_esr,
    degenerate_regime,
    validate,
)


def make(mu=0.08, sigma=0.16, gamma=5.0, epsilon=0.01, lam=0.01):
    return MarketParams(mu=mu, sigma=sigma, gamma=gamma, epsilon=epsilon,
                        lam=lam)


class TestValidate:
    def test_equity_like_inputs_pass(self):
        p = make()
        assert validate(p) is p

    def test_log_utility_rejected(self):
        with pytest.raises(ParameterError, match="gamma"):
            validate(make(gamma=1.0))

    def test_zero_volatility_rejected(self):
        with pytest.raises(ParameterError, match="sigma"):
            validate(make(sigma=0.0))

    def test_all_violations_reported_together(self):
        with pytest.raises(ParameterError) as err:
            validate(make(sigma=-1.0, gamma=-2.0, epsilon=-0.1, lam=-0.5))
        message = str(err.value)
        for name in ("sigma", "gamma", "epsilon", "lambda"):
            assert name in message

    def test_non_finite_rejected(self):
        with pytest.raises(ParameterError, match="finite"):
            validate(make(mu=math.nan))


class TestBaseline:
    def test_closed_forms(self):
        b = baseline(make())
        assert b.merton_weight == pytest.approx(0.625, abs=1e-15)
        assert b.frictionless_esr == pytest.approx(0.025, abs=1e-15)
        assert b.full_risky_esr == pytest.approx(0.016, abs=1e-15)
        assert b.full_safe_esr == 0.0

    def test_zero_drift(self):
        b = baseline(make(mu=0.0))
        assert b.merton_weight == 0.0
        assert b.frictionless_esr == 0.0

    def test_unit_weight_threshold(self):
        # mu = gamma sigma^2 puts the frictionless weight exactly at one.
        b = baseline(make(mu=0.128))
        assert b.merton_weight == pytest.approx(1.0, abs=1e-15)


class TestRegimes:
    def test_interior(self):
        assert degenerate_regime(make()) is AllocationRegime.INTERIOR

    def test_full_safe(self):
        p = make(mu=-0.02)
        assert degenerate_regime(p) is AllocationRegime.FULL_SAFE
        assert buy_and_hold_esr(p) == 0.0

    def test_full_risky(self):
        p = make(mu=0.2)
        assert degenerate_regime(p) is AllocationRegime.FULL_RISKY
        assert buy_and_hold_esr(p) == pytest.approx(0.2 - 5 * 0.0256 / 2)

    def test_buy_and_hold_undefined_interior(self):
        with pytest.raises(ValueError):
            buy_and_hold_esr(make())

    @given(mu=st.floats(-0.5, 0.5), sigma=st.floats(0.05, 0.8),
           gamma=st.floats(0.1, 20).filter(lambda g: abs(g - 1) > 1e-6))
    def test_interior_iff_weight_inside_unit_interval(self, mu, sigma, gamma):
        p = make(mu=mu, sigma=sigma, gamma=gamma)
        interior = degenerate_regime(p) is AllocationRegime.INTERIOR
        assert interior == (0.0 < p.merton_weight < 1.0)

    @given(mu=st.floats(0.001, 0.3), sigma=st.floats(0.05, 0.8),
           gamma=st.floats(0.1, 20).filter(lambda g: abs(g - 1) > 1e-6))
    def test_rate_bracket_well_ordered(self, mu, sigma, gamma):
        # The buy-and-hold floor never exceeds the frictionless rate.
        b = baseline(make(mu=mu, sigma=sigma, gamma=gamma))
        floor = max(0.0, b.full_risky_esr)
        assert floor <= b.frictionless_esr + 1e-18


class TestJson:
    def test_round_trip(self):
        p = make()
        doc = p.to_dict()
        assert set(doc) == {"mu", "sigma", "gamma", "epsilon", "lambda"}
        assert MarketParams.from_dict(doc) == p

    def test_loads_decimal_fractions(self):
        text = ('{"mu": 0.08, "sigma": 0.16, "gamma": 5, '
                '"epsilon": 0.001, "lambda": 0.0001}')
        p = MarketParams.from_json(text)
        assert p.lam == 0.0001
        assert p.epsilon == 0.001

    def test_missing_and_unknown_keys_rejected(self):
        with pytest.raises(ParameterError, match="missing"):
            MarketParams.from_json('{"mu": 0.08}')
        doc = make().to_dict()
        doc["spread"] = 0.01
        with pytest.raises(ParameterError, match="unknown"):
            MarketParams.from_dict(doc)

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text(json.dumps(make().to_dict()))
        assert MarketParams.from_file(path) == make()
