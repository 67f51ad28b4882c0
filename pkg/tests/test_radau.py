"""Validation of the scalar stiff integrator against closed forms and scipy."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spreadimpact._radau import GuardBox, integrate_guarded
from spreadimpact.market import MarketParams
from spreadimpact.solver import _make_rhs_jac, _refine_start
from spreadimpact import hjb


class TestAgainstClosedForms:
    def test_stiff_relaxation_onto_cosine(self):
        rate = 1e6
        f = lambda t, q: -rate * (q - math.cos(t)) - math.sin(t)
        jac = lambda t, q: -rate
        res = integrate_guarded(f, jac, 0.0, 10.0, 1.0, 1e-10, 1e-12)
        assert res.status == "reached"
        assert res.y_end == pytest.approx(math.cos(10.0), abs=1e-9)

    def test_backward_exponential(self):
        res = integrate_guarded(lambda t, q: q, lambda t, q: 1.0,
                                2.0, 0.0, 1.0, 1e-12, 1e-14)
        assert res.status == "reached"
        assert res.y_end == pytest.approx(math.exp(-2.0), rel=1e-11)

    def test_dense_output_between_steps(self):
        f = lambda t, q: -q + math.sin(t)
        res = integrate_guarded(f, lambda t, q: -1.0, 0.0, 6.0, 0.5,
                                1e-11, 1e-13)
        exact = lambda t: (0.5 + 0.5) * np.exp(-t) + 0.5 * (np.sin(t)
                                                            - np.cos(t))
        ts = np.linspace(0.1, 5.9, 200)
        assert np.max(np.abs(res.sol(ts) - exact(ts))) < 1e-7

    def test_guard_crossing_refined(self):
        res = integrate_guarded(lambda t, q: 1.0, lambda t, q: 0.0,
                                0.0, 2.0, 0.0, 1e-10, 1e-12,
                                guard=GuardBox(upper_q=0.5))
        assert res.status == "upper"
        assert res.t_end == pytest.approx(0.5, abs=1e-9)

    def test_product_guard(self):
        # q = t - 1 crosses q*t = 0.6 at the positive root of t^2 - t - 0.6.
        res = integrate_guarded(lambda t, q: 1.0, lambda t, q: 0.0,
                                1.0, 3.0, 0.0, 1e-10, 1e-12,
                                guard=GuardBox(upper_qt=0.6))
        expected = 0.5 * (1.0 + math.sqrt(1.0 + 2.4))
        assert res.status == "upper"
        assert res.t_end == pytest.approx(expected, abs=1e-9)

    def test_lower_guard(self):
        res = integrate_guarded(lambda t, q: -2.0, lambda t, q: 0.0,
                                0.0, 5.0, 0.0, 1e-10, 1e-12,
                                guard=GuardBox(lower_q=-1.0))
        assert res.status == "lower"
        assert res.t_end == pytest.approx(0.5, abs=1e-9)

    def test_nonfinite_region_handled(self):
        # dq/dt = 1/(1-q) blows up at q -> 1; a guard below keeps it clean.
        def f(t, q):
            d = 1.0 - q
            return 1.0 / d if d > 0 else math.inf

        def jac(t, q):
            d = 1.0 - q
            return 1.0 / d**2 if d > 0 else 0.0

        res = integrate_guarded(f, jac, 0.0, 1.0, 0.0, 1e-10, 1e-12,
                                guard=GuardBox(upper_q=0.9))
        assert res.status == "upper"
        assert res.t_end == pytest.approx((1 - 0.01) / 2, abs=1e-8)

    def test_max_step_is_respected(self):
        res = integrate_guarded(lambda t, q: -q, lambda t, q: -1.0,
                                0.0, 1.0, 1.0, 1e-6, 1e-9, max_step=1e-2)
        assert np.max(np.abs(np.diff(res.ts))) <= 1e-2 + 1e-12


class TestAgainstScipy:
    @pytest.mark.parametrize("eps,lam,beta,forward", [
        (1e-3, 1e-4, 0.0249, True),
        (1e-3, 1e-4, 0.0249578909, False),
        (1e-2, 1e-2, 0.0248, True),
    ])
    def test_shooting_legs_agree(self, eps, lam, beta, forward):
        params = MarketParams(mu=0.08, sigma=0.16, gamma=5.0, epsilon=eps,
                              lam=lam)
        rhs, jac = _make_rhs_jac(params, beta)
        delta = 1e-6
        y_star = params.merton_weight
        if forward:
            q0, dq0 = hjb.boundary_value_0(params, beta)
            start = _refine_start(params, beta, delta, q0 + delta * dq0,
                                  selling=False)
            span = (delta, y_star)
        else:
            q1 = hjb.boundary_value_1(params, beta)
            start = _refine_start(params, beta, 1.0 - delta, q1, selling=True)
            span = (1.0 - delta, y_star)
        mine = integrate_guarded(rhs, jac, span[0], span[1], start,
                                 1e-10, 1e-15)
        ref = solve_ivp(lambda t, q: [rhs(t, q[0])], span, [start],
                        method="Radau", jac=lambda t, q: [[jac(t, q[0])]],
                        rtol=1e-10, atol=1e-15)
        assert mine.status == "reached"
        assert ref.status == 0
        assert mine.y_end == pytest.approx(ref.y[0][-1], rel=1e-7,
                                           abs=1e-12)
