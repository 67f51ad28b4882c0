"""Slope field, boundary data, and turnover optimizer of the long-run ODE.

The marginal-value function q solves a first-order ODE whose right-hand side
switches between three regimes: buying (q above the curve eps/(1+eps*y)),
selling (q below -eps/(1-eps*y)), and no trading in between. The friction
term vanishes on the regime curves, so the slope field is continuous. This
module evaluates that slope field pointwise; integrating it is the job of
the free-boundary solver.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .market import MarketParams

__all__ = [
    "BoundaryDataError",
    "OdeContext",
    "OdeDomainError",
    "Regime",
    "SingularEndpointError",
    "Y_MIN_CLEARANCE",
    "band_buy",
    "band_sell",
    "boundary_value_0",
    "boundary_value_1",
    "classify",
    "pointwise_optimal_turnover",
    "slope",
    "slope_no_trade",
]

# The quadratic coefficient sigma^2 y^2 (1-y)^2 / 2 vanishes at both
# endpoints; slope evaluation refuses points within this distance of them.
Y_MIN_CLEARANCE = 1e-6


class OdeDomainError(ValueError):
    """State (y, q) outside the region where the ODE is defined (q y >= 1)."""


class SingularEndpointError(ValueError):
    """Slope requested too close to y = 0 or y = 1; use the boundary data."""


class BoundaryDataError(ValueError):
    """Boundary value/derivative formula not usable for these inputs."""


class Regime(enum.Enum):
    BUY = 1
    NO_TRADE = 0
    SELL = -1


@dataclass(frozen=True)
class OdeContext:
    """Market parameters plus a candidate equivalent safe rate.

    For any beta at or above the buy-and-hold floor max(0, mu - gamma
    sigma^2/2), the auxiliary constant d = -gamma sigma^2 - 2 beta + 2 mu is
    nonpositive, which keeps the y=1 boundary formula real for small
    frictions.
    """

    params: MarketParams
    beta: float

    @property
    def d(self) -> float:
        p = self.params
        return -p.gamma * p.sigma**2 - 2.0 * self.beta + 2.0 * p.mu


def band_buy(y: float, epsilon: float) -> float:
    """Upper no-trade curve eps / (1 + eps*y)."""
    return epsilon / (1.0 + epsilon * y)


def band_sell(y: float, epsilon: float) -> float:
    """Lower no-trade curve -eps / (1 - eps*y)."""
    return -epsilon / (1.0 - epsilon * y)


def classify(y: float, q: float, epsilon: float) -> Regime:
    """Regime of the slope field at (y, q).

    On the curves themselves the friction bracket vanishes, so the buy/sell
    assignment there is a labeling choice with no effect on the slope.
    """
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"y must lie in [0, 1], got {y!r}")
    if q >= band_buy(y, epsilon):
        return Regime.BUY
    if q <= band_sell(y, epsilon):
        return Regime.SELL
    return Regime.NO_TRADE


def _friction_bracket(y: float, q: float, epsilon: float, lam: float,
                      regime: Regime) -> float:
    """Regime-dependent friction term of the ODE; zero in the no-trade band.

    Requires 1 - y q > 0 in the trading regimes.
    """
    if regime is Regime.NO_TRADE:
        return 0.0
    one_m_yq = 1.0 - y * q
    w = q - epsilon * one_m_yq if regime is Regime.BUY else q + epsilon * one_m_yq
    return w * w / (4.0 * lam * one_m_yq)


def _friction_bracket_dq(y: float, q: float, epsilon: float, lam: float,
                         regime: Regime) -> float:
    """d/dq of the friction bracket (for analytic Jacobians)."""
    if regime is Regime.NO_TRADE:
        return 0.0
    one_m_yq = 1.0 - y * q
    if regime is Regime.BUY:
        w = q - epsilon * one_m_yq
        dw = 1.0 + epsilon * y
    else:
        w = q + epsilon * one_m_yq
        dw = 1.0 - epsilon * y
    return (2.0 * w * dw * one_m_yq + w * w * y) / (4.0 * lam * one_m_yq**2)


def _slope_terms(ctx: OdeContext, y: float, q: float,
                 regime: Regime) -> tuple[float, float]:
    """(algebraic part, quadratic coefficient) of the ODE at (y, q).

    The slope is -(algebraic)/(coefficient) - (1-gamma) q^2, where the
    algebraic part collects every term of the equation that does not involve
    q'; its root in q defines the slow manifold the solutions hug near the
    singular endpoints.
    """
    p = ctx.params
    gs2 = p.gamma * p.sigma**2
    algebraic = (
        -ctx.beta
        + p.mu * y
        - 0.5 * gs2 * y * y
        + y * (1.0 - y) * (p.mu - gs2 * y) * q
        + _friction_bracket(y, q, p.epsilon, p.lam, regime)
    )
    coefficient = 0.5 * p.sigma**2 * y * y * (1.0 - y) ** 2
    return algebraic, coefficient


def slope(ctx: OdeContext, y: float, q: float) -> float:
    """q'(y) from the ODE, in the regime selected by :func:`classify`.

    Raises
    ------
    SingularEndpointError
        Within Y_MIN_CLEARANCE of y = 0 or y = 1 (use boundary data there).
    OdeDomainError
        If q >= 1/y, where the trading-regime terms lose meaning; shooting
        drivers interpret this as a blow-up.
    """
    if y < Y_MIN_CLEARANCE or y > 1.0 - Y_MIN_CLEARANCE:
        raise SingularEndpointError(
            f"slope undefined within {Y_MIN_CLEARANCE:g} of the endpoints "
            f"(got y={y!r})"
        )
    if y * q >= 1.0:
        raise OdeDomainError(f"q y >= 1 at y={y!r}, q={q!r}")
    regime = classify(y, q, ctx.params.epsilon)
    algebraic, coefficient = _slope_terms(ctx, y, q, regime)
    return -algebraic / coefficient - (1.0 - ctx.params.gamma) * q * q


def slope_no_trade(ctx: OdeContext, y: float, q: float) -> float:
    """Slope with the friction bracket dropped (no-trade formula everywhere).

    Dominates the true slope on the whole strip q y < 1 because the bracket
    is nonnegative; used by tests and diagnostics.
    """
    if y < Y_MIN_CLEARANCE or y > 1.0 - Y_MIN_CLEARANCE:
        raise SingularEndpointError(f"y={y!r} too close to an endpoint")
    algebraic, coefficient = _slope_terms(ctx, y, q, Regime.NO_TRADE)
    return -algebraic / coefficient - (1.0 - ctx.params.gamma) * q * q


def boundary_value_0(params: MarketParams, beta: float) -> tuple[float, float]:
    """Value and derivative of q at y = 0+.

    The value eps + 2 sqrt(lam beta) is the root of the equation's leading
    balance at full safe investment; the derivative keeps the trading rate
    finite and positive there. Requires beta > 0 (the derivative formula has
    a 1/sqrt(beta) factor).
    """
    if beta <= 0.0:
        raise BoundaryDataError(
            f"y=0 derivative needs beta > 0 (got {beta!r}); bisect strictly "
            "inside the bracket"
        )
    if params.lam < 0.0:
        raise BoundaryDataError("lambda must be nonnegative")
    q0 = params.epsilon + 2.0 * math.sqrt(params.lam * beta)
    dq0 = (
        -math.sqrt(params.lam / beta) * (params.mu + (params.mu + beta) * q0)
        - params.epsilon * q0
    )
    return q0, dq0


def boundary_value_1(params: MarketParams, beta: float) -> float:
    """Value of q at y = 1-, the negative root of the leading balance at
    full risky investment."""
    eps = params.epsilon
    d = -params.gamma * params.sigma**2 - 2.0 * beta + 2.0 * params.mu
    radicand = params.lam * d * (params.lam * d - 2.0 + 2.0 * eps)
    if radicand < 0.0:
        raise BoundaryDataError(
            f"negative radicand at beta={beta!r} (d={d:g}); beta is outside "
            "the admissible bracket for these frictions"
        )
    return (params.lam * d - eps * (1.0 - eps) - math.sqrt(radicand)) / (
        1.0 - eps
    ) ** 2


def pointwise_optimal_turnover(y: float, q: float,
                               params: MarketParams) -> float:
    """Turnover maximizing -lam u^2 - eps|u| + (u + eps|u| y + lam y u^2) q.

    Positive (buying) when the marginal value q/(1 - y q) exceeds the
    half-spread, negative (selling) below -eps, zero in between. Requires
    the second-order condition q y < 1.
    """
    if y * q >= 1.0:
        raise OdeDomainError(f"q y >= 1 at y={y!r}, q={q!r}")
    marginal = q / (1.0 - y * q)
    eps = params.epsilon
    if marginal >= eps:
        return (marginal - eps) / (2.0 * params.lam)
    if marginal <= -eps:
        return (marginal + eps) / (2.0 * params.lam)
    return 0.0
