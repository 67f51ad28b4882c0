"""Market primitives, frictionless baselines, and buy-and-hold regimes.

One safe asset (normalized to one) and one risky asset following geometric
Brownian motion with excess drift ``mu`` and volatility ``sigma``. Trading is
penalized by a relative half-spread ``epsilon`` (cost linear in turnover) and
a price-impact coefficient ``lam`` (cost quadratic in turnover; ``1/lam`` is
market depth). The investor has constant relative risk aversion ``gamma`` and
maximizes the long-run equivalent safe rate. All rates are per year, entered
as decimal fractions.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

__all__ = [
    "AllocationRegime",
    "FrictionlessBaseline",
    "MarketParams",
    "ParameterError",
    "baseline",
    "buy_and_hold_esr",
    "degenerate_regime",
    "validate",
]

# JSON documents use "lambda", which is reserved in Python; the attribute is
# named "lam" internally.
_JSON_KEYS = ("mu", "sigma", "gamma", "epsilon", "lambda")


class ParameterError(ValueError):
    """Market parameters violate a model constraint."""


@dataclass(frozen=True)
class MarketParams:
    """Annualized market and preference inputs.

    Attributes
    ----------
    mu : float
        Expected excess return of the risky asset.
    sigma : float
        Volatility of the risky asset (per sqrt-year).
    gamma : float
        Relative risk aversion; positive and different from 1.
    epsilon : float
        Relative half-spread (proportional cost per unit traded).
    lam : float
        Price-impact coefficient; the quadratic-cost weight per unit of
        wealth turnover. ``1/lam`` measures market depth.
    """

    mu: float
    sigma: float
    gamma: float
    epsilon: float
    lam: float

    @property
    def merton_weight(self) -> float:
        """Frictionless optimal risky weight mu / (gamma * sigma**2)."""
        return self.mu / (self.gamma * self.sigma**2)

    @classmethod
    def from_dict(cls, doc: dict) -> "MarketParams":
        """Build parameters from a JSON-style dict with exactly the keys
        mu, sigma, gamma, epsilon, lambda."""
        missing = [k for k in _JSON_KEYS if k not in doc]
        extra = [k for k in doc if k not in _JSON_KEYS]
        if missing or extra:
            raise ParameterError(
                f"parameter document must contain exactly {_JSON_KEYS}; "
                f"missing={missing} unknown={extra}"
            )
        params = cls(
            mu=float(doc["mu"]),
            sigma=float(doc["sigma"]),
            gamma=float(doc["gamma"]),
            epsilon=float(doc["epsilon"]),
            lam=float(doc["lambda"]),
        )
        return validate(params)

    @classmethod
    def from_json(cls, text: str) -> "MarketParams":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_file(cls, path) -> "MarketParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "lambda": self.lam,
        }


@dataclass(frozen=True)
class FrictionlessBaseline:
    """Closed-form benchmarks of the frictionless market.

    ``merton_weight`` is the optimal risky fraction, ``frictionless_esr`` the
    equivalent safe rate it earns, and ``full_safe_esr``/``full_risky_esr``
    the rates of the two static corner portfolios.
    """

    merton_weight: float
    frictionless_esr: float
    full_safe_esr: float
    full_risky_esr: float


class AllocationRegime(enum.Enum):
    """Which long-run policy type applies for the given parameters."""

    INTERIOR = "interior"
    FULL_SAFE = "full_safe"
    FULL_RISKY = "full_risky"


def validate(params: MarketParams) -> MarketParams:
    """Return ``params`` unchanged if every model constraint holds.

    Raises
    ------
    ParameterError
        Listing each violated constraint by name.
    """
    problems = []
    for name in ("mu", "sigma", "gamma", "epsilon", "lam"):
        value = getattr(params, name)
        if not math.isfinite(value):
            problems.append(f"{name} must be finite (got {value!r})")
    if math.isfinite(params.sigma) and params.sigma <= 0.0:
        problems.append("sigma must be positive")
    if math.isfinite(params.gamma):
        if params.gamma <= 0.0:
            problems.append("gamma must be positive")
        elif params.gamma == 1.0:
            problems.append(
                "gamma must differ from 1 (utility is power, not log)"
            )
    if math.isfinite(params.epsilon) and params.epsilon < 0.0:
        problems.append("epsilon must be nonnegative")
    if math.isfinite(params.lam) and params.lam < 0.0:
        problems.append("lambda must be nonnegative")
    if problems:
        raise ParameterError("; ".join(problems))
    return params


def baseline(params: MarketParams) -> FrictionlessBaseline:
    """Frictionless Merton weight and the equivalent safe rates of the
    frictionless optimum and the two buy-and-hold corners."""
    y_star = params.merton_weight
    return FrictionlessBaseline(
        merton_weight=y_star,
        frictionless_esr=params.mu**2 / (2.0 * params.gamma * params.sigma**2),
        full_safe_esr=0.0,
        full_risky_esr=params.mu - params.gamma * params.sigma**2 / 2.0,
    )


def degenerate_regime(params: MarketParams) -> AllocationRegime:
    """Classify the parameters into interior or buy-and-hold regimes.

    When the frictionless weight falls outside (0, 1), holding the
    corresponding corner portfolio without ever trading is long-run optimal;
    the free-boundary problem only applies in the interior regime.
    """
    y_star = params.merton_weight
    if y_star <= 0.0:
        return AllocationRegime.FULL_SAFE
    if y_star >= 1.0:
        return AllocationRegime.FULL_RISKY
    return AllocationRegime.INTERIOR


def buy_and_hold_esr(params: MarketParams) -> float:
    """Equivalent safe rate of the optimal buy-and-hold corner.

    Only defined in the degenerate regimes; raises ``ValueError`` for
    interior parameters, where the free-boundary solver is required.
    """
    regime = degenerate_regime(params)
    if regime is AllocationRegime.FULL_SAFE:
        return 0.0
    if regime is AllocationRegime.FULL_RISKY:
        return baseline(params).full_risky_esr
    raise ValueError(
        "interior regime has no buy-and-hold optimum; solve the free-boundary "
        "problem instead"
    )
