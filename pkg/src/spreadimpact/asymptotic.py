"""Small-cost expansion: rescaled Riccati problem and its closed-form pieces.

With the impact cost tied to the spread through lam = K eps^(4/3), the
no-trade band shrinks like eps^(1/3) around the frictionless weight and the
welfare loss like eps^(2/3). In the stretched variable z = (y - y*)/eps^(1/3)
the equation reduces to a Riccati problem whose buy-region solution r_B has a
closed form in terms of the ratio of two decaying Whittaker functions. The
rescaled buy boundary z_minus is the most negative root of
r_B(z, l(z)) = 1, with l(z) the welfare coefficient implied by the explicit
odd cubic solving the mid-band equation.

Everything downstream (approximate rate, boundaries, turnover, and the
near-boundary slope constants) is assembled here. Where the Whittaker route
loses too many digits, r_B is recovered by integrating the Riccati equation
inward from a far-field start; the same integration doubles as the
independent cross-check of the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._radau import REACHED, integrate_guarded
from .market import MarketParams, validate
from .whittaker import CancellationError, whittaker_w_ratio

__all__ = [
    "AsymptoticInputs",
    "AsymptoticSolution",
    "NoRootError",
    "asymptotic_policy",
    "find_z_minus",
    "midfield_r",
    "near_boundary_slope",
    "r_buy",
    "welfare_coefficient",
]

# Second Whittaker index used throughout the closed form.
_M_INDEX = -0.25
# Scan controls for the z_minus search: the spread-only half-width scales
# like (y*(1-y*))^(2/3), so this window covers every sane coupling K.
_SCAN_FACTOR = 50.0
_SCAN_POINTS = 20000
_Z_EPS = 1e-4
_ROOT_ACCEPT = 1e-6


class NoRootError(RuntimeError):
    """No admissible root of r_B(z, l(z)) = 1 in the scan window."""

    def __init__(self, message: str, scan_z=None, scan_f=None):
        super().__init__(message)
        self.scan_z = scan_z
        self.scan_f = scan_f


@dataclass(frozen=True)
class AsymptoticInputs:
    """Market parameters plus the spread/impact coupling K = lam/eps^(4/3)."""

    params: MarketParams
    K: float

    @classmethod
    def from_params(cls, params: MarketParams,
                    K: float | None = None) -> "AsymptoticInputs":
        validate(params)
        if K is None:
            if params.epsilon <= 0.0 or params.lam <= 0.0:
                raise ValueError(
                    "the coupling K = lambda/epsilon^(4/3) needs positive "
                    "epsilon and lambda (or pass K explicitly)"
                )
            K = params.lam / params.epsilon ** (4.0 / 3.0)
        if not K > 0.0:
            raise ValueError(f"K must be positive, got {K!r}")
        return cls(params=params, K=K)

    @property
    def y_star(self) -> float:
        return self.params.merton_weight

    @property
    def curvature_scale(self) -> float:
        """sigma^2 y*^2 (1 - y*)^2, the diffusion scale at the target."""
        p = self.params
        y = self.y_star
        return p.sigma**2 * y * y * (1.0 - y) ** 2

    @property
    def growth_slope(self) -> float:
        """sqrt(2 K gamma sigma^2): far-field slope of the rescaled solution."""
        p = self.params
        return math.sqrt(2.0 * self.K * p.gamma * p.sigma**2)


@dataclass(frozen=True)
class AsymptoticSolution:
    """Root of the expansion and every constant derived from it.

    ``a``, ``c``, ``k`` parameterize the Whittaker representation;
    ``x_minus``, ``D``, ``E``, ``F`` are the near-boundary constants, with F
    the slope of r_B - 1 at the buy boundary. First-order formulas:
    rate ~ frictionless - eps^(2/3) l, boundaries ~ y* -+ |z_minus| eps^(1/3).
    """

    inputs: AsymptoticInputs
    z_minus: float
    l: float
    a: float
    c: float
    k: float
    x_minus: float
    D: float
    E: float
    F: float
    beta_approx: float
    y_minus_approx: float
    y_plus_approx: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def z_plus(self) -> float:
        return -self.z_minus

    def to_json_dict(self) -> dict:
        return {
            "z_minus": self.z_minus,
            "l": self.l,
            "a": self.a,
            "c": self.c,
            "k": self.k,
            "x_minus": self.x_minus,
            "D": self.D,
            "E": self.E,
            "F": self.F,
            "beta_approx": self.beta_approx,
            "y_minus_approx": self.y_minus_approx,
            "y_plus_approx": self.y_plus_approx,
            "K": self.inputs.K,
            "params": self.inputs.params.to_dict(),
        }


def midfield_r(z: float, l: float, params: MarketParams) -> float:
    """Explicit odd solution of the no-trade-band equation."""
    y = params.merton_weight
    v2 = params.sigma**2 * y * y * (1.0 - y) ** 2
    gs2 = params.gamma * params.sigma**2
    return (2.0 / v2) * (gs2 * z**3 / 6.0 - l * z)


def welfare_coefficient(z_minus: float, params: MarketParams) -> float:
    """l(z_minus): the value of l for which the mid-band cubic passes
    through 1 at z_minus (equivalently -1 at -z_minus, by oddness)."""
    y = params.merton_weight
    v2 = params.sigma**2 * y * y * (1.0 - y) ** 2
    gs2 = params.gamma * params.sigma**2
    return gs2 * z_minus**2 / 6.0 - v2 / (2.0 * z_minus)


def _whittaker_r_buy(z: float, l: float, inputs: AsymptoticInputs) -> float:
    """Closed-form r_B(z, l) for z < 0 via the Whittaker-function ratio."""
    S = inputs.growth_slope
    a = 1.0 / (2.0 * inputs.K * inputs.curvature_scale)
    c = 2.0 * l / inputs.curvature_scale
    k = c / (4.0 * S)
    x = a * S * z * z
    ratio = whittaker_w_ratio(k, _M_INDEX, x)
    g_const = (1.0 + c / S) / (2.0 * a)
    return -g_const / z + 1.0 + S * z - (2.0 / (a * z)) * ratio


def _riccati_r_buy(z: float, l: float, inputs: AsymptoticInputs) -> float:
    """r_B(z, l) for z < 0 by integrating the buy-region Riccati equation
    inward from a far-field start where the solution is linear."""
    S = inputs.growth_slope
    v2 = inputs.curvature_scale
    gs2 = inputs.params.gamma * inputs.params.sigma**2
    four_k = 4.0 * inputs.K
    z_far = -10.0 * max(1.0, abs(z))
    r_far = -S * z_far + 1.0

    def rhs(t, r):
        return (gs2 * t * t / 2.0 - l - (r - 1.0) ** 2 / four_k) / (0.5 * v2)

    def jac(t, r):
        return -(r - 1.0) / (2.0 * inputs.K) / (0.5 * v2)

    result = integrate_guarded(rhs, jac, z_far, z, r_far, 1e-10, 1e-12)
    if result.status != REACHED:
        raise ArithmeticError(
            f"Riccati integration for r_B failed at z={z!r} "
            f"(status {result.status})"
        )
    return result.y_end


def r_buy(z: float, l: float, inputs: AsymptoticInputs,
          method: str = "auto") -> float:
    """Buy-region solution r_B(z, l) of the rescaled equation.

    Defined for all z != 0 through the reflection r_B(-z) = 2 - r_B(z).
    ``method`` selects the evaluation route: "whittaker", "riccati", or
    "auto" (closed form with fallback to integration when the special
    functions report a loss of significance).
    """
    if z == 0.0:
        raise ValueError("r_buy is singular at z = 0")
    if z > 0.0:
        return 2.0 - r_buy(-z, l, inputs, method=method)
    if method == "riccati":
        return _riccati_r_buy(z, l, inputs)
    if method == "whittaker":
        return _whittaker_r_buy(z, l, inputs)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    try:
        return _whittaker_r_buy(z, l, inputs)
    except CancellationError:
        return _riccati_r_buy(z, l, inputs)


def find_z_minus(inputs: AsymptoticInputs) -> AsymptoticSolution:
    """Locate the rescaled buy boundary and assemble the expansion constants.

    Scans r_B(z, l(z)) - 1 on a dense window of negative z, bisects every
    bracketed sign change to 1e-12, discards crossings that are poles of the
    Whittaker ratio rather than roots, and keeps the most negative root.
    All located roots are reported in the diagnostics.
    """
    params = inputs.params
    y = inputs.y_star
    half_width_scale = (y * (1.0 - y)) ** (2.0 / 3.0)
    z_lo = -_SCAN_FACTOR * half_width_scale
    z_hi = -_Z_EPS

    def f_scan(z: float) -> float:
        # Scan with the closed form only; points where it loses significance
        # are recorded as gaps rather than paid for with an integration.
        try:
            return r_buy(z, welfare_coefficient(z, params), inputs,
                         method="whittaker") - 1.0
        except ArithmeticError:
            return math.nan

    def f_exact(z: float) -> float:
        return r_buy(z, welfare_coefficient(z, params), inputs) - 1.0

    zs = np.linspace(z_lo, z_hi, _SCAN_POINTS)
    fs = np.array([f_scan(float(z)) for z in zs])

    roots: list[float] = []
    rejected: list[float] = []
    sign = np.signbit(fs)
    for i in range(len(zs) - 1):
        if math.isnan(fs[i]) or math.isnan(fs[i + 1]):
            continue
        if sign[i] == sign[i + 1]:
            continue
        if min(abs(fs[i]), abs(fs[i + 1])) > 0.5:
            # Sign flip through a pole of the Whittaker ratio, not a root.
            rejected.append(float(zs[i]))
            continue
        lo, hi = float(zs[i]), float(zs[i + 1])
        flo = fs[i]
        for _ in range(48):  # bisection to ~1e-12 on a unit-scale window
            mid = 0.5 * (lo + hi)
            fmid = f_scan(mid)
            if math.isnan(fmid):
                break
            if (fmid < 0.0) == (flo < 0.0):
                lo, flo = mid, fmid
            else:
                hi = mid
            if hi - lo < 1e-12:
                break
        candidate = 0.5 * (lo + hi)
        try:
            residual = abs(f_exact(candidate))
        except ArithmeticError:
            residual = math.inf
        if residual <= _ROOT_ACCEPT:
            roots.append(candidate)
        else:
            rejected.append(candidate)

    if not roots:
        raise NoRootError(
            f"no root of the boundary equation in [{z_lo:g}, {z_hi:g}] "
            f"for K={inputs.K:g}",
            scan_z=zs,
            scan_f=fs,
        )

    z_minus = min(roots)
    l = welfare_coefficient(z_minus, params)
    S = inputs.growth_slope
    v2 = inputs.curvature_scale
    a = 1.0 / (2.0 * inputs.K * v2)
    c = 2.0 * l / v2
    k = c / (4.0 * S)
    x_minus = a * S * z_minus**2
    g_const = (1.0 + c / S) / (2.0 * a)
    m = _M_INDEX
    D = 0.5 * (1.0 - g_const / (S * z_minus**2))
    E = D * (
        D
        - 2.0 / x_minus
        - (1.0 / x_minus**2)
        * (
            (1.0 / D) * (m - (k + 1.0) + 0.5) * (m + (k + 1.0) - 0.5)
            - (2.0 * (k + 1.0) * x_minus - x_minus**2)
        )
    )
    F = (
        g_const / z_minus**2
        + S
        - 2.0 * S * (D + 2.0 * a * S * E * z_minus**2)
    )

    eps = params.epsilon
    frictionless = params.mu**2 / (2.0 * params.gamma * params.sigma**2)
    if eps > 0.0:
        beta_approx = frictionless - eps ** (2.0 / 3.0) * l
        y_minus_approx = y + z_minus * eps ** (1.0 / 3.0)
        y_plus_approx = y - z_minus * eps ** (1.0 / 3.0)
    else:
        beta_approx = frictionless
        y_minus_approx = y_plus_approx = y

    return AsymptoticSolution(
        inputs=inputs,
        z_minus=z_minus,
        l=l,
        a=a,
        c=c,
        k=k,
        x_minus=x_minus,
        D=D,
        E=E,
        F=F,
        beta_approx=beta_approx,
        y_minus_approx=y_minus_approx,
        y_plus_approx=y_plus_approx,
        diagnostics={
            "roots": roots,
            "rejected_crossings": rejected,
            "scan_window": [z_lo, z_hi],
        },
    )


def asymptotic_policy(y: float, sol: AsymptoticSolution,
                      inputs: AsymptoticInputs | None = None) -> float:
    """Leading-order turnover at risky weight y.

    Buy side: (r_B(z) - 1) eps^(-1/3) / 2K for z below z_minus; sell side
    the mirror image through r_S = r_B - 2; zero in between.
    """
    inputs = inputs or sol.inputs
    eps = inputs.params.epsilon
    if eps <= 0.0:
        raise ValueError("the policy expansion needs epsilon > 0")
    z = (y - inputs.y_star) * eps ** (-1.0 / 3.0)
    if sol.z_minus <= z <= sol.z_plus:
        return 0.0
    pref = eps ** (-1.0 / 3.0) / (2.0 * inputs.K)
    if z < sol.z_minus:
        return pref * (r_buy(z, sol.l, inputs) - 1.0)
    # r_S(z) + 1 = r_B(z) - 1 = -(r_B(-z) - 1) by the reflection identity.
    return -pref * (r_buy(-z, sol.l, inputs) - 1.0)


def near_boundary_slope(sol: AsymptoticSolution,
                        inputs: AsymptoticInputs | None = None
                        ) -> tuple[float, float]:
    """d(turnover)/dy just outside each trading boundary.

    Both slopes equal F eps^(-2/3) / 2K: the friction bracket vanishes at
    the boundaries, so the rescaled solution leaves them with the same
    slope F on the buy and sell sides.
    """
    inputs = inputs or sol.inputs
    eps = inputs.params.epsilon
    if eps <= 0.0:
        raise ValueError("the slope expansion needs epsilon > 0")
    slope = eps ** (-2.0 / 3.0) / (2.0 * inputs.K) * sol.F
    return slope, slope
