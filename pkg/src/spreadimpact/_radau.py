"""Adaptive scalar Radau IIA (order 5) integrator with guard events.

The shooting legs of the free-boundary problem are scalar, severely stiff
near the endpoints, and are integrated tens of thousands of times per solve,
so a stepper specialized to scalar problems pays for itself: plain-float
Newton iterations, an analytic Jacobian, terminal guards checked per step,
and per-step cubic dense output. Collocation coefficients, the transformed
Newton solve, and the step-size controller follow the classical RADAU5
construction (Hairer & Wanner, Solving ODEs II, Sec. IV.8).

Guards terminate integration when the state leaves a caller-supplied box;
both plain thresholds on q and a threshold on the product q*y are supported,
the latter catching trajectories that climb toward the singular curve
q = 1/y whose approach otherwise stalls any error-controlled stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["GuardBox", "IntegrationResult", "integrate_guarded"]

_S6 = math.sqrt(6.0)
# Collocation nodes and embedded-error weights.
_C1 = (4.0 - _S6) / 10.0
_C2 = (4.0 + _S6) / 10.0
_E1 = (-13.0 - 7.0 * _S6) / 3.0
_E2 = (-13.0 + 7.0 * _S6) / 3.0
_E3 = -1.0 / 3.0
# Inverse eigenvalues of the Runge-Kutta matrix: one real, one complex pair.
_MU_REAL = 3.0 + 3.0 ** (2.0 / 3.0) - 3.0 ** (1.0 / 3.0)
_MU_COMPLEX = complex(
    3.0 + 0.5 * (3.0 ** (1.0 / 3.0) - 3.0 ** (2.0 / 3.0)),
    -0.5 * (3.0 ** (5.0 / 6.0) + 3.0 ** (7.0 / 6.0)),
)
# Transformation between stage increments Z and working variables W.
_T11, _T12, _T13 = 0.09443876248897524, -0.14125529502095421, 0.03002919410514742
_T21, _T22, _T23 = 0.25021312296533332, 0.20412935229379994, -0.38294211275726192
_T31, _T32, _T33 = 1.0, 1.0, 0.0
_TI11, _TI12, _TI13 = 4.17871859155190428, 0.32768282076106237, 0.52337644549944951
_TI21, _TI22, _TI23 = -4.17871859155190428, -0.32768282076106237, 0.47662355450055044
_TI31, _TI32, _TI33 = 0.50287263494578682, -2.57192694985560522, 0.59603920482822492
# Dense-output polynomial in the scaled step variable.
_P11, _P12, _P13 = 13.0 / 3.0 + 7.0 * _S6 / 3.0, -23.0 / 3.0 - 22.0 * _S6 / 3.0, 10.0 / 3.0 + 5.0 * _S6
_P21, _P22, _P23 = 13.0 / 3.0 - 7.0 * _S6 / 3.0, -23.0 / 3.0 + 22.0 * _S6 / 3.0, 10.0 / 3.0 - 5.0 * _S6
_P31, _P32, _P33 = 1.0 / 3.0, -8.0 / 3.0, 10.0 / 3.0

_NEWTON_MAXITER = 6
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_EPS = float(np.finfo(float).eps)

REACHED = "reached"
GUARD_UPPER = "upper"
GUARD_LOWER = "lower"
STALLED = "stalled"


@dataclass(frozen=True)
class GuardBox:
    """Terminal region: stop when q >= upper_q, q <= lower_q, or q*t >= upper_qt."""

    upper_q: float = math.inf
    lower_q: float = -math.inf
    upper_qt: float = math.inf

    def breach(self, t: float, q: float) -> str | None:
        if q >= self.upper_q or q * t >= self.upper_qt:
            return GUARD_UPPER
        if q <= self.lower_q:
            return GUARD_LOWER
        return None


@dataclass
class IntegrationResult:
    """Accepted mesh, per-step dense cubics, and the termination status.

    On each accepted step ``[ts[i], ts[i+1]]`` the solution is
    ``ys[i] + x*(Q[i,0] + x*(Q[i,1] + x*Q[i,2]))`` with
    ``x = (t - ts[i]) / (ts[i+1] - ts[i])``; evaluation is exposed through
    :meth:`sol`. ``t_end``/``y_end`` refine the guard crossing when the run
    ended on a guard.
    """

    status: str
    ts: np.ndarray
    ys: np.ndarray
    q_poly: np.ndarray
    t_end: float
    y_end: float
    nfev: int = 0
    njev: int = 0
    naccepted: int = 0

    def sol(self, t):
        """Evaluate the piecewise collocation cubic at t (scalar or array)."""
        t_arr = np.asarray(t, dtype=float)
        ts = self.ts
        if ts[0] <= ts[-1]:
            idx = np.clip(np.searchsorted(ts, t_arr, side="right") - 1, 0, len(ts) - 2)
        else:
            idx = np.clip(
                len(ts) - 1 - np.searchsorted(ts[::-1], t_arr, side="left"),
                0,
                len(ts) - 2,
            )
        t0 = ts[idx]
        h = ts[idx + 1] - t0
        x = (t_arr - t0) / h
        poly = self.q_poly[idx]
        out = self.ys[idx] + x * (poly[..., 0] + x * (poly[..., 1] + x * poly[..., 2]))
        if np.ndim(t) == 0:
            return float(out)
        return out


def _initial_step(f, t0, q0, f0, direction, t_bound, rtol, atol):
    """Error-model-based first step (same construction as RADAU5 drivers)."""
    scale = atol + abs(q0) * rtol
    d0 = abs(q0 / scale)
    d1 = abs(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, abs(t_bound - t0))
    q1 = q0 + h0 * direction * f0
    f1 = f(t0 + h0 * direction, q1)
    if math.isfinite(f1):
        d2 = abs((f1 - f0) / scale) / h0
    else:
        d2 = math.inf
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 4.0)
    return min(100.0 * h0, h1, abs(t_bound - t0))


def _refine_guard_crossing(guard, t_old, h, y_old, p0, p1, p2, t_new, y_new):
    """Bisect the step cubic for the earliest point inside the guard region."""
    def value(x):
        return y_old + x * (p0 + x * (p1 + x * p2))

    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if guard.breach(t_old + mid * h, value(mid)):
            hi = mid
        else:
            lo = mid
    return t_old + hi * h, value(hi)


def integrate_guarded(f, jac, t0, t_bound, q0, rtol, atol,
                      guard: GuardBox | None = None,
                      max_steps: int = 200000,
                      first_step: float | None = None,
                      max_step: float = math.inf) -> IntegrationResult:
    """Integrate dq/dt = f(t, q) from t0 to t_bound with terminal guards.

    Parameters
    ----------
    f, jac : callable
        Right-hand side and its dq-derivative, both ``(t, q) -> float``.
        Either may return non-finite values outside the meaningful domain;
        the Newton iteration treats that as a failed trial and retries with
        a smaller step.
    rtol, atol : float
        Local error is kept below ``atol + rtol * |q|`` per step.
    guard : GuardBox, optional
        Terminal region; crossing it ends the run with status "upper" or
        "lower" and the crossing point refined on the step cubic.
    """
    direction = 1.0 if t_bound >= t0 else -1.0
    f0 = f(t0, q0)
    nfev = 1
    njev = 0
    if not math.isfinite(f0):
        raise ValueError(f"right-hand side not finite at the start point t={t0!r}")
    if first_step is None:
        h_abs = _initial_step(f, t0, q0, f0, direction, t_bound, rtol, atol)
        nfev += 1
    else:
        h_abs = min(abs(first_step), abs(t_bound - t0))
    h_abs = min(h_abs, max_step)

    newton_tol = max(10.0 * _EPS / rtol, min(0.03, rtol**0.5))

    t = t0
    q = q0
    fq = f0
    J = jac(t0, q0)
    njev += 1
    current_jac = True
    lu_real = None
    lu_complex = None
    h_abs_old = None
    error_norm_old = None
    sol_prev = None  # (t_old, h, y_old, p0, p1, p2) of the last accepted step

    ts = [t0]
    ys = [q0]
    polys = []
    status = None
    t_end = t0
    y_end = q0

    n_acc = 0
    for _ in range(max_steps):
        if direction * (t - t_bound) >= 0.0:
            status = REACHED
            t_end, y_end = t, q
            break

        min_step = 10.0 * abs(math.nextafter(t, direction * math.inf) - t)
        if h_abs < min_step:
            h_abs = min_step
        rejected = False
        step_accepted = False
        while not step_accepted:
            if h_abs < min_step:
                status = STALLED
                t_end, y_end = t, q
                break
            h = h_abs * direction
            t_new = t + h
            if direction * (t_new - t_bound) > 0.0:
                t_new = t_bound
            h = t_new - t
            h_abs = abs(h)

            # Stage predictor from the previous dense polynomial.
            if sol_prev is None:
                z1_0 = z2_0 = z3_0 = 0.0
            else:
                pt_old, ph, py_old, pp0, pp1, pp2 = sol_prev
                def _prev(tt):
                    x = (tt - pt_old) / ph
                    return py_old + x * (pp0 + x * (pp1 + x * pp2))
                z1_0 = _prev(t + _C1 * h) - q
                z2_0 = _prev(t + _C2 * h) - q
                z3_0 = _prev(t + h) - q

            scale = atol + abs(q) * rtol

            converged = False
            n_iter = 0
            while not converged:
                if lu_real is None or lu_complex is None:
                    lu_real = _MU_REAL / h - J
                    lu_complex = _MU_COMPLEX / h - J
                    if lu_real == 0.0 or lu_complex == 0.0:
                        lu_real = lu_complex = None
                        h_abs *= 0.99
                        break

                z1, z2, z3 = z1_0, z2_0, z3_0
                w1 = _TI11 * z1 + _TI12 * z2 + _TI13 * z3
                w2 = _TI21 * z1 + _TI22 * z2 + _TI23 * z3
                w3 = _TI31 * z1 + _TI32 * z2 + _TI33 * z3
                m_real = _MU_REAL / h
                m_complex = _MU_COMPLEX / h

                dw_norm_old = None
                rate = None
                for k_newton in range(_NEWTON_MAXITER):
                    f1 = f(t + _C1 * h, q + z1)
                    f2 = f(t + _C2 * h, q + z2)
                    f3 = f(t_new, q + z3)
                    nfev += 3
                    if not (math.isfinite(f1) and math.isfinite(f2)
                            and math.isfinite(f3)):
                        break
                    f_real = (_TI11 * f1 + _TI12 * f2 + _TI13 * f3
                              - m_real * w1)
                    f_comp = complex(
                        _TI21 * f1 + _TI22 * f2 + _TI23 * f3,
                        _TI31 * f1 + _TI32 * f2 + _TI33 * f3,
                    ) - m_complex * complex(w2, w3)
                    dw1 = f_real / lu_real
                    dwc = f_comp / lu_complex
                    dw2 = dwc.real
                    dw3 = dwc.imag
                    dw_norm = math.sqrt(
                        (dw1 * dw1 + dw2 * dw2 + dw3 * dw3) / 3.0
                    ) / scale
                    if dw_norm_old is not None and dw_norm_old > 0.0:
                        rate = dw_norm / dw_norm_old
                    if rate is not None and (
                        rate >= 1.0
                        or rate ** (_NEWTON_MAXITER - k_newton) / (1.0 - rate)
                        * dw_norm > newton_tol
                    ):
                        break
                    w1 += dw1
                    w2 += dw2
                    w3 += dw3
                    z1 = _T11 * w1 + _T12 * w2 + _T13 * w3
                    z2 = _T21 * w1 + _T22 * w2 + _T23 * w3
                    z3 = _T31 * w1 + _T32 * w2
                    if dw_norm == 0.0 or (
                        rate is not None
                        and rate / (1.0 - rate) * dw_norm < newton_tol
                    ):
                        converged = True
                        break
                    dw_norm_old = dw_norm
                n_iter = k_newton + 1

                if not converged:
                    if not current_jac:
                        J = jac(t, q)
                        njev += 1
                        current_jac = True
                        lu_real = lu_complex = None
                        continue
                    break

            if not converged:
                h_abs *= 0.5
                rejected = True
                lu_real = lu_complex = None
                continue

            q_new = q + z3
            ze = (_E1 * z1 + _E2 * z2 + _E3 * z3) / h
            error = (fq + ze) / lu_real
            scale_err = atol + max(abs(q), abs(q_new)) * rtol
            error_norm = abs(error) / scale_err
            safety = 0.9 * (2.0 * _NEWTON_MAXITER + 1.0) / (
                2.0 * _NEWTON_MAXITER + n_iter
            )

            if rejected and error_norm > 1.0:
                f_probe = f(t, q + error)
                nfev += 1
                if math.isfinite(f_probe):
                    error = (f_probe + ze) / lu_real
                    error_norm = abs(error) / scale_err

            if error_norm > 1.0:
                if error_norm_old is None or h_abs_old is None or error_norm == 0.0:
                    multiplier = 1.0
                else:
                    multiplier = (h_abs / h_abs_old
                                  * (error_norm_old / error_norm) ** 0.25)
                factor = min(1.0, multiplier) * error_norm ** -0.25
                h_abs *= max(_MIN_FACTOR, safety * factor)
                lu_real = lu_complex = None
                rejected = True
                continue
            step_accepted = True

        if status is not None:
            break

        # Dense cubic for this step.
        p0 = z1 * _P11 + z2 * _P21 + z3 * _P31
        p1 = z1 * _P12 + z2 * _P22 + z3 * _P32
        p2 = z1 * _P13 + z2 * _P23 + z3 * _P33

        recompute_jac = n_iter > 2 and (rate is not None and rate > 1e-3)
        if error_norm_old is None or h_abs_old is None or error_norm == 0.0:
            multiplier = 1.0
        else:
            multiplier = (h_abs / h_abs_old
                          * (error_norm_old / error_norm) ** 0.25)
        if error_norm > 0.0:
            factor = min(1.0, multiplier) * error_norm ** -0.25
        else:
            factor = _MAX_FACTOR
        factor = min(_MAX_FACTOR, safety * factor)
        if not recompute_jac and factor < 1.2:
            factor = 1.0
        else:
            lu_real = lu_complex = None

        f_new = f(t_new, q_new)
        nfev += 1
        if not math.isfinite(f_new):
            # Accepted state sits outside the meaningful domain; only
            # acceptable if a guard explains it.
            if guard is not None and guard.breach(t_new, q_new):
                f_new = 0.0
            else:
                status = STALLED
                t_end, y_end = t, q
                break
        if recompute_jac:
            J = jac(t_new, q_new)
            njev += 1
            current_jac = True
            lu_real = lu_complex = None
        else:
            current_jac = False

        h_abs_old = h_abs
        error_norm_old = error_norm
        h_abs = min(h_abs * factor, max_step)

        sol_prev = (t, h, q, p0, p1, p2)
        ts.append(t_new)
        ys.append(q_new)
        polys.append((p0, p1, p2))
        n_acc += 1

        breach = guard.breach(t_new, q_new) if guard is not None else None
        if breach is not None:
            t_end, y_end = _refine_guard_crossing(
                guard, t, h, q, p0, p1, p2, t_new, q_new
            )
            status = breach
            break

        t = t_new
        q = q_new
        fq = f_new
    else:
        status = STALLED
        t_end, y_end = t, q

    if status == REACHED:
        t_end, y_end = t, q
    if not polys:
        # No accepted step: degenerate one-point result.
        ts = [t0, t0]
        ys = [q0, q0]
        polys = [(0.0, 0.0, 0.0)]
    return IntegrationResult(
        status=status,
        ts=np.asarray(ts),
        ys=np.asarray(ys),
        q_poly=np.asarray(polys),
        t_end=t_end,
        y_end=y_end,
        nfev=nfev,
        njev=njev,
        naccepted=n_acc,
    )
