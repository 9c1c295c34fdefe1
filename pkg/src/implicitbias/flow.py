"""Gradient flow dw/dt = -grad L(w) and closed-form oracles on the two-point set.

The canonical dataset is {(1, 0), (0, 2)}.  Its two coordinates decouple, so the
flow has explicit solutions for the exponential, power-law and
sub-poly-exponential losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .losses import LossSpec, gradient, total_loss
from .maxmargin import MaxMarginSolution


@dataclass
class FlowResult:
    times: np.ndarray
    states: np.ndarray
    loss: np.ndarray
    closed_form_error: float | None = None
    terminal_ratio: float | None = None
    meta: dict = field(default_factory=dict)


def flow_time_grid(t_max: float, per_decade: int = 10, t_min: float = 1e-2) -> np.ndarray:
    """0 followed by a geometric grid up to t_max."""
    if t_max <= 0:
        return np.array([0.0])
    lo = min(t_min, t_max)
    n = max(2, int(math.ceil(per_decade * math.log10(t_max / lo))) + 1)
    grid = np.geomspace(lo, t_max, n)
    grid[-1] = t_max
    return np.r_[0.0, grid]


def integrate_flow(spec: LossSpec, ds, w0, t_max: float, closed_form=None, times=None,
                   rtol: float = 1e-12, atol: float = 1e-12) -> FlowResult:
    """Integrate the flow with an embedded Dormand-Prince pair.

    Time is reparametrized as s = log(1 + t) so that the slowly decaying
    dynamics are resolved with roughly uniform steps per decade.
    ``closed_form(t, w0)`` returns the exact states, shape (len(t), d).
    """
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (ds.dim,) or not np.all(np.isfinite(w0)):
        raise ValueError("w0 must be a finite vector of the dataset dimension")
    times = flow_time_grid(t_max) if times is None else np.asarray(times, dtype=float)
    if t_max <= 0 or times[-1] <= 0:
        states = w0[None, :].copy()
        times = np.array([0.0])
    else:
        def rhs(s, w):
            return -math.exp(s) * gradient(spec, ds, w)

        s_eval = np.log1p(times)
        sol = integrate.solve_ivp(rhs, (0.0, float(s_eval[-1])), w0, method="DOP853",
                                  t_eval=s_eval, rtol=rtol, atol=atol)
        if sol.status != 0:
            raise RuntimeError(f"flow integration failed near t={math.expm1(sol.t[-1]):.6g}: {sol.message}")
        states = sol.y.T
        if not np.all(np.isfinite(states)):
            raise RuntimeError("flow produced non-finite states")
    try:
        loss = np.array([total_loss(spec, ds, w) for w in states])
    except ValueError:
        # the loss itself diverges (sub-poly-exponential with eps <= 1); the flow is still defined
        loss = np.full(len(states), np.nan)
    err = None
    if closed_form is not None:
        ref = np.asarray(closed_form(times, w0), dtype=float)
        err = float(np.max(np.abs(states - ref) / np.maximum(np.abs(ref), 1e-300)))
    ratio = float(states[-1, 0] / states[-1, 1]) if ds.dim == 2 and states[-1, 1] != 0 else None
    return FlowResult(times, states, loss, err, ratio, {"loss": spec.to_dict()})


# ---------------------------------------------------------------------------
# closed forms on {(1, 0), (0, 2)}

def exp_closed_form(t, w0):
    """w1 = log(t + e^{w1(0)}), w2 = log(4t + e^{2 w2(0)}) / 2."""
    t = np.asarray(t, dtype=float)
    w1 = np.log(t + math.exp(w0[0]))
    w2 = 0.5 * np.log(4.0 * t + math.exp(2.0 * w0[1]))
    return np.stack([w1, w2], axis=-1)


def powerlaw_closed_form(t, w0):
    """w1 = (3t + w1(0)^3)^(1/3), w2 = (1.5t + w2(0)^3)^(1/3), valid while w1 > 1 and 2 w2 > 1."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    w1 = np.cbrt(3.0 * t + w0[0] ** 3)
    w2 = np.cbrt(1.5 * t + w0[1] ** 3)
    return np.stack([w1, w2], axis=-1)


POWERLAW_RATIO_LIMIT = 2.0 ** (1.0 / 3.0)


def _subpoly_check(t, w0):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    if not (w0[0] > 1.0 and 2.0 * w0[1] > 1.0):
        raise ValueError("closed form needs w1(0) > 1 and 2 w2(0) > 1")


def subpoly_closed_form_log(t, w0, eps: float):
    """(log w1, log w2) with w1 = exp(log^{1/eps}(t + C1)), w2 = exp(log^{1/eps}(4t + C2)) / 2.

    C1 = exp(log^eps w1(0)), C2 = exp(log^eps(2 w2(0))).  Evaluated through
    logaddexp so that the constants never overflow.
    """
    _subpoly_check(t, w0)
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        lt = np.log(t)
    logC1 = math.log(w0[0]) ** eps
    logC2 = math.log(2.0 * w0[1]) ** eps
    lw1 = np.logaddexp(lt, logC1) ** (1.0 / eps)
    lw2 = np.logaddexp(lt + math.log(4.0), logC2) ** (1.0 / eps) - math.log(2.0)
    return lw1, lw2


def subpoly_closed_form(t, w0, eps: float):
    lw1, lw2 = subpoly_closed_form_log(t, w0, eps)
    with np.errstate(over="ignore"):
        return np.stack([np.exp(lw1), np.exp(lw2)], axis=-1)


def subpoly_ratio(t, w0, eps: float):
    """w1/w2 computed as exp(log w1 - log w2)."""
    lw1, lw2 = subpoly_closed_form_log(t, w0, eps)
    return np.exp(lw1 - lw2)


def closed_form_for(spec: LossSpec):
    """Closed-form oracle matching ``spec`` on the canonical set, or None."""
    if spec.family == "exp":
        return exp_closed_form
    if spec.family == "powerlaw":
        return powerlaw_closed_form
    if spec.family == "subpolyexp":
        eps = spec.epsilon
        return lambda t, w0: subpoly_closed_form(t, w0, eps)
    return None


# ---------------------------------------------------------------------------
# direction report

@dataclass
class DirectionReport:
    classification: str
    terminal_angle: float | None
    relative_change: float | None
    monotone: bool | None
    t_end: float | None


def direction_limit_report(flow: FlowResult, sol: MaxMarginSolution, stall_tol: float = 1e-3) -> DirectionReport:
    """Classify the flow direction against w_hat over its last decade.

    converging: angle strictly decreasing over the last decade and still
    moving; diverging: angle has stalled (relative change below ``stall_tol``)
    at a nonzero value; indeterminate otherwise or with too few samples.
    """
    times, states = flow.times, flow.states
    if len(times) < 2:
        return DirectionReport("indeterminate", None, None, None, None)
    uh = sol.w_hat / np.linalg.norm(sol.w_hat)
    nrm = np.linalg.norm(states, axis=1)
    keep = nrm > 0
    cosv = np.clip((states[keep] @ uh) / nrm[keep], -1.0, 1.0)
    ang = np.arccos(cosv)
    tk = times[keep]
    t_end = float(tk[-1])
    sel = tk >= t_end / 10.0
    if sel.sum() < 2:
        return DirectionReport("indeterminate", float(ang[-1]), None, None, t_end)
    a = ang[sel]
    monotone = bool(np.all(np.diff(a) < 0))
    end = float(a[-1])
    if end == 0.0:
        return DirectionReport("converging", end, 0.0, monotone, t_end)
    rel = float((a[0] - a[-1]) / end)
    if abs(rel) < stall_tol:
        cls = "diverging"
    elif monotone:
        cls = "converging"
    else:
        cls = "indeterminate"
    return DirectionReport(cls, end, rel, monotone, t_end)
