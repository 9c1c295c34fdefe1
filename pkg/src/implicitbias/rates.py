"""Closed-form rate predictions and empirical rate fitting.

g(t) is the scale of the iterate along w_hat.  For a poly-exponential tail it
has an explicit two-term form; for a generic tail ``-l'(u) = exp(-f(u))`` it
solves ``dg/dt = exp(-f(g))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .maxmargin import MaxMarginSolution, solve_a


def g_poly_exp(t, nu: float):
    """log^{1/nu} t + (1/nu) log(nu log^{1-1/nu} t) log^{1/nu-1} t, for t > e."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= math.e):
        raise ValueError("g_poly_exp needs t > e")
    if nu <= 0:
        raise ValueError("nu must be positive")
    L = np.log(t)
    g = L ** (1.0 / nu) + (1.0 / nu) * np.log(nu * L ** (1.0 - 1.0 / nu)) * L ** (1.0 / nu - 1.0)
    return float(g) if g.ndim == 0 else g


# ---------------------------------------------------------------------------
# constants

@dataclass(frozen=True)
class Table1Constants:
    C1: float
    C2: float
    C3: float
    C2_printed: float
    cos_a: float


def table1_constants(sol: MaxMarginSolution, a=None) -> Table1Constants:
    """Leading constants of the distance, angle and margin gaps.

    C2 is the second-order angle constant (1 - cos^2) ||a||^2 / (2 ||w_hat||^2),
    which equals C1^2 / 2.  ``C2_printed`` keeps the alternative expression
    (1/4 - cos^2) 2 ||a||^2 / ||w_hat||^2; the two agree only when a is
    orthogonal to w_hat and the latter can be negative.
    """
    a = solve_a(sol) if a is None else np.asarray(a, dtype=float)
    w = sol.w_hat
    nw = float(np.linalg.norm(w))
    na = float(np.linalg.norm(a))
    perp = a - (a @ w) / nw ** 2 * w
    C1 = float(np.linalg.norm(perp)) / nw
    cos = float(a @ w) / (nw * na) if na > 0 else 0.0
    C2 = (1.0 - cos ** 2) * na ** 2 / (2.0 * nw ** 2)
    C2p = (0.25 - cos ** 2) * 2.0 * na ** 2 / nw ** 2
    C3 = (float(w @ a) / nw ** 2 - float(np.min(sol.support_points @ a))) / nw
    return Table1Constants(C1, C2, max(C3, 0.0) if C3 > -1e-12 else C3, C2p, cos)


@dataclass
class RatePrediction:
    nu: float | None
    t: np.ndarray
    g: np.ndarray
    C1: float
    C2: float
    C3: float
    dist: np.ndarray
    angle: np.ndarray
    margin: np.ndarray
    order_only: bool
    meta: dict = field(default_factory=dict)


def predicted_gaps_table1(sol: MaxMarginSolution, nu: float, t, a=None) -> RatePrediction:
    """Leading-order gaps for a poly-exponential tail.

    For 1/4 < nu <= 1: C1/(nu log t), C2/(nu^2 log^2 t), C3/(nu log t).
    For nu > 1 only the scales log^{-1/nu} t and log^{-2/nu} t are returned
    (``order_only``).
    """
    if nu <= 0.25:
        raise ValueError("predictions cover nu > 1/4 only")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    c = table1_constants(sol, a)
    L = np.log(t)
    g = g_poly_exp(t, nu)
    if nu <= 1.0:
        return RatePrediction(nu, t, g, c.C1, c.C2, c.C3, c.C1 / (nu * L), c.C2 / (nu * L) ** 2,
                              c.C3 / (nu * L), False)
    return RatePrediction(nu, t, g, c.C1, c.C2, c.C3, L ** (-1.0 / nu), L ** (-2.0 / nu),
                          L ** (-1.0 / nu), True)


# ---------------------------------------------------------------------------
# generic tails

@dataclass
class TailFunction:
    """-l'(u) = exp(-f(u)) with f increasing; ``finv`` optional."""

    name: str
    f: Callable[[float], float]
    fprime: Callable[[float], float]
    finv: Callable[[float], float] | None = None

    def inverse(self, y: float) -> float:
        if self.finv is not None:
            return float(self.finv(y))
        hi = 2.0
        while self.f(hi) < y:
            hi *= 2.0
        lo = 1.0 + 1e-12
        return optimize.brentq(lambda u: self.f(u) - y, lo, hi, xtol=1e-14, rtol=1e-15)


def poly_tail(nu: float) -> TailFunction:
    return TailFunction(f"u^{nu:g}", lambda u: u ** nu, lambda u: nu * u ** (nu - 1.0),
                        lambda y: y ** (1.0 / nu))


def log_tail(eps: float) -> TailFunction:
    """f(u) = log^eps(u)."""
    return TailFunction(f"log^{eps:g}(u)", lambda u: math.log(u) ** eps,
                        lambda u: eps * math.log(u) ** (eps - 1.0) / u,
                        lambda y: math.exp(y ** (1.0 / eps)))


def named_tail(name: str) -> TailFunction:
    """Parse 'exp', 'polyexp:<nu>' or 'subpolyexp:<eps>'."""
    kind, _, arg = name.partition(":")
    if kind == "exp":
        return poly_tail(1.0)
    if kind == "polyexp":
        return poly_tail(float(arg))
    if kind == "subpolyexp":
        return log_tail(float(arg))
    raise ValueError(f"unknown tail {name!r}")


def tail_is_superlogarithmic(tail: TailFunction, probes=(1e2, 1e4, 1e8, 1e16, 1e32, 1e64)) -> bool:
    """Screen for f = omega(log u) and log f'(u) = o(f(u)) on a probe ladder."""
    ratio = [tail.f(u) / math.log(u) for u in probes]
    grow = all(b > a * (1.0 + 1e-9) for a, b in zip(ratio, ratio[1:]))
    small = [abs(math.log(tail.fprime(u))) / tail.f(u) for u in probes]
    shrink = all(b <= a for a, b in zip(small, small[1:])) and small[-1] < 1.0
    return grow and shrink


@dataclass
class GenericG:
    t: np.ndarray
    g: np.ndarray
    approx: np.ndarray
    valid: bool
    tail: str


def generic_g(tail: TailFunction, t_grid, t0: float = 10.0, C: float = 0.0,
              rtol: float = 1e-12, atol: float = 1e-12) -> GenericG:
    """Integrate dg/dt = exp(-f(g)) from g(t0) = f^{-1}(log(t0 + C)).

    The integration runs in s = log t where the right-hand side becomes
    exp(s - f(g)), which keeps step sizes uniform over many decades.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < t0):
        raise ValueError(f"t_grid must start at or after t0={t0}")
    g0 = tail.inverse(math.log(t0 + C))
    s_eval = np.log(t)
    sol = integrate.solve_ivp(lambda s, g: np.exp(s - tail.f(g[0])) * np.ones(1),
                              (math.log(t0), float(s_eval[-1])), [g0], method="DOP853",
                              t_eval=s_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise RuntimeError(f"g integration failed near t={math.exp(sol.t[-1]):.6g}: {sol.message}")
    approx = np.array([tail.inverse(math.log(ti + C)) for ti in t])
    return GenericG(t, sol.y[0], approx, tail_is_superlogarithmic(tail), tail.name)


def predicted_gaps_generic(sol: MaxMarginSolution, tail: TailFunction, t, heavy: bool,
                           g=None, a=None) -> RatePrediction:
    """Gap predictions for a generic tail.

    ``heavy`` declares that 1/f'(g) stays bounded away from zero; then the
    constants C1, C2, C3 scale 1/(g f'(g)).  Otherwise only the orders
    1/g and 1/g^2 are returned.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if g is None:
        g = generic_g(tail, t).g
    g = np.asarray(g, dtype=float)
    c = table1_constants(sol, a)
    if heavy:
        s = g * np.array([tail.fprime(gi) for gi in g])
        return RatePrediction(None, t, g, c.C1, c.C2, c.C3, c.C1 / s, c.C2 / s ** 2, c.C3 / s,
                              False, {"tail": tail.name})
    return RatePrediction(None, t, g, c.C1, c.C2, c.C3, 1.0 / g, 1.0 / g ** 2, 1.0 / g, True,
                          {"tail": tail.name})


# ---------------------------------------------------------------------------
# fitting

MODELS = {
    "inv_log": lambda t: 1.0 / np.log(t),
    "inv_log_sq": lambda t: 1.0 / np.log(t) ** 2,
    "logt_over_sqrt": lambda t: np.log(t) / np.sqrt(t),
}


@dataclass
class RateFit:
    model: str
    constant: float
    drift: float
    constants: list
    drifts: list

    @property
    def drift_shrinks(self) -> bool:
        d = [abs(x) for x in self.drifts]
        return len(d) >= 2 and d[0] < d[1]


def fit_rate(ts, gaps, model: str = "inv_log") -> RateFit:
    """Fit gap ~ c * model(t) on the last decade and track the estimate per decade.

    ``constants[j]`` is the least-squares constant on the decade ending at
    t_max / 10^j.  ``drifts[j] = (constants[j+1] - constants[j]) / |constants[j]|``
    and ``drift = drifts[0]``; a correct model has drifts shrinking toward 0.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    t = np.asarray(ts, dtype=float)
    y = np.asarray(gaps, dtype=float)
    ok = np.isfinite(t) & np.isfinite(y) & (t > 1.0)
    t, y = t[ok], y[ok]
    if t.size < 10 or t.max() / t.min() < 100.0 * (1.0 - 1e-12):
        raise ValueError("fit_rate needs at least 10 points spanning 2 decades")
    m = MODELS[model](t)
    top = t.max()
    consts = []
    j = 0
    while top / 10.0 ** (j + 1) >= t.min() * (1.0 - 1e-12):
        hi, lo = top / 10.0 ** j, top / 10.0 ** (j + 1)
        sel = (t >= lo * (1.0 - 1e-12)) & (t <= hi * (1.0 + 1e-12))
        if sel.sum() < 2:
            break
        consts.append(float(np.sum(y[sel] * m[sel]) / np.sum(m[sel] ** 2)))
        j += 1
    drifts = [(consts[k + 1] - consts[k]) / abs(consts[k]) if consts[k] != 0 else math.inf
              for k in range(len(consts) - 1)]
    return RateFit(model, consts[0], drifts[0] if drifts else math.nan, consts, drifts)
