"""Monotone loss families with controlled derivative tails.

Every family is exposed through a :class:`LossSpec`.  Functions accept scalars
or numpy arrays and broadcast.

Families
--------
exp         l(u) = exp(-u)
logistic    l(u) = log(1 + exp(-u))
polyexp     -l'(u) = exp(-u**nu) for u >= u0, exponential C1 extension below
powerlaw    l(u) = 1/u for u > 1, 2 - u otherwise
subpolyexp  -l'(u) = u exp(-log(u)**eps) / (eps log(u)**(eps-1)) for u > 2, constant below
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special

FAMILIES = ("exp", "logistic", "polyexp", "powerlaw", "subpolyexp")


class Unbounded:
    """Marker returned by :func:`smoothness_bound` when no global bound exists."""

    def __repr__(self):
        return "Unbounded"

    def __bool__(self):
        return False


UNBOUNDED = Unbounded()


@dataclass(frozen=True)
class LossSpec:
    family: str
    nu: float | None = None
    epsilon: float | None = None
    u0: float | None = None
    mu_plus: float = 1.0
    mu_minus: float = 1.0
    ubar: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.family == "polyexp" and not (self.nu and self.nu > 0):
            raise ValueError("polyexp needs nu > 0")
        if self.family == "subpolyexp" and not (self.epsilon and self.epsilon > 0):
            raise ValueError("subpolyexp needs epsilon > 0")

    # constructors
    @classmethod
    def exp(cls):
        return cls("exp", nu=1.0, ubar=1.0)

    @classmethod
    def logistic(cls):
        return cls("logistic", nu=1.0, ubar=1.0)

    @classmethod
    def polyexp(cls, nu, u0=None, mu_plus=1.0, mu_minus=1.0):
        if not nu > 0:
            raise ValueError("polyexp needs nu > 0")
        if u0 is None:
            u0 = max(1.0, 2.0 ** (1.0 / nu))
        return cls("polyexp", nu=float(nu), u0=float(u0), mu_plus=mu_plus,
                   mu_minus=mu_minus, ubar=float(u0))

    @classmethod
    def powerlaw(cls):
        return cls("powerlaw", u0=1.0, ubar=1.0)

    @classmethod
    def subpolyexp(cls, epsilon):
        return cls("subpolyexp", epsilon=float(epsilon), u0=2.0, ubar=2.0)

    @property
    def envelope_nu(self) -> float:
        """Tail exponent the envelope check compares against."""
        return self.nu if self.family == "polyexp" else 1.0

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        fam = d["family"].lower()
        if fam == "exp":
            base = cls.exp()
        elif fam == "logistic":
            base = cls.logistic()
        elif fam == "polyexp":
            base = cls.polyexp(d["nu"], u0=d.get("u0"))
        elif fam == "powerlaw":
            base = cls.powerlaw()
        elif fam == "subpolyexp":
            base = cls.subpolyexp(d["epsilon"])
        else:
            raise ValueError(f"unknown loss family {fam!r}")
        over = {k: float(d[k]) for k in ("mu_plus", "mu_minus", "ubar") if k in d}
        return cls(**{**asdict(base), **over})


# ---------------------------------------------------------------------------
# poly-exponential helpers

def _polyexp_consts(spec):
    nu, u0 = spec.nu, spec.u0
    A = u0 ** nu
    k = nu * u0 ** (nu - 1.0)
    return nu, u0, A, k


def _log_upper_gamma(a, x):
    """log Gamma(a, x), safe when Gamma(a, x) underflows."""
    x = np.asarray(x, dtype=float)
    q = special.gammaincc(a, x)
    with np.errstate(divide="ignore"):
        direct = np.log(q) + special.gammaln(a)
    big = q < 1e-250
    if np.any(big):
        # Gamma(a, x) = exp(-x) U(1-a, 1-a, x)
        xb = np.where(big, x, 1.0)
        asym = -xb + np.log(special.hyperu(1.0 - a, 1.0 - a, xb))
        direct = np.where(big, asym, direct)
    return direct


def _polyexp_tail_log_value(spec, u):
    nu = spec.nu
    return _log_upper_gamma(1.0 / nu, u ** nu) - math.log(nu)


def _polyexp_value_at_splice(spec):
    return float(np.exp(_polyexp_tail_log_value(spec, spec.u0)))


# ---------------------------------------------------------------------------
# sub-poly-exponential helpers

def _subpoly_log_tail_deriv(eps, u):
    s = np.log(u)
    return -(s ** eps) - np.log(eps * s ** (eps - 1.0)) + s


def _subpoly_const(eps):
    s = math.log(2.0)
    return math.exp(-(s ** eps) - math.log(0.5 * eps * s ** (eps - 1.0)))


def _subpoly_log_tail_value(eps, u):
    # l(u) = int_{log u}^inf exp(2r - r**eps) / (eps r**(eps-1)) dr, shifted by its value at log u
    if eps <= 1.0:
        raise ValueError("subpolyexp loss value is infinite for epsilon <= 1")
    r0 = math.log(u)
    base = 2.0 * r0 - r0 ** eps

    def f(r):
        return math.exp(2.0 * r - r ** eps - base) / (eps * r ** (eps - 1.0))

    # the integrand peaks where 2 = eps r**(eps-1); split there for quad
    rpk = max(r0, (2.0 / eps) ** (1.0 / (eps - 1.0)))
    val = 0.0
    if rpk > r0:
        val += integrate.quad(f, r0, rpk, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    val += integrate.quad(f, rpk, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    return base + math.log(val)


# ---------------------------------------------------------------------------
# pointwise evaluation

def log_neg_deriv(spec: LossSpec, u):
    """log(-l'(u)), stable for large u."""
    u = np.asarray(u, dtype=float)
    fam = spec.family
    if fam == "exp":
        return -u
    if fam == "logistic":
        return -np.logaddexp(0.0, u)
    if fam == "polyexp":
        nu, u0, A, k = _polyexp_consts(spec)
        tail = -np.maximum(u, u0) ** nu
        return np.where(u >= u0, tail, -(A + k * (u - u0)))
    if fam == "powerlaw":
        safe = np.maximum(u, 1.0)
        return np.where(u > 1.0, -2.0 * np.log(safe), 0.0)
    eps = spec.epsilon
    safe = np.maximum(u, 2.0 + 1e-300)
    return np.where(u > 2.0, _subpoly_log_tail_deriv(eps, safe), math.log(_subpoly_const(eps)))


def loss_deriv(spec: LossSpec, u):
    """l'(u) (always negative)."""
    u = np.asarray(u, dtype=float)
    if spec.family == "logistic":
        return -special.expit(-u)
    return -np.exp(log_neg_deriv(spec, u))


def loss_second(spec: LossSpec, u):
    """l''(u), one-sided (right) at splice points."""
    u = np.asarray(u, dtype=float)
    fam = spec.family
    if fam == "exp":
        return np.exp(-u)
    if fam == "logistic":
        return special.expit(u) * special.expit(-u)
    if fam == "polyexp":
        nu, u0, A, k = _polyexp_consts(spec)
        safe = np.maximum(u, u0)
        tail = nu * safe ** (nu - 1.0) * np.exp(-safe ** nu)
        return np.where(u >= u0, tail, k * np.exp(-(A + k * (u - u0))))
    if fam == "powerlaw":
        safe = np.maximum(u, 1.0)
        return np.where(u > 1.0, 2.0 / safe ** 3, 0.0)
    eps = spec.epsilon
    safe = np.maximum(u, 2.0 + 1e-12)
    s = np.log(safe)
    f = np.exp(_subpoly_log_tail_deriv(eps, safe))
    tail = f * (eps * s ** (eps - 1.0) + (eps - 1.0) / s - 1.0) / safe
    return np.where(u > 2.0, tail, 0.0)


def log_loss_value(spec: LossSpec, u):
    """log l(u), finite wherever l(u) is representable in log form."""
    u = np.asarray(u, dtype=float)
    fam = spec.family
    if fam == "exp":
        return -u
    if fam == "logistic":
        with np.errstate(divide="ignore"):
            small = np.log(np.logaddexp(0.0, -np.minimum(u, 30.0)))
        return np.where(u > 30.0, -u - 0.5 * np.exp(-np.maximum(u, 30.0)), small)
    if fam == "polyexp":
        return _polyexp_log_value(spec, u)
    if fam == "powerlaw":
        return np.where(u > 1.0, -np.log(np.maximum(u, 1.0)), np.log(2.0 - np.minimum(u, 1.0)))
    return _subpoly_log_value(spec, u)


def _polyexp_below(spec, u):
    nu, u0, A, k = _polyexp_consts(spec)
    with np.errstate(over="ignore"):
        return _polyexp_value_at_splice(spec) + math.exp(-A) / k * np.expm1(-k * (u - u0))


def _polyexp_log_value(spec, u):
    u0 = spec.u0
    tail = _polyexp_tail_log_value(spec, np.maximum(u, u0))
    below = _polyexp_below(spec, np.minimum(u, u0))
    with np.errstate(divide="ignore"):
        return np.where(u >= u0, tail, np.log(below))


def _subpoly_log_value(spec, u):
    eps = spec.epsilon
    if eps <= 1.0:
        raise ValueError("subpolyexp loss value is infinite for epsilon <= 1")
    flat = np.atleast_1d(u).ravel()
    out = np.empty_like(flat)
    l2 = None
    for i, ui in enumerate(flat):
        if ui > 2.0:
            out[i] = _subpoly_log_tail_value(eps, ui)
        else:
            if l2 is None:
                l2 = math.exp(_subpoly_log_tail_value(eps, 2.0))
            out[i] = math.log(l2 + _subpoly_const(eps) * (2.0 - ui))
    return out.reshape(np.shape(u)) if np.ndim(u) else float(out[0])


def loss_value(spec: LossSpec, u):
    """l(u) > 0."""
    u = np.asarray(u, dtype=float)
    fam = spec.family
    if fam == "exp":
        return np.exp(-u)
    if fam == "logistic":
        return np.logaddexp(0.0, -u)
    if fam == "powerlaw":
        return np.where(u > 1.0, 1.0 / np.maximum(u, 1.0), 2.0 - np.minimum(u, 1.0))
    if fam == "polyexp":
        return np.where(u >= spec.u0, np.exp(_polyexp_log_value(spec, u)),
                        _polyexp_below(spec, np.minimum(u, spec.u0)))
    return np.exp(_subpoly_log_value(spec, u))


# ---------------------------------------------------------------------------
# empirical loss

def _margins(ds, w):
    w = np.asarray(w, dtype=float)
    if w.shape != (ds.dim,):
        raise ValueError(f"w has shape {w.shape}, dataset dim is {ds.dim}")
    return ds.points @ w


def total_loss(spec: LossSpec, ds, w) -> float:
    """L(w) = sum_n l(w^T x_n)."""
    return float(np.sum(loss_value(spec, _margins(ds, w))))


def log_total_loss(spec: LossSpec, ds, w) -> float:
    """log L(w) via logsumexp of the per-sample log losses."""
    return float(special.logsumexp(log_loss_value(spec, _margins(ds, w))))


def gradient(spec: LossSpec, ds, w) -> np.ndarray:
    """sum_n l'(w^T x_n) x_n."""
    return loss_deriv(spec, _margins(ds, w)) @ ds.points


def normalized_gradient_exp(ds, w):
    """Return (grad L / L, log L) for the exponential loss via a stable softmax."""
    z = -_margins(ds, w)
    logL = float(special.logsumexp(z))
    p = np.exp(z - logL)
    return -(p @ ds.points), logL


# ---------------------------------------------------------------------------
# curvature and tail checks

def inverse_loss(spec: LossSpec, level: float) -> float:
    """Smallest u with l(u) <= level (l is strictly decreasing)."""
    if level <= 0:
        raise ValueError("level must be positive")
    lo, hi = -1.0, 1.0
    while float(loss_value(spec, lo)) < level:
        lo *= 2.0
        if lo < -1e12:
            raise ValueError("loss level above the range of l")
    while float(loss_value(spec, hi)) > level:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("loss level below the range of l")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(loss_value(spec, mid)) > level:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, abs(hi)):
            break
    return hi


def smoothness_bound(spec: LossSpec, ds=None, w0=None):
    """Curvature bound beta = sup l'' used in the step-size rule eta < 2/beta.

    exp has no global bound and returns ``UNBOUNDED``; callers use eta < 1/L(w0).
    logistic, powerlaw and subpolyexp have finite global suprema.  polyexp has an
    exponential extension below its splice, so the supremum is taken over the
    sublevel set {u : l(u) <= L(w0)} that every descent iterate stays in
    (w0 defaults to the origin).
    """
    fam = spec.family
    if fam == "exp":
        return UNBOUNDED
    if fam == "logistic":
        return 0.25
    if fam == "powerlaw":
        return 2.0
    if fam == "subpolyexp":
        grid = np.exp(np.linspace(math.log(2.0 + 1e-9), math.log(1e6), 20001))
        return float(np.max(loss_second(spec, grid)))
    if ds is None:
        raise ValueError("polyexp curvature needs the dataset to bound the sublevel set")
    w0 = np.zeros(ds.dim) if w0 is None else np.asarray(w0, dtype=float)
    L0 = total_loss(spec, ds, w0)
    u_min = inverse_loss(spec, L0)
    nu, u0, A, k = _polyexp_consts(spec)
    cands = [float(loss_second(spec, max(u_min, u0)))]
    if u_min < u0:
        cands.append(float(loss_second(spec, u_min)))
    # tail maximum of nu u^(nu-1) exp(-u^nu) sits at u^nu = (nu-1)/nu
    if nu > 1.0:
        ustar = ((nu - 1.0) / nu) ** (1.0 / nu)
        if ustar >= max(u_min, u0):
            cands.append(float(loss_second(spec, ustar)))
    return max(cands)


@dataclass
class EnvelopeReport:
    passed: bool
    worst_lower_slack: float
    worst_upper_slack: float
    worst_point: float | None
    n_points: int


def tail_envelope_check(spec: LossSpec, u_grid, nu=None, mu_plus=None, mu_minus=None,
                        rtol=1e-12) -> EnvelopeReport:
    """Check (1 - e^{-mu_- u^nu}) e^{-u^nu} <= -l'(u) <= (1 + e^{-mu_+ u^nu}) e^{-u^nu}.

    Comparisons are made in log space and slacks are reported there.  Negative
    slack beyond ``rtol`` is a violation; ``worst_point`` names the grid point
    with the most negative slack.
    """
    u = np.asarray(u_grid, dtype=float)
    nu = spec.envelope_nu if nu is None else nu
    mp = spec.mu_plus if mu_plus is None else mu_plus
    mm = spec.mu_minus if mu_minus is None else mu_minus
    if np.any(u <= spec.ubar):
        raise ValueError("grid points must exceed ubar")
    un = u ** nu
    lf = log_neg_deriv(spec, u)
    upper = -un + np.log1p(np.exp(-mp * un))
    with np.errstate(divide="ignore"):
        lower = -un + np.log1p(-np.exp(-mm * un))
    s_up = upper - lf
    s_lo = lf - lower
    worst = np.minimum(s_up, s_lo)
    i = int(np.argmin(worst))
    passed = bool(worst[i] >= -rtol)
    return EnvelopeReport(passed, float(np.min(s_lo)), float(np.min(s_up)),
                          None if passed else float(u[i]), len(u))
