"""Discrete-time optimizers with theory-facing metrics.

Three algorithms are provided: fixed-step gradient descent on any loss family,
normalized gradient descent on the exponential loss, and steepest descent with
respect to the L1, L2 or Linf norm.  Iterates are stored on a geometric
checkpoint grid and every recorded quantity lands in a :class:`TrajectoryRecord`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from . import _kernels as K
from .losses import LossSpec, log_loss_value, smoothness_bound, total_loss
from .maxmargin import (MaxMarginSolution, canonical_norm, dual_margin_lower_bound,
                        dual_norm_name, norm_value, solve_hard_margin)
from .rates import g_poly_exp

COLUMNS = ("t", "logL", "w_norm", "min_margin", "norm_margin", "margin_gap", "angle_gap",
           "dist_gap", "rho_norm", "thm4_bound", "loss_bound")

ALGORITHMS = ("gd", "ngd", "steepest")
STEP_RULES = ("fixed", "inv_sqrt", "main_text_inv_loss")
THM4_TOL = 1e-9


class StepSizeError(AssertionError):
    pass


class BoundViolation(AssertionError):
    pass


class NonFiniteIterate(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# configuration

@dataclass
class OptimizerConfig:
    """Run configuration.

    ``eta=None`` selects the default step: 0.9/L(w0) for the exponential loss
    and 1.8/beta for losses with a curvature bound.  ``init`` is ``"zero"``,
    ``"gaussian"`` (seeded standard normal) or an explicit vector.
    """

    algorithm: str = "gd"
    loss: LossSpec = field(default_factory=LossSpec.exp)
    iterations: int = 10_000
    eta: float | None = None
    step_rule: str = "fixed"
    norm: str = "L2"
    init: object = "zero"
    seed: int = 0
    ratio: float = 1.25
    strict: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        self.norm = canonical_norm(self.norm)
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")

    def initial_point(self, dim: int) -> np.ndarray:
        if isinstance(self.init, str):
            if self.init == "zero":
                return np.zeros(dim)
            if self.init == "gaussian":
                return np.random.default_rng(self.seed).standard_normal(dim)
            raise ValueError(f"unknown init {self.init!r}")
        w0 = np.asarray(self.init, dtype=float)
        if w0.shape != (dim,):
            raise ValueError(f"init has shape {w0.shape}, dataset dim is {dim}")
        return w0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        if isinstance(self.init, np.ndarray):
            d["init"] = self.init.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        d = dict(d)
        if "loss" in d and isinstance(d["loss"], dict):
            d["loss"] = LossSpec.from_dict(d["loss"])
        return cls(**d)


def checkpoint_grid(T: int, ratio: float = 1.25) -> np.ndarray:
    """{0} plus rounded powers of ``ratio``, powers of ten and T, all <= T."""
    pts = {0, T}
    x = 1.0
    while x <= T:
        pts.add(int(round(x)))
        x *= ratio
    p = 1
    while p <= T:
        pts.add(p)
        p *= 10
    return np.array(sorted(v for v in pts if 0 <= v <= T), dtype=np.int64)


# ---------------------------------------------------------------------------
# record

@dataclass
class TrajectoryRecord:
    """Checkpoint table plus the outcomes of the hard checks.

    Inapplicable entries are NaN in ``columns`` and empty in the CSV.
    """

    columns: dict
    iterates: np.ndarray
    checks: dict
    meta: dict

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def __getitem__(self, key):
        return self.columns[key]

    def at(self, t: int) -> dict:
        i = int(np.searchsorted(self.t, t))
        if i >= len(self.t) or self.t[i] != t:
            raise KeyError(f"t={t} is not a checkpoint")
        return {k: v[i] for k, v in self.columns.items()}

    @property
    def passed(self) -> bool:
        return all(c.get("passed", True) for c in self.checks.values())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(COLUMNS)
            for i in range(len(self.t)):
                row = [str(int(self.t[i]))]
                for c in COLUMNS[1:]:
                    v = self.columns[c][i]
                    row.append("" if not np.isfinite(v) else "%.17g" % v)
                wr.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "TrajectoryRecord":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(h.strip() for h in rows[0]) != COLUMNS:
            raise ValueError(f"{path}: header does not match {COLUMNS}")
        data = {c: [] for c in COLUMNS}
        for r in rows[1:]:
            if len(r) != len(COLUMNS):
                raise ValueError(f"{path}: row with {len(r)} fields")
            for c, v in zip(COLUMNS, r):
                data[c].append(float(v) if v.strip() else math.nan)
        cols = {c: np.array(v) for c, v in data.items()}
        return cls(cols, np.empty((0, 0)), {}, {"source": str(path)})


# ---------------------------------------------------------------------------
# bounds and residuals

def loss_upper_bound_cert(t, eta: float, gamma: float, L0: float):
    """c(t) = 1 / (eta gamma^2 t + 1/L0)."""
    return 1.0 / (eta * gamma ** 2 * np.asarray(t, dtype=float) + 1.0 / L0)


def thm4_bound(t, gamma: float, L0: float):
    """Lower bound on the normalized margin of the iterate after step t (t >= 0).

    gamma - (1/2 (1 + log(t+1)) + log L0) / (gamma (2 sqrt(t+2) - 2))
    """
    t = np.asarray(t, dtype=float)
    return gamma - (0.5 * (1.0 + np.log(t + 1.0)) + math.log(L0)) / (gamma * (2.0 * np.sqrt(t + 2.0) - 2.0))


def polyak_check(ds, w, norm: str = "L2", gamma: float | None = None) -> float:
    """||grad L(w)||_* - gamma L(w) for the exponential loss (>= 0 by duality)."""
    norm = canonical_norm(norm)
    if gamma is None:
        gamma = dual_margin_lower_bound(ds, norm)
    u = ds.points @ np.asarray(w, dtype=float)
    logL = float(special.logsumexp(-u))
    p = np.exp(-u - logL)
    q = -(p @ ds.points)
    return math.exp(logL) * (norm_value(q, dual_norm_name(norm)) - gamma)


def tail_nu(spec: LossSpec) -> float | None:
    if spec.family in ("exp", "logistic"):
        return 1.0
    if spec.family == "polyexp":
        return spec.nu
    return None


def residual(w, t, sol: MaxMarginSolution, nu: float) -> np.ndarray:
    """rho(t) = w(t) - w_hat g(t)."""
    return np.asarray(w, dtype=float) - sol.w_hat * g_poly_exp(t, nu)


def residual_fine(w, t, sol: MaxMarginSolution, nu: float, w_tilde=None) -> np.ndarray:
    """w(t) - w_hat g(t) - w_tilde g(t)^(1-nu)."""
    if w_tilde is None:
        w_tilde = sol.w_tilde
    g = g_poly_exp(t, nu)
    return np.asarray(w, dtype=float) - sol.w_hat * g - np.asarray(w_tilde) * g ** (1.0 - nu)


# ---------------------------------------------------------------------------
# runners

def _loss_params(spec: LossSpec) -> np.ndarray:
    nu = spec.nu if spec.nu else 1.0
    eps = spec.epsilon if spec.epsilon else 2.0
    u0 = spec.u0 if spec.u0 is not None else 0.0
    A = u0 ** nu if spec.family == "polyexp" else 0.0
    k = nu * u0 ** (nu - 1.0) if spec.family == "polyexp" else 0.0
    c_sub = 0.0
    if spec.family == "subpolyexp":
        s = math.log(2.0)
        c_sub = math.exp(-(s ** eps) - math.log(0.5 * eps * s ** (eps - 1.0)))
    return np.array([nu, eps, u0, A, k, c_sub])


def default_eta(spec: LossSpec, ds, w0) -> float:
    if spec.family == "exp":
        return 0.9 / total_loss(spec, ds, w0)
    return 1.8 / smoothness_bound(spec, ds, w0)


def _validate_eta(spec, ds, w0, eta):
    if not (eta > 0 and math.isfinite(eta)):
        raise StepSizeError(f"step size must be positive and finite, got {eta}")
    if spec.family == "exp":
        L0 = total_loss(spec, ds, w0)
        if eta * L0 >= 1.0:
            raise StepSizeError(f"eta={eta:.6g} violates eta < 1/L(w0) = {1.0 / L0:.6g}")
    else:
        beta = smoothness_bound(spec, ds, w0)
        if eta >= 2.0 / beta:
            raise StepSizeError(f"eta={eta:.6g} violates eta < 2/beta = {2.0 / beta:.6g}")


def _log_losses(spec, ds, W):
    U = W @ ds.points.T
    return special.logsumexp(log_loss_value(spec, U), axis=1)


def _metrics(ds, sol, W, ts, spec, norm="L2", gamma=None):
    """Per-checkpoint metric columns (NaN where undefined)."""
    K_ = len(ts)
    norm = canonical_norm(norm)
    if gamma is None:
        gamma = sol.gamma
    U = W @ ds.points.T
    wn = np.array([norm_value(w, norm) for w in W])
    minm = U.min(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        nm = np.where(wn > 0, minm / np.where(wn > 0, wn, 1.0), np.nan)
    cols = {c: np.full(K_, np.nan) for c in COLUMNS}
    cols["t"] = ts.astype(float)
    cols["logL"] = _log_losses(spec, ds, W)
    cols["w_norm"] = wn
    cols["min_margin"] = minm
    cols["norm_margin"] = nm
    cols["margin_gap"] = gamma - nm
    if norm == "L2":
        uh = sol.w_hat / np.linalg.norm(sol.w_hat)
        w2 = np.linalg.norm(W, axis=1)
        ok = w2 > 0
        Wn = np.zeros_like(W)
        Wn[ok] = W[ok] / w2[ok, None]
        cols["angle_gap"] = np.where(ok, 1.0 - Wn @ uh, np.nan)
        cols["dist_gap"] = np.where(ok, np.linalg.norm(Wn - uh, axis=1), np.nan)
        nu = tail_nu(spec)
        if nu is not None:
            big = ts >= 3
            if np.any(big):
                g = g_poly_exp(ts[big].astype(float), nu)
                cols["rho_norm"][big] = np.linalg.norm(W[big] - np.outer(g, sol.w_hat), axis=1)
    return cols


def _descent_check(logL, rtol=1e-12):
    inc = np.diff(logL)
    bad = inc > rtol * np.maximum(1.0, np.abs(logL[:-1]))
    return {"passed": bool(not np.any(bad)), "violations": int(bad.sum()),
            "worst_increase": float(inc.max()) if inc.size else 0.0}


def _raise_nonfinite(stats, name):
    t = stats[K.S_NONFINITE_T]
    if t >= 0:
        raise NonFiniteIterate(f"{name}: non-finite iterate at t={int(t)}")


def _polyak_at(ds, W, norm, gamma):
    slacks = [polyak_check(ds, w, norm, gamma) for w in W]
    worst = float(min(slacks))
    return {"passed": bool(worst >= -1e-9), "min_slack": worst}


def run_gd(config: OptimizerConfig, ds, sol: MaxMarginSolution | None = None) -> TrajectoryRecord:
    """Fixed-step gradient descent w <- w - eta grad L(w)."""
    spec = config.loss
    sol = sol or solve_hard_margin(ds)
    w0 = config.initial_point(ds.dim)
    eta = config.eta if config.eta is not None else default_eta(spec, ds, w0)
    _validate_eta(spec, ds, w0, eta)
    T = int(config.iterations)
    ts = checkpoint_grid(T, config.ratio)
    W = np.zeros((len(ts), ds.dim))
    stats = K._init_stats()
    logL0 = float(special.logsumexp(log_loss_value(spec, ds.points @ w0)))
    K.gd_kernel(np.ascontiguousarray(ds.points), w0, eta, T, K.FAMILY_CODES[spec.family],
                _loss_params(spec), ts, sol.gamma, logL0, W, stats)
    _raise_nonfinite(stats, "run_gd")
    cols = _metrics(ds, sol, W, ts, spec)
    checks = {"descent": _descent_check(cols["logL"])}
    if spec.family == "exp":
        cols["loss_bound"] = loss_upper_bound_cert(ts, eta, sol.gamma, math.exp(logL0))
        step = {"passed": stats[K.S_MONO_VIOL] == 0, "violations": int(stats[K.S_MONO_VIOL]),
                "worst_increase": float(stats[K.S_MONO_WORST])}
        checks["descent_every_step"] = step
        checks["loss_bound"] = {"passed": bool(stats[K.S_BOUND_MAX] <= 1e-12),
                                "max_log_ratio": float(stats[K.S_BOUND_MAX]),
                                "t": int(stats[K.S_BOUND_T])}
        checks["local_smoothness_guard"] = {"passed": bool(stats[K.S_GUARD_MAX] < 0.0),
                                            "max_log_eta_L": float(stats[K.S_GUARD_MAX]),
                                            "t": int(stats[K.S_GUARD_T])}
        checks["polyak"] = _polyak_at(ds, W, "L2", sol.gamma)
        if config.strict:
            g = checks["local_smoothness_guard"]
            if not g["passed"]:
                raise StepSizeError(f"eta L(w(t)) = {math.exp(g['max_log_eta_L']):.6g} >= 1 at t={g['t']}")
            b = checks["loss_bound"]
            if not b["passed"]:
                raise BoundViolation(f"L(w(t)) > c(t) at t={b['t']} (log ratio {b['max_log_ratio']:.3g})")
    meta = {"algorithm": "gd", "loss": spec.to_dict(), "eta": eta, "iterations": T,
            "gamma": sol.gamma, "logL0": logL0}
    return TrajectoryRecord(cols, W, checks, meta)


def _run_exp_steepest(config, ds, sol, norm, schedule, name):
    spec = LossSpec.exp()
    w0 = config.initial_point(ds.dim)
    T = int(config.iterations)
    ts = checkpoint_grid(T, config.ratio)
    W = np.zeros((len(ts), ds.dim))
    stats = K._init_stats()
    logL0 = float(special.logsumexp(-(ds.points @ w0)))
    gamma = sol.gamma if norm == "L2" else dual_margin_lower_bound(ds, norm)
    eta = 0.0
    if schedule == 0:
        eta = config.eta if config.eta is not None else 0.9 / math.exp(logL0)
        if not (eta > 0 and eta * math.exp(logL0) < 1.0):
            raise StepSizeError(f"eta={eta:.6g} violates eta < 1/L(w0) = {math.exp(-logL0):.6g}")
    n_done = K.steepest_kernel(np.ascontiguousarray(ds.points), w0, eta, T, K.NORM_CODES[norm],
                               schedule, ts, gamma, logL0, W, stats)
    _raise_nonfinite(stats, name)
    assert n_done == len(ts)
    cols = _metrics(ds, sol, W, ts, spec, norm=norm, gamma=gamma)
    dual_max = float(max(norm_value(x, dual_norm_name(norm)) for x in ds.points))
    checks = {"descent": _descent_check(cols["logL"]),
              "polyak": _polyak_at(ds, W, norm, gamma)}
    if schedule == 1:
        b = np.full(len(ts), np.nan)
        b[ts >= 1] = thm4_bound(ts[ts >= 1] - 1, gamma, math.exp(logL0))
        cols["thm4_bound"] = b
        ok = bool(stats[K.S_THM4_MIN] >= -THM4_TOL)
        checks["thm4"] = {"passed": ok, "min_slack": float(stats[K.S_THM4_MIN]),
                          "t": int(stats[K.S_THM4_T]), "data_dual_norm_max": dual_max}
        if config.strict and not ok and dual_max <= 1.0:
            raise BoundViolation(f"normalized margin below the decaying-step bound at t={int(stats[K.S_THM4_T])} "
                                 f"(slack {stats[K.S_THM4_MIN]:.3g})")
    if schedule == 0:
        cols["loss_bound"] = loss_upper_bound_cert(ts, eta, gamma, math.exp(logL0))
        checks["descent_every_step"] = {"passed": stats[K.S_MONO_VIOL] == 0,
                                        "violations": int(stats[K.S_MONO_VIOL]),
                                        "worst_increase": float(stats[K.S_MONO_WORST])}
        checks["loss_bound"] = {"passed": bool(stats[K.S_BOUND_MAX] <= 1e-12),
                                "max_log_ratio": float(stats[K.S_BOUND_MAX]),
                                "t": int(stats[K.S_BOUND_T])}
    meta = {"algorithm": name, "norm": norm, "schedule": ["fixed", "inv_sqrt", "main_text_inv_loss"][schedule],
            "eta": eta if schedule == 0 else None, "iterations": T, "gamma": gamma, "logL0": logL0}
    return TrajectoryRecord(cols, W, checks, meta)


def run_normalized_gd(config: OptimizerConfig, ds, sol: MaxMarginSolution | None = None,
                      variant: bool = False) -> TrajectoryRecord:
    """Normalized GD on the exponential loss.

    Default: w <- w - (grad L / L) / sqrt(t+1).  With ``variant=True`` (or
    step_rule ``main_text_inv_loss``) the step is 1/L(w(t)) along the unit
    gradient direction; that rule's steps grow like 1/L and overflow quickly.
    """
    if config.loss.family != "exp":
        raise ValueError("normalized GD is defined for the exponential loss")
    sol = sol or solve_hard_margin(ds)
    variant = variant or config.step_rule == "main_text_inv_loss"
    return _run_exp_steepest(config, ds, sol, "L2", 2 if variant else 1, "ngd")


def run_steepest_descent(config: OptimizerConfig, ds, sol: MaxMarginSolution | None = None) -> TrajectoryRecord:
    """Steepest descent w.r.t. ``config.norm`` on the exponential loss.

    step_rule ``fixed``: w <- w - eta ||grad L||_* dw.
    step_rule ``inv_sqrt``: w <- w - (||grad L||_*/L) dw / sqrt(t+1).
    Margins are measured in ``config.norm``; angle, distance and residual
    columns are filled for L2 only.
    """
    if config.loss.family != "exp":
        raise ValueError("steepest descent is defined for the exponential loss")
    sol = sol or solve_hard_margin(ds)
    schedule = {"fixed": 0, "inv_sqrt": 1, "main_text_inv_loss": 2}[config.step_rule]
    return _run_exp_steepest(config, ds, sol, config.norm, schedule, "steepest")


def run(config: OptimizerConfig, ds, sol: MaxMarginSolution | None = None) -> TrajectoryRecord:
    """Dispatch on ``config.algorithm``."""
    if config.algorithm == "gd":
        return run_gd(config, ds, sol)
    if config.algorithm == "ngd":
        return run_normalized_gd(config, ds, sol)
    return run_steepest_descent(config, ds, sol)
