"""Hard-margin solver, KKT structure and the auxiliary support-span systems.

The hard-margin problem ``min ||w||^2 s.t. w^T x_n >= 1`` on folded data is the
scaled minimum-norm point of the convex hull of the samples: if ``z`` is that
point then ``w_hat = z / ||z||^2``.  :func:`min_norm_point` finds it with
Wolfe's active-set method and the corral is polished with an exact linear solve.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

SUPPORT_TOL = 1e-7
AUX_GATE = 1e-6


class MaxMarginError(Exception):
    pass


class Infeasible(MaxMarginError):
    """Data not separable: the origin is (numerically) in the convex hull."""

    def __init__(self, weights, hull_point):
        self.weights = np.asarray(weights)
        self.hull_point = np.asarray(hull_point)
        super().__init__(f"not separable: hull point of norm {np.linalg.norm(self.hull_point):.3g}")


class MaxIterations(MaxMarginError):
    def __init__(self, msg, residual):
        self.residual = float(residual)
        super().__init__(f"{msg} (residual {self.residual:.3g})")


class ZeroDual(MaxMarginError):
    pass


class DegenerateSpan(MaxMarginError):
    pass


# ---------------------------------------------------------------------------
# Wolfe minimum-norm point

@dataclass
class MNPResult:
    point: np.ndarray
    weights: np.ndarray
    corral: list
    iterations: int


def _affine_minimizer(Y):
    """Weights mu (sum 1) minimizing ||mu @ Y||."""
    k = Y.shape[0]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Y @ Y.T
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k]


def min_norm_point(X, tol: float = 1e-15, hull_tol: float = 1e-8, max_iter: int | None = None):
    """Minimum-norm point of conv{rows of X} by Wolfe's algorithm.

    Raises :class:`Infeasible` when that point has norm at most ``hull_tol``.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    scale = float(np.max(np.einsum("ij,ij->i", X, X)))
    if scale == 0.0:
        raise Infeasible(np.full(N, 1.0 / N), np.zeros(X.shape[1]))
    max_iter = max_iter or 100 * N + 1000
    norms = np.einsum("ij,ij->i", X, X)
    S = [int(np.argmin(norms))]
    lam = np.array([1.0])
    x = X[S[0]].copy()
    it = 0
    for it in range(1, max_iter + 1):
        xx = float(x @ x)
        if xx <= hull_tol ** 2:
            break
        dots = X @ x
        j = int(np.argmin(dots))
        if xx - dots[j] <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = _affine_minimizer(X[S])
            if np.all(mu > 1e-14):
                lam = mu
                break
            neg = mu <= 1e-14
            denom = lam[neg] - mu[neg]
            theta = float(np.min(np.where(denom > 0, lam[neg] / np.where(denom > 0, denom, 1.0), 1.0)))
            lam = lam + theta * (mu - lam)
            keep = lam > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(lam))] = True
            S = [s for s, k in zip(S, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ X[S]
    else:
        raise MaxIterations("Wolfe iterations exhausted", float(x @ x - np.min(X @ x)))
    weights = np.zeros(N)
    weights[S] = lam
    if np.linalg.norm(x) <= hull_tol:
        raise Infeasible(weights, x)
    return MNPResult(x, weights, S, it)


# ---------------------------------------------------------------------------
# solution container

@dataclass(frozen=True)
class MaxMarginSolution:
    """KKT artifacts of the hard-margin problem plus optional theory vectors.

    ``alpha`` is aligned with ``support``.  Exact duplicate support points share
    their dual weight equally.
    """

    points: np.ndarray
    w_hat: np.ndarray
    gamma: float
    support: tuple
    alpha: np.ndarray
    theta: float
    P1: np.ndarray
    residuals: dict
    nu: float | None = None
    eta: float | None = None
    lam: np.ndarray | None = None
    w_tilde: np.ndarray | None = None
    a_vec: np.ndarray | None = None
    w_bar: np.ndarray | None = None
    w_check2: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def support_points(self) -> np.ndarray:
        return self.points[list(self.support)]

    @property
    def alpha_full(self) -> np.ndarray:
        out = np.zeros(len(self.points))
        out[list(self.support)] = self.alpha
        return out

    @property
    def kkt_ok(self) -> bool:
        return max(self.residuals.values()) <= 1e-8

    def with_theory(self, nu: float, eta: float = 1.0) -> "MaxMarginSolution":
        """Attach a, w_tilde, lambda and, when defined, w_bar and w_check2."""
        a = solve_a(self)
        wt, lam = solve_wtilde(self, nu, eta, return_lambda=True)
        wb = solve_wbar(self, nu, eta)
        wc = solve_wcheck2(self, nu, eta)
        return replace(self, nu=nu, eta=eta, lam=lam, w_tilde=wt, a_vec=a, w_bar=wb, w_check2=wc)


def _span_projector(Y, rtol=1e-10):
    if Y.size == 0:
        return np.zeros((0, 0))
    _, s, Vt = np.linalg.svd(Y, full_matrices=False)
    r = int(np.sum(s > rtol * s[0])) if s.size else 0
    V = Vt[:r]
    return V.T @ V


def _finalize(X, core, alpha_core) -> MaxMarginSolution:
    """Build the certified solution from a core support set and its duals."""
    core = list(core)
    w = alpha_core @ X[core]
    margins = X @ w
    norms = np.linalg.norm(X, axis=1)
    on = np.abs(margins - 1.0) <= SUPPORT_TOL * np.maximum(1.0, norms)
    support = tuple(int(i) for i in np.flatnonzero(on))
    alpha = np.zeros(len(support))
    pos = {n: i for i, n in enumerate(support)}
    for c, a in zip(core, alpha_core):
        twins = [n for n in support if np.array_equal(X[n], X[c])]
        for n in twins:
            alpha[pos[n]] += a / len(twins)
    off = ~on
    theta = float(np.min(margins[off])) if np.any(off) else math.inf
    Xs = X[list(support)]
    resid = {
        "feasibility": float(max(0.0, 1.0 - np.min(margins))),
        "stationarity": float(np.linalg.norm(w - alpha @ Xs) / max(1.0, np.linalg.norm(w))),
        # sum(alpha) = ||w||^2, so this is scale free like the stationarity residual
        "complementarity": (float(np.max(alpha * np.abs(margins[list(support)] - 1.0)) / max(1.0, alpha.sum()))
                            if support else 0.0),
        "dual_feasibility": float(max(0.0, -np.min(alpha))) if support else 0.0,
    }
    X = np.array(X, copy=True)
    X.setflags(write=False)
    return MaxMarginSolution(points=X, w_hat=w, gamma=1.0 / float(np.linalg.norm(w)),
                             support=support, alpha=alpha, theta=theta,
                             P1=_span_projector(Xs), residuals=resid)


def _corral_duals(X, corral):
    Y = X[corral]
    G = Y @ Y.T
    one = np.ones(len(corral))
    alpha = np.linalg.solve(G, one)
    # one refinement step; small margins make G ill conditioned
    return alpha + np.linalg.solve(G, one - G @ alpha)


def solve_hard_margin(ds) -> MaxMarginSolution:
    """Exact hard-margin solution with KKT certificate."""
    X = ds.points if hasattr(ds, "points") else np.asarray(ds, dtype=float)
    res = min_norm_point(X)
    corral = sorted(res.corral)
    try:
        alpha = _corral_duals(X, corral)
    except np.linalg.LinAlgError:
        alpha = res.weights[corral] / float(res.point @ res.point)
    if np.any(alpha < 0):
        alpha = res.weights[corral] / float(res.point @ res.point)
    sol = _finalize(X, corral, alpha)
    if not sol.kkt_ok:
        raise MaxIterations("hard-margin KKT residuals above tolerance", max(sol.residuals.values()))
    return sol


def brute_force_margin(ds) -> MaxMarginSolution:
    """Enumerate candidate support sets (oracle, N <= 12)."""
    X = ds.points if hasattr(ds, "points") else np.asarray(ds, dtype=float)
    N, d = X.shape
    if N > 12:
        raise ValueError("brute_force_margin is limited to N <= 12")
    best = None
    for k in range(1, min(N, d) + 1):
        for S in itertools.combinations(range(N), k):
            Y = X[list(S)]
            G = Y @ Y.T
            if np.linalg.cond(G) > 1e12:
                continue
            alpha = np.linalg.solve(G, np.ones(k))
            if np.any(alpha < -1e-12):
                continue
            w = alpha @ Y
            if np.min(X @ w) < 1.0 - 1e-9:
                continue
            nrm = float(w @ w)
            if best is None or nrm < best[0] - 1e-14:
                best = (nrm, S, np.maximum(alpha, 0.0))
    if best is None:
        raise Infeasible(np.full(N, 1.0 / N), X.mean(axis=0))
    return _finalize(X, best[1], best[2])


# ---------------------------------------------------------------------------
# auxiliary support-span systems

def _solve_on_span(sol, rhs):
    Xs = sol.support_points
    if Xs.shape[0] == 0:
        raise DegenerateSpan("empty support set")
    v = np.linalg.lstsq(Xs, rhs, rcond=None)[0]
    r = float(np.max(np.abs(Xs @ v - rhs)))
    if r > AUX_GATE:
        raise DegenerateSpan(f"support system inconsistent (residual {r:.3g})")
    return v


def _check_duals(sol):
    a = sol.alpha
    if a.size == 0 or np.any(a <= 1e-12 * max(1.0, float(np.max(a)))):
        raise ZeroDual("a support vector has zero dual weight")


def solve_a(sol: MaxMarginSolution) -> np.ndarray:
    """a in span(S) with exp(-x_n^T a) = alpha_n on S."""
    _check_duals(sol)
    return _solve_on_span(sol, -np.log(sol.alpha))


def support_coefficients(sol: MaxMarginSolution, v) -> np.ndarray:
    """Minimum-norm lambda with v = sum_S lambda_n x_n."""
    return np.linalg.lstsq(sol.support_points.T, np.asarray(v, dtype=float), rcond=None)[0]


def solve_wtilde(sol: MaxMarginSolution, nu: float, eta: float = 1.0, return_lambda: bool = False):
    """w_tilde in span(S) with eta exp(-nu x_n^T w_tilde) = alpha_n on S."""
    if nu <= 0 or eta <= 0:
        raise ValueError("nu and eta must be positive")
    _check_duals(sol)
    wt = _solve_on_span(sol, np.log(eta / sol.alpha) / nu)
    if return_lambda:
        return wt, support_coefficients(sol, wt)
    return wt


def solve_wbar(sol: MaxMarginSolution, nu: float, eta: float = 1.0) -> np.ndarray:
    """w_bar in span(S) with w_bar^T x_n = nu C1 lambda_n / eta exp(nu x_n^T w_tilde), C1 = (1-nu)/nu."""
    wt, lam = solve_wtilde(sol, nu, eta, return_lambda=True)
    c1 = (1.0 - nu) / nu
    rhs = nu * c1 * lam / eta * np.exp(nu * (sol.support_points @ wt))
    return _solve_on_span(sol, rhs)


def solve_wcheck2(sol: MaxMarginSolution, nu: float, eta: float = 1.0) -> np.ndarray:
    """w_check2 in span(S) with w_check2^T x_n = nu (nu-1)/2 (w_tilde^T x_n)^2."""
    wt = solve_wtilde(sol, nu, eta)
    rhs = nu * (nu - 1.0) / 2.0 * (sol.support_points @ wt) ** 2
    return _solve_on_span(sol, rhs)


# ---------------------------------------------------------------------------
# general norms

NORMS = ("L1", "L2", "Linf")
_ALIASES = {"l1": "L1", "1": "L1", "l2": "L2", "2": "L2", "linf": "Linf", "inf": "Linf",
            "l∞": "Linf", "∞": "Linf"}


def canonical_norm(norm: str) -> str:
    key = str(norm).strip().lower()
    if key not in _ALIASES:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
    return _ALIASES[key]


def dual_norm_name(norm: str) -> str:
    return {"L1": "Linf", "L2": "L2", "Linf": "L1"}[canonical_norm(norm)]


def norm_value(v, norm: str) -> float:
    order = {"L1": 1, "L2": 2, "Linf": np.inf}[canonical_norm(norm)]
    return float(np.linalg.norm(np.asarray(v, dtype=float), order))


def dual_margin_lower_bound(ds, norm: str = "L2", iters: int = 20000, tol: float = 1e-15) -> float:
    """min over the simplex of ||X^T r||_* (equals the margin in ``norm``).

    L2 uses away-step Frank-Wolfe with exact line search; L1 and Linf are
    linear programs and are solved exactly with HiGHS.
    """
    X = ds.points if hasattr(ds, "points") else np.asarray(ds, dtype=float)
    norm = canonical_norm(norm)
    N, d = X.shape
    if norm == "L2":
        return _away_step_fw(X, iters, tol)
    # variables: r (N), t (d or 1)
    if norm == "L1":       # dual Linf: min t, -t <= X^T r <= t
        c = np.r_[np.zeros(N), 1.0]
        A = np.block([[X.T, -np.ones((d, 1))], [-X.T, -np.ones((d, 1))]])
    else:                  # dual L1: min sum s, -s <= X^T r <= s
        c = np.r_[np.zeros(N), np.ones(d)]
        A = np.block([[X.T, -np.eye(d)], [-X.T, -np.eye(d)]])
    nt = c.size - N
    res = optimize.linprog(c, A_ub=A, b_ub=np.zeros(2 * d),
                           A_eq=np.r_[np.ones(N), np.zeros(nt)].reshape(1, -1), b_eq=[1.0],
                           bounds=[(0, None)] * c.size, method="highs")
    if res.status != 0:
        raise MaxMarginError(f"dual LP failed: {res.message}")
    r = res.x[:N]
    return norm_value(X.T @ r, dual_norm_name(norm))


def _away_step_fw(X, iters, tol):
    N = X.shape[0]
    scale = float(np.max(np.einsum("ij,ij->i", X, X)))
    r = np.zeros(N)
    r[int(np.argmin(np.einsum("ij,ij->i", X, X)))] = 1.0
    z = r @ X
    for _ in range(iters):
        g = X @ z
        zz = float(z @ z)
        s = int(np.argmin(g))
        fw_gap = zz - g[s]
        if fw_gap <= tol * scale:
            break
        active = np.flatnonzero(r > 0)
        v = int(active[np.argmax(g[active])])
        away_gap = g[v] - zz
        if fw_gap >= away_gap:
            dz = X[s] - z
            gmax = 1.0
            step_dir = ("fw", s)
        else:
            dz = z - X[v]
            gmax = r[v] / (1.0 - r[v]) if r[v] < 1.0 else math.inf
            step_dir = ("away", v)
        dd = float(dz @ dz)
        if dd == 0.0:
            break
        step = min(gmax, -float(z @ dz) / dd)
        if step <= 0:
            break
        if step_dir[0] == "fw":
            r *= 1.0 - step
            r[s] += step
        else:
            r *= 1.0 + step
            r[v] -= step
            r[r < 1e-300] = 0.0
        z = r @ X
    return float(np.linalg.norm(z))


def _unit_sphere_point(u, norm):
    return u / norm_value(u, norm)


def general_norm_margin(ds, norm: str = "L2", grid_resolution: int = 3600,
                        return_direction: bool = False):
    """max over ||w|| = 1 of min_n w^T x_n by direction grid plus local polish (d <= 3).

    Accuracy is of the order of the grid step before polishing.  With
    ``return_direction`` the maximizing unit-norm w is returned as well.
    """
    gamma, w = _grid_margin(ds, canonical_norm(norm), grid_resolution)
    return (gamma, w) if return_direction else gamma


def _grid_margin(ds, norm, grid_resolution):
    X = ds.points if hasattr(ds, "points") else np.asarray(ds, dtype=float)
    d = X.shape[1]
    if d > 3:
        raise ValueError("general_norm_margin is a desk-scale oracle for d <= 3")

    def value_of(u):
        w = _unit_sphere_point(u, norm)
        return float(np.min(X @ w)), w

    if d == 1:
        cands = [value_of(np.array([1.0])), value_of(np.array([-1.0]))]
        return max(cands, key=lambda c: c[0])

    if d == 2:
        phis = np.linspace(0.0, 2.0 * math.pi, grid_resolution, endpoint=False)
        U = np.c_[np.cos(phis), np.sin(phis)]
        nrm = {"L1": np.abs(U).sum(1), "L2": np.ones(len(U)), "Linf": np.abs(U).max(1)}[norm]
        vals = np.min((U / nrm[:, None]) @ X.T, axis=1)
        i = int(np.argmax(vals))
        h = 2.0 * math.pi / grid_resolution
        res = optimize.minimize_scalar(lambda p: -value_of(np.array([math.cos(p), math.sin(p)]))[0],
                                       bounds=(phis[i] - h, phis[i] + h), method="bounded",
                                       options={"xatol": 1e-12})
        best = value_of(np.array([math.cos(res.x), math.sin(res.x)]))
        grid_best = value_of(U[i])
        return best if best[0] >= grid_best[0] else grid_best

    m = max(8, int(round(math.sqrt(grid_resolution))))
    th = np.linspace(0.0, math.pi, m)
    ph = np.linspace(0.0, 2.0 * math.pi, 2 * m, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    U = np.c_[(np.sin(T) * np.cos(P)).ravel(), (np.sin(T) * np.sin(P)).ravel(), np.cos(T).ravel()]
    nrm = {"L1": np.abs(U).sum(1), "L2": np.ones(len(U)), "Linf": np.abs(U).max(1)}[norm]
    vals = np.min((U / nrm[:, None]) @ X.T, axis=1)
    i = int(np.argmax(vals))

    def neg(ang):
        t, p = ang
        return -value_of(np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)]))[0]

    res = optimize.minimize(neg, x0=[T.ravel()[i], P.ravel()[i]], method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    t, p = res.x
    best = value_of(np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)]))
    grid_best = value_of(U[i])
    return best if best[0] >= grid_best[0] else grid_best
