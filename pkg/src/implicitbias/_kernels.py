"""Compiled inner loops for the discrete-time optimizers.

Family codes: 0 exp, 1 logistic, 2 polyexp, 3 powerlaw, 4 subpolyexp.
Norm codes: 0 L1, 1 L2, 2 Linf.  ``params`` = (nu, eps, u0, A, k, c_sub).
"""

import math

import numpy as np
from numba import njit

FAMILY_CODES = {"exp": 0, "logistic": 1, "polyexp": 2, "powerlaw": 3, "subpolyexp": 4}
NORM_CODES = {"L1": 0, "L2": 1, "Linf": 2}

# stats slots shared by all kernels
S_MONO_VIOL, S_MONO_WORST, S_BOUND_MAX, S_BOUND_T, S_GUARD_MAX, S_GUARD_T, \
    S_THM4_MIN, S_THM4_T, S_NONFINITE_T = range(9)
N_STATS = 9


def _init_stats():
    st = np.zeros(N_STATS)
    st[S_MONO_WORST] = -np.inf
    st[S_BOUND_MAX] = -np.inf
    st[S_GUARD_MAX] = -np.inf
    st[S_THM4_MIN] = np.inf
    st[S_BOUND_T] = st[S_GUARD_T] = st[S_THM4_T] = st[S_NONFINITE_T] = -1.0
    return st


@njit(cache=True)
def neg_deriv(u, fam, params):
    """-l'(u) for the family code."""
    if fam == 0:
        return math.exp(-u)
    if fam == 1:
        if u >= 0.0:
            e = math.exp(-u)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(u))
    if fam == 2:
        nu, u0, A, k = params[0], params[2], params[3], params[4]
        if u >= u0:
            return math.exp(-(u ** nu))
        return math.exp(-(A + k * (u - u0)))
    if fam == 3:
        if u > 1.0:
            return 1.0 / (u * u)
        return 1.0
    eps = params[1]
    if u > 2.0:
        s = math.log(u)
        return math.exp(-(s ** eps) - math.log(eps * s ** (eps - 1.0)) + s)
    return params[5]


@njit(cache=True)
def _logsumexp_neg(u):
    m = -np.inf
    for i in range(u.shape[0]):
        if -u[i] > m:
            m = -u[i]
    s = 0.0
    for i in range(u.shape[0]):
        s += math.exp(-u[i] - m)
    return m + math.log(s)


@njit(cache=True)
def gd_kernel(X, w0, eta, T, fam, params, ckpts, gamma, logL0, W, stats):
    """Fixed-step gradient descent.  Stores iterates at ``ckpts`` into ``W``.

    For the exponential loss every step also checks monotonicity of log L, the
    bound L(t) <= 1/(eta gamma^2 t + 1/L0) and the guard eta L(t) < 1.
    """
    N, d = X.shape
    w = w0.copy()
    u = np.empty(N)
    g = np.empty(d)
    ci = 0
    prev = np.inf
    log_eta = math.log(eta)
    L0 = math.exp(logL0)
    for t in range(T + 1):
        for j in range(d):
            if not math.isfinite(w[j]):
                stats[S_NONFINITE_T] = t
                return ci
        while ci < ckpts.shape[0] and ckpts[ci] == t:
            W[ci, :] = w
            ci += 1
        for n in range(N):
            s = 0.0
            for j in range(d):
                s += X[n, j] * w[j]
            u[n] = s
        if fam == 0:
            logL = _logsumexp_neg(u)
            if logL > prev + 1e-12 * max(1.0, abs(prev)):
                stats[S_MONO_VIOL] += 1
            if logL - prev > stats[S_MONO_WORST]:
                stats[S_MONO_WORST] = logL - prev
            prev = logL
            r = logL + math.log(eta * gamma * gamma * t + 1.0 / L0)
            if r > stats[S_BOUND_MAX]:
                stats[S_BOUND_MAX] = r
                stats[S_BOUND_T] = t
            gr = log_eta + logL
            if gr > stats[S_GUARD_MAX]:
                stats[S_GUARD_MAX] = gr
                stats[S_GUARD_T] = t
        if t == T:
            break
        for j in range(d):
            g[j] = 0.0
        for n in range(N):
            dl = neg_deriv(u[n], fam, params)
            for j in range(d):
                g[j] += dl * X[n, j]
        for j in range(d):
            w[j] += eta * g[j]
    return ci


@njit(cache=True)
def _softmax_dir(X, u, q):
    """q = grad L / L for the exponential loss; returns log L."""
    N, d = X.shape
    logL = _logsumexp_neg(u)
    for j in range(d):
        q[j] = 0.0
    for n in range(N):
        p = math.exp(-u[n] - logL)
        for j in range(d):
            q[j] -= p * X[n, j]
    return logL


@njit(cache=True)
def _dual_norm(q, norm):
    d = q.shape[0]
    if norm == 0:
        m = 0.0
        for j in range(d):
            if abs(q[j]) > m:
                m = abs(q[j])
        return m
    if norm == 1:
        s = 0.0
        for j in range(d):
            s += q[j] * q[j]
        return math.sqrt(s)
    s = 0.0
    for j in range(d):
        s += abs(q[j])
    return s


@njit(cache=True)
def _primal_norm(w, norm):
    # primal of norm code: L1 -> sum, L2 -> euclid, Linf -> max
    d = w.shape[0]
    if norm == 0:
        s = 0.0
        for j in range(d):
            s += abs(w[j])
        return s
    if norm == 1:
        s = 0.0
        for j in range(d):
            s += w[j] * w[j]
        return math.sqrt(s)
    m = 0.0
    for j in range(d):
        if abs(w[j]) > m:
            m = abs(w[j])
    return m


@njit(cache=True)
def steepest_direction(q, norm, out):
    """Unit-norm direction with out^T q = ||q||_* (ties to the lowest index)."""
    d = q.shape[0]
    for j in range(d):
        out[j] = 0.0
    if norm == 0:
        i = 0
        for j in range(1, d):
            if abs(q[j]) > abs(q[i]):
                i = j
        if q[i] > 0:
            out[i] = 1.0
        elif q[i] < 0:
            out[i] = -1.0
    elif norm == 1:
        nq = _dual_norm(q, 1)
        if nq > 0:
            for j in range(d):
                out[j] = q[j] / nq
    else:
        for j in range(d):
            if q[j] > 0:
                out[j] = 1.0
            elif q[j] < 0:
                out[j] = -1.0


@njit(cache=True)
def steepest_kernel(X, w0, eta, T, norm, schedule, ckpts, gamma, logL0, W, stats):
    """Steepest descent on the exponential loss.

    schedule 0: w -= eta ||grad L||_* dw           (fixed step)
    schedule 1: w -= ||grad L||_*/L dw / sqrt(t+1)   (normalized, decaying)
    schedule 2: w -= dw / L                         (step 1/L on the unit direction)
    The normalized margin uses the primal norm; for schedule 1 the bound
    gamma - (1/2 (1 + log(t+1)) + log L0) / (gamma (2 sqrt(t+2) - 2)) on the
    iterate t+1 is tracked.
    """
    N, d = X.shape
    w = w0.copy()
    u = np.empty(N)
    q = np.empty(d)
    dw = np.empty(d)
    ci = 0
    prev = np.inf
    L0 = math.exp(logL0)
    log_eta = math.log(eta) if eta > 0 else 0.0
    for t in range(T + 1):
        for j in range(d):
            if not math.isfinite(w[j]):
                stats[S_NONFINITE_T] = t
                return ci
        while ci < ckpts.shape[0] and ckpts[ci] == t:
            W[ci, :] = w
            ci += 1
        for n in range(N):
            s = 0.0
            for j in range(d):
                s += X[n, j] * w[j]
            u[n] = s
        logL = _softmax_dir(X, u, q)
        if logL > prev + 1e-12 * max(1.0, abs(prev)):
            stats[S_MONO_VIOL] += 1
        if logL - prev > stats[S_MONO_WORST]:
            stats[S_MONO_WORST] = logL - prev
        prev = logL
        if schedule == 0:
            r = logL + math.log(eta * gamma * gamma * t + 1.0 / L0)
            if r > stats[S_BOUND_MAX]:
                stats[S_BOUND_MAX] = r
                stats[S_BOUND_T] = t
            gr = log_eta + logL
            if gr > stats[S_GUARD_MAX]:
                stats[S_GUARD_MAX] = gr
                stats[S_GUARD_T] = t
        if schedule == 1 and t >= 1:
            umin = u[0]
            for n in range(1, N):
                if u[n] < umin:
                    umin = u[n]
            wn = _primal_norm(w, norm)
            bound = gamma - (0.5 * (1.0 + math.log(t)) + logL0) / (gamma * (2.0 * math.sqrt(t + 1.0) - 2.0))
            slack = umin / wn - bound
            if slack < stats[S_THM4_MIN]:
                stats[S_THM4_MIN] = slack
                stats[S_THM4_T] = t
        if t == T:
            break
        steepest_direction(q, norm, dw)
        qn = _dual_norm(q, norm)
        if schedule == 0:
            step = eta * math.exp(logL) * qn
        elif schedule == 1:
            step = qn / math.sqrt(t + 1.0)
        else:
            step = math.exp(-logL)
        for j in range(d):
            w[j] -= step * dw[j]
    return ci
