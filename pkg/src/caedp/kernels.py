"""Hot numerical kernels with two interchangeable implementations.

Each kernel has a pure numpy version and a numba-compiled loop version.
Set the environment variable CAEDP_NUMBA=0 to force the numpy path (the
default is to use numba when it imports cleanly). benchmarks/bench_kernels.py
compares the two.
"""

from __future__ import annotations

import math

import numpy as np

from .config import numba_enabled

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap


_SQRT2 = math.sqrt(2.0)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True)))[..., 0]


# ---------------------------------------------------------------------------
# per-individual contribution to the cluster-class log probabilities
# ---------------------------------------------------------------------------

def _individual_cluster_scores_np(ll_theta, ll_phi, log_w_theta, log_w_phi):
    # inner: (n, K, L) = logsumexp_m( log_w_phi[k,l,m] + ll_phi[j,m] )
    inner = _logsumexp_rows(log_w_phi[None, :, :, :] + ll_phi[:, None, None, :])
    return _logsumexp_rows(log_w_theta[None, :, :] + ll_theta[:, None, :] + inner)


@njit(cache=True)
def _individual_cluster_scores_nb(ll_theta, ll_phi, log_w_theta, log_w_phi):
    n, L = ll_theta.shape
    K = log_w_theta.shape[0]
    M = ll_phi.shape[1]
    out = np.empty((n, K))
    for j in range(n):
        for k in range(K):
            best = -np.inf
            vals = np.empty(L)
            for l in range(L):
                mb = -np.inf
                for m in range(M):
                    t = log_w_phi[k, l, m] + ll_phi[j, m]
                    if t > mb:
                        mb = t
                s = 0.0
                for m in range(M):
                    s += math.exp(log_w_phi[k, l, m] + ll_phi[j, m] - mb)
                v = log_w_theta[k, l] + ll_theta[j, l] + mb + math.log(s)
                vals[l] = v
                if v > best:
                    best = v
            acc = 0.0
            for l in range(L):
                acc += math.exp(vals[l] - best)
            out[j, k] = best + math.log(acc)
    return out


# ---------------------------------------------------------------------------
# outcome-class log probabilities given each individual's cluster class
# ---------------------------------------------------------------------------

def _y_class_logprobs_np(ll_theta, ll_phi, log_w_theta, log_w_phi, k_of_ind):
    inner = _logsumexp_rows(log_w_phi[k_of_ind][:, :, :] + ll_phi[:, None, :])
    return log_w_theta[k_of_ind] + ll_theta + inner


@njit(cache=True)
def _y_class_logprobs_nb(ll_theta, ll_phi, log_w_theta, log_w_phi, k_of_ind):
    n, L = ll_theta.shape
    M = ll_phi.shape[1]
    out = np.empty((n, L))
    for j in range(n):
        k = k_of_ind[j]
        for l in range(L):
            mb = -np.inf
            for m in range(M):
                t = log_w_phi[k, l, m] + ll_phi[j, m]
                if t > mb:
                    mb = t
            s = 0.0
            for m in range(M):
                s += math.exp(log_w_phi[k, l, m] + ll_phi[j, m] - mb)
            out[j, l] = log_w_theta[k, l] + ll_theta[j, l] + mb + math.log(s)
    return out


# ---------------------------------------------------------------------------
# categorical sampling from unnormalised log probabilities, one row each
# ---------------------------------------------------------------------------

def _sample_rows_np(logp, u):
    m = logp.max(axis=1, keepdims=True)
    p = np.exp(logp - m)
    cum = np.cumsum(p, axis=1)
    targets = u * cum[:, -1]
    return (cum < targets[:, None]).sum(axis=1).astype(np.int64)


@njit(cache=True)
def _sample_rows_nb(logp, u):
    n, c = logp.shape
    out = np.empty(n, dtype=np.int64)
    for j in range(n):
        m = logp[j, 0]
        for i in range(1, c):
            if logp[j, i] > m:
                m = logp[j, i]
        total = 0.0
        for i in range(c):
            total += math.exp(logp[j, i] - m)
        target = u[j] * total
        acc = 0.0
        idx = c - 1
        for i in range(c):
            acc += math.exp(logp[j, i] - m)
            if acc >= target:
                idx = i
                break
        out[j] = idx
    return out


# ---------------------------------------------------------------------------
# gaussian mixture CDF and its inverse (bisection)
# ---------------------------------------------------------------------------

def _mixture_cdf_np(x, w, means, sds):
    # x (n,), means (n, L): mixture locations vary per evaluation point
    z = (x[:, None] - means) / (sds[None, :] * _SQRT2)
    from scipy.special import erf
    return (w[None, :] * 0.5 * (1.0 + erf(z))).sum(axis=1)


@njit(cache=True)
def _mixture_cdf_nb(x, w, means, sds):
    n = x.shape[0]
    L = w.shape[0]
    out = np.empty(n)
    for j in range(n):
        s = 0.0
        for l in range(L):
            z = (x[j] - means[j, l]) / (sds[l] * _SQRT2)
            s += w[l] * 0.5 * (1.0 + math.erf(z))
        out[j] = s
    return out


@njit(cache=True)
def _invert_mixture_cdf_nb(u, w, means, sds, tol):
    n = u.shape[0]
    L = w.shape[0]
    out = np.empty(n)
    ok = np.ones(n, dtype=np.bool_)
    sd_max = sds.max()
    for j in range(n):
        if u[j] <= 0.0 or u[j] >= 1.0:
            out[j] = np.nan
            ok[j] = False
            continue
        centre = 0.0
        for l in range(L):
            centre += w[l] * means[j, l]
        half = 10.0 * sd_max
        lo = centre - half
        hi = centre + half
        grew = True
        for _ in range(60):
            flo = 0.0
            fhi = 0.0
            for l in range(L):
                zlo = (lo - means[j, l]) / (sds[l] * _SQRT2)
                zhi = (hi - means[j, l]) / (sds[l] * _SQRT2)
                flo += w[l] * 0.5 * (1.0 + math.erf(zlo))
                fhi += w[l] * 0.5 * (1.0 + math.erf(zhi))
            if flo < u[j] < fhi:
                grew = False
                break
            if flo >= u[j]:
                lo -= half
            if fhi <= u[j]:
                hi += half
            half *= 2.0
        if grew:
            out[j] = np.nan
            ok[j] = False
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            f = 0.0
            for l in range(L):
                z = (mid - means[j, l]) / (sds[l] * _SQRT2)
                f += w[l] * 0.5 * (1.0 + math.erf(z))
            if f < u[j]:
                lo = mid
            else:
                hi = mid
        out[j] = 0.5 * (lo + hi)
    return out, ok


def _invert_mixture_cdf_np(u, w, means, sds, tol):
    n = u.shape[0]
    out = np.empty(n)
    ok = np.ones(n, dtype=bool)
    bad = (u <= 0.0) | (u >= 1.0)
    out[bad] = np.nan
    ok[bad] = False
    live = ~bad
    if not live.any():
        return out, ok
    idx = np.where(live)[0]
    uu = u[idx]
    mm = means[idx]
    centre = mm @ w
    half = 10.0 * sds.max()
    lo = centre - half
    hi = centre + half
    for _ in range(60):
        flo = _mixture_cdf_np(lo, w, mm, sds)
        fhi = _mixture_cdf_np(hi, w, mm, sds)
        miss_lo = flo >= uu
        miss_hi = fhi <= uu
        if not miss_lo.any() and not miss_hi.any():
            break
        lo[miss_lo] -= half
        hi[miss_hi] += half
        half *= 2.0
    else:
        still = (_mixture_cdf_np(lo, w, mm, sds) >= uu) | \
                (_mixture_cdf_np(hi, w, mm, sds) <= uu)
        out[idx[still]] = np.nan
        ok[idx[still]] = False
        keep = ~still
        idx, uu, mm, lo, hi = idx[keep], uu[keep], mm[keep], lo[keep], hi[keep]
    while (hi - lo > tol).any() if len(idx) else False:
        mid = 0.5 * (lo + hi)
        f = _mixture_cdf_np(mid, w, mm, sds)
        below = f < uu
        lo[below] = mid[below]
        hi[~below] = mid[~below]
    if len(idx):
        out[idx] = 0.5 * (lo + hi)
    return out, ok


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_USE_NUMBA = _HAVE_NUMBA and numba_enabled()

if _USE_NUMBA:
    individual_cluster_scores = _individual_cluster_scores_nb
    y_class_logprobs = _y_class_logprobs_nb
    sample_categorical_rows = _sample_rows_nb
    mixture_cdf = _mixture_cdf_nb
    invert_mixture_cdf = _invert_mixture_cdf_nb
else:
    individual_cluster_scores = _individual_cluster_scores_np
    y_class_logprobs = _y_class_logprobs_np
    sample_categorical_rows = _sample_rows_np
    mixture_cdf = _mixture_cdf_np
    invert_mixture_cdf = _invert_mixture_cdf_np
