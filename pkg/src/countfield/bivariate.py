"""Exact joint distributions for the renewal-count construction.

The count field attaches to every site a Poisson counting process whose
inter-arrival times are a shared exponential random field, so two sites'
counts form a two-dimensional renewal process driven by i.i.d. Kibble
bivariate-exponential inter-arrival pairs.  This module evaluates

* the marginal Poisson pmf,
* the joint pmf ``p_nm = Pr(N_i = n, N_j = m)`` of two coupled counts,
  as closed-form series in the regularized incomplete gamma and confluent
  hypergeometric functions (four cases: both zero, one zero, equal, unequal),
* the zero-inflated variants obtained by thresholded-Gaussian masking,
* the exponential inter-arrival densities themselves (bivariate Kibble form
  and the Markov-chain multivariate form on a line with exponential
  underlying correlation).

Series terms are assembled in log space (individual factors overflow or
underflow double precision long before their products do) and truncated
adaptively; evaluation is refused for underlying |rho| > 0.999, where the
1/(1-rho^2) blow-up exceeds what double-precision series control can
certify.  The scalar kernels are numba-compiled; ``joint_pmf_batch`` exposes
the statuses instead of raising so the pairwise-likelihood loop can reject
an optimizer step without unwinding.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special as sp_special

from .errors import NumericalError, SeriesTruncationError
from .specfun import (
    DEFAULT_CONTROL,
    _gammp,
    _log_1f1reg,
    bivariate_normal_cdf,
    normal_cdf,
    poisson_quantile,
)

__all__ = [
    "BivariatePoissonQuery",
    "poisson_marginal_pmf",
    "bivariate_pmf",
    "joint_pmf_batch",
    "pmf_table",
    "zip_marginal_pmf",
    "zip_bivariate_pmf",
    "exp_bivariate_pdf",
    "exp_multivariate_pdf_1d",
]

RHO_MAX = 0.999
_INDEP_Q = 1e-13
_LOG_TINY = -745.0

STATUS_OK = 0
STATUS_TRUNCATED = 1
STATUS_INCONSISTENT = 2


@njit(cache=True)
def _log_poi(n, lam):
    return n * math.log(lam) - lam - math.lgamma(n + 1.0)


@njit(cache=True)
def _advance_gamma(p, lp, a, x, lx):
    """One step of the incomplete-gamma recurrence, from index a to a+1.

    Takes p = P(a, x) and lp = log Poi(a; x); returns (P(a+1, x),
    log Poi(a+1; x)).  The subtractive recurrence loses all relative
    accuracy deep in the tail (and can freeze at a stale positive value),
    so the result is clamped by the geometric tail bound
    P(a+1, x) <= Poi(a+1; x) (a+2)/(a+2-x), which is exact log-space
    arithmetic and tight exactly where the recurrence degrades.
    """
    if lp > _LOG_TINY:
        p -= math.exp(lp)
        if p < 0.0:
            p = 0.0
    lp += lx - math.log(a + 1.0)
    if x < a + 2.0 and p > 0.0:
        bound = math.exp(lp) * (a + 2.0) / (a + 2.0 - x) if lp > _LOG_TINY else 0.0
        if p > bound:
            p = bound
    return p, lp


@njit(cache=True)
def _pmf_case_a(li, lj, q, rel_tol, abs_tol, max_terms):
    """p_00 = -1 + e^-li + e^-lj + (1-q) sum_k q^k P(k+1,u) P(k+1,w)."""
    u = li / (1.0 - q)
    w = lj / (1.0 - q)
    lu = math.log(u)
    lw = math.log(w)
    pu = -math.expm1(-u)  # P(1, u)
    pw = -math.expm1(-w)
    lpu = lu - u  # log Poi(1; u)
    lpw = lw - w
    ktail = q / (1.0 - q)
    if ktail < 1.0:
        ktail = 1.0
    s = 0.0
    qk = 1.0
    peak = -1.0
    small = 0
    ok = False
    for k in range(max_terms):
        term = qk * pu * pw
        s += term
        if term > peak:
            peak = term
        if term < peak and term * ktail <= max(abs_tol, rel_tol * s):
            small += 1
            if small >= 3:
                ok = True
                break
        else:
            small = 0
        pu, lpu = _advance_gamma(pu, lpu, k + 1.0, u, lu)
        pw, lpw = _advance_gamma(pw, lpw, k + 1.0, w, lw)
        if pu <= 0.0 or pw <= 0.0:
            ok = True
            break
        qk *= q
    p = -1.0 + math.exp(-li) + math.exp(-lj) + (1.0 - q) * s
    return p, ok


@njit(cache=True)
def _pmf_case_b(b, x, y, q, rel_tol, abs_tol, max_terms):
    """p_{b,0} for b >= 1: Poi(b; x) minus the coupled-tail series

    x^b e^{-u} sum_l v^l 1F1~(b; b+l+1; v) P(l+1, w),
    u = x/(1-q), v = q u, w = y/(1-q).
    """
    u = x / (1.0 - q)
    w = y / (1.0 - q)
    v = q * u
    lv = math.log(v)
    lw = math.log(w)
    base = b * math.log(x) - u
    pw = -math.expm1(-w)  # P(1, w)
    lpw = lw - w  # log Poi(1; w)
    m = -math.inf
    s = 0.0
    peak = -math.inf
    ktail = q / (1.0 - q)
    if ktail < 1.0:
        ktail = 1.0
    lktail = math.log(ktail)
    small = 0
    ok = False
    for l in range(max_terms):
        if pw <= 0.0:
            ok = True
            break
        lf, okf = _log_1f1reg(b, b + l + 1.0, v, rel_tol, max_terms)
        if not okf:
            return math.nan, False
        lt = base + l * lv + lf + math.log(pw)
        if lt > m:
            s = s * math.exp(m - lt) + 1.0
            m = lt
        else:
            s += math.exp(lt - m)
        if lt > peak:
            peak = lt
        ltot = m + math.log(s)
        thresh = max(math.log(abs_tol), math.log(rel_tol) + ltot)
        if lt < peak and lt + lktail <= thresh:
            small += 1
            if small >= 3:
                ok = True
                break
        else:
            small = 0
        pw, lpw = _advance_gamma(pw, lpw, l + 1.0, w, lw)
    series = math.exp(m) * s if m > -math.inf else 0.0
    lpoi = _log_poi(b, x)
    poi = math.exp(lpoi) if lpoi > _LOG_TINY else 0.0
    return poi - series, ok


@njit(cache=True)
def _pmf_case_c(n, li, lj, q, rel_tol, abs_tol, max_terms):
    """p_nn for n >= 1, as T3 + T2 - T1 (each a positive single series)."""
    u = li / (1.0 - q)
    w = lj / (1.0 - q)
    vu = q * u
    vw = q * w
    lq = math.log(q)
    l1q = math.log1p(-q)
    lu = math.log(u)
    lw = math.log(w)
    lgn = math.lgamma(n + 0.0)
    ktail = q / (1.0 - q)
    if ktail < 1.0:
        ktail = 1.0

    # T1 = (1-q)^n sum_k q^k (n)_k/k! P(n+k, u) P(n+k, w)
    pu = _gammp(n, u)
    pw = _gammp(n, w)
    lpu = _log_poi(n, u)
    lpw = _log_poi(n, w)
    t1 = 0.0
    peak = -1.0
    small = 0
    ok1 = False
    for k in range(max_terms):
        if pu <= 0.0 or pw <= 0.0:
            ok1 = True
            break
        lcoef = n * l1q + k * lq + math.lgamma(n + k) - lgn - math.lgamma(k + 1.0)
        lt = lcoef + math.log(pu) + math.log(pw)
        term = math.exp(lt) if lt > _LOG_TINY else 0.0
        t1 += term
        if term > peak:
            peak = term
        if term < peak and term * ktail <= max(abs_tol, rel_tol * t1):
            small += 1
            if small >= 3:
                ok1 = True
                break
        else:
            small = 0
        pu, lpu = _advance_gamma(pu, lpu, n + k, u, lu)
        pw, lpw = _advance_gamma(pw, lpw, n + k, w, lw)
    if not ok1:
        return math.nan, False

    # T2 = ((1-q)/q)^n sum_k (n)_k/k! [e^-li P(n+k, qu) P(n+k, w)
    #                                 + e^-lj P(n+k, u) P(n+k, qw)]
    lpre = n * (l1q - lq)
    pvu = _gammp(n, vu)
    pvw = _gammp(n, vw)
    pu = _gammp(n, u)
    pw = _gammp(n, w)
    lpvu = _log_poi(n, vu)
    lpvw = _log_poi(n, vw)
    lpu = _log_poi(n, u)
    lpw = _log_poi(n, w)
    lvu = math.log(vu)
    lvw = math.log(vw)
    t2 = 0.0
    peak = -1.0
    small = 0
    ok2 = False
    for k in range(max_terms):
        if (pvu <= 0.0 or pw <= 0.0) and (pu <= 0.0 or pvw <= 0.0):
            ok2 = True
            break
        lcoef = lpre + math.lgamma(n + k) - lgn - math.lgamma(k + 1.0)
        term = 0.0
        if pvu > 0.0 and pw > 0.0:
            lt = lcoef - li + math.log(pvu) + math.log(pw)
            if lt > _LOG_TINY:
                term += math.exp(lt)
        if pu > 0.0 and pvw > 0.0:
            lt = lcoef - lj + math.log(pu) + math.log(pvw)
            if lt > _LOG_TINY:
                term += math.exp(lt)
        t2 += term
        if term > peak:
            peak = term
        if term < peak and term * ktail <= max(abs_tol, rel_tol * t2):
            small += 1
            if small >= 3:
                ok2 = True
                break
        else:
            small = 0
        pvu, lpvu = _advance_gamma(pvu, lpvu, n + k, vu, lvu)
        pvw, lpvw = _advance_gamma(pvw, lpvw, n + k, vw, lvw)
        pu, lpu = _advance_gamma(pu, lpu, n + k, u, lu)
        pw, lpw = _advance_gamma(pw, lpw, n + k, w, lw)
    if not ok2:
        return math.nan, False

    # T3 = (1-q)^(n+1) sum_j q^j c_j P(n+j+1, u) P(n+j+1, w),
    # c_j = sum_{l<=j} (n)_l / l!   (diagonal collapse of the double series)
    pu = _gammp(n + 1.0, u)
    pw = _gammp(n + 1.0, w)
    lpu = _log_poi(n + 1.0, u)
    lpw = _log_poi(n + 1.0, w)
    lc = 0.0  # log c_0 = log 1
    t3 = 0.0
    peak = -1.0
    small = 0
    ok3 = False
    for j in range(max_terms):
        if pu <= 0.0 or pw <= 0.0:
            ok3 = True
            break
        lt = (n + 1.0) * l1q + j * lq + lc + math.log(pu) + math.log(pw)
        term = math.exp(lt) if lt > _LOG_TINY else 0.0
        t3 += term
        if term > peak:
            peak = term
        if term < peak and term * ktail <= max(abs_tol, rel_tol * t3):
            small += 1
            if small >= 3:
                ok3 = True
                break
        else:
            small = 0
        le = math.lgamma(n + j + 1.0) - lgn - math.lgamma(j + 2.0)  # log (n)_{j+1}/(j+1)!
        if le > lc:
            lc = le + math.log1p(math.exp(lc - le))
        else:
            lc = lc + math.log1p(math.exp(le - lc))
        pu, lpu = _advance_gamma(pu, lpu, n + j + 1.0, u, lu)
        pw, lpw = _advance_gamma(pw, lpw, n + j + 1.0, w, lw)
    if not ok3:
        return math.nan, False
    return t3 + t2 - t1, True


@njit(cache=True)
def _pmf_case_d(a, b, x, y, q, rel_tol, abs_tol, max_terms):
    """p for unequal nonzero counts a > b >= 1 (a at the x-rate site):

    x^a e^{-u} [ sum_l (b)_l/l! v^l 1F1~(a-b+1; a+l+1; v) P(b+l, w)
               - sum_j v^j c_j 1F1~(a-b; a+j+1; v) P(b+j+1, w) ],

    with c_j = sum_{l<=j} (b)_l/l! (diagonal collapse of the double series).
    """
    u = x / (1.0 - q)
    w = y / (1.0 - q)
    v = q * u
    lv = math.log(v)
    lw = math.log(w)
    base = a * math.log(x) - u
    lgb = math.lgamma(b + 0.0)
    ktail = q / (1.0 - q)
    if ktail < 1.0:
        ktail = 1.0
    lktail = math.log(ktail)
    labs = math.log(abs_tol)
    lrel = math.log(rel_tol)

    # S1
    pw = _gammp(b, w)
    lpw = _log_poi(b, w)
    m1 = -math.inf
    s1 = 0.0
    peak = -math.inf
    small = 0
    ok = False
    for l in range(max_terms):
        if pw <= 0.0:
            ok = True
            break
        lf, okf = _log_1f1reg(a - b + 1.0, a + l + 1.0, v, rel_tol, max_terms)
        if not okf:
            return math.nan, False
        lcoef = math.lgamma(b + l) - lgb - math.lgamma(l + 1.0)
        lt = base + lcoef + l * lv + lf + math.log(pw)
        if lt > m1:
            s1 = s1 * math.exp(m1 - lt) + 1.0
            m1 = lt
        else:
            s1 += math.exp(lt - m1)
        if lt > peak:
            peak = lt
        thresh = max(labs, lrel + m1 + math.log(s1))
        if lt < peak and lt + lktail <= thresh:
            small += 1
            if small >= 3:
                ok = True
                break
        else:
            small = 0
        pw, lpw = _advance_gamma(pw, lpw, b + l, w, lw)
    if not ok:
        return math.nan, False

    # S2
    pw = _gammp(b + 1.0, w)
    lpw = _log_poi(b + 1.0, w)
    lc = 0.0
    m2 = -math.inf
    s2 = 0.0
    peak = -math.inf
    small = 0
    ok = False
    for j in range(max_terms):
        if pw <= 0.0:
            ok = True
            break
        lf, okf = _log_1f1reg(a - b + 0.0, a + j + 1.0, v, rel_tol, max_terms)
        if not okf:
            return math.nan, False
        lt = base + j * lv + lc + lf + math.log(pw)
        if lt > m2:
            s2 = s2 * math.exp(m2 - lt) + 1.0
            m2 = lt
        else:
            s2 += math.exp(lt - m2)
        if lt > peak:
            peak = lt
        thresh = max(labs, lrel + m2 + math.log(s2))
        if lt < peak and lt + lktail <= thresh:
            small += 1
            if small >= 3:
                ok = True
                break
        else:
            small = 0
        le = math.lgamma(b + j + 1.0) - lgb - math.lgamma(j + 2.0)
        if le > lc:
            lc = le + math.log1p(math.exp(lc - le))
        else:
            lc = lc + math.log1p(math.exp(le - lc))
        pw, lpw = _advance_gamma(pw, lpw, b + j + 1.0, w, lw)
    if not ok:
        return math.nan, False
    v1 = math.exp(m1) * s1 if m1 > -math.inf else 0.0
    v2 = math.exp(m2) * s2 if m2 > -math.inf else 0.0
    return v1 - v2, True


@njit(cache=True)
def _joint_pmf_core(n, m, li, lj, rho, rel_tol, abs_tol, max_terms):
    """Dispatch on the four count cases. Returns (probability, status)."""
    q = rho * rho
    if q <= _INDEP_Q:
        lp = _log_poi(n, li) + _log_poi(m, lj)
        return (math.exp(lp) if lp > _LOG_TINY else 0.0), STATUS_OK
    if n == 0 and m == 0:
        # canonical argument order keeps the symmetric cases bitwise symmetric
        if li >= lj:
            p, ok = _pmf_case_a(li, lj, q, rel_tol, abs_tol, max_terms)
        else:
            p, ok = _pmf_case_a(lj, li, q, rel_tol, abs_tol, max_terms)
    elif m == 0:
        p, ok = _pmf_case_b(float(n), li, lj, q, rel_tol, abs_tol, max_terms)
    elif n == 0:
        p, ok = _pmf_case_b(float(m), lj, li, q, rel_tol, abs_tol, max_terms)
    elif n == m:
        if li >= lj:
            p, ok = _pmf_case_c(float(n), li, lj, q, rel_tol, abs_tol, max_terms)
        else:
            p, ok = _pmf_case_c(float(n), lj, li, q, rel_tol, abs_tol, max_terms)
    elif n > m:
        p, ok = _pmf_case_d(float(n), float(m), li, lj, q, rel_tol, abs_tol, max_terms)
    else:
        p, ok = _pmf_case_d(float(m), float(n), lj, li, q, rel_tol, abs_tol, max_terms)
    if not ok or math.isnan(p):
        return math.nan, STATUS_TRUNCATED
    # series differences may leave truncation noise just outside [0, 1]
    if p < 0.0:
        if p < -1e-9:
            return p, STATUS_INCONSISTENT
        p = 0.0
    elif p > 1.0:
        if p > 1.0 + 1e-9:
            return p, STATUS_INCONSISTENT
        p = 1.0
    return p, STATUS_OK


@njit(cache=True)
def _joint_pmf_batch(ns, ms, lis, ljs, rhos, rel_tol, abs_tol, max_terms):
    k = ns.shape[0]
    out = np.empty(k)
    status = np.zeros(k, dtype=np.int64)
    for i in range(k):
        out[i], status[i] = _joint_pmf_core(
            ns[i], ms[i], lis[i], ljs[i], rhos[i], rel_tol, abs_tol, max_terms
        )
    return out, status


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BivariatePoissonQuery:
    """A single joint-pmf evaluation point Pr(N_i = n, N_j = m)."""

    n: int
    m: int
    lambda_i: float
    lambda_j: float
    rho: float

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("counts must be nonnegative integers")
        if not (self.lambda_i > 0.0 and self.lambda_j > 0.0):
            raise ValueError("rates must be positive")
        if not abs(self.rho) < 1.0:
            raise ValueError("underlying correlation must satisfy |rho| < 1")


def poisson_marginal_pmf(n, lam):
    """Poisson pmf Pr(N = n) with rate ``lam``, evaluated in log space."""
    if n < 0 or int(n) != n:
        raise ValueError("count must be a nonnegative integer")
    lam = float(lam)
    if not lam > 0.0:
        raise ValueError("rate must be positive")
    lp = _log_poi(float(n), lam)
    return math.exp(lp) if lp > _LOG_TINY else 0.0


def _check_rho(rho):
    if not abs(rho) < 1.0:
        raise ValueError("underlying correlation must satisfy |rho| < 1")
    if abs(rho) > RHO_MAX:
        raise NumericalError(
            f"joint pmf evaluation refused for |rho| > {RHO_MAX}: the 1/(1-rho^2) "
            "series arguments exceed double-precision series control"
        )


def bivariate_pmf(query, ctrl=None):
    """Joint pmf of two coupled renewal counts.

    Parameters
    ----------
    query : BivariatePoissonQuery
        Counts, rates and the underlying Gaussian correlation.
    ctrl : SeriesControl, optional
        Truncation control for the underlying series.

    Notes
    -----
    Symmetry ``p(n, m; li, lj) = p(m, n; lj, li)`` holds exactly because both
    orderings dispatch to the same kernel.  At ``rho = 0`` the product of
    Poisson marginals is returned exactly.
    """
    ctrl = ctrl or DEFAULT_CONTROL
    _check_rho(query.rho)
    p, status = _joint_pmf_core(
        int(query.n),
        int(query.m),
        float(query.lambda_i),
        float(query.lambda_j),
        float(query.rho),
        ctrl.rel_tol,
        ctrl.abs_tol,
        ctrl.max_terms,
    )
    if status == STATUS_TRUNCATED:
        raise SeriesTruncationError(
            f"joint pmf series did not converge within {ctrl.max_terms} terms for {query}"
        )
    if status == STATUS_INCONSISTENT:
        raise NumericalError(
            f"joint pmf evaluated to {p}, outside [0, 1] beyond rounding tolerance, for {query}"
        )
    return p


def joint_pmf_batch(ns, ms, lambda_i, lambda_j, rho, ctrl=None):
    """Vectorized joint pmf over aligned arrays.

    Returns ``(values, statuses)`` without raising; statuses are 0 (ok),
    1 (series truncation) or 2 (consistency failure).  Inputs are broadcast
    to a common shape.
    """
    ctrl = ctrl or DEFAULT_CONTROL
    ns, ms, lis, ljs, rhos = np.broadcast_arrays(
        np.asarray(ns, dtype=np.int64),
        np.asarray(ms, dtype=np.int64),
        np.asarray(lambda_i, dtype=float),
        np.asarray(lambda_j, dtype=float),
        np.asarray(rho, dtype=float),
    )
    if np.any(np.abs(rhos) > RHO_MAX):
        raise NumericalError(f"joint pmf evaluation refused for |rho| > {RHO_MAX}")
    shape = ns.shape
    vals, status = _joint_pmf_batch(
        ns.ravel(),
        ms.ravel(),
        lis.ravel().astype(float),
        ljs.ravel().astype(float),
        rhos.ravel().astype(float),
        ctrl.rel_tol,
        ctrl.abs_tol,
        ctrl.max_terms,
    )
    return vals.reshape(shape), status.reshape(shape)


def table_count_cap(lam, eps=1e-9, margin=10):
    """Count cap K such that Pr(N > K) is negligible at level ``eps``."""
    return int(poisson_quantile(1.0 - eps, lam)) + margin


def pmf_table(lambda_i, lambda_j, rho, ctrl=None, eps=1e-9, margin=10):
    """Dense joint pmf table over (n, m) up to the negligible-mass cap.

    Returns ``(table, K_i, K_j)`` where ``table[n, m]`` is the joint pmf.
    """
    ki = table_count_cap(lambda_i, eps, margin)
    kj = table_count_cap(lambda_j, eps, margin)
    ns, ms = np.meshgrid(np.arange(ki + 1), np.arange(kj + 1), indexing="ij")
    vals, status = joint_pmf_batch(ns, ms, lambda_i, lambda_j, rho, ctrl)
    if np.any(status == STATUS_TRUNCATED):
        raise SeriesTruncationError("joint pmf table had non-converged cells")
    if np.any(status == STATUS_INCONSISTENT):
        raise NumericalError("joint pmf table had cells outside [0, 1]")
    return vals, ki, kj


# ---------------------------------------------------------------------------
# zero-inflated variants
# ---------------------------------------------------------------------------

def zip_marginal_pmf(y, lam, theta):
    """Marginal pmf of the zero-inflated count Y = B * N.

    ``B`` is the indicator of a latent Gaussian (mean ``theta``, unit
    variance) being negative, so ``p = Pr(B = 0) = Phi(theta)``;
    Pr(Y=0) = p + (1-p) e^{-lam} and Pr(Y=y) = (1-p) Poi(y; lam) otherwise.
    """
    if y < 0 or int(y) != y:
        raise ValueError("count must be a nonnegative integer")
    lam = float(lam)
    if not lam > 0.0:
        raise ValueError("rate must be positive")
    p = normal_cdf(theta)
    if y == 0:
        return p + (1.0 - p) * math.exp(-lam)
    return (1.0 - p) * poisson_marginal_pmf(y, lam)


def zip_bernoulli_joint(theta, rho1):
    """Joint probabilities of the masking pair (B_i, B_j).

    Returns ``(p11, p10, p01, p00)`` where the first index is site i and
    ``B = 1`` means the count passes through.  ``B = 1`` iff the latent
    Gaussian (mean theta) is negative, so p11 is the lower orthant
    probability at (-theta, -theta).
    """
    p1 = normal_cdf(-theta)  # Pr(B = 1)
    p11 = bivariate_normal_cdf(-theta, -theta, rho1) if abs(rho1) > 0 else p1 * p1
    p10 = p1 - p11
    p01 = p1 - p11
    p00 = 1.0 - p11 - p10 - p01
    return p11, max(p10, 0.0), max(p01, 0.0), max(p00, 0.0)


def zip_bivariate_pmf(y_i, y_j, theta, rho1, rho2, lambda_i, lambda_j, ctrl=None):
    """Joint pmf of the zero-inflated pair, by total probability over the
    four masking outcomes (zero observations aggregate every consistent
    combination of mask and count)."""
    if y_i < 0 or y_j < 0:
        raise ValueError("counts must be nonnegative integers")
    if not abs(rho1) < 1.0:
        raise ValueError("mask-layer correlation must satisfy |rho1| < 1")
    p11, p10, p01, p00 = zip_bernoulli_joint(theta, rho1)
    pn = bivariate_pmf(
        BivariatePoissonQuery(y_i, y_j, lambda_i, lambda_j, rho2), ctrl
    )
    out = p11 * pn
    if y_i == 0 and y_j == 0:
        out += (
            p10 * poisson_marginal_pmf(0, lambda_i)
            + p01 * poisson_marginal_pmf(0, lambda_j)
            + p00
        )
    elif y_j == 0:
        out += p10 * poisson_marginal_pmf(y_i, lambda_i)
    elif y_i == 0:
        out += p01 * poisson_marginal_pmf(y_j, lambda_j)
    return out


# ---------------------------------------------------------------------------
# exponential inter-arrival densities
# ---------------------------------------------------------------------------

def exp_bivariate_pdf(w_i, w_j, lambda_i, lambda_j, rho):
    """Kibble bivariate exponential density of an inter-arrival pair.

    f(w_i, w_j) = (li lj / (1-rho^2)) exp(-(li w_i + lj w_j)/(1-rho^2))
                  * I_0( 2 sqrt(rho^2 li lj w_i w_j) / (1-rho^2) ),

    which factorizes into the product of Exp(li) and Exp(lj) densities at
    rho = 0 and integrates to one.  Accepts arrays.
    """
    wi = np.asarray(w_i, dtype=float)
    wj = np.asarray(w_j, dtype=float)
    if np.any(wi <= 0.0) or np.any(wj <= 0.0):
        raise ValueError("inter-arrival times must be positive")
    if not (lambda_i > 0.0 and lambda_j > 0.0):
        raise ValueError("rates must be positive")
    if not abs(rho) < 1.0:
        raise ValueError("underlying correlation must satisfy |rho| < 1")
    q = rho * rho
    one = 1.0 - q
    z = 2.0 * np.sqrt(q * lambda_i * lambda_j * wi * wj) / one
    log_f = (
        math.log(lambda_i * lambda_j / one)
        - (lambda_i * wi + lambda_j * wj) / one
        + z
        + np.log(sp_special.ive(0, z))
    )
    out = np.exp(log_f)
    if np.ndim(w_i) == 0 and np.ndim(w_j) == 0:
        return float(out)
    return out


def exp_multivariate_pdf_1d(w, coords, lam, phi):
    """Joint density of the exponential field on ordered 1-D sites with
    exponential underlying correlation rho_{i,i+1} = exp(-|s_i - s_{i+1}|/phi).

    The underlying correlation's Markov property on a line makes the joint
    density a chain of Bessel-coupled factors; for a single site this is the
    Exp(lam) density and for two sites it collapses to the Kibble form.
    """
    w = np.asarray(w, dtype=float)
    coords = np.asarray(coords, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), w.shape).astype(float)
    n = w.shape[0]
    if coords.shape[0] != n:
        raise ValueError("coordinates and values must have the same length")
    if np.any(w <= 0.0):
        raise ValueError("inter-arrival times must be positive")
    if np.any(lam <= 0.0):
        raise ValueError("rates must be positive")
    if not phi > 0.0:
        raise ValueError("range parameter must be positive")
    if n > 1 and np.any(np.diff(coords) <= 0.0):
        raise ValueError("coordinates must be strictly increasing")
    if n == 1:
        return float(lam[0] * math.exp(-lam[0] * w[0]))
    r2 = np.exp(-2.0 * np.abs(np.diff(coords)) / phi)  # rho_{i,i+1}^2
    one = 1.0 - r2
    log_f = math.log(lam[0]) + np.sum(np.log(lam[1:]))
    log_f -= w[0] * lam[0] / one[0] + w[-1] * lam[-1] / one[-1]
    if n > 2:
        mid = (1.0 - r2[:-1] * r2[1:]) * lam[1:-1] * w[1:-1] / (one[:-1] * one[1:])
        log_f -= np.sum(mid)
    z = 2.0 * np.sqrt(r2 * w[:-1] * lam[:-1] * w[1:] * lam[1:]) / one
    log_f += np.sum(z + np.log(sp_special.ive(0, z)))
    log_f -= np.sum(np.log(one))
    return float(np.exp(log_f))
