"""Equilibrium magnetization with uniaxial anisotropy as a truncated Bessel/Laguerre series.

With ``a = beta |H_perp|``, ``b = beta H_par`` and ``c = alpha_K`` the partition
function and the first moments are (up to the common factor ``(2 pi)^{3/2}``)

    Z   = sum_l (2c)^l L_l^{(-1/2)}(-b^2/4c) I_{l+1/2}(a) / a^{l+1/2}
    z_3 = b sum_l (2c)^l L_l^{(+1/2)}(-b^2/4c) I_{l+3/2}(a) / a^{l+3/2}
    z_p =   sum_l (2c)^l L_l^{(-1/2)}(-b^2/4c) I_{l+3/2}(a) / a^{l+3/2}

where ``z_p`` is the orthogonal moment divided by ``beta H_perp``. Every term is
positive, so all sums are carried in the log domain; the Bessel part is
scaled by ``exp(-a)``, which cancels in the moment ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .physics import ParticleParams

L_CAP = 256
SMALL_C = 1e-8
_LOG_SQRT_2_OVER_PI = 0.5 * math.log(2.0 / math.pi)
_LOG_2PI_32 = 1.5 * math.log(2.0 * math.pi)


class SeriesConvergenceError(ArithmeticError):
    def __init__(self, message, last_term=None):
        super().__init__(message)
        self.last_term = last_term


# coth(x) - 1/x = sum_n 2^{2n} B_{2n} x^{2n-1} / (2n)!
_LANGEVIN_SERIES = (1 / 3, -1 / 45, 2 / 945, -1 / 4725, 2 / 93555, -1382 / 638512875, 4 / 18243225)


def langevin(x):
    """Langevin function ``coth(x) - 1/x``.

    Three Taylor terms below ``|x| = 1e-3``; up to ``|x| = 0.1`` a
    seven-term series avoids the cancellation of the direct form.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    small = ax < 1e-3
    mid = (ax >= 1e-3) & (ax < 0.1)
    xs = np.where(small | mid, 1.0, x)
    direct = 1.0 / np.tanh(xs) - 1.0 / xs
    taylor = x / 3.0 - x**3 / 45.0 + 2.0 * x**5 / 945.0
    x2 = x * x
    series = np.zeros_like(x)
    for coef in reversed(_LANGEVIN_SERIES):
        series = series * x2 + coef
    out = np.where(small, taylor, np.where(mid, series * x, direct))
    return out if out.ndim else float(out)


def _log_bessel_half(a):
    # log(I_{1/2}(a) a^{-1/2} e^{-a}) = log(sqrt(2/pi) (1 - e^{-2a}) / (2a))
    a = np.asarray(a, dtype=float)
    big = a > 1e-6
    safe = np.where(big, a, 1.0)
    val = np.log(-np.expm1(-2.0 * safe) / (2.0 * safe))
    return _LOG_SQRT_2_OVER_PI + np.where(big, val, -a + a * a / 6.0)


def log_scaled_bessel_ratios(a, n_orders):
    """``log(I_nu(a) / a^nu * exp(-a))`` for ``nu = 1/2, 3/2, ...`` (``n_orders`` values).

    The ratios ``rho_nu = R_nu / R_{nu-1}`` with ``R_nu = I_nu(a)/a^nu`` obey
    ``rho_nu = 1 / (2 nu + a^2 rho_{nu+1})``, a continued fraction evaluated
    downward from a high starting order; it only adds positive numbers, so it
    is stable at any ``a >= 0`` including ``a = 0``. The chain is anchored at
    the closed form for ``nu = 1/2``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(a < 0):
        raise ValueError("a must be >= 0")
    a2 = a * a
    top = int(n_orders + 32 + math.ceil(float(a.max(initial=0.0))))
    rho = np.zeros_like(a)
    logs = np.empty(a.shape + (n_orders,))
    log_rho = np.empty(a.shape + (n_orders,))
    for j in range(top, 0, -1):  # nu = j + 1/2
        rho = 1.0 / (2.0 * (j + 0.5) + a2 * rho)
        if j < n_orders:
            log_rho[..., j] = np.log(rho)
    logs[..., 0] = _log_bessel_half(a)
    if n_orders > 1:
        logs[..., 1:] = logs[..., :1] + np.cumsum(log_rho[..., 1:], axis=-1)
    return logs


def scaled_bessel_ratios(a, nu_max):
    """Exponentially scaled ratios ``I_nu(a)/a^nu * exp(-a)`` for ``nu = 1/2 .. nu_max``."""
    n = int(round(nu_max - 0.5)) + 1
    if abs((nu_max - 0.5) - (n - 1)) > 1e-12 or n < 1:
        raise ValueError("nu_max must be a half-integer >= 1/2")
    if n > L_CAP:
        raise ValueError(f"nu_max exceeds the internal cap of {L_CAP}")
    out = np.exp(log_scaled_bessel_ratios(a, n))
    return out[0] if np.ndim(a) == 0 else out


def laguerre_log_terms(alpha, t, n_terms):
    """``(log|L_l^{(alpha)}(t)|, sign)`` for ``l = 0 .. n_terms-1`` with ``t <= 0``.

    Uses the three-term recurrence on the ratios ``L_l / L_{l-1}``; for
    ``t <= 0`` and ``alpha > -1`` every value is positive.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t > 0):
        raise ValueError("laguerre_log_terms requires t <= 0")
    if alpha <= -1:
        raise ValueError("alpha must be > -1")
    logs = np.zeros(t.shape + (n_terms,))
    if n_terms > 1:
        r = 1.0 + alpha - t
        logs[..., 1] = np.log(r)
        for ell in range(1, n_terms - 1):
            r = ((2 * ell + 1 + alpha - t) - (ell + alpha) / r) / (ell + 1)
            logs[..., ell + 1] = logs[..., ell] + np.log(r)
    return logs, np.ones_like(logs)


def _coefficient_logs(b, c, n_terms):
    """Direct Cauchy-product coefficients for small ``c``.

    Returns ``log((2c)^l L_l^{(-1/2)}(-b^2/4c))`` and
    ``log(|b| (2c)^l L_l^{(1/2)}(-b^2/4c))`` computed as
    ``2^l Gamma(l+1/2)/sqrt(pi) d_l`` and ``2^{l+1} Gamma(l+3/2)/sqrt(pi) e_l``
    with ``d_l = sum_k b^{2k} c^{l-k} / ((2k)! (l-k)!)`` and the odd analogue
    ``e_l``; both are finite at ``c = 0``.
    """
    with np.errstate(divide="ignore"):
        lb = np.log(np.abs(b))[:, None]
        lc = np.log(c)[:, None]
    ell = np.arange(n_terms)
    ld = np.full((b.size, n_terms), -np.inf)
    le = np.full((b.size, n_terms), -np.inf)
    for k in range(n_terms):
        m = ell[k:] - k  # power of c
        with np.errstate(invalid="ignore"):
            cpow = np.where(m == 0, 0.0, m * lc)
        bpow = 0.0 if k == 0 else 2 * k * lb
        td = bpow + cpow - gammaln(2 * k + 1) - gammaln(m + 1)
        te = (2 * k + 1) * lb + cpow - gammaln(2 * k + 2) - gammaln(m + 1)
        ld[:, k:] = np.logaddexp(ld[:, k:], td)
        le[:, k:] = np.logaddexp(le[:, k:], te)
    pre = ell * math.log(2.0) + gammaln(ell + 0.5) - 0.5 * math.log(math.pi)
    pre3 = (ell + 1) * math.log(2.0) + gammaln(ell + 1.5) - 0.5 * math.log(math.pi)
    return pre + ld, pre3 + le


def _term_logs(a, b, c, n_terms):
    """Log of the three series terms, shape ``(npts, n_terms)`` each."""
    logB = log_scaled_bessel_ratios(a, n_terms + 1)
    small = c < SMALL_C
    lz0 = np.empty((a.size, n_terms))
    lz3 = np.empty((a.size, n_terms))
    if np.any(~small):
        g = ~small
        t = -(b[g] ** 2) / (4.0 * c[g])
        lm, _ = laguerre_log_terms(-0.5, t, n_terms)
        lp, _ = laguerre_log_terms(0.5, t, n_terms)
        lc = np.arange(n_terms) * np.log(2.0 * c[g])[:, None]
        lz0[g] = lc + lm
        with np.errstate(divide="ignore"):
            lz3[g] = lc + lp + np.log(np.abs(b[g]))[:, None]
    if np.any(small):
        lz0[small], lz3[small] = _coefficient_logs(b[small], c[small], n_terms)
    t0 = lz0 + logB[:, :n_terms]
    t3 = lz3 + logB[:, 1:]
    tp = lz0 + logB[:, 1:]
    return t0, t3, tp


@dataclass
class SeriesResult:
    """Partition function and moment ratios of one series evaluation.

    ``logZ`` is ``ln Z`` (full partition value, including ``(2 pi)^{3/2}``);
    ``moment_parallel`` is ``z_3/Z``; ``moment_perp_coeff`` is
    ``z_i / (beta H_i Z)``; ``terms_used`` is the truncation index ``L``.
    """

    logZ: float
    moment_parallel: float
    moment_perp_coeff: float
    terms_used: int


def series_sums(a, b, c, tol=1e-12, l_max=L_CAP, fixed_terms=None, raise_on_fail=True):
    """Vectorised series evaluation.

    Returns ``(logZ, par, perp, L)`` arrays: ``ln Z``, ``z_3/Z``,
    ``z_i/(beta H_i Z)`` and the number of terms used. With ``fixed_terms``
    the adaptive stop rule is bypassed and exactly that many terms are summed.
    """
    a, b, c = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)).ravel() for v in (a, b, c))
    )
    if np.any(a < 0) or np.any(c < 0):
        raise ValueError("series parameters need a >= 0 and c >= 0")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if l_max > L_CAP or (fixed_terms is not None and fixed_terms > L_CAP):
        raise ValueError(f"at most {L_CAP} terms are supported")
    npts = a.size
    logZ = np.empty(npts)
    par = np.empty(npts)
    perp = np.empty(npts)
    used = np.zeros(npts, dtype=int)
    todo = np.arange(npts)
    n_try = fixed_terms if fixed_terms is not None else min(48, l_max)
    while todo.size:
        failed = []
        for chunk in np.array_split(todo, max(1, todo.size // 8192)):
            t0, t3, tp = _term_logs(a[chunk], b[chunk], c[chunk], n_try)
            if fixed_terms is None:
                idx, ok = _stop_index(t0, t3, tp, tol)
                if n_try >= l_max and not np.all(ok):
                    if raise_on_fail:
                        j = np.flatnonzero(~ok)[0]
                        last = float(np.exp(t0[j, -1] - _logsum(t0[j : j + 1])[0]))
                        raise SeriesConvergenceError(
                            f"series did not converge within {l_max} terms "
                            f"(a={a[chunk[j]]:.4g}, b={b[chunk[j]]:.4g}, c={c[chunk[j]]:.4g})",
                            last_term=last,
                        )
                    ok[:] = True
            else:
                idx = np.full(chunk.size, n_try - 1)
                ok = np.ones(chunk.size, dtype=bool)
            keep = np.arange(n_try)[None, :] <= idx[:, None]
            s0 = _logsum(np.where(keep, t0, -np.inf))
            s3 = _logsum(np.where(keep, t3, -np.inf))
            sp = _logsum(np.where(keep, tp, -np.inf))
            done = chunk[ok]
            logZ[done] = (_LOG_2PI_32 + s0 + a[chunk])[ok]
            par[done] = (np.sign(b[chunk]) * np.exp(s3 - s0))[ok]
            perp[done] = np.exp(sp - s0)[ok]
            used[done] = idx[ok] + 1
            failed.append(chunk[~ok])
        todo = np.concatenate(failed)
        n_try = min(2 * n_try, l_max)
    return logZ, par, perp, used


def _stop_index(t0, t3, tp, tol):
    """First index where three consecutive terms of every series are below tol * partial sum."""
    cond = np.ones(t0.shape, dtype=bool)
    for t in (t0, t3, tp):
        m = np.max(t, axis=1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        w = np.exp(t - m)
        csum = np.cumsum(w, axis=1)
        cond &= (w < tol * csum) | (csum == 0)
    run = cond[:, 2:] & cond[:, 1:-1] & cond[:, :-2]
    has = run.any(axis=1)
    idx = np.where(has, np.argmax(run, axis=1) + 2, t0.shape[1] - 1)
    return idx, has


def _logsum(x):
    m = np.max(x, axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.sum(np.exp(x - m[:, None]), axis=1))


def eval_series(a, b, c, tol=1e-12, l_max=L_CAP) -> SeriesResult:
    """Evaluate the anisotropic partition function and moment ratios at one point."""
    if a < 0 or c < 0:
        raise ValueError("series parameters need a >= 0 and c >= 0")
    lz, par, perp, used = series_sums(a, b, c, tol=tol, l_max=l_max)
    return SeriesResult(float(lz[0]), float(par[0]), float(perp[0]), int(used[0]))


def reduced_moment(H, n, alpha_k, beta, tol=1e-12, l_max=L_CAP, fixed_terms=None, return_terms=False):
    """Normalised mean moment ``E(beta H)`` (values in the unit ball) for arrays of fields.

    ``H`` (...,3) in A/m, ``n`` (...,3) unit easy axes, ``alpha_k`` (...).
    Points with ``alpha_k < 1e-8`` use the Langevin form exactly.
    """
    H = np.asarray(H, dtype=float)
    shape = H.shape[:-1]
    H = H.reshape(-1, 3)
    n = np.broadcast_to(np.asarray(n, dtype=float), shape + (3,)).reshape(-1, 3)
    ak = np.broadcast_to(np.asarray(alpha_k, dtype=float), shape).ravel()
    out = np.zeros_like(H)
    used = np.zeros(H.shape[0], dtype=int)
    iso = ak < SMALL_C
    if np.any(iso):
        h = H[iso]
        norm = np.linalg.norm(h, axis=1)
        nz = norm > 0
        coef = np.zeros_like(norm)
        coef[nz] = langevin(beta * norm[nz]) / norm[nz]
        out[iso] = coef[:, None] * h
    an = ~iso
    if np.any(an):
        h = H[an]
        nn = n[an]
        hpar = np.einsum("ij,ij->i", h, nn)
        hperp = h - hpar[:, None] * nn
        a = beta * np.linalg.norm(hperp, axis=1)
        b = beta * hpar
        _, par, perp, u = series_sums(a, b, ak[an], tol=tol, l_max=l_max, fixed_terms=fixed_terms)
        out[an] = par[:, None] * nn + (beta * perp)[:, None] * hperp
        used[an] = u
    out = out.reshape(shape + (3,))
    if return_terms:
        return out, used.reshape(shape)
    return out


def mean_moment(H, n, alpha_k, params: ParticleParams, tol=1e-12):
    """Mean magnetic moment in A m^2 of the anisotropic equilibrium model.

    The result is assembled as a combination of ``n`` and the orthogonal
    field part only, so no rotation matrix is formed. For ``alpha_k < 1e-8``
    it is exactly ``m0 L(beta |H|) H/|H|``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    n = np.asarray(n, dtype=float)
    if np.any(np.abs(np.linalg.norm(n, axis=-1) - 1.0) > 1e-10):
        raise ValueError("easy axis must be a unit vector")
    return params.m0 * reduced_moment(H, n, alpha_k, params.beta, tol=tol)


def log_partition(H, n, alpha_k, beta, tol=1e-14):
    """``ln Z(beta H)`` for arrays of fields (used for the gradient identity)."""
    H = np.asarray(H, dtype=float).reshape(-1, 3)
    n = np.broadcast_to(np.asarray(n, dtype=float), H.shape)
    hpar = np.einsum("ij,ij->i", H, n)
    hperp = H - hpar[:, None] * n
    a = beta * np.linalg.norm(hperp, axis=1)
    lz, _, _, _ = series_sums(a, beta * hpar, np.broadcast_to(alpha_k, a.shape), tol=tol)
    return lz
