"""Brute-force reference values for the anisotropic equilibrium model.

Two independent routes: adaptive Gauss-Kronrod quadrature of the 1D integral
representations over ``x = cos(theta) in [0, 1]``, and a direct product
quadrature of the moment integral over the sphere. Nothing here is used by
the production series code.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, i1e

from .physics import ParticleParams

# Kronrod 15-point nodes (non-negative half) and weights, Gauss 7-point weights
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_WK_FULL = np.concatenate([_WK[:-1], _WK[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[1:7:2] = _WG[:3]
_WG_FULL[7] = _WG[3]
_WG_FULL[9:14:2] = _WG[2::-1]


class QuadratureError(ArithmeticError):
    pass


def _gk15(f, lo, hi):
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    vals = np.atleast_2d(f(mid + half * _NODES))  # (ncomp, 15)
    k = half * vals @ _WK_FULL
    g = half * vals @ _WG_FULL
    return k, np.abs(k - g)


def gk15_integrate(f, lo, hi, abs_tol=1e-14, rel_tol=1e-13, budget=10_000):
    """Globally adaptive GK15 quadrature of a (possibly vector-valued) integrand.

    ``f`` maps an array of nodes to an array ``(ncomp, nodes)`` or ``(nodes,)``.
    Bisects the interval with the largest error until every component meets
    ``max(abs_tol, rel_tol*|I|)``. Returns ``(integral, error_estimate)``.
    """
    if not abs_tol > 0:
        raise ValueError("abs_tol must be > 0")
    k, e = _gk15(f, lo, hi)
    heap = [(-float(e.max()), lo, hi, k, e)]
    total, err = k.copy(), e.copy()
    n_int = 1
    while True:
        if np.all(err <= np.maximum(abs_tol, rel_tol * np.abs(total))):
            return total, err
        if n_int >= budget:
            raise QuadratureError(f"tolerance not reached within {budget} subintervals (error {err.max():.3g})")
        _, a, b, k0, e0 = heapq.heappop(heap)
        m = 0.5 * (a + b)
        k1, e1 = _gk15(f, a, m)
        k2, e2 = _gk15(f, m, b)
        total += k1 + k2 - k0
        err += e1 + e2 - e0
        heapq.heappush(heap, (-float(e1.max()), a, m, k1, e1))
        heapq.heappush(heap, (-float(e2.max()), m, b, k2, e2))
        n_int += 1


@dataclass
class OracleValues:
    """``Z``, ``z_3`` and the orthogonal coefficient ``z_perp``, all divided by ``exp(log_scale)``."""

    Z: float
    z3: float
    z_perp: float
    log_scale: float

    @property
    def logZ(self):
        return math.log(self.Z) + self.log_scale

    @property
    def moment_parallel(self):
        return self.z3 / self.Z

    @property
    def moment_perp_coeff(self):
        return self.z_perp / self.Z


def oracle_Zz(a, b, c, abs_tol=1e-13, rel_tol=1e-12) -> OracleValues:
    """Integral-representation values of ``Z``, ``z_3`` and ``z_perp`` for ``(a, b, c)``.

    Z      = 4 pi int_0^1 I0(a s) cosh(b x) e^{c x^2} dx
    z_3    = 4 pi int_0^1 x I0(a s) sinh(b x) e^{c x^2} dx
    z_perp = 4 pi int_0^1 s I1(a s)/a cosh(b x) e^{c x^2} dx,   s = sqrt(1 - x^2)

    The integrands are scaled by ``exp(-S)`` with ``S`` the largest sampled
    exponent, so ``abs_tol`` applies to the scaled integrals.
    """
    if a < 0 or c < 0:
        raise ValueError("need a >= 0 and c >= 0")
    bb = abs(b)
    xs = np.linspace(0.0, 1.0, 2001)
    scale = float(np.max(a * np.sqrt(1 - xs**2) + bb * xs + c * xs**2))

    def f(x):
        s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
        y = a * s
        w = np.exp(y + bb * x + c * x * x - scale)
        ch = 0.5 * (1.0 + np.exp(-2.0 * bb * x))
        sh = 0.5 * (-np.expm1(-2.0 * bb * x))
        if a > 0:
            i1a = i1e(y) / a
        else:
            i1a = 0.5 * s
        return np.stack([i0e(y) * ch * w, x * i0e(y) * sh * w, s * i1a * ch * w])

    vals, _ = gk15_integrate(f, 0.0, 1.0, abs_tol=abs_tol, rel_tol=rel_tol)
    vals = 4.0 * math.pi * vals
    return OracleValues(float(vals[0]), math.copysign(float(vals[1]), b) if b else 0.0, float(vals[2]), scale)


def _sphere_mean(h, n, alpha_k, n_theta):
    # polar axis along n; Gauss-Legendre in cos(theta), trapezoid in phi
    u = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = u - (u @ n) * n
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    n_phi = 2 * n_theta
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    s = np.sqrt(1 - x**2)
    m = (s[:, None, None] * (np.cos(phi)[None, :, None] * u + np.sin(phi)[None, :, None] * v)
         + x[:, None, None] * n)
    expo = m @ h + alpha_k * x[:, None] ** 2
    w = wx[:, None] * np.exp(expo - expo.max())
    return np.einsum("ij,ijk->k", w, m) / w.sum()


def oracle_sphere_moment(H, n, alpha_k, params: ParticleParams, tol=1e-9, max_theta=4096):
    """Mean moment in A m^2 by direct quadrature of ``m p(m)`` over the unit sphere.

    The resolution doubles from 32 polar nodes until the normalised result
    changes by less than ``tol``.
    """
    h = params.beta * np.asarray(H, dtype=float)
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    nt = 32
    prev = _sphere_mean(h, n, alpha_k, nt)
    while nt < max_theta:
        nt *= 2
        cur = _sphere_mean(h, n, alpha_k, nt)
        if np.max(np.abs(cur - prev)) < tol:
            return params.m0 * cur
        prev = cur
    raise QuadratureError("sphere quadrature did not settle within the resolution cap")


def sphere_density(h, n, alpha_k, m):
    """Normalised Boltzmann density ``exp(h.m + alpha_k (n.m)^2) / Z`` at unit vectors ``m``.

    ``h`` is the dimensionless field ``beta H``. ``Z`` comes from the 1D
    integral representation.
    """
    h = np.asarray(h, dtype=float)
    n = np.asarray(n, dtype=float)
    hpar = float(h @ n)
    a = float(np.linalg.norm(h - hpar * n))
    ov = oracle_Zz(a, hpar, alpha_k)
    expo = np.asarray(m) @ h + alpha_k * (np.asarray(m) @ n) ** 2
    return np.exp(expo - ov.logZ)
