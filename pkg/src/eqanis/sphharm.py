"""Real spherical harmonics and the Galerkin matrices of the Neel Fokker-Planck operator.

Basis index ``j = l^2 + l + m`` for ``|m| <= l <= L``. ``Y_lm = Pbar_l|m|(cos theta) Phi_m(phi)``
with ``Phi_0 = 1``, ``Phi_m = sqrt(2) cos(m phi)`` and ``Phi_-m = sqrt(2) sin(m phi)``;
no Condon-Shortley phase. The basis is orthonormal on the unit sphere.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp


def n_coeffs(L):
    return (L + 1) ** 2


def degrees(L):
    ell = np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1)
    return ell


def orders(L):
    return np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])


def legendre_normalized(L, x):
    """``Pbar_lm(x)`` for ``0 <= m <= l <= L``, shape ``(L+1, L+1, npts)`` indexed ``[l, m]``.

    Normalised so that ``int_{-1}^{1} Pbar_lm^2 dx = 1/(2 pi)``.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((L + 1, L + 1) + x.shape)
    P[0, 0] = 1.0 / np.sqrt(4 * np.pi)
    for m in range(1, L + 1):
        P[m, m] = np.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(L):
        P[m + 1, m] = np.sqrt(2 * m + 3.0) * x * P[m, m]
    for m in range(L + 1):
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


def real_sph_harm(L, x, phi):
    """Basis values at points ``(cos theta, phi)``; shape ``(npts, (L+1)^2)``."""
    x = np.asarray(x, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    P = legendre_normalized(L, x)
    out = np.empty((x.size, n_coeffs(L)))
    r2 = np.sqrt(2.0)
    for l in range(L + 1):
        base = l * l + l
        out[:, base] = P[l, 0]
        for m in range(1, l + 1):
            out[:, base + m] = r2 * P[l, m] * np.cos(m * phi)
            out[:, base - m] = r2 * P[l, m] * np.sin(m * phi)
    return out


def sphere_grid(n_theta, n_phi):
    """Gauss-Legendre in ``cos theta`` times uniform ``phi``; returns ``x, phi, weights`` flattened."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    X, PHI = np.meshgrid(x, phi, indexing="ij")
    W = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
    return X.ravel(), PHI.ravel(), W


def unit_vectors(x, phi):
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    return np.stack([s * np.cos(phi), s * np.sin(phi), x], axis=-1)


def project(L, f, n_theta=None):
    """Galerkin coefficients of a function ``f(m)`` of unit vectors ``m`` (npts, 3)."""
    n_theta = n_theta or 2 * L + 8
    x, phi, w = sphere_grid(n_theta, 2 * n_theta)
    Y = real_sph_harm(L, x, phi)
    return Y.T @ (w * f(unit_vectors(x, phi)))


def _sparse(A, rtol=1e-11):
    A = np.where(np.abs(A) > rtol * np.abs(A).max(), A, 0.0)
    return sp.csr_matrix(A)


@lru_cache(maxsize=8)
def galerkin_matrices(L):
    """Geometric operators of the Fokker-Planck Galerkin system at degree ``L``.

    Returns a dict of sparse ``(N, N)`` matrices with ``N = (L+1)^2``:
    ``lap`` (diagonal ``-l(l+1)``), ``M`` (multiplication by ``m_k``),
    ``Gt`` (transposed ``grad m_k . grad``), ``Jt`` (transposed rotation
    generators ``(e_k x m) . grad``), ``aniso_prec`` and ``aniso_align`` (the
    easy-axis terms for ``n = e_z``). Products are formed in the degree
    ``L+1`` space before truncation, so they are exact.
    """
    Le = L + 1
    N = n_coeffs(L)
    nt = Le + 2
    x, phi, w = sphere_grid(nt, 2 * nt + 2)
    Y = real_sph_harm(Le, x, phi)
    m = unit_vectors(x, phi)
    lam = -(degrees(Le) * (degrees(Le) + 1.0))
    M = [Y.T @ ((w * m[:, k])[:, None] * Y) for k in range(3)]
    fac = 0.5 * (lam[:, None] - lam[None, :] + 2.0)
    G = [Mk * fac for Mk in M]
    # J_k = M_i G_j - M_j G_i for (i, j, k) cyclic; inner index runs over degree L+1
    J = []
    for i, j in ((1, 2), (2, 0), (0, 1)):
        J.append(M[i][:N] @ G[j][:, :N] - M[j][:N] @ G[i][:, :N])
    out = {
        "L": L,
        "lap": sp.diags(lam[:N]).tocsr(),
        "M": [_sparse(Mk[:N, :N]) for Mk in M],
        "M0": [Mk[0, :N].copy() for Mk in M],
        "Gt": [_sparse(Gk[:N, :N].T) for Gk in G],
        "Jt": [_sparse(Jk.T) for Jk in J],
        "aniso_prec": _sparse((M[2][:N, :N] @ J[2]).T),
        "aniso_align": _sparse((M[2][:N] @ G[2][:, :N]).T),
    }
    return out


def axisymmetric_index(L):
    """Indices of the ``m = 0`` modes."""
    ell = np.arange(L + 1)
    return ell * ell + ell
