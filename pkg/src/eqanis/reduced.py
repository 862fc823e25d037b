"""Reduced equilibrium model: single-summand Chebyshev representation for 2D Lissajous excitation.

For a position ``x`` the periodic moment is ``F(theta_1, theta_2) =
E(beta G (x + (a_1 sin theta_1, a_2 sin theta_2)))`` with ``a = A/G``, sampled
along the Lissajous line ``theta_1 = N_B w t + phi_x``, ``theta_2 = (N_B+1) w t + phi_y``.
Frequency ``k`` collects the torus Fourier coefficients ``F_{n,m}`` with
``n N_B + m (N_B+1) = k``, i.e. ``n = -k + lam (N_B+1)``, ``m = k - lam N_B``.
The reduced model keeps only ``lam = lam*_k``.

Convolving the mixed second derivative of ``E`` with the kernel
``V_n(y_1/a_1) V_m(y_2/a_2)`` gives ``pi^2 i^lam F_{n,m}``. Here the
coefficient is taken directly from a 2D FFT over the drive phases, with the
anisotropy parameters held at the output position.
"""
from __future__ import annotations

import numpy as np

from .physics import MU0, FieldSequence, ParticleParams, ScanGrid, anisotropy_at
from .series import reduced_moment
from .system import SystemMatrix, TransferFunction, default_channels, describe


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(int)


LAMBDA_RULES = ("ratio", "nearest")


def lambda_star(k, divider, rule="ratio"):
    """Selected summand index for frequency ``k``; halves are rounded away from zero.

    ``rule="ratio"``: ``round(2 N_B k / (2 N_B^2 + 2 N_B + 1))``.
    ``rule="nearest"``: ``round((2 N_B + 1) k / (2 N_B^2 + 2 N_B + 1))``, the
    summand minimising ``n^2 + m^2``. For the mixing order ``(kx, ky)`` it
    returns ``kx + ky`` whenever that pair is the smallest solution. The
    first rule agrees with it except at high ``x`` orders: it picks
    ``kx + ky - 1`` once ``(2 N_B + 1) kx + ky`` exceeds half the denominator.
    """
    if divider < 1:
        raise ValueError("divider must be >= 1")
    if rule not in LAMBDA_RULES:
        raise ValueError(f"rule must be one of {LAMBDA_RULES}")
    k = np.asarray(k)
    num = 2 * divider if rule == "ratio" else 2 * divider + 1
    out = round_half_away(num * k / (2 * divider**2 + 2 * divider + 1))
    return int(out) if out.ndim == 0 else out


def cheb_orders(k, divider, phases=(0.0, 0.0), rule="ratio"):
    """``(lam*, n*, m*, theta*)`` for frequency index ``k``."""
    lam = lambda_star(k, divider, rule)
    n = -np.asarray(k) + lam * (divider + 1)
    m = np.asarray(k) - lam * divider
    theta = n * phases[0] + m * phases[1]
    return lam, n, m, theta


def chebyshev_u(n, x):
    """``U_n(x)`` by the forward recurrence; ``U_{-1} = 0``."""
    x = np.asarray(x, dtype=float)
    if n < 0:
        return np.zeros_like(x)
    u_prev, u = np.zeros_like(x), np.ones_like(x)
    for _ in range(n):
        u_prev, u = u, 2 * x * u - u_prev
    return u


def v_n(n, xi):
    """Weighted second-kind Chebyshev kernel ``V_n``."""
    xi = np.asarray(xi, dtype=float)
    inside = np.abs(xi) <= 1.0
    xc = np.clip(xi, -1.0, 1.0)
    if n == 0:
        # (pi/2) sgn(xi + 1) - arccos(xi) on [-1, 1] is arcsin(xi); outside it is +-pi/2
        out = np.where(inside, np.arcsin(xc), 0.5 * np.pi * np.sign(xi))
    else:
        na = abs(n)
        out = np.where(inside, -chebyshev_u(na - 1, xc) * np.sqrt(1.0 - xc * xc) / na, 0.0)
    return out if out.ndim else float(out)


def _torus_indices(n_torus):
    # sin(theta_j) repeats under theta -> pi - theta; evaluate only theta in [-pi/2, pi/2]
    j = np.arange(n_torus)
    q = n_torus // 4
    rep = np.where(j <= q, j, np.where(j >= 3 * q, j - n_torus, 2 * q - j))
    uniq = np.arange(-q, q + 1)
    return rep + q, np.sin(2 * np.pi * uniq / n_torus)


def torus_coefficients(x, seq: FieldSequence, alpha, n, params: ParticleParams, n_torus=128, tol=1e-12):
    """Normalised torus Fourier coefficients ``F_{n,m}`` (3, n_torus, n_torus) at one position."""
    if n_torus % 4:
        raise ValueError("n_torus must be a multiple of 4")
    idx, s = _torus_indices(n_torus)
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    G = np.asarray(seq.gradient)
    H = np.zeros(s1.shape + (3,))
    H[..., 0] = G[0] * x[0] + seq.amplitudes[0] * s1
    H[..., 1] = G[1] * x[1] + seq.amplitudes[1] * s2
    H[..., 2] = G[2] * x[2]
    E = reduced_moment(H, n, alpha, params.beta, tol=tol)
    F = E[idx][:, idx]  # (n_torus, n_torus, 3)
    return np.moveaxis(np.fft.fft2(F, axes=(0, 1)), -1, 0) / n_torus**2


def reduced_sm_rows(
    grid: ScanGrid,
    seq: FieldSequence,
    anis,
    params: ParticleParams,
    tf=None,
    channels=None,
    n_torus=128,
    isotropic=False,
    tol=1e-12,
    rule="nearest",
) -> SystemMatrix:
    """System matrix of the reduced (single-summand) equilibrium model.

    ``isotropic=True`` gives the reduced EQ model (Langevin moment). ``rule``
    selects the summand (see :func:`lambda_star`).
    """
    if seq.is_1d or seq.amplitudes[0] == 0:
        raise ValueError("the reduced model needs a 2D Lissajous sequence")
    channels = default_channels(seq) if channels is None else np.atleast_2d(channels)
    K = seq.n_samples // 2 + 1
    k = np.arange(K)
    lam, nk, mk, theta = cheb_orders(k, seq.divider, seq.phases, rule)
    if np.max(np.abs(nk)) >= n_torus // 2 or np.max(np.abs(mk)) >= n_torus // 2:
        raise ValueError("n_torus too small for the requested frequency range")
    positions = grid.positions()
    if isotropic:
        alpha = np.zeros(len(positions))
        axes = np.tile([0.0, 0.0, 1.0], (len(positions), 1))
    else:
        alpha, axes = anisotropy_at(anis, params, positions, seq=seq)
    rows = np.zeros((channels.shape[0], K, len(positions)), dtype=complex)
    phase = np.exp(1j * theta)
    omega = 2 * np.pi * k / seq.period
    for p, x in enumerate(positions):
        F = torus_coefficients(x, seq, alpha[p], axes[p], params, n_torus, tol)
        c = F[:, nk % n_torus, mk % n_torus] * phase  # (3, K)
        rows[:, :, p] = channels @ c
    rows *= (-MU0 * params.m0 * 1j * omega)[None, :, None]
    if tf is not None:
        gains = tf.gains if isinstance(tf, TransferFunction) else np.asarray(tf)
        rows *= gains[..., None]
    meta = describe(seq, params, anis, grid)
    meta.update(model="reduced-eq" if isotropic else "reduced-eqanis", tf_applied=tf is not None,
                channels=channels.tolist(), n_torus=n_torus, lambda_rule=rule)
    return SystemMatrix(rows, channels, seq.period, meta)
