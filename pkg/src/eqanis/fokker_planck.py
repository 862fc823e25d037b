"""Neel-rotation Fokker-Planck model solved by a spherical-harmonic Galerkin method of lines.

The PDF ``p(m, t)`` obeys

    dp/dt = div(grad p)/(2 tau) - div(b p),
    b = a1 H x m + a2 (m x H) x m + a3 (n.m) n x m + a4 (n.m) (m x n) x m.

Coefficients are computed in a frame whose third axis is the easy axis, so
the anisotropy part is a fixed sparse matrix and the field enters linearly
through three constant matrices.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import BDF, solve_ivp
from scipy.sparse.linalg import splu

from .physics import KB, MU0, FieldSequence, ParticleParams, applied_field
from .sphharm import axisymmetric_index, degrees, galerkin_matrices, n_coeffs, real_sph_harm
from .trace import MomentTrace

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 1.75e11
DEFAULT_DAMPING = 0.1
DEFAULT_L_SPH = 40
TAIL_LIMIT = 1e-6


class FPSolverError(RuntimeError):
    def __init__(self, message, t_fail=None):
        super().__init__(message)
        self.t_fail = t_fail


@dataclass(frozen=True)
class NeelCoefficients:
    a1: float  # precession about H, per (A/m) s
    a2: float  # alignment with H
    a3: float  # precession about the anisotropy field
    a4: float  # alignment with the easy axis
    tau: float

    @property
    def diffusion(self):
        return 1.0 / (2.0 * self.tau)


def neel_coefficients(params: ParticleParams, alpha_k, gamma=DEFAULT_GAMMA, damping=DEFAULT_DAMPING):
    """Landau-Lifshitz-Gilbert rates; detailed balance with the Boltzmann density holds exactly.

    ``alpha_k`` is the dimensionless anisotropy strength ``V_c K / (k_B T)``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if damping < 0:
        raise ValueError("damping must be >= 0")
    if alpha_k < 0:
        raise ValueError("alpha_k must be >= 0")
    g = gamma / (1.0 + damping**2)
    k_anis = alpha_k * KB * params.temperature / params.volume
    ms = params.saturation_magnetization
    inv2tau = g * damping * KB * params.temperature / params.m0
    tau = 0.5 / inv2tau if inv2tau > 0 else math.inf
    return NeelCoefficients(MU0 * g, MU0 * g * damping, 2 * g * k_anis / ms, 2 * g * damping * k_anis / ms, tau)


def easy_axis_frame(n):
    """Rotation ``R = [u v n]`` (columns) taking frame coordinates to lab coordinates."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    if abs(n[2]) > 1 - 1e-15:
        return np.diag([1.0, np.sign(n[2]), np.sign(n[2])])
    u = np.cross([0.0, 0.0, 1.0], n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return np.column_stack([u, v, n])


class NeelOperator:
    """``dc/dt = (B0 + sum_k H_k(t) B_k) c`` for the coefficient vector ``c`` in the easy-axis frame."""

    def __init__(self, coeffs: NeelCoefficients, L=DEFAULT_L_SPH, axisymmetric=False):
        if L < 1:
            raise ValueError("L must be >= 1")
        g = galerkin_matrices(L)
        self.L = L
        self.coeffs = coeffs
        self.axisymmetric = axisymmetric
        idx = axisymmetric_index(L) if axisymmetric else np.arange(n_coeffs(L))
        self.index = idx

        def sub(A):
            return A[idx][:, idx].tocsr()

        c = coeffs
        self.B0 = sub(c.diffusion * g["lap"] + c.a3 * g["aniso_prec"] + c.a4 * g["aniso_align"])
        self.Bk = [sub(c.a1 * g["Jt"][k] + c.a2 * g["Gt"][k]) for k in range(3)]
        self.moment_rows = np.sqrt(4 * np.pi) * np.array([g["M0"][k][idx] for k in range(3)])
        self.deg = degrees(L)[idx]
        self.size = idx.size

    def matrix(self, h):
        return self.B0 + h[0] * self.Bk[0] + h[1] * self.Bk[1] + h[2] * self.Bk[2]

    def uniform(self):
        c = np.zeros(self.size)
        c[0] = 1.0 / np.sqrt(4 * np.pi)
        return c

    def moments(self, C):
        """Normalised mean moment (frame coordinates) for coefficient columns ``C``."""
        return (self.moment_rows @ C).T

    def tail_energy(self, C):
        top = self.deg >= self.L - 1
        C = np.atleast_2d(C.T).T
        return float(np.max(np.sum(C[top] ** 2, axis=0) / np.sum(C**2, axis=0)))


class SparseBDF(BDF):
    """BDF whose sparse LU uses a symmetric-pattern ordering.

    The Galerkin matrix has a structurally symmetric pattern; minimum-degree
    ordering on ``A + A^T`` with diagonal-preferring pivoting roughly halves the
    factorization cost against the default column ordering.
    """

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)

        def lu(A):
            self.nlu += 1
            return splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1, options=dict(SymmetricMode=True))

        self.lu = lu


_METHODS = {"BDF": SparseBDF}


def evolve(op: NeelOperator, field_frame, t_span, t_eval, c0=None, rel_tol=2e-4, abs_tol=1e-6, method="BDF"):
    """Integrate the Galerkin system; ``field_frame(t)`` returns the frame-coordinate field (3,).

    Returns the coefficient array ``(size, len(t_eval))``.
    """
    c0 = op.uniform() if c0 is None else np.asarray(c0, dtype=float)
    B0, (Bx, By, Bz) = op.B0, op.Bk

    def rhs(t, c):
        h = field_frame(t)
        return B0 @ c + h[0] * (Bx @ c) + h[1] * (By @ c) + h[2] * (Bz @ c)

    def jac(t, c):
        return op.matrix(field_frame(t)).tocsc()

    sol = solve_ivp(rhs, t_span, c0, method=_METHODS.get(method, method), t_eval=t_eval, jac=jac, rtol=rel_tol, atol=abs_tol)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else float(t_span[0])
        raise FPSolverError(f"integrator failed at t={t_fail:.6g} s: {sol.message}", t_fail)
    return sol.y


def density_on_grid(op: NeelOperator, c, x, phi):
    """Reconstruct the PDF at frame points ``(cos theta, phi)`` from coefficients ``c``."""
    Y = real_sph_harm(op.L, x, phi)[:, op.index]
    return Y @ c


def fp_solve(
    field,
    n,
    alpha_k,
    params: ParticleParams,
    x=None,
    times=None,
    rel_tol=2e-4,
    abs_tol=1e-6,
    L_sph=DEFAULT_L_SPH,
    warmup=1.0,
    gamma=DEFAULT_GAMMA,
    damping=DEFAULT_DAMPING,
    method="BDF",
    period=None,
) -> MomentTrace:
    """Mean moment trace from the Neel Fokker-Planck model.

    ``field`` is either a :class:`FieldSequence` (evaluated at position ``x``,
    sampled at the sequence times) or a callable ``H(t) -> (3,)`` in A/m, in
    which case ``times`` and ``period`` (the warm-up unit) are required.
    ``warmup`` periods are simulated from the uniform PDF and discarded.
    """
    if L_sph < 10:
        raise ValueError("L_sph must be >= 10")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ValueError("tolerances must be positive")
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    if isinstance(field, FieldSequence):
        xpos = np.zeros(3) if x is None else np.asarray(x, dtype=float)
        seq = field

        def H(t):
            return applied_field(seq, xpos, t)

        times = seq.times() if times is None else np.asarray(times, dtype=float)
        period = seq.period
    else:
        if times is None or period is None:
            raise ValueError("a field callable needs explicit times and period")
        H = field
        times = np.asarray(times, dtype=float)
        xpos = np.zeros(3) if x is None else np.asarray(x, dtype=float)

    R = easy_axis_frame(n)
    if alpha_k == 0:
        # easy axis is irrelevant; align the frame with the field if it keeps one direction
        probe = np.array([H(t) for t in np.linspace(0, period, 64, endpoint=False)])
        big = np.argmax(np.linalg.norm(probe, axis=1))
        if np.linalg.norm(probe[big]) > 0:
            R = easy_axis_frame(probe[big] / np.linalg.norm(probe[big]))
    probe = np.array([H(t) for t in np.linspace(0, period, 257)]) @ R
    scale = max(float(np.max(np.abs(probe))), 1e-300)
    axisym = bool(np.max(np.linalg.norm(probe[:, :2], axis=1)) <= 1e-12 * scale)

    coeffs = neel_coefficients(params, alpha_k, gamma, damping)
    op = NeelOperator(coeffs, L_sph, axisymmetric=axisym)

    def field_frame(t):
        return R.T @ H(t)

    t0 = float(times[0]) - warmup * period
    C = evolve(op, field_frame, (t0, float(times[-1])), times, rel_tol=rel_tol, abs_tol=abs_tol, method=method)
    drift = float(np.max(np.abs(C[0] - C[0, 0]))) if C.shape[1] else 0.0
    tail = op.tail_energy(C)
    if tail > TAIL_LIMIT:
        log.warning("spherical-harmonic tail energy %.3g exceeds %.0e; increase L_sph", tail, TAIL_LIMIT)
    m = op.moments(C) @ R.T * params.m0
    info = {
        "L_sph": L_sph,
        "axisymmetric": axisym,
        "tail_energy": tail,
        "tail_warning": tail > TAIL_LIMIT,
        "normalization_drift": drift,
        "tau": coeffs.tau,
    }
    return MomentTrace(times, m, xpos, "fp", info)
