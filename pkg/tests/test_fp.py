import math

import numpy as np
import pytest

from eqanis.fokker_planck import (
    FPSolverError,
    NeelOperator,
    easy_axis_frame,
    evolve,
    fp_solve,
    neel_coefficients,
)
from eqanis.oracle import sphere_density
from eqanis.physics import KB, MU0, FieldSequence, ParticleParams, tesla_to_field
from eqanis.series import mean_moment
from eqanis.sphharm import degrees, galerkin_matrices, project
from eqanis.trace import MomentTrace

P = ParticleParams(20e-9)
N_Z = np.array([0.0, 0.0, 1.0])


def boltzmann_coeffs(L, h, alpha_k):
    return project(L, lambda m: sphere_density(h, N_Z, alpha_k, m), n_theta=2 * L + 40)


def test_neel_coefficients_detailed_balance():
    ak = 3.0
    c = neel_coefficients(P, ak)
    # alignment drift over diffusion equals the Boltzmann exponent gradients
    assert c.a2 / c.diffusion == pytest.approx(P.beta, rel=1e-13)
    assert c.a4 / c.diffusion == pytest.approx(2 * ak, rel=1e-13)
    assert c.a1 / c.a2 == pytest.approx(1 / 0.1, rel=1e-13)
    g = 1.75e11 / (1 + 0.01)
    assert c.tau == pytest.approx(P.m0 / (2 * g * 0.1 * KB * P.temperature), rel=1e-13)
    assert 0 < c.tau < 1e-6


def test_neel_coefficients_zero_damping_and_validation():
    c = neel_coefficients(P, 2.0, damping=0.0)
    assert c.a2 == 0 and c.a4 == 0 and c.diffusion == 0 and math.isinf(c.tau)
    assert c.a1 == pytest.approx(MU0 * 1.75e11)
    for kw in [{"gamma": 0}, {"damping": -0.1}]:
        with pytest.raises(ValueError):
            neel_coefficients(P, 1.0, **kw)
    with pytest.raises(ValueError):
        neel_coefficients(P, -1.0)


def test_easy_axis_frame_is_rotation():
    for n in [N_Z, -N_Z, np.array([1.0, 2.0, -0.5])]:
        R = easy_axis_frame(n)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-14)
        np.testing.assert_allclose(R[:, 2], n / np.linalg.norm(n), atol=1e-14)
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_galerkin_matrices_identities():
    L = 12
    g = galerkin_matrices(L)
    keep = degrees(L) <= L - 1
    M = [Mk.toarray() for Mk in g["M"]]
    for Mk in M:
        np.testing.assert_allclose(Mk, Mk.T, atol=1e-14)
    # m_x^2 + m_y^2 + m_z^2 = 1, exact below the top degree
    S = sum(Mk @ Mk for Mk in M)
    np.testing.assert_allclose(S[np.ix_(keep, keep)], np.eye(keep.sum()), atol=1e-13)
    np.testing.assert_allclose(g["lap"].diagonal(), -degrees(L) * (degrees(L) + 1.0))
    # every operator conserves probability: the l = 0 row vanishes
    for A in [g["lap"], g["aniso_prec"], g["aniso_align"], *g["Gt"], *g["Jt"]]:
        assert np.max(np.abs(A.toarray()[0])) < 1e-13


def test_zero_field_equilibria_are_stationary():
    op = NeelOperator(neel_coefficients(P, 0.0), L=16)
    assert np.max(np.abs(op.matrix(np.zeros(3)) @ op.uniform())) < 1e-12 * op.coeffs.diffusion
    # with anisotropy the zero-field state is exp(alpha_k m_z^2) / Z, not uniform
    op = NeelOperator(neel_coefficients(P, 4.0), L=30)
    cb = boltzmann_coeffs(30, np.zeros(3), 4.0)
    assert np.linalg.norm(op.matrix(np.zeros(3)) @ cb) < 1e-10 * op.coeffs.diffusion * 900 * np.linalg.norm(cb)
    assert np.linalg.norm(op.matrix(np.zeros(3)) @ op.uniform()) > 1e-3 * op.coeffs.diffusion


@pytest.mark.parametrize("ak", [0.0, 4.0])
def test_boltzmann_density_is_stationary(ak):
    L = 30
    h = np.array([0.8, -0.4, 1.5])
    op = NeelOperator(neel_coefficients(P, ak), L=L)
    cb = boltzmann_coeffs(L, h, ak)
    r = op.matrix(h / P.beta) @ cb
    scale = op.coeffs.diffusion * np.linalg.norm(cb) * L * L
    assert np.linalg.norm(r) < 1e-10 * scale


def test_precession_is_neutral_on_equilibrium():
    # with zero damping only precession remains; it leaves the Boltzmann density unchanged
    L = 30
    h = np.array([1.2, 0.3, -0.7])
    ak = 2.5
    op = NeelOperator(neel_coefficients(P, ak, damping=0.0), L=L)
    cb = boltzmann_coeffs(L, h, ak)
    r = op.matrix(h / P.beta) @ cb
    assert np.linalg.norm(r) < 1e-10 * op.coeffs.a1 * np.linalg.norm(h / P.beta) * np.linalg.norm(cb)
    # and the uniform state drifts under precession alone only through the anisotropy-free part: none
    assert np.max(np.abs(op.matrix(np.zeros(3)) @ op.uniform())) < 1e-6


def test_relaxation_reaches_boltzmann():
    ak = 3.0
    n = np.array([0.0, 0.6, 0.8])
    H = np.array([1.5, -1.0, 0.5]) / P.beta
    coeffs = neel_coefficients(P, ak)
    op = NeelOperator(coeffs, L=24)
    R = easy_axis_frame(n)
    T = 20 * coeffs.tau
    C = evolve(op, lambda t: R.T @ H, (0.0, T), [T], rel_tol=1e-8, abs_tol=1e-10)
    m = R @ op.moments(C)[0] * P.m0
    np.testing.assert_allclose(m, mean_moment(H, n, ak, P), rtol=1e-5, atol=1e-7 * P.m0)
    assert C[0, 0] == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-10)


def small_seq():
    return FieldSequence.from_dividers(2.5e6, [102, 96], tesla_to_field([-1.0, -1.0, 2.0]),
                                       tesla_to_field([12e-3, 12e-3]))


def test_fp_solve_normalisation_and_L_convergence():
    seq = small_seq()
    times = seq.times()[::8]
    x = np.array([2e-3, -1e-3, 0.0])
    kw = dict(x=x, times=times, warmup=0.5)
    a = fp_solve(seq, np.array([1.0, 0, 0]), 2.0, P, L_sph=20, **kw)
    b = fp_solve(seq, np.array([1.0, 0, 0]), 2.0, P, L_sph=28, **kw)
    assert a.info["normalization_drift"] < 1e-12
    assert np.max(np.linalg.norm(a.moments, axis=1)) <= P.m0
    assert np.max(np.abs(a.moments - b.moments)) < 2e-3 * P.m0
    assert b.info["tail_energy"] < a.info["tail_energy"]


def test_fp_axisymmetric_reduction_matches_full():
    # field along the easy axis at all times: m = 0 modes decouple
    ak = 2.0
    n = np.array([1.0, 0.0, 0.0])
    T = 40e-6
    times = np.linspace(0, T, 33)[:-1]

    def H(t):
        return np.array([1.0, 0.0, 0.0]) * 3.0 / P.beta * np.sin(2 * np.pi * t / T)

    tr = fp_solve(H, n, ak, P, times=times, period=T, L_sph=16, warmup=0.5, rel_tol=1e-9, abs_tol=1e-11)
    assert tr.info["axisymmetric"]
    coeffs = neel_coefficients(P, ak)
    full = NeelOperator(coeffs, L=16)
    R = easy_axis_frame(n)
    C = evolve(full, lambda t: R.T @ H(t), (-0.5 * T, times[-1]), times, rel_tol=1e-9, abs_tol=1e-11)
    m = (full.moments(C) @ R.T) * P.m0
    np.testing.assert_allclose(tr.moments, m, atol=1e-7 * P.m0)


def test_fp_solve_validation():
    seq = small_seq()
    with pytest.raises(ValueError):
        fp_solve(seq, N_Z, 1.0, P, L_sph=5)
    with pytest.raises(ValueError):
        fp_solve(seq, N_Z, 1.0, P, rel_tol=0)
    with pytest.raises(ValueError):
        fp_solve(seq, N_Z, 1.0, P, warmup=-1)
    with pytest.raises(ValueError):
        fp_solve(lambda t: np.zeros(3), N_Z, 1.0, P)
    assert issubclass(FPSolverError, RuntimeError)


def test_trace_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tr = MomentTrace(np.linspace(0, 1e-3, 17), rng.normal(size=(17, 3)) * 1e-18)
    p = tmp_path / "trace.csv"
    tr.to_csv(p)
    back = MomentTrace.from_csv(p)
    np.testing.assert_array_equal(back.times, tr.times)
    np.testing.assert_array_equal(back.moments, tr.moments)
    with pytest.raises(ValueError):
        MomentTrace(np.zeros(3), np.zeros((2, 3)))
