import numpy as np
import pytest

from eqanis.fokker_planck import FPSolverError
from eqanis.physics import AlignedAnisotropy, FieldSequence, ParticleParams, ScanGrid, tesla_to_field
from eqanis.system import (
    SM_MAGIC,
    SystemMatrix,
    TransferFunction,
    assemble_system_matrix,
    fit_transfer_function,
    fp_moments,
    read_sm,
    simulate_trace,
    spectral_derivative,
    trace_rows,
    trace_to_rows,
    write_sm,
)

P = ParticleParams(20e-9)
ANIS = AlignedAnisotropy((1.0, 0.0, 0.0), 2000.0)
CH = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def seq2d():
    return FieldSequence.from_dividers(2.5e6, [102, 96], tesla_to_field([-1.0, -1.0, 2.0]),
                                       tesla_to_field([12e-3, 12e-3]))


def test_constant_trace_has_no_ac_rows():
    m = np.tile([1e-18, -2e-18, 3e-18], (64, 1))
    rows = trace_rows(m, 1e-3, CH)
    assert rows.shape == (2, 33)
    assert np.max(np.abs(rows)) == 0.0


def test_sinusoid_single_bin():
    T, n, k0 = 2e-3, 128, 5
    t = np.arange(n) * T / n
    m = np.zeros((n, 3))
    m[:, 0] = 1e-18 * np.sin(2 * np.pi * k0 * t / T)
    rows = trace_rows(m, T, CH)
    mag = np.abs(rows[0])
    assert np.argmax(mag) == k0
    omega = 2 * np.pi * k0 / T
    # -mu0 i omega * (1e-18 / 2i) = -mu0 omega 1e-18 / 2
    assert rows[0, k0] == pytest.approx(-4e-7 * np.pi * omega * 0.5e-18, rel=1e-12)
    mag[k0] = 0
    assert mag.max() < 1e-12 * abs(rows[0, k0])
    assert np.max(np.abs(rows[1])) == 0.0


def test_parseval_against_time_domain_derivative():
    rng = np.random.default_rng(1)
    T, n = 1e-3, 256
    t = np.arange(n) * T / n
    m = np.zeros((n, 3))
    for k in range(1, 40):
        m += np.outer(np.sin(2 * np.pi * k * t / T + rng.uniform(0, 6)), rng.normal(size=3)) / k
    rows = trace_rows(m, T, CH)
    v = -4e-7 * np.pi * spectral_derivative(m, T) @ CH.T  # (n, 2)
    w = np.full(rows.shape[1], 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    np.testing.assert_allclose(np.sum(w * np.abs(rows) ** 2, axis=1), np.mean(v**2, axis=0), rtol=1e-10)


def test_spectral_derivative_exact_on_trig_polynomial():
    T, n = 0.5, 64
    t = np.arange(n) * T / n
    f = np.cos(2 * np.pi * 3 * t / T)[:, None]
    np.testing.assert_allclose(spectral_derivative(f, T)[:, 0], -2 * np.pi * 3 / T * np.sin(2 * np.pi * 3 * t / T),
                               atol=1e-11)


def test_transfer_function_fits():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(2, 6, 9)) + 1j * rng.normal(size=(2, 6, 9))
    S = SystemMatrix(A, CH, 1.0)
    np.testing.assert_allclose(fit_transfer_function(S, S).gains, 1.0, rtol=1e-14)
    np.testing.assert_allclose(fit_transfer_function(S, SystemMatrix(2 * A, CH, 1.0)).gains, 2.0, rtol=1e-14)
    B = A + 0.3 * (rng.normal(size=A.shape) + 1j * rng.normal(size=A.shape))
    g = fit_transfer_function(A, B).gains
    for c in range(2):
        for k in range(6):
            ref = np.linalg.lstsq(A[c, k][:, None], B[c, k], rcond=None)[0][0]
            assert g[c, k] == pytest.approx(ref, rel=1e-12)
    A[0, 3] = 0
    assert fit_transfer_function(A, B).gains[0, 3] == 0
    with pytest.raises(ValueError):
        fit_transfer_function(A, B[:, :5])
    with pytest.raises(ValueError):
        TransferFunction(np.array([[np.nan]]))
    tf = TransferFunction(np.full((2, 6), 3.0))
    np.testing.assert_allclose(tf.apply(S).data, 3 * S.data)
    assert tf.apply(S).meta["tf_applied"]


def test_sm_file_round_trip_is_bitwise(tmp_path):
    seq = seq2d()
    S = assemble_system_matrix("eqanis", ScanGrid(3, 2, (6e-3, 4e-3)), seq, ANIS, P)
    p = tmp_path / "a.sm"
    write_sm(p, S)
    back = read_sm(p)
    assert back.data.tobytes() == S.data.tobytes()
    assert back.period == S.period and back.model == "eqanis"
    np.testing.assert_array_equal(back.channels, S.channels)
    assert back.meta["grid"] == S.meta["grid"]
    p2 = tmp_path / "b.sm"
    write_sm(p2, back)
    assert p.read_bytes() == p2.read_bytes()
    blob = p.read_bytes()
    nl = blob.find(b"\n")
    (tmp_path / "bad.sm").write_bytes(blob[: nl + 1] + b"XXXXXXXX" + blob[nl + 9 :])
    with pytest.raises(ValueError):
        read_sm(tmp_path / "bad.sm")
    assert blob[nl + 1 : nl + 9] == SM_MAGIC


def test_shape_invariants():
    seq = seq2d()
    S = assemble_system_matrix("eq", ScanGrid(2, 2, (4e-3, 4e-3)), seq, ANIS, P)
    assert S.n_freq == seq.n_samples // 2 + 1 == 817
    assert S.matrix().shape == (2 * 817, 4)
    np.testing.assert_allclose(S.frequencies[1], 1 / seq.period)
    with pytest.raises(ValueError):
        SystemMatrix(np.zeros((3, 4, 5)), CH, 1.0)
    with pytest.raises(ValueError):
        assemble_system_matrix("xyz", ScanGrid(1, 1, (1e-3, 1e-3)), seq, ANIS, P)


def test_single_cell_grid_matches_composition():
    seq = seq2d()
    grid = ScanGrid(1, 1, (2e-3, 2e-3), center=(1.5e-3, -0.5e-3, 0.0))
    S = assemble_system_matrix("eqanis", grid, seq, ANIS, P)
    tr = simulate_trace("eqanis", grid.positions()[0], seq, ANIS, P)
    np.testing.assert_array_equal(S.data[..., 0], trace_to_rows(tr, CH, seq.period))


def test_mirror_parity_eq_5x5():
    seq = seq2d()  # 16 x-cycles and 17 y-cycles per period, sine drive
    grid = ScanGrid(5, 5, (10e-3, 10e-3))
    S = assemble_system_matrix("eq", grid, seq, ANIS, P).data.reshape(2, -1, 5, 5)  # (ch, k, iy, ix)
    sign = (-1.0) ** np.arange(S.shape[1])[:, None, None]
    flip_x = S[..., ::-1]
    flip_y = S[:, :, ::-1, :]
    tol = 1e-10 * np.abs(S).max()
    # x -> -x corresponds to t -> T/2 - t with the x component reversed
    np.testing.assert_allclose(flip_x[0], sign * np.conj(S[0]), atol=tol)
    np.testing.assert_allclose(flip_x[1], -sign * np.conj(S[1]), atol=tol)
    # y -> -y corresponds to t -> t + T/2 with the y component reversed
    np.testing.assert_allclose(flip_y[0], sign * S[0], atol=tol)
    np.testing.assert_allclose(flip_y[1], -sign * S[1], atol=tol)


def test_rows_linear_in_m0_at_fixed_beta():
    # doubling Ms with T and K doubled keeps beta and alpha_K, so every row doubles
    seq = seq2d()
    grid = ScanGrid(3, 3, (6e-3, 6e-3))
    S1 = assemble_system_matrix("eqanis", grid, seq, ANIS, P)
    P2 = ParticleParams(20e-9, saturation_magnetization=2 * P.saturation_magnetization, temperature=2 * P.temperature)
    A2 = AlignedAnisotropy((1.0, 0.0, 0.0), 4000.0)
    assert P2.beta == pytest.approx(P.beta, rel=1e-15)
    S2 = assemble_system_matrix("eqanis", grid, seq, A2, P2)
    np.testing.assert_allclose(S2.data, 2 * S1.data, rtol=1e-12, atol=1e-12 * np.abs(S1.data).max())


def test_channel_permutation():
    seq = seq2d()
    grid = ScanGrid(2, 3, (4e-3, 6e-3))
    S = assemble_system_matrix("eqanis", grid, seq, ANIS, P)
    Sp = assemble_system_matrix("eqanis", grid, seq, ANIS, P, channels=CH[::-1])
    np.testing.assert_array_equal(Sp.data, S.data[::-1])


def test_eqanis_without_anisotropy_equals_eq():
    seq = seq2d()
    x = np.array([2e-3, -3e-3, 0.0])
    a = simulate_trace("eqanis", x, seq, AlignedAnisotropy((0.0, 1.0, 0.0), 0.0), P)
    b = simulate_trace("eq", x, seq, ANIS, P)
    np.testing.assert_allclose(a.moments, b.moments, rtol=1e-10, atol=1e-10 * P.m0)


def test_saturated_position_has_no_ac_content():
    from eqanis.metrics import study_sequence

    seq = study_sequence()  # 1D drive along x, so the field direction never changes
    x = np.array([0.2, 0.0, 0.0])  # selection field 0.2 T / mu0 against a 12 mT drive
    tr = simulate_trace("eqanis", x, seq, ANIS, P)
    assert len(tr) == seq.n_samples
    spec = np.abs(np.fft.rfft(tr.moments, axis=0)) / len(tr)
    assert spec[1:].max() < 1e-3 * P.m0
    np.testing.assert_allclose(tr.moments[:, 0], -P.m0, rtol=2e-2)


def test_fp_failures_are_collected():
    seq = seq2d()
    pos = np.array([[0.0, 0.0, 0.0], [1e-3, 0.0, 0.0]])
    with pytest.raises(FPSolverError) as exc:
        fp_moments(pos, seq, ANIS, P, fp_options={"L_sph": 5})
    assert "2 position(s)" in str(exc.value) and "position 1" in str(exc.value)
