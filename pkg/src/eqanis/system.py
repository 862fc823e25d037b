"""Moment traces, frequency-domain system-matrix rows, transfer functions and the SM file format."""
from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fokker_planck as fpmod
from .physics import (
    MU0,
    AlignedAnisotropy,
    FieldSequence,
    ParticleParams,
    ScanGrid,
    anisotropy_at,
)
from .series import reduced_moment
from .trace import MomentTrace

MODELS = ("eq", "eqanis", "fp")
SM_MAGIC = b"EQSMBIN1"


def default_channels(seq: FieldSequence):
    """Receive directions: ``e_x`` (and ``e_y`` for 2D sequences)."""
    if seq.is_1d:
        return np.array([[1.0, 0.0, 0.0]])
    return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def _check_model(model):
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")


def equilibrium_moments(model, positions, seq, anis, params, tol=1e-12, times=None):
    """Mean moments (npos, nt, 3) of the EQ or EQANIS model at all positions at once."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    t = seq.times() if times is None else np.asarray(times, dtype=float)
    H = positions[:, None, :] * np.asarray(seq.gradient) + seq.drive(t)[None, :, :]
    if model == "eq":
        alpha = np.zeros(positions.shape[0])
        n = np.tile([0.0, 0.0, 1.0], (positions.shape[0], 1))
    else:
        alpha, n = anisotropy_at(anis, params, positions, seq=seq)
    m = reduced_moment(H, n[:, None, :], alpha[:, None], params.beta, tol=tol)
    return params.m0 * m


def simulate_trace(model, x, seq: FieldSequence, anis, params: ParticleParams, tol=1e-12, fp_options=None):
    """Mean-moment trace over one period at position ``x`` for ``model`` in {eq, eqanis, fp}."""
    _check_model(model)
    x = np.asarray(x, dtype=float)
    if model == "fp":
        alpha, n = anisotropy_at(anis, params, x[None], seq=seq)
        return fpmod.fp_solve(seq, n[0], float(alpha[0]), params, x=x, **(fp_options or {}))
    m = equilibrium_moments(model, x[None], seq, anis, params, tol=tol)[0]
    return MomentTrace(seq.times(), m, x, model)


def spectral_derivative(m, period):
    """Exact time derivative of a periodic, uniformly sampled signal along axis 0."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    spec = np.fft.rfft(m, axis=0) * (2j * np.pi * k / period).reshape((-1,) + (1,) * (m.ndim - 1))
    if n % 2 == 0:
        spec[-1] = 0.0  # Nyquist bin has no well-defined derivative
    return np.fft.irfft(spec, n=n, axis=0)


def trace_rows(moments, period, channels, tf=None):
    """Rows ``s_lk`` from moments ``(nt, 3)`` or ``(nt, npos, 3)``.

    Fourier-series coefficients ``rfft/nt`` of ``-mu0 rho_l . m(t)`` times
    ``i omega_k``, times the transfer-function gain. Returns
    ``(n_channels, K)`` or ``(n_channels, K, npos)``.
    """
    moments = np.asarray(moments, dtype=float)
    nt = moments.shape[0]
    channels = np.atleast_2d(np.asarray(channels, dtype=float))
    proj = np.tensordot(moments, channels.T, axes=([-1], [0]))  # (nt, ..., nch)
    proj = np.moveaxis(proj, -1, 0)  # (nch, nt, ...)
    spec = np.fft.rfft(proj, axis=1) / nt
    omega = 2 * np.pi * np.arange(spec.shape[1]) / period
    rows = -MU0 * 1j * omega.reshape((1, -1) + (1,) * (spec.ndim - 2)) * spec
    if tf is not None:
        gain = np.asarray(tf.gains if isinstance(tf, TransferFunction) else tf)
        rows = rows * gain.reshape(gain.shape + (1,) * (rows.ndim - 2))
    return rows


def trace_to_rows(trace: MomentTrace, channels, period, tf=None):
    return trace_rows(trace.moments, period, channels, tf)


@dataclass
class TransferFunction:
    gains: np.ndarray  # (n_channels, K)

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=complex)
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("transfer function gains must be finite")

    def apply(self, S: "SystemMatrix") -> "SystemMatrix":
        if self.gains.shape != S.data.shape[:2]:
            raise ValueError("transfer function shape does not match the system matrix")
        meta = dict(S.meta, tf_applied=True)
        return SystemMatrix(S.data * self.gains[..., None], S.channels, S.period, meta)


def fit_transfer_function(S_model, S_ref, rel_floor=1e-12) -> TransferFunction:
    """Least-squares complex gain per channel and frequency: ``<s_model, s_ref> / |s_model|^2``."""
    A = S_model.data if isinstance(S_model, SystemMatrix) else np.asarray(S_model)
    B = S_ref.data if isinstance(S_ref, SystemMatrix) else np.asarray(S_ref)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    num = np.sum(np.conj(A) * B, axis=-1)
    den = np.sum(np.abs(A) ** 2, axis=-1)
    ok = np.sqrt(den) >= rel_floor * np.sqrt(den.max()) if den.size and den.max() > 0 else np.zeros_like(den, bool)
    gains = np.zeros(den.shape, dtype=complex)
    gains[ok] = num[ok] / den[ok]
    return TransferFunction(gains)


@dataclass
class SystemMatrix:
    """Complex rows ``data[channel, k, position]`` with ``omega_k = 2 pi k / period``."""

    data: np.ndarray
    channels: np.ndarray
    period: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if self.data.ndim != 3 or self.data.shape[0] != self.channels.shape[0]:
            raise ValueError("data must have shape (n_channels, K, N)")

    @property
    def n_freq(self):
        return self.data.shape[1]

    @property
    def n_pos(self):
        return self.data.shape[2]

    @property
    def frequencies(self):
        return np.arange(self.n_freq) / self.period

    @property
    def model(self):
        return self.meta.get("model", "")

    def matrix(self):
        """Stacked ``(n_channels*K, N)`` operator, channel-major."""
        return self.data.reshape(-1, self.n_pos)

    def row(self, k, channel=0):
        return self.data[channel, k]


def _fp_worker(args):
    x, n, alpha, params, seq, opts = args
    try:
        return fpmod.fp_solve(seq, n, alpha, params, x=x, **opts).moments, None
    except Exception as exc:  # collected and reported by the caller
        return None, f"{type(exc).__name__}: {exc}"


def fp_moments(positions, seq, anis, params, fp_options=None, n_jobs=1):
    """FP traces (npos, nt, 3) at all positions; raises listing failed positions."""
    positions = np.atleast_2d(positions)
    alpha, n = anisotropy_at(anis, params, positions, seq=seq)
    opts = dict(fp_options or {})
    jobs = [(positions[i], n[i], float(alpha[i]), params, seq, opts) for i in range(len(positions))]
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_fp_worker, jobs))
    else:
        results = [_fp_worker(j) for j in jobs]
    failed = [(i, err) for i, (_, err) in enumerate(results) if err is not None]
    if failed:
        lines = "; ".join(f"position {i} {positions[i].tolist()}: {e}" for i, e in failed)
        raise fpmod.FPSolverError(f"FP solve failed at {len(failed)} position(s): {lines}")
    return np.stack([r for r, _ in results])


def describe(seq: FieldSequence, params: ParticleParams, anis, grid: ScanGrid | None = None):
    meta = {
        "sequence": {
            "gradient": list(seq.gradient),
            "amplitudes": list(seq.amplitudes),
            "phases": list(seq.phases),
            "f_base": seq.f_base,
            "divider": seq.divider,
            "sample_rate": seq.sample_rate,
        },
        "particle": {
            "diameter": params.diameter,
            "saturation_magnetization": params.saturation_magnetization,
            "temperature": params.temperature,
        },
        "anisotropy": anisotropy_dict(anis),
    }
    if grid is not None:
        meta["grid"] = grid.to_dict()
    return meta


def anisotropy_dict(anis):
    if isinstance(anis, AlignedAnisotropy):
        return {"type": "aligned", "K_anis": anis.k_anis, "easy_axis": list(anis.easy_axis)}
    return {"type": "fluid-b3", "K_max": anis.k_max, "q": anis.q, "boundary_field": anis.boundary_field}


def assemble_system_matrix(
    model,
    grid: ScanGrid,
    seq: FieldSequence,
    anis,
    params: ParticleParams,
    tf=None,
    channels=None,
    tol=1e-12,
    fp_options=None,
    n_jobs=1,
) -> SystemMatrix:
    """System matrix over all grid positions (x fastest) for ``model`` in {eq, eqanis, fp}."""
    _check_model(model)
    positions = grid.positions()
    if positions.shape[0] == 0:
        raise ValueError("grid is empty")
    channels = default_channels(seq) if channels is None else np.atleast_2d(channels)
    if model == "fp":
        m = fp_moments(positions, seq, anis, params, fp_options, n_jobs)
    else:
        m = equilibrium_moments(model, positions, seq, anis, params, tol=tol)
    rows = trace_rows(np.moveaxis(m, 0, 1), seq.period, channels, tf)
    meta = describe(seq, params, anis, grid)
    meta.update(model=model, tf_applied=tf is not None, channels=channels.tolist())
    return SystemMatrix(rows, channels, seq.period, meta)


# --- file format -----------------------------------------------------------
# UTF-8 JSON header, "\n", 16-byte record (8-byte magic + uint64 LE payload
# offset), then little-endian float64 (re, im) pairs, row-major [row][position]
# with rows ordered channel-major.


def write_sm(path, S: SystemMatrix):
    header = dict(S.meta)
    header.update(
        shape=[int(v) for v in S.data.shape],
        channels=S.channels.tolist(),
        period=S.period,
        layout="[channel][frequency][position] complex128 little-endian interleaved",
    )
    text = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    offset = len(text) + 16
    payload = np.ascontiguousarray(S.data).astype("<c16", copy=False)
    with open(path, "wb") as fh:
        fh.write(text)
        fh.write(SM_MAGIC + struct.pack("<Q", offset))
        fh.write(payload.tobytes())


def read_sm(path) -> SystemMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ValueError("missing header terminator")
    header = json.loads(blob[:nl].decode("utf-8"))
    rec = blob[nl + 1 : nl + 17]
    if len(rec) != 16 or rec[:8] != SM_MAGIC:
        raise ValueError("not a system-matrix file (bad magic)")
    (offset,) = struct.unpack("<Q", rec[8:])
    shape = tuple(header["shape"])
    data = np.frombuffer(blob, dtype="<c16", count=int(np.prod(shape)), offset=offset).reshape(shape)
    channels = np.asarray(header.pop("channels"))
    period = header.pop("period")
    header.pop("shape")
    header.pop("layout", None)
    header["channels"] = channels.tolist()
    return SystemMatrix(data.astype(complex), channels, period, header)
