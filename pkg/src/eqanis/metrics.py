"""Trace and system-matrix error measures, truncation and error-map sweeps."""
from __future__ import annotations

import numpy as np

from .physics import AlignedAnisotropy, FieldSequence, ParticleParams
from .series import reduced_moment
from .system import equilibrium_moments, fp_moments, spectral_derivative


def _as_moments(tr):
    return np.asarray(getattr(tr, "moments", tr), dtype=float)


def err_td(ref, approx, period=1.0):
    """Maximum over positions of ``mean_t |d ref - d approx| / max_t |d ref|``.

    ``ref``/``approx`` are traces ``(nt, 3)``, stacks ``(npos, nt, 3)`` or
    sequences of :class:`MomentTrace`. ``|.|`` is the Euclidean norm per
    sample and derivatives are spectral. The value does not depend on
    ``period``.
    """
    if isinstance(ref, (list, tuple)):
        ref = np.stack([_as_moments(r) for r in ref])
        approx = np.stack([_as_moments(a) for a in approx])
    ref, approx = _as_moments(ref), _as_moments(approx)
    if ref.shape != approx.shape:
        raise ValueError(f"trace shapes differ: {ref.shape} vs {approx.shape}")
    if ref.ndim == 2:
        ref, approx = ref[None], approx[None]
    if ref.shape[1] < 2:
        raise ValueError("need at least two samples")
    dr = spectral_derivative(np.moveaxis(ref, 1, 0), period)
    da = spectral_derivative(np.moveaxis(approx, 1, 0), period)
    num = np.mean(np.linalg.norm(dr - da, axis=-1), axis=0)
    den = np.max(np.linalg.norm(dr, axis=-1), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    return float(np.max(per))


def err_sm(s_ref, s_approx):
    """``|s_ref - s_approx|_2 / (sqrt(N) |s_ref|_inf)`` for one frequency row."""
    s_ref = np.asarray(s_ref).ravel()
    s_approx = np.asarray(s_approx).ravel()
    if s_ref.shape != s_approx.shape or s_ref.size == 0:
        raise ValueError("rows must be non-empty and of equal length")
    peak = np.max(np.abs(s_ref))
    if peak == 0:
        raise ValueError("reference row is zero")
    return float(np.linalg.norm(s_ref - s_approx) / (np.sqrt(s_ref.size) * peak))


def mixing_order_index(kx, ky, divider):
    """Frequency index ``k = kx N_B + ky (N_B + 1)``."""
    return kx * divider + ky * (divider + 1)


def compare_mixing_orders(S_ref, S_approx, orders=range(1, 10), channel=None):
    """Table ``[(kx, ky, channel, eps_SM)]`` over mixing orders ``kx, ky``.

    ``channel=None`` pairs ``x`` with channel 0 and ``y`` with channel 1 when
    present and reports both.
    """
    divider = S_ref.meta["sequence"]["divider"]
    chans = range(S_ref.data.shape[0]) if channel is None else [channel]
    out = []
    for kx in orders:
        for ky in orders:
            k = mixing_order_index(kx, ky, divider)
            if k >= S_ref.n_freq:
                continue
            for ch in chans:
                out.append((kx, ky, ch, err_sm(S_ref.data[ch, k], S_approx.data[ch, k])))
    return out


def study_sequence(clock=2.5e6, divider=102, amplitude=None, oversample=10):
    """1D sequence used by the accuracy studies: ``f_x = clock/divider``, 12 mT/mu0, unit gradient."""
    from .physics import tesla_to_field

    amp = float(tesla_to_field(12e-3)) if amplitude is None else amplitude
    g = tesla_to_field([-1.0, -1.0, 2.0])
    return FieldSequence.from_dividers(clock, [divider], g, [amp], sample_rate=clock * oversample)


def offset_positions(seq: FieldSequence, n_offsets=7, max_offset=None):
    """Positions along ``x`` whose selection field spans ``[0, max_offset]`` A/m."""
    max_offset = seq.amplitudes[0] if max_offset is None else max_offset
    xs = np.linspace(0.0, max_offset, n_offsets) / abs(seq.gradient[0])
    return np.stack([xs, np.zeros_like(xs), np.zeros_like(xs)], axis=-1)


def error_map(diameters, k_values, seq=None, model_a="fp", model_b="eqanis", easy_axis=(1.0, 0.0, 0.0),
              n_offsets=7, fp_options=None, n_jobs=1, base_params=None):
    """``eps_TD(model_a, model_b)`` over a ``(D, K)`` grid; rows index D, columns K.

    Cells where the reference solve fails hold NaN.
    """
    seq = study_sequence() if seq is None else seq
    pos = offset_positions(seq, n_offsets)
    out = np.full((len(diameters), len(k_values)), np.nan)
    for i, d in enumerate(diameters):
        kw = {} if base_params is None else dict(
            saturation_magnetization=base_params.saturation_magnetization, temperature=base_params.temperature)
        params = ParticleParams(d, **kw)
        for j, k in enumerate(k_values):
            anis = AlignedAnisotropy(tuple(easy_axis), float(k))
            try:
                a = _model_moments(model_a, pos, seq, anis, params, fp_options, n_jobs)
                b = a if model_b == model_a else _model_moments(model_b, pos, seq, anis, params, fp_options, n_jobs)
            except RuntimeError:
                continue
            out[i, j] = err_td(a, b, seq.period)
    return out


def _model_moments(model, pos, seq, anis, params, fp_options, n_jobs):
    if model == "fp":
        return fp_moments(pos, seq, anis, params, fp_options, n_jobs)
    return equilibrium_moments(model, pos, seq, anis, params)


def truncation_map(diameters, k_values, seq=None, target=1e-6, ref_terms=200, n_offsets=7, easy_axis=(1.0, 0.0, 0.0)):
    """Truncation study against an ``L = ref_terms`` reference.

    Returns a dict of ``(len(D), len(K))`` arrays: ``adaptive_L`` (largest
    index chosen by the adaptive rule at ``tol = target``), ``adaptive_err``
    (its eps_TD against the reference) and ``min_L`` (smallest fixed
    truncation with eps_TD below ``target``).
    """
    seq = study_sequence() if seq is None else seq
    pos = offset_positions(seq, n_offsets)
    t = seq.times()
    H = pos[:, None, :] * np.asarray(seq.gradient) + seq.drive(t)[None]
    n = np.asarray(easy_axis, dtype=float)
    shape = (len(diameters), len(k_values))
    res = {"adaptive_L": np.zeros(shape, int), "adaptive_err": np.zeros(shape), "min_L": np.zeros(shape, int)}
    for i, d in enumerate(diameters):
        params = ParticleParams(d)
        for j, k in enumerate(k_values):
            ak = max(float(params.alpha_k(k)), 1e-7)  # keep the series path even at K = 0
            ref = reduced_moment(H, n, ak, params.beta, fixed_terms=ref_terms)
            ad, used = reduced_moment(H, n, ak, params.beta, tol=target, return_terms=True)
            res["adaptive_L"][i, j] = int(used.max())
            res["adaptive_err"][i, j] = err_td(ref, ad, seq.period)
            lo, hi = 1, ref_terms
            while lo < hi:  # error is nonincreasing in L
                mid = (lo + hi) // 2
                e = err_td(ref, reduced_moment(H, n, ak, params.beta, fixed_terms=mid), seq.period)
                if e < target:
                    hi = mid
                else:
                    lo = mid + 1
            res["min_L"][i, j] = lo
    return res
