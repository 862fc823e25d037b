"""Particle parameters, applied-field sequences, scan grids and anisotropy models.

All magnetic fields are carried in A/m. Inputs given in tesla (the ``mT/mu0``
convention used by scanner consoles) are converted with :func:`tesla_to_field`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MU0 = 4e-7 * math.pi
KB = 1.380649e-23

DEFAULT_TEMPERATURE = 293.0
DEFAULT_MS = 474000.0


def tesla_to_field(value):
    """Convert ``value`` given in T/mu0 (or T/m/mu0) to A/m (or A/m^2)."""
    return np.asarray(value, dtype=float) / MU0


@dataclass(frozen=True)
class ParticleParams:
    diameter: float
    saturation_magnetization: float = DEFAULT_MS
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        for name in ("diameter", "saturation_magnetization", "temperature"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")

    @property
    def volume(self) -> float:
        return math.pi * self.diameter**3 / 6.0

    @property
    def m0(self) -> float:
        return self.saturation_magnetization * self.volume

    @property
    def beta(self) -> float:
        return MU0 * self.m0 / (KB * self.temperature)

    def alpha_k(self, k_anis):
        """Dimensionless anisotropy strength ``V_c K / (k_B T)``."""
        return self.beta / (MU0 * self.saturation_magnetization) * np.asarray(k_anis, dtype=float)


@dataclass(frozen=True)
class AlignedAnisotropy:
    """Immobilized particles: fixed easy axis and constant anisotropy constant."""

    easy_axis: tuple = (0.0, 0.0, 1.0)
    k_anis: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.easy_axis, dtype=float)
        if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("easy_axis must be a unit 3-vector")
        if self.k_anis < 0:
            raise ValueError("k_anis must be >= 0")
        object.__setattr__(self, "easy_axis", tuple(float(v) for v in n))


@dataclass(frozen=True)
class FluidB3Anisotropy:
    """Fluid particles: radial easy axis along the selection field, power-law strength.

    ``boundary_field`` is the selection-field magnitude at the scan-field
    boundary; the strength reaches ``k_max`` there.
    """

    k_max: float
    q: float
    boundary_field: float

    def __post_init__(self):
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if not self.q > 0:
            raise ValueError("q must be > 0")
        if not self.boundary_field > 0:
            raise ValueError("boundary_field must be > 0")


def isotropic() -> AlignedAnisotropy:
    return AlignedAnisotropy((0.0, 0.0, 1.0), 0.0)


def easy_axis_xy(angle_deg: float) -> tuple:
    a = math.radians(angle_deg)
    return (math.cos(a), math.sin(a), 0.0)


@dataclass(frozen=True)
class FieldSequence:
    """Selection gradient plus a 2D Lissajous drive field.

    ``gradient`` holds the diagonal of G in A/m^2. The x channel runs at
    ``f_base/(divider+1)``, the y channel at ``f_base/divider``. A 1D
    sequence uses ``divider=1`` and ``amplitudes[1] == 0``.
    """

    gradient: tuple
    amplitudes: tuple
    phases: tuple = (0.0, 0.0)
    f_base: float = 2.5e6 / 6
    divider: int = 16
    sample_rate: float = 2.5e6

    def __post_init__(self):
        g = tuple(float(v) for v in np.asarray(self.gradient, dtype=float).ravel())
        if len(g) != 3 or any(v == 0 or not np.isfinite(v) for v in g):
            raise ValueError("gradient must be three nonzero values (invertible diagonal G)")
        amp = tuple(float(v) for v in self.amplitudes)
        if len(amp) != 2:
            raise ValueError("amplitudes must be (A_x, A_y)")
        if int(self.divider) != self.divider or self.divider < 1:
            raise ValueError("divider must be an integer >= 1")
        if not (self.f_base > 0 and self.sample_rate > 0):
            raise ValueError("frequencies must be positive")
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "phases", tuple(float(v) for v in self.phases))
        object.__setattr__(self, "divider", int(self.divider))
        n = self.period * self.sample_rate
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ValueError(f"sampling not commensurate with the period ({n} samples)")

    @classmethod
    def from_dividers(cls, clock, dividers, gradient, amplitudes, phases=(0.0, 0.0), sample_rate=None):
        """Build from scanner-style dividers, e.g. ``clock=2.5e6, dividers=(102, 96)``."""
        dividers = [int(d) for d in dividers]
        if sample_rate is None:
            sample_rate = clock
        amplitudes = tuple(amplitudes) + (0.0,) * (2 - len(tuple(amplitudes)))
        if len(dividers) == 1:
            return cls(gradient, (amplitudes[0], 0.0), phases, 2.0 * clock / dividers[0], 1, sample_rate)
        dx, dy = dividers
        g = math.gcd(dx, dy)
        nb = dy // g
        if dx // g != nb + 1:
            raise ValueError(f"dividers {dividers} do not form an (N_B+1, N_B) pair")
        return cls(gradient, amplitudes, phases, clock / g, nb, sample_rate)

    @property
    def fx(self) -> float:
        return self.f_base / (self.divider + 1)

    @property
    def fy(self) -> float:
        return self.f_base / self.divider

    @property
    def period(self) -> float:
        return self.divider * (self.divider + 1) / self.f_base

    @property
    def n_samples(self) -> int:
        return int(round(self.period * self.sample_rate))

    @property
    def is_1d(self) -> bool:
        return self.amplitudes[1] == 0.0

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate

    def drive(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3,))
        out[..., 0] = self.amplitudes[0] * np.sin(2 * np.pi * self.fx * t + self.phases[0])
        out[..., 1] = self.amplitudes[1] * np.sin(2 * np.pi * self.fy * t + self.phases[1])
        return out

    def drive_derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3,))
        wx, wy = 2 * np.pi * self.fx, 2 * np.pi * self.fy
        out[..., 0] = self.amplitudes[0] * wx * np.cos(wx * t + self.phases[0])
        out[..., 1] = self.amplitudes[1] * wy * np.cos(wy * t + self.phases[1])
        return out


def selection_field(seq: FieldSequence, x) -> np.ndarray:
    return np.asarray(x, dtype=float) * np.asarray(seq.gradient)


def applied_field(seq: FieldSequence, x, t) -> np.ndarray:
    """``G x + H_D(t)``; ``x`` (...,3) and ``t`` broadcast like numpy arrays."""
    return selection_field(seq, x) + seq.drive(t)


def ffp_position(seq: FieldSequence, t) -> np.ndarray:
    """Field-free point ``-G^{-1} H_D(t)``."""
    return -seq.drive(t) / np.asarray(seq.gradient)


@dataclass(frozen=True)
class ScanGrid:
    """Cell-centred grid in the xy-plane; positions ordered x-fastest."""

    nx: int
    ny: int
    fov: tuple  # (width_x, width_y) in m
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per axis")
        if any(not f > 0 for f in self.fov):
            raise ValueError("fov must be positive")

    @classmethod
    def from_center_span(cls, nx, ny, span_x, span_y):
        """Grid whose outermost cell centres sit at ``+-span``."""
        fx = 2 * span_x * nx / (nx - 1) if nx > 1 else 2 * span_x or 1e-3
        fy = 2 * span_y * ny / (ny - 1) if ny > 1 else 2 * span_y or 1e-3
        return cls(nx, ny, (fx, fy))

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def spacing(self):
        return (self.fov[0] / self.nx, self.fov[1] / self.ny)

    def axes(self):
        dx, dy = self.spacing
        xs = self.center[0] - self.fov[0] / 2 + (np.arange(self.nx) + 0.5) * dx
        ys = self.center[1] - self.fov[1] / 2 + (np.arange(self.ny) + 0.5) * dy
        return xs, ys

    def positions(self) -> np.ndarray:
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys)  # rows = y, x fastest
        return np.stack([X.ravel(), Y.ravel(), np.full(X.size, self.center[2])], axis=-1)

    def to_dict(self):
        return {"nx": self.nx, "ny": self.ny, "fov_m": list(self.fov), "center_m": list(self.center)}


def anisotropy_at(model, params: ParticleParams, x, seq: FieldSequence | None = None, gradient=None):
    """Local anisotropy strength ``alpha_K`` and easy axis ``n`` at positions ``x``.

    Returns arrays of shape ``x.shape[:-1]`` and ``x.shape``. The fluid model
    needs the selection gradient (from ``seq`` or ``gradient``); at the exact
    field-free centre it returns ``alpha_K = 0`` with ``n = e_z``.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(model, AlignedAnisotropy):
        alpha = np.full(x.shape[:-1], float(params.alpha_k(model.k_anis)))
        n = np.broadcast_to(np.asarray(model.easy_axis), x.shape).copy()
        return alpha, n
    if isinstance(model, FluidB3Anisotropy):
        if gradient is None:
            if seq is None:
                raise ValueError("fluid anisotropy needs the selection gradient")
            gradient = seq.gradient
        hs = np.atleast_2d(x * np.asarray(gradient, dtype=float))
        mag = np.linalg.norm(hs, axis=-1)
        safe = mag > 0
        n = np.zeros_like(hs)
        n[:, 2] = 1.0
        n[safe] = hs[safe] / mag[safe][:, None]
        alpha = params.alpha_k(model.k_max) * (mag / model.boundary_field) ** model.q
        alpha = np.where(safe, alpha, 0.0)
        return alpha.reshape(x.shape[:-1]), n.reshape(x.shape)
    raise TypeError(f"unknown anisotropy model {model!r}")
