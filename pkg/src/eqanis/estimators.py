"""scikit-learn style wrappers around the magnetization models and the system function.

The physics has no trainable parameters, so ``fit`` only validates input and
records its width; the transfer-function fitter is the one estimator that
learns something from data.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .physics import AlignedAnisotropy, FieldSequence, ParticleParams, ScanGrid
from .series import reduced_moment
from .system import (
    default_channels,
    equilibrium_moments,
    fit_transfer_function,
    fp_moments,
    trace_rows,
)


def _check_xyz(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {X.shape}")
    return X


class EquilibriumMoment(BaseEstimator, TransformerMixin):
    """Map applied fields ``(n, 3)`` in A/m to normalized mean moments ``(n, 3)``.

    ``k_anis = 0`` gives the Langevin (EQ) model.
    """

    def __init__(self, diameter=20e-9, k_anis=0.0, easy_axis=(0.0, 0.0, 1.0), saturation_magnetization=474000.0,
                 temperature=293.0, tol=1e-12):
        self.diameter = diameter
        self.k_anis = k_anis
        self.easy_axis = easy_axis
        self.saturation_magnetization = saturation_magnetization
        self.temperature = temperature
        self.tol = tol

    def _params(self):
        return ParticleParams(self.diameter, self.saturation_magnetization, self.temperature)

    def fit(self, X, y=None):
        X = _check_xyz(X)
        AlignedAnisotropy(tuple(self.easy_axis), self.k_anis)  # validates
        self.params_ = self._params()
        self.alpha_k_ = float(self.params_.alpha_k(self.k_anis))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("EquilibriumMoment is not fitted")
        X = _check_xyz(X)
        return reduced_moment(X, np.asarray(self.easy_axis, float), self.alpha_k_, self.params_.beta, tol=self.tol)


class SystemFunction(BaseEstimator, TransformerMixin):
    """Map positions ``(n, 3)`` in m to system-matrix columns ``(n, n_channels * K)``.

    ``model`` is ``"eq"``, ``"eqanis"`` or ``"fp"``. ``transform(X).T`` is the
    stacked system matrix for those positions.
    """

    def __init__(self, sequence: FieldSequence | None = None, particle: ParticleParams | None = None,
                 anisotropy=None, model="eqanis", channels=None, tf=None, fp_options=None, n_jobs=1):
        self.sequence = sequence
        self.particle = particle
        self.anisotropy = anisotropy
        self.model = model
        self.channels = channels
        self.tf = tf
        self.fp_options = fp_options
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if self.model not in ("eq", "eqanis", "fp"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.sequence is None or self.particle is None:
            raise ValueError("sequence and particle are required")
        self.anisotropy_ = self.anisotropy if self.anisotropy is not None else AlignedAnisotropy()
        self.channels_ = default_channels(self.sequence) if self.channels is None else np.atleast_2d(self.channels)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        if not hasattr(self, "channels_"):
            raise NotFittedError("SystemFunction is not fitted")
        X = _check_xyz(X)
        if self.model == "fp":
            m = fp_moments(X, self.sequence, self.anisotropy_, self.particle, self.fp_options, self.n_jobs)
        else:
            m = equilibrium_moments(self.model, X, self.sequence, self.anisotropy_, self.particle)
        rows = trace_rows(np.moveaxis(m, 0, 1), self.sequence.period, self.channels_, self.tf)
        return rows.reshape(-1, X.shape[0]).T

    def grid_matrix(self, grid: ScanGrid):
        """Stacked ``(n_channels * K, N)`` matrix over a scan grid."""
        return self.fit().transform(grid.positions()).T


class TransferFunctionFitter(BaseEstimator, TransformerMixin):
    """Least-squares complex gain per row; ``fit(S_model, S_ref)`` then ``transform(S)``."""

    def __init__(self, rel_floor=1e-12):
        self.rel_floor = rel_floor

    def fit(self, S_model, S_ref):
        self.tf_ = fit_transfer_function(S_model, S_ref, self.rel_floor)
        return self

    def transform(self, S):
        if not hasattr(self, "tf_"):
            raise NotFittedError("TransferFunctionFitter is not fitted")
        if hasattr(S, "data"):
            return self.tf_.apply(S)
        return self.tf_.gains[..., None] * np.asarray(S)
