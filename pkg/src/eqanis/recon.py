"""Weighted, Tikhonov-regularised Kaczmarz reconstruction with per-sweep nonnegativity."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator


def _as_matrix(S):
    return S.matrix() if callable(getattr(S, "matrix", None)) else np.asarray(S)


def lambda_abs(S, weights=None, lambda_r=0.1):
    """Absolute regularisation ``lambda_r ||W S||_F^2 / N``."""
    S = _as_matrix(S)
    if S.size == 0:
        raise ValueError("S is empty")
    w = np.ones(S.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    fro2 = np.sum(np.abs(S) ** 2 * (w**2)[:, None])
    return float(lambda_r * fro2 / S.shape[1])


def _validate(S, u, weights):
    S = np.asarray(_as_matrix(S), dtype=complex)
    u = np.asarray(u, dtype=complex).ravel()
    if S.ndim != 2 or S.shape[0] != u.size:
        raise ValueError(f"dimension mismatch: S {S.shape}, u {u.shape}")
    if not np.any(S):
        raise ValueError("system matrix is all zero")
    w = np.ones(S.shape[0]) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != (S.shape[0],) or np.any(~(w > 0)):
        raise ValueError("weights must be positive, one per row")
    return S, u, w


def kaczmarz(S, u, iterations=100, lambda_r=0.1, weights=None, nonneg=True, shuffle=False, seed=None,
             callback=None, return_complex=False):
    """Solve ``min_{c >= 0} ||W (S c - u)||^2 + lambda ||c||^2`` by row-action sweeps.

    The Tikhonov term enters through the consistent embedding ``[W S, sqrt(lambda) I]``
    with auxiliary unknowns ``v``. The iterate is complex; after every sweep
    negative real parts are set to zero when ``nonneg``. The real part is
    returned (plus the complex iterate if ``return_complex``).
    ``callback(sweep, c)`` is called after each sweep.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if lambda_r < 0:
        raise ValueError("lambda_r must be >= 0")
    S, u, w = _validate(S, u, weights)
    A = S * w[:, None]
    b = u * w
    lam = lambda_abs(A, None, lambda_r)
    sq = np.sqrt(lam)
    norms = np.sum(np.abs(A) ** 2, axis=1) + lam
    Ac = np.conj(A)
    c = np.zeros(S.shape[1], dtype=complex)
    v = np.zeros(S.shape[0], dtype=complex)
    rng = np.random.default_rng(seed)
    order = np.arange(S.shape[0])
    active = norms > 0
    for sweep in range(iterations):
        if shuffle:
            order = rng.permutation(S.shape[0])
        for k in order:
            if not active[k]:
                continue
            beta = (b[k] - A[k] @ c - sq * v[k]) / norms[k]
            c += beta * Ac[k]
            v[k] += beta * sq
        if nonneg:
            re = c.real
            neg = re < 0
            c[neg] = 1j * c.imag[neg]
        if callback is not None:
            callback(sweep, c)
    if return_complex:
        return c.real.copy(), c
    return c.real.copy()


class KaczmarzReconstructor(BaseEstimator):
    """Estimator wrapper: ``fit(S, u)`` stores the concentration in ``coef_``.

    ``S`` plays the role of the design matrix (rows are frequencies) and
    ``u`` the target. ``predict(S)`` returns ``S @ coef_``.
    """

    def __init__(self, iterations=100, lambda_r=0.1, nonneg=True, shuffle=False, random_state=None):
        self.iterations = iterations
        self.lambda_r = lambda_r
        self.nonneg = nonneg
        self.shuffle = shuffle
        self.random_state = random_state

    def fit(self, S, u, sample_weight=None):
        c, cc = kaczmarz(_as_matrix(S), u, self.iterations, self.lambda_r, sample_weight, self.nonneg,
                         self.shuffle, self.random_state, return_complex=True)
        self.coef_ = c
        self.coef_complex_ = cc
        self.n_features_in_ = c.size
        self.lambda_ = lambda_abs(_as_matrix(S), sample_weight, self.lambda_r)
        return self

    def predict(self, S):
        if not hasattr(self, "coef_"):
            raise AttributeError("KaczmarzReconstructor is not fitted")
        S = _as_matrix(S)
        if S.shape[1] != self.n_features_in_:
            raise ValueError("column count differs from the fitted system")
        return S @ self.coef_
