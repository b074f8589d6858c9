"""Observation models g(X | Z).

Samplers never need the full likelihood inside their inner loops.  They
ask for a :class:`RowPredictive`, the law of one data row given its
feature row and every *other* row.  For the collapsed linear-Gaussian
model this is Gaussian with mean ``z @ weights`` and isotropic variance
``noise_var * (1 + z @ cov @ z)``, and

    g(X | Z) = g(X_{-n} | Z_{-n}) * p(x_n | z_n, X_{-n}, Z_{-n}),

so differences of ``RowPredictive.loglik`` between two candidate rows are
exact differences of the full likelihood.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ribp.model import FeatureMatrix

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class RowPredictive:
    """Gaussian law of one data row given its feature row.

    Only columns that are active in the *other* rows carry information;
    ``weights`` and ``cov`` are restricted to those (``active``).  Every
    other column has zero mean weight and prior variance ``free_var``, both
    in units of ``noise_var``.
    """

    x: np.ndarray  # (D,)
    active: np.ndarray  # (A,) column indices
    weights: np.ndarray  # (A, D) posterior mean of the active feature weights
    cov: np.ndarray  # (A, A) their covariance in units of noise_var
    free_var: float
    noise_var: float

    def _finish(self, mean, q):
        D = self.x.size
        var = self.noise_var * (1.0 + q)
        resid = np.sum((self.x - mean) ** 2, axis=-1)
        return -0.5 * D * (LOG_2PI + np.log(var)) - 0.5 * resid / var

    def loglik(self, rows):
        """Log density of ``x`` for one row (K,) or a batch of rows (B, K)."""
        rows = np.asarray(rows, dtype=float)
        if self.x.size == 0:
            return 0.0 if rows.ndim == 1 else np.zeros(rows.shape[0])
        on = rows[..., self.active]
        n_free = rows.sum(axis=-1) - on.sum(axis=-1)
        q = np.sum((on @ self.cov) * on, axis=-1) + self.free_var * n_free
        out = self._finish(on @ self.weights, q)
        return float(out) if rows.ndim == 1 else out

    def loglik_add_one(self, base, columns):
        """``loglik(base + e_k)`` for each k in ``columns`` (all off in ``base``)."""
        columns = np.asarray(columns)
        if self.x.size == 0:
            return np.zeros(columns.size)
        base = np.asarray(base, dtype=float)
        on = base[self.active]
        cb = self.cov @ on
        q0 = on @ cb + self.free_var * (base.sum() - on.sum())
        # position of each candidate within `active`, or -1
        pos = np.full(base.size, -1)
        pos[self.active] = np.arange(self.active.size)
        pc = pos[columns]
        hit = pc >= 0
        q = np.full(columns.size, q0 + self.free_var)
        mean = np.tile(on @ self.weights, (columns.size, 1))
        if np.any(hit):
            ph = pc[hit]
            q[hit] = q0 + 2.0 * cb[ph] + self.cov[ph, ph]
            mean[hit] += self.weights[ph]
        return self._finish(mean, q)


class ObservationModel:
    """Interface: ``full_loglik(Z)`` and ``row_predictive(Z, n)``."""

    # True when Z is the data itself and must not be resampled
    clamps_z = False

    def full_loglik(self, Z):
        raise NotImplementedError

    def row_predictive(self, Z, n):
        raise NotImplementedError

    def row_delta_loglik(self, Z, n, row):
        """full_loglik(Z with row n replaced) - full_loglik(Z)."""
        pred = self.row_predictive(Z, n)
        return pred.loglik(row) - pred.loglik(Z.row(n))


class FlatLikelihood(ObservationModel):
    """g(X | Z) constant: the sampler targets the prior over Z."""

    def full_loglik(self, Z):
        return 0.0

    def row_predictive(self, Z, n):
        empty = np.zeros((0, 0))
        return RowPredictive(np.zeros(0), np.zeros(0, dtype=np.int64), empty, empty, 0.0, 1.0)


class LinearGaussianData(ObservationModel):
    """X = Z A + noise with A_kd ~ N(0, sigma_a^2) integrated out."""

    def __init__(self, X, sigma_x, sigma_a):
        self.X = np.asarray(X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be an N x D matrix")
        if not (sigma_x > 0 and sigma_a > 0):
            raise ValueError("noise and weight scales must be positive")
        self.sigma_x = float(sigma_x)
        self.sigma_a = float(sigma_a)

    @property
    def ratio(self):
        """sigma_x^2 / sigma_a^2, the ridge added to Z^T Z."""
        return (self.sigma_x / self.sigma_a) ** 2

    def _check(self, Z):
        if Z.N != self.X.shape[0]:
            raise ValueError(f"Z has {Z.N} rows but X has {self.X.shape[0]}")

    def full_loglik(self, Z):
        self._check(Z)
        return linear_gaussian_loglik(self, Z)

    def row_predictive(self, Z, n):
        self._check(Z)
        z = Z.entries
        c = self.ratio
        active = np.flatnonzero(Z.col_counts - z[n] > 0)
        keep = np.ones(Z.N, dtype=bool)
        keep[n] = False
        Za = z[keep][:, active].astype(float)
        cov = np.linalg.inv(Za.T @ Za + c * np.eye(active.size))
        weights = cov @ (Za.T @ self.X[keep])
        return RowPredictive(self.X[n], active, weights, cov, 1.0 / c, self.sigma_x**2)

    def posterior_weights(self, Z):
        """Posterior mean of A given (X, Z); rows of inactive columns are zero."""
        z = Z.entries.astype(float)
        active = Z.active_columns()
        A = np.zeros((Z.K, self.X.shape[1]))
        if active.size:
            Za = z[:, active]
            A[active] = linalg.solve(
                Za.T @ Za + self.ratio * np.eye(active.size), Za.T @ self.X, assume_a="pos"
            )
        return A


def linear_gaussian_loglik(data, Z):
    """Collapsed log g(X | Z) for the linear-Gaussian model.

    Inactive columns contribute nothing, so only active ones are used.
    """
    X = data.X
    N, D = X.shape
    active = Z.active_columns()
    Ka = active.size
    sx2 = data.sigma_x**2
    out = -0.5 * N * D * LOG_2PI - (N - Ka) * D * np.log(data.sigma_x) - Ka * D * np.log(data.sigma_a)
    quad = np.sum(X * X)
    if Ka:
        Za = Z.entries[:, active].astype(float)
        chol = linalg.cho_factor(Za.T @ Za + data.ratio * np.eye(Ka))
        out -= D * np.sum(np.log(np.diag(chol[0])))
        ZtX = Za.T @ X
        quad -= np.sum(ZtX * linalg.cho_solve(chol, ZtX))
    out -= 0.5 * quad / sx2
    if not np.isfinite(out):
        raise FloatingPointError("linear-Gaussian log likelihood is not finite")
    return float(out)


class ObservedBinaryData(ObservationModel):
    """The binary matrix is itself the data; only pi is inferred."""

    clamps_z = True

    def __init__(self, Z):
        self.Z = Z if isinstance(Z, FeatureMatrix) else FeatureMatrix(Z)

    def full_loglik(self, Z):
        return 0.0 if Z == self.Z else -np.inf

    def row_predictive(self, Z, n):
        raise TypeError("observed matrices have no row predictive; Z is fixed")

    def row_delta_loglik(self, Z, n, row):
        return 0.0 if np.array_equal(row, self.Z.entries[n]) else -np.inf
