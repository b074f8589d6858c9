"""Predictive probabilities of new rows under the restricted model.

The posterior over pi given an observed restricted matrix has no closed
form, but the unrestricted one does: each atom is
``Beta(alpha/K + m_k, N + 1 - m_k)``.  Drawing from it and reweighting by

    w(pi) = prod_n f(S_n) / PoiBin(S_n | pi)

(the Bernoulli factors cancel) gives a self-normalized importance sampler
for any expectation under the restricted posterior.  Weights live in log
space throughout.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy import special

from ribp.model import PI_FLOOR, FeatureMatrix
from ribp.poibin import poibin_logpmf


class EstimationError(ValueError):
    """Every importance weight is zero."""


@dataclass(frozen=True)
class WeightedPiSample:
    pi: np.ndarray
    log_weight: float


@dataclass(frozen=True)
class WeightedPiSamples:
    """T profiles (T, K) with their log importance weights (T,)."""

    pi: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        if self.pi.ndim != 2 or self.log_weights.shape != (self.pi.shape[0],):
            raise ValueError("need a (T, K) profile array and T log weights")
        if np.any(np.isnan(self.log_weights)) or np.any(self.log_weights == np.inf):
            raise ValueError("log weights must be finite or -inf")

    def __len__(self):
        return self.pi.shape[0]

    def __getitem__(self, t):
        return WeightedPiSample(self.pi[t], float(self.log_weights[t]))

    @property
    def ess(self):
        return effective_sample_size_log(self.log_weights)


def _as_matrix(Z):
    return Z if isinstance(Z, FeatureMatrix) else FeatureMatrix(Z)


def sample_unrestricted_posterior_pi(Z, prior, T, rng, tie_atoms=False):
    """T independent draws from the conjugate posterior of the unrestricted model.

    With ``tie_atoms`` every group of columns with the same count m_k shares
    one draw per sample.  Their posteriors are identical, and tying removes
    most of the weight variance coming from the many unseen columns.
    """
    Z = _as_matrix(Z)
    if Z.K != prior.K:
        raise ValueError(f"Z has {Z.K} columns but the prior has K={prior.K}")
    m = Z.col_counts
    if tie_atoms:
        levels, index = np.unique(m, return_inverse=True)
        draws = rng.beta(prior.shape + levels, Z.N + 1.0 - levels, size=(T, levels.size))[:, index]
    else:
        draws = rng.beta(prior.shape + m, Z.N + 1.0 - m, size=(T, Z.K))
    return np.maximum(draws, PI_FLOOR)


def importance_log_weights(pi, Z, law):
    """``sum_n log f(S_n) - log PoiBin(S_n | pi)`` for each row of ``pi``.

    ``law=None`` (no restriction) gives zero weights.  Infeasible rows
    give ``-inf``.
    """
    Z = _as_matrix(Z)
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    if pi.shape[1] != Z.K:
        raise ValueError(f"profiles have {pi.shape[1]} atoms but Z has {Z.K} columns")
    out = np.zeros(pi.shape[0])
    if law is None or Z.N == 0:
        return out
    logf = law.logpmf(Z.K)
    sums = Z.row_sums
    if np.any(logf[sums] == -np.inf):
        return np.full(pi.shape[0], -np.inf)
    counts = np.bincount(sums)
    used = np.flatnonzero(counts)
    logpb = poibin_logpmf(pi, int(used[-1]))[:, used]
    with np.errstate(invalid="ignore"):
        out = counts[used] @ logf[used] - logpb @ counts[used]
    return np.where(np.all(np.isfinite(logpb), axis=1), out, -np.inf)


def importance_log_weight(pi, Z, law):
    """Log importance weight of a single profile."""
    return float(importance_log_weights(np.asarray(pi, dtype=float)[None, :], Z, law)[0])


def weighted_posterior_samples(Z, prior, law, T, rng, tie_atoms=False):
    pi = sample_unrestricted_posterior_pi(Z, prior, T, rng, tie_atoms)
    return WeightedPiSamples(pi, importance_log_weights(pi, Z, law))


def _row_logmass(rows, pi, law):
    """log mu_pi^{|f}(z) for each row (B, K) and profile (T, K): shape (B, T)."""
    K = pi.shape[1]
    with np.errstate(divide="ignore"):
        logpi, log1mpi = np.log(pi), np.log1p(-pi)
    # 0 * log(0) is zero, so infinite logs only matter where they are hit
    bern = rows @ np.where(pi > 0, logpi, 0.0).T + (1 - rows) @ np.where(pi < 1, log1mpi, 0.0).T
    impossible = (rows @ (pi == 0).T + (1 - rows) @ (pi == 1).T) > 0
    bern[impossible] = -np.inf
    if law is None:
        return bern
    sums = rows.sum(axis=1).astype(int)
    logf = law.logpmf(K)
    logpb = poibin_logpmf(pi, int(sums.max()))[:, sums].T
    with np.errstate(invalid="ignore"):
        out = logf[sums][:, None] + bern - logpb
    return np.where(np.isfinite(logpb) & (logf[sums][:, None] > -np.inf), out, -np.inf)


def predictive_logprobs(rows, samples, law):
    """Self-normalized log predictive of each new row in ``rows`` (B, K)."""
    rows = np.atleast_2d(np.asarray(rows))
    if rows.shape[1] != samples.pi.shape[1]:
        raise ValueError("query rows and profiles disagree on K")
    if not np.all((rows == 0) | (rows == 1)):
        raise ValueError("query rows must be binary")
    lw = samples.log_weights
    if not np.any(np.isfinite(lw)):
        raise EstimationError("all importance weights are zero")
    logmass = _row_logmass(rows.astype(float), samples.pi, law)
    with np.errstate(invalid="ignore"):
        return special.logsumexp(logmass + lw, axis=1) - special.logsumexp(lw)


def predictive_logprob(z_new, samples, law):
    """log of sum_t w_t mu_{pi_t}^{|f}(z_new) / sum_t w_t."""
    return float(predictive_logprobs(np.asarray(z_new)[None, :], samples, law)[0])


def effective_sample_size(weights):
    """(sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("weights must be a non-empty non-negative array")
    total = w.sum()
    if total == 0:
        return 0.0
    return float(total**2 / np.sum(w * w))


def effective_sample_size_log(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        return 0.0
    return effective_sample_size(np.exp(lw - lw.max()))


def predictive_query(train, law, prior, queries, T, rng, tie_atoms=False):
    """Log predictive and ESS for each query row, as plain records."""
    samples = weighted_posterior_samples(train, prior, law, T, rng, tie_atoms)
    logp = predictive_logprobs(queries, samples, law)
    ess = samples.ess
    return [{"query": i, "log_prob": float(v), "ess": ess} for i, v in enumerate(logp)]


def write_query_results(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["query", "log_prob", "ess"])
        writer.writeheader()
        for rec in records:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
