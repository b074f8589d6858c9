"""Truncated restricted IBP: prior, row-sum laws and matrix probabilities.

The truncated model keeps K atoms with ``pi_k ~ Beta(alpha / K, 1)``.  Given
``pi``, an unrestricted row is a vector of independent Bernoulli(pi_k)
draws.  A restricted row first draws its number of ones ``S ~ f`` and then
places them by the conditional Bernoulli law, so that

    log P(Z | pi, f) = sum_k [m_k log pi_k + (N - m_k) log(1 - pi_k)]
                       + sum_n [log f(S_n) - log PoiBin(S_n | pi)].

Throughout, ``law=None`` means the unrestricted model.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from ribp.poibin import ConditionalBernoulli, check_probs, poibin_logpmf

# smallest atom weight we ever hand out; keeps log(pi) finite
PI_FLOOR = np.finfo(float).tiny


class FeatureMatrix:
    """Dense N x K binary matrix with cached row sums and column counts.

    Mutate only through :meth:`set_entry` and :meth:`set_row`, which keep
    the caches coherent.  ``entries`` is a read-only view.
    """

    def __init__(self, entries):
        z = np.array(entries, dtype=np.int64, copy=True)
        if z.ndim != 2:
            raise ValueError("feature matrix must be 2-d")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("feature matrix entries must be 0 or 1")
        self._z = z.astype(np.int8)
        self.row_sums = self._z.sum(axis=1).astype(np.int64)
        self.col_counts = self._z.sum(axis=0).astype(np.int64)

    @classmethod
    def zeros(cls, N, K):
        return cls(np.zeros((N, K), dtype=np.int8))

    @property
    def N(self):
        return self._z.shape[0]

    @property
    def K(self):
        return self._z.shape[1]

    @property
    def entries(self):
        view = self._z.view()
        view.flags.writeable = False
        return view

    def row(self, n):
        return self._z[n].copy()

    def set_entry(self, n, k, value):
        value = int(value)
        if value not in (0, 1):
            raise ValueError("entry must be 0 or 1")
        delta = value - int(self._z[n, k])
        if delta:
            self._z[n, k] = value
            self.row_sums[n] += delta
            self.col_counts[k] += delta

    def set_row(self, n, row):
        row = np.asarray(row)
        if row.shape != (self.K,) or not np.all((row == 0) | (row == 1)):
            raise ValueError("row must be a binary vector of length K")
        old = self._z[n].astype(np.int64)
        self._z[n] = row
        self.col_counts += row.astype(np.int64) - old
        self.row_sums[n] = int(row.sum())

    def check(self):
        """Raise AssertionError if the caches disagree with the entries."""
        assert np.array_equal(self.row_sums, self._z.sum(axis=1))
        assert np.array_equal(self.col_counts, self._z.sum(axis=0))

    def copy(self):
        return FeatureMatrix(self._z)

    def active_columns(self):
        return np.flatnonzero(self.col_counts > 0)

    def __eq__(self, other):
        return isinstance(other, FeatureMatrix) and np.array_equal(self._z, other._z)

    def __repr__(self):
        return f"FeatureMatrix(N={self.N}, K={self.K}, ones={int(self.row_sums.sum())})"


@dataclass(frozen=True)
class TruncatedBetaProcessPrior:
    alpha: float
    K: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")

    @property
    def shape(self):
        """First Beta shape parameter, alpha / K."""
        return self.alpha / self.K

    def logpdf(self, pi):
        """Sum over atoms of the Beta(alpha/K, 1) log density."""
        pi = np.asarray(pi, dtype=float)
        a = self.shape
        return float(pi.size * np.log(a) + np.sum(special.xlogy(a - 1.0, pi)))

    def sample(self, rng):
        return sample_prior_pi(self, rng)


@dataclass(frozen=True)
class RowSumLaw:
    """Distribution f over the number of ones in a row.

    ``kind`` is one of ``degenerate`` (params ``(S,)``), ``poisson``
    (``(rate,)``), ``neg_binomial`` (``(r, p)``, counting failures before
    the r-th success with success probability p, as in scipy) or ``table``
    (explicit masses over 0, 1, 2, ...).  Laws are truncated to {0..K} and
    renormalized when evaluated for a K-atom model.
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        kind, params = self.kind, tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", params)
        if kind == "degenerate":
            if len(params) != 1 or params[0] < 0 or params[0] != int(params[0]):
                raise ValueError("degenerate law needs one non-negative integer")
        elif kind == "poisson":
            if len(params) != 1 or not params[0] > 0:
                raise ValueError("poisson law needs a positive rate")
        elif kind == "neg_binomial":
            if len(params) != 2 or not params[0] > 0 or not 0 < params[1] <= 1:
                raise ValueError("neg_binomial law needs r > 0 and 0 < p <= 1")
        elif kind == "table":
            mass = np.asarray(params)
            if mass.size == 0 or np.any(mass < 0) or not mass.sum() > 0:
                raise ValueError("table law needs non-negative masses with positive total")
        else:
            raise ValueError(f"unknown row-sum law {kind!r}")

    @classmethod
    def degenerate(cls, S):
        return cls("degenerate", (int(S),))

    @classmethod
    def poisson(cls, rate):
        return cls("poisson", (rate,))

    @classmethod
    def neg_binomial(cls, r, p):
        return cls("neg_binomial", (r, p))

    @classmethod
    def table(cls, mass):
        return cls("table", tuple(mass))

    @classmethod
    def fit_poisson(cls, sums):
        sums = np.asarray(sums, dtype=float)
        return cls.poisson(max(sums.mean(), 1e-8))

    @classmethod
    def fit_neg_binomial(cls, sums):
        """Maximum-likelihood negative binomial for observed row sums.

        For fixed r the optimal p is r / (r + mean), so only r is searched.
        Falls back to a Poisson-like (very large r) fit for underdispersed
        data.
        """
        sums = np.asarray(sums, dtype=float)
        mean = sums.mean()
        if mean <= 0:
            raise ValueError("cannot fit a negative binomial to all-zero sums")

        def nll(log_r):
            r = np.exp(log_r)
            return -np.sum(stats.nbinom.logpmf(sums, r, r / (r + mean)))

        res = optimize.minimize_scalar(nll, bounds=(-10.0, 12.0), method="bounded")
        r = float(np.exp(res.x))
        return cls.neg_binomial(r, r / (r + mean))

    @property
    def is_degenerate(self):
        return self.kind == "degenerate"

    def logpmf(self, K):
        """log f(s) for s = 0..K after truncation and renormalization."""
        s = np.arange(K + 1)
        with np.errstate(divide="ignore"):
            if self.kind == "degenerate":
                S = int(self.params[0])
                if S > K:
                    raise ValueError(f"fixed row sum {S} exceeds K={K}")
                out = np.where(s == S, 0.0, -np.inf)
                return out
            if self.kind == "poisson":
                out = stats.poisson.logpmf(s, self.params[0])
            elif self.kind == "neg_binomial":
                out = stats.nbinom.logpmf(s, *self.params)
            else:
                mass = np.zeros(K + 1)
                given = np.asarray(self.params)[: K + 1]
                mass[: given.size] = given
                out = np.log(mass)
        total = special.logsumexp(out)
        if not np.isfinite(total):
            raise ValueError("row-sum law has no mass on 0..K")
        return out - total

    def pmf(self, K):
        return np.exp(self.logpmf(K))

    def support_max(self, K):
        """Largest s <= K with positive mass."""
        return int(np.flatnonzero(np.isfinite(self.logpmf(K)))[-1])

    def sample(self, K, rng, size=None):
        return rng.choice(K + 1, size=size, p=self.pmf(K))

    def to_string(self):
        if self.kind == "degenerate":
            return f"degenerate:{int(self.params[0])}"
        return self.kind + ":" + ",".join(repr(v) for v in self.params)

    @classmethod
    def from_string(cls, text):
        """Inverse of :meth:`to_string`, e.g. ``poisson:5`` or ``neg_binomial:2,0.3``."""
        kind, _, rest = text.strip().partition(":")
        params = tuple(float(v) for v in rest.split(",") if v.strip())
        if kind == "degenerate":
            params = tuple(int(v) for v in params)
        return cls(kind, params)


def sample_prior_pi(prior, rng):
    """K independent Beta(alpha/K, 1) atoms.

    Uses the inverse CDF ``u ** (K / alpha)`` on the log scale; draws that
    would underflow are floored at the smallest positive normal double.
    """
    u = rng.random(prior.K)
    with np.errstate(divide="ignore"):
        pi = np.exp(np.log(u) / prior.shape)
    return np.clip(pi, PI_FLOOR, 1.0)


def sample_unrestricted_matrix(pi, N, rng):
    pi = check_probs(pi)
    return FeatureMatrix(rng.random((N, pi.size)) < pi[None, :])


def check_feasible(law, cb):
    """Raise unless every count with positive f-mass is reachable under pi."""
    logf = law.logpmf(cb.K)
    for s in np.flatnonzero(np.isfinite(logf)):
        if not cb.feasible(int(s)):
            raise ValueError(f"row sum {s} has positive f-mass but zero probability under pi")


def sample_restricted_rows(pi, law, N, rng):
    """N rows i.i.d. from the f-restricted Bernoulli process given pi."""
    pi = check_probs(pi)
    K = pi.size
    cb = ConditionalBernoulli(pi, law.support_max(K))
    check_feasible(law, cb)
    sums = law.sample(K, rng, size=N)
    Z = FeatureMatrix.zeros(N, K)
    for n, S in enumerate(sums):
        Z.set_row(n, cb.sample(int(S), rng))
    return Z


def bernoulli_loglik(Z, pi):
    """sum_k m_k log pi_k + (N - m_k) log(1 - pi_k)."""
    m = Z.col_counts
    return float(np.sum(special.xlogy(m, pi) + special.xlog1py(Z.N - m, -pi)))


def restriction_logweight(row_sums, logf, logpoibin):
    """sum_n log f(S_n) - log PoiBin(S_n); -inf when any row is infeasible."""
    row_sums = np.asarray(row_sums)
    if row_sums.size == 0:
        return 0.0
    lf = logf[row_sums]
    lp = logpoibin[row_sums]
    if np.any(~np.isfinite(lf)) or np.any(~np.isfinite(lp)):
        return -np.inf
    return float(np.sum(lf - lp))


def restricted_matrix_logprob(Z, pi, law):
    """log P(Z | pi) under the f-restricted model (unrestricted if law is None)."""
    pi = check_probs(pi)
    if Z.K != pi.size:
        raise ValueError("matrix and profile disagree on K")
    base = bernoulli_loglik(Z, pi)
    if law is None:
        return base
    s_max = int(Z.row_sums.max()) if Z.N else 0
    logf = law.logpmf(Z.K)
    weight = restriction_logweight(Z.row_sums, logf, poibin_logpmf(pi, s_max))
    if not np.isfinite(weight) or not np.isfinite(base):
        return -np.inf
    return base + weight


def left_ordered(Z):
    """Columns sorted into left-ordered form (display only)."""
    z = np.asarray(Z.entries if isinstance(Z, FeatureMatrix) else Z)
    keys = [tuple(col) for col in z.T]
    order = sorted(range(z.shape[1]), key=lambda k: keys[k], reverse=True)
    return z[:, order]
