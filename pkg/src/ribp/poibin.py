"""Poisson-binomial distribution and the conditional Bernoulli law.

The Poisson-binomial is the law of the number of successes among independent
Bernoulli(p_k) trials.  The conditional Bernoulli is the law of *which*
trials succeeded given how many did.  Every restricted-model probability in
this package reduces to these two objects.

Success probabilities may be exactly 0 or 1; the support of both laws then
shrinks accordingly and infeasible counts get probability zero (``-inf`` on
the log scale).
"""
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ribp import _kernels

__all__ = [
    "PoiBinPMF",
    "ConditionalBernoulli",
    "check_probs",
    "poibin_pmf_recursive",
    "poibin_pmf_dft",
    "poibin_pmf_skew_normal",
    "poibin_logpmf",
    "cond_bernoulli_logprob",
    "cond_bernoulli_sample",
]


@dataclass(frozen=True)
class PoiBinPMF:
    """Mass function of the success count; ``mass[s]`` is P(S = s)."""

    mass: np.ndarray
    method: str

    def __len__(self):
        return len(self.mass)

    def __getitem__(self, s):
        return self.mass[s]


def check_probs(p):
    """Validate a profile of success probabilities and return it as floats."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probabilities must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return p


def _check_row(z, K):
    z = np.asarray(z)
    if z.shape != (K,):
        raise ValueError(f"row has shape {z.shape}, expected ({K},)")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("row entries must be 0 or 1")
    return z.astype(np.int8)


def poibin_pmf_recursive(p, s_max=None):
    """Exact mass function for s = 0..s_max by the prefix recursion.

    Cost is O(K * s_max).  The recursion only ever forms convex
    combinations of numbers in [0, 1], so it is run in linear space.
    """
    p = check_probs(p)
    K = p.size
    if s_max is None:
        s_max = K
    if not 0 <= s_max <= K:
        raise ValueError(f"s_max={s_max} outside [0, {K}]")
    mass = np.zeros(s_max + 1)
    mass[0] = 1.0
    for pk in p:
        mass[1:] = mass[1:] * (1.0 - pk) + mass[:-1] * pk
        mass[0] *= 1.0 - pk
    return PoiBinPMF(mass, "recursive")


def poibin_pmf_dft(p):
    """Exact mass function from the characteristic function.

    The characteristic function is evaluated at the K+1 roots of unity and
    inverted with an FFT.
    """
    p = check_probs(p)
    K = p.size
    omega = np.exp(2j * np.pi * np.arange(K + 1) / (K + 1))
    phi = np.prod(1.0 - p[None, :] + p[None, :] * omega[:, None], axis=1)
    mass = np.fft.fft(phi).real / (K + 1)
    mass = np.clip(mass, 0.0, None)
    return PoiBinPMF(mass, "dft")


def poibin_pmf_skew_normal(p, s):
    """Approximate P(S = s) by a moment-matched skew normal.

    Mean, variance and third central moment of the Poisson-binomial are
    matched, and the mass is the skew-normal probability of
    ``[s - 1/2, s + 1/2]``.  This is an approximation and never used where
    exact values are required.
    """
    p = check_probs(p)
    K = p.size
    if not 0 <= s <= K:
        raise ValueError(f"s={s} outside [0, {K}]")
    mean = p.sum()
    var = np.sum(p * (1.0 - p))
    if var <= 0.0:
        # every trial is deterministic
        return 1.0 if s == int(round(mean)) else 0.0
    third = np.sum(p * (1.0 - p) * (1.0 - 2.0 * p))
    skew = third / var**1.5
    # largest skewness a skew normal can reach
    max_skew = 0.5 * (4.0 - np.pi) * (2.0 / (np.pi - 2.0)) ** 1.5
    skew = np.clip(skew, -0.99 * max_skew, 0.99 * max_skew)
    g = abs(skew) ** (2.0 / 3.0)
    delta = np.sign(skew) * np.sqrt(0.5 * np.pi * g / (g + (0.5 * (4.0 - np.pi)) ** (2.0 / 3.0)))
    shape = delta / np.sqrt(1.0 - delta**2)
    scale = np.sqrt(var / (1.0 - 2.0 * delta**2 / np.pi))
    loc = mean - scale * delta * np.sqrt(2.0 / np.pi)
    dist = stats.skewnorm(shape, loc=loc, scale=scale)
    return float(dist.cdf(s + 0.5) - dist.cdf(s - 0.5))


def poibin_logpmf(p, s_max=None):
    """Log mass function for s = 0..s_max, computed entirely in log space.

    ``p`` may be a (T, K) batch of profiles, in which case the result has
    shape (T, s_max + 1).  Use this instead of the linear-space recursion
    whenever tail masses can underflow.
    """
    p = np.asarray(p, dtype=float)
    batch = p.ndim == 2
    p = np.atleast_2d(p)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    T, K = p.shape
    if s_max is None:
        s_max = K
    if not 0 <= s_max <= K:
        raise ValueError(f"s_max={s_max} outside [0, {K}]")
    with np.errstate(divide="ignore"):
        logp = np.log(p)
        log1mp = np.log1p(-p)
    out = np.full((T, s_max + 1), -np.inf)
    out[:, 0] = 0.0
    for k in range(K):
        stay = out + log1mp[:, k : k + 1]
        move = out[:, :-1] + logp[:, k : k + 1]
        out[:, 1:] = np.logaddexp(stay[:, 1:], move)
        out[:, 0] = stay[:, 0]
    return out if batch else out[0]


class ConditionalBernoulli:
    """Conditional Bernoulli law for a fixed profile, with cached tables.

    Holds ``log P(sum_{j >= k} z_j = s)`` for every suffix k and every
    s <= s_max.  Row 0 of that table is the Poisson-binomial log mass
    function, so the object doubles as a PoiBin cache.  Building costs
    O(K * s_max); each draw costs O(K).
    """

    def __init__(self, p, s_max=None):
        self.p = check_probs(p)
        self.K = self.p.size
        if s_max is None:
            s_max = self.K
        if not 0 <= s_max <= self.K:
            raise ValueError(f"s_max={s_max} outside [0, {self.K}]")
        self.s_max = int(s_max)
        with np.errstate(divide="ignore"):
            self.logp = np.log(self.p)
            self.log1mp = np.log1p(-self.p)
        self.suffix = _kernels.log_suffix_table(self.logp, self.log1mp, self.s_max)

    @property
    def logpmf(self):
        return self.suffix[0]

    def feasible(self, S):
        return 0 <= S <= self.s_max and np.isfinite(self.suffix[0, S])

    def _require(self, S):
        if not 0 <= S <= self.s_max:
            raise ValueError(f"row sum {S} outside [0, {self.s_max}]")
        if not np.isfinite(self.suffix[0, S]):
            raise ValueError(f"row sum {S} has zero probability under this profile")

    def sample(self, S, rng):
        """Draw a row with exactly ``S`` ones."""
        S = int(S)
        self._require(S)
        u = rng.random(self.K)
        return _kernels.cond_bernoulli_draw(self.logp, self.suffix, S, u)

    def logprob(self, z):
        z = _check_row(z, self.K)
        S = int(z.sum())
        if S > self.s_max:
            raise ValueError(f"row sum {S} exceeds the cached s_max={self.s_max}")
        logpoibin = self.suffix[0, S]
        if not np.isfinite(logpoibin):
            return -np.inf
        bern = np.sum(special.xlogy(z, self.p) + special.xlog1py(1 - z, -self.p))
        return float(bern - logpoibin)


def cond_bernoulli_logprob(p, z):
    """log P(z | sum z = S) under independent Bernoulli(p_k) trials.

    Returns ``-inf`` when the observed count is impossible under ``p``.
    """
    p = check_probs(p)
    z = _check_row(z, p.size)
    return ConditionalBernoulli(p, int(z.sum())).logprob(z)


def cond_bernoulli_sample(p, S, rng):
    """Draw a binary row with exactly ``S`` ones from the conditional law."""
    return ConditionalBernoulli(p, S).sample(S, rng)
