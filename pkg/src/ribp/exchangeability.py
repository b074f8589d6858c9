"""Exact checks of exchangeability on small urn schemes.

* The three-urn buffet (three Polya urns, one draw from each per step) is
  exchangeable: two-step predictives do not depend on the order.
* Restricting its *predictive* to exactly one red ball per step is not.
* Restricting the *latent* Bernoulli law instead (integrating the urn
  biases against a prior) is exchangeable again; this is checked by
  tensor quadrature.
* A gamma-process scheme restricted to one draw per step is a Chinese
  restaurant process.

The urn checks use exact rational arithmetic.
"""
import csv
import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import special

RED, BLUE = "r", "b"


# ------------------------------------------------------------ three urns


@dataclass(frozen=True)
class UrnState:
    """Red counts per urn after N steps.

    The next draw from urn i is red with probability ``m_i / (N + 1)``.
    """

    m: tuple
    N: int

    def __post_init__(self):
        if len(self.m) != 3:
            raise ValueError("the buffet has three urns")
        if self.N < 0 or any(not 0 <= c <= self.N for c in self.m):
            raise ValueError(f"red counts {self.m} must lie in [0, {self.N}]")

    def observe(self, x):
        """State after one more step with colours ``x``."""
        _check_triple(x)
        return UrnState(tuple(c + (ch == RED) for c, ch in zip(self.m, x)), self.N + 1)


def _check_triple(x):
    if len(x) != 3 or any(ch not in (RED, BLUE) for ch in x):
        raise ValueError(f"expected three colours from {{'r', 'b'}}, got {x!r}")


def all_triples():
    return ["".join(t) for t in itertools.product((RED, BLUE), repeat=3)]


def three_urn_predictive(state, x):
    """Probability that the next step shows colours ``x`` (exact)."""
    _check_triple(x)
    total = state.N + 1
    out = Fraction(1)
    for c, ch in zip(state.m, x):
        out *= Fraction(c if ch == RED else total - c, total)
    return out


def verify_pair_exchangeability_unrestricted(state, x_a, x_b):
    """(p(x_a then x_b), p(x_b then x_a), equal?) under the plain buffet."""
    p_ab = three_urn_predictive(state, x_a) * three_urn_predictive(state.observe(x_a), x_b)
    p_ba = three_urn_predictive(state, x_b) * three_urn_predictive(state.observe(x_b), x_a)
    return p_ab, p_ba, p_ab == p_ba


def _one_red(k):
    return "".join(RED if i == k else BLUE for i in range(3))


def direct_restricted_predictive(state, k):
    """Probability that the single red ball of the next step is in urn k.

    The plain predictive renormalized over the three one-red triples, which
    reduces to odds ``m_k / (N + 1 - m_k)`` normalized over urns.
    """
    odds = [Fraction(c, state.N + 1 - c) for c in state.m]
    total = sum(odds)
    if total == 0:
        raise ValueError(f"no urn can show red in state {state}")
    return odds[k] / total


def verify_direct_restriction_not_exchangeable(state, k_a, k_b):
    """(p(k_a then k_b), p(k_b then k_a), differ?) under the restricted predictive."""
    p_ab = direct_restricted_predictive(state, k_a) * direct_restricted_predictive(state.observe(_one_red(k_a)), k_b)
    p_ba = direct_restricted_predictive(state, k_b) * direct_restricted_predictive(state.observe(_one_red(k_b)), k_a)
    return p_ab, p_ba, p_ab != p_ba


def unrestricted_swap_sweep(max_N=6):
    """Count order-swap failures over every state with N <= max_N and every pair."""
    checked = failures = 0
    triples = all_triples()
    for N in range(max_N + 1):
        for m in itertools.product(range(N + 1), repeat=3):
            state = UrnState(m, N)
            for x_a, x_b in itertools.combinations(triples, 2):
                checked += 1
                failures += not verify_pair_exchangeability_unrestricted(state, x_a, x_b)[2]
    return checked, failures


def find_direct_violation(max_N=6):
    """First (state, k_a, k_b) whose two orders differ, or None."""
    for N in range(1, max_N + 1):
        for m in itertools.product(range(N + 1), repeat=3):
            state = UrnState(m, N)
            if all(c == 0 for c in m):
                continue
            for k_a, k_b in itertools.combinations(range(3), 2):
                try:
                    _, _, differ = verify_direct_restriction_not_exchangeable(state, k_a, k_b)
                except (ValueError, ZeroDivisionError):
                    continue
                if differ:
                    return state, k_a, k_b
    return None


# ------------------------------------------------- latent restriction


class QuadratureError(RuntimeError):
    """Successive refinements never agreed to the requested tolerance."""


# (geometric grading levels, Gauss-Legendre nodes per panel)
REFINEMENTS = ((6, 8), (10, 10), (14, 12), (20, 14))


def graded_rule(levels, nodes):
    """Composite Gauss-Legendre on [0, 1] with panels halving toward both ends."""
    inner = [0.5 * 2.0**-j for j in range(levels, 0, -1)]
    edges = np.unique([0.0] + inner + [0.5] + [1.0 - e for e in inner[::-1]] + [1.0])
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = edges[:-1, None], edges[1:, None]
    return (a + (b - a) * (x + 1) / 2).ravel(), ((b - a) * w / 2).ravel()


def _latent_integrals(counts, levels, nodes):
    """Integrals of prod_n P(red in urn k_n | one red, pi) over uniform pi.

    Returns the integral for the history itself followed by the three
    integrals with one more step (red in urn 0, 1, 2).  Given pi the
    restricted law puts the red ball in urn k with probability
    o_k / sum_j o_j, where o = pi / (1 - pi).
    """
    x, w = graded_rule(levels, nodes)
    logo = np.log(x) - np.log1p(-x)
    H = sum(counts)
    O2, O3 = np.meshgrid(logo, logo, indexing="ij")
    W23 = np.outer(w, w)
    out = np.zeros(4)
    for o1, w1 in zip(logo, w):
        log_total = np.logaddexp(np.logaddexp(o1, O2), O3)
        # weight of the history times one extra 1/total, so each next-step
        # integral is a plain sum and the history one multiplies back by total
        base = w1 * W23 * np.exp(counts[0] * o1 + counts[1] * O2 + counts[2] * O3 - (H + 1) * log_total)
        out[0] += np.sum(base * np.exp(log_total))
        out[1] += np.exp(o1) * np.sum(base)
        out[2] += np.sum(base * np.exp(O2))
        out[3] += np.sum(base * np.exp(O3))
    return out


@lru_cache(maxsize=256)
def _latent_predictive_counts(counts, tol):
    prev = None
    for levels, nodes in REFINEMENTS:
        ints = _latent_integrals(counts, levels, nodes)
        cur = ints[1:] / ints[0]
        if prev is not None:
            err = float(np.max(np.abs(cur - prev)))
            if err < tol:
                return tuple(cur)
        prev = cur
    raise QuadratureError(f"quadrature reached only {err:.3g} (wanted {tol:.3g})")


def latent_restricted_three_urn_predictive(history, tol=1e-8):
    """P(next red ball in urn k | history) for k = 0, 1, 2.

    Each urn bias has a uniform prior and every step is a Bernoulli triple
    conditioned on exactly one red.  ``history`` lists the red urn of each
    past step.
    """
    counts = [0, 0, 0]
    for k in history:
        if k not in (0, 1, 2):
            raise ValueError(f"history entries must be urn indices 0-2, got {k!r}")
        counts[k] += 1
    return np.array(_latent_predictive_counts(tuple(counts), tol))


def latent_two_step(history, k_a, k_b, tol=1e-8):
    """P(red in k_a, then red in k_b | history) under the latent restriction."""
    first = latent_restricted_three_urn_predictive(history, tol)[k_a]
    return first * latent_restricted_three_urn_predictive(list(history) + [k_a], tol)[k_b]


# --------------------------------------------------------------- iGaP


@dataclass(frozen=True)
class IGapState:
    """Feature counts and concentration of a gamma-process scheme."""

    m: tuple
    theta: object

    def __post_init__(self):
        if any(c < 0 for c in self.m):
            raise ValueError("feature counts must be non-negative")
        if self.theta < 0:
            raise ValueError("theta must be non-negative")


def restricted_igap_predictive(state, k):
    """Probability of seen feature ``k`` (or ``"new"``) under the one-count restriction."""
    total = sum(state.m) + state.theta
    if total == 0:
        raise ValueError("no mass on any feature")
    num = state.theta if k == "new" else state.m[k]
    return Fraction(num) / Fraction(total) if _is_exact(state) else num / total


def _is_exact(state):
    return all(isinstance(v, (int, Fraction)) for v in (*state.m, state.theta))


class ChineseRestaurant:
    """Seating by the usual rule: table k w.p. n_k / (n + theta), new w.p. theta / (n + theta)."""

    def __init__(self, theta, tables=()):
        self.theta = theta
        self.tables = list(tables)

    def prob_join(self, k):
        n = sum(self.tables)
        num = self.theta if k is None else self.tables[k]
        return Fraction(num) / (n + Fraction(self.theta))

    def seat(self, k):
        if k is None:
            self.tables.append(1)
        else:
            self.tables[k] += 1


def _same(a, b, exact):
    return a == b if exact else abs(float(a) - float(b)) <= 1e-15


def crp_equivalence_check(state, n_steps):
    """Compare both predictives on every state reachable in ``n_steps`` seatings.

    Exact equality for integer or rational inputs, 1e-15 otherwise.
    """
    exact = _is_exact(state)
    frontier = [tuple(state.m)]
    for _ in range(n_steps + 1):
        nxt = set()
        for m in frontier:
            igap = IGapState(m, state.theta)
            crp = ChineseRestaurant(state.theta, m)
            choices = list(range(len(m))) + ([None] if state.theta > 0 else [])
            for k in choices:
                if not _same(restricted_igap_predictive(igap, "new" if k is None else k), crp.prob_join(k), exact):
                    return False
            if state.theta == 0 and crp.prob_join(None) != 0:
                return False
            for k in choices:
                if k is None or m[k] > 0:
                    nxt.add(m + (1,) if k is None else m[:k] + (m[k] + 1,) + m[k + 1 :])
        frontier = sorted(nxt)
    return True


def sum_two_marginals_sequential(weights):
    """P(count vector) for two successive Polya draws over fixed atom weights."""
    weights = [Fraction(w) for w in weights]
    out = {}
    total = sum(weights)
    for a in range(len(weights)):
        p1 = weights[a] / total
        for b in range(len(weights)):
            p2 = (weights[b] + (a == b)) / (total + 1)
            n = tuple(int(i == a) + int(i == b) for i in range(len(weights)))
            out[n] = out.get(n, 0) + p1 * p2
    return out


def sum_two_marginals_dirichlet(weights):
    """Dirichlet-multinomial law of a count vector summing to two (closed form)."""
    weights = np.asarray(weights, dtype=float)
    B = weights.sum()
    out = {}
    for n in itertools.product(range(3), repeat=weights.size):
        if sum(n) != 2:
            continue
        n = np.array(n)
        logp = (
            special.gammaln(3) - special.gammaln(n + 1).sum()
            + special.gammaln(B) - special.gammaln(B + 2)
            + np.sum(special.gammaln(weights + n) - special.gammaln(weights))
        )
        out[tuple(int(v) for v in n)] = float(np.exp(logp))
    return out


# -------------------------------------------------------------- report


@dataclass
class Check:
    name: str
    value_a: float
    value_b: float
    passed: bool
    detail: str = ""


def exchangeability_report():
    """Run every check; returns a list of :class:`Check`."""
    checks = []
    state = UrnState((1, 1, 2), 2)
    p_ab, p_ba, eq = verify_pair_exchangeability_unrestricted(state, "rbr", "rrb")
    checks.append(Check("three_urn_swap_witness", float(p_ab), float(p_ba), eq and p_ab == Fraction(1, 216), "1/216"))

    checked, failures = unrestricted_swap_sweep(6)
    checks.append(Check("three_urn_swap_sweep", checked, failures, failures == 0, "states N<=6, all pairs"))

    p_ab, p_ba, differ = verify_direct_restriction_not_exchangeable(UrnState((2, 1, 0), 3), 0, 1)
    ok = differ and p_ab == Fraction(3, 28) and p_ba == Fraction(1, 8)
    checks.append(Check("direct_restriction_witness", float(p_ab), float(p_ba), ok, "3/28 vs 1/8"))

    worst = 0.0
    for history in ([], [0], [0, 0, 1], [2, 1, 0, 0]):
        for k_a, k_b in itertools.combinations(range(3), 2):
            worst = max(worst, abs(latent_two_step(history, k_a, k_b) - latent_two_step(history, k_b, k_a)))
    checks.append(Check("latent_restriction_swaps", float(worst), 1e-6, bool(worst < 1e-6), "max |p_ab - p_ba|"))

    exact = crp_equivalence_check(IGapState((3, 1), 1), 5) and crp_equivalence_check(IGapState((), Fraction(1, 2)), 5)
    checks.append(Check("igap_equals_crp", float(exact), 1.0, exact, "all states within 5 steps"))

    seq = sum_two_marginals_sequential([2, 1, 1])
    dm = sum_two_marginals_dirichlet([2, 1, 1])
    tv = 0.5 * sum(abs(float(seq[n]) - dm[n]) for n in dm)
    checks.append(Check("igap_sum_two_dirichlet", float(tv), 1e-12, bool(tv < 1e-12), "TV sequential vs closed form"))
    return checks


def write_report(path, checks):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "value_a", "value_b", "passed", "detail"])
        for c in checks:
            writer.writerow([c.name, repr(float(c.value_a)), repr(float(c.value_b)), c.passed, c.detail])
