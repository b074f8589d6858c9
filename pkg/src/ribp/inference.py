"""MCMC for the truncated restricted IBP.

Z moves:

* per-entry Gibbs when the row sum is random,
* Gibbs over the location of each active entry when it is fixed,
* independence Metropolis-Hastings on whole rows, proposing from the
  restricted prior row law so that only the likelihood ratio remains.

pi moves are Metropolis-Hastings with the conjugate unrestricted posterior
``Beta(alpha/K + m_k, N + 1 - m_k)`` as proposal.  Against the restricted
posterior this leaves ``prod_n PoiBin(S_n | pi) / PoiBin(S_n | pi')`` as
acceptance ratio; without restriction the proposal is exact.
"""
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy import special

from ribp import _kernels
from ribp.csvio import write_feature_matrix, write_profile
from ribp.model import (
    PI_FLOOR,
    FeatureMatrix,
    bernoulli_loglik,
    restricted_matrix_logprob,
    sample_restricted_rows,
    sample_unrestricted_matrix,
)
from ribp.poibin import ConditionalBernoulli, poibin_logpmf, poibin_pmf_dft


TRACE_COLUMNS = (
    "iteration",
    "log_joint",
    "accept_rate_pi",
    "accept_rate_row",
    "mean_row_sum",
    "n_active_columns",
)


class SamplerError(RuntimeError):
    """The chain reached a state with no probability mass."""


@dataclass
class SamplerConfig:
    n_iterations: int = 1000
    thin: int = 1
    seed: int = 0
    # sweeps between whole-row MH passes; 0 disables them
    row_mh_period: int = 1
    pi_update_mode: str = "per_coordinate"
    poibin_method: str = "recursive"
    scan: str = "fixed"
    update_pi: bool = True
    update_z: bool = True
    # sweeps between from-scratch log-joint audits; 0 disables them
    audit_every: int = 100
    audit_tol: float = 1e-6

    def __post_init__(self):
        if self.n_iterations < 1 or self.thin < 1:
            raise ValueError("n_iterations and thin must be at least 1")
        if self.row_mh_period < 0 or self.audit_every < 0:
            raise ValueError("periods must be non-negative")
        if self.pi_update_mode not in ("per_coordinate", "block"):
            raise ValueError(f"unknown pi_update_mode {self.pi_update_mode!r}")
        if self.poibin_method not in ("recursive", "dft"):
            raise ValueError(f"unknown poibin_method {self.poibin_method!r}")
        if self.scan not in ("fixed", "random"):
            raise ValueError(f"unknown scan {self.scan!r}")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def _safe_logs(pi):
    with np.errstate(divide="ignore"):
        return np.log(pi), np.log1p(-pi)


def _row_bernoulli(row, logpi, log1mpi):
    on = row.astype(bool)
    return float(logpi[on].sum() + log1mpi[~on].sum())


class SamplerState:
    """Current (pi, Z) of one chain plus everything cached from them.

    The log joint ``log P(Z | pi, f) + log p(pi) + log g(X | Z)`` is kept as
    four running terms so single moves can update it incrementally; use
    :meth:`audit` to compare against a from-scratch recomputation.
    """

    def __init__(self, pi, Z, law, prior, obs, rng, poibin_method="recursive"):
        self.pi = np.array(pi, dtype=float)
        self.Z = Z
        self.law = law
        self.prior = prior
        self.obs = obs
        self.rng = rng
        self.poibin_method = poibin_method
        K = self.pi.size
        if Z.K != K or prior.K != K:
            raise ValueError("pi, Z and prior disagree on K")
        if law is None:
            self.s_max = K
            self.logf = np.zeros(K + 1)
        else:
            self.s_max = law.support_max(K)
            self.logf = law.logpmf(K)
            self.law_cdf = np.cumsum(np.exp(self.logf))
            if law.is_degenerate:
                forced = int(np.sum(self.pi >= 1.0))
                if forced > self.s_max:
                    raise ValueError(f"{forced} atoms have pi = 1 but rows hold only {self.s_max} ones")
        self.accepts = {"pi": [0, 0], "row": [0, 0]}
        self.rejected_infeasible = 0
        self.refresh()
        self._terms = self._compute_terms()
        if not np.isfinite(self.log_joint):
            raise SamplerError("initial state has zero probability")

    @property
    def restricted(self):
        return self.law is not None

    @property
    def K(self):
        return self.pi.size

    def refresh(self):
        """Recompute every pi-dependent cache."""
        self.logpi, self.log1mpi = _safe_logs(self.pi)
        self.cb = ConditionalBernoulli(self.pi, self.s_max)
        if self.poibin_method == "dft":
            with np.errstate(divide="ignore"):
                self.logpoibin = np.log(poibin_pmf_dft(self.pi).mass[: self.s_max + 1])
        else:
            self.logpoibin = self.cb.logpmf.copy()
        ratio = np.full(self.K + 2, -np.inf)
        if self.restricted:
            with np.errstate(invalid="ignore"):
                r = self.logf[: self.s_max + 1] - self.logpoibin
            ratio[: self.s_max + 1] = np.where(np.isfinite(self.logpoibin), r, -np.inf)
        else:
            ratio[: self.K + 1] = 0.0
        self.rowsum_logratio = ratio

    def _restriction_term(self):
        if not self.restricted:
            return 0.0
        return float(np.sum(self.rowsum_logratio[self.Z.row_sums]))

    def _compute_terms(self):
        return {
            "bernoulli": bernoulli_loglik(self.Z, self.pi),
            "restriction": self._restriction_term(),
            "prior": self.prior.logpdf(self.pi),
            "obs": self.obs.full_loglik(self.Z),
        }

    @property
    def log_joint(self):
        return sum(self._terms.values())

    @property
    def data_loglik(self):
        """The log g(X | Z) term of the log joint."""
        return self._terms["obs"]

    def recompute_log_joint(self):
        """From scratch, sharing no cache with the incremental bookkeeping."""
        return (
            restricted_matrix_logprob(self.Z, self.pi, self.law)
            + self.prior.logpdf(self.pi)
            + self.obs.full_loglik(self.Z)
        )

    def audit(self, tol=1e-6):
        fresh = self.recompute_log_joint()
        drift = abs(fresh - self.log_joint)
        if not drift <= tol:
            raise SamplerError(f"log-joint cache drifted by {drift:.3g} (cached {self.log_joint}, fresh {fresh})")
        return drift

    def _set_row(self, n, new_row, pred, old_row):
        """Install a row and update the running log-joint terms."""
        old_S, new_S = int(old_row.sum()), int(new_row.sum())
        self._terms["bernoulli"] += _row_bernoulli(new_row, self.logpi, self.log1mpi) - _row_bernoulli(
            old_row, self.logpi, self.log1mpi
        )
        if self.restricted:
            self._terms["restriction"] += self.rowsum_logratio[new_S] - self.rowsum_logratio[old_S]
        self._terms["obs"] += pred.loglik(new_row) - pred.loglik(old_row)
        self.Z.set_row(n, new_row)

    def _pi_changed(self):
        self.refresh()
        self._terms["bernoulli"] = bernoulli_loglik(self.Z, self.pi)
        self._terms["restriction"] = self._restriction_term()
        self._terms["prior"] = self.prior.logpdf(self.pi)

    def dump(self):
        return {
            "pi": self.pi.tolist(),
            "row_sums": self.Z.row_sums.tolist(),
            "col_counts": self.Z.col_counts.tolist(),
            "terms": dict(self._terms),
        }


def initial_state(prior, law, obs, N, rng, pi=None, poibin_method="recursive"):
    """Start from pi (prior draw unless given) and Z drawn from the model."""
    if pi is None:
        pi = prior.sample(rng)
    if obs.clamps_z:
        Z = obs.Z.copy()
    elif law is None:
        Z = sample_unrestricted_matrix(pi, N, rng)
    else:
        Z = sample_restricted_rows(pi, law, N, rng)
    return SamplerState(pi, Z, law, prior, obs, rng, poibin_method)


# ---------------------------------------------------------------- Z moves


def _entry_gibbs(state, n, order, pred=None):
    if state.restricted and state.law.is_degenerate:
        raise ValueError("per-entry Gibbs cannot move under a fixed row sum; use location Gibbs")
    if pred is None:
        pred = state.obs.row_predictive(state.Z, n)
    old = state.Z.row(n)
    row = old.copy()
    u = state.rng.random(order.size)
    pos = np.full(state.K, -1, dtype=np.int64)
    pos[pred.active] = np.arange(pred.active.size)
    bad = _kernels.entry_gibbs_row(
        row,
        pred.x,
        pos,
        pred.weights,
        pred.cov,
        pred.free_var,
        pred.noise_var,
        state.logpi,
        state.log1mpi,
        state.rowsum_logratio,
        order.astype(np.int64),
        u,
    )
    if bad:
        raise SamplerError(f"row {n}: an entry had zero mass on both values")
    if not np.array_equal(row, old):
        state._set_row(n, row, pred, old)
    return state


def gibbs_entry_random_s(state, n, k):
    """Resample z_nk from its full conditional (random row sums)."""
    return _entry_gibbs(state, n, np.array([k]))


def location_log_weights(state, pred, base, candidates):
    """log[pi_k / (1 - pi_k)] + log g for moving one active entry to k."""
    with np.errstate(divide="ignore"):
        odds = state.logpi[candidates] - state.log1mpi[candidates]
    return odds + pred.loglik_add_one(base, candidates)


def _move_entry(state, n, cur, pred, u=None):
    """Gibbs step for the active entry currently in column ``cur``.

    The entry may stay or move to any inactive column.  Atoms with
    pi_k = 1 are mandatory: an active one never moves, an inactive one is
    always chosen.  Uses exactly one uniform.  Returns the entry's new
    column.
    """
    if u is None:
        u = state.rng.random()
    if state.pi[cur] >= 1.0:
        return cur
    old = state.Z.row(n)
    base = old.copy()
    base[cur] = 0
    candidates = np.flatnonzero(base == 0)
    logw = location_log_weights(state, pred, base, candidates)
    forced = candidates[logw == np.inf]
    if forced.size:
        choice = forced[int(u * forced.size)]
    else:
        top = logw.max()
        if top == -np.inf:
            raise SamplerError(f"row {n}: no admissible location for the entry in column {cur}")
        w = np.exp(logw - top)
        choice = candidates[np.searchsorted(np.cumsum(w), u * w.sum(), side="right")]
    if choice != cur:
        new = base
        new[choice] = 1
        state._set_row(n, new, pred, old)
    return int(choice)


def _location_row(state, n, pred):
    """Move every active entry of row n once, in uniformly random order.

    Entries keep their identity through the row update; visiting them in
    sorted column order instead would not leave the target invariant.
    """
    old = state.Z.row(n)
    entries = state.rng.permutation(np.flatnonzero(old))
    u = state.rng.random(entries.size)
    row = old.copy()
    pos = np.full(state.K, -1, dtype=np.int64)
    pos[pred.active] = np.arange(pred.active.size)
    with np.errstate(divide="ignore"):
        logodds = state.logpi - state.log1mpi
    stuck = _kernels.location_gibbs_row(
        row, entries.astype(np.int64), pred.x, pos, pred.weights, pred.cov,
        pred.free_var, pred.noise_var, logodds, u,
    )
    if stuck >= 0:
        raise SamplerError(f"row {n}: no admissible location for the entry in column {stuck}")
    if not np.array_equal(row, old):
        state._set_row(n, row, pred, old)
    return state


def gibbs_location_fixed_s(state, n, j, pred=None):
    """Resample the column of the j-th active entry of row n (fixed row sum).

    ``j`` counts active entries in column order.  A single call is a valid
    move only when ``j`` is chosen uniformly at random; full row updates go
    through :func:`update_row`, which keeps entry identities fixed and
    visits them in random order.
    """
    if pred is None:
        pred = state.obs.row_predictive(state.Z, n)
    active = np.flatnonzero(state.Z.row(n))
    if j >= active.size:
        raise IndexError(f"row {n} has only {active.size} active entries")
    _move_entry(state, n, int(active[j]), pred)
    return state


def propose_row(state):
    """A draw from the restricted prior row law given the current pi.

    Returns None when the drawn row sum is infeasible under pi.
    """
    rng = state.rng
    if not state.restricted:
        return (rng.random(state.K) < state.pi).astype(np.int8)
    S = int(np.searchsorted(state.law_cdf, rng.random() * state.law_cdf[-1], side="right"))
    if not state.cb.feasible(S):
        return None
    return state.cb.sample(S, rng)


def mh_row(state, n, pred=None):
    """Independence MH on row n; accepts with min(1, g(new) / g(old))."""
    if pred is None:
        pred = state.obs.row_predictive(state.Z, n)
    tally = state.accepts["row"]
    tally[1] += 1
    new = propose_row(state)
    if new is None:
        state.rejected_infeasible += 1
        return state
    old = state.Z.row(n)
    log_ratio = pred.loglik(new) - pred.loglik(old)
    if math.log(state.rng.random()) < log_ratio:
        tally[0] += 1
        if not np.array_equal(new, old):
            state._set_row(n, new, pred, old)
    return state


def update_row(state, n, config, do_row_mh):
    """All configured Z moves for one row, sharing one row predictive."""
    pred = state.obs.row_predictive(state.Z, n)
    if state.restricted and state.law.is_degenerate:
        _location_row(state, n, pred)
    else:
        order = np.arange(state.K)
        if config.scan == "random":
            order = state.rng.permutation(state.K)
        _entry_gibbs(state, n, order, pred)
    if do_row_mh:
        mh_row(state, n, pred)
    return state


# --------------------------------------------------------------- pi moves


def pi_proposal_params(state):
    a = state.prior.shape
    m = state.Z.col_counts
    return a + m, state.Z.N + 1.0 - m


def _draw_proposals(state):
    shape_a, shape_b = pi_proposal_params(state)
    return np.clip(state.rng.beta(shape_a, shape_b), PI_FLOOR, 1.0)


def pi_log_target(state, pi):
    """Unnormalized log posterior of pi given Z (Beta prior included)."""
    pi = np.asarray(pi, dtype=float)
    out = bernoulli_loglik(state.Z, pi) + state.prior.logpdf(pi)
    if state.restricted:
        s_max = int(state.Z.row_sums.max()) if state.Z.N else 0
        lp = poibin_logpmf(pi, s_max)[state.Z.row_sums]
        if np.any(~np.isfinite(lp)):
            return -np.inf
        out -= float(lp.sum())
    return out


def pi_log_proposal(state, k, value):
    a, b = pi_proposal_params(state)
    return float(special.xlogy(a[k] - 1, value) + special.xlog1py(b[k] - 1, -value) - special.betaln(a[k], b[k]))


def mh_pi_log_acceptance(state, k, value):
    """Log acceptance ratio for replacing pi_k, computed directly from PoiBin."""
    if not state.restricted:
        return 0.0
    new = state.pi.copy()
    new[k] = value
    s_max = int(state.Z.row_sums.max()) if state.Z.N else 0
    old_lp = poibin_logpmf(state.pi, s_max)[state.Z.row_sums]
    new_lp = poibin_logpmf(new, s_max)[state.Z.row_sums]
    if np.any(~np.isfinite(new_lp)):
        return -np.inf
    return float(old_lp.sum() - new_lp.sum())


def mh_pi(state, mode="per_coordinate"):
    """Metropolis-Hastings update of pi given Z."""
    proposals = _draw_proposals(state)
    log_u = np.log(state.rng.random(state.K if mode == "per_coordinate" else 1))
    tally = state.accepts["pi"]
    if mode == "per_coordinate":
        counts = np.bincount(state.Z.row_sums, minlength=state.s_max + 1).astype(np.int64)
        pi = state.pi.copy()
        accepted = _kernels.pi_coordinate_sweep(pi, proposals, log_u, state.cb.suffix, counts, state.restricted)
        tally[0] += accepted
        tally[1] += state.K
        state.pi = pi
    else:
        tally[1] += 1
        log_ratio = 0.0
        if state.restricted:
            rs = state.Z.row_sums
            new_lp = poibin_logpmf(proposals, state.s_max)[rs]
            log_ratio = -np.inf if np.any(~np.isfinite(new_lp)) else float(state.logpoibin[rs].sum() - new_lp.sum())
        if log_u[0] < log_ratio:
            tally[0] += 1
            state.pi = proposals
    state._pi_changed()
    return state


# ------------------------------------------------------------------ sweeps


def _rate(tally):
    return tally[0] / tally[1] if tally[1] else float("nan")


def sweep(state, config, iteration=0):
    """One full pass: Z rows, optional row MH, then pi.  Returns diagnostics."""
    state.accepts = {"pi": [0, 0], "row": [0, 0]}
    if config.update_z and not state.obs.clamps_z:
        rows = np.arange(state.Z.N)
        if config.scan == "random":
            rows = state.rng.permutation(state.Z.N)
        do_row_mh = config.row_mh_period > 0 and iteration % config.row_mh_period == 0
        for n in rows:
            update_row(state, int(n), config, do_row_mh)
    if config.update_pi:
        mh_pi(state, config.pi_update_mode)
    if not np.isfinite(state.log_joint):
        raise SamplerError(f"non-finite log joint at iteration {iteration}: {state.dump()}")
    if config.audit_every and (iteration + 1) % config.audit_every == 0:
        state.audit(config.audit_tol)
    return {
        "iteration": iteration,
        "log_joint": state.log_joint,
        "accept_rate_pi": _rate(state.accepts["pi"]),
        "accept_rate_row": _rate(state.accepts["row"]),
        "mean_row_sum": float(state.Z.row_sums.mean()) if state.Z.N else 0.0,
        "n_active_columns": int(state.Z.active_columns().size),
    }


def run_sampler(state, config, callback=None):
    """Run ``config.n_iterations`` sweeps; returns the thinned trace.

    ``callback(state, iteration)`` is called on every kept sweep.
    """
    trace = []
    for it in range(config.n_iterations):
        record = sweep(state, config, it)
        if (it + 1) % config.thin == 0:
            trace.append(record)
            if callback is not None:
                callback(state, it)
    return trace


def write_trace(path, trace):
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for rec in trace:
            fh.write(",".join(repr(rec[c]) if isinstance(rec[c], float) else str(rec[c]) for c in TRACE_COLUMNS) + "\n")


def read_trace(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        out = []
        for line in fh:
            vals = line.strip().split(",")
            rec = dict(zip(header, vals))
            out.append(
                {
                    "iteration": int(rec["iteration"]),
                    "log_joint": float(rec["log_joint"]),
                    "accept_rate_pi": float(rec["accept_rate_pi"]),
                    "accept_rate_row": float(rec["accept_rate_row"]),
                    "mean_row_sum": float(rec["mean_row_sum"]),
                    "n_active_columns": int(rec["n_active_columns"]),
                }
            )
    return out


def write_checkpoint(directory, state, iteration):
    """Write ``z.csv`` and ``pi.csv`` with a one-line metadata header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"iteration": iteration, "log_joint": repr(state.log_joint), "N": state.Z.N, "K": state.K}
    write_feature_matrix(directory / "z.csv", state.Z, meta)
    write_profile(directory / "pi.csv", state.pi, meta)


# ------------------------------------------------------------ exact oracle

MAX_ENUMERATION_CELLS = 20


def exact_posterior_small(pi, law, obs, N, K):
    """Exact P(Z | X, pi) over all 2^(N K) binary matrices.

    Returns ``(codes, probs)`` where ``codes[i]`` is :func:`matrix_code` of
    the i-th matrix with positive probability.
    """
    if N * K > MAX_ENUMERATION_CELLS:
        raise ValueError(f"N*K = {N * K} exceeds the enumeration cap of {MAX_ENUMERATION_CELLS}")
    pi = np.asarray(pi, dtype=float)
    codes, logps = [], []
    for code in range(2 ** (N * K)):
        bits = (code >> np.arange(N * K)) & 1
        Z = FeatureMatrix(bits.reshape(N, K))
        lp = restricted_matrix_logprob(Z, pi, law)
        if lp == -np.inf:
            continue
        lp += obs.full_loglik(Z)
        if lp == -np.inf:
            continue
        codes.append(code)
        logps.append(lp)
    logps = np.array(logps)
    probs = np.exp(logps - special.logsumexp(logps))
    return np.array(codes), probs


def matrix_code(Z):
    """Integer code of a matrix; bit n*K + k holds z_nk."""
    bits = np.asarray(Z.entries, dtype=np.int64).ravel()
    return int(bits @ (1 << np.arange(bits.size, dtype=np.int64)))


def total_variation(codes, probs, samples):
    """TV distance between an exact law and the empirical law of samples."""
    values, counts = np.unique(np.asarray(samples), return_counts=True)
    emp = dict(zip(values.tolist(), (counts / counts.sum()).tolist()))
    exact = dict(zip(np.asarray(codes).tolist(), np.asarray(probs).tolist()))
    keys = set(emp) | set(exact)
    return 0.5 * sum(abs(emp.get(c, 0.0) - exact.get(c, 0.0)) for c in keys)
