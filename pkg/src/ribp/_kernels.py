"""Compiled inner loops.

Everything here works on plain float/int arrays so the callers stay in
numpy land.  Randomness is always passed in as pre-drawn uniforms so that
results depend only on the numpy Generator that produced them.
"""
import math

import numba as nb
import numpy as np

NEG_INF = -np.inf


@nb.njit(cache=True)
def log_suffix_table(logp, log1mp, s_max):
    # table[k, s] = log P(sum_{j >= k} z_j = s)
    K = logp.shape[0]
    table = np.full((K + 1, s_max + 1), NEG_INF)
    table[K, 0] = 0.0
    for k in range(K - 1, -1, -1):
        for s in range(s_max + 1):
            a = log1mp[k] + table[k + 1, s]
            if s > 0:
                b = logp[k] + table[k + 1, s - 1]
            else:
                b = NEG_INF
            if a == NEG_INF:
                table[k, s] = b
            elif b == NEG_INF:
                table[k, s] = a
            elif a > b:
                table[k, s] = a + math.log1p(math.exp(b - a))
            else:
                table[k, s] = b + math.log1p(math.exp(a - b))
    return table


@nb.njit(cache=True)
def cond_bernoulli_draw(logp, suffix, S, u):
    K = logp.shape[0]
    row = np.zeros(K, dtype=np.int8)
    r = S
    for k in range(K):
        if r == 0:
            break
        num = logp[k] + suffix[k + 1, r - 1]
        if num == NEG_INF:
            continue
        if u[k] < math.exp(num - suffix[k, r]):
            row[k] = 1
            r -= 1
    return row


@nb.njit(cache=True)
def _row_loglik(x, mu, q, noise_var):
    D = x.shape[0]
    if D == 0:
        return 0.0
    v = noise_var * (1.0 + q)
    ss = 0.0
    for d in range(D):
        e = x[d] - mu[d]
        ss += e * e
    return -0.5 * D * math.log(v) - 0.5 * ss / v


@nb.njit(cache=True)
def entry_gibbs_row(row, x, pos, weights, cov, free_var, noise_var, logpi,
                    log1mpi, rowsum_logratio, order, u):
    """Sweep the entries of one row under the per-entry conditional.

    ``pos[k]`` is the index of column k within the active block described
    by ``weights``/``cov`` (posterior mean and noise-scaled covariance of
    the feature weights given every other row), or -1 for a free column of
    variance ``free_var``.  ``rowsum_logratio[s]`` is
    ``log f(s) - log PoiBin(s)`` (all zeros for the unrestricted model).
    Returns the number of entries whose conditional had no mass on either
    value; the row is left untouched at those entries.
    """
    K = row.shape[0]
    D = x.shape[0]
    A = cov.shape[0]
    mu = np.zeros(D)
    mz = np.zeros(A)
    S = 0
    q = 0.0
    for j in range(K):
        if row[j]:
            S += 1
            p = pos[j]
            if p < 0:
                q += free_var
                continue
            for d in range(D):
                mu[d] += weights[p, d]
            for i in range(A):
                mz[i] += cov[i, p]
    for j in range(K):
        if row[j] and pos[j] >= 0:
            q += mz[pos[j]]
    bad = 0
    mu_alt = np.empty(D)
    for t in range(order.shape[0]):
        k = order[t]
        p = pos[k]
        on = row[k] == 1
        sign = -1.0 if on else 1.0
        a = S - 1 if on else S
        if p >= 0:
            for d in range(D):
                mu_alt[d] = mu[d] + sign * weights[p, d]
            q_alt = q + sign * 2.0 * mz[p] + cov[p, p]
        else:
            for d in range(D):
                mu_alt[d] = mu[d]
            q_alt = q + sign * free_var
        ll_cur = _row_loglik(x, mu, q, noise_var)
        ll_alt = _row_loglik(x, mu_alt, q_alt, noise_var)
        if on:
            ll1, ll0 = ll_cur, ll_alt
        else:
            ll1, ll0 = ll_alt, ll_cur
        lw1 = logpi[k] + rowsum_logratio[a + 1] + ll1
        lw0 = log1mpi[k] + rowsum_logratio[a] + ll0
        if lw1 == NEG_INF and lw0 == NEG_INF:
            bad += 1
            continue
        if lw1 == NEG_INF:
            new = 0
        elif lw0 == NEG_INF:
            new = 1
        else:
            p1 = 1.0 / (1.0 + math.exp(lw0 - lw1))
            new = 1 if u[t] < p1 else 0
        if new != row[k]:
            row[k] = new
            S += 1 if new else -1
            for d in range(D):
                mu[d] = mu_alt[d]
            q = q_alt
            if p >= 0:
                for i in range(A):
                    mz[i] += sign * cov[i, p]
    return bad


@nb.njit(cache=True)
def location_gibbs_row(row, entries, x, pos, weights, cov, free_var, noise_var,
                       logodds, u):
    """Move each listed active entry of a fixed-sum row, in the given order.

    Each entry is lifted out and dropped back into any column that is then
    empty, with weight ``exp(logodds[k])`` times the row predictive.  A
    column with ``logodds = +inf`` (pi = 1) is mandatory: an active one is
    never lifted and an inactive one is always chosen.  One uniform per
    entry.  Returns -1 on success or the column of the first entry that had
    no admissible location.
    """
    K = row.shape[0]
    D = x.shape[0]
    A = cov.shape[0]
    mu = np.zeros(D)
    mz = np.zeros(A)
    q = 0.0
    for j in range(K):
        if row[j]:
            p = pos[j]
            if p < 0:
                q += free_var
                continue
            for d in range(D):
                mu[d] += weights[p, d]
            for i in range(A):
                mz[i] += cov[i, p]
    for j in range(K):
        if row[j] and pos[j] >= 0:
            q += mz[pos[j]]
    logw = np.empty(K)
    for t in range(entries.shape[0]):
        cur = entries[t]
        if logodds[cur] == np.inf:
            continue
        # lift the entry out
        p = pos[cur]
        if p >= 0:
            for d in range(D):
                mu[d] -= weights[p, d]
            q += cov[p, p] - 2.0 * mz[p]
            for i in range(A):
                mz[i] -= cov[i, p]
        else:
            q -= free_var
        row[cur] = 0
        top = NEG_INF
        n_forced = 0
        for k in range(K):
            if row[k]:
                logw[k] = NEG_INF
                continue
            if logodds[k] == np.inf:
                n_forced += 1
                logw[k] = np.inf
                continue
            pk = pos[k]
            ss = 0.0
            if pk >= 0:
                qk = q + 2.0 * mz[pk] + cov[pk, pk]
                for d in range(D):
                    e = x[d] - mu[d] - weights[pk, d]
                    ss += e * e
            else:
                qk = q + free_var
                for d in range(D):
                    e = x[d] - mu[d]
                    ss += e * e
            lw = logodds[k]
            if D > 0:
                v = noise_var * (1.0 + qk)
                lw += -0.5 * D * math.log(v) - 0.5 * ss / v
            logw[k] = lw
            if lw > top:
                top = lw
        choice = -1
        if n_forced > 0:
            target = int(u[t] * n_forced)
            for k in range(K):
                if logw[k] == np.inf:
                    if target == 0:
                        choice = k
                        break
                    target -= 1
        else:
            if top == NEG_INF:
                row[cur] = 1
                return cur
            total = 0.0
            for k in range(K):
                if logw[k] != NEG_INF:
                    total += math.exp(logw[k] - top)
            target = u[t] * total
            acc = 0.0
            for k in range(K):
                if logw[k] != NEG_INF:
                    choice = k
                    acc += math.exp(logw[k] - top)
                    if acc > target:
                        break
        # drop it back in
        row[choice] = 1
        p = pos[choice]
        if p >= 0:
            for d in range(D):
                mu[d] += weights[p, d]
            q += cov[p, p] + 2.0 * mz[p]
            for i in range(A):
                mz[i] += cov[i, p]
        else:
            q += free_var
    return -1


@nb.njit(cache=True)
def _log(x):
    return math.log(x) if x > 0.0 else NEG_INF


@nb.njit(cache=True)
def _log1m(x):
    return math.log1p(-x) if x < 1.0 else NEG_INF


@nb.njit(cache=True)
def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@nb.njit(cache=True)
def _with_atom(others, s, p):
    # log P(S = s) once an atom with success probability p joins `others`
    out = others[s] + _log1m(p)
    if s > 0:
        out = _logaddexp(out, others[s - 1] + _log(p))
    return out


@nb.njit(cache=True)
def pi_coordinate_sweep(pi, proposals, log_u, suffix, counts, restricted):
    """One ascending pass of single-atom Metropolis-Hastings updates.

    ``suffix`` is the log suffix table of the *incoming* profile; the law of
    all atoms but k is rebuilt exactly as (prefix over updated atoms 0..k-1)
    convolved with (suffix over atoms k+1..K-1), at the row sums that occur
    only.  ``counts[s]`` is the number of rows with sum s.  Without restriction the
    proposal is the exact conditional and every move is accepted.  Returns
    the acceptance count; ``pi`` is updated in place.
    """
    K = pi.shape[0]
    s_max = suffix.shape[1] - 1
    prefix = np.full(s_max + 1, NEG_INF)
    prefix[0] = 0.0
    others = np.full(s_max + 1, NEG_INF)
    need = np.zeros(s_max + 1, dtype=np.bool_)
    for s in range(s_max + 1):
        if counts[s] > 0:
            need[s] = True
            if s > 0:
                need[s - 1] = True
    accepted = 0
    for k in range(K):
        accept = True
        if restricted:
            for s in range(s_max + 1):
                if not need[s]:
                    continue
                acc = NEG_INF
                for j in range(s + 1):
                    acc = _logaddexp(acc, prefix[j] + suffix[k + 1, s - j])
                others[s] = acc
            log_ratio = 0.0
            for s in range(s_max + 1):
                if counts[s] == 0:
                    continue
                new = _with_atom(others, s, proposals[k])
                if new == NEG_INF:
                    log_ratio = NEG_INF
                    break
                log_ratio += counts[s] * (_with_atom(others, s, pi[k]) - new)
            accept = log_u[k] < log_ratio
        if accept:
            pi[k] = proposals[k]
            accepted += 1
        lp = _log(pi[k])
        l1 = _log1m(pi[k])
        for s in range(s_max, -1, -1):
            stay = prefix[s] + l1
            if s > 0:
                prefix[s] = _logaddexp(stay, prefix[s - 1] + lp)
            else:
                prefix[s] = stay
    return accepted
