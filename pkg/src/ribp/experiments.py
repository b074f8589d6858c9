"""Desk-scale experiments behind the command line.

Every command takes an :class:`~ribp.config.ExperimentConfig`, writes its
files under ``config.out`` and returns a list of
:class:`~ribp.exchangeability.Check` records; the command succeeds when all
of them pass.  Random streams are derived from ``(seed, tag, chain)`` so
each piece of an experiment is reproducible on its own.  In particular
``fit`` on the data written by ``synth-images`` replays the same chains.
"""
import csv
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from ribp.config import ConfigError
from ribp.csvio import (
    CorpusSummary,
    binary_image,
    grey_image,
    read_feature_matrix,
    read_real_matrix,
    tile_images,
    write_corpus,
    write_feature_matrix,
    write_pgm,
    write_profile,
    write_real_matrix,
)
from ribp.exchangeability import Check, exchangeability_report, write_report
from ribp.inference import SamplerConfig, initial_state, run_sampler, write_trace
from ribp.likelihood import LinearGaussianData
from ribp.model import (
    RowSumLaw,
    TruncatedBetaProcessPrior,
    left_ordered,
    sample_restricted_rows,
    sample_unrestricted_matrix,
)
from ribp.predictive import predictive_logprobs, predictive_query, weighted_posterior_samples, write_query_results


def stream(seed, tag, chain=0):
    """Independent generator for one (seed, tag, chain) triple."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(tag.encode()), chain]))


def _out(config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_rows(path, header, rows):
    """CSV with a fixed header; floats written with full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _finish(config, checks):
    out = _out(config)
    config.write(out / "config.txt")
    write_report(out / "report.csv", checks)
    return checks


# ------------------------------------------------------------ prior samples


def cmd_prior_sample(config):
    """Unrestricted, fixed-S and f-restricted samples sharing one pi draw."""
    out = _out(config)
    prior = TruncatedBetaProcessPrior(config.alpha, config.K)
    fixed = config.row_sum_law()
    if fixed is None or not fixed.is_degenerate:
        raise ConfigError("prior-sample needs law=degenerate:S for its fixed-S panel")
    rng = stream(config.seed, "prior-sample")
    pi = prior.sample(rng)
    panels = {
        "unrestricted": sample_unrestricted_matrix(pi, config.N, rng),
        "fixed_s": sample_restricted_rows(pi, fixed, config.N, rng),
        "f_restricted": sample_restricted_rows(pi, RowSumLaw.from_string(config.f_law), config.N, rng),
    }
    write_profile(out / "pi.csv", pi)
    for name, Z in panels.items():
        ordered = left_ordered(Z)
        write_feature_matrix(out / f"{name}.csv", ordered)
        write_pgm(out / f"{name}.pgm", binary_image(ordered))

    S = int(fixed.params[0])
    sums = panels["fixed_s"].row_sums
    checks = [Check("fixed_s_row_sums", int(sums.min()), int(sums.max()), bool(np.all(sums == S)), f"S={S}")]
    # a single pi draw fixes the panel's mean row sum, so the prior mean is
    # checked on rows that each get their own pi draw
    marginal = np.array([sample_unrestricted_matrix(prior.sample(rng), 1, rng).row_sums[0] for _ in range(config.N)])
    mean = float(marginal.mean())
    checks.append(Check("unrestricted_mean_row_sum", mean, config.alpha, abs(mean - config.alpha) <= 0.1 * config.alpha,
                        "independent pi per row, tolerance 10%"))
    return _finish(config, checks)


# ------------------------------------------------------------ images

# four 3x3 patterns, one per quadrant of the 6x6 grid
_PATTERNS = (
    ("###", "#.#", "###"),
    (".#.", "###", ".#."),
    ("#..", "##.", "###"),
    ("#.#", ".#.", "#.#"),
)


def make_features(grid, n_features, rng):
    """Binary feature images, flattened to (n_features, grid * grid).

    The default 6x6 grid with four features uses fixed quadrant patterns;
    any other size draws distinct random patterns from ``rng``.
    """
    if grid == 6 and n_features == 4:
        feats = np.zeros((4, 6, 6))
        for k, pat in enumerate(_PATTERNS):
            r, c = 3 * (k // 2), 3 * (k % 2)
            feats[k, r:r + 3, c:c + 3] = [[ch == "#" for ch in line] for line in pat]
        return feats.reshape(4, 36)
    feats = set()
    while len(feats) < n_features:
        pat = tuple((rng.random(grid * grid) < 0.3).astype(int))
        if any(pat):
            feats.add(pat)
    return np.array(sorted(feats), dtype=float)


def make_images(config, noise, rng):
    """(X, clean images, true Z, features) for the synthetic image study."""
    feats = make_features(config.grid, config.n_features, rng)
    Z = np.zeros((config.N, config.n_features), dtype=int)
    for n in range(config.N):
        Z[n, rng.choice(config.n_features, config.features_per_image, replace=False)] = 1
    clean = Z @ feats
    X = clean + noise * rng.normal(size=clean.shape)
    return X, clean, Z, feats


@dataclass
class ChainResult:
    trace: list
    reconstruction: np.ndarray  # posterior mean of Z A over kept sweeps
    features: np.ndarray  # posterior mean weights of the best-fitting kept sample, by usage
    best_data_loglik: float
    min_row_sum: int
    max_row_sum: int
    final_z: np.ndarray
    final_pi: np.ndarray
    final_log_joint: float


def sampler_config(config, n_iterations=None):
    return SamplerConfig(
        n_iterations=n_iterations or config.n_iterations,
        thin=config.thin,
        seed=config.seed,
        row_mh_period=config.row_mh_period,
        pi_update_mode=config.pi_update_mode,
        poibin_method=config.poibin_method,
        audit_every=config.audit_every,
    )


def fit_chain(X, config, chain=0, n_iterations=None, tag="fit"):
    """One linear-Gaussian chain on X; the stream depends on the law and chain."""
    rng = stream(config.seed, f"{tag}:{config.law}", chain)
    law = config.row_sum_law()
    obs = LinearGaussianData(X, config.sigma_x, config.sigma_a)
    prior = TruncatedBetaProcessPrior(config.alpha, config.K)
    state = initial_state(prior, law, obs, X.shape[0], rng, poibin_method=config.poibin_method)
    scfg = sampler_config(config, n_iterations)
    burn_in = min(config.burn_in, scfg.n_iterations - 1)
    acc = {"recon": np.zeros_like(obs.X), "kept": 0, "lo": state.K, "hi": 0, "best": (-np.inf, None)}

    def keep(state, it):
        sums = state.Z.row_sums
        acc["lo"] = min(acc["lo"], int(sums.min()))
        acc["hi"] = max(acc["hi"], int(sums.max()))
        if it < burn_in:
            return
        A = obs.posterior_weights(state.Z)
        acc["recon"] += state.Z.entries @ A
        acc["kept"] += 1
        if state.data_loglik > acc["best"][0]:
            order = np.argsort(-state.Z.col_counts, kind="stable")
            active = order[state.Z.col_counts[order] > 0]
            acc["best"] = (state.data_loglik, A[active])

    trace = run_sampler(state, scfg, keep)
    if acc["kept"] == 0:
        keep(state, burn_in)
    return ChainResult(
        trace=trace,
        reconstruction=acc["recon"] / acc["kept"],
        features=acc["best"][1],
        best_data_loglik=acc["best"][0],
        min_row_sum=acc["lo"],
        max_row_sum=acc["hi"],
        final_z=state.Z.entries.copy(),
        final_pi=state.pi.copy(),
        final_log_joint=state.log_joint,
    )


def _fit_args(args):
    return fit_chain(*args)


def run_chains(X, config, n_iterations=None, tag="fit"):
    """``config.chains`` independent chains, in parallel processes when more than one."""
    jobs = [(X, config, c, n_iterations, tag) for c in range(config.chains)]
    if config.chains == 1:
        return [fit_chain(*jobs[0])]
    with ProcessPoolExecutor(max_workers=config.chains) as pool:
        return list(pool.map(_fit_args, jobs))


def match_score(learned, true, threshold=0.5):
    """Fraction of true binary features equal to some thresholded learned feature."""
    if learned is None or len(learned) == 0:
        return 0.0
    patterns = {tuple((np.asarray(f) > threshold).astype(int)) for f in learned}
    hits = sum(tuple(np.asarray(t).astype(int)) in patterns for t in true)
    return hits / len(true)


def _feature_strip(features, grid, lo=None, hi=None):
    if features is None or len(features) == 0:
        return np.full((grid, grid), 255)
    return tile_images([grey_image(f.reshape(grid, grid), lo, hi) for f in features])


def cmd_synth_images(config):
    """Fit the unrestricted IBP and the fixed-S model to synthetic images."""
    out = _out(config)
    law = config.row_sum_law()
    if law is None or not law.is_degenerate:
        raise ConfigError("synth-images needs law=degenerate:S for the restricted fit")
    S = int(law.params[0])
    X, clean, Ztrue, feats = make_images(config, config.noise, stream(config.seed, "synth-images:data"))
    write_real_matrix(out / "data.csv", X)
    write_real_matrix(out / "clean.csv", clean)
    write_feature_matrix(out / "z_true.csv", Ztrue)
    write_pgm(out / "features_true.pgm", _feature_strip(feats, config.grid, 0.0, 1.0))

    fits = {}
    for name, model in (("ibp", config.with_overrides(law="none")), ("ribp", config)):
        chains = run_chains(X, model)
        for c, res in enumerate(chains):
            write_trace(out / f"trace_{name}_chain{c}.csv", res.trace)
        recon = np.mean([res.reconstruction for res in chains], axis=0)
        fits[name] = (chains, recon, float(np.mean((recon - clean) ** 2)))
        write_pgm(out / f"features_{name}.pgm", _feature_strip(chains[0].features, config.grid))

    shown = min(config.N, 10)
    lo, hi = float(min(X.min(), clean.min())), float(max(X.max(), clean.max()))
    rows = [clean[:shown], X[:shown], fits["ibp"][1][:shown], fits["ribp"][1][:shown]]
    strips = [_feature_strip(r, config.grid, lo, hi) for r in rows]
    write_pgm(out / "reconstructions.pgm", np.vstack([np.vstack([s, np.full((1, s.shape[1]), 255)]) for s in strips])[:-1])

    mse_ibp, mse_ribp = fits["ibp"][2], fits["ribp"][2]
    chains = fits["ribp"][0]
    lo_sum, hi_sum = min(r.min_row_sum for r in chains), max(r.max_row_sum for r in chains)
    checks = [
        Check("ribp_row_sums", lo_sum, hi_sum, lo_sum == hi_sum == S, f"every kept rIBP row has S={S} ones"),
        Check("reconstruction_mse", mse_ribp, mse_ibp, mse_ribp <= mse_ibp, "rIBP vs IBP, against clean images"),
    ]
    if config.noiseless_iterations > 0:
        noiseless = config.with_overrides(chains=1, burn_in=0)
        Xn, _, _, featsn = make_images(config, 0.0, stream(config.seed, "synth-images:data"))
        res = fit_chain(Xn, noiseless, 0, config.noiseless_iterations, tag="noiseless")
        write_pgm(out / "features_noiseless.pgm", _feature_strip(res.features, config.grid))
        score = match_score(res.features, featsn)
        checks.append(Check("noiseless_match_score", score, 1.0, score == 1.0, "rIBP on noise-free images"))
    return _finish(config, checks)


def cmd_fit(config):
    """Linear-Gaussian fit of a real data matrix (``config.data``)."""
    if not config.data:
        raise ConfigError("fit needs data=<path to a real matrix CSV>")
    out = _out(config)
    X = read_real_matrix(config.data)
    for c, res in enumerate(run_chains(X, config)):
        write_trace(out / f"trace_chain{c}.csv", res.trace)
        write_real_matrix(out / f"reconstruction_chain{c}.csv", res.reconstruction)
        directory = out / f"chain{c}"
        directory.mkdir(exist_ok=True)
        meta = {"log_joint": repr(res.final_log_joint), "N": X.shape[0], "K": config.K}
        write_feature_matrix(directory / "z.csv", res.final_z, meta)
        write_profile(directory / "pi.csv", res.final_pi, meta)
        if config.grid * config.grid == X.shape[1]:
            write_pgm(out / f"features_chain{c}.pgm", _feature_strip(res.features, config.grid))
    return _finish(config, [])


# ------------------------------------------------------------ text


def length_law(config):
    """Zero-truncated document-length law used to generate the corpora."""
    s = np.arange(config.vocab + 1)
    if config.length_law == "neg_binomial":
        r = config.length_r
        mass = stats.nbinom.pmf(s, r, r / (r + config.length_mean))
    else:
        mass = stats.poisson.pmf(s, config.length_mean)
    mass[0] = 0.0
    return RowSumLaw.table(mass)


def make_corpus(config):
    """(train, test) corpora of ``config.groups`` groups."""
    rng = stream(config.seed, "synth-text:data")
    prior = TruncatedBetaProcessPrior(config.gen_alpha, config.vocab)
    law = length_law(config)
    shared = prior.sample(rng)
    train, test = [], []
    for g in range(config.groups):
        pi = shared if config.identical_groups else prior.sample(rng)
        Z = sample_restricted_rows(pi, law, config.train_docs + config.test_docs, rng).entries
        train.append(Z[: config.train_docs])
        test.append(Z[config.train_docs:])
    labels = lambda n: np.repeat(np.arange(config.groups), n)
    return (CorpusSummary(np.vstack(train), labels(config.train_docs)),
            CorpusSummary(np.vstack(test), labels(config.test_docs)))


def fit_row_sum_law(kind, sums):
    if kind == "fit_neg_binomial":
        return RowSumLaw.fit_neg_binomial(sums)
    if kind == "fit_poisson":
        return RowSumLaw.fit_poisson(sums)
    return RowSumLaw.from_string(kind)


def ibp_logpredictive(Z, alpha, rows):
    """Closed-form predictive of the truncated unrestricted model."""
    a = alpha / Z.K
    p = (a + Z.col_counts) / (a + Z.N + 1.0)
    rows = np.asarray(rows, dtype=float)
    return rows @ np.log(p) + (1 - rows) @ np.log1p(-p)


def correct_at_n(scores, labels):
    """Fraction of rows whose true label is among the n best, n = 1..G.

    Ties count against the true label.
    """
    own = scores[np.arange(len(labels)), labels]
    rank = np.sum(scores >= own[:, None], axis=1)
    return np.array([np.mean(rank <= n) for n in range(1, scores.shape[1] + 1)])


@dataclass
class TextResult:
    ibp: np.ndarray  # (test docs, groups) log predictive
    ribp: np.ndarray
    labels: np.ndarray
    ess: np.ndarray  # per group
    laws: list


def score_corpus(config, train, test):
    """Per-group IBP and restricted predictive scores of every test document."""
    if config.law == "none":
        raise ConfigError("synth-text needs a row-sum law for the restricted model")
    G = int(train.labels.max()) + 1
    ibp = np.empty((test.rows.shape[0], G))
    ribp = np.empty_like(ibp)
    ess, laws = np.empty(G), []
    for g in range(G):
        Z = train.group(g)
        if Z.N == 0:
            raise ConfigError(f"group {g} has no training documents")
        # alpha is the group's mean number of words per document
        alpha = max(float(Z.row_sums.mean()), 1e-3)
        ibp[:, g] = ibp_logpredictive(Z, alpha, test.rows)
        law = fit_row_sum_law(config.law, Z.row_sums)
        prior = TruncatedBetaProcessPrior(alpha, Z.K)
        samples = weighted_posterior_samples(Z, prior, law, config.T, stream(config.seed, "synth-text:is", g),
                                             config.tie_atoms)
        ribp[:, g] = predictive_logprobs(test.rows, samples, law)
        ess[g] = samples.ess
        laws.append(law)
    return TextResult(ibp, ribp, test.labels, ess, laws)


def cmd_synth_text(config):
    out = _out(config)
    train, test = make_corpus(config)
    write_corpus(out / "train.txt", train)
    write_corpus(out / "test.txt", test)
    res = score_corpus(config, train, test)
    c_ibp, c_ribp = correct_at_n(res.ibp, res.labels), correct_at_n(res.ribp, res.labels)
    write_rows(out / "correct_at_n.csv", ["n", "ibp", "ribp"],
               [[n, float(a), float(b)] for n, (a, b) in enumerate(zip(c_ibp, c_ribp), start=1)])
    write_rows(out / "groups.csv", ["group", "law", "ess", "T"],
               [[g, law.to_string(), float(e), config.T] for g, (law, e) in enumerate(zip(res.laws, res.ess))])
    own = np.arange(len(res.labels)), res.labels
    lp_ibp, lp_ribp = float(res.ibp[own].mean()), float(res.ribp[own].mean())
    checks = [
        Check("mean_log_predictive", lp_ribp, lp_ibp, lp_ribp > lp_ibp, "rIBP vs IBP, own group"),
        Check("correct_at_1", float(c_ribp[0]), float(c_ibp[0]), bool(c_ribp[0] >= c_ibp[0]), "rIBP vs IBP"),
    ]
    return _finish(config, checks)


# ------------------------------------------------------------ pass-throughs


def cmd_exchangeability(config):
    return _finish(config, exchangeability_report())


def cmd_predict(config):
    """Restricted predictive of query rows given a training matrix."""
    if not config.data or not config.queries:
        raise ConfigError("predict needs data=<training matrix> and queries=<query matrix>")
    out = _out(config)
    train = read_feature_matrix(config.data)
    queries = read_feature_matrix(config.queries)
    if queries.K != train.K:
        raise ConfigError(f"queries have {queries.K} columns but training data has {train.K}")
    law = fit_row_sum_law(config.law, train.row_sums) if config.law != "none" else None
    prior = TruncatedBetaProcessPrior(config.alpha, train.K)
    records = predictive_query(train, law, prior, queries.entries, config.T, stream(config.seed, "predict"),
                               config.tie_atoms)
    write_query_results(out / "predictions.csv", records)
    return _finish(config, [])


COMMANDS = {
    "prior-sample": cmd_prior_sample,
    "synth-images": cmd_synth_images,
    "synth-text": cmd_synth_text,
    "exchangeability": cmd_exchangeability,
    "fit": cmd_fit,
    "predict": cmd_predict,
}


def run(config):
    return COMMANDS[config.experiment](config)
