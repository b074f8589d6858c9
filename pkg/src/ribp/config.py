"""Experiment configuration as plain ``key=value`` text.

One parameter per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys and malformed values are errors that name the line.
:meth:`ExperimentConfig.to_text` writes every field, so parsing its
output gives back an equal config.
"""
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ribp.model import RowSumLaw

EXPERIMENTS = ("prior-sample", "synth-images", "synth-text", "exchangeability", "fit", "predict")

# laws whose parameters are estimated from training row sums
FITTED_LAWS = ("fit_neg_binomial", "fit_poisson")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "synth-images"
    seed: int = 0
    out: str = "out"
    chains: int = 1
    # model
    alpha: float = 2.0
    K: int = 100
    sigma_x: float = 0.5
    sigma_a: float = 1.0
    law: str = "degenerate:2"
    # second restricted panel of prior-sample
    f_law: str = "poisson:2"
    # prior-sample and synth-images data
    N: int = 50
    grid: int = 6
    n_features: int = 4
    features_per_image: int = 2
    noise: float = 0.5
    # sampler
    n_iterations: int = 10000
    thin: int = 10
    burn_in: int = 2000
    row_mh_period: int = 1
    pi_update_mode: str = "per_coordinate"
    poibin_method: str = "recursive"
    audit_every: int = 1000
    noiseless_iterations: int = 10000
    # synth-text
    groups: int = 5
    train_docs: int = 200
    test_docs: int = 200
    vocab: int = 500
    gen_alpha: float = 10.0
    length_law: str = "neg_binomial"
    length_r: float = 1.5
    length_mean: float = 15.0
    identical_groups: bool = False
    T: int = 1000
    tie_atoms: bool = False
    # fit and predict inputs
    data: str = ""
    queries: str = ""

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        positive = ("chains", "K", "N", "grid", "n_features", "features_per_image", "n_iterations", "thin",
                    "groups", "train_docs", "test_docs", "vocab", "T")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("alpha", "sigma_x", "sigma_a", "gen_alpha", "length_r", "length_mean"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("noise", "burn_in", "row_mh_period", "audit_every", "noiseless_iterations"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.burn_in >= self.n_iterations:
            raise ConfigError("burn_in must be smaller than n_iterations")
        if self.features_per_image > self.n_features:
            raise ConfigError("features_per_image exceeds n_features")
        if self.length_law not in ("neg_binomial", "poisson"):
            raise ConfigError(f"unknown length_law {self.length_law!r}")
        if self.pi_update_mode not in ("per_coordinate", "block"):
            raise ConfigError(f"unknown pi_update_mode {self.pi_update_mode!r}")
        if self.poibin_method not in ("recursive", "dft"):
            raise ConfigError(f"unknown poibin_method {self.poibin_method!r}")
        try:
            RowSumLaw.from_string(self.f_law)
        except ValueError as err:
            raise ConfigError(f"bad f_law {self.f_law!r}: {err}") from None
        if self.law not in ("none",) + FITTED_LAWS:
            try:
                RowSumLaw.from_string(self.law)
            except ValueError as err:
                raise ConfigError(f"bad law {self.law!r}: {err}") from None

    def row_sum_law(self):
        """The configured law, or None for the unrestricted model."""
        if self.law == "none":
            return None
        if self.law in FITTED_LAWS:
            raise ConfigError(f"law {self.law!r} is fitted from data, not fixed")
        return RowSumLaw.from_string(self.law)

    @classmethod
    def defaults(cls, experiment):
        """Defaults for one experiment; unrelated fields keep class defaults."""
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}")
        per = {
            "prior-sample": dict(alpha=5.0, K=100, N=1000, law="degenerate:3"),
            "synth-images": {},
            "synth-text": dict(law="fit_neg_binomial"),
            "exchangeability": {},
            "fit": {},
            "predict": dict(law="fit_neg_binomial", K=500),
        }
        return cls(experiment=experiment, **per[experiment])

    def with_overrides(self, **changes):
        try:
            return replace(self, **changes)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    def to_text(self):
        lines = []
        for name, value in asdict(self).items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{name}={value}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_text())


def _convert(kind, text):
    if kind is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    return kind(text)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_KINDS = {"int": int, "float": float, "str": str, "bool": bool, int: int, float: float, str: str, bool: bool}


def parse_config_text(text, base=None, source="<config>"):
    """Parse ``key=value`` lines over ``base`` (or the per-experiment defaults)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(_KINDS[_TYPES[key]], value)
        except ValueError as err:
            raise ConfigError(f"{source}:{lineno}: {key}: {err}") from None
    if base is None:
        base = ExperimentConfig.defaults(values.get("experiment", ExperimentConfig.experiment))
    try:
        return base.with_overrides(**values)
    except ConfigError as err:
        raise ConfigError(f"{source}: {err}") from None


def load_config(path, base=None):
    path = Path(path)
    return parse_config_text(path.read_text(), base, str(path))
