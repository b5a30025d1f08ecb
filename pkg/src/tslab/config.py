"""Experiment configuration as a flat ``key = value`` text file.

Example::

    # three-dimensional isotropic prior
    d = 3
    r = 1.0
    sigma = 0.5
    prior_eigenvalues = 1.0, 1.0, 1.0
    horizon = 256
    replicates = 500
    seed = 7

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Floats are written with ``repr`` so serialization round-trips exactly, and
the hash is taken over the canonical (sorted, comment-free) serialization.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .bandit import BanditConfig
from .errors import ConfigError
from .linalg import SpdMatrix, random_rotation, spd_from_eigenvalues

# Subcommand knobs that may appear in a config file; values stay strings
# until the subcommand that owns them parses them.
EXTRA_KEYS = frozenset(
    {
        "instances",
        "max_dim",
        "max_horizon",
        "max_log10_cond",
        "p_grid",
        "mala_steps",
        "mala_step_size",
        "noise",
        "noise_kappa",
        "noise_eps",
        "scales",
        "sigma_factor",
        "theorem3_c",
        "dims",
    }
)


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 2
    r: float = 1.0
    sigma: float = 1.0
    prior_eigenvalues: tuple[float, ...] | None = None
    prior_rotation_seed: int | None = None
    prior_mean: tuple[float, ...] | None = None
    horizon: int = 64
    replicates: int = 200
    seed: int = 0
    extras: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if not self.r > 0 or not self.sigma > 0:
            raise ConfigError("r and sigma must be positive")
        if self.horizon < 0 or self.replicates < 0 or self.seed < 0:
            raise ConfigError("horizon, replicates and seed must be nonnegative")
        if self.prior_eigenvalues is not None:
            if len(self.prior_eigenvalues) != self.d:
                raise ConfigError(f"prior_eigenvalues has {len(self.prior_eigenvalues)} entries, expected d={self.d}")
            if any(not x > 0 for x in self.prior_eigenvalues):
                raise ConfigError("prior_eigenvalues must be positive")
        if self.prior_mean is not None and len(self.prior_mean) != self.d:
            raise ConfigError(f"prior_mean has {len(self.prior_mean)} entries, expected d={self.d}")
        object.__setattr__(self, "extras", tuple(sorted(dict(self.extras).items())))
        for k, _ in self.extras:
            if k not in EXTRA_KEYS:
                raise ConfigError(f"unknown config key {k!r}")

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.ones(self.d) if self.prior_eigenvalues is None else np.asarray(self.prior_eigenvalues, dtype=float)

    def prior_cov(self) -> SpdMatrix:
        rot = None
        if self.prior_rotation_seed is not None:
            rot = random_rotation(self.d, rngmod.stream(self.prior_rotation_seed, 0, "config"))
        return spd_from_eigenvalues(self.eigenvalues, rot)

    def bandit(self) -> BanditConfig:
        mean = None if self.prior_mean is None else np.asarray(self.prior_mean, dtype=float)
        return BanditConfig(self.d, self.r, self.sigma, self.prior_cov(), mean)

    def extra(self, key: str, default=None):
        return dict(self.extras).get(key, default)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        extras = dict(self.extras)
        extras.update({k: v for k, v in kw.pop("extras", {}).items() if v is not None})
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, extras=tuple(extras.items()), **kw)

    def serialize(self) -> str:
        items = {
            "d": str(self.d),
            "r": repr(float(self.r)),
            "sigma": repr(float(self.sigma)),
            "horizon": str(self.horizon),
            "replicates": str(self.replicates),
            "seed": str(self.seed),
        }
        if self.prior_eigenvalues is not None:
            items["prior_eigenvalues"] = ", ".join(repr(float(x)) for x in self.prior_eigenvalues)
        if self.prior_rotation_seed is not None:
            items["prior_rotation_seed"] = str(self.prior_rotation_seed)
        if self.prior_mean is not None:
            items["prior_mean"] = ", ".join(repr(float(x)) for x in self.prior_mean)
        items.update(dict(self.extras))
        return "".join(f"{k} = {items[k]}\n" for k in sorted(items))

    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]


def _floats(key: str, value: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in value.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {value!r}") from None


def _scalar(key: str, value: str, kind):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    kw: dict = {}
    extras: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in kw or key in extras:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in ("d", "horizon", "replicates", "seed", "prior_rotation_seed"):
            kw[key] = _scalar(key, value, int)
        elif key in ("r", "sigma"):
            kw[key] = _scalar(key, value, float)
        elif key in ("prior_eigenvalues", "prior_mean"):
            kw[key] = _floats(key, value)
        elif key in EXTRA_KEYS:
            extras[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return ExperimentConfig(**kw, extras=tuple(extras.items()))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
