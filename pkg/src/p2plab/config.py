"""INI-style experiment configuration."""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .cachesim import CacheConfig

SEED_ENV = "P2PLAB_SEED"
MODES = ("photons", "dbim")
GENERATORS = ("uniform", "plummer")


class ConfigError(ValueError):
    """Invalid or incomplete configuration (a usage error)."""


def _ints(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from e


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _opt_int(text: str, none_words=("inf", "none", "full", "unbounded")):
    v = text.strip().lower()
    if v in none_words:
        return None
    try:
        return int(float(v)) if "e" in v else int(v)
    except ValueError as e:
        raise ConfigError(f"expected an integer or one of {none_words}, got {text!r}") from e


def parse_seed(text) -> int:
    try:
        s = int(str(text).strip(), 0)
    except ValueError as e:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {text!r}") from e
    if not 0 <= s < 2**64:
        raise ConfigError(f"seed {s} outside the unsigned 64-bit range")
    return s


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "photons"
    generator: str = "plummer"
    N: int = 20000
    dim: int = 3
    t: tuple = (2, 4, 8, 16, 32, 64)
    L: tuple = ()
    rf: int = 2
    batch_size: int = 20000
    partitions: int = 4
    repetitions: int = 3
    iterations: int = 20
    jitter: float = 1e-3
    n_seeds: int = 1
    periodic: bool = True
    softening: float = 1e-3
    trace_limit: int = 30_000_000
    cache: CacheConfig = field(default_factory=CacheConfig)
    variant: str = "column"
    regime: str = "auto"
    calibration: float = 1.0
    verbatim: bool = False
    seed: int | None = None
    out: str = "out"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.generator not in GENERATORS:
            raise ConfigError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.N < 1:
            raise ConfigError(f"N must be positive, got {self.N}")
        if self.mode == "photons" and not self.t:
            raise ConfigError("t sweep list is empty")
        if self.mode == "dbim" and not (self.t or self.L):
            raise ConfigError("dbim mode needs a t or L sweep list")
        for name in ("rf", "batch_size", "partitions", "repetitions", "iterations", "n_seeds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(v < 1 for v in self.t):
            raise ConfigError(f"t values must be >= 1, got {self.t}")
        if self.variant not in ("printed", "column"):
            raise ConfigError(f"variant must be printed or column, got {self.variant!r}")
        if self.regime not in ("auto", "fits", "spills"):
            raise ConfigError(f"regime must be auto, fits or spills, got {self.regime!r}")

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError(f"a seed is required: pass --seed, set {SEED_ENV}, or add seed = ... to [experiment]")
        return self.seed

    @property
    def seeds(self) -> list:
        s = self.require_seed()
        return [(s + k) % 2**64 for k in range(self.n_seeds)]

    def sweep(self) -> list:
        """(L, t) points.  Photons mode has no level, so L is 0."""
        if self.mode == "photons":
            return [(0, t) for t in self.t]
        pts = []
        if self.L:
            for L in self.L:
                t = self.N // 4 ** L
                if t * 4 ** L != self.N:
                    raise ConfigError(f"N = {self.N} is not 4^{L} times an integer")
                pts.append((L, t))
        else:
            for t in self.t:
                L = round(math.log(self.N / t, 4))
                if 4 ** L * t != self.N:
                    raise ConfigError(f"N = {self.N} is not 4^L * {t} for any integer L")
                pts.append((L, t))
        return pts


_EXPERIMENT_KEYS = {
    "mode": str, "generator": str, "n": int, "dim": int, "t": _ints, "l": _ints, "rf": int,
    "batch_size": int, "partitions": int, "repetitions": int, "iterations": int,
    "jitter": float, "seeds": int, "periodic": _bool, "softening": float,
    "trace_limit": int, "seed": parse_seed, "out": str,
}
_RENAME = {"n": "N", "l": "L", "seeds": "n_seeds"}
_MODEL_KEYS = {"variant": str, "regime": str, "calibration": float, "verbatim": _bool}
_CACHE_KEYS = {"capacity": _opt_int, "line": int, "ways": _opt_int, "group": int, "coalesce": _bool}


def _section(cp, name, keys, rename=None):
    out = {}
    if not cp.has_section(name):
        return out
    for k, v in cp.items(name):
        if k not in keys:
            raise ConfigError(f"unknown key {k!r} in [{name}]")
        try:
            out[(rename or {}).get(k, k)] = keys[k](v)
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"bad value for {k} in [{name}]: {v!r}") from e
    return out


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    unknown = set(cp.sections()) - {"experiment", "cache", "model"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kw = _section(cp, "experiment", _EXPERIMENT_KEYS, _RENAME)
    kw.update(_section(cp, "model", _MODEL_KEYS))
    cache_kw = _section(cp, "cache", _CACHE_KEYS)
    try:
        kw["cache"] = CacheConfig(**cache_kw)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return ExperimentConfig(**kw)


def load_config(path: str | os.PathLike | None = None, seed=None, out=None,
                env: dict | None = None) -> ExperimentConfig:
    """Read a config file (or defaults), then apply the seed override chain.

    Precedence: explicit ``seed`` > ``P2PLAB_SEED`` > the file's ``seed`` key.
    """
    if path is None:
        cfg = ExperimentConfig()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg = parse_config(p.read_text(encoding="utf-8"))
    env = os.environ if env is None else env
    if seed is not None:
        cfg = replace(cfg, seed=parse_seed(seed))
    elif env.get(SEED_ENV):
        cfg = replace(cfg, seed=parse_seed(env[SEED_ENV]))
    if out is not None:
        cfg = replace(cfg, out=str(out))
    return cfg


EXAMPLE = """\
[experiment]
mode = photons
generator = plummer
N = 20000
dim = 3
t = 2, 4, 8, 16, 32, 64
partitions = 4
batch_size = 20000
repetitions = 3
iterations = 20
jitter = 0.001
periodic = true
seed = 1

[cache]
capacity = 2097152
line = 128
ways = 16
group = 32

[model]
variant = column
regime = auto
calibration = 1.0
"""
