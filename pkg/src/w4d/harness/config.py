"""Experiment configuration: a versioned YAML/JSON document, validated up front."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .. import shaping as sh
from ..nli.config import ConfigError, LinkConfig, WdmConfig
from ..nli.models import MODELS
from ..ssfm import SsfmConfig

SCHEMA_VERSION = 1

BASE_LEVELS = {"16QAM": 2, "64QAM": 4, "256QAM": 8}
WINDOW_POLICIES = ("spread", "fixed", "default", "effective", "sweep")
POWER_POLICIES = ("fixed", "optimize")
NORMALIZATIONS = ("memory", "per_window", "global")


@dataclass(frozen=True)
class ShapingSpec:
    """Amplitude law of each real dimension.

    Either ``probs`` (one probability per PAM level) or ``entropy`` (bits
    per amplitude, Maxwell-Boltzmann law). ``permutations`` is "identity",
    "all" or a list of permutation ids. ``iid`` replaces CCDM by i.i.d.
    draws from the target law.
    """

    base: str = "64QAM"
    probs: tuple[float, ...] | None = None
    entropy: float | None = None
    blocklengths: tuple[int, ...] = (16, 32, 64, 128, 256, 512, 1024, 10000)
    permutations: object = "identity"
    iid: bool = False

    def distribution(self, entropy: float | None = None) -> sh.Distribution1D:
        n = BASE_LEVELS[self.base]
        h = entropy if entropy is not None else self.entropy
        if h is not None:
            return sh.maxwell_boltzmann(n, h)
        if self.probs is not None:
            return sh.Distribution1D.pam(self.probs)
        return sh.Distribution1D.uniform(n)

    def permutation_list(self, dist: sh.Distribution1D) -> list[sh.PermutationAssignment]:
        if self.permutations == "identity":
            return [sh.PermutationAssignment.identity(len(dist.probs))]
        perms = sh.permutations_4d(dist)
        if self.permutations == "all":
            return perms
        return [perms[i] for i in self.permutations]


@dataclass(frozen=True)
class WindowSpec:
    """``spread``: mixture of window lengths following the dispersive spread
    along a span (moments.spread_window_weights); ``fixed``: ``value``;
    ``default``/``effective``: the whole-link / one-L_eff dispersion memory;
    ``sweep``: every entry of ``values``."""

    policy: str = "spread"
    value: int | None = None
    values: tuple[int, ...] = ()
    normalization: str = "memory"


@dataclass(frozen=True)
class PowerSpec:
    policy: str = "optimize"
    dbm: float = 0.0


@dataclass(frozen=True)
class SsfmSpec:
    enabled: bool = True
    n_symbols: int = 1 << 14
    sps: int = 16
    step: str = "phase"
    phi_max: float = 5e-4
    step_km: float = 0.1
    ase: bool = True

    def config(self, seed: int) -> SsfmConfig:
        return SsfmConfig(sps=self.sps, step=self.step, phi_max=self.phi_max,
                          step_km=self.step_km, ase=self.ase, seed=seed)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    link: LinkConfig = field(default_factory=LinkConfig)
    wdm: WdmConfig = field(default_factory=WdmConfig)
    shaping: ShapingSpec = field(default_factory=ShapingSpec)
    models: tuple[str, ...] = MODELS
    window: WindowSpec = field(default_factory=WindowSpec)
    power: PowerSpec = field(default_factory=PowerSpec)
    ssfm: SsfmSpec = field(default_factory=SsfmSpec)
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    output: str = "w4d-output"
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def hash(self) -> str:
        """Hash of everything that affects results (not output dir or worker count)."""
        d = {k: v for k, v in asdict(self).items() if k not in ("output", "workers")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "ExperimentConfig":
        return from_dict({**_plain(self.to_dict()), **kw}, env=False)


def _plain(d):
    if isinstance(d, dict):
        return {k: _plain(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_plain(v) for v in d]
    return d


_SECTIONS = {"link": LinkConfig, "wdm": WdmConfig, "shaping": ShapingSpec,
             "window": WindowSpec, "power": PowerSpec, "ssfm": SsfmSpec}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = set(cls.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kw)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def from_dict(data: dict, env: bool = True) -> ExperimentConfig:
    """Validate a parsed document. Unknown keys anywhere are rejected."""
    data = copy.deepcopy(data)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    top = set(ExperimentConfig.__dataclass_fields__)
    extra = set(data) - top
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}")
    kw = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kw[key] = _build(_SECTIONS[key], value, key)
        elif isinstance(value, list):
            kw[key] = tuple(value)
        else:
            kw[key] = value
    if env:
        if os.environ.get("W4D_OUTPUT"):
            kw["output"] = os.environ["W4D_OUTPUT"]
        if os.environ.get("W4D_WORKERS"):
            kw["workers"] = int(os.environ["W4D_WORKERS"])
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    s = cfg.shaping
    if s.base not in BASE_LEVELS:
        raise ConfigError(f"shaping.base must be one of {sorted(BASE_LEVELS)}")
    if s.probs is not None and s.entropy is not None:
        raise ConfigError("shaping: give probs or entropy, not both")
    if s.probs is not None and len(s.probs) != BASE_LEVELS[s.base]:
        raise ConfigError(f"shaping.probs needs {BASE_LEVELS[s.base]} entries for {s.base}")
    if not s.blocklengths or any(int(n) != n or n < 1 for n in s.blocklengths):
        raise ConfigError("shaping.blocklengths must be positive integers")
    if not (s.permutations in ("identity", "all") or isinstance(s.permutations, (list, tuple))):
        raise ConfigError("shaping.permutations must be identity, all or a list of ids")
    if not cfg.models:
        raise ConfigError("model list is empty")
    bad = [m for m in cfg.models if m not in MODELS]
    if bad:
        raise ConfigError(f"unknown models {bad}; choose from {list(MODELS)}")
    w = cfg.window
    if w.policy not in WINDOW_POLICIES:
        raise ConfigError(f"window.policy must be one of {WINDOW_POLICIES}")
    if w.policy == "fixed" and (w.value is None or w.value < 1):
        raise ConfigError("window.value must be a positive integer for the fixed policy")
    if w.policy == "sweep" and not w.values:
        raise ConfigError("window.values needed for the sweep policy")
    if w.normalization not in NORMALIZATIONS:
        raise ConfigError(f"window.normalization must be one of {NORMALIZATIONS}")
    if cfg.power.policy not in POWER_POLICIES:
        raise ConfigError(f"power.policy must be one of {POWER_POLICIES}")
    if not cfg.seeds:
        raise ConfigError("need at least one seed")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.ssfm.n_symbols < 16:
        raise ConfigError("ssfm.n_symbols too small")
    cfg.ssfm.config(0).check_bandwidth(cfg.wdm)


def load(path) -> ExperimentConfig:
    """Read a YAML or JSON experiment file (JSON is valid YAML)."""
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return from_dict(data)


def dump(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(_plain(cfg.to_dict()), sort_keys=True))


# presets ---------------------------------------------------------------

DESK = {
    "schema_version": SCHEMA_VERSION,
    "name": "desk",
    "link": {"n_spans": 2},
    "wdm": {"n_channels": 3},
    "shaping": {"base": "64QAM", "entropy": 1.5},
    "ssfm": {"sps": 8, "phi_max": 2.5e-3},
}

FULL = {
    "schema_version": SCHEMA_VERSION,
    "name": "full",
    "link": {"n_spans": 4},
    "wdm": {"n_channels": 9},
    "shaping": {"base": "64QAM", "entropy": 1.5},
    "ssfm": {"sps": 16, "phi_max": 5e-4, "n_symbols": 1 << 16},
}

PRESETS = {"desk": DESK, "full": FULL}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    data = copy.deepcopy(PRESETS[name])
    data.update(overrides)
    return from_dict(data)
