"""Flat ``key = value`` experiment configuration files."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .datasets import TargetSpec, gaussian_mixture, isotropic_gaussian, point_cloud, ring
from .errors import ConfigurationError
from .schedule import linear_schedule

EXPERIMENTS = ("converge", "memorize", "trajectory-compare", "partial-recover",
               "mi-bound", "gaussian-example")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    out: str = ""
    # schedule
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    steps: int = 50
    # target; vectors are comma separated, lists of vectors ';' separated
    target: str = "isotropic-gaussian"
    d: int = 2
    mean: str = ""
    sigma: float = 1.0
    means: str = ""
    sigmas: str = ""
    weights: str = ""
    ring_radius: float = 1.0
    ring_jitter: float = 0.05
    dataset: str = ""
    dataset_format: str = "csv"
    heldout: str = ""
    # sizes
    n: int = 64
    n_list: str = "100,1000,10000"
    repeats: int = 3
    count: int = 256
    probes: int = 256
    t_fracs: str = "0.25,0.5,0.75"
    # predictors / samplers
    predictor: str = "eps"
    grid: str = "sampled"
    J: int = 8
    method: str = "ddim"
    start_step: str = "matched"
    tau_frac: float = 0.05
    R: float = -1.0
    # gaussian example
    pairs: str = "1:1,2:100,5:1000"
    trials: int = 10000
    # contracts
    min_memorized_fraction: float = 0.95
    require_ddpm_lower: bool = False
    min_nondecreasing_fraction: float = 0.8
    require_asymmetry: bool = True
    max_abs_z: float = 5.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.seed is None or int(self.seed) < 0:
            raise ConfigurationError("a non-negative seed is mandatory")
        if self.predictor not in ("eps", "xi"):
            raise ConfigurationError(f"predictor must be 'eps' or 'xi', got {self.predictor!r}")
        if self.start_step != "matched" and not str(self.start_step).isdigit():
            raise ConfigurationError(f"start_step must be 'matched' or a step number, got {self.start_step!r}")
        if self.grid not in ("sampled", "zero"):
            raise ConfigurationError(f"grid must be 'sampled' or 'zero', got {self.grid!r}")

    # ------------------------------------------------------------------

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in mapping.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            kw[key] = _convert(known[key].type, raw, key)
        if "experiment" not in kw or "seed" not in kw:
            raise ConfigurationError("config needs both 'experiment' and 'seed'")
        return cls(**kw)

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = ("true" if v else "false") if isinstance(v, bool) else str(v)
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        m = self.to_mapping()
        m.update({k: str(v) for k, v in changes.items()})
        return ExperimentConfig.from_mapping(m)

    # ------------------------------------------------------------------

    def schedule(self):
        return linear_schedule(self.T, self.beta_start, self.beta_end)

    def target_spec(self) -> TargetSpec:
        kind = self.target
        if kind in ("isotropic-gaussian", "gaussian"):
            mean = _vector(self.mean) if self.mean else np.zeros(self.d)
            return isotropic_gaussian(mean, self.sigma)
        if kind in ("gaussian-mixture", "mixture"):
            means = _vectors(self.means)
            sig = _vector(self.sigmas) if self.sigmas else self.sigma
            w = _vector(self.weights) if self.weights else None
            return gaussian_mixture(means, sig, w)
        if kind == "point-cloud":
            return point_cloud(_vectors(self.means))
        if kind == "ring":
            return ring(self.ring_radius, self.ring_jitter, self.d)
        raise ConfigurationError(f"unknown target {kind!r}")

    def int_list(self, text: str) -> list[int]:
        return [int(float(v)) for v in text.split(",") if v.strip()]

    def float_list(self, text: str) -> list[float]:
        return [float(v) for v in text.split(",") if v.strip()]


def _convert(typ, raw, key):
    typ = typ if isinstance(typ, str) else typ.__name__
    raw = str(raw).strip()
    try:
        if typ == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: cannot read {raw!r} as {typ}") from None
    return raw


def _vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip()])


def _vectors(text: str) -> np.ndarray:
    rows = [_vector(r) for r in text.split(";") if r.strip()]
    if not rows:
        raise ConfigurationError("expected ';'-separated vectors")
    return np.stack(rows)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path) as fh:
        mapping = parse_config_text(fh.read())
    if overrides:
        mapping.update(overrides)
    return ExperimentConfig.from_mapping(mapping)
