"""Training sets, synthetic targets and file I/O."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigurationError, FormatError

TARGET_KINDS = ("isotropic-gaussian", "gaussian-mixture", "ring", "point-cloud")
CIFAR_RECORD = 3073
CIFAR_PIXELS = 3072


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` training points in ``R^d`` with support radius ``max_i |x_i|``."""

    points: np.ndarray
    radius: float = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ConfigurationError(f"dataset must be a non-empty n x d matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("dataset contains non-finite entries")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radius", _max_row_norm(pts))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n


def _max_row_norm(pts: np.ndarray) -> float:
    # rescale first so squares neither overflow nor flush to zero
    scale = float(np.max(np.abs(pts)))
    if scale == 0.0:
        return 0.0
    return scale * float(np.max(np.linalg.norm(pts / scale, axis=1)))


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """A target distribution.

    ``isotropic-gaussian`` and ``gaussian-mixture`` use ``means`` (K x d),
    ``scales`` (K) and ``weights`` (K).  ``point-cloud`` is the uniform
    distribution over ``means`` (scales are zero).  ``ring`` places mass on a
    circle of radius ``scales[0]`` in the first two coordinates with Gaussian
    jitter ``scales[1]``; it has no closed-form noised density.
    """

    kind: str
    means: np.ndarray
    scales: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigurationError(f"unknown target kind {self.kind!r}; expected one of {TARGET_KINDS}")
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        scales = np.atleast_1d(np.asarray(self.scales, dtype=np.float64))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if self.kind == "ring":
            if scales.size != 2 or scales[0] <= 0 or scales[1] < 0 or means.shape[1] < 2:
                raise ConfigurationError("ring needs scales=(radius>0, jitter>=0) and d >= 2")
        else:
            K = means.shape[0]
            if scales.shape != (K,) or weights.shape != (K,):
                raise ConfigurationError("means, scales and weights disagree on component count")
            if self.kind == "point-cloud":
                if np.any(scales != 0):
                    raise ConfigurationError("point-cloud components have zero scale")
            elif np.any(scales <= 0):
                raise ConfigurationError("component scales must be positive")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
                raise ConfigurationError("mixture weights must be a probability vector")
            if self.kind == "isotropic-gaussian" and K != 1:
                raise ConfigurationError("isotropic-gaussian has exactly one component")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(scales))):
            raise ConfigurationError("target parameters must be finite")
        for name, val in (("means", means), ("scales", scales), ("weights", weights)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def analytic(self) -> bool:
        return self.kind != "ring"


def isotropic_gaussian(mean, sigma: float = 1.0) -> TargetSpec:
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    return TargetSpec("isotropic-gaussian", mean[None, :], [sigma], [1.0])


def gaussian_mixture(means, sigmas, weights=None) -> TargetSpec:
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    K = means.shape[0]
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=np.float64), (K,))
    if weights is None:
        weights = np.full(K, 1.0 / K)
    return TargetSpec("gaussian-mixture", means, sigmas, weights)


def point_cloud(points) -> TargetSpec:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    return TargetSpec("point-cloud", pts, np.zeros(n), np.full(n, 1.0 / n))


def ring(radius: float = 1.0, jitter: float = 0.05, d: int = 2) -> TargetSpec:
    return TargetSpec("ring", np.zeros((1, d)), [radius, jitter], [1.0])


def sample_dataset(spec: TargetSpec, n: int, seed: int) -> Dataset:
    """``n`` i.i.d. draws from ``spec``; a point cloud of exactly ``n`` points
    is returned as-is."""
    if int(n) != n or n < 1:
        raise ConfigurationError(f"n must be a positive integer, got {n}")
    return Dataset(sample_points(spec, int(n), rng.stream(seed, rng.DATA)))


def sample_points(spec: TargetSpec, n: int, g: np.random.Generator) -> np.ndarray:
    d = spec.d
    if spec.kind == "point-cloud":
        if n == spec.means.shape[0]:
            return np.array(spec.means)
        idx = g.choice(spec.means.shape[0], size=n, p=spec.weights)
        return spec.means[idx].copy()
    if spec.kind == "ring":
        radius, jitter = spec.scales
        theta = g.uniform(0.0, 2 * np.pi, size=n)
        out = jitter * g.standard_normal((n, d))
        out[:, 0] += radius * np.cos(theta)
        out[:, 1] += radius * np.sin(theta)
        return out
    comp = g.choice(spec.means.shape[0], size=n, p=spec.weights)
    z = g.standard_normal((n, d))
    return spec.means[comp] + spec.scales[comp, None] * z


def save_csv(data: Dataset | np.ndarray, path) -> None:
    """Header-less CSV with 17 significant digits, so reloading is exact."""
    pts = data.points if isinstance(data, Dataset) else np.atleast_2d(data)
    np.savetxt(path, pts, delimiter=",", fmt="%.17g")


def load_dataset(path, format: str = "csv") -> Dataset:
    if not os.path.isfile(path):
        raise ConfigurationError(f"dataset file not found: {path}")
    if format == "csv":
        return _load_csv(path)
    if format in ("cifar10", "cifar10-binary"):
        return _load_cifar10(path)
    raise ConfigurationError(f"unknown dataset format {format!r}")


def _load_csv(path) -> Dataset:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    if not rows:
        raise FormatError(f"{path}: empty CSV file")
    try:
        pts = np.array([[float(v) for v in r.split(",")] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if pts.ndim != 2:
        raise FormatError(f"{path}: rows have differing lengths")
    return Dataset(pts)


def _load_cifar10(path) -> Dataset:
    """CIFAR-10 binary batch: 1 label byte + 3072 pixel bytes per record."""
    size = os.path.getsize(path)
    if size == 0:
        raise FormatError(f"{path}: empty file")
    if size % CIFAR_RECORD:
        offset = (size // CIFAR_RECORD) * CIFAR_RECORD
        raise FormatError(
            f"{path}: truncated record at byte offset {offset} "
            f"({size - offset} of {CIFAR_RECORD} bytes)")
    raw = np.fromfile(path, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    pixels = raw[:, 1:].astype(np.float64)
    return Dataset(2.0 * pixels / 255.0 - 1.0)
