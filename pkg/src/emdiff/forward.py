"""Forward (noising) process."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import rng
from .errors import ArgumentError
from .schedule import Schedule, one_minus_ratio, ratio


class NoisePair(NamedTuple):
    x_t: np.ndarray
    eps: np.ndarray


def coefficients(sched: Schedule, t: int) -> tuple[float, float]:
    """``(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))``."""
    return float(np.sqrt(sched.alpha_bar(t))), float(np.sqrt(sched.one_minus_alpha_bar(t)))


def noise_to(sched: Schedule, x0, t: int, seed: int | None = None, eps=None) -> NoisePair:
    """Draw ``x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``.

    ``x0`` may be a single vector or a batch of rows.  Pass ``eps`` to supply
    the Gaussian draw explicitly instead of a seed.
    """
    if not 1 <= t <= sched.T:
        raise ArgumentError(f"noise_to needs 1 <= t <= {sched.T}, got {t}")
    x0 = np.asarray(x0, dtype=np.float64)
    eps = _draw(x0.shape, seed, eps)
    a, b = coefficients(sched, t)
    return NoisePair(a * x0 + b * eps, eps)


def noise_between(sched: Schedule, x_s, t: int, s: int, seed: int | None = None, eps=None) -> NoisePair:
    """Draw ``x_t`` from ``x_s``: ``sqrt(r) x_s + sqrt(1 - r) xi`` with ``r = ab_t / ab_s``."""
    if not 0 <= s < t <= sched.T:
        raise ArgumentError(f"noise_between needs 0 <= s < t <= {sched.T}, got s={s}, t={t}")
    x_s = np.asarray(x_s, dtype=np.float64)
    xi = _draw(x_s.shape, seed, eps)
    a = np.sqrt(ratio(sched, t, s))
    b = np.sqrt(one_minus_ratio(sched, t, s))
    return NoisePair(a * x_s + b * xi, xi)


def _draw(shape, seed, eps):
    if eps is not None:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != shape:
            raise ArgumentError(f"eps shape {eps.shape} does not match {shape}")
        return eps
    if seed is None:
        raise ArgumentError("either seed or eps is required")
    return rng.stream(seed).standard_normal(shape)
