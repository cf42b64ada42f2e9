"""Variance schedules and the coefficients derived from them.

All per-step arrays have length ``T + 1`` and are indexed by the step ``t``.
Index 0 is the clean-data sentinel: ``alpha_bar[0] = 1``, ``beta[0] = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigurationError

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True, eq=False)
class Schedule:
    """Discrete forward-process schedule.

    ``log_alpha_bars`` is the primary quantity; ``alpha_bars`` and
    ``one_minus_alpha_bars`` are derived from it with ``exp`` / ``-expm1`` so
    that neither underflows nor cancels for long or nearly noiseless schedules.
    ``timesteps`` maps each step back to the parent schedule it was cut from
    (identity for a schedule built directly).
    """

    betas: np.ndarray
    log_alpha_bars: np.ndarray
    timesteps: np.ndarray

    def __post_init__(self):
        for name in ("betas", "log_alpha_bars", "timesteps"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_betas(cls, betas, timesteps=None) -> "Schedule":
        b = np.asarray(betas, dtype=np.float64).ravel()
        if b.size < 1:
            raise ConfigurationError("schedule needs at least one step")
        if not np.all((b > 0) & (b < 1)):
            raise ConfigurationError("every beta must lie in (0, 1)")
        betas_full = np.concatenate(([0.0], b))
        log_ab = np.concatenate(([0.0], np.cumsum(np.log1p(-b))))
        ts = np.arange(b.size + 1) if timesteps is None else np.asarray(timesteps, dtype=np.int64)
        return cls(betas_full, log_ab, ts)

    @classmethod
    def from_log_alpha_bars(cls, log_alpha_bars, timesteps) -> "Schedule":
        """Build from ``log alpha_bar_1..T`` (strictly decreasing, negative)."""
        la = np.concatenate(([0.0], np.asarray(log_alpha_bars, dtype=np.float64).ravel()))
        diffs = np.diff(la)
        if not np.all(diffs < 0):
            raise ConfigurationError("alpha_bar must be strictly decreasing")
        betas = np.concatenate(([0.0], -np.expm1(diffs)))
        return cls(betas, la, np.asarray(timesteps, dtype=np.int64))

    @property
    def T(self) -> int:
        return self.betas.size - 1

    @property
    def alphas(self) -> np.ndarray:
        a = 1.0 - self.betas
        a[0] = 1.0
        return a

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.exp(self.log_alpha_bars)

    @property
    def one_minus_alpha_bars(self) -> np.ndarray:
        return -np.expm1(self.log_alpha_bars)

    @property
    def tilde_betas(self) -> np.ndarray:
        """Posterior variance of ``x_{t-1}`` given ``(x_t, x_0)``; zero at t=1."""
        omab = self.one_minus_alpha_bars
        tb = np.zeros_like(self.betas)
        tb[1:] = self.betas[1:] * omab[:-1] / omab[1:]
        return tb

    def alpha_bar(self, t: int) -> float:
        self._check_step(t)
        return float(np.exp(self.log_alpha_bars[t]))

    def one_minus_alpha_bar(self, t: int) -> float:
        self._check_step(t)
        return float(-np.expm1(self.log_alpha_bars[t]))

    def tilde_beta(self, t: int) -> float:
        self._check_step(t)
        if t == 0:
            return 0.0
        return float(self.betas[t] * self.one_minus_alpha_bar(t - 1) / self.one_minus_alpha_bar(t))

    def _check_step(self, t: int) -> None:
        if not 0 <= t <= self.T:
            raise ArgumentError(f"step {t} outside [0, {self.T}]")


def linear_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                    beta_end: float = DEFAULT_BETA_END) -> Schedule:
    """Linearly spaced betas from ``beta_start`` to ``beta_end``."""
    if int(T) != T or T < 1:
        raise ConfigurationError(f"T must be a positive integer, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ConfigurationError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if T == 1:
        return Schedule.from_betas([beta_start])
    return Schedule.from_betas(np.linspace(beta_start, beta_end, int(T)))


def subsequence(sched: Schedule, K: int) -> Schedule:
    """K-step schedule on parent steps ``ceil(i*T/K)``, i = 1..K.

    Betas of the result are recomputed from ratios of consecutive retained
    alpha_bars.
    """
    T = sched.T
    if int(K) != K or not 1 <= K <= T:
        raise ConfigurationError(f"need 1 <= K <= T={T}, got {K}")
    if K == T:
        return sched
    idx = np.array([-(-T * i // K) for i in range(1, K + 1)], dtype=np.int64)
    return Schedule.from_log_alpha_bars(
        sched.log_alpha_bars[idx],
        np.concatenate(([0], sched.timesteps[idx])),
    )


def ratio(sched: Schedule, t: int, s: int) -> float:
    """Signal retention ``alpha_bar_t / alpha_bar_s`` between steps s <= t."""
    sched._check_step(t)
    sched._check_step(s)
    if s > t:
        raise ArgumentError(f"ratio needs s <= t, got s={s}, t={t}")
    if s == 0:
        return sched.alpha_bar(t)
    return float(np.exp(sched.log_alpha_bars[t] - sched.log_alpha_bars[s]))


def one_minus_ratio(sched: Schedule, t: int, s: int) -> float:
    """``1 - ratio(t, s)`` without cancellation."""
    sched._check_step(t)
    sched._check_step(s)
    if s > t:
        raise ArgumentError(f"ratio needs s <= t, got s={s}, t={t}")
    return float(-np.expm1(sched.log_alpha_bars[t] - sched.log_alpha_bars[s]))


def best_matching_step(sched: Schedule, signal: float = 0.6678, noise: float = 0.7743) -> int:
    """Step whose ``(sqrt(alpha_bar), sqrt(1 - alpha_bar))`` is closest to a target pair."""
    a = np.sqrt(sched.alpha_bars[1:])
    b = np.sqrt(sched.one_minus_alpha_bars[1:])
    return int(np.argmin((a - signal) ** 2 + (b - noise) ** 2)) + 1
