"""Reverse-process samplers.

Three update rules are provided, all mean-only at the final step ``t = 1``:

* ``ddpm``: ``x_{t-1} = (x_t - beta_t / sqrt(1 - ab_t) eps) / sqrt(alpha_t) + sqrt(tilde_beta_t) z``
* ``ddim``: deterministic, ``x_{t-1} = sqrt(ab_{t-1}) x0_hat + sqrt(1 - ab_{t-1}) eps``
* ``prev-status``: ``x_{t-1} = x_t / sqrt(r) - (1 - r) / sqrt(r) xi`` with
  ``r = ab_t / ab_{t-1}``, optionally plus ``sqrt(tilde_beta_t) z``.

``generate`` runs a batch.  Gaussian draws for trajectory ``i`` at step ``t``
are row ``i`` of the stream keyed by ``(seed, STEP, t)``; starting noise is row
``i`` of ``(seed, START)``.  A trajectory is therefore fully determined by
``(seed, index)`` whatever the batch it was produced in.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ArgumentError, ConfigurationError
from .forward import noise_to
from .predictors import EPS_KINDS, XI_KINDS, Predictor
from .schedule import Schedule

METHODS = ("ddpm", "ddim", "prev-status")

# noise scale in ddpm / stochastic prev-status: "std" reads tilde_beta as a
# variance (sqrt(tilde_beta) z); "var" uses tilde_beta z literally
NOISE_SCALE = "std"


def _check_step(sched: Schedule, t: int):
    if not 1 <= t <= sched.T:
        raise ArgumentError(f"reverse step needs 1 <= t <= {sched.T}, got {t}")


def _noise_scale(sched: Schedule, t: int, noise_scale: str) -> float:
    tb = sched.tilde_beta(t)
    if noise_scale == "std":
        return float(np.sqrt(tb))
    if noise_scale == "var":
        return tb
    raise ConfigurationError(f"unknown noise scale {noise_scale!r}")


def ddpm_mean(sched: Schedule, eps, x_t, t: int) -> np.ndarray:
    beta = sched.betas[t]
    return (x_t - (beta / np.sqrt(sched.one_minus_alpha_bar(t))) * eps) / np.sqrt(1.0 - beta)


def ddpm_step(sched: Schedule, pred: Predictor, x_t, t: int, seed: int | None = None,
              noise=None, noise_scale: str = NOISE_SCALE) -> np.ndarray:
    """One stochastic step; noise comes from ``seed`` or is passed explicitly."""
    _check_step(sched, t)
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = ddpm_mean(sched, pred(x_t, t), x_t, t)
    if t == 1:
        return mean
    if noise is None:
        if seed is None:
            raise ArgumentError("ddpm_step needs a seed or explicit noise for t >= 2")
        noise = rng.stream(seed).standard_normal(x_t.shape)
    return mean + _noise_scale(sched, t, noise_scale) * noise


def ddim_step(sched: Schedule, pred: Predictor, x_t, t: int) -> np.ndarray:
    _check_step(sched, t)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = pred(x_t, t)
    x0_hat = (x_t - np.sqrt(sched.one_minus_alpha_bar(t)) * eps) / np.sqrt(sched.alpha_bar(t))
    if t == 1:
        return x0_hat
    return np.sqrt(sched.alpha_bar(t - 1)) * x0_hat + np.sqrt(sched.one_minus_alpha_bar(t - 1)) * eps


def prev_status_mean(sched: Schedule, xi, x_t, t: int) -> np.ndarray:
    beta = sched.betas[t]  # 1 - r_{t,t-1}
    sr = np.sqrt(1.0 - beta)
    return x_t / sr - (beta / sr) * xi


def prev_status_step(sched: Schedule, pred: Predictor, x_t, t: int, stochastic: bool = False,
                     seed: int | None = None, noise=None,
                     noise_scale: str = NOISE_SCALE) -> np.ndarray:
    _check_step(sched, t)
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = prev_status_mean(sched, pred(x_t, t), x_t, t)
    if not stochastic or t == 1:
        return mean
    if noise is None:
        if seed is None:
            raise ArgumentError("stochastic prev_status_step needs a seed or explicit noise")
        noise = rng.stream(seed).standard_normal(x_t.shape)
    return mean + _noise_scale(sched, t, noise_scale) * noise


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PartialStart:
    """Start from ``x_s`` obtained by noising ``sources`` (one trajectory each)."""

    sources: np.ndarray
    s: int
    ids: tuple = ()

    def __post_init__(self):
        src = np.atleast_2d(np.asarray(self.sources, dtype=np.float64))
        object.__setattr__(self, "sources", src)
        ids = tuple(self.ids) if len(self.ids) else tuple(range(src.shape[0]))
        if len(ids) != src.shape[0]:
            raise ConfigurationError("one id per source row is required")
        object.__setattr__(self, "ids", ids)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``(steps[k], states[k])`` from the start step down to 0.

    ``record='final'`` runs keep only the start and final states.
    """

    steps: np.ndarray
    states: np.ndarray
    seed: int
    index: int
    method: str
    predictor_kind: str
    start: str = "noise"
    source_id: object = None
    source: np.ndarray | None = None
    stochastic: bool = True

    @property
    def x0(self) -> np.ndarray:
        return self.states[-1]

    @property
    def start_step(self) -> int:
        return int(self.steps[0])


def _check_pairing(pred: Predictor, method: str):
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in ("ddpm", "ddim") and pred.kind not in EPS_KINDS:
        raise ConfigurationError(f"{method} needs a noise predictor, got kind {pred.kind!r}")
    if method == "prev-status" and pred.kind not in XI_KINDS:
        raise ConfigurationError(f"prev-status needs a previous-status predictor, got kind {pred.kind!r}")


def generate(sched: Schedule, pred: Predictor, method: str, count: int | None = None,
             start: str | PartialStart = "noise", seed: int = 0, d: int | None = None,
             first_index: int = 0, record: str = "all", stochastic: bool | None = None,
             noise_scale: str = NOISE_SCALE) -> list[Trajectory]:
    """Run ``count`` reverse trajectories as one batch.

    ``start='noise'`` draws ``x_T ~ N(0, I)`` (``d`` defaults to the
    predictor's data dimension).  A ``PartialStart`` noises each source to
    step ``s`` and reverses from there; ``count`` then defaults to the number
    of sources.  ``stochastic`` applies to ``prev-status`` only (default
    False); ``ddpm`` is always stochastic and ``ddim`` never.
    """
    _check_pairing(pred, method)
    if record not in ("all", "final"):
        raise ConfigurationError(f"record must be 'all' or 'final', got {record!r}")
    if method == "ddpm":
        noisy = True
    elif method == "ddim":
        noisy = False
    else:
        noisy = bool(stochastic)

    if isinstance(start, PartialStart):
        m = start.sources.shape[0]
        if count is not None and count != m:
            raise ConfigurationError(f"count={count} but {m} partial sources")
        count, d = m, start.sources.shape[1]
        s0 = start.s
        if not 1 <= s0 <= sched.T:
            raise ConfigurationError(f"partial start step must be in [1, {sched.T}], got {s0}")
        eps = rng.normal_rows(seed, (rng.START,), first_index, count, d)
        x = noise_to(sched, start.sources, s0, eps=eps).x_t
    elif start == "noise":
        if d is None:
            d = _infer_dim(pred)
        if count is None or count < 1:
            raise ConfigurationError("count must be a positive integer")
        s0 = sched.T
        x = rng.normal_rows(seed, (rng.START,), first_index, count, d)
    else:
        raise ConfigurationError(f"unknown start {start!r}")

    steps = np.arange(s0, -1, -1)
    states = [x] if record == "all" else None
    first = x
    for t in range(s0, 0, -1):
        noise = None
        if noisy and t > 1:
            noise = rng.normal_rows(seed, (rng.STEP, t), first_index, count, d)
        if method == "ddpm":
            x = ddpm_step(sched, pred, x, t, noise=noise, noise_scale=noise_scale)
        elif method == "ddim":
            x = ddim_step(sched, pred, x, t)
        else:
            x = prev_status_step(sched, pred, x, t, stochastic=noisy, noise=noise,
                                 noise_scale=noise_scale)
        if states is not None:
            states.append(x)
    if states is None:
        steps = np.array([s0, 0])
        stacked = np.stack([first, x], axis=1)
    else:
        stacked = np.stack(states, axis=1)

    out = []
    for i in range(count):
        kw = {}
        if isinstance(start, PartialStart):
            kw = dict(start=f"partial:{s0}", source_id=start.ids[i], source=start.sources[i])
        out.append(Trajectory(steps, stacked[i], seed, first_index + i, method, pred.kind,
                              stochastic=noisy, **kw))
    return out


def replay(traj: Trajectory, sched: Schedule, pred: Predictor,
           noise_scale: str = NOISE_SCALE) -> Trajectory:
    """Re-run a single trajectory from its recorded seed and index."""
    if traj.source is not None:
        start = PartialStart(traj.source[None, :], traj.start_step, (traj.source_id,))
    else:
        start = "noise"
    record = "all" if len(traj.steps) == traj.start_step + 1 else "final"
    return generate(sched, pred, traj.method, None if traj.source is not None else 1,
                    start=start, seed=traj.seed, d=traj.states.shape[1],
                    first_index=traj.index, record=record, stochastic=traj.stochastic,
                    noise_scale=noise_scale)[0]


def final_states(trajs: list[Trajectory]) -> np.ndarray:
    return np.stack([tr.x0 for tr in trajs])


def _infer_dim(pred: Predictor) -> int:
    data = getattr(pred, "data", None)
    if data is not None:
        return data.d
    spec = getattr(pred, "spec", None) or getattr(getattr(pred, "oracle", None), "spec", None)
    if spec is not None:
        return spec.d
    raise ConfigurationError("cannot infer dimension from predictor; pass d")
