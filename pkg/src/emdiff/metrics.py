"""Memorisation and generalisation measurements, and closed-form bounds."""
from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._accel import nearest_sqdist
from .datasets import Dataset
from .errors import ArgumentError, ConfigurationError
from .predictors import Predictor
from .schedule import Schedule


def fmt(v) -> str:
    """Round-trippable, platform-stable text for a scalar."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class MetricsReport:
    """Named scalars and series plus the configuration that produced them.

    On disk (``write``): ``scalars.csv`` with columns ``name,value``; one
    ``series_<name>.csv`` per series with columns ``index,value``; and
    ``config.txt`` holding ``metadata`` as ``key = value`` lines, which is a
    valid experiment config.
    """

    name: str
    scalars: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add_series(self, key: str, index, values) -> None:
        vals = [float(v) for v in values]
        if not all(math.isfinite(v) for v in vals):
            raise ArgumentError(f"series {key!r} has non-finite values")
        self.series[key] = list(zip([int(i) for i in index], vals))

    def write(self, out_dir) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        path = os.path.join(out_dir, "scalars.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "value"])
            for k in sorted(self.scalars):
                w.writerow([k, fmt(self.scalars[k])])
        written.append(path)
        for key in sorted(self.series):
            path = os.path.join(out_dir, f"series_{_slug(key)}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["index", "value"])
                for i, v in self.series[key]:
                    w.writerow([i, fmt(v)])
            written.append(path)
        path = os.path.join(out_dir, "config.txt")
        with open(path, "w") as fh:
            fh.write(f"# report: {self.name}\n")
            for note in self.notes:
                fh.write(f"# {note}\n")
            for k in sorted(self.metadata):
                fh.write(f"{k} = {self.metadata[k]}\n")
        written.append(path)
        return written


def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", s)


def nn_audit(samples, data: Dataset | np.ndarray, tau: float, backend: str | None = None) -> MetricsReport:
    """Exhaustive nearest-training-point distances for generated samples.

    A sample counts as memorised when its distance is ``<= tau``.
    """
    S = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    D = data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=np.float64))
    if S.shape[1] != D.shape[1]:
        raise ArgumentError(f"sample dimension {S.shape[1]} != data dimension {D.shape[1]}")
    if not tau > 0:
        raise ArgumentError(f"tau must be positive, got {tau}")
    sq, idx = nearest_sqdist(S, D, backend=backend)
    dist = np.sqrt(sq)
    rep = MetricsReport("nn_audit")
    rep.scalars.update(
        median=float(np.median(dist)),
        mean=float(np.mean(dist)),
        memorized_fraction=float(np.mean(dist <= tau)),
        tau=float(tau),
    )
    for q in (0.1, 0.25, 0.75, 0.9):
        rep.scalars[f"q{int(q * 100):02d}"] = float(np.quantile(dist, q))
    rep.add_series("distance", range(dist.size), dist)
    rep.distances = dist
    rep.nearest = idx
    return rep


def trajectory_divergence(a, b) -> MetricsReport:
    """Mean over pairs of ``|x_t^a - x_t^b|^2 / d`` at every shared step."""
    if len(a) != len(b) or not a:
        raise ArgumentError("need two equally long, non-empty trajectory lists")
    steps = a[0].steps
    for ta, tb in zip(a, b):
        if not (np.array_equal(ta.steps, steps) and np.array_equal(tb.steps, steps)):
            raise ArgumentError("trajectories do not share a step grid")
    A = np.stack([tr.states for tr in a])
    B = np.stack([tr.states for tr in b])
    d = A.shape[2]
    per_step = np.mean(np.sum((A - B) ** 2, axis=2), axis=0) / d
    rep = MetricsReport("trajectory_divergence")
    rep.add_series("divergence", steps, per_step)
    rep.scalars["final"] = float(per_step[-1])
    # fraction of reverse-time neighbours (t -> t-1) where divergence does not drop
    rep.scalars["nondecreasing_fraction"] = float(np.mean(np.diff(per_step) >= 0)) if per_step.size > 1 else 1.0
    return rep


def mi_upper_bound(sched: Schedule, R: float) -> tuple[float, np.ndarray]:
    """Closed-form upper bound on the mutual information between a stochastic
    sample and the training set, with its per-step terms (index t-1)."""
    if R < 0:
        raise ArgumentError(f"radius must be non-negative, got {R}")
    R2 = float(R) ** 2
    b1 = sched.betas[1]
    terms = np.empty(sched.T)
    terms[0] = (1.0 - b1) * R2 / (2.0 * b1 ** 2)
    ab = sched.alpha_bars
    omab = sched.one_minus_alpha_bars
    terms[1:] = ab[2:] * R2 / (2.0 * omab[1:-1] ** 2)
    return float(np.sum(terms)), terms


def gaussian_example_errors(d: int, n: int) -> tuple[float, float]:
    """Optimisation error ``d/n`` and generalisation bound ``(d/2) log(1 + 1/n)``
    for the fit-the-mean Gaussian generator."""
    if d < 1 or n < 1:
        raise ArgumentError("need d >= 1 and n >= 1")
    return d / n, 0.5 * d * math.log1p(1.0 / n)


def gaussian_example_simulate(d: int, n: int, trials: int, seed: int) -> MetricsReport:
    """Monte Carlo estimate of ``E|mean(x_1..x_n) - mu|^2`` for ``x_i ~ N(mu, I)``."""
    if trials < 100:
        raise ConfigurationError("need at least 100 trials")
    g = rng.stream(seed, rng.DATA, d, n)
    mu = g.standard_normal(d)
    sq = np.empty(trials)
    # sample means of n unit Gaussians drawn explicitly, batched to bound memory
    batch = max(1, (1 << 21) // max(1, n * d))
    for lo in range(0, trials, batch):
        hi = min(trials, lo + batch)
        x = mu + g.standard_normal((hi - lo, n, d))
        sq[lo:hi] = np.sum((x.mean(axis=1) - mu) ** 2, axis=1)
    est = float(sq.mean())
    se = float(sq.std(ddof=1) / np.sqrt(trials))
    expected, gen = gaussian_example_errors(d, n)
    rep = MetricsReport("gaussian_example")
    rep.scalars.update(d=d, n=n, trials=trials, estimate=est, std_error=se,
                       expected=expected, generalization_bound=gen,
                       z_score=(est - expected) / se if se > 0 else 0.0)
    return rep


def predictor_rmse(pred_a: Predictor, pred_b: Predictor, probes, t: int) -> float:
    """``sqrt(mean_i |a(x_i) - b(x_i)|^2 / d)`` over probe rows."""
    P = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    if P.shape[0] == 0:
        raise ArgumentError("empty probe set")
    diff = pred_a(P, t) - pred_b(P, t)
    return float(np.sqrt(np.mean(np.sum(diff ** 2, axis=1)) / P.shape[1]))
