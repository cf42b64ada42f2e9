"""Noise predictors: closed-form empirical optima and analytic oracles.

Two training objectives are covered.  The noise-prediction objective has the
empirical optimum ``eps*(x, t)``, a softmax over the training set of the
residuals ``x - sqrt(ab_t) x0_i``.  The previous-status objective regresses
``xi_{t,s} / sqrt(1 - r_{t,s})`` on ``x_t`` built from noised training points
``x_s``; its empirical optimum ``xi*(x, t)`` mixes Gaussian kernels of
different widths, one per earlier step ``s``.

Predictors take ``x`` as a vector or a batch of rows and an integer step
``1 <= t <= T`` of the schedule they were built on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rng
from ._accel import kernel_moments
from .datasets import Dataset, TargetSpec
from .errors import ArgumentError, ConfigurationError
from .forward import noise_to
from .schedule import Schedule, one_minus_ratio, ratio

EPS_KINDS = frozenset({"eps-empirical", "eps-oracle"})
XI_KINDS = frozenset({"xi-empirical", "score-oracle-derived"})

DEFAULT_GRID_SIZE = 8


class Predictor:
    """Base class: ``pred(x, t)`` returns an array shaped like ``x``."""

    kind: str = ""

    def __init__(self, sched: Schedule):
        self.sched = sched

    def __call__(self, x, t: int) -> np.ndarray:
        X, single = _as_batch(x)
        self._check_t(t)
        out = self._evaluate(X, int(t))
        return out[0] if single else out

    def _evaluate(self, X: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError

    def _check_t(self, t):
        if not 1 <= t <= self.sched.T:
            raise ArgumentError(f"predictors are defined for 1 <= t <= {self.sched.T}, got {t}")
        if self.sched.one_minus_alpha_bar(t) <= 0.0:
            raise ArgumentError(f"alpha_bar_{t} == 1; predictor undefined")

    def __repr__(self):
        return f"<{type(self).__name__} kind={self.kind} T={self.sched.T}>"


def _as_batch(x):
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        return X[None, :], True
    if X.ndim != 2:
        raise ArgumentError(f"expected a vector or a batch of rows, got shape {X.shape}")
    return X, False


class EpsEmpirical(Predictor):
    """Exact minimiser of the empirical noise-prediction loss over a training set."""

    kind = "eps-empirical"

    def __init__(self, sched: Schedule, data: Dataset, backend: str | None = None):
        super().__init__(sched)
        self.data = data
        self.backend = backend

    def _moments(self, X, t):
        if X.shape[1] != self.data.d:
            raise ArgumentError(f"query dimension {X.shape[1]} != data dimension {self.data.d}")
        n = self.data.n
        ab = self.sched.alpha_bar(t)
        var = self.sched.one_minus_alpha_bar(t)
        A = np.sqrt(ab) * self.data.points
        return kernel_moments(
            X, A, np.zeros(n), np.full(n, 1.0 / var), np.full(n, 1.0 / np.sqrt(var)),
            self.data.points, backend=self.backend)

    def _evaluate(self, X, t):
        R, _, _ = self._moments(X, t)
        return R

    def posterior_mean(self, x, t: int) -> np.ndarray:
        """``sum_i w_i(x, t) x0_i``, the implied estimate of ``E[x0 | x_t = x]``."""
        X, single = _as_batch(x)
        self._check_t(t)
        _, M, _ = self._moments(X, t)
        return M[0] if single else M

    def weights(self, x, t: int) -> np.ndarray:
        """Softmax weights over training points (dense; for diagnostics)."""
        X, single = _as_batch(x)
        self._check_t(t)
        ab = self.sched.alpha_bar(t)
        var = self.sched.one_minus_alpha_bar(t)
        diff = X[:, None, :] - np.sqrt(ab) * self.data.points[None, :, :]
        logits = -0.5 * np.einsum("mnd,mnd->mn", diff, diff) / var
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        w = e / e.sum(axis=1, keepdims=True)
        return w[0] if single else w


def eps_empirical(sched: Schedule, data: Dataset, backend: str | None = None) -> EpsEmpirical:
    return EpsEmpirical(sched, data, backend)


def posterior_mean_estimate(sched: Schedule, data: Dataset, x, t: int) -> np.ndarray:
    return EpsEmpirical(sched, data).posterior_mean(x, t)


# --------------------------------------------------------------------------
# earlier-step grids for the previous-status predictor


def sample_pairs(T: int, size: int, seed: int | np.random.Generator = 0):
    """``size`` unconditional draws of ``(k, s)``: ``k ~ U{1..T-1}``, then
    ``s ~ U{0..T-k}``.  The implied later step is ``t = s + k``."""
    if T < 2:
        raise ConfigurationError(f"sample_s needs T >= 2, got {T}")
    g = seed if isinstance(seed, np.random.Generator) else rng.stream(seed, rng.GRID)
    k = g.integers(1, T, size=size)
    s = g.integers(0, T - k + 1)
    return k, s


def sample_s(T: int, t: int | None = None, seed: int | np.random.Generator = 0) -> int:
    """Draw an earlier step ``s`` with the gap-first scheme of ``sample_pairs``.

    With ``t`` given the draw is conditioned on ``s < t`` by rejection; for
    ``t >= T`` the condition always holds and the scheme is unconditional.
    """
    if t is not None and t < 1:
        raise ArgumentError(f"conditioning step must be >= 1, got {t}")
    g = seed if isinstance(seed, np.random.Generator) else rng.stream(seed, rng.GRID)
    while True:
        _, s = sample_pairs(T, 256, g)
        if t is None:
            return int(s[0])
        ok = np.flatnonzero(s < t)
        if ok.size:
            return int(s[ok[0]])


@dataclass(frozen=True)
class SGrid:
    """Realised earlier steps ``s_j`` with noised training copies ``x_{s_j}^i``.

    ``point(s)`` uses the single step ``s`` at every ``t > s``.  ``sampled(J,
    seed)`` draws, for each evaluated ``t``, ``J`` steps with ``sample_s``
    (conditioned on ``s < t``) and weights them ``1/J``.  Noised copies are
    regenerated on demand from ``(seed, t, j)``, so evaluation is pure.
    """

    mode: str
    s: int = 0
    J: int = DEFAULT_GRID_SIZE
    seed: int = 0

    @classmethod
    def point(cls, s: int = 0, seed: int = 0) -> "SGrid":
        return cls("point", s=int(s), seed=seed)

    @classmethod
    def sampled(cls, J: int = DEFAULT_GRID_SIZE, seed: int = 0) -> "SGrid":
        if J < 1:
            raise ConfigurationError("grid needs J >= 1")
        return cls("sampled", J=int(J), seed=seed)

    def steps_at(self, T: int, t: int) -> list[int]:
        if self.mode == "point":
            if self.s >= t:
                raise ConfigurationError(f"grid step s={self.s} is not earlier than t={t}")
            return [self.s]
        if t == 1 or T < 2:
            return [0] * self.J
        g = rng.stream(self.seed, rng.GRID, t)
        return [sample_s(T, t, g) for _ in range(self.J)]

    def entries(self, sched: Schedule, data: Dataset, t: int):
        """``[(s_j, weight_j, x_{s_j} rows)]`` realised at step ``t``."""
        steps = self.steps_at(sched.T, t)
        if not steps:
            raise ConfigurationError(f"empty grid at t={t}")
        w = 1.0 / len(steps)
        out = []
        for j, s in enumerate(steps):
            if s == 0:
                xs = data.points
            else:
                key = (rng.GRID, s) if self.mode == "point" else (rng.GRID, t, j + 1)
                eps = rng.stream(self.seed, *key).standard_normal(data.points.shape)
                xs = noise_to(sched, data.points, s, eps=eps).x_t
            out.append((s, w, xs))
        return out


class XiEmpirical(Predictor):
    """Exact minimiser of the empirical previous-status loss for a realised grid."""

    kind = "xi-empirical"

    def __init__(self, sched: Schedule, data: Dataset, grid: SGrid, backend: str | None = None):
        super().__init__(sched)
        self.data = data
        self.grid = grid
        self.backend = backend

    def _evaluate(self, X, t):
        d = self.data.d
        if X.shape[1] != d:
            raise ArgumentError(f"query dimension {X.shape[1]} != data dimension {d}")
        centers, logc, inv_var = [], [], []
        n = self.data.n
        for s, w, xs in self.grid.entries(self.sched, self.data, t):
            r = ratio(self.sched, t, s)
            v = one_minus_ratio(self.sched, t, s)
            if v <= 0.0:
                raise ArgumentError(f"r_(t={t}, s={s}) == 1")
            centers.append(np.sqrt(r) * xs)
            # normalising constants differ across s and stay in the softmax
            logc.append(np.full(n, np.log(w) - 0.5 * d * np.log(2.0 * np.pi * v)))
            inv_var.append(np.full(n, 1.0 / v))
        inv_var = np.concatenate(inv_var)
        R, _, _ = kernel_moments(
            X, np.concatenate(centers), np.concatenate(logc), inv_var, inv_var,
            backend=self.backend)
        return R


def xi_empirical(sched: Schedule, data: Dataset, grid: SGrid | None = None,
                 backend: str | None = None) -> XiEmpirical:
    return XiEmpirical(sched, data, grid if grid is not None else SGrid.sampled(), backend)


# --------------------------------------------------------------------------
# analytic oracles


def _check_analytic(spec: TargetSpec):
    if not spec.analytic:
        raise ConfigurationError(f"no closed-form noised density for target kind {spec.kind!r}")


def _component_moments(sched: Schedule, spec: TargetSpec, t: int):
    ab = sched.alpha_bar(t)
    centers = np.sqrt(ab) * spec.means
    var = ab * spec.scales ** 2 + sched.one_minus_alpha_bar(t)
    return centers, var


def _responsibilities(X, centers, var, weights):
    d = X.shape[1]
    diff = X[:, None, :] - centers[None, :, :]
    sq = np.einsum("mkd,mkd->mk", diff, diff)
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    logits = logw[None, :] - 0.5 * d * np.log(2 * np.pi * var)[None, :] - 0.5 * sq / var[None, :]
    lse = logsumexp(logits, axis=1, keepdims=True)
    return np.exp(logits - lse), diff, lse[:, 0]


class OracleScore:
    """``grad log P_t`` and ``log P_t`` of the noised analytic target
    ``P_t = sum_k pi_k N(sqrt(ab_t) mu_k, (ab_t sigma_k^2 + 1 - ab_t) I)``."""

    def __init__(self, sched: Schedule, spec: TargetSpec):
        _check_analytic(spec)
        self.sched = sched
        self.spec = spec

    def score(self, x, t: int) -> np.ndarray:
        X, single = _as_batch(x)
        centers, var = _component_moments(self.sched, self.spec, t)
        gamma, diff, _ = _responsibilities(X, centers, var, self.spec.weights)
        out = -np.einsum("mk,mkd->md", gamma / var[None, :], diff)
        return out[0] if single else out

    def log_density(self, x, t: int) -> np.ndarray:
        X, single = _as_batch(x)
        centers, var = _component_moments(self.sched, self.spec, t)
        _, _, lse = _responsibilities(X, centers, var, self.spec.weights)
        return lse[0] if single else lse


class OracleEps(Predictor):
    """``E[eps | x_t] = -sqrt(1 - ab_t) grad log P_t`` for an analytic target."""

    kind = "eps-oracle"

    def __init__(self, sched: Schedule, spec: TargetSpec):
        super().__init__(sched)
        self.oracle = OracleScore(sched, spec)

    @property
    def spec(self):
        return self.oracle.spec

    def _evaluate(self, X, t):
        return -np.sqrt(self.sched.one_minus_alpha_bar(t)) * self.oracle.score(X, t)


class OracleXi(Predictor):
    """``-grad log P_t``, the population target of the previous-status objective."""

    kind = "score-oracle-derived"

    def __init__(self, sched: Schedule, spec: TargetSpec):
        super().__init__(sched)
        self.oracle = OracleScore(sched, spec)

    def _evaluate(self, X, t):
        return -self.oracle.score(X, t)


def oracle_eps(sched: Schedule, spec: TargetSpec) -> OracleEps:
    return OracleEps(sched, spec)


def oracle_xi(sched: Schedule, spec: TargetSpec) -> OracleXi:
    return OracleXi(sched, spec)


def conditional_noise(spec: TargetSpec, sched: Schedule, x, t: int, s: int) -> np.ndarray:
    """``E[xi_{t,s} | x_t] / sqrt(1 - r_{t,s})`` computed through step ``s``.

    Each component of ``P_s`` is pushed forward to ``t`` with the kernel
    ``x_t = sqrt(r) x_s + sqrt(1 - r) xi``; the conditional noise mean per
    component is ``sqrt(1 - r) (x_t - sqrt(r) m_s) / (r v_s + 1 - r)``.
    """
    _check_analytic(spec)
    if not 0 <= s < t <= sched.T:
        raise ArgumentError(f"need 0 <= s < t <= {sched.T}, got s={s}, t={t}")
    X, single = _as_batch(x)
    ab_s = sched.alpha_bar(s)
    m_s = np.sqrt(ab_s) * spec.means
    v_s = ab_s * spec.scales ** 2 + sched.one_minus_alpha_bar(s)
    r = ratio(sched, t, s)
    one_r = one_minus_ratio(sched, t, s)
    centers = np.sqrt(r) * m_s
    var = r * v_s + one_r
    gamma, diff, _ = _responsibilities(X, centers, var, spec.weights)
    # sqrt(1 - r) from the noise mean cancels the rescaling
    out = np.einsum("mk,mkd->md", gamma / var[None, :], diff)
    return out[0] if single else out


def tweedie_check(spec: TargetSpec, sched: Schedule, x, t: int, s_list) -> float:
    """Largest pairwise deviation of the rescaled conditional noise across ``s_list``."""
    vals = [conditional_noise(spec, sched, x, t, int(s)) for s in s_list]
    dev = 0.0
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            dev = max(dev, float(np.max(np.abs(vals[i] - vals[j]))))
    return dev
