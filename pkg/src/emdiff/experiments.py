"""Desk-scale experiment runners.

Each ``run_*`` takes an ``ExperimentConfig`` and returns a ``MetricsReport``
whose ``violations`` attribute lists failed contracts (empty on success).
``run_all`` executes a directory of config files and writes every report.
"""
from __future__ import annotations

import glob
import os
import sys

import numpy as np

from . import rng
from .config import ExperimentConfig, load_config
from .datasets import Dataset, load_dataset, sample_points
from .errors import ConfigurationError, EmdiffError
from .forward import coefficients, noise_to
from .metrics import MetricsReport, gaussian_example_simulate, mi_upper_bound, nn_audit, predictor_rmse, trajectory_divergence
from .plotting import write_svg
from .predictors import SGrid, eps_empirical, oracle_eps, oracle_xi, xi_empirical
from .samplers import PartialStart, final_states, generate
from .schedule import best_matching_step, subsequence

# (signal, noise) coefficients of the reference partial start
REFERENCE_PAIR = (0.6678, 0.7743)


def _report(cfg: ExperimentConfig, name: str) -> MetricsReport:
    rep = MetricsReport(name, metadata=cfg.to_mapping())
    rep.violations = []
    rep.scalars["contracts_total"] = 0
    return rep


def _check(rep: MetricsReport, ok: bool, message: str) -> None:
    rep.scalars["contracts_total"] += 1
    if not ok:
        rep.violations.append(message)
    rep.scalars["contracts_failed"] = len(rep.violations)


def _dataset(cfg: ExperimentConfig, n: int | None = None, key: int = 0) -> Dataset:
    if cfg.dataset:
        return load_dataset(cfg.dataset, cfg.dataset_format)
    spec = cfg.target_spec()
    n = cfg.n if n is None else n
    return Dataset(sample_points(spec, n, rng.stream(cfg.seed, rng.DATA, key)))


def _probes(spec, sched, t, count, seed, key):
    x0 = sample_points(spec, count, rng.stream(seed, rng.PROBE, t, key))
    eps = rng.stream(seed, rng.PROBE, t, key, 1).standard_normal(x0.shape)
    return noise_to(sched, x0, t, eps=eps).x_t


def run_converge(cfg: ExperimentConfig) -> MetricsReport:
    """RMSE between empirical optimum and analytic oracle over (t, n, repeat)."""
    spec = cfg.target_spec()
    if not spec.analytic:
        raise ConfigurationError(f"converge needs an analytic target, got {spec.kind!r}")
    if cfg.dataset:
        raise ConfigurationError("converge samples its own training sets; drop 'dataset'")
    sched = cfg.schedule()
    ts = sorted({max(1, min(sched.T, int(round(f * sched.T)))) for f in cfg.float_list(cfg.t_fracs)})
    ns = cfg.int_list(cfg.n_list)
    rep = _report(cfg, "converge")
    grid = SGrid.point(0) if cfg.grid == "zero" else SGrid.sampled(cfg.J, cfg.seed)
    oracle = oracle_xi(sched, spec) if cfg.predictor == "xi" else oracle_eps(sched, spec)
    medians = {}
    for t in ts:
        for n in ns:
            vals = []
            for j in range(cfg.repeats):
                if spec.kind == "point-cloud":
                    data = Dataset(spec.means)
                else:
                    data = Dataset(sample_points(spec, n, rng.stream(cfg.seed, rng.DATA, n, j)))
                if cfg.predictor == "xi":
                    pred = xi_empirical(sched, data, grid)
                else:
                    pred = eps_empirical(sched, data)
                probes = _probes(spec, sched, t, cfg.probes, cfg.seed, j)
                vals.append(predictor_rmse(pred, oracle, probes, t))
                rep.scalars[f"rmse_t{t}_n{n}_r{j}"] = vals[-1]
            medians[t, n] = float(np.median(vals))
            rep.scalars[f"median_rmse_t{t}_n{n}"] = medians[t, n]
        rep.add_series(f"median_rmse_t{t}", ns, [medians[t, n] for n in ns])

    _check(rep, all(np.isfinite(v) for v in medians.values()), "non-finite RMSE")
    if spec.kind == "point-cloud":
        worst = max(medians.values())
        _check(rep, worst < 1e-10, f"point-cloud identity broken: max RMSE {worst:.3g}")
    else:
        for t in ts:
            seq = [medians[t, n] for n in ns]
            _check(rep, all(b < a for a, b in zip(seq, seq[1:])),
                   f"RMSE not decreasing in n at t={t}: {seq}")
    return rep


def run_memorize(cfg: ExperimentConfig) -> MetricsReport:
    """DDIM vs DDPM samples of the empirical optimum, audited against the training set."""
    data = _dataset(cfg)
    if data.radius <= 0:
        raise ConfigurationError("dataset radius is zero; memorisation threshold undefined")
    sched = subsequence(cfg.schedule(), cfg.steps)
    pred = eps_empirical(sched, data)
    tau = cfg.tau_frac * data.radius
    rep = _report(cfg, "memorize")
    rep.scalars.update(n=data.n, d=data.d, radius=data.radius, tau=tau)
    audits = {}
    for method in ("ddim", "ddpm"):
        X = final_states(generate(sched, pred, method, cfg.count, seed=cfg.seed, record="final"))
        a = nn_audit(X, data, tau)
        audits[method] = a.scalars
        for k, v in a.scalars.items():
            if k != "tau":
                rep.scalars[f"{method}_{k}"] = v
        rep.add_series(f"{method}_nn_distance_sorted", range(X.shape[0]), np.sort(a.distances))
    lower = audits["ddpm"]["memorized_fraction"] < audits["ddim"]["memorized_fraction"]
    larger = audits["ddpm"]["median"] > audits["ddim"]["median"]
    rep.scalars["ddpm_lower_fraction"] = lower
    rep.scalars["ddpm_larger_median"] = larger
    frac = audits["ddim"]["memorized_fraction"]
    _check(rep, frac >= cfg.min_memorized_fraction,
           f"ddim memorized fraction {frac:.4f} < {cfg.min_memorized_fraction}")
    if cfg.require_ddpm_lower:
        _check(rep, lower and larger,
               "ddpm run is not strictly less memorised than ddim "
               f"(fractions {audits['ddpm']['memorized_fraction']:.4f} vs {frac:.4f}, "
               f"medians {audits['ddpm']['median']:.4g} vs {audits['ddim']['median']:.4g})")
    return rep


def run_trajectory_compare(cfg: ExperimentConfig) -> MetricsReport:
    """Per-step divergence between oracle-driven and empirical-optimum-driven
    reverse runs from shared starting noise.  The oracle stands in for a
    trained network."""
    spec = cfg.target_spec()
    if not spec.analytic:
        raise ConfigurationError(f"trajectory-compare needs an analytic target, got {spec.kind!r}")
    data = _dataset(cfg)
    sched = subsequence(cfg.schedule(), cfg.steps)
    if cfg.predictor == "xi":
        grid = SGrid.point(0) if cfg.grid == "zero" else SGrid.sampled(cfg.J, cfg.seed)
        a, b, method = oracle_xi(sched, spec), xi_empirical(sched, data, grid), "prev-status"
    else:
        a, b, method = oracle_eps(sched, spec), eps_empirical(sched, data), cfg.method
    ta = generate(sched, a, method, cfg.count, seed=cfg.seed, d=data.d)
    tb = generate(sched, b, method, cfg.count, seed=cfg.seed, d=data.d)
    rep = _report(cfg, "trajectory_compare")
    div = trajectory_divergence(ta, tb)
    rep.series.update(div.series)
    rep.scalars.update(div.scalars)
    rep.notes.append("comparison: analytic oracle vs empirical optimum; the oracle replaces a trained network")
    frac = div.scalars["nondecreasing_fraction"]
    _check(rep, frac >= cfg.min_nondecreasing_fraction,
           f"divergence nondecreasing in only {frac:.3f} of steps")
    return rep


def run_partial_recover(cfg: ExperimentConfig) -> MetricsReport:
    """Noise training and held-out points to step s, reverse with DDIM over the
    empirical optimum, and compare how close each run returns to its source."""
    data = _dataset(cfg)
    if cfg.heldout:
        held = load_dataset(cfg.heldout, cfg.dataset_format).points
    else:
        if cfg.dataset:
            raise ConfigurationError("a dataset file needs a matching 'heldout' file")
        held = sample_points(cfg.target_spec(), cfg.count, rng.stream(cfg.seed, rng.DATA, 1))
    if held.shape[1] != data.d:
        raise ConfigurationError("held-out and training dimensions differ")
    if (held[:, None, :] == data.points[None, :, :]).all(axis=2).any():
        raise ConfigurationError("held-out set overlaps the training set")
    if cfg.count > data.n or cfg.count > held.shape[0]:
        raise ConfigurationError(f"count={cfg.count} exceeds available sources")
    sched = subsequence(cfg.schedule(), cfg.steps)
    s = best_matching_step(sched, *REFERENCE_PAIR) if cfg.start_step == "matched" else int(cfg.start_step)
    pred = eps_empirical(sched, data)
    tau = cfg.tau_frac * data.radius
    rep = _report(cfg, "partial_recover")
    a, b = coefficients(sched, s)
    rep.scalars.update(s=s, parent_step=int(sched.timesteps[s]), signal_coef=a, noise_coef=b, tau=tau)
    med = {}
    for label, src in (("train", data.points[:cfg.count]), ("heldout", held[:cfg.count])):
        start = PartialStart(src, s)
        X = final_states(generate(sched, pred, "ddim", start=start, seed=cfg.seed, record="final"))
        dist = np.linalg.norm(X - src, axis=1)
        med[label] = float(np.median(dist))
        rep.scalars[f"{label}_median"] = med[label]
        rep.scalars[f"{label}_mean"] = float(np.mean(dist))
        rep.scalars[f"{label}_recovered_fraction"] = float(np.mean(dist <= tau))
        rep.add_series(f"{label}_recovery_distance", range(dist.size), dist)
    if cfg.require_asymmetry:
        _check(rep, med["train"] < med["heldout"],
               f"train recovery median {med['train']:.4g} not below held-out {med['heldout']:.4g}")
    return rep


def run_mi_bound(cfg: ExperimentConfig) -> MetricsReport:
    sched = cfg.schedule()
    R = cfg.R if cfg.R >= 0 else _dataset(cfg).radius
    value, terms = mi_upper_bound(sched, R)
    rep = _report(cfg, "mi_bound")
    rep.scalars.update(bound=value, R=R, first_term=float(terms[0]), beta_1=float(sched.betas[1]))
    rep.add_series("terms", range(1, sched.T + 1), terms)
    _check(rep, bool(np.isfinite(value)), "bound is not finite")
    return rep


def run_gaussian_example(cfg: ExperimentConfig) -> MetricsReport:
    rep = _report(cfg, "gaussian_example")
    for pair in cfg.pairs.split(","):
        d, n = (int(v) for v in pair.split(":"))
        sim = gaussian_example_simulate(d, n, cfg.trials, cfg.seed)
        for k in ("estimate", "std_error", "expected", "generalization_bound", "z_score"):
            rep.scalars[f"d{d}_n{n}_{k}"] = sim.scalars[k]
        z = sim.scalars["z_score"]
        _check(rep, abs(z) <= cfg.max_abs_z, f"(d={d}, n={n}) estimate off by {z:.2f} standard errors")
    return rep


RUNNERS = {
    "converge": run_converge,
    "memorize": run_memorize,
    "trajectory-compare": run_trajectory_compare,
    "partial-recover": run_partial_recover,
    "mi-bound": run_mi_bound,
    "gaussian-example": run_gaussian_example,
}


def run(cfg: ExperimentConfig, out: str | None = None) -> MetricsReport:
    rep = RUNNERS[cfg.experiment](cfg)
    out = out or cfg.out
    if out:
        rep.write(out)
        svg = {k: v for k, v in rep.series.items() if len(v) > 1}
        if svg:
            write_svg(svg, os.path.join(out, "series.svg"), title=rep.name)
    return rep


def run_all(config_dir: str, out_root: str | None = None, seed: int | None = None,
            stream=sys.stderr) -> int:
    """Run every ``*.cfg`` in ``config_dir``; return 0 when all contracts hold."""
    paths = sorted(glob.glob(os.path.join(config_dir, "*.cfg")))
    failed = []
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        overrides = {} if seed is None else {"seed": str(seed)}
        try:
            cfg = load_config(path, overrides)
            out = os.path.join(out_root, name) if out_root else (cfg.out or None)
            rep = run(cfg, out)
        except EmdiffError as exc:
            failed.append(name)
            print(f"[FAIL] {name}: {type(exc).__name__}: {exc}", file=stream)
            continue
        if rep.violations:
            failed.append(name)
            for v in rep.violations:
                print(f"[FAIL] {name}: {v}", file=stream)
        else:
            print(f"[ OK ] {name}", file=stream)
    if failed:
        print(f"{len(failed)} of {len(paths)} experiments failed: {', '.join(failed)}", file=stream)
        return 1
    return 0
