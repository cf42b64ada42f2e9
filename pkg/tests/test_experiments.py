import io
import math
import os
import shutil

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from emdiff.config import ExperimentConfig, load_config, parse_config_text
from emdiff.datasets import save_csv
from emdiff.errors import ConfigurationError
from emdiff.experiments import run, run_all, run_converge, run_memorize, run_partial_recover

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def cfg(**kw):
    kw.setdefault("seed", 0)
    return ExperimentConfig.from_mapping({k: str(v) for k, v in kw.items()})


def _read_tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


# --- config -------------------------------------------------------------------

def test_config_parsing():
    m = parse_config_text("# c\nexperiment = memorize  # trailing\n\nseed=3\nn = 1e2\n")
    c = ExperimentConfig.from_mapping(m)
    assert (c.experiment, c.seed, c.n) == ("memorize", 3, 100)
    assert ExperimentConfig.from_mapping(c.to_mapping()) == c


@pytest.mark.parametrize("text", [
    "experiment = memorize\n",
    "seed = 1\n",
    "experiment = fly\nseed = 1\n",
    "experiment = memorize\nseed = 1\nbogus = 2\n",
    "experiment = memorize\nseed = 1\nn = 2.5\n",
    "experiment = memorize\nseed = -1\n",
    "experiment = memorize\nseed = 1\nrequire_asymmetry = maybe\n",
    "experiment = memorize\nseed = 1\npredictor = x0\n",
    "experiment = partial-recover\nseed = 1\nstart_step = early\n",
    "experiment memorize\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping(parse_config_text(text))


def test_target_specs():
    assert cfg(experiment="converge", target="gaussian-mixture", means="1,0;-1,0", sigmas="0.5,0.2").target_spec().means.shape == (2, 2)
    assert not cfg(experiment="converge", target="ring").target_spec().analytic
    with pytest.raises(ConfigurationError):
        cfg(experiment="converge", target="moons").target_spec()


# --- converge ---------------------------------------------------------------------

def test_converge_unit_gaussian():
    rep = run_converge(cfg(experiment="converge", n_list="100,1000,10000", probes=128))
    assert not rep.violations
    meds = [v for k, v in rep.scalars.items() if k.startswith("median_rmse")]
    assert len(meds) == 9 and all(np.isfinite(meds))


def test_converge_point_cloud():
    rep = run_converge(cfg(experiment="converge", target="point-cloud", d=2,
                           means="0,0;1,2;-1,0.5;3,-1", n_list="4,400"))
    assert not rep.violations
    assert max(v for k, v in rep.scalars.items() if k.startswith("rmse")) < 1e-10


def test_converge_xi_zero_grid_is_rescaled():
    base = dict(experiment="converge", n_list="100,1000", repeats=2, probes=64)
    eps = run_converge(cfg(**base))
    xi = run_converge(cfg(predictor="xi", grid="zero", **base))
    T = 1000
    from emdiff import linear_schedule
    s = linear_schedule(T)
    for k, v in eps.scalars.items():
        if k.startswith("rmse_t"):
            t = int(k.split("_")[1][1:])
            assert xi.scalars[k] == pytest.approx(v / math.sqrt(s.one_minus_alpha_bar(t)), rel=1e-10)


def test_converge_needs_analytic():
    with pytest.raises(ConfigurationError):
        run_converge(cfg(experiment="converge", target="ring"))


# --- memorize ---------------------------------------------------------------------

def test_memorize_collapse():
    rep = run_memorize(cfg(experiment="memorize", n=64, count=256))
    assert rep.scalars["ddim_memorized_fraction"] >= 0.95
    assert not rep.violations


def test_memorize_single_point(tmp_path):
    p = tmp_path / "one.csv"
    save_csv(np.array([[0.4, -0.3]]), p)
    rep = run_memorize(cfg(experiment="memorize", dataset=p, count=64))
    assert rep.scalars["ddim_memorized_fraction"] == 1.0


def test_memorize_strict_contract_is_reported():
    rep = run_memorize(cfg(experiment="memorize", n=64, count=256, seed=0, require_ddpm_lower="true"))
    assert rep.scalars["contracts_total"] == 2
    assert bool(rep.violations) == (not (rep.scalars["ddpm_lower_fraction"] and rep.scalars["ddpm_larger_median"]))


# --- partial recover ----------------------------------------------------------------

def test_partial_recover_asymmetry():
    rep = run_partial_recover(load_config(os.path.join(CONFIGS, "partial-recover.cfg")))
    assert rep.scalars["parent_step"] == 280
    assert rep.scalars["train_median"] < rep.scalars["tau"]
    assert rep.scalars["heldout_median"] > rep.scalars["train_median"]


def test_partial_recover_from_pure_noise():
    rep = run_partial_recover(cfg(experiment="partial-recover", d=16, n=128, count=128, start_step=50,
                                  require_asymmetry="false"))
    train = [v for _, v in rep.series["train_recovery_distance"]]
    held = [v for _, v in rep.series["heldout_recovery_distance"]]
    assert mannwhitneyu(train, held).pvalue > 0.01


def test_partial_recover_overlap(tmp_path):
    pts = np.random.default_rng(0).normal(size=(10, 2))
    save_csv(pts, tmp_path / "train.csv")
    save_csv(pts[5:], tmp_path / "held.csv")
    with pytest.raises(ConfigurationError, match="overlap"):
        run_partial_recover(cfg(experiment="partial-recover", dataset=tmp_path / "train.csv",
                                heldout=tmp_path / "held.csv", count=5))


# --- mi / gaussian -----------------------------------------------------------------

def test_mi_and_gaussian_runs():
    rep = run(cfg(experiment="mi-bound", T=2, beta_start=0.5, beta_end=0.5, R=1))
    assert rep.scalars["bound"] == 1.5
    rep = run(cfg(experiment="gaussian-example", trials=2000, pairs="1:1,2:100"))
    assert not rep.violations


# --- run-all ------------------------------------------------------------------------

def test_run_all_empty(tmp_path):
    assert run_all(str(tmp_path), str(tmp_path / "out"), stream=io.StringIO()) == 0
    assert not (tmp_path / "out").exists()


def test_run_all_names_failure(tmp_path):
    (tmp_path / "bad-one.cfg").write_text(
        "experiment = gaussian-example\nseed = 0\ntrials = 200\npairs = 1:1\nmax_abs_z = 0\n")
    (tmp_path / "good.cfg").write_text("experiment = mi-bound\nseed = 0\nR = 1\n")
    buf = io.StringIO()
    assert run_all(str(tmp_path), str(tmp_path / "out"), stream=buf) == 1
    assert "[FAIL] bad-one" in buf.getvalue() and "[ OK ] good" in buf.getvalue()


def test_run_all_error_is_named(tmp_path):
    (tmp_path / "broken.cfg").write_text("experiment = converge\nseed = 0\ntarget = ring\n")
    buf = io.StringIO()
    assert run_all(str(tmp_path), None, stream=buf) == 1
    assert "broken" in buf.getvalue() and "ConfigurationError" in buf.getvalue()


def test_embedded_config_reproduces(tmp_path):
    c = cfg(experiment="memorize", n=32, count=64, out=tmp_path / "a")
    run(c)
    again = load_config(tmp_path / "a" / "config.txt", {"out": str(tmp_path / "b")})
    run(again)
    a = _read_tree(tmp_path / "a")
    b = _read_tree(tmp_path / "b")
    assert a.keys() == b.keys()
    for k in a:
        if k != "config.txt":
            assert a[k] == b[k], k


@pytest.mark.slow
def test_shipped_configs_pass(tmp_path):
    assert run_all(CONFIGS, str(tmp_path), stream=io.StringIO()) == 0
    shutil.rmtree(tmp_path)
