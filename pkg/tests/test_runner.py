import json

import numpy as np
import pytest

from u1mpemba.cli import main
from u1mpemba.runner import (CSV_HEADER, ConfigError, ParamMismatchError, RunConfig,
                             RunManifest, angle_label, compare_runs, enumerate_tasks,
                             load_config, parse_angle, parse_config, read_trace,
                             realization_rng, run_sweep, task_seed)

SMALL = """
family = tfs, tns
theta = 0.3pi, 0.4pi
alpha = 2.0
n_sites = 4
n_a = 1, 2
layers = 3
realizations = 3
seed = 5
modes = sampled, ed
theta_pairs = 0.3pi:0.4pi
"""


@pytest.mark.parametrize("text,value", [("0.3pi", 0.3 * np.pi), ("pi/4", np.pi / 4),
                                        ("1.25", 1.25), ("pi", np.pi), ("2*pi/8", np.pi / 4)])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value, abs=1e-15)


def test_parse_angle_rejects():
    with pytest.raises(ConfigError):
        parse_angle("three")


def test_angle_label():
    assert angle_label(0.3 * np.pi) == "0.3pi"


def test_parse_config():
    cfg = parse_config(SMALL + "\n# comment\nchi = 64\n")
    assert cfg.families == ["tfs", "tns"] and cfg.chi_max == 64
    assert cfg.theta_pairs == [[pytest.approx(0.3 * np.pi), pytest.approx(0.4 * np.pi)]]


@pytest.mark.parametrize("bad", ["mode = magic", "n_sites = 5\nfamily = tns\ntheta = 0.3",
                                 "nonsense = 1", "n_sites 4", "modes = ed\nn_sites = 16",
                                 "modes = averaged\nn_sites = 10", "n_a = 9\nn_sites = 4",
                                 "route = sideways", "engine = magic"])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_env_overrides(tmp_path, monkeypatch):
    path = tmp_path / "c.txt"
    path.write_text(SMALL)
    monkeypatch.setenv("U1MPEMBA_OUT", str(tmp_path / "envout"))
    monkeypatch.setenv("U1MPEMBA_WORKERS", "2")
    cfg = load_config(path)
    assert cfg.out_dir == str(tmp_path / "envout") and cfg.workers == 2
    assert load_config(path, workers=1).workers == 1


def test_hash_ignores_location():
    a, b = parse_config(SMALL), parse_config(SMALL)
    b.out_dir, b.workers = "/elsewhere", 4
    assert a.hash() == b.hash()
    b.seed = 6
    assert a.hash() != b.hash()


def test_seeds_pure_and_shared():
    a = realization_rng(1, "sampled", 1.5, 12, 3).random()
    b = realization_rng(1, "sampled", 1.5, 12, 3).random()
    c = realization_rng(1, "sampled", 1.5, 12, 4).random()
    assert a == b != c
    assert task_seed(1, "ed", 2.0).entropy == 1


def test_adding_points_keeps_seeds():
    cfg = parse_config(SMALL)
    bigger = parse_config(SMALL.replace("alpha = 2.0", "alpha = 2.0, 0.5"))
    old = {t.key() for t in enumerate_tasks(cfg)}
    assert old <= {t.key() for t in enumerate_tasks(bigger)}


def test_boundary_tasks_per_family():
    cfg = parse_config(SMALL + "engine = boundary\n")
    sampled = [t for t in enumerate_tasks(cfg) if t.mode == "sampled"]
    assert len(sampled) == 2 * 2  # families x subsystem sizes
    assert all(len(t.thetas) == 2 for t in sampled)


def test_empty_grid(tmp_path):
    cfg = RunConfig(out_dir=str(tmp_path))
    man = run_sweep(cfg, log=None)
    assert man.tasks == {} and not man.failed


def test_sweep_outputs_and_determinism(tmp_path):
    texts = []
    for k in range(2):
        cfg = parse_config(SMALL)
        cfg.out_dir = str(tmp_path / f"run{k}")
        man = run_sweep(cfg, log=None)
        assert not man.failed
        files = sorted((tmp_path / f"run{k}").glob("*.csv"))
        texts.append({f.name: f.read_bytes() for f in files})
    assert texts[0] == texts[1]
    names = set(texts[0])
    assert "crossings.csv" in names
    traces = [n for n in names if n != "crossings.csv"]
    assert len(traces) == 2 * 2 * 2 * 2  # methods x families x angles x subsystem sizes
    first = texts[0][traces[0]].decode().splitlines()
    assert first[0] == CSV_HEADER and len(first) == 1 + 4
    tr = read_trace(tmp_path / "run0" / traces[0])
    assert tr.samples[0].shape == (3, 4)


def test_resume_skips_done(tmp_path):
    cfg = parse_config(SMALL)
    cfg.out_dir = str(tmp_path)
    run_sweep(cfg, log=None)
    seen = []
    run_sweep(cfg, log=seen.append)
    assert seen == []
    man = RunManifest.load(tmp_path / "manifest.json")
    assert man.config_hash == cfg.hash() and len(man.tasks) == len(enumerate_tasks(cfg))


def test_compare_runs(tmp_path):
    cfg = parse_config(SMALL)
    cfg.out_dir = str(tmp_path)
    run_sweep(cfg, log=None)
    tn = tmp_path / "tn_tfs_th0.3pi_a2_N4_NA2.csv"
    ed = tmp_path / "ed_tfs_th0.3pi_a2_N4_NA2.csv"
    same = compare_runs(tn, tn)
    assert same["max_z"] == 0 and same["passed"]
    rep = compare_runs(tn, ed, 3.0)
    assert len(rep["z"]) == 4
    with pytest.raises(ParamMismatchError):
        compare_runs(tn, tmp_path / "tn_tfs_th0.3pi_a2_N4_NA1.csv")


def test_compare_mismatched_n(tmp_path):
    outs = []
    for n in (4, 6):
        cfg = parse_config(SMALL.replace("n_sites = 4", f"n_sites = {n}"))
        cfg.out_dir = str(tmp_path / f"n{n}")
        cfg.modes = ["sampled"]
        run_sweep(cfg, log=None)
        outs.append(tmp_path / f"n{n}" / f"tn_tfs_th0.3pi_a2_N{n}_NA2.csv")
    with pytest.raises(ParamMismatchError):
        compare_runs(*outs)


def test_cli_end_to_end(tmp_path, capsys):
    path = tmp_path / "c.txt"
    path.write_text(SMALL + "fit = true\n")
    out = tmp_path / "out"
    assert main(["ed", "--config", str(path), "--out", str(out), "--seed", "3"]) == 0
    assert not list(out.glob("tn_*.csv"))
    assert main(["sweep", "--config", str(path), "--out", str(out), "--workers", "1"]) == 0
    assert main(["analyze", "--out", str(out), "--config", str(path)]) == 0
    assert (out / "fits.json").exists()
    a = str(out / "tn_tfs_th0.3pi_a2_N4_NA2.csv")
    assert main(["compare", a, a]) == 0
    assert main(["compare", a, str(out / "tn_tfs_th0.3pi_a2_N4_NA1.csv")]) == 2
    meta = json.loads((out / "tn_tfs_th0.3pi_a2_N4_NA2.json").read_text())
    assert meta["params"]["method"] == "tn" and "diagnostics" in meta["provenance"]


def test_cli_parallel_matches_serial(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text(SMALL)
    for w in (1, 2):
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path / f"w{w}"),
                     "--workers", str(w)]) == 0
    for f in (tmp_path / "w1").glob("*_N4_*.csv"):
        assert f.read_bytes() == (tmp_path / "w2" / f.name).read_bytes()


def test_resume_after_grid_growth(tmp_path):
    cfg = parse_config(SMALL)
    cfg.out_dir = str(tmp_path)
    run_sweep(cfg, log=None)
    grown = parse_config(SMALL.replace("alpha = 2.0", "alpha = 2.0, 4.0"))
    grown.out_dir = str(tmp_path)
    seen = []
    run_sweep(grown, log=seen.append)
    assert seen and all("a=4" in line for line in seen)
    changed = parse_config(SMALL + "layers = 4\n")
    changed.out_dir = str(tmp_path)
    seen = []
    run_sweep(changed, log=seen.append)
    assert len(seen) == len(enumerate_tasks(changed))


def test_ed_realizations(tmp_path):
    cfg = parse_config(SMALL + "ed_realizations = 5\n")
    cfg.out_dir = str(tmp_path)
    run_sweep(cfg, log=None)
    assert read_trace(tmp_path / "ed_tfs_th0.3pi_a2_N4_NA2.csv").realization_count == 5
    assert read_trace(tmp_path / "tn_tfs_th0.3pi_a2_N4_NA2.csv").realization_count == 3
