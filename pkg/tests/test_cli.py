import json
import os
import shutil

import numpy as np
import pytest

from romforge.cli import (
    DEFAULT_CONFIG,
    bench_instances,
    build_parser,
    build_system,
    load_config,
    main,
    read_csv,
    read_frf,
    resolve_threads,
)
from romforge.errors import ConfigError

QUICK = {
    "rom": {"betas": [0.15, 0.2, 0.25], "phases": {"start": 0.1714, "stop": 3.1344, "count": 20},
            "N_t": 16},
    "train": {"max_epochs": 20, "patience_epochs": 20, "learning_rate": 0.002, "batch_size": 40,
              "dfnn_depth": 3, "dfnn_width": 16},
    "phase_map": {"max_epochs": 40, "patience_epochs": 20, "dfnn_depth": 3, "dfnn_width": 16},
    "predict": {"phases": {"start": 0.3, "stop": 2.8, "count": 11}, "N_t": 16},
    "bench": {"counts": [3, 6], "repeats": 1},
}


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(*args):
    return main(list(map(str, args)))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    cfg = write_config(out / "cfg.json", QUICK)
    for cmd in ("fom-frf", "pod-build", "rom-frf", "train", "predict"):
        assert run_cli(cmd, "--config", cfg, "--out", out, "--seed", 11) == 0, cmd
    return out, cfg


# -- configuration -----------------------------------------------------------------------


def test_parser_has_all_subcommands():
    p = build_parser()
    for cmd in ("fom-frf", "pod-build", "rom-frf", "train", "predict", "error", "bench", "verify"):
        ns = p.parse_args([cmd, "--threads", "2", "--seed", "5", "--out", "x", "--config", "c.json"])
        assert (ns.command, ns.threads, ns.seed, ns.out, ns.config) == (cmd, 2, 5, "x", "c.json")


def test_defaults_and_merge(tmp_path):
    cfg = load_config(write_config(tmp_path / "c.json", {"hb": {"H": 5}}))
    assert cfg["hb"] == {"H": 5}
    assert cfg["system"] == DEFAULT_CONFIG["system"]
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path / "d.json", {"bogus": {}}))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    beam = load_config(write_config(tmp_path / "b.json", {"system": {"kind": "vk_beam", "n_elem": 8}}))
    assert beam["system"] == {"kind": "vk_beam", "n_elem": 8}


def test_build_system_kinds(tmp_path):
    cfg = load_config()
    assert build_system(cfg).n_dof == 1
    beam = build_system({"system": {"kind": "vk_beam", "n_elem": 8, "thickness": 4e-6}})
    assert beam.meta["geometry"]["thickness"] == 4e-6
    with pytest.raises(ConfigError):
        build_system({"system": {"kind": "plate"}})
    with pytest.raises(ConfigError):
        build_system({"system": {"kind": "duffing", "monitor_dof": 3}})
    with pytest.raises(ConfigError):
        build_system({"system": {"kind": "duffing", "omega0": -1}})


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv("ROMFORGE_THREADS", raising=False)
    assert resolve_threads(None) == 1
    assert resolve_threads(3) == 3
    monkeypatch.setenv("ROMFORGE_THREADS", "2")
    assert resolve_threads(3) == 2
    monkeypatch.setenv("ROMFORGE_THREADS", "two")
    with pytest.raises(ConfigError):
        resolve_threads(1)
    monkeypatch.setenv("ROMFORGE_THREADS", "0")
    with pytest.raises(ConfigError):
        resolve_threads(1)


def test_bench_instances_round_robin():
    inst = bench_instances([0.1, 0.2], 5, 0.3, 0.01)
    assert [b for b, _ in inst] == [0.1, 0.2]
    assert np.allclose(inst[0][1], [0.31, 0.32, 0.33]) and np.allclose(inst[1][1], [0.31, 0.32])
    assert sum(len(p) for _, p in inst) == 5


# -- exit codes ----------------------------------------------------------------------------


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"nonsense": 1})
    assert run_cli("fom-frf", "--config", cfg, "--out", tmp_path) == 2
    assert "config error" in capsys.readouterr().err
    assert run_cli("verify", "--seed", -1, "--out", tmp_path) == 2


def test_missing_input_is_config_error(tmp_path):
    assert run_cli("pod-build", "--out", tmp_path) == 2


def test_env_thread_override_is_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("ROMFORGE_THREADS", "-4")
    assert run_cli("verify", "--out", tmp_path, "--threads", "1") == 2


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"hb": {"max_newton_iters": 1, "min_step": 0.01,
                                                     "initial_step": 0.01}})
    assert run_cli("fom-frf", "--config", cfg, "--out", tmp_path) == 3
    assert "solver failure" in capsys.readouterr().err


def test_training_divergence_exit_code(pipeline, tmp_path, capsys):
    out, _ = pipeline
    for name in ("rom_snapshots.snap", "phase_pairs.csv"):
        shutil.copy(out / name, tmp_path / name)
    cfg = write_config(tmp_path / "c.json", {**QUICK, "train": {**QUICK["train"], "learning_rate": 1e300}})
    with np.errstate(all="ignore"):
        assert run_cli("train", "--config", cfg, "--out", tmp_path) == 4
    assert "diverged" in capsys.readouterr().err


def test_verify_passes(tmp_path, capsys):
    assert run_cli("verify", "--out", tmp_path) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(ln.startswith("PASS") for ln in lines)


# -- outputs --------------------------------------------------------------------------------


def test_pipeline_outputs_carry_manifest_hash(pipeline):
    out, _ = pipeline
    for cmd in ("fom-frf", "pod-build", "rom-frf", "train", "predict"):
        man = json.loads((out / f"manifest_{cmd}.json").read_text())
        for name in man["outputs"]:
            if name.endswith(".csv"):
                first = (out / name).read_text().splitlines()[0]
                assert first == f"# manifest_sha256={man['manifest_sha256']}"
    bundle = json.loads((out / "model" / "manifest.json").read_text())
    train_man = json.loads((out / "manifest_train.json").read_text())
    assert bundle["run_manifest_sha256"] == train_man["manifest_sha256"]
    assert set(train_man["inputs"]) == {"dataset", "phase_pairs"}


def test_frf_tables_are_valid(pipeline):
    out, _ = pipeline
    fom = read_frf(out / "fom_frf.csv")
    assert fom and all(p.source == "FOM" for p in fom)
    dl = read_frf(out / "dl_frf.csv")
    assert len(dl) == 3 * 11 and all(p.source == "DL" for p in dl)
    env = read_csv(out / "envelope.csv")
    assert list(env[0]) == ["beta", "phi", "omega", "amplitude"]
    meta = json.loads((out / "predict_meta.json").read_text())
    assert meta["n_points"] == 33 and meta["n_extrapolated"] == 0


def test_error_table(pipeline, capsys):
    out, cfg = pipeline
    assert run_cli("error", "--config", cfg, "--out", out) == 0
    rows = read_csv(out / "error.csv")
    assert list(rows[0]) == ["instance", "tau", "eps"]
    assert len(rows) == 10 * 64
    assert all(float(r["eps"]) >= 0 for r in rows)
    doc = json.loads(json.dumps(QUICK))
    doc["error"] = {"source": "POD", "N_t": 32}
    pod_cfg = write_config(out / "pod_err.json", doc)
    assert run_cli("error", "--config", pod_cfg, "--out", out) == 0
    eps = np.array([float(r["eps"]) for r in read_csv(out / "error.csv")])
    assert eps.size == 320 and np.all(np.isfinite(eps))


def test_bench_table(pipeline):
    out, cfg = pipeline
    assert run_cli("bench", "--config", cfg, "--out", out) == 0
    rows = read_csv(out / "bench.csv")
    assert {(r["method"], int(r["n_instances"])) for r in rows} == {
        (m, n) for m in ("FOM", "POD", "DL") for n in (3, 6)}
    summary = json.loads((out / "bench_summary.json").read_text())
    assert set(summary["timings"]) == {"3", "6"}


def test_same_seed_reproduces_bytes(pipeline, tmp_path):
    out, cfg = pipeline
    for name in ("rom_snapshots.snap", "phase_pairs.csv", "pod_basis.podb", "reduced_system.json"):
        shutil.copy(out / name, tmp_path / name)
    assert run_cli("train", "--config", cfg, "--out", tmp_path, "--seed", 11) == 0
    assert run_cli("predict", "--config", cfg, "--out", tmp_path, "--seed", 11) == 0
    for name in sorted(os.listdir(out / "model")):
        assert (out / "model" / name).read_bytes() == (tmp_path / "model" / name).read_bytes(), name
    for name in ("dl_frf.csv", "envelope.csv"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()
