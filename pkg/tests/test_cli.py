import csv
import json
import shutil
from pathlib import Path

import pytest

from fermidyn.cli import main
from fermidyn.io import content_hash

SCENARIOS = Path(__file__).parents[1] / "scenarios"


def run(tmp_path, command, scenario, *extra):
    out = tmp_path / Path(scenario).stem
    code = main([command, "--scenario", str(SCENARIOS / scenario if not Path(scenario).is_absolute() else scenario), "--out", str(out), *extra])
    return code, out


def manifest(out):
    return json.loads((out / "run_manifest.json").read_text())


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_trap_commutators(tmp_path):
    code, out = run(tmp_path, "trap-commutators", "trap_caps.toml")
    assert code == 0
    rows = read_csv(out / "trap_commutators.csv")
    assert len(rows) == 6
    assert all(float(r["relative_difference"]) <= 1e-9 for r in rows)
    m = manifest(out)
    assert m["status"] == "ok"
    assert {a["path"] for a in m["artifacts"]} == {"trap_commutators.csv", "trap_summary.json"}
    for a in m["artifacts"]:
        assert a["sha256"] == content_hash(out / a["path"])


def test_free_quench_tracks_free_evolution(tmp_path):
    code, out = run(tmp_path, "quench-hf", "quench_free.toml")
    assert code == 0
    rows = read_csv(out / "quench_hf.csv")
    assert max(float(r["free_distance"]) for r in rows) < 1e-12
    assert float(rows[-1]["initial_distance"]) > 0.1
    assert (out / "omega_final.bin").exists()


def test_free_rpa_spectrum(tmp_path):
    code, out = run(tmp_path, "rpa-spectrum", "rpa_free.toml")
    assert code == 0
    s = json.loads((out / "rpa_summary.json").read_text())
    assert s["rpa_energy"] == 0
    blocks = read_csv(out / "rpa_blocks.csv")
    spectrum = read_csv(out / "rpa_spectrum.csv")
    scale = 2 * s["hbar"] * s["kappa"]
    for k in s["per_mode"]:
        d = sorted(float(r["value"]) for r in blocks if r["k"] == k and r["matrix"] == "D" and r["alpha"] == r["beta"])
        ev = sorted(float(r["eigenvalue"]) for r in spectrum if r["k"] == k)
        assert ev == pytest.approx([scale * x for x in d], rel=1e-12)


def test_outputs_are_deterministic(tmp_path):
    hashes = []
    for i in range(2):
        code, out = run(tmp_path / str(i), "rpa-spectrum", "rpa_kf8.toml")
        assert code == 0
        hashes.append({a["path"]: a["sha256"] for a in manifest(out)["artifacts"]})
    assert hashes[0] == hashes[1]
    code, out = run(tmp_path / "q", "quench-hf", "quench_free.toml")
    first = {a["path"]: a["sha256"] for a in manifest(out)["artifacts"]}
    code, out = run(tmp_path / "q2", "quench-hf", "quench_free.toml")
    assert first == {a["path"]: a["sha256"] for a in manifest(out)["artifacts"]}


def test_oracle_ccr(tmp_path):
    code, out = run(tmp_path, "oracle-compare", "ccr_two_patch.toml")
    assert code == 0
    s = json.loads((out / "oracle_summary.json").read_text())["ccr"]
    assert s["all_within_bound"] and s["creation_commutator"] == 0


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    text = (SCENARIOS / "quench_small.toml").read_text().replace("\"-1\" = 1.0", "\"-1\" = 0.3")
    bad.write_text(text)
    code, out = run(tmp_path, "quench-hf", str(bad))
    assert code == 2
    assert "symmetry rule" in manifest(out)["status"]
    code, _ = run(tmp_path, "trap-commutators", "quench_small.toml")
    assert code == 2
    code, _ = run(tmp_path, "quench-hf", str(tmp_path / "missing.toml"))
    assert code == 2


def test_strict_mode(tmp_path):
    loose = tmp_path / "loose.toml"
    loose.write_text((SCENARIOS / "trap_caps.toml").read_text() + "\n[extras]\nnote = 1\n")
    with pytest.warns(UserWarning):
        assert run(tmp_path, "trap-commutators", str(loose))[0] == 0
    assert run(tmp_path, "trap-commutators", str(loose), "--strict")[0] == 2


def test_numerical_failure_exits_3(tmp_path, monkeypatch):
    from fermidyn.experiments import TOLERANCES

    monkeypatch.setitem(TOLERANCES, "trap_rel", -1.0)
    code, out = run(tmp_path, "trap-commutators", "trap_caps.toml")
    assert code == 3
    assert manifest(out)["status"].startswith("numerical error")
    assert (out / "trap_commutators.csv").exists()


def test_resource_cap_exits_4(tmp_path):
    cfg = tmp_path / "big.toml"
    text = (SCENARIOS / "quench_small.toml").read_text()
    cfg.write_text(text.replace("particles = 3", "particles = 12").replace("cutoff = 3.0", "cutoff = 20.0"))
    code, out = run(tmp_path, "oracle-compare", str(cfg))
    assert code == 4
    assert manifest(out)["status"].startswith("resource limit")


def test_thread_settings(tmp_path, monkeypatch):
    monkeypatch.setenv("FERMIDYN_THREADS", "1")
    code, out = run(tmp_path, "trap-commutators", "trap_caps.toml")
    assert code == 0 and manifest(out)["threads"] == 1
    monkeypatch.setenv("FERMIDYN_THREADS", "many")
    assert run(tmp_path, "trap-commutators", "trap_caps.toml")[0] == 2
    monkeypatch.delenv("FERMIDYN_THREADS")
    assert run(tmp_path, "trap-commutators", "trap_caps.toml", "--threads", "0")[0] == 2


def test_console_script_is_installed():
    assert shutil.which("fermidyn") is not None
