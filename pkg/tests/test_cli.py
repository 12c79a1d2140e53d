import hashlib
import json

import numpy as np
import pytest
import yaml

from sepsplit.cli import COMMANDS, ConfigError, dumps, load_config, main


def _write(tmp_path, cfg, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def _run(tmp_path, command, cfg=None, out="out"):
    args = [command, "--out", str(tmp_path / out)]
    if cfg is not None:
        args += ["--config", _write(tmp_path, cfg, f"{out}.yaml")]
    return main(args), tmp_path / out


def test_minimal_config_fills_defaults():
    cfg = load_config(None, "exponents")
    assert cfg.params.arms == (1.0, 2.0) and cfg.params.omega == (2.0,)
    assert cfg.numeric["K"] == 32 and cfg.threads == 1


def test_invalid_configs(tmp_path):
    code, out = _run(tmp_path, "exponents", {"analyticity": {"rho": 1.6}}, "rho")
    assert code == 2
    assert "rho" in json.loads((out / "error.json").read_text())["message"]
    code, out = _run(tmp_path, "exponents", {"params": {"arms": [2.0, 1.0]}}, "arms")
    assert code == 2
    code, out = _run(tmp_path, "exponents", {"numeric": {"bogus": 1}}, "unknown")
    assert code == 2
    assert "numeric.bogus: unknown key" in json.loads((out / "error.json").read_text())["message"]


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("params:\n  arms: [1, 2\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(str(p), "exponents")


def test_command_mismatch(tmp_path):
    with pytest.raises(ConfigError, match="command"):
        load_config(_write(tmp_path, {"command": "chart"}), "exponents")


def test_exponents_output(tmp_path):
    code, out = _run(tmp_path, "exponents")
    assert code == 0
    rep = json.loads((out / "exponents.json").read_text())
    text = json.dumps(rep)
    assert "0.8660254037844" in text


def test_melnikov_precondition_exit(tmp_path):
    cfg = {"params": {"perturbation": {"terms": [{"c": 1.0, "s": 0.0, "k": [1], "j": [0, 0]}]}}}
    code, out = _run(tmp_path, "melnikov", cfg)
    assert code == 3
    err = json.loads((out / "error.json").read_text())
    assert err["exit_code"] == 3 and "vanish" in err["message"]


def _outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != "run_manifest.json"}


@pytest.mark.parametrize("command", ["chart", "melnikov", "homological"])
def test_deterministic_outputs(tmp_path, command):
    cfg = {"numeric": {"K": 8, "D": 2, "alpha_points": 64}}
    a = _run(tmp_path, command, cfg, "a")
    b = _run(tmp_path, command, cfg, "b")
    assert a[0] == b[0] == 0
    assert _outputs(a[1]) == _outputs(b[1])


def test_manifest_hashes(tmp_path):
    code, out = _run(tmp_path, "decay", {"params": {"perturbation": {"harmonics": [1, 2, 3, 4]}}})
    assert code == 0
    man = json.loads((out / "run_manifest.json").read_text())
    assert man["exit_code"] == 0 and man["command"] == "decay"
    names = {f["name"] for f in man["files"]}
    assert {"decay.csv", "decay.json", "decay_plot.dat"} <= names
    for f in man["files"]:
        assert hashlib.sha256((out / f["name"]).read_bytes()).hexdigest() == f["sha256"]


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SEPSPLIT_OUT", str(tmp_path / "env"))
    assert main(["nonres"]) == 0
    assert (tmp_path / "env" / "nonres.json").exists()


def test_decay_needs_four_modes(tmp_path):
    code, out = _run(tmp_path, "decay")
    assert code == 3
    assert "insufficient modes" in json.loads((out / "error.json").read_text())["message"]


def test_all_light_commands_succeed(tmp_path):
    cfg = {"numeric": {"K": 8, "D": 2, "riccati_points": 2000},
           "params": {"perturbation": {"harmonics": [1, 2, 3, 4]}}}
    for cmd in COMMANDS:
        if cmd in ("split",):
            continue
        code, _ = _run(tmp_path, cmd, cfg, cmd)
        assert code == 0, cmd


def test_split_small(tmp_path):
    cfg = {"numeric": {"n_phi": 9, "step": 1e-2, "sections": [3.141592653589793]}}
    code, out = _run(tmp_path, "split", cfg)
    assert code == 0
    rep = json.loads((out / "split.json").read_text())
    assert rep["melnikov_error"] < 1e-4 and rep["zero_counts"] == [2]
    rows = (out / "split.csv").read_text().splitlines()
    assert len(rows) > 9


def test_dumps_is_stable():
    obj = {"b": [1.0, np.float64(0.1), float("nan")], "a": {"y": 2, "x": True}}
    s = dumps(obj)
    assert s == dumps(json.loads(json.dumps({"a": {"x": True, "y": 2}, "b": [1.0, 0.1, None]})))
    assert s.index('"a"') < s.index('"b"') and "0.10000000000000001" in s
