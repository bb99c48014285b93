from __future__ import annotations

import copy
import filecmp
import json
import logging

import numpy as np
import pytest
import yaml

from fracpme import cli
from fracpme.config import ConfigError, default_config, default_config_text, load_config, parse_config
from fracpme.io import read_csv
from fracpme.pipeline import Workbench, forward_stage


@pytest.fixture
def tree():
    return yaml.safe_load(default_config_text())


def small_tree() -> dict:
    t = yaml.safe_load(default_config_text())
    t["layout"]["n_grid"] = 96
    t["params"]["n_steps"] = 16
    t["verify"] = {"s_list": [0.5], "samples": 4}
    t["recovery"]["probes"] = 2
    return t


def _write(tmp_path, tree, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(tree))
    return path


def _dirs_identical(a, b) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(_dirs_identical(a / d, b / d) for d in cmp.common_dirs)


def test_default_config_parses():
    cfg = default_config()
    assert cfg.layout.n_grid == 512
    assert [p.name for p in cfg.pairs] == ["reference", "gamma_variant", "lambda_variant"]
    assert cfg.params.m_conj == pytest.approx(2.0)
    assert cfg.h_list == [1e2, 1e3, 1e4, 1e5]


@pytest.mark.parametrize("key", ["layout.n_grid", "params.alpha", "datum.center", "coefficients"])
def test_missing_required_key_named(tree, key):
    section, _, leaf = key.rpartition(".")
    del (tree[section] if section else tree)[leaf]
    with pytest.raises(ConfigError, match=f"missing required key: {key}"):
        parse_config(tree)


def test_optional_keys_defaulted(tree):
    del tree["params"]["tol"]
    del tree["asymptotics"]
    cfg = parse_config(tree)
    assert cfg.tol == 1e-9
    assert cfg.section("asymptotics")["T_list"] == [0.5, 1.0, 2.0]


@pytest.mark.parametrize("gamma", [
    {"kind": "constant", "value": 0.0},
    {"kind": "constant", "value": -1.0},
    {"kind": "bump", "base": 1.0, "amplitude": -2.0, "center": 0.5, "radius": 0.4},
])
def test_nonpositive_gamma_rejected(tree, gamma):
    tree["coefficients"][0]["gamma"] = gamma
    with pytest.raises(ConfigError, match=r"coefficients\[0\]\.gamma must be positive"):
        parse_config(tree)


@pytest.mark.parametrize("h_list", [[1e2, 1e3, 1e4], [1e2, 1e3, 1e5, 1e6], [1e5, 1e4, 1e3, 1e2], [0.0, 1.0, 2.0, 3.0]])
def test_h_list_validated(tree, h_list):
    tree["params"]["h_list"] = h_list
    with pytest.raises(ConfigError, match="h_list"):
        parse_config(tree)


@pytest.mark.parametrize("key,value", [("params.s", 1.2), ("params.alpha", 0.5), ("params.n_steps", 4)])
def test_inadmissible_params_rejected(tree, key, value):
    section, leaf = key.split(".")
    tree[section][leaf] = value
    with pytest.raises(ConfigError):
        parse_config(tree)


def test_coefficient_kinds(tree):
    tree["coefficients"].append({
        "name": "tabled",
        "gamma": {"kind": "table", "x": [0.0, 1.0], "values": [1.0, 2.0]},
        "lambda": {"kind": "polynomial", "coefficients": [0.5]},
    })
    cfg = parse_config(tree)
    f = cfg.coefficient_fields(3)
    om = cfg.layout.mask_omega
    np.testing.assert_allclose(f.gamma[om], 1.0 + cfg.layout.points[om, 0])
    np.testing.assert_allclose(f.lam[om], 0.5)
    assert np.all(f.lam[cfg.layout.mask_exterior] == 0.0)
    tree["coefficients"][3]["gamma"] = {"kind": "spline"}
    with pytest.raises(ConfigError, match="kind must be one of"):
        parse_config(tree)


def test_hash_stable_and_sensitive(tree):
    a = parse_config(copy.deepcopy(tree)).hash
    assert a == parse_config(copy.deepcopy(tree)).hash
    moved = copy.deepcopy(tree)
    moved["outputs"]["directory"] = "elsewhere"
    assert parse_config(moved).hash == a
    tree["params"]["alpha"] = 2.5
    assert parse_config(tree).hash != a


def test_with_overrides(tree):
    cfg = parse_config(tree).with_overrides(**{"params.m": 3.0, "params.alpha": 2.0})
    assert cfg.params.m == 3.0 and cfg.params.alpha == 2.0


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("layout: [unclosed")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(bad)


def test_zero_datum_forward_is_zero():
    t = small_tree()
    t["datum"]["shape"] = "zero"
    res = forward_stage(Workbench(parse_config(t)), refine=False)
    assert not np.any(res.series.slices)
    assert not np.any(res.record.values)


def test_cli_show_config(capsys):
    assert cli.main(["show-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["layout"]["n_grid"] == 512


def test_cli_config_error_exit_code(tmp_path, capsys):
    t = small_tree()
    t["coefficients"][0]["gamma"] = {"kind": "constant", "value": -1.0}
    code = cli.main(["forward", "--config", str(_write(tmp_path, t)), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_CONFIG
    assert "gamma must be positive" in capsys.readouterr().err
    assert cli.main(["forward", "--config", str(tmp_path / "none.yaml")]) == cli.EXIT_CONFIG
    assert cli.main(["forward", "--config", str(_write(tmp_path, small_tree())), "--jobs", "0"]) == cli.EXIT_CONFIG


def test_cli_forward_outputs(tmp_path):
    out = tmp_path / "fwd"
    assert cli.main(["forward", "--config", str(_write(tmp_path, small_tree())), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == parse_config(small_tree()).hash
    assert manifest["solver_meta"]["fallback_steps"] == 0
    header, rows = read_csv(out / "solution.csv")
    assert header == ["t", "index", "x", "u"]
    assert len(rows) == 17 * parse_config(small_tree()).layout.n_points
    assert not (out / "solution.png").exists()


def test_cli_png_opt_in(tmp_path):
    t = small_tree()
    t["outputs"]["formats"] = ["csv", "json", "png"]
    out = tmp_path / "fwd"
    assert cli.main(["forward", "--config", str(_write(tmp_path, t)), "--out", str(out)]) == 0
    assert (out / "solution.png").stat().st_size > 0


def test_unknown_output_format_rejected(tree):
    tree["outputs"]["formats"] = ["csv", "hdf5"]
    with pytest.raises(ConfigError, match="outputs.formats"):
        parse_config(tree)


def test_cli_all_is_deterministic(tmp_path):
    cfg = str(_write(tmp_path, small_tree()))
    a, b = tmp_path / "a", tmp_path / "b"
    ca = cli.main(["all", "--config", cfg, "--out", str(a)])
    cb = cli.main(["all", "--config", cfg, "--out", str(b), "--jobs", "2"])
    assert ca == cb and ca in (cli.EXIT_OK, cli.EXIT_NUMERICAL)
    for stage in ("verify_operator", "forward", "asymptotics", "recover"):
        assert (a / stage / "manifest.json").exists()
    assert _dirs_identical(a, b)


def test_cli_strict_turns_warnings_into_failure(tmp_path, monkeypatch):
    path = str(_write(tmp_path, small_tree()))

    def noisy(wb, out, jobs=1):
        logging.getLogger("fracpme.stage").warning("synthetic warning")
        return cli.EXIT_OK

    monkeypatch.setitem(cli.COMMANDS, "forward", noisy)
    assert cli.main(["forward", "--config", path, "--out", str(tmp_path / "x")]) == cli.EXIT_OK
    assert cli.main(["forward", "--config", path, "--out", str(tmp_path / "y"), "--strict"]) == cli.EXIT_NUMERICAL
