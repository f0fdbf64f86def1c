import json
import subprocess
import sys

import pytest

from lerwkit.cli import EXIT_CONFIG, build_parser, main
from lerwkit.experiment import KINDS


def test_parser_has_every_subcommand():
    parser = build_parser()
    for kind in KINDS:
        args = parser.parse_args([kind, "--seed", "3", "--workers", "2", "--out", "x", "--trials", "10",
                                  "--grid", "4,8"])
        assert args.kind == kind and args.grid == [4, 8] and args.seed == 3
    with pytest.raises(SystemExit):
        parser.parse_args(["growth", "--grid", "a,b"])


def test_growth_run_pass_and_fail(tmp_path, capsys):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"kind": "growth", "params": {"fit_min": 0},
                               "tolerances": {"slope": 1.25, "slope_tol": 5.0}}))
    code = main(["growth", "--config", str(cfg), "--grid", "4,8", "--trials", "200", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "fit slope" in out
    assert (tmp_path / "growth.csv").exists()
    cfg.write_text(json.dumps({"kind": "growth", "params": {"fit_min": 0},
                               "tolerances": {"slope": 9.0, "slope_tol": 0.1}}))
    assert main(["growth", "--config", str(cfg), "--grid", "4,8", "--trials", "200", "--out", str(tmp_path)]) == 1


def test_config_errors_exit_two(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"kind": "growth", "extra": True}))
    assert main(["growth", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    cfg.write_text(json.dumps({"kind": "escape"}))
    assert main(["growth", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["compare", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def _small_config(tmp_path):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"kind": "growth", "params": {"fit_min": 0}}))
    return str(cfg)


def test_fit_window_without_points_is_config_error(tmp_path):
    assert main(["growth", "--grid", "4,8", "--trials", "50", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_compare_subcommand(tmp_path):
    cfg = _small_config(tmp_path)
    for seed in (1, 2):
        assert main(["growth", "--config", cfg, "--grid", "4,8", "--trials", "200", "--seed", str(seed),
                     "--out", str(tmp_path / f"s{seed}")]) in (0, 1)
    code = main(["compare", str(tmp_path / "s1/growth.json"), str(tmp_path / "s2/growth.json"),
                 "--out", str(tmp_path / "cmp")])
    assert code in (0, 1)
    art = json.loads((tmp_path / "cmp/compare.json").read_text())
    assert len(art["verdicts"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lerwkit", "growth", "--config", _small_config(tmp_path),
                           "--grid", "2,4", "--trials", "50", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode in (0, 1), proc.stderr
    assert (tmp_path / "growth.json").exists()
    proc = subprocess.run([sys.executable, "-m", "lerwkit", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "lerwkit" in proc.stdout
