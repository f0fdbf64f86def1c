import csv
import io
import json

import pytest

from lerwkit.exponents import EstimatorReport
from lerwkit.experiment import (
    CSV_COLUMNS,
    DEFAULTS,
    KINDS,
    ConfigError,
    FingerprintMismatch,
    compare_artifacts,
    csv_text,
    emit_report,
    execute,
    lattice_of,
    load_config,
    resolve_config,
    run,
)
from lerwkit.lattice import spec_to_json, triangular_walk

SMALL_GROWTH = {"kind": "growth", "grid": [4, 8, 16], "trials": 300, "params": {"fit_min": 0}}


def test_every_kind_resolves_with_defaults():
    for kind in KINDS:
        cfg = resolve_config({"kind": kind})
        for key in ("lattice", "seed", "workers", "timing", "params", "tolerances", "out"):
            assert key in cfg
        assert resolve_config(cfg) == cfg


def test_growth_defaults_mirror_acceptance():
    cfg = resolve_config({"kind": "growth"})
    assert cfg["grid"] == [16, 32, 64, 128, 256, 512]
    assert cfg["trials"] == 20000
    assert cfg["tolerances"]["slope"] == 1.25
    assert cfg["tolerances"]["slope_tol"] == 0.08
    assert DEFAULTS["escape"]["tolerances"]["slope"] == -0.75


@pytest.mark.parametrize("raw", [
    {},
    {"kind": "nope"},
    {"kind": "growth", "unknown": 1},
    {"kind": "growth", "params": {"bogus": 1}},
    {"kind": "growth", "tolerances": {"slope": "steep"}},
    {"kind": "growth", "trials": -5},
])
def test_config_rejects_bad_input(raw):
    with pytest.raises(ConfigError):
        resolve_config(raw)


def test_overrides_and_partial_merge():
    cfg = resolve_config({"kind": "growth", "tolerances": {"slope_tol": 0.5}}, seed=9, grid=[4, 8])
    assert cfg["seed"] == 9 and cfg["grid"] == [4, 8]
    assert cfg["tolerances"]["slope_tol"] == 0.5
    assert cfg["tolerances"]["slope"] == 1.25


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(SMALL_GROWTH))
    assert load_config(p, seed=3)["seed"] == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_inline_and_file_lattices(tmp_path):
    tri = triangular_walk()
    inline = json.loads(spec_to_json(tri))
    cfg = resolve_config({"kind": "verify", "lattice": inline})
    assert lattice_of(cfg).fingerprint == tri.fingerprint
    f = tmp_path / "spec.json"
    f.write_text(spec_to_json(tri))
    cfg = resolve_config({"kind": "verify", "lattice": {"file": str(f)}})
    assert lattice_of(cfg).fingerprint == tri.fingerprint
    assert lattice_of(resolve_config({"kind": "verify", "lattice": "lazy"})).fingerprint != tri.fingerprint


def _report(**params):
    return EstimatorReport("Gr", params, 2.5, 0.1, 100, 0, 7, "abc", 0.123)


def test_csv_single_report():
    text = csv_text([_report(n=8)], seed=7)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 2
    assert rows[1][:3] == ["Gr", "8", ""]
    assert rows[1][-1] == ""
    timed = list(csv.reader(io.StringIO(csv_text([_report(n=8)], seed=7, timing=True))))
    assert timed[1][-1] == "123"


def test_emit_is_idempotent_and_atomic(tmp_path):
    result = execute(resolve_config(SMALL_GROWTH))
    a_csv, a_json = emit_report(result, tmp_path / "a")
    b_csv, b_json = emit_report(result, tmp_path / "a")
    assert a_csv.read_bytes() == b_csv.read_bytes()
    first = a_json.read_bytes()
    emit_report(result, tmp_path / "a")
    assert a_json.read_bytes() == first
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["growth.csv", "growth.json"]
    art = json.loads(first)
    assert art["config"] == result.config
    assert art["seed"] == result.config["seed"]
    assert art["version"] and art["spec_fingerprint"] == result.spec_fingerprint
    assert art["fit"]["slope"] == result.fit.slope
    rows = list(csv.reader(io.StringIO(a_csv.read_text())))
    assert len(rows) == 1 + 3
    assert all(len(r) == len(CSV_COLUMNS) for r in rows)


def test_exit_status_follows_verdicts(tmp_path):
    loose = run(dict(SMALL_GROWTH, tolerances={"slope": 1.25, "slope_tol": 5.0}), tmp_path)
    assert loose.exit_status == 0
    tight = run(dict(SMALL_GROWTH, tolerances={"slope": 9.0, "slope_tol": 0.01}), tmp_path)
    assert tight.exit_status == 1
    assert json.loads((tmp_path / "growth.json").read_text())["passed"] is False


def test_csv_bodies_independent_of_workers(tmp_path):
    a = run(dict(SMALL_GROWTH, workers=1), tmp_path / "w1")
    b = run(dict(SMALL_GROWTH, workers=3), tmp_path / "w3")
    assert a.paths[0].read_bytes() == b.paths[0].read_bytes()


def test_compare_matches_and_refuses(tmp_path):
    run(dict(SMALL_GROWTH, seed=1), tmp_path / "s1")
    run(dict(SMALL_GROWTH, seed=2), tmp_path / "s2")
    reports, verdicts = compare_artifacts([tmp_path / "s1/growth.json", tmp_path / "s2/growth.json"], z=5)
    assert len(verdicts) == 3 and all(v.passed for v in verdicts)
    run(dict(SMALL_GROWTH, lattice="triangular"), tmp_path / "t")
    with pytest.raises(FingerprintMismatch):
        compare_artifacts([tmp_path / "s1/growth.json", tmp_path / "t/growth.json"])
    with pytest.raises(ConfigError):
        compare_artifacts([tmp_path / "s1/growth.json"])
    res = run({"kind": "compare", "params": {"inputs": [str(tmp_path / "s1/growth.json"),
                                                        str(tmp_path / "s2/growth.json")]},
               "tolerances": {"z": 5}}, tmp_path / "cmp")
    assert res.exit_status == 0


def test_verify_kind_runs_suites(tmp_path):
    res = run({"kind": "verify", "params": {"instances": 5}}, tmp_path)
    names = {v.name for v in res.verdicts}
    assert {"rwdecomp", "greencondit", "lerw_mass", "htransform", "loop_measure", "dirichlet"} <= names
    assert res.exit_status == 0
