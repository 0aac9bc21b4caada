import json

import numpy as np
import pytest

from heatlab.expctl import (ConfigError, RunConfig, ValidationError, list_presets, preset, preset_text,
                            run, validate)
from heatlab.expctl import runner
from heatlab.expctl.cli import main

SMALL_FREE = """
run.name = small_free
grid.n = 32
grid.L = 6
drift.name = none
kernel.ladder = 0.1,0.2,0.4
verify.suite = envelope,nash,entropy
verify.expect = 1,1,1,1
verify.expect_tol = 0.03
"""


def test_presets_cover_the_catalogue():
    names = list_presets()
    assert len(names) >= 7
    for n in ("free", "hardy", "mprime", "kato_plane", "rotational_bmo", "lps_demo"):
        assert n in names
        assert validate(preset(n)) == []
    with pytest.raises(KeyError):
        preset_text("nope")


def test_parse_errors_name_the_key():
    with pytest.raises(ConfigError) as e:
        RunConfig.parse("grid.n = 32\ngrid.bogus = 1\n")
    assert e.value.key == "grid.bogus"
    with pytest.raises(ConfigError) as e:
        RunConfig.parse("grid.n = 32\ngrid.n = 64\n")
    assert e.value.key == "grid.n"
    with pytest.raises(ConfigError) as e:
        RunConfig.parse("grid.L = wide\n")
    assert e.value.key == "grid.L"


def test_validation_diagnostics():
    # sup |b| <= 3 kappa / h for the sampled Hardy drift: 0.02 * 16 / 0.1875 > 0.5
    bad = RunConfig.parse(SMALL_FREE.replace("drift.name = none", "drift.name = hardy\ndrift.kappa = 1")
                          .replace("grid.n = 32", "grid.n = 64") + "kernel.dt = 0.02\n")
    diags = validate(bad)
    assert any(d.key == "kernel.dt" and "CFL" in d.message for d in diags)
    unknown = RunConfig.parse(SMALL_FREE.replace("drift.name = none", "drift.name = swirl"))
    assert [d.key for d in validate(unknown)] == ["drift.name"]
    short = RunConfig.parse(SMALL_FREE.replace("kernel.ladder = 0.1,0.2,0.4", "kernel.ladder = 0.1,0.2"))
    assert any(d.key == "kernel.ladder" for d in validate(short))
    with pytest.raises(ValidationError):
        run(bad)


def test_hash_ignores_output_dir_and_comments():
    a = RunConfig.parse(SMALL_FREE)
    b = RunConfig.parse("# a comment\n" + SMALL_FREE + "output.dir = elsewhere\n")
    c = RunConfig.parse(SMALL_FREE.replace("grid.L = 6", "grid.L = 6.5"))
    assert a.hash == b.hash != c.hash
    assert RunConfig.parse(a.to_text()).hash == a.hash


def test_seed_streams_are_independent_and_reproducible():
    a = RunConfig.parse(SMALL_FREE + "run.seed = 7\n")
    x = a.rng("drift-classes").normal(size=4)
    y = a.rng("nash-verify").normal(size=4)
    assert not np.allclose(x, y)
    assert np.array_equal(x, RunConfig.parse(SMALL_FREE + "run.seed = 7\n").rng("drift-classes").normal(size=4))


@pytest.fixture(scope="module")
def free_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("free")
    return run(RunConfig.parse(SMALL_FREE), out)


def test_free_run_recovers_the_heat_kernel(free_run):
    assert free_run.status == "pass" and free_run.exit_code == 0
    names = {c.name for c in free_run.checks}
    assert any(n.startswith("entropy") for n in names)
    man = json.loads((free_run.out / "manifest.json").read_text())
    assert man["status"] == "pass" and man["config_hash"] == RunConfig.parse(SMALL_FREE).hash
    rows = (free_run.out / "envelope_fits.csv").read_text().splitlines()
    head = rows[0].split(",")
    vals = dict(zip(head, rows[1].split(",")))
    for k in ("c1", "c2", "c3", "c4"):
        assert float(vals[k]) == pytest.approx(1.0, abs=0.03)


def test_reruns_are_byte_identical(free_run, tmp_path):
    again = run(RunConfig.parse(SMALL_FREE), tmp_path)
    for f in ("envelope_fits.csv", "nash_trace.csv", "checks.csv"):
        assert (again.out / f).read_bytes() == (free_run.out / f).read_bytes()


def test_stage_failure_writes_partial_manifest(monkeypatch, tmp_path):
    def boom(ctx):
        raise RuntimeError("solver diverged")

    monkeypatch.setitem(runner.STAGE_FUNCS, "evolve", boom)
    res = run(RunConfig.parse(SMALL_FREE), tmp_path)
    assert res.status == "error" and res.exit_code == 2
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["stages"]["failed"] == "evolve"
    assert man["stages"]["completed"] == ["classify", "regularize"]
    assert "solver diverged" in man["error"] and "traceback" in man


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "free.cfg"
    cfg.write_text(SMALL_FREE)
    assert main(["validate", str(cfg)]) == 0
    assert "ok " in capsys.readouterr().out
    assert main(["validate", str(cfg), "--set", "drift.name=swirl"]) == 1
    assert main(["validate", "no_such_thing"]) == 2
    assert main(["presets"]) == 0
    assert "free" in capsys.readouterr().out
    assert main(["presets", "--show", "nope"]) == 2
    # an unreachable expectation turns into exit code 1
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--set", "verify.expect=2,1,2,1"]) == 1
