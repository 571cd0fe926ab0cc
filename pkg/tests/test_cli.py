import json
import struct

import numpy as np
import pytest

from chemoreg.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    RunConfig,
    main,
    read_checkpoint,
    read_key_values,
    write_checkpoint,
)
from chemoreg.grid import ScalarField, make_domain

FAST = ["--set", "t_end=0.004", "--set", "snapshot_interval=0.0001", "--set", "cells_per_dim=128"]
ALL_DIAGS = (
    "energy_below,energy_above,log_budget,level_sets,measure_sequences,decay_trace,"
    "holder,lemma_below,lemma_above,time_propagation,shrinking_measure"
)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["simulate", "--out", str(out), *FAST]) == EXIT_OK
    return out


@pytest.mark.parametrize("dim,n", [(1, 16), (2, 8), (3, 8)])
def test_checkpoint_round_trip(tmp_path, dim, n):
    d = make_domain(dim, 1.5, n)
    vals = np.random.default_rng(dim).normal(size=d.shape)
    vals.flat[0] = np.nextafter(0.0, 1.0)
    f = ScalarField(d, vals, 0.123456789)
    p = tmp_path / "f.bin"
    write_checkpoint(p, f, "u")
    g, name = read_checkpoint(p)
    assert name == "u"
    assert g.values.tobytes() == f.values.tobytes()
    assert g.time == f.time and g.domain == d
    raw = p.read_bytes()
    (n,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4 : 4 + n])
    assert header["endianness"] == "LE" and header["dtype"] == "f64"
    assert raw.endswith(vals.astype("<f8").tobytes())


def test_checkpoint_truncated_file_is_io_error(tmp_path):
    d = make_domain(1, 1.0, 16)
    p = tmp_path / "f.bin"
    write_checkpoint(p, ScalarField(d, np.ones(16)), "u")
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(OSError):
        read_checkpoint(p)


def test_simulate_outputs(run_dir):
    header = (run_dir / "steps.csv").read_text().splitlines()[0]
    assert header == "step,t,dt,mass_u,mass_v,min_u,max_u"
    snaps = sorted((run_dir / "snapshots").glob("u_*.bin"))
    assert len(snaps) == 41 and len(list((run_dir / "snapshots").glob("v_*.bin"))) == 41
    meta = json.loads((run_dir / "meta.json").read_text())
    assert meta["relative_mass_drift"] < 1e-10 and meta["min_u"] >= 0


def test_simulate_is_deterministic(tmp_path, run_dir):
    assert main(["simulate", "--out", str(tmp_path), *FAST]) == EXIT_OK
    assert (tmp_path / "steps.csv").read_bytes() == (run_dir / "steps.csv").read_bytes()
    for p in sorted((run_dir / "snapshots").iterdir()):
        assert (tmp_path / "snapshots" / p.name).read_bytes() == p.read_bytes()


def test_zero_horizon_writes_one_pair(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "t_end=0"]) == EXIT_OK
    assert len(list((tmp_path / "snapshots").iterdir())) == 2


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nm = 0.5\nt_end = 0\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--set", "chi=0.25"]) == EXIT_OK
    saved = read_key_values((tmp_path / "o" / "run.cfg").read_text())
    assert saved["m"] == "0.5" and saved["chi"] == "0.25"


def test_bad_exponent_exit_code(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), "--set", "m=1.5"]) == EXIT_CONFIG
    assert "m < 1" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["bogus = 1\n", "m = 0.5\nm = 0.6\n", "m 0.5\n", "cells_per_dim = many\n"])
def test_config_errors(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config_is_io(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == EXIT_IO


def test_run_config_defaults_valid():
    assert RunConfig().model_params().m == 0.6


def test_convergence_rejects_drift(capsys):
    assert main(["convergence", "--set", "chi=0.1", "--set", "u0=barenblatt"]) == EXIT_CONFIG


def test_convergence_single_row(capsys):
    args = ["convergence", "--refinements", "1", "--set", "chi=0", "--set", "u0=barenblatt", "--set", "m=0.5",
            "--set", "t_end=0.001", "--set", "cells_per_dim=64"]
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "h,L1_error,observed_order" and len(lines) == 2 and lines[1].endswith(",")


def test_diagnose_empty(run_dir, capsys):
    assert main(["diagnose", str(run_dir)]) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_diagnose_all_kinds(run_dir, tmp_path):
    out = tmp_path / "d.ndjson"
    args = ["diagnose", str(run_dir), "--set", f"diagnostics={ALL_DIAGS}", "--set", "radius=0.2",
            "--set", "theta=0.02", "--out", str(out)]
    assert main(args) == EXIT_OK
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert {r["type"] for r in recs} == set(ALL_DIAGS.split(","))
    for r in recs:
        assert {"center", "radius", "theta", "t_vertex"} <= r.keys()


def test_diagnose_threads_identical(run_dir, tmp_path):
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"d{threads}.ndjson"
        args = ["diagnose", str(run_dir), "--set", f"diagnostics={ALL_DIAGS}", "--set", "radius=0.2",
                "--set", "theta=0.02", "--threads", str(threads), "--seed", "9", "--out", str(out)]
        assert main(args) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_decay_trace_on_single_snapshot_run(tmp_path, capsys):
    main(["simulate", "--out", str(tmp_path), "--set", "t_end=0"])
    capsys.readouterr()
    assert main(["diagnose", str(tmp_path), "--set", "diagnostics=decay_trace"]) == EXIT_OK
    rec = json.loads(capsys.readouterr().out)
    assert rec["truncated"] is True and rec["passes"] is False


def test_diagnose_uncovered_cylinder(run_dir, capsys):
    assert main(["diagnose", str(run_dir), "--set", "diagnostics=energy_below"]) == EXIT_IO
    assert "not covered" in capsys.readouterr().err


def test_diagnose_missing_run(tmp_path):
    assert main(["diagnose", str(tmp_path), "--set", "diagnostics=holder"]) == EXIT_IO


def test_diagnose_unknown_kind(run_dir):
    assert main(["diagnose", str(run_dir), "--set", "diagnostics=nonsense"]) == EXIT_CONFIG


def test_lemmas_vacuous(capsys):
    assert main(["lemmas", "--counts", "0"]) == EXIT_OK
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(recs) == 3 and all(r["passed"] for r in recs)


def test_lemmas_reproducible(capsys):
    args = ["lemmas", "--seed", "3", "--geo", "10", "--iso", "20", "--embed", "4"]
    assert main(args) == EXIT_OK
    first = capsys.readouterr().out
    assert main(args + ["--threads", "3"]) == EXIT_OK
    assert capsys.readouterr().out == first
