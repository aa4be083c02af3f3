import json
import math
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pon200.cli import main
from pon200.core import ConfigError
from pon200.io import (
    ConfigParseError,
    ExperimentOptions,
    canonical_json,
    config_from_dict,
    config_to_dict,
    emit_csv,
    format_value,
    parse_config,
    parse_config_text,
    read_sweep_csv,
    run_experiment,
    verify_manifest,
)
from pon200.scenarios import SweepRow, build_system_a, build_system_b, compute_link_budget

HEADER = "channel_nm,distance_km,bandwidth_nm,filter_order,gamma_mode,rx_power_dbm,q_factor,min_ber"


def test_bare_variant_gives_paper_defaults():
    assert parse_config_text('{"variant": "A"}') == build_system_a()
    assert parse_config_text('{"variant": "B"}') == build_system_b()
    assert parse_config_text("{}") == build_system_a()


def test_splitter_override_changes_budget():
    cfg = parse_config_text('{"variant": "A", "splitter": {"n_outputs": 64}}')
    assert compute_link_budget(cfg).splitter_loss == pytest.approx(20.06, abs=0.005)


def test_errors_name_the_field():
    with pytest.raises(ConfigError, match="FiberSpec.length"):
        parse_config_text('{"fiber": {"length": -1}}')
    with pytest.raises(ConfigError, match="unknown key.*colour"):
        parse_config_text('{"fiber": {"colour": 1}}')
    with pytest.raises(ConfigError, match="unknown key.*extra"):
        parse_config_text('{"extra": 1}')
    with pytest.raises(ConfigError, match="SplitterSpec.n_outputs must be an integer"):
        parse_config_text('{"splitter": {"n_outputs": 32.5}}')
    with pytest.raises(ConfigError, match="AmplifierSpec.gain must be a number"):
        parse_config_text('{"amplifier": {"gain": "ten"}}')
    with pytest.raises(ConfigError, match="StepConfig.max_step"):
        parse_config_text('{"simulation": {"step": {"max_step": 0}}}')


def test_parse_error_reports_line_and_column():
    with pytest.raises(ConfigParseError, match=r"cfg.json:3:5"):
        parse_config_text('{\n  "variant": "A",\n    oops\n}', "cfg.json")


def test_parse_config_reads_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"variant": "B", "seed": 9}')
    assert parse_config(p) == replace(build_system_b(), seed=9)
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.json")


@pytest.mark.parametrize("build", [build_system_a, build_system_b])
def test_effective_config_round_trip(build):
    cfg = build()
    text = canonical_json(config_to_dict(cfg))
    assert parse_config_text(text) == cfg
    assert canonical_json(config_to_dict(parse_config_text(text))) == text


@given(
    seed=st.integers(0, 2**31),
    gain=st.floats(0, 30, allow_nan=False),
    bw=st.floats(0.1, 20),
    order=st.integers(1, 4),
    n=st.sampled_from([1, 2, 4, 8, 16, 32, 64, 128]),
)
def test_round_trip_property(seed, gain, bw, order, n):
    d = {
        "variant": "A",
        "seed": seed,
        "amplifier": {"gain": gain},
        "mux": {"bandwidth": bw, "order": order},
        "splitter": {"n_outputs": n},
    }
    cfg = config_from_dict(d)
    assert config_from_dict(json.loads(canonical_json(config_to_dict(cfg)))) == cfg


def row(ch=1550.0, d=20.0, bw=7.23, ber=1e-3):
    return SweepRow(ch, d, bw, 1, "default", 1.95, 3.09, ber)


def test_emit_csv_empty_and_single(tmp_path):
    p = emit_csv([], tmp_path / "a.csv")
    assert p.read_bytes() == (HEADER + "\n").encode()
    p = emit_csv([row()], tmp_path / "b.csv")
    lines = p.read_text().split("\n")
    assert lines == [HEADER, "1550.0,20.0,7.23,1,default,1.95,3.09,0.001", ""]


def test_emit_csv_sorted_and_byte_identical(tmp_path):
    rows = [row(1551.6, 20.0), row(1550.0, 22.0), row(1550.0, 20.0, 10.0), row(1550.0, 20.0, 1.8)]
    a = emit_csv(rows, tmp_path / "a.csv").read_bytes()
    b = emit_csv(list(reversed(rows)), tmp_path / "b.csv").read_bytes()
    assert a == b
    assert b"\r" not in a
    back = read_sweep_csv(tmp_path / "a.csv")
    assert [(r.channel_nm, r.distance_km, r.bandwidth_nm) for r in back] == [
        (1550.0, 20.0, 1.8), (1550.0, 20.0, 10.0), (1550.0, 22.0, 7.23), (1551.6, 20.0, 7.23)
    ]  # fmt: skip


def test_emit_csv_unwritable(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        emit_csv([], tmp_path / "no" / "such" / "dir.csv")


@given(st.floats(allow_nan=False))
def test_format_value_round_trips(x):
    assert float(format_value(x)) == x


def test_format_value_types():
    assert format_value(3) == "3"
    assert format_value(True) == "true"
    assert format_value((1550.0, 1551.6)) == "1550.0;1551.6"
    assert format_value(None) == ""
    assert format_value(math.inf) == "inf"
    assert format_value(np.float64(0.1)) == "0.1"
    assert format_value(np.int64(7)) == "7"


def test_budget_experiment(tmp_path):
    m = run_experiment("budget", build_system_a(), tmp_path)
    lines = (tmp_path / "budget.csv").read_text().splitlines()
    assert len(lines) == 2
    rx = float(lines[1].split(",")[6])
    assert rx == pytest.approx(1.95, abs=0.005)
    assert m.outputs == ("budget.csv",)
    assert verify_manifest(tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["gamma_values"] == [1.3]
    assert "software_version" in manifest and "wall_clock_s" in manifest


def test_calibrate_experiment(tmp_path):
    m = run_experiment("calibrate", build_system_a(), tmp_path)
    (line,) = (tmp_path / "calibration.csv").read_text().splitlines()[1:]
    ber = float(line.split(",")[-1])
    assert 1e-14 <= ber <= 1e-10
    assert m.thermal_noise_density == pytest.approx(float(line.split(",")[3]))


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown experiment"):
        run_experiment("eye", build_system_a(), "/tmp/never")


def test_allocate_from_existing_table(tmp_path):
    rows = [row(1550.0, 10.0, ber=1e-20), row(1550.0, 20.0, ber=1e-13), row(1551.6, 10.0, ber=1e-14),
            row(1551.6, 20.0, ber=1e-3)]  # fmt: skip
    emit_csv(rows, tmp_path / "t.csv")
    opts = ExperimentOptions(table=str(tmp_path / "t.csv"), subareas=((0, 10.0, 32), (1, 20.0, 16)))
    run_experiment("allocate", build_system_a(), tmp_path / "out", opts)
    lines = (tmp_path / "out" / "allocation.csv").read_text().splitlines()
    assert lines[1] == "0,10.0,10.0,32,1250000000.0,2,1550.0;1551.6,1550.0"
    assert lines[2] == "1,20.0,20.0,16,2500000000.0,1,1550.0,1550.0"


def test_cli_success_and_errors(tmp_path, capsys):
    assert main(["budget", "--out", str(tmp_path / "o"), "--distances", "20,25"]) == 0
    assert len((tmp_path / "o" / "budget.csv").read_text().splitlines()) == 3
    capsys.readouterr()

    assert main(["frobnicate", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and json.loads(err[0])["type"] == "UsageError"

    bad = tmp_path / "bad.json"
    bad.write_text('{"fiber": {"length": -3}}')
    assert main(["budget", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert "FiberSpec.length" in err["error"]

    assert main(["budget", "--out", str(tmp_path), "--gamma", "loud"]) == 2


def test_console_script_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "pon200.cli", "budget", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert json.loads(out.stdout)["outputs"] == ["budget.csv"]


def test_small_sweep_golden_and_cardinality(tmp_path, small_a):
    cfg = replace(small_a, feeder_length=1.0, fiber=replace(small_a.fiber, length=2.0))
    opts = ExperimentOptions(distances=(1.0, 2.0), gamma_modes=("off", "default"))
    run_experiment("distance-sweep", cfg, tmp_path / "a", opts)
    run_experiment("distance-sweep", cfg, tmp_path / "b", opts)
    a = (tmp_path / "a" / "distance_sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "distance_sweep.csv").read_bytes()
    assert len(a.decode().splitlines()) == 1 + 5 * 2 * 2
