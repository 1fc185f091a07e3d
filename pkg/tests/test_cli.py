import csv
import io
import json
import math

import numpy as np
import pytest

from risisac.cli import (
    CsvFormatError,
    local_minima,
    main,
    read_sweep_csv,
    summarize,
)
from risisac.config import parse_config

# eta = 300 at 10 MHz gives 6667 slots; decimating by 2000 keeps 4 of them.  The target moves
# metres between those slots, so some slots fail by design; the budget is lifted for these runs.
FAST = ["--decimate", "2000", "--inner-sca", "2", "--max-failed-frac", "1.0"]


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(["run", "--out", str(out), *FAST, *args])
    return code, out


def test_grid_product_rows(tmp_path):
    code, out = run(tmp_path, "--eta", "300,400", "--rho", "-120", "--seeds", "2")
    assert code == 0
    rows = read_sweep_csv(out / "sweep.csv")
    assert len(rows) == 2 * 2
    assert [(r["eta"], r["seed"]) for r in rows] == [(300, 0), (300, 1), (400, 0), (400, 1)]


def test_output_schemas(tmp_path):
    code, out = run(tmp_path, "--eta", "300", "--rho=-120,-118")
    assert code == 0
    with open(out / "slots.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["eta", "rho_db", "seed", "t", "tau", "r_1", "r_2",
                      "gamma_s_planned", "gamma_s_realized", "outage", "psi"]
    with open(out / "curves.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["eta", "rho_db", "seed", "t", "cts_1", "cts_2"]
    with open(out / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["eta", "rho_db", "seed"] and len(rows) == 3
    for path in ("slots.csv", "curves.csv", "sweep.csv"):
        with open(out / path) as fh:
            body = list(csv.DictReader(fh))
        for rec in body:
            for key, cell in rec.items():
                if key != "error":
                    assert math.isfinite(float(cell)), (path, key, cell)


def test_seventeen_digit_round_trip(tmp_path):
    _, out = run(tmp_path, "--eta", "300", "--rho", "-120")
    with open(out / "slots.csv") as fh:
        rows = list(csv.DictReader(fh))
    for rec in rows:
        for key in ("gamma_s_realized", "r_1", "psi"):
            x = float(rec[key])
            assert format(x, ".17g") == rec[key]


def test_repeated_runs_are_byte_identical(tmp_path):
    args = ("--eta", "300", "--rho", "-120", "--seeds", "2", "--seed-base", "42")
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    for name in ("sweep.csv", "slots.csv", "curves.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_manifest(tmp_path):
    cfg_path = tmp_path / "c.toml"
    cfg_path.write_text("system.r_des = 25e6\n")
    _, out = run(tmp_path, "--config", str(cfg_path), "--eta", "300", "--rho", "-120", "--seeds", "1")
    man = json.loads((out / "manifest.json").read_text())
    assert man["eta"] == [300] and man["rho_db"] == [-120.0] and man["seeds"] == [0]
    assert man["code_version"] == "0.1.0"
    assert "started" in man and "finished" in man
    from risisac.cli import resolve_config, build_parser

    args = build_parser().parse_args(["run", "--config", str(cfg_path), "--eta", "300", "--rho=-120",
                                      "--seeds", "1", *FAST])
    assert man["config_checksum"] == resolve_config(args).checksum()
    assert parse_config(cfg_path).r_des == 25e6


def test_full_scale_toggle():
    from risisac.cli import build_parser, resolve_config

    desk = resolve_config(build_parser().parse_args(["run"]))
    full = resolve_config(build_parser().parse_args(["run", "--full-scale"]))
    assert (desk.ris_rows, desk.decimate) == (16, 8)
    assert (full.ris_rows, full.ris_cols, full.decimate) == (50, 50, 1)


def test_desk_scale_respects_explicit_config(tmp_path):
    from risisac.cli import build_parser, resolve_config

    path = tmp_path / "c.toml"
    path.write_text("system.ris_rows = 4\noptim.decimate = 3\n")
    cfg = resolve_config(build_parser().parse_args(["run", "--config", str(path)]))
    assert (cfg.ris_rows, cfg.ris_cols, cfg.decimate) == (4, 16, 3)
    cfg = resolve_config(build_parser().parse_args(["run", "--config", str(path), "--decimate", "5"]))
    assert cfg.decimate == 5


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("system.epsilon = 2\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o")]) == 1


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert main(["run", "--out", str(blocker / "sub"), *FAST, "--eta", "300", "--rho", "-120"]) == 3


def test_solver_failure_budget_exit_code(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("system.rho_db = 0.0\nsystem.p_tx_dbm = 60.0\n")
    code, _ = run(tmp_path, "--config", str(cfg), "--eta", "300", "--rho", "0", "--max-failed-frac", "0.5")
    assert code == 2
    code, _ = run(tmp_path, "--eta", "300", "--rho", "-120", name="ok")
    assert code == 0


def write_sweep(path, rows):
    header = ["eta", "rho_db", "seed", "cts_1", "cts_2", "outage_probability", "sinr_variance",
              "n_slots", "n_failed", "error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for eta, rho, seed, outage, var in rows:
            w.writerow([eta, rho, seed, 0, 0, outage, var, 10, 0, ""])


def test_summarize_single_row(tmp_path):
    p = tmp_path / "s.csv"
    write_sweep(p, [(125, -120, 0, 0.25, 3.0)])
    buf = io.StringIO()
    summarize(p, buf)
    text = buf.getvalue()
    assert "0.2500 +- 0.0000" in text


def test_summarize_warns_on_rho_order(tmp_path):
    p = tmp_path / "s.csv"
    write_sweep(p, [(125, -120, 0, 0.4, 1.0), (125, -118, 0, 0.2, 1.0),
                    (150, -120, 0, 0.1, 1.0), (150, -118, 0, 0.3, 1.0)])
    buf = io.StringIO()
    summarize(p, buf)
    warnings = [line for line in buf.getvalue().splitlines() if line.startswith("warning")]
    assert warnings == ["warning: eta=125: mean outage at rho=-118 dB below rho=-120 dB"]


def test_summarize_local_minimum_detection(tmp_path):
    p = tmp_path / "s.csv"
    write_sweep(p, [(125, -118, 0, 0, 3.0), (150, -118, 0, 0, 2.0), (200, -118, 0, 0, 1.0)])
    buf = io.StringIO()
    verdicts = summarize(p, buf)
    assert verdicts == {-118.0: []}
    assert "no local minimum" in buf.getvalue()
    write_sweep(p, [(125, -118, 0, 0, 3.0), (150, -118, 0, 0, 1.0), (200, -118, 0, 0, 2.0)])
    assert summarize(p, io.StringIO()) == {-118.0: [150]}
    assert local_minima([1, 2, 3, 4], [2.0, 1.0, 3.0, 0.5]) == [2]


def test_summarize_rejects_malformed_csv(tmp_path):
    p = tmp_path / "s.csv"
    write_sweep(p, [(125, -120, 0, 0.1, 1.0)])
    with open(p, "a") as fh:
        fh.write("150,-120,0,0,0,zero,1.0,10,0,\n")
    with pytest.raises(CsvFormatError, match=r":3: column 'outage_probability'"):
        read_sweep_csv(p)
    assert main(["summarize", str(p)]) == 1
    with open(p, "a") as fh:
        fh.write("1,2\n")
    with pytest.raises(CsvFormatError, match=":3:"):
        read_sweep_csv(p)


def test_sweep_round_trip(tmp_path):
    from risisac.cli import write_artifacts
    from risisac.scenario import SweepResult

    res = [SweepResult(125, -120.0, 0, np.array([1 / 3, 2 / 7]), 0.123456789012345678, math.pi, np.array([]),
                       5, 1)]
    write_artifacts(res, tmp_path, 2, 20e6)
    rec = read_sweep_csv(tmp_path / "sweep.csv")[0]
    assert rec["cts_1"] == 1 / 3 and rec["cts_2"] == 2 / 7
    assert rec["outage_probability"] == 0.123456789012345678 and rec["sinr_variance"] == math.pi
    assert (rec["eta"], rec["seed"], rec["n_slots"], rec["n_failed"]) == (125, 0, 5, 1)


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "risisac", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "summarize" in out.stdout
