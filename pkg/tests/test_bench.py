import math

import numpy as np
import pytest

from orthopost.bench import EOC_COLUMNS, ConvergenceTable, RunConfig, eoc, read_csv, run_convergence, write_csv
from orthopost.cli import main, read_config


def test_eoc_of_cubic_decay():
    r = eoc([1.0, 1 / 8, 1 / 64])
    assert math.isnan(r[0]) and np.allclose(r[1:], 3.0)


def test_csv_round_trip(tmp_path):
    rows = [{c: float(k + j) for j, c in enumerate(EOC_COLUMNS)} for k in range(3)]
    path = tmp_path / "eoc.csv"
    write_csv(path, rows, EOC_COLUMNS)
    assert path.read_text().splitlines()[0] == ",".join(EOC_COLUMNS)
    back = read_csv(path)
    assert back == rows


def test_one_level_table_has_no_rates():
    cfg = RunConfig(problem="smooth1d", p=1, levels=1, n0=10)
    t = run_convergence(cfg)
    assert len(t.rows) == 1 and set(EOC_COLUMNS) <= set(t.rows[0])
    assert np.isnan(t.rates("err_L2_uh")).all()
    assert "level" in t.format()


def test_convergence_writes_outputs(tmp_path):
    cfg = RunConfig(problem="smooth1d", p=1, levels=2, n0=10, out=str(tmp_path))
    t = run_convergence(cfg)
    assert isinstance(t, ConvergenceTable)
    rows = read_csv(tmp_path / "eoc.csv")
    assert [r["n_cells"] for r in rows] == [10.0, 20.0]
    for name in ("uh.dat", "ustar.dat", "ustarstar.dat"):
        assert (tmp_path / name).stat().st_size > 0


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(problem="smooth2d", post="siac").validate()
    with pytest.raises(ValueError):
        RunConfig(problem="smooth1d", post="spr").validate()
    with pytest.raises(KeyError):
        RunConfig(problem="unknown").validate()


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# a run\nproblem = smooth1d\np = 3   # cubic\nhyper = true\nmirror-left = even\nlevels=2\n")
    cfg = RunConfig.from_mapping(read_config(path))
    assert (cfg.problem, cfg.p, cfg.hyper, cfg.mirror_left, cfg.levels) == ("smooth1d", 3, True, "even", 2)
    assert cfg.penalty.mode == "hyper"
    bad = tmp_path / "bad.cfg"
    bad.write_text("problem smooth1d\n")
    with pytest.raises(ValueError, match="bad.cfg:1"):
        read_config(bad)


def test_cli_converge(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("problem = smooth1d\nlevels = 3\n")
    assert main(["converge", "--config", str(cfg), "--p", "1", "--n0", "10", "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert len(out.strip().splitlines()) == 4
    assert (tmp_path / "o" / "eoc.csv").exists()


def test_cli_adapt(tmp_path, capsys):
    rc = main(["adapt", "--problem", "corner2d", "--p", "1", "--post", "spr", "--tol", "1e6", "--out", str(tmp_path)])
    assert rc == 0
    assert "converged" in capsys.readouterr().out
    assert read_csv(tmp_path / "history.csv")[0]["iter"] == 0.0


def test_cli_kernel_info(capsys):
    assert main(["kernel-info", "--p", "1"]) == 0
    out = capsys.readouterr().out
    assert "r = 1, m = 1" in out
    coef = [float(line.split("=")[1]) for line in out.splitlines() if line.strip().startswith("c[")]
    assert np.allclose(coef, [-1 / 12, 7 / 6, -1 / 12], atol=1e-14)


def test_cli_self_check(capsys):
    assert main(["self-check"]) == 0
    assert capsys.readouterr().out.count("ok") == 5


def test_cli_reports_bad_input(capsys):
    assert main(["converge", "--problem", "nope"]) == 2
    assert "unknown problem" in capsys.readouterr().err
    assert main(["converge", "--problem", "smooth2d", "--post", "siac"]) == 2
