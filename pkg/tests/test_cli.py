import json
import math

import pytest

from isingperc import cli


def run(tmp_path, *args, capsys=None):
    code = cli.main([*args, "--output-dir", str(tmp_path)])
    out = capsys.readouterr().out if capsys is not None else ""
    return code, out


def test_rs_command_writes_csv(tmp_path, capsys, sol001):
    code, out = run(tmp_path, "rs", "alpha=0.01", capsys=capsys)
    assert code == cli.EXIT_OK
    lines = (tmp_path / "rs.csv").read_text().strip().splitlines()
    assert len(lines) == 2
    header = lines[0].split(",")
    row = dict(zip(header, lines[1].split(",")))
    assert abs(float(row["q"]) - sol001.q) < 1e-12
    # the Onsager identity beta' = 1 - q holds in the emitted row
    assert abs(float(row["beta_acute"]) - (1.0 - float(row["q"]))) < 1e-8
    head = json.loads((tmp_path / "rs_header.json").read_text())
    assert head["command"] == "rs"
    assert head["seed"] == 0
    assert "timestamp" in head
    # effective config echoed on stdout as the first line
    cfg = json.loads(out.splitlines()[0])
    assert cfg["alpha"] == 0.01


def test_sweep_matches_rs_rows(tmp_path, capsys):
    code, _ = run(tmp_path / "a", "rs", "alpha=0.005", capsys=capsys)
    assert code == cli.EXIT_OK
    code, _ = run(tmp_path / "b", "sweep", "alpha_list=0.005,0.01",
                  capsys=capsys)
    assert code == cli.EXIT_OK
    rs_lines = (tmp_path / "a" / "rs.csv").read_text().strip().splitlines()
    sw_lines = (tmp_path / "b" / "sweep.csv").read_text().strip().splitlines()
    assert sw_lines[0] == rs_lines[0]
    assert sw_lines[1] == rs_lines[1]
    assert len(sw_lines) == 3


def test_se_command(tmp_path, capsys):
    code, _ = run(tmp_path, "se", "alpha=0.01", "t_max=6", capsys=capsys)
    assert code == cli.EXIT_OK
    lines = (tmp_path / "se.csv").read_text().strip().splitlines()
    assert lines[0].startswith("step,")
    assert len(lines) == 7  # header + 6 steps


def test_enumerate_byte_identical_reruns(tmp_path, capsys):
    args = ["enumerate", "N=12", "alpha=0.25", "--seed", "3"]
    code, _ = run(tmp_path / "r1", *args, capsys=capsys)
    assert code == cli.EXIT_OK
    code, _ = run(tmp_path / "r2", *args, capsys=capsys)
    assert code == cli.EXIT_OK
    a = (tmp_path / "r1" / "enumerate.json").read_bytes()
    b = (tmp_path / "r2" / "enumerate.json").read_bytes()
    assert a == b
    rec = json.loads(a)
    assert rec["N"] == 12 and rec["M"] == 3 and rec["seed"] == 3
    # headers are identical apart from the isolated timestamp field
    ha = json.loads((tmp_path / "r1" / "enumerate_header.json").read_text())
    hb = json.loads((tmp_path / "r2" / "enumerate_header.json").read_text())
    del ha["timestamp"], hb["timestamp"]
    # output_dir legitimately differs between the two runs
    ha["effective_config"].pop("output_dir")
    hb["effective_config"].pop("output_dir")
    assert ha == hb


def test_enumerate_flat_activation(tmp_path, capsys):
    code, _ = run(tmp_path, "enumerate", "kind=band", "params=-50,50",
                  "N=10", "alpha=0.2", capsys=capsys)
    assert code == cli.EXIT_OK
    rec = json.loads((tmp_path / "enumerate.json").read_text())
    assert rec["count_feasible"] == 1 << 10
    assert abs(rec["logZ"] - 10 * math.log(2.0)) < 1e-12


def test_experiment_mode(tmp_path, capsys):
    code, _ = run(tmp_path, "enumerate", "experiment=1", "alpha=0.01",
                  "N_list=12", "samples_per_N=3", capsys=capsys)
    assert code == cli.EXIT_OK
    lines = (tmp_path / "experiment.csv").read_text().strip().splitlines()
    assert lines[0] == ("N,M,samples,mean_logZ_per_spin,stderr,"
                        "rs_reference,deviation,zero_Z_events")
    assert len(lines) == 2


def test_constants_command(tmp_path, capsys):
    code, _ = run(tmp_path, "constants", capsys=capsys)
    assert code == cli.EXIT_OK
    rec = json.loads((tmp_path / "constants.json").read_text())
    assert rec["mode"] == "empirical"
    assert rec["c1_empirical"] > 0


def test_config_file_and_override_precedence(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# comment line\nalpha = 0.005\nkind = halfspace\n")
    code, out = cli.main(["rs", "--config", str(cfgfile), "alpha=0.01",
                          "--output-dir", str(tmp_path)]), \
        capsys.readouterr().out
    assert code == cli.EXIT_OK
    cfg = json.loads(out.splitlines()[0])
    assert cfg["alpha"] == 0.01  # command line wins over the file


def test_exit_code_usage_errors(tmp_path):
    assert cli.main(["rs", "alpha=-1", "--output-dir",
                     str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["rs", "bogus_key=1", "--output-dir",
                     str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["rs", "--config", str(tmp_path / "missing.cfg"),
                     "--output-dir", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["nosuchcommand"]) == cli.EXIT_USAGE


def test_exit_code_numerical_failure(tmp_path):
    # alpha = 0.1 has no fixed point inside the default scan window
    assert cli.main(["rs", "alpha=0.1", "--output-dir",
                     str(tmp_path)]) == cli.EXIT_NUMERICAL


def test_parse_config_rejects_garbage():
    with pytest.raises(ValueError):
        cli.parse_config_text("this is not a key value line\n")
