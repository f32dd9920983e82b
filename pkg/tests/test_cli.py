"""Command-line front end, driven end to end on a shrunken system."""

import subprocess
import sys

import numpy as np
import pytest

from riscouple.channels import load_ensemble
from riscouple.cli import main
from riscouple.experiments import read_records
from riscouple.scattering import make_design
from riscouple.surface_design import load_design, save_design

CONFIG_TEXT = """
# shrunken system for fast end-to-end runs
n_bs_antennas = 2
n_users = 1
n_ris_elements = 4
q_train = 2
e_eval = 2
channel_seed = 31
outer_iterations = 1
inner_alternations = 5
ris_gradient_steps = 1
power_grid_dbm = 10, 20
m_grid = 4, 9
schemes = proposed_mc_optimized, conventional_no_mc
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text(CONFIG_TEXT)
    channels = root / "channels.bin"
    assert main(["gen-channels", "--config", str(cfg),
                 "--out", str(channels)]) == 0
    return {"root": root, "cfg": str(cfg), "channels": str(channels)}


def test_gen_channels_writes_loadable_ensemble(workdir):
    ens = load_ensemble(workdir["channels"])
    assert ens.q_train == 2 and ens.e_eval == 2
    assert ens.params.n_ris_elements == 4
    assert ens.seed == 31


def test_gen_channels_seed_override_changes_output(workdir, tmp_path):
    other = tmp_path / "other.bin"
    assert main(["gen-channels", "--config", workdir["cfg"], "--seed", "77",
                 "--out", str(other)]) == 0
    assert load_ensemble(other).seed == 77
    a = open(workdir["channels"], "rb").read()
    assert a != other.read_bytes()


def test_train_writes_design_and_trace(workdir):
    root = workdir["root"]
    design_path = root / "design.txt"
    trace_path = root / "trace.csv"
    code = main(["train", "--config", workdir["cfg"],
                 "--channels", workdir["channels"],
                 "--out", str(design_path), "--trace", str(trace_path)])
    assert code == 0
    design, meta = load_design(design_path)
    assert design.n_elements == 4
    assert design.circle_residual() <= 1e-12
    assert len(meta["config_hash"]) == 12
    lines = trace_path.read_text().splitlines()
    assert lines[0].startswith("iteration,objective_mean")
    assert len(lines) == 2      # one training iteration


def test_train_is_deterministic(workdir, tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for out in (a, b):
        assert main(["train", "--config", workdir["cfg"],
                     "--channels", workdir["channels"],
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_eval_baseline_writes_one_record(workdir, tmp_path):
    out = tmp_path / "eval.csv"
    assert main(["eval", "--config", workdir["cfg"],
                 "--channels", workdir["channels"],
                 "--out", str(out)]) == 0
    records = read_records(out)
    assert len(records) == 1
    assert records[0].scheme == "conventional_no_mc"
    assert records[0].n_eval_channels == 2
    assert np.isfinite(records[0].mean_sum_rate_bits)


def test_eval_trained_design(workdir, tmp_path):
    design_path = workdir["root"] / "design.txt"
    out = tmp_path / "eval.csv"
    assert main(["eval", "--config", workdir["cfg"],
                 "--channels", workdir["channels"],
                 "--design", str(design_path), "--out", str(out)]) == 0
    records = read_records(out)
    assert records[0].scheme == "proposed_mc_optimized"


def test_eval_proposed_without_design_fails(workdir, tmp_path, capsys):
    code = main(["eval", "--config", workdir["cfg"],
                 "--channels", workdir["channels"],
                 "--scheme", "proposed_mc_optimized",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigError:")


def test_eval_design_size_mismatch_fails(workdir, tmp_path, capsys):
    big = make_design(np.zeros(9), np.ones(9))
    design_path = tmp_path / "big.txt"
    save_design(big, design_path, seed=0, config_digest="0" * 12)
    code = main(["eval", "--config", workdir["cfg"],
                 "--channels", workdir["channels"],
                 "--design", str(design_path),
                 "--out", str(tmp_path / "x.csv")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error: DimensionError:")


def test_sweep_writes_table_and_figure(workdir, tmp_path):
    out_dir = tmp_path / "sweep"
    assert main(["sweep", "--config", workdir["cfg"], "--axis", "power_dbm",
                 "--out-dir", str(out_dir)]) == 0
    csv_path = out_dir / "records.csv"
    svg_path = out_dir / "records.svg"
    records = read_records(csv_path)
    assert len(records) == 4                    # 2 powers x 2 schemes
    assert svg_path.read_bytes()[:5] == b"<?xml"


def test_sweep_grid_override_and_determinism(workdir, tmp_path):
    dirs = [tmp_path / "s1", tmp_path / "s2"]
    for d in dirs:
        assert main(["sweep", "--config", workdir["cfg"],
                     "--axis", "power_dbm", "--grid", "15",
                     "--out-dir", str(d)]) == 0
    a, b = [(d / "records.csv").read_bytes() for d in dirs]
    assert a == b
    recs = read_records(dirs[0] / "records.csv")
    assert {r.p_dbm for r in recs} == {15.0}
    sa, sb = [(d / "records.svg").read_bytes() for d in dirs]
    assert sa == sb


def test_plot_rerenders_from_table(workdir, tmp_path):
    out_dir = tmp_path / "sweep"
    assert main(["sweep", "--config", workdir["cfg"], "--axis", "power_dbm",
                 "--out-dir", str(out_dir)]) == 0
    fig = tmp_path / "again.svg"
    assert main(["plot", "--records", str(out_dir / "records.csv"),
                 "--out", str(fig)]) == 0
    assert fig.read_bytes() == (out_dir / "records.svg").read_bytes()


def test_missing_input_file_is_a_runtime_error(tmp_path, capsys):
    code = main(["plot", "--records", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "x.svg")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error: ")


def test_bad_config_line_is_reported_with_location(workdir, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_users = zebra\n")
    code = main(["gen-channels", "--config", str(cfg),
                 "--out", str(tmp_path / "x.bin")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigError:")
    assert "bad.cfg:1" in err


@pytest.mark.parametrize("argv", [
    ["--frobnicate"],
    ["train"],                          # missing required arguments
    ["sweep", "--axis", "frequency", "--out-dir", "x"],
    [],
])
def test_usage_errors_exit_two(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == 2


@pytest.mark.parametrize("axis,grid", [
    ("power_dbm", "10,abc"),
    ("n_ris_elements", "4,x"),
])
def test_malformed_grid_value_is_a_config_error(workdir, tmp_path, capsys,
                                                axis, grid):
    code = main(["sweep", "--config", workdir["cfg"], "--axis", axis,
                 "--grid", grid, "--out-dir", str(tmp_path / "g")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigError:")
    assert grid in err


def test_verbose_notes_go_to_stderr(workdir, tmp_path, capsys):
    out = tmp_path / "v.bin"
    assert main(["-v", "gen-channels", "--config", workdir["cfg"],
                 "--out", str(out)]) == 0
    assert "wrote 2+2 channels" in capsys.readouterr().err


def test_module_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "riscouple.cli", "--help"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert "gen-channels" in proc.stdout
