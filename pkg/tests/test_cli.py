"""Command-line interface: outputs, manifest round-trip, exit codes."""

import json

import numpy as np
import pytest

from nmqj.cli import main


def _read_csv(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    header = rows[0].strip().split(",")
    data = np.array([[float(v) for v in r.strip().split(",")]
                     for r in rows[1:]])
    return header, data


def test_simulate_outputs_and_reproducibility(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--preset", "tla_fig2", "--samples", "200",
            "--tend", "0.5", "--seed", "1"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0

    header, occ = _read_csv(out1 / "occupations.csv")
    assert header == ["t", "N_0", "N_1"]
    assert occ[0, 1] == 200  # everyone starts undecayed
    assert np.all(occ[:, 1] + occ[:, 2] == 200)

    for name in ("occupations.csv", "trajectories.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    m1["config"].pop("out"), m2["config"].pop("out")
    assert m1["config"] == m2["config"]

    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 1
    assert len(manifest["config_hash"]) == 64
    assert "occupations.csv" in manifest["outputs"]


def test_trajectories_csv_has_three_realizations(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--preset", "tla_fig2", "--samples", "50",
                 "--tend", "0.2", "--out", str(out)]) == 0
    header, data = _read_csv(out / "trajectories.csv")
    assert header == ["time_index", "realization_index", "label"]
    assert set(np.unique(data[:, 1])) == {0.0, 1.0, 2.0}
    n_t = int(data[:, 0].max()) + 1
    assert len(data) == 3 * n_t


def test_flat_trajectory_single_sample(tmp_path):
    out = tmp_path / "flat"
    model_file = tmp_path / "model.json"
    model_file.write_text(json.dumps({
        "family": "tla", "channels": [{"gamma0": 0.0, "delta": 0.0}]}))
    assert main(["simulate", "--model-file", str(model_file), "--samples",
                 "1", "--tend", "0.5", "--out", str(out)]) == 0
    _, data = _read_csv(out / "trajectories.csv")
    assert np.all(data[:, 2] == 0)


def test_master_eq_mode(tmp_path):
    out = tmp_path / "me"
    assert main(["simulate", "--preset", "tla_fig2", "--mode", "master-eq",
                 "--tend", "1.0", "--out", str(out)]) == 0
    header, data = _read_csv(out / "master_equation.csv")
    assert header[0] == "t"
    assert "re_rho_00" in header and "im_rho_11" in header
    assert header[-2:] == ["trace_err", "min_eig"]
    assert np.max(data[:, header.index("trace_err")]) < 1e-8


def test_compare_mode(tmp_path):
    out = tmp_path / "cmp"
    assert main(["simulate", "--preset", "tla_fig2", "--mode", "compare",
                 "--samples", "2000", "--tend", "1.0", "--seed", "4",
                 "--out", str(out)]) == 0
    header, data = _read_csv(out / "comparison.csv")
    assert header == ["t", "max_abs_diff"]
    assert np.max(data[:, 1]) < 5.0 / np.sqrt(2000)


def test_manifest_roundtrip(tmp_path):
    out1 = tmp_path / "x"
    assert main(["simulate", "--preset", "tla_fig2", "--samples", "100",
                 "--tend", "0.3", "--seed", "5", "--out", str(out1)]) == 0
    before = {name: (out1 / name).read_bytes()
              for name in ("occupations.csv", "trajectories.csv",
                           "manifest.json")}
    # the stored config overrides every flag, including the output
    # directory, so the re-run rewrites out1 in place
    assert main(["simulate", "--config", str(out1 / "manifest.json"),
                 "--seed", "999"]) == 0
    for name, blob in before.items():
        assert (out1 / name).read_bytes() == blob


def test_usage_errors_exit_code_1(tmp_path, capsys):
    assert main(["simulate"]) == 1  # no preset or model file
    assert main(["simulate", "--preset", "tla_fig2", "--dt", "-1",
                 "--out", str(tmp_path / "z")]) == 1
    assert main(["simulate", "--preset", "tla_fig2", "--t0", "2",
                 "--tend", "1", "--out", str(tmp_path / "z")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--preset", "bogus"])
    assert exc.value.code == 1
    capsys.readouterr()


def test_divergence_exit_code_2(tmp_path):
    model_file = tmp_path / "breakdown.json"
    model_file.write_text(json.dumps({
        "family": "ladder",
        "channels": [{"gamma0": 5.0, "delta": 2.0},
                     {"gamma0": 5.0, "delta": 4.0}],
    }))
    code = main(["simulate", "--model-file", str(model_file),
                 "--ensemble-mode", "self-consistent", "--samples", "200",
                 "--tend", "3.0", "--out", str(tmp_path / "div")])
    assert code == 2


def test_wtd_command(tmp_path):
    out = tmp_path / "wtd"
    spec = json.dumps({"jumps": [[0.45, 1]]})
    assert main(["wtd", "--preset", "tla_fig2", "--samples", "500",
                 "--tend", "1.0", "--trajectory", spec, "--eta", "0.2",
                 "--eta", "0.9", "--out", str(out)]) == 0
    files = {p.name for p in out.iterdir()}
    assert "wtd_segment0_label0.csv" in files
    assert "wtd_segment0_label0_empirical.csv" in files
    assert "wtd_segment1_label1.csv" in files
    assert "sampled_waiting_times.csv" in files

    header, data = _read_csv(out / "wtd_segment0_label0.csv")
    assert header == ["tau", "F"]
    assert data[0, 1] == 0.0
    assert np.all(np.diff(data[:, 1]) >= 0.0)


def test_wtd_command_rejects_inconsistent_trajectory(tmp_path):
    # a two-level model has no label 2 to jump to
    spec = json.dumps({"jumps": [[0.2, 2]]})
    assert main(["wtd", "--preset", "tla_fig2", "--samples", "50",
                 "--tend", "0.5", "--trajectory", spec,
                 "--out", str(tmp_path / "bad")]) == 1


def test_wtd_command_trajectory_from_file(tmp_path):
    spec_file = tmp_path / "traj.json"
    spec_file.write_text(json.dumps({"jumps": []}))
    out = tmp_path / "wtdf"
    assert main(["wtd", "--preset", "tla_fig2", "--samples", "100",
                 "--tend", "0.5", "--trajectory", f"@{spec_file}",
                 "--out", str(out)]) == 0
    assert (out / "wtd_segment0_label0.csv").exists()
