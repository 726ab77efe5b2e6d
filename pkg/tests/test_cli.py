"""End-to-end checks of the command-line front end."""

import numpy as np
import pytest

from hopfid.cli import _STATUS_EXIT, main
from hopfid.csvio import read_columns
from hopfid.model import Measurements


def write_config(tmp_path, **sections):
    base = {"paths": {"output_dir": str(tmp_path)}}
    for name, items in sections.items():
        base.setdefault(name, {}).update(items)
    lines = []
    for name, items in base.items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in items.items()]
    path = tmp_path / "run.ini"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    cfg = write_config(d)
    assert main(["-c", cfg, "synth"]) == 0
    return d, cfg


def test_synth_writes_500_rows_with_schema_header(synth_dir):
    d, _ = synth_dir
    text = (d / "measurements.csv").read_text().splitlines()
    assert text[0].startswith("#")
    assert "columns: t,r_tilde,theta_tilde,a_delta_tilde" in text[0]
    meas = Measurements.from_csv(d / "measurements.csv")
    assert meas.n_t == 500
    assert meas.T == pytest.approx(70.0)
    for name in ("g1", "g2", "g3"):
        c = read_columns(d / f"{name}_true.csv")
        assert len(c["r"]) == 75
        assert c["r"][-1] == pytest.approx(2.3)


def test_synth_is_deterministic_with_noise(tmp_path):
    outs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        cfg = write_config(d, synth={"noise_std": "0.01", "second_harmonic": "0.05",
                                     "seed": "7"})
        assert main(["-c", cfg, "synth"]) == 0
        outs.append((d / "measurements.csv").read_bytes())
    assert outs[0] == outs[1]


def test_clean_synth_matches_simulate(synth_dir, tmp_path):
    d, _ = synth_dir
    cfg = write_config(tmp_path, run={"rel_tol": "1e-10", "abs_tol": "1e-10"})
    out = tmp_path / "traj.csv"
    assert main(["-c", cfg, "simulate", "-o", str(out)]) == 0
    traj = read_columns(out)
    meas = Measurements.from_csv(d / "measurements.csv")
    np.testing.assert_allclose(traj["t"], meas.times, rtol=0, atol=1e-12)
    np.testing.assert_allclose(traj["r"], meas.r_tilde, rtol=0, atol=1e-12)
    np.testing.assert_allclose(traj["theta"], meas.theta_tilde, rtol=0, atol=1e-12)
    assert len(traj["t"]) == 500


def test_identify_p3_needs_no_iterations(synth_dir):
    d, cfg = synth_dir
    assert main(["-c", cfg, "identify", "p3"]) == 0
    g3 = read_columns(d / "g3_hat.csv")
    assert len(g3["r"]) == 75
    assert not (d / "history_p3.csv").exists()


def test_identify_p2_without_p1_is_input_error(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["-c", cfg, "synth"]) == 0
    assert main(["-c", cfg, "identify", "p2"]) == 1


def test_identify_without_measurements_is_input_error(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["-c", cfg, "identify", "p1"]) == 1
    assert main(["-c", cfg, "validate-grad"]) == 1


def test_missing_config_file_is_input_error(tmp_path):
    assert main(["-c", str(tmp_path / "nope.ini"), "synth"]) == 1


def test_identify_p1_from_truth_start(synth_dir):
    d, cfg = synth_dir
    assert main(["-c", cfg, "identify", "p1"]) == 0
    g1 = read_columns(d / "g1_hat.csv")
    assert abs(g1["g1"][0] - 0.151) <= 1e-3
    assert g1["g1"][-1] == 0.0
    hist = read_columns(d / "history_p1.csv")
    assert np.all(np.diff(hist["cost"]) <= 1e-14 * max(hist["cost"][0], 1e-300))


def test_status_exit_mapping():
    assert _STATUS_EXIT == {"converged": 0, "max_iters": 2, "stalled": 2, "failed": 3}


def test_validate_grad_small_sweep(tmp_path):
    cfg = write_config(tmp_path, run={"n_t": "50"},
                       validate={"eps_min": "1e-8", "eps_max": "1e-6", "eps_count": "3",
                                 "n_t_list": "50"})
    assert main(["-c", cfg, "synth"]) == 0
    assert main(["-c", cfg, "validate-grad"]) == 0
    c = read_columns(tmp_path / "kappa_sweep.csv")
    assert list(c) == ["epsilon", "n_t", "kappa", "log10_abs_kappa_minus_1"]
    assert len(c["kappa"]) == 3
    assert np.all(np.abs(c["kappa"] - 1) < 1e-2)


def test_pod_two_snapshot_toy(tmp_path):
    v = np.array([1.0, -2.0, 0.5, 3.0])
    v /= np.linalg.norm(v)
    np.savetxt(tmp_path / "snaps.csv", np.vstack([v, -v]), delimiter=",")
    out = tmp_path / "pod"
    assert main(["pod", "--matrix", str(tmp_path / "snaps.csv"), "-o", str(out)]) == 0
    lam = read_columns(out / "eigenvalues.csv")["eigenvalue"]
    # C = [[1, -1], [-1, 1]] / 2 has eigenvalues 1 and 0 (M = 2, |v| = 1)
    np.testing.assert_allclose(lam, [1.0, 0.0], atol=1e-14)
    mode = read_columns(out / "mode_1.csv")["value"]
    assert abs(abs(np.dot(mode, v)) - 1.0) < 1e-12
    assert not (out / "mode_2.csv").exists()


def test_pod_snapshot_directory(tmp_path):
    rng = np.random.default_rng(3)
    x, y = np.meshgrid(np.linspace(0, 1, 4), np.linspace(0, 1, 3))
    x, y = x.ravel(), y.ravel()
    snaps = tmp_path / "snaps"
    snaps.mkdir()
    for m in range(5):
        u, vv = rng.normal(size=x.size), rng.normal(size=x.size)
        np.savetxt(snaps / f"s{m}.csv", np.column_stack([x, y, u, vv]), delimiter=",",
                   header="x,y,u,v", comments="")
    out = tmp_path / "pod"
    assert main(["pod", str(snaps), "-o", str(out)]) == 0
    lam = read_columns(out / "eigenvalues.csv")["eigenvalue"]
    assert np.all(np.diff(lam) <= 0)
    modes = [read_columns(out / f"mode_{i}.csv") for i in (1, 2, 3, 4)]
    U = np.array([np.concatenate([md["u"], md["v"]]) for md in modes])
    np.testing.assert_allclose(U @ U.T, np.eye(4), atol=1e-10)


def test_pod_without_input_is_input_error(tmp_path):
    assert main(["pod", "-o", str(tmp_path / "o")]) == 1


def test_config_prints_defaults(capsys):
    assert main(["config"]) == 0
    out = capsys.readouterr().out
    assert "[identify]" in out and "cg_restart = 20" in out
