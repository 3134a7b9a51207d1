import shutil
import subprocess
import sys

import pytest
import yaml

from frpopt.cli import EXIT_ARTIFACT, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from frpopt.experiment import SWEEP_COLUMNS, read_sweep
from frpopt.kernels import KernelTensor
from frpopt.nbgd import TrainBatch

TINY = {
    "system": {"N": 256, "seed": 1, "oversampling": 4},
    "ssfm": {"step_size": 4000.0},
    "quadrature": {"z_steps": 33, "samples_per_symbol": 4},
    "frp": {"M": [1], "kernel_source": "both", "M_integral": [2]},
    "nbgd": {"max_iters": 400},
    "sweep": {"powers_dbm": [0.0, 10.0], "memories": [0, 1], "memory_powers_dbm": [0.0, 10.0]},
}


def write_config(path, **changes):
    raw = {k: dict(v) for k, v in TINY.items()}
    for section, values in changes.items():
        raw.setdefault(section, {}).update(values)
    path.write_text(yaml.safe_dump(raw))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Full pipeline on a tiny configuration; returns (config path, output dir)."""
    root = tmp_path_factory.mktemp("run")
    cfg = write_config(root / "tiny.yaml")
    out = root / "out"
    for cmd in ("gen-data", "kernels", "train", "sweep-power", "sweep-memory"):
        assert main([cmd, "--config", cfg, "--output", str(out)]) == EXIT_OK, cmd
    return cfg, out


def copy_outputs(out, tmp_path):
    dst = tmp_path / "copy"
    shutil.copytree(out, dst)
    return dst


def test_pipeline_artifacts(pipeline):
    _, out = pipeline
    assert sorted(p.name for p in (out / "data").iterdir()) == ["batch_P0.frb", "batch_P10.frb"]
    assert sorted(p.name for p in (out / "kernels").iterdir()) == ["int_M0.txt", "int_M1.txt", "int_M2.txt"]
    assert (out / "nbgd" / "nbgd_P10_M0.txt").exists() and (out / "nbgd" / "trace_P0_M1.csv").exists()


def test_m1_kernel_file_has_27_rows(pipeline):
    _, out = pipeline
    lines = (out / "kernels" / "int_M1.txt").read_text().splitlines()
    assert len([ln for ln in lines if not ln.startswith("#")]) == 27
    assert KernelTensor.load(out / "kernels" / "int_M1.txt").memory == 1


def test_sweep_csv_schema(pipeline):
    _, out = pipeline
    rows = read_sweep(out / "sweep_power.csv")
    assert list(rows[0]) == SWEEP_COLUMNS
    # per power: SSFM, integral and learned FRP at M = 1, integral FRP at M = 2
    assert [(r["power_dbm"], r["M"], r["model_tag"]) for r in rows] == [
        ("0", "", "ssfm"), ("0", "1", "frp_int"), ("0", "1", "frp_nbgd"), ("0", "2", "frp_int"),
        ("10", "", "ssfm"), ("10", "1", "frp_int"), ("10", "1", "frp_nbgd"), ("10", "2", "frp_int"),
    ]
    for r in rows:
        if r["model_tag"] != "ssfm":
            assert float(r["gap_db"]) == pytest.approx(abs(float(r["gap_signed_db"])))
    mem = read_sweep(out / "sweep_memory.csv")
    assert sorted({r["M"] for r in mem}) == ["", "0", "1"]


def test_learned_beats_integral_at_low_memory(pipeline):
    _, out = pipeline
    rows = [r for r in read_sweep(out / "sweep_memory.csv") if r["M"] == "1" and r["power_dbm"] == "10"]
    gap = {r["model_tag"]: float(r["gap_db"]) for r in rows}
    assert gap["frp_nbgd"] < gap["frp_int"]


def test_gen_data_is_byte_identical(pipeline, tmp_path):
    cfg, out = pipeline
    assert main(["gen-data", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
    for name in ("batch_P0.frb", "batch_P10.frb"):
        assert (tmp_path / "data" / name).read_bytes() == (out / "data" / name).read_bytes()
    assert main(["gen-data", "--config", cfg, "--output", str(tmp_path / "s2"), "--seed", "2"]) == EXIT_OK
    assert (tmp_path / "s2" / "data" / "batch_P0.frb").read_bytes() != (out / "data" / "batch_P0.frb").read_bytes()
    assert TrainBatch.load(tmp_path / "s2" / "data" / "batch_P0.frb").meta["seed"] == 2


def test_sweep_reproducible_except_timing(pipeline):
    cfg, out = pipeline
    first = read_sweep(out / "sweep_power.csv")
    assert main(["sweep-power", "--config", cfg, "--output", str(out)]) == EXIT_OK
    second = read_sweep(out / "sweep_power.csv")
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows]  # noqa: E731
    assert strip(first) == strip(second)


def test_workers_give_identical_batches(pipeline, tmp_path):
    cfg, out = pipeline
    assert main(["gen-data", "--config", cfg, "--output", str(tmp_path), "--workers", "2"]) == EXIT_OK
    assert (tmp_path / "data" / "batch_P10.frb").read_bytes() == (out / "data" / "batch_P10.frb").read_bytes()


def test_convergence_report(pipeline, capsys):
    cfg, out = pipeline
    assert main(["kernels", "--config", cfg, "--output", str(out), "--check-convergence"]) == EXIT_OK
    assert "refined-grid max relative change" in capsys.readouterr().out


def test_unknown_key_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("system:\n  N: 16\n  bogus: 1\n")
    assert main(["gen-data", "--config", str(p)]) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_missing_artifacts_exit_4(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["train", "--config", cfg, "--output", str(tmp_path / "none")]) == EXIT_ARTIFACT
    assert "gen-data" in capsys.readouterr().err
    assert main(["sweep-power", "--config", cfg, "--output", str(tmp_path / "none")]) == EXIT_ARTIFACT


def test_stale_artifacts_exit_4(pipeline, tmp_path):
    _, out = pipeline
    changed = write_config(tmp_path / "c.yaml", fiber={"length": 100e3})
    assert main(["train", "--config", changed, "--output", str(out)]) == EXIT_ARTIFACT


def test_supplied_init_requires_file(pipeline, tmp_path):
    out = copy_outputs(pipeline[1], tmp_path)
    cfg = write_config(tmp_path / "c.yaml", nbgd={"init": "supplied"})
    assert main(["train", "--config", cfg, "--output", str(out)]) == EXIT_ARTIFACT
    init = str(out / "kernels" / "int_M1.txt")
    assert main(["train", "--config", cfg, "--output", str(out), "--init", init]) == EXIT_OK


def test_divergence_exits_3_and_keeps_trace(pipeline, tmp_path, capsys):
    out = copy_outputs(pipeline[1], tmp_path)
    (out / "nbgd" / "trace_P10_M1.csv").unlink()
    cfg = write_config(tmp_path / "c.yaml", nbgd={"step_size": 50.0}, sweep={"powers_dbm": [10.0], "memories": [1], "memory_powers_dbm": [10.0]})
    assert main(["train", "--config", cfg, "--output", str(out)]) == EXIT_NUMERICAL
    assert "trace kept" in capsys.readouterr().err
    assert len((out / "nbgd" / "trace_P10_M1.csv").read_text().splitlines()) >= 2


def test_console_entry_point(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("nope: 1\n")
    res = subprocess.run([sys.executable, "-m", "frpopt", "kernels", "--config", str(p)],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_CONFIG
    res = subprocess.run([sys.executable, "-m", "frpopt", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sweep-power" in res.stdout


def test_zero_nonlinearity_warns_degenerate(tmp_path, caplog):
    cfg = write_config(tmp_path / "lin.yaml", fiber={"gamma": 0.0}, sweep={"powers_dbm": [0.0]})
    with caplog.at_level("WARNING"):
        assert main(["gen-data", "--config", cfg, "--output", str(tmp_path / "o")]) == EXIT_OK
    assert "degenerate" in caplog.text


def test_memory_zero_tensor_is_usable(pipeline):
    from frpopt.frontend import generate_symbols
    from frpopt.model import FrpConfig, frp_predict

    _, out = pipeline
    S = KernelTensor.load(out / "nbgd" / "nbgd_P10_M0.txt")
    assert S.memory == 0 and len(S) == 1
    a = generate_symbols(16, 1)
    r = frp_predict(a, S, FrpConfig.for_power(10.0, 1.3e-3, 0))
    assert r.shape == a.shape and (r != a).any()


def test_integral_gap_not_worse_with_more_memory(pipeline):
    _, out = pipeline
    rows = [r for r in read_sweep(out / "sweep_memory.csv") if r["model_tag"] == "frp_int" and r["power_dbm"] == "0"]
    gaps = [float(r["gap_db"]) for r in sorted(rows, key=lambda r: int(r["M"]))]
    assert len(gaps) == 2 and gaps[1] <= gaps[0] + 0.05
