import json

import numpy as np
import pytest

from fflometric.cli import EXIT_OK, EXIT_USAGE, main
from fflometric.model import load_density


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "-L", "4"])  # missing required args
    assert exc.value.code == EXIT_USAGE


def test_unknown_command(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_solve_invalid_sector(capsys):
    code, out, err = run(capsys, "solve", "-L", "4", "--nup", "9",
                         "--ndn", "0", "-U", "-4")
    assert code == EXIT_USAGE
    assert "error" in err


def test_solve_writes_profile_and_report(capsys, tmp_path):
    out_csv = tmp_path / "prof.csv"
    out_json = tmp_path / "rep.json"
    code, out, err = run(
        capsys, "solve", "-L", "6", "--nup", "2", "--ndn", "2", "-U", "-4",
        "--solver", "ed", "--out", str(out_csv), "--report", str(out_json),
    )
    assert code == EXIT_OK
    assert "energy:" in out
    prof = load_density(out_csv)
    assert prof.up.sum() == pytest.approx(2, abs=1e-10)
    report = json.loads(out_json.read_text())
    assert report["solver"] == "ed"
    assert report["energy"] < 0


def test_solve_dense_matches_lanczos(capsys, tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    code1, out1, _ = run(capsys, "solve", "-L", "5", "--nup", "2", "--ndn", "1",
                         "-U", "-8", "--solver", "ed", "--out", str(a))
    code2, out2, _ = run(capsys, "solve", "-L", "5", "--nup", "2", "--ndn", "1",
                         "-U", "-8", "--solver", "dense", "--out", str(b))
    assert code1 == code2 == EXIT_OK
    e1 = float(out1.splitlines()[0].split()[1])
    e2 = float(out2.splitlines()[0].split()[1])
    assert e1 == pytest.approx(e2, abs=1e-10)
    pa, pb = load_density(a), load_density(b)
    assert np.allclose(pa.total, pb.total, atol=1e-8)


def test_sweep_analyze_plot_pipeline(capsys, tmp_path):
    store = tmp_path / "store"
    cfg = {
        "version": 1,
        "L": 8,
        "U_list": [-4.0],
        "n_list": [0.5],
        "output_dir": str(store),
        "solver": "ed",
        "grid_step": 2,
    }
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps(cfg))

    code, out, err = run(capsys, "sweep", str(cfg_path))
    assert code == EXIT_OK
    assert "panel U=-4 n=0.5" in out
    panel = store / "L8_U-4_n0.5"
    assert (panel / "D_series.csv").exists()

    # analyze via --store
    out_dir = tmp_path / "analysis"
    code, out, err = run(
        capsys, "analyze", "--store", str(store), "-L", "8", "-U", "-4",
        "-n", "0.5", "--out-dir", str(out_dir),
    )
    # grid too small for a report baseline -> usage error with message
    assert code == EXIT_USAGE
    assert "interior" in err

    # analyze via environment variable fails identically
    code, out, err = run(capsys, "analyze", "-L", "8", "-U", "-4", "-n", "0.5")
    assert code == EXIT_USAGE
    assert "no store" in err

    # plot the D series produced by the sweep
    svg = tmp_path / "d.svg"
    code, out, err = run(
        capsys, "plot", "--kind", "D_vs_P",
        "--input", str(panel / "D_series.csv"), "--out", str(svg),
    )
    assert code == EXIT_OK
    body = svg.read_text()
    assert body.startswith("<svg") and "<path " in body and "<circle " in body

    # byte-identical re-render
    svg2 = tmp_path / "d2.svg"
    run(capsys, "plot", "--kind", "D_vs_P",
        "--input", str(panel / "D_series.csv"), "--out", str(svg2))
    assert svg.read_bytes() == svg2.read_bytes()


def test_plot_script_mode(capsys, tmp_path):
    csv = tmp_path / "series.csv"
    csv.write_text("P,D,flags\n0,0.3,\n0.5,0,\n1,0.4,\n")
    out = tmp_path / "fig.py"
    code, _, _ = run(
        capsys, "plot", "--kind", "D_vs_P", "--input", str(csv),
        "--out", str(out), "--format", "script",
    )
    assert code == EXIT_OK
    assert out.exists() and out.with_suffix(".csv").exists()
    assert "matplotlib" in out.read_text()


def test_plot_density_profile(capsys, tmp_path):
    prof = tmp_path / "prof.csv"
    run(capsys, "solve", "-L", "4", "--nup", "2", "--ndn", "2", "-U", "-4",
        "--solver", "ed", "--out", str(prof))
    svg = tmp_path / "prof.svg"
    code, _, _ = run(capsys, "plot", "--kind", "density_profile",
                     "--input", str(prof), "--out", str(svg),
                     "--labels", "U=-4")
    assert code == EXIT_OK
    assert "density profile" in svg.read_text()


def test_plot_missing_input(capsys, tmp_path):
    code, _, err = run(capsys, "plot", "--kind", "D_vs_P",
                       "--input", str(tmp_path / "nope.csv"),
                       "--out", str(tmp_path / "x.svg"))
    assert code == EXIT_USAGE
    assert "missing input" in err


def test_oracle_all_pass(capsys):
    code, out, _ = run(capsys, "oracle")
    assert code == EXIT_OK
    lines = [ln for ln in out.splitlines() if ln.strip()]
    assert all("PASS" in ln for ln in lines)
    assert lines[-1].startswith("overall")
