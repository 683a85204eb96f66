import json

import pytest

from dgfc.cli import bench, main
from dgfc import form_source


def test_compile_reports_nine_interior_slots(capsys):
    assert main(["compile", "--form", "poisson", "--degree", "5", "--alpha", "32"]) == 0
    out = capsys.readouterr().out
    assert "dS: 9 kernel slot(s)" in out and "ds: 3 kernel slot(s)" in out


def test_compile_biharmonic_both_modes(capsys):
    assert main(["compile", "--form", "biharmonic", "--mode", "both"]) == 0
    out = capsys.readouterr().out
    assert "quadrature=" in out and "tensor=" in out


def test_compile_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.form"
    bad.write_text('element = FiniteElement("Lagrange", "triangle", 1)\nv = TestFunction(element)\na = v*(*dx\n')
    assert main(["compile", "--form", str(bad)]) != 0
    err = capsys.readouterr().err
    assert "3:8:" in err


def test_compile_unknown_form(capsys):
    assert main(["compile", "--form", "no_such_form"]) != 0


def test_compile_emit(tmp_path, capsys):
    src = tmp_path / "lap.form"
    src.write_text(form_source("laplacian"))
    assert main(["compile", "--form", str(src), "--emit", "--out", str(tmp_path / "k"), "--mode", "both"]) == 0
    names = sorted(p.name for p in (tmp_path / "k").iterdir())
    assert names == ["lap_a_dx_quadrature.kernel.py", "lap_a_dx_tensor.kernel.py"]


def test_demo_json(capsys, tmp_path):
    assert main(["demo", "stokes", "--mesh", "4", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["residual"] <= 1e-8 and out["seminorm_error"] is None
    assert (tmp_path / "stokes_demo.json").exists()


def test_convergence_csv(capsys, tmp_path):
    assert main(["convergence", "poisson", "--resolutions", "2,4,8", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == "resolution,h_max,L2_error,seminorm_error,L2_rate,seminorm_rate"
    assert (tmp_path / "poisson_convergence.csv").read_text() == text


def test_convergence_needs_three_resolutions(capsys):
    assert main(["convergence", "poisson", "--resolutions", "2,4"]) != 0


def test_bench_json(capsys):
    assert main(["bench", "--degrees", "1,2", "--no-timing"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert [r["model_speedup"] for r in out["rows"]] == [1.0, 9.0]


def test_bench_timing_fields():
    rows = bench(form_source("laplacian"), degrees=(1,))["rows"]
    assert rows[0]["tensor_seconds_per_1e4"] > 0 and rows[0]["quadrature_seconds_per_1e4"] > 0


def test_bench_is_deterministic():
    a = bench(form_source("laplacian"), degrees=(3,), timing=False)
    b = bench(form_source("laplacian"), degrees=(3,), timing=False)
    assert a == b


def test_weighted_laplacian_has_smaller_ratio():
    plain = bench(form_source("laplacian"), degrees=(2, 3), timing=False)["rows"]
    weighted = bench(form_source("weighted_laplacian"), degrees=(2, 3), timing=False)["rows"]
    for p, w in zip(plain, weighted):
        assert w["measured_speedup"] < p["measured_speedup"]
