import csv

import numpy as np
import pytest
import yaml

from dielspheres.cli import (
    CSV_HEADER,
    ConfigError,
    ExperimentSpec,
    emit_csv,
    main,
    parse_config,
    run,
    spec_to_dict,
)
from dielspheres.coeffs import load_coeff_vector
from dielspheres.experiments import ResultRow


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("DIELSPHERES_CACHE_DIR", str(tmp_path / "cache"))


MINIMAL = """
kind: solve
geometry:
  lattice_dims: [2, 2, 1]
  edge: 2.5
  species:
    - {radius: 1.0, kappa: 10.0, charge: 1.0}
solver:
  method: both
  tol: [1.0e-8]
  lmax: 2
output:
  path: out.csv
"""


def write_config(tmp_path, text):
    path = tmp_path / "exp.yaml"
    path.write_text(text)
    return path


def test_parse_minimal(tmp_path):
    spec = parse_config(write_config(tmp_path, MINIMAL))
    assert spec.kind == "solve"
    assert spec.geometry.nspheres == 4
    assert spec.solvers == ("gmres", "cg")
    assert spec.tolerances == (1e-8,)
    assert spec.lmax == 2


def test_parse_explicit_spheres(tmp_path):
    text = """
kind: solve
geometry:
  kappa0: 2.0
  spheres:
    - {center: [0, 0, 0], radius: 1.0, kappa: 10.0, charge: 1.0}
    - {center: [3, 0, 0], radius: 1.0, kappa: 10.0, charge: -1.0}
"""
    spec = parse_config(write_config(tmp_path, text))
    assert spec.geometry.kappa0 == 2.0
    assert spec.geometry.nspheres == 2


def test_unknown_key_rejected(tmp_path):
    bad = MINIMAL + "\nplotting: true\n"
    with pytest.raises(ConfigError, match="plotting"):
        parse_config(write_config(tmp_path, bad))
    bad2 = MINIMAL.replace("  method: both", "  method: both\n  restarts: 3")
    with pytest.raises(ConfigError, match="restarts"):
        parse_config(write_config(tmp_path, bad2))


def test_depth_and_leaf_cap_exclusive(tmp_path):
    bad = MINIMAL + "\nmatvec:\n  mode: hierarchical\n  d: 2\n  leaf_cap: 32\n"
    with pytest.raises(ConfigError, match="exclusive"):
        parse_config(write_config(tmp_path, bad))


def test_negative_radius_rejected(tmp_path):
    bad = MINIMAL.replace("radius: 1.0", "radius: -1.0")
    with pytest.raises(ConfigError):
        parse_config(write_config(tmp_path, bad))


def test_roundtrip_through_dict(tmp_path):
    spec = parse_config(write_config(tmp_path, MINIMAL))
    again = tmp_path / "again.yaml"
    again.write_text(yaml.safe_dump(spec_to_dict(spec)))
    spec2 = parse_config(again)
    assert spec2.kind == spec.kind
    assert spec2.tolerances == spec.tolerances
    assert spec2.lmax == spec.lmax
    assert spec2.geometry.digest() == spec.geometry.digest()


def rows_fixture():
    return [
        ResultRow("solve", 2.0, "gmres", 1e-4, 3, 1e-5, 1e-6, 0.5),
        ResultRow("solve", 1.0, "cg", 1e-8, 5, 1e-9, 1e-10, 0.25),
        ResultRow("solve", 1.0, "cg", 1e-4, 2, 1e-5, 1e-6, 0.25),
    ]


def test_emit_csv_header_and_order(tmp_path):
    path = tmp_path / "rows.csv"
    emit_csv(rows_fixture(), path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    # param ascending, then solver, then tol descending
    assert [r[1] for r in rows[1:]] == ["1", "1", "2"]
    assert [r[3] for r in rows[1:]] == ["0.0001", "1e-08", "0.0001"]


def test_emit_csv_empty(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    assert path.read_text().strip() == ",".join(CSV_HEADER)


def test_solve_run_deterministic_modulo_walltime(tmp_path):
    spec = parse_config(write_config(tmp_path, MINIMAL))
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    spec.output_path = str(out1)
    run(spec)
    spec.output_path = str(out2)
    run(spec)

    def strip_time(path):
        with open(path) as fh:
            return [row[:-1] for row in csv.reader(fh)]

    assert strip_time(out1) == strip_time(out2)


def test_solve_writes_solution_vector(tmp_path):
    spec = parse_config(write_config(tmp_path, MINIMAL))
    spec.output_path = str(tmp_path / "r.csv")
    spec.solution_path = str(tmp_path / "nu.bin")
    rows = run(spec)
    assert len(rows) == 2           # two solvers x one tolerance
    vec = load_coeff_vector(spec.solution_path)
    assert vec.nspheres == 4 and vec.lmax == 2
    assert np.all(np.isfinite(vec.values))


def test_hierarchical_solve_run(tmp_path):
    text = MINIMAL + "\nmatvec:\n  mode: hierarchical\n  p: 4\n  leaf_cap: 32\n"
    spec = parse_config(write_config(tmp_path, text))
    spec.output_path = str(tmp_path / "h.csv")
    rows = run(spec)
    assert all(r.rel_residual <= 1e-8 for r in rows)


def test_main_solve(tmp_path):
    cfg = write_config(tmp_path, MINIMAL)
    out = tmp_path / "cli.csv"
    code = main(["solve", "--config", str(cfg), "--output", str(out)])
    assert code == 0
    assert out.exists()


def test_main_rejects_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path, MINIMAL + "\nnonsense: 1\n")
    code = main(["solve", "--config", str(cfg)])
    assert code == 2
    assert "nonsense" in capsys.readouterr().err


def test_small_sweep_n(tmp_path):
    spec = ExperimentSpec(kind="sweep-n", lmax=2, tolerances=(1e-4, 1e-6))
    from dielspheres import experiments

    rows = experiments.sweep_n(sizes=(1, 2), lmax=2, tolerances=(1e-4, 1e-6))
    spec.output_path = str(tmp_path / "n.csv")
    emit_csv(rows, spec.output_path)
    # 2 sizes x 2 solvers x 2 tolerances
    assert len(rows) == 8
    params = sorted({r.param for r in rows})
    assert params == [1.0, 8.0]
