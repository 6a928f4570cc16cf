"""Config parsing, experiment drivers, CSV output, and exit codes."""

import os

import numpy as np
import pytest

from iga_explicit.cli import (
    RunConfig,
    build_config,
    main,
    parse_config_file,
    run_annulus,
    run_project,
    run_spectrum,
    run_stability,
)
from iga_explicit.errors import ConfigError


def read_lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


def split_csv(path):
    lines = read_lines(path)
    meta = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return meta, body


def test_parse_config_roundtrip(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        """
# spectrum run
degree = 3
n = 40
outlier_removed = true
mass_kind = customized
dt_fraction = 0.25
n_elems = 4,8
"""
    )
    vals = parse_config_file(cfg)
    assert vals == {
        "degree": 3,
        "n": 40,
        "outlier_removed": True,
        "mass_kind": "customized",
        "dt_fraction": 0.25,
        "n_elems": (4, 8),
    }


def test_parse_config_line_precise_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("degree = 3\nnot a valid line\n")
    with pytest.raises(ConfigError, match=r"bad\.cfg:2"):
        parse_config_file(cfg)
    cfg.write_text("degree = three\n")
    with pytest.raises(ConfigError, match=r"bad\.cfg:1"):
        parse_config_file(cfg)


def test_build_config_validation():
    with pytest.raises(ConfigError, match="degree"):
        build_config("spectrum", {"degree": 7})
    with pytest.raises(ConfigError, match="dt_fraction"):
        build_config("annulus", {"dt_fraction": 0.0})
    with pytest.raises(ConfigError, match="unknown config keys"):
        build_config("spectrum", {"degrees": 3})
    cfg = build_config("spectrum", {"degree": 4})
    assert cfg.degree == 4 and cfg.experiment == "spectrum"


def test_overrides_beat_file_values():
    cfg = build_config("project", {"degree": 2}, {"degree": 5})
    assert cfg.degree == 5


def test_run_project_exactness_and_determinism(tmp_path):
    cfg = build_config(
        "project", {}, {"degree": 2, "n_values": (10, 20), "output_dir": str(tmp_path / "a")}
    )
    path_a = run_project(cfg)
    meta, body = split_csv(path_a)
    assert body[0] == "function,p,N,constrained,l2_error"
    # monomial rows at the 1e-10 floor
    for line in body[1:]:
        name, p, n, constrained, err = line.split(",")
        if name.startswith("x^") or name.startswith("(1-x)"):
            assert float(err) <= 1e-10
    # identical config -> byte-identical body
    cfg_b = build_config(
        "project", {}, {"degree": 2, "n_values": (10, 20), "output_dir": str(tmp_path / "b")}
    )
    path_b = run_project(cfg_b)
    assert split_csv(path_b)[1] == body


def test_run_spectrum_small(tmp_path):
    cfg = build_config("spectrum", {}, {"degree": 2, "n": 40, "output_dir": str(tmp_path)})
    path = run_spectrum(cfg)
    meta, body = split_csv(path)
    header = body[0].split(",")
    assert header == [
        "mode_index",
        "mode_fraction",
        "omega_exact",
        "omega_consistent",
        "omega_customized",
        "omega_lumped",
        "err_consistent",
        "err_customized",
        "err_lumped",
    ]
    assert len(body) - 1 == 38  # N - 2 Dirichlet dofs
    meta_keys = {l.split("=")[0][2:] for l in meta}
    for needed in ("kappa", "dual_halfwidth", "quad_points_mass", "dirichlet_sides",
                   "tableau_rk2", "cmax_paper"):
        assert needed in meta_keys


def test_run_spectrum_outlier_reduces_rows(tmp_path):
    cfg = build_config(
        "spectrum", {}, {"degree": 3, "n": 40, "outlier_removed": True,
                         "output_dir": str(tmp_path)}
    )
    path = run_spectrum(cfg)
    _, body = split_csv(path)
    assert len(body) - 1 == 36  # two extra end constraints


def test_run_stability_ratios(tmp_path):
    cfg = build_config("stability", {}, {"degree": 3, "n": 60, "output_dir": str(tmp_path)})
    path = run_stability(cfg)
    _, body = split_csv(path)
    header = body[0].split(",")
    rows = [dict(zip(header, l.split(","))) for l in body[1:]]
    by = {(r["mass_kind"], r["outlier_removed"]): r for r in rows}
    assert float(by[("customized", "False")]["ratio_vs_consistent"]) > 1.0
    assert float(by[("rowsum_lumped", "False")]["ratio_vs_consistent"]) > 1.0
    assert float(by[("customized", "True")]["dt_crit"]) > float(
        by[("customized", "False")]["dt_crit"]
    )


def test_run_annulus_smoke(tmp_path):
    cfg = build_config(
        "annulus",
        {},
        {"degree": 3, "n_elems": (6,), "mass_kind": "customized",
         "output_dir": str(tmp_path)},
    )
    paths = run_annulus(cfg)
    assert len(paths) == 2  # per-mesh + summary
    _, body = split_csv(paths[0])
    header = body[0].split(",")
    assert "l2_rel_error" in header and "wall_seconds" in header
    row = dict(zip(header, body[1].split(",")))
    assert float(row["l2_rel_error"]) < 1.0
    assert row["rk_scheme"] == "rk4"
    _, sum_body = split_csv(paths[1])
    assert sum_body[0].endswith("slope_vs_previous_mesh")


def test_main_exit_codes(tmp_path):
    out = str(tmp_path / "out")
    assert main(["project", "--degree", "2", "--n_values", "8", "--output_dir", out]) == 0
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("degree = 9\n")
    assert main(["spectrum", "--config", str(bad_cfg), "--output_dir", out]) == 2
    # infeasible dual bandwidth request: numerical failure
    assert (
        main(["project", "--degree", "2", "--n_values", "8", "--beta", "9",
              "--output_dir", out])
        == 3
    )


def test_main_unknown_experiment_rejected():
    with pytest.raises(SystemExit):
        main(["frequencies"])


def test_run_spectrum_full_size_first_row(tmp_path):
    # at the production dimension the lowest mode is accurate for every kind
    cfg = build_config("spectrum", {}, {"degree": 2, "output_dir": str(tmp_path)})
    path = run_spectrum(cfg)
    _, body = split_csv(path)
    header = body[0].split(",")
    first = dict(zip(header, body[1].split(",")))
    assert len(body) - 1 == 248
    for col in ("err_consistent", "err_customized", "err_lumped"):
        assert float(first[col]) <= 1e-4


def test_run_annulus_outlier_reduced_path(tmp_path):
    cfg = build_config(
        "annulus",
        {},
        {"degree": 3, "n_elems": (8,), "mass_kind": "customized",
         "outlier_removed": True, "output_dir": str(tmp_path)},
    )
    paths = run_annulus(cfg)
    _, body = split_csv(paths[0])
    header = body[0].split(",")
    row = dict(zip(header, body[1].split(",")))
    assert row["outlier_removed"] == "True"
    assert float(row["l2_rel_error"]) < 0.1
    # two radial end constraints removed from the dof count
    full = (8 + 3 - 2) * 16
    assert float(row["sqrt_dofs"]) == pytest.approx(np.sqrt(full - 2 * 16), rel=1e-12)


def test_run_annulus_instability_flagged_not_crash(tmp_path, monkeypatch):
    # force a timestep far beyond any stability interval: the run must emit a
    # flagged row instead of raising
    import iga_explicit.cli as cli_mod

    monkeypatch.setitem(cli_mod.PAPER_CMAX, "rk4", 8.0)
    cfg = build_config(
        "annulus",
        {},
        {"degree": 3, "n_elems": (16,), "mass_kind": "customized",
         "rk_scheme": "rk4", "dt_fraction": 1.0, "output_dir": str(tmp_path)},
    )
    paths = run_annulus(cfg)
    _, body = split_csv(paths[0])
    header = body[0].split(",")
    row = dict(zip(header, body[1].split(",")))
    assert row["l2_rel_error"] == "inf"


def test_run_stability_single_kind(tmp_path):
    cfg = build_config(
        "stability", {}, {"degree": 3, "n": 50, "mass_kind": "customized",
                          "output_dir": str(tmp_path)}
    )
    path = run_stability(cfg)
    _, body = split_csv(path)
    rows = [dict(zip(body[0].split(","), l.split(","))) for l in body[1:]]
    assert all(r["mass_kind"] == "customized" for r in rows)
    assert all(float(r["ratio_vs_consistent"]) > 1.0 for r in rows)
