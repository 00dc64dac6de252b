from spikefem.cli import (build_parser, load_config_file, main,
                          resolve_config)

FAST = ["--n-side", "9", "--t-total", "2", "--npm", "8"]


def run_cli(args):
    return main(args)


def test_solve_writes_outputs_and_reports_error(tmp_path, capsys):
    out = tmp_path / "run"
    code = run_cli(["solve", *FAST, "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr().out
    assert "relative_error=" in captured
    rel = float(captured.split("relative_error=")[1].splitlines()[0])
    assert rel <= 0.05
    names = {p.name for p in out.iterdir()}
    assert names == {"decoded_solution.csv", "reference_solution.csv",
                     "error_field.csv", "manifest.txt"}
    manifest = (out / "manifest.txt").read_text()
    assert "resolved.gamma=" in manifest
    assert "experiment.master_seed=12345" in manifest
    assert "resolved.backend=" in manifest


def test_solve_true_defaults_meets_error_target(tmp_path, capsys):
    out = tmp_path / "defaults"
    code = run_cli(["solve", "--out", str(out)])
    assert code == 0
    rel = float(capsys.readouterr().out.split("relative_error=")[1]
                .splitlines()[0])
    assert rel <= 0.05
    assert len(list(out.iterdir())) == 4


def test_solve_optional_exports(tmp_path):
    out = tmp_path / "exports"
    code = run_cli(["solve", *FAST, "--export-mesh", "true",
                    "--export-system", "true", "--out", str(out)])
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"nodes.csv", "elements.csv", "system_A.mtx",
            "system_b.txt"} <= names


def test_solve_full_ablation_reports_unity_error(tmp_path, capsys):
    out = tmp_path / "dead"
    code = run_cli(["solve", *FAST, "--ablation-p", "1.0", "--out", str(out)])
    assert code == 0
    assert "relative_error=1.0" in capsys.readouterr().out


def test_missing_config_file_no_partial_outputs(tmp_path, capsys):
    out = tmp_path / "never"
    code = run_cli(["solve", "--config", str(tmp_path / "nope.cfg"),
                    "--out", str(out)])
    assert code == 2
    assert "config error" in capsys.readouterr().err
    assert not out.exists()


def test_unknown_config_key_named(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mesh.n_sides = 9\n")
    code = run_cli(["solve", "--config", str(cfg)])
    assert code == 2
    assert "mesh.n_sides" in capsys.readouterr().err


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment line\n"
        "mesh.n_side = 11\n"
        "network.gamma = auto\n"
        "experiment.p_values = 0,0.5,1.0  # trailing comment\n"
    )
    values = load_config_file(cfg)
    assert values == {"mesh.n_side": 11, "network.gamma": "auto",
                      "experiment.p_values": (0.0, 0.5, 1.0)}


def test_precedence_flags_over_env_over_file(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mesh.n_side = 5\nnetwork.npm = 2\n")
    parser = build_parser()

    monkeypatch.setenv("SPIKEFEM_MESH_N_SIDE", "7")
    args = parser.parse_args(["solve", "--config", str(cfg)])
    resolved = resolve_config(args)
    assert resolved["mesh.n_side"] == 7  # env beats file
    assert resolved["network.npm"] == 2  # file beats default

    args = parser.parse_args(["solve", "--config", str(cfg), "--n-side", "9"])
    resolved = resolve_config(args)
    assert resolved["mesh.n_side"] == 9  # flag beats env


def test_invalid_network_config_rejected(tmp_path, capsys):
    code = run_cli(["solve", *FAST, "--dt", "0.5", "--out",
                    str(tmp_path / "x")])
    assert code == 2
    err = capsys.readouterr().err
    assert "dt" in err
    assert not (tmp_path / "x").exists()


def test_sweep_grid_shape_and_determinism(tmp_path):
    args = ["sweep", "ablate", *FAST, "--n-trials", "1",
            "--p-values", "0,0.5", "--npm-values", "2,4"]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run_cli([*args, "--out", str(out_a)]) == 0
    assert run_cli([*args, "--out", str(out_b), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "sweep_summary.csv", "sweep_summary.svg"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    summary = (out_a / "sweep_summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 2 * 2  # per (npm, p)
    assert (out_a / "manifest.txt").exists()


def test_sweep_default_grid_has_seven_points(tmp_path):
    out = tmp_path / "defaults"
    code = run_cli(["sweep", "drop", "--n-side", "5", "--t-total", "1",
                    "--n-trials", "1", "--npm-values", "2",
                    "--out", str(out)])
    assert code == 0
    summary = (out / "sweep_summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 7


def test_raster_outputs(tmp_path):
    out = tmp_path / "raster"
    code = run_cli(["raster", *FAST, "--raster-k", "50", "--out", str(out)])
    assert code == 0
    lines = (out / "raster.csv").read_text().splitlines()
    assert lines[0] == "neuron_id,time,delivered"
    assert len(lines) > 1
    ids = {int(line.split(",")[0]) for line in lines[1:]}
    sampled = [line for line in (out / "manifest.txt").read_text().splitlines()
               if line.startswith("raster.sampled=")][0]
    assert len(sampled.split("=")[1].split(",")) == 50
    assert ids <= set(int(s) for s in sampled.split("=")[1].split(","))


def test_raster_with_drops_flags_lost_spikes(tmp_path):
    out = tmp_path / "rasterdrop"
    code = run_cli(["raster", *FAST, "--drop-p", "0.9", "--out", str(out)])
    assert code == 0
    lines = (out / "raster.csv").read_text().splitlines()[1:]
    flags = {line.rsplit(",", 1)[1] for line in lines}
    assert "0" in flags


def test_raster_zero_rhs_is_empty(tmp_path):
    out = tmp_path / "rasterzero"
    code = run_cli(["raster", *FAST, "--rhs", "zero", "--out", str(out)])
    assert code == 0
    lines = (out / "raster.csv").read_text().splitlines()
    assert lines == ["neuron_id,time,delivered"]


def test_bad_rhs_rejected(capsys):
    assert run_cli(["solve", "--rhs", "cubic"]) == 2
    assert "rhs" in capsys.readouterr().err


def test_mesh_too_small_rejected(tmp_path, capsys):
    assert run_cli(["solve", "--n-side", "1", "--out",
                    str(tmp_path / "x")]) == 2
    assert "n_side" in capsys.readouterr().err
